use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::grid::{make_geometric_grid, Grid};

/// Cell-averaged number density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!("field has {} values for {} cells", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("field values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.centers().iter().map(|&c| f(c)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Midpoint moment `sum c_i^k u_i w_i`.
    pub fn moment(&self, k: f64) -> f64 {
        self.weighted_sum(k, |u| u)
    }

    /// `sum c_i^k |u_i| w_i`.
    pub fn abs_moment(&self, k: f64) -> f64 {
        self.weighted_sum(k, f64::abs)
    }

    /// First moment.
    pub fn mass(&self) -> f64 {
        self.moment(1.0)
    }

    fn weighted_sum(&self, k: f64, f: impl Fn(f64) -> f64) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for ((c, w), u) in g.centers().iter().zip(g.widths()).zip(&self.values) {
            s += c.powf(k) * f(*u) * w;
        }
        s
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sum c_i |u_i - v_i| w_i` between fields on the same grid.
    pub fn weighted_l1_distance(&self, other: &DensityField) -> Result<f64> {
        self.check_grid(other.grid())?;
        let g = &self.grid;
        Ok(g.centers()
            .iter()
            .zip(g.widths())
            .zip(self.values.iter().zip(&other.values))
            .map(|((c, w), (a, b))| c * (a - b).abs() * w)
            .sum())
    }

    /// `sum c_i |u_i - f(c_i)| w_i` against a function of size.
    pub fn weighted_l1_to(&self, f: impl Fn(f64) -> f64) -> f64 {
        let g = &self.grid;
        g.centers().iter().zip(g.widths()).zip(&self.values).map(|((c, w), u)| c * (u - f(*c)).abs() * w).sum()
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::Usage("field and operand live on different grids".into()))
        }
    }

    /// Multiplies every value by `factor`.
    pub fn scaled_values(&self, factor: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Rescales to unit first moment.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(domain(format!("cannot normalize a field with first moment {m}")));
        }
        Ok(self.scaled_values(1.0 / m))
    }

    /// `x -> a u(b x)`, represented on the grid with edges divided by `b`.
    pub fn rescaled(&self, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b > 0.0) {
            return Err(domain(format!("invalid rescaling parameters a = {a}, b = {b}")));
        }
        let grid = Arc::new(self.grid.scaled(1.0 / b)?);
        Ok(Self { grid, values: self.values.iter().map(|v| a * v).collect() })
    }

    /// Value at `x`, linear in `ln x` between centers, constant in the
    /// outer half cells and zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        if !(x >= g.xmin() && x <= g.xmax()) {
            return 0.0;
        }
        let c = g.centers();
        let n = c.len();
        if x <= c[0] {
            return self.values[0];
        }
        if x >= c[n - 1] {
            return self.values[n - 1];
        }
        let j = c.partition_point(|&ci| ci <= x);
        let (i, j) = (j - 1, j);
        let t = (x / c[i]).ln() / (c[j] / c[i]).ln();
        self.values[i] + t * (self.values[j] - self.values[i])
    }

    /// Interpolates onto another grid.
    pub fn resample(&self, grid: Arc<Grid>) -> Self {
        let values = grid.centers().iter().map(|&x| self.interpolate(x)).collect();
        Self { grid, values }
    }

    /// Writes the field as `center,value` rows below a grid header line.
    /// Numbers use the shortest representation that parses back to the same bits.
    pub fn write_csv(&self, mut w: impl Write, time: Option<f64>) -> Result<()> {
        match self.grid.spec() {
            Some(s) => writeln!(w, "# grid: geometric xmin={:?} xmax={:?} cells={}", s.xmin, s.xmax, s.cells)?,
            None => {
                let edges: Vec<String> = self.grid.edges().iter().map(|e| format!("{e:?}")).collect();
                writeln!(w, "# grid: edges {}", edges.join(" "))?;
            }
        }
        if let Some(t) = time {
            writeln!(w, "# time: {t:?}")?;
        }
        writeln!(w, "center,value")?;
        for (c, u) in self.grid.centers().iter().zip(&self.values) {
            writeln!(w, "{c:?},{u:?}")?;
        }
        Ok(())
    }

    /// Reads a field written by [`DensityField::write_csv`], returning the
    /// optional time stamp alongside.
    pub fn read_csv(r: impl Read) -> Result<(Self, Option<f64>)> {
        let mut reader = BufReader::new(r);
        let mut grid = None;
        let mut time = None;
        let mut line = String::new();
        let header = loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Parse("missing `center,value` header".into()));
            }
            let l = line.trim();
            if let Some(meta) = l.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(g) = meta.strip_prefix("grid:") {
                    grid = Some(parse_grid(g.trim())?);
                } else if let Some(t) = meta.strip_prefix("time:") {
                    time = Some(parse_f64(t.trim())?);
                }
                continue;
            }
            if !l.is_empty() {
                break l.to_string();
            }
        };
        if header.replace(' ', "") != "center,value" {
            return Err(Error::Parse(format!("expected header `center,value`, found `{header}`")));
        }
        let grid = grid.ok_or_else(|| Error::Parse("missing `# grid:` header line".into()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut values = Vec::with_capacity(grid.len());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("data row {}: expected 2 columns", i + 1)));
            }
            let c = parse_f64(&rec[0])?;
            let u = parse_f64(&rec[1])?;
            match grid.centers().get(i) {
                Some(&gc) if ((c - gc) / gc).abs() <= 1e-12 => values.push(u),
                Some(&gc) => {
                    return Err(Error::Parse(format!("data row {}: center {c} does not match grid center {gc}", i + 1)))
                }
                None => return Err(Error::Parse(format!("more rows than the {} grid cells", grid.len()))),
            }
        }
        let field = Self::new(Arc::new(grid), values).map_err(|e| Error::Parse(e.to_string()))?;
        Ok((field, time))
    }

    pub fn save(&self, path: &Path, time: Option<f64>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f, time)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<f64>)> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number `{s}`")))
}

fn parse_grid(s: &str) -> Result<Grid> {
    if let Some(rest) = s.strip_prefix("geometric") {
        let (mut xmin, mut xmax, mut cells) = (None, None, None);
        for tok in rest.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad grid token `{tok}`")))?;
            match k {
                "xmin" => xmin = Some(parse_f64(v)?),
                "xmax" => xmax = Some(parse_f64(v)?),
                "cells" => cells = Some(v.parse::<usize>().map_err(|_| Error::Parse(format!("bad cell count `{v}`")))?),
                _ => return Err(Error::Parse(format!("unknown grid key `{k}`"))),
            }
        }
        match (xmin, xmax, cells) {
            (Some(a), Some(b), Some(n)) => make_geometric_grid(a, b, n).map_err(|e| Error::Parse(e.to_string())),
            _ => Err(Error::Parse("geometric grid header needs xmin, xmax and cells".into())),
        }
    } else if let Some(rest) = s.strip_prefix("edges") {
        let edges = rest.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
        Grid::from_edges(edges).map_err(|e| Error::Parse(e.to_string()))
    } else {
        Err(Error::Parse(format!("unrecognized grid header `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(make_geometric_grid(1e-4, 40.0, n).unwrap())
    }

    #[test]
    fn analytic_moments() {
        let f = DensityField::from_fn(grid(512), |x| 4.0 * (-2.0 * x).exp()).unwrap();
        assert!((f.moment(1.0) - 1.0).abs() < 1e-3);
        assert!((f.moment(2.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_cell_zeroth_moment() {
        let g = grid(16);
        let mut v = vec![0.0; 16];
        v[5] = 3.5;
        let f = DensityField::new(g.clone(), v).unwrap();
        assert_relative_eq!(f.moment(0.0), 3.5 * g.widths()[5]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DensityField::new(grid(8), vec![1.0; 7]).is_err());
        assert!(DensityField::new(grid(8), vec![f64::NAN; 8]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = grid(64);
        let f = DensityField::from_fn(g, |x| (x * 7.3).sin().abs() * 1e-3 / x + 1e-300).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, Some(0.1 + 0.2)).unwrap();
        let (back, t) = DensityField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(t, Some(0.1 + 0.2));
        assert_eq!(back.grid().edges(), f.grid().edges());
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# grid: geometric xmin=0.0001 xmax=40.0 cells=64\n"));
    }

    #[test]
    fn csv_round_trip_irregular_grid() {
        let g = Arc::new(Grid::from_edges(vec![0.5, 0.7, 1.3, 4.0]).unwrap());
        let f = DensityField::new(g, vec![1.0 / 3.0, 0.0, 2.5e-17]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, None).unwrap();
        let (back, t) = DensityField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(t, None);
        assert_eq!(back, f);
    }

    #[test]
    fn csv_rejects_mismatched_centers() {
        let text = "# grid: geometric xmin=1.0 xmax=16.0 cells=4\ncenter,value\n1.5,1\n";
        assert!(DensityField::read_csv(text.as_bytes()).is_err());
        let text = "center,value\n1.5,1\n";
        assert!(DensityField::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn interpolation_reproduces_log_linear_data() {
        let g = grid(32);
        let f = DensityField::from_fn(g.clone(), |x| 2.0 + 0.5 * x.ln()).unwrap();
        for x in [1e-3, 0.1, 0.77, 5.0, 30.0] {
            assert_relative_eq!(f.interpolate(x), 2.0 + 0.5 * x.ln(), max_relative = 1e-12);
        }
        assert_eq!(f.interpolate(50.0), 0.0);
    }

    #[test]
    fn rescaling_preserves_mass_when_a_is_b_squared() {
        let f = DensityField::from_fn(grid(128), |x| 4.0 * (-2.0 * x).exp()).unwrap();
        let r = f.rescaled(9.0, 3.0).unwrap();
        assert_relative_eq!(r.mass(), f.mass(), max_relative = 1e-12);
        assert_relative_eq!(r.grid().xmax(), 40.0 / 3.0, max_relative = 1e-15);
    }
}
