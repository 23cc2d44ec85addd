//! Sectional collision-induced breakage operator.
//!
//! Loss is evaluated by midpoint quadrature. The mass released by a source
//! cell is spread over lower cells with a [`RedistributionTable`] whose
//! columns sum to one, so the discrete first moment of the collision rate
//! vanishes up to rounding.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::grid::Grid;
use crate::kernels::{BreakageLaw, CollisionKernel};

const PAR_ROWS: usize = 128;

/// Mass fractions `m[i][j]` moved from source cell `j` to destination cell `i`.
#[derive(Debug, Clone)]
pub struct RedistributionTable {
    grid: Arc<Grid>,
    n: usize,
    // Row-major: fractions[i * n + j].
    fractions: Vec<f64>,
    raw_mass: Vec<f64>,
}

/// Builds the table from exact mass-cdf differences of `law`.
///
/// Column `j` holds `C(min(e_{i+1}, c_j)/c_j) - C(e_i/c_j)` for `i <= j`,
/// divided by its sum so that fragments falling below the grid are
/// redistributed proportionally. The lowest cell keeps its own mass.
pub fn build_redistribution(grid: &Arc<Grid>, law: &BreakageLaw) -> RedistributionTable {
    let n = grid.len();
    let edges = grid.edges();
    let centers = grid.centers();
    let columns: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let c = centers[j];
            let cdf: Vec<f64> = (0..=j).map(|i| law.mass_cdf(edges[i] / c)).collect();
            let mut col: Vec<f64> = (0..=j)
                .map(|i| {
                    let hi = if i == j { 1.0 } else { cdf[i + 1] };
                    (hi - cdf[i]).max(0.0)
                })
                .collect();
            let raw: f64 = col.iter().sum();
            if j == 0 || !(raw > 0.0) {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[j] = 1.0;
            } else {
                col.iter_mut().for_each(|v| *v /= raw);
            }
            (col, raw)
        })
        .collect();
    let mut fractions = vec![0.0; n * n];
    let mut raw_mass = Vec::with_capacity(n);
    for (j, (col, raw)) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            fractions[i * n + j] = v;
        }
        raw_mass.push(raw);
    }
    RedistributionTable { grid: grid.clone(), n, fractions, raw_mass }
}

impl RedistributionTable {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fraction(&self, i: usize, j: usize) -> f64 {
        self.fractions[i * self.n + j]
    }

    /// Fractions received by destination `i` from sources `i..n`.
    pub fn row_tail(&self, i: usize) -> &[f64] {
        &self.fractions[i * self.n + i..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.fraction(i, j)).collect()
    }

    /// Mass fraction of column `j` that landed on the grid before renormalization.
    pub fn raw_column_mass(&self, j: usize) -> f64 {
        self.raw_mass[j]
    }
}

/// Gain and loss parts of the collision rate, as number densities per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionTerms {
    pub gain: Vec<f64>,
    pub loss: Vec<f64>,
}

impl CollisionTerms {
    pub fn rate(&self) -> Vec<f64> {
        self.gain.iter().zip(&self.loss).map(|(g, l)| g - l).collect()
    }
}

/// Kernel powers and table prepared for repeated evaluation on one grid.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    kernel: CollisionKernel,
    table: Arc<RedistributionTable>,
    pow1: Vec<f64>,
    pow2: Vec<f64>,
    mass_w: Vec<f64>,
    flux_c: Vec<f64>,
}

impl CollisionOperator {
    pub fn new(kernel: CollisionKernel, table: Arc<RedistributionTable>) -> Self {
        let g = table.grid().clone();
        let pow1 = g.centers().iter().map(|c| c.powf(kernel.lambda1())).collect();
        let pow2 = g.centers().iter().map(|c| c.powf(kernel.lambda2())).collect();
        let mass_w = g.centers().iter().zip(g.widths()).map(|(c, w)| c * w).collect();
        let flux_c = g.centers().iter().map(|c| c * c).collect();
        Self { kernel, table, pow1, pow2, mass_w, flux_c }
    }

    pub fn kernel(&self) -> &CollisionKernel {
        &self.kernel
    }

    pub fn table(&self) -> &Arc<RedistributionTable> {
        &self.table
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.table.grid()
    }

    pub fn len(&self) -> usize {
        self.pow1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pow1.is_empty()
    }

    /// Discrete collision frequency `sum_l Psi(c_j, c_l) u_l w_l` per cell.
    pub fn frequency(&self, u: &[f64], out: &mut [f64]) {
        let w = self.grid().widths();
        let (mut a1, mut a2) = (0.0, 0.0);
        for l in 0..u.len() {
            a1 += self.pow1[l] * u[l] * w[l];
            a2 += self.pow2[l] * u[l] * w[l];
        }
        for j in 0..u.len() {
            out[j] = self.pow1[j] * a2 + self.pow2[j] * a1;
        }
    }

    /// Fills `gain` and `loss`; `scratch` must have the grid length.
    pub fn terms_into(&self, u: &[f64], gain: &mut [f64], loss: &mut [f64], scratch: &mut [f64]) {
        self.frequency(u, loss);
        for j in 0..u.len() {
            loss[j] *= u[j];
            scratch[j] = self.mass_w[j] * loss[j];
        }
        let released = &*scratch;
        let row = |i: usize| -> f64 {
            let fr = self.table.row_tail(i);
            let s: f64 = fr.iter().zip(&released[i..]).map(|(m, s)| m * s).sum();
            s / self.mass_w[i]
        };
        if u.len() >= PAR_ROWS {
            gain.par_iter_mut().enumerate().for_each(|(i, g)| *g = row(i));
        } else {
            gain.iter_mut().enumerate().for_each(|(i, g)| *g = row(i));
        }
    }

    /// Collision rate `N_h(u)` written to `out`.
    pub fn rate_into(&self, u: &[f64], out: &mut [f64], loss: &mut [f64], scratch: &mut [f64]) {
        self.terms_into(u, out, loss, scratch);
        for (o, l) in out.iter_mut().zip(loss.iter()) {
            *o -= l;
        }
    }

    /// Rescaled rate `alpha N_h(U) - (X dU/dX + 2U)_h`; returns the mass flux
    /// leaving through the right edge.
    ///
    /// The drift is upwinded in mass form with edge flux `c_i^2 u_i`, i.e. the
    /// mass per unit log-size of the left cell carried at unit speed in `ln X`.
    pub fn rescaled_rate_into(&self, u: &[f64], out: &mut [f64], loss: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.rate_into(u, out, loss, scratch);
        let alpha = self.kernel.alpha();
        let mut inflow = 0.0;
        for i in 0..u.len() {
            let outflow = self.flux_c[i] * u[i];
            out[i] = alpha * out[i] - (outflow - inflow) / self.mass_w[i];
            inflow = outflow;
        }
        inflow
    }

    /// Largest per-cell stiffness `drift_i / width_i + frequency_i` of the
    /// physical (`drift = false`) or rescaled problem.
    pub fn stiffness(&self, u: &[f64], drift: bool, scratch: &mut [f64]) -> f64 {
        self.frequency(u, scratch);
        let alpha = self.kernel.alpha();
        let mut m: f64 = 0.0;
        for i in 0..u.len() {
            let s = if drift { self.flux_c[i] / self.mass_w[i] + alpha * scratch[i] } else { scratch[i] };
            m = m.max(s);
        }
        m
    }

    pub(crate) fn mass_weights(&self) -> &[f64] {
        &self.mass_w
    }

    fn check(&self, field: &DensityField) -> Result<()> {
        field.check_grid(self.grid())
    }

    pub fn terms(&self, field: &DensityField) -> Result<CollisionTerms> {
        self.check(field)?;
        let n = field.len();
        let (mut gain, mut loss, mut s) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.terms_into(field.values(), &mut gain, &mut loss, &mut s);
        Ok(CollisionTerms { gain, loss })
    }

    pub fn rate(&self, field: &DensityField) -> Result<DensityField> {
        let t = self.terms(field)?;
        DensityField::new(self.grid().clone(), t.rate())
    }

    /// Rescaled rate and the boundary outflow.
    pub fn rescaled_rate(&self, field: &DensityField) -> Result<(DensityField, f64)> {
        self.check(field)?;
        let n = field.len();
        let (mut out, mut loss, mut s) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let q = self.rescaled_rate_into(field.values(), &mut out, &mut loss, &mut s);
        Ok((DensityField::new(self.grid().clone(), out)?, q))
    }
}

fn operator_for(kernel: &CollisionKernel, table: &RedistributionTable) -> CollisionOperator {
    CollisionOperator::new(*kernel, Arc::new(table.clone()))
}

/// Gain and loss of the conservative operator.
pub fn collision_terms(
    field: &DensityField,
    kernel: &CollisionKernel,
    table: &RedistributionTable,
) -> Result<CollisionTerms> {
    field.check_grid(table.grid())?;
    operator_for(kernel, table).terms(field)
}

/// Conservative sectional approximation of `N(u)`.
pub fn apply_collision_operator(
    field: &DensityField,
    kernel: &CollisionKernel,
    table: &RedistributionTable,
) -> Result<DensityField> {
    field.check_grid(table.grid())?;
    operator_for(kernel, table).rate(field)
}

/// Right-hand side of the rescaled equation.
pub fn apply_rescaled_operator(
    field: &DensityField,
    kernel: &CollisionKernel,
    table: &RedistributionTable,
) -> Result<DensityField> {
    field.check_grid(table.grid())?;
    Ok(operator_for(kernel, table).rescaled_rate(field)?.0)
}

/// Mass flux `c_n^2 u_n` leaving through the right edge under the rescaled drift.
pub fn rescaled_outflow(field: &DensityField) -> f64 {
    let c = field.grid().centers();
    let n = c.len();
    c[n - 1] * c[n - 1] * field.values()[n - 1]
}

/// Direct double-sum quadrature of the gain and loss integrals with the
/// daughter density sampled at cell centers and no renormalization.
pub fn brute_force_terms(field: &DensityField, kernel: &CollisionKernel, law: &BreakageLaw) -> CollisionTerms {
    let g = field.grid();
    let (c, w, u) = (g.centers(), g.widths(), field.values());
    let n = c.len();
    let freq: Vec<f64> =
        (0..n).map(|j| (0..n).map(|l| kernel.eval_unchecked(c[j], c[l]) * u[l] * w[l]).sum()).collect();
    let loss: Vec<f64> = (0..n).map(|j| u[j] * freq[j]).collect();
    let gain = (0..n)
        .map(|i| (i + 1..n).filter(|&j| c[i] < c[j]).map(|j| loss[j] * w[j] * law.eval(c[i] / c[j]) / c[j]).sum())
        .collect();
    CollisionTerms { gain, loss }
}

/// Oracle rate from [`brute_force_terms`].
pub fn brute_force_operator(field: &DensityField, kernel: &CollisionKernel, law: &BreakageLaw) -> Result<DensityField> {
    DensityField::new(field.grid().clone(), brute_force_terms(field, kernel, law).rate())
}

/// Mass fraction the oracle sends from source `j` to destination `i`.
pub fn oracle_fraction(grid: &Grid, law: &BreakageLaw, i: usize, j: usize) -> f64 {
    let (c, w) = (grid.centers(), grid.widths());
    if i >= j {
        return 0.0;
    }
    c[i] * w[i] * law.eval(c[i] / c[j]) / (c[j] * c[j])
}

/// Factor mapping the oracle column onto the table column below the source
/// cell: `sum_{i<j} m[i][j] / sum_{i<j} oracle(i, j)`.
pub fn gain_renormalization_factor(table: &RedistributionTable, law: &BreakageLaw, j: usize) -> Option<f64> {
    let g = table.grid();
    let t: f64 = (0..j).map(|i| table.fraction(i, j)).sum();
    let o: f64 = (0..j).map(|i| oracle_fraction(g, law, i, j)).sum();
    (o > 0.0).then(|| t / o)
}

/// `1 - sum_i oracle(i, j)`: mass the unrenormalized oracle loses for source `j`.
pub fn oracle_mass_defect(grid: &Grid, law: &BreakageLaw, j: usize) -> f64 {
    1.0 - (0..j).map(|i| oracle_fraction(grid, law, i, j)).sum::<f64>()
}

/// Seeded random nonnegative field with an exponential envelope and about
/// one empty cell in ten.
pub fn random_field(grid: &Arc<Grid>, rng: &mut impl Rng) -> DensityField {
    let decay = rng.gen_range(0.3..3.0);
    let values = grid
        .centers()
        .iter()
        .map(|&c| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0) * (-decay * c).exp() })
        .collect();
    DensityField::new(grid.clone(), values).expect("random values are finite")
}

/// Agreement metrics between the conservative operator and the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cells: usize,
    pub fields: usize,
    /// `max |loss - loss_oracle| / max |loss_oracle|` over all fields.
    pub loss_max_rel_error: f64,
    /// Largest `|M_1(rate)| / M_1(|rate|)` of the conservative operator.
    pub conservative_mass_defect: f64,
    /// Largest `|M_1(rate_oracle)| / M_1(loss_oracle)`.
    pub oracle_rate_mass_defect: f64,
    /// Mean of `sum c w |gain - gain_oracle| / sum c w gain` over fields.
    pub gain_rel_gap: f64,
    /// Source cell whose center is nearest to 1.
    pub reference_cell: usize,
    /// Renormalization factor of the reference column.
    pub reference_factor: f64,
    /// Raw oracle mass defect of the reference column.
    pub reference_mass_defect: f64,
    /// Largest `|factor - 1|` over columns centered at or above `100 xmin`.
    pub max_factor_deviation: f64,
    /// Per-source-cell factors (1 where the column below is empty).
    pub factors: Vec<f64>,
    /// Per-source-cell raw oracle mass defects.
    pub mass_defects: Vec<f64>,
}

/// Runs the conservative operator and the oracle on `fields` and collects metrics.
pub fn compare_with_oracle(
    kernel: &CollisionKernel,
    law: &BreakageLaw,
    table: &RedistributionTable,
    fields: &[DensityField],
) -> Result<OracleReport> {
    let grid = table.grid();
    let op = operator_for(kernel, table);
    let mw = op.mass_weights().to_vec();
    let mut loss_err: f64 = 0.0;
    let mut cons_defect: f64 = 0.0;
    let mut oracle_defect: f64 = 0.0;
    let mut gap = 0.0;
    for f in fields {
        let t = op.terms(f)?;
        let o = brute_force_terms(f, kernel, law);
        let scale = o.loss.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            let d = t.loss.iter().zip(&o.loss).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            loss_err = loss_err.max(d / scale);
        }
        let rate = t.rate();
        let net: f64 = rate.iter().zip(&mw).map(|(r, m)| r * m).sum();
        let abs: f64 = rate.iter().zip(&mw).map(|(r, m)| r.abs() * m).sum();
        if abs > 0.0 {
            cons_defect = cons_defect.max(net.abs() / abs);
        }
        let orate = o.rate();
        let onet: f64 = orate.iter().zip(&mw).map(|(r, m)| r * m).sum();
        let oloss: f64 = o.loss.iter().zip(&mw).map(|(r, m)| r * m).sum();
        if oloss > 0.0 {
            oracle_defect = oracle_defect.max(onet.abs() / oloss);
        }
        let tg: f64 = t.gain.iter().zip(&mw).map(|(g, m)| g * m).sum();
        if tg > 0.0 {
            let dg: f64 = t.gain.iter().zip(&o.gain).zip(&mw).map(|((a, b), m)| (a - b).abs() * m).sum();
            gap += dg / tg;
        }
    }
    let n = grid.len();
    let factors: Vec<f64> = (0..n).map(|j| gain_renormalization_factor(table, law, j).unwrap_or(1.0)).collect();
    let mass_defects: Vec<f64> = (0..n).map(|j| oracle_mass_defect(grid, law, j)).collect();
    let reference_cell = nearest_cell(grid, 1.0);
    let floor = 100.0 * grid.xmin();
    let max_factor_deviation =
        (1..n).filter(|&j| grid.centers()[j] >= floor).map(|j| (factors[j] - 1.0).abs()).fold(0.0, f64::max);
    if fields.is_empty() {
        return Err(Error::Usage("oracle comparison needs at least one field".into()));
    }
    Ok(OracleReport {
        cells: n,
        fields: fields.len(),
        loss_max_rel_error: loss_err,
        conservative_mass_defect: cons_defect,
        oracle_rate_mass_defect: oracle_defect,
        gain_rel_gap: gap / fields.len() as f64,
        reference_cell,
        reference_factor: factors[reference_cell],
        reference_mass_defect: mass_defects[reference_cell],
        max_factor_deviation,
        factors,
        mass_defects,
    })
}

pub(crate) fn nearest_cell(grid: &Grid, x: f64) -> usize {
    let c = grid.centers();
    (0..c.len()).min_by(|&a, &b| (c[a] / x).ln().abs().total_cmp(&(c[b] / x).ln().abs())).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_geometric_grid;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (Arc<Grid>, CollisionKernel, BreakageLaw, RedistributionTable) {
        let g = Arc::new(make_geometric_grid(1e-4, 40.0, n).unwrap());
        let k = CollisionKernel::new(1.0, 1.0, 0.0).unwrap();
        let b = BreakageLaw::power_law(0.0).unwrap();
        let t = build_redistribution(&g, &b);
        (g, k, b, t)
    }

    #[test]
    fn columns_sum_to_one_and_stay_below_source() {
        let (_, _, _, t) = setup(48);
        for j in 0..48 {
            let col = t.column(j);
            let s: f64 = col.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "column {j}: {s}");
            assert!(col.iter().all(|&m| m >= 0.0));
            assert!(col[j + 1..].iter().all(|&m| m == 0.0));
        }
    }

    #[test]
    fn table_reproduces_mass_cdf_at_interior_edges() {
        let (g, _, b, t) = setup(64);
        let j = 50;
        let c = g.centers()[j];
        for i in 1..j {
            let below: f64 = (0..i).map(|r| t.fraction(r, j)).sum::<f64>() * t.raw_column_mass(j);
            let exact = b.mass_cdf(g.edges()[i] / c) - b.mass_cdf(g.edges()[0] / c);
            assert!((below - exact).abs() < 1e-14, "edge {i}");
        }
        // Mass fraction of fragments below half the parent size.
        assert_relative_eq!(b.mass_cdf(0.5), 0.25);
    }

    #[test]
    fn monodisperse_loss() {
        let (g, k, _, t) = setup(32);
        let j = 20;
        let mut v = vec![0.0; 32];
        v[j] = 3.0;
        let f = DensityField::new(g.clone(), v).unwrap();
        let terms = collision_terms(&f, &k, &t).unwrap();
        let x0 = g.centers()[j];
        let expected = 2.0 * x0 * x0 * 9.0 * g.widths()[j];
        assert_relative_eq!(terms.loss[j], expected, max_relative = 1e-14);
        assert!(terms.loss.iter().enumerate().all(|(i, &l)| i == j || l == 0.0));
        assert!(terms.gain[j + 1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rate_is_conservative() {
        let (g, k, _, t) = setup(96);
        let f = DensityField::from_fn(g, |x| (-x).exp() * (1.0 + (5.0 * x).sin().abs())).unwrap();
        let r = apply_collision_operator(&f, &k, &t).unwrap();
        assert!(r.moment(1.0).abs() <= 1e-13 * r.abs_moment(1.0));
    }

    #[test]
    fn analytic_profile_rate_matches_drift_term() {
        let (g, k, _, t) = setup(512);
        let f = DensityField::from_fn(g.clone(), |x| 4.0 * (-2.0 * x).exp()).unwrap();
        let r = apply_collision_operator(&f, &k, &t).unwrap();
        let exact = |x: f64| 8.0 * (-2.0 * x).exp() * (1.0 - x);
        let err = r.weighted_l1_to(exact);
        let scale = f.weighted_l1_to(|_| 0.0) * 8.0;
        assert!(err < 5.0 * g.max_log_width() * scale, "err={err}");
    }

    #[test]
    fn rescaled_operator_stationary_at_analytic_profile() {
        let mut prev = f64::INFINITY;
        for n in [128, 256, 512] {
            let (g, k, _, t) = setup(n);
            let f = DensityField::from_fn(g.clone(), |x| 4.0 * (-2.0 * x).exp()).unwrap();
            let r = apply_rescaled_operator(&f, &k, &t).unwrap();
            let s1 = r.abs_moment(1.0);
            assert!(s1 < prev * 0.6, "n={n}: {s1}");
            prev = s1;
        }
    }

    #[test]
    fn rescaled_budget_and_zero_field() {
        let (g, k, _, t) = setup(64);
        let op = CollisionOperator::new(k, Arc::new(t.clone()));
        let f = DensityField::from_fn(g.clone(), |x| (-0.2 * x).exp()).unwrap();
        let (r, q) = op.rescaled_rate(&f).unwrap();
        assert_relative_eq!(q, rescaled_outflow(&f));
        assert!((r.moment(1.0) + q).abs() <= 1e-13 * r.abs_moment(1.0).max(q));
        let z = DensityField::zeros(g);
        assert!(apply_rescaled_operator(&z, &k, &t).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mismatch_is_a_usage_error() {
        let (_, k, _, t) = setup(32);
        let other = Arc::new(make_geometric_grid(1e-3, 40.0, 32).unwrap());
        let f = DensityField::zeros(other);
        assert!(matches!(apply_collision_operator(&f, &k, &t), Err(Error::Usage(_))));
    }

    #[test]
    fn oracle_loss_agrees_and_factor_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let (g, k, b, t) = setup(n);
            let fields: Vec<_> = (0..5).map(|_| random_field(&g, &mut rng)).collect();
            let rep = compare_with_oracle(&k, &b, &t, &fields).unwrap();
            assert!(rep.loss_max_rel_error < 1e-12);
            assert!(rep.conservative_mass_defect < 1e-13);
            let dev = (rep.reference_factor - 1.0).abs();
            assert!(dev < prev, "n={n}");
            prev = dev;
            // For beta = 2 the factor is (1 + r) / (2 sqrt r) with edge ratio r.
            let r = (4e5f64).powf(1.0 / n as f64);
            assert_relative_eq!(rep.reference_factor, (1.0 + r) / (2.0 * r.sqrt()), max_relative = 1e-6);
        }
    }
}
