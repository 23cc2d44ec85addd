//! Collision kernels and breakage laws.
//!
//! The collision rate is the product kernel
//! `Psi(x, y) = x^l1 y^l2 + x^l2 y^l1` and fragments are distributed by a
//! profile `beta` on (0, 1) normalized so that `int_0^1 z beta(z) dz = 1`.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{GaussLegendre, SingularIntegrator};

/// Product collision kernel with homogeneity exponents `lambda1 <= lambda2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelParams", into = "KernelParams")]
pub struct CollisionKernel {
    lambda1: f64,
    lambda2: f64,
    k0: f64,
}

/// Raw kernel parameters as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default)]
    pub k0: f64,
}

impl TryFrom<KernelParams> for CollisionKernel {
    type Error = Error;

    fn try_from(p: KernelParams) -> Result<Self> {
        CollisionKernel::new(p.lambda1, p.lambda2, p.k0)
    }
}

impl From<CollisionKernel> for KernelParams {
    fn from(k: CollisionKernel) -> Self {
        KernelParams { lambda1: k.lambda1, lambda2: k.lambda2, k0: k.k0 }
    }
}

impl CollisionKernel {
    /// Validates `k0 in [0,1)`, `k0 <= lambda1 <= lambda2 <= 1` and
    /// `lambda1 + lambda2 in (1, 2]`.
    pub fn new(lambda1: f64, lambda2: f64, k0: f64) -> Result<Self> {
        if ![lambda1, lambda2, k0].iter().all(|v| v.is_finite()) {
            return Err(domain("kernel exponents must be finite"));
        }
        if !(0.0..1.0).contains(&k0) {
            return Err(domain(format!("k0 = {k0} must lie in [0, 1)")));
        }
        if !(k0 <= lambda1 && lambda1 <= lambda2 && lambda2 <= 1.0) {
            return Err(domain(format!(
                "exponents must satisfy k0 <= lambda1 <= lambda2 <= 1 (got k0 = {k0}, lambda1 = {lambda1}, lambda2 = {lambda2})"
            )));
        }
        let lambda = lambda1 + lambda2;
        if !(lambda > 1.0 && lambda <= 2.0) {
            return Err(domain(format!("lambda := lambda1 + lambda2 = {lambda} must lie in (1, 2]")));
        }
        Ok(Self { lambda1, lambda2, k0 })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Homogeneity degree `lambda1 + lambda2`.
    pub fn lambda(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    /// `lambda - 1`, the self-similar time scale exponent.
    pub fn alpha(&self) -> f64 {
        self.lambda() - 1.0
    }

    /// `1 / alpha`, the fixed normalization of the mean-size rate.
    pub fn omega(&self) -> f64 {
        1.0 / self.alpha()
    }

    /// `Psi(x, y)`; both sizes must be positive.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(domain(format!("collision sizes must be positive (got x = {x}, y = {y})")));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        x.powf(self.lambda1) * y.powf(self.lambda2) + x.powf(self.lambda2) * y.powf(self.lambda1)
    }
}

/// Free-function form of [`CollisionKernel::eval`].
pub fn eval_kernel(kernel: &CollisionKernel, x: f64, y: f64) -> Result<f64> {
    kernel.eval(x, y)
}

/// Piecewise-linear profile sampled at interior nodes, extended as a
/// constant towards 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    nodes: Vec<f64>,
    values: Vec<f64>,
    scale: f64,
    cum: Vec<f64>,
}

impl Tabulated {
    fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(domain("tabulated law needs as many values as nodes"));
        }
        if nodes.len() < 2 {
            return Err(domain("tabulated law needs at least two nodes"));
        }
        if nodes.iter().any(|&z| !(z > 0.0 && z < 1.0)) {
            return Err(domain("tabulated nodes must lie in (0, 1)"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("tabulated nodes must be strictly increasing"));
        }
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(domain("tabulated values must be finite and nonnegative"));
        }
        let mut t = Self { nodes, values, scale: 1.0, cum: Vec::new() };
        t.cum = t.cumulative();
        let raw = *t.cum.last().expect("cumulative table is nonempty");
        if !(raw > 0.0) {
            return Err(domain("tabulated law carries no mass"));
        }
        t.scale = 1.0 / raw;
        for v in &mut t.values {
            *v *= t.scale;
        }
        t.cum = t.cumulative();
        Ok(t)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values after renormalization.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Factor applied to the raw values to enforce unit mass.
    pub fn renormalization(&self) -> f64 {
        self.scale
    }

    // Segment k spans [bound(k), bound(k+1)] with bounds 0, nodes..., 1.
    fn bound(&self, k: usize) -> f64 {
        match k {
            0 => 0.0,
            k if k > self.nodes.len() => 1.0,
            k => self.nodes[k - 1],
        }
    }

    fn segment(&self, k: usize) -> (f64, f64) {
        let m = self.nodes.len();
        if k == 0 {
            (self.values[0], 0.0)
        } else if k >= m {
            (self.values[m - 1], 0.0)
        } else {
            let (z0, z1) = (self.nodes[k - 1], self.nodes[k]);
            let (v0, v1) = (self.values[k - 1], self.values[k]);
            let q = (v1 - v0) / (z1 - z0);
            (v0 - q * z0, q)
        }
    }

    fn segment_mass(&self, k: usize, a: f64, s: f64) -> f64 {
        let (p, q) = self.segment(k);
        p * (s * s - a * a) / 2.0 + q * (s * s * s - a * a * a) / 3.0
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.nodes.len() + 2);
        let mut acc = 0.0;
        cum.push(0.0);
        for k in 0..=self.nodes.len() {
            acc += self.segment_mass(k, self.bound(k), self.bound(k + 1));
            cum.push(acc);
        }
        cum
    }

    fn locate(&self, z: f64) -> usize {
        self.nodes.partition_point(|&n| n <= z)
    }

    fn eval(&self, z: f64) -> f64 {
        let k = self.locate(z);
        let (p, q) = self.segment(k);
        p + q * z
    }

    fn mass_cdf(&self, s: f64) -> f64 {
        let k = self.locate(s);
        self.cum[k] + self.segment_mass(k, self.bound(k), s)
    }
}

/// Mollified law `beta_d = (1/Phi_d) int_d^1 phi_d(z - w) beta(w) dw` on (0, 1),
/// with the bump `phi(r) = (35/32)(1 - r^2)^3` rescaled to half-width `d^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified {
    base: Box<BreakageLaw>,
    delta: f64,
    eps: f64,
    phi: f64,
}

const BUMP_C: f64 = 35.0 / 32.0;

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        BUMP_C * s * s * s
    }
}

// Antiderivatives of phi(t) and t*phi(t) on [-1, 1].
fn bump_p0(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let t2 = t * t;
    BUMP_C * t * (1.0 - t2 + 0.6 * t2 * t2 - t2 * t2 * t2 / 7.0)
}

fn bump_p1(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let s = 1.0 - t * t;
    -BUMP_C * s * s * s * s / 8.0
}

impl Mollified {
    pub fn base(&self) -> &BreakageLaw {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Support half-width `delta^2` of the rescaled bump.
    pub fn width(&self) -> f64 {
        self.eps
    }

    /// Normalization constant `Phi_delta`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    // int_{w-eps}^{min(w+eps, s, 1)} z phi_eps(z - w) dz
    fn inner_mass(&self, w: f64, s: f64) -> f64 {
        let hi = s.min(1.0);
        let t1 = ((hi - w) / self.eps).min(1.0);
        if t1 <= -1.0 {
            return 0.0;
        }
        w * (bump_p0(t1) - bump_p0(-1.0)) + self.eps * (bump_p1(t1) - bump_p1(-1.0))
    }

    fn outer_breaks(&self) -> Vec<f64> {
        let mut b = vec![self.delta, 1.0 - self.eps];
        b.extend(self.base.breakpoints().into_iter().filter(|&p| p > self.delta));
        b
    }

    // int_delta^1 beta(w) h(w) dw over smooth panels.
    fn outer(&self, extra: &[f64], mut h: impl FnMut(f64) -> f64) -> f64 {
        let q = SingularIntegrator::default();
        let mut pts = self.outer_breaks();
        pts.extend_from_slice(extra);
        pts.push(1.0);
        pts.retain(|&p| p >= self.delta && p <= 1.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let base = &self.base;
        pts.windows(2).map(|w| q.regular(w[0], w[1], |x| base.eval(x) * h(x))).sum()
    }

    fn raw_mass_cdf(&self, s: f64) -> f64 {
        if s <= self.delta - self.eps {
            return 0.0;
        }
        self.outer(&[s - self.eps, s + self.eps], |w| self.inner_mass(w, s))
    }

    fn eval(&self, z: f64) -> f64 {
        let lo = self.delta.max(z - self.eps);
        let hi = (z + self.eps).min(1.0);
        if hi <= lo {
            return 0.0;
        }
        let rule = GaussLegendre::new(24);
        let mut pts = vec![lo];
        pts.extend(self.base.breakpoints().into_iter().filter(|&p| p > lo && p < hi));
        pts.push(hi);
        let eps = self.eps;
        let sum: f64 =
            pts.windows(2).map(|w| rule.integrate(w[0], w[1], |x| bump((z - x) / eps) / eps * self.base.eval(x))).sum();
        sum / self.phi
    }

    fn integrate(&self, g: &mut dyn FnMut(f64) -> f64) -> f64 {
        let rule = GaussLegendre::new(16);
        let eps = self.eps;
        let sum = self.outer(&[], |w| {
            let t1 = ((1.0 - w) / eps).min(1.0);
            rule.integrate(-1.0, t1, |t| g(w + eps * t) * bump(t))
        });
        sum / self.phi
    }
}

/// Shape of a breakage law.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// `beta(z) = (nu + 2) z^nu` with `nu in (-1, 0]`.
    PowerLaw {
        nu: f64,
    },
    Tabulated(Tabulated),
    Mollified(Mollified),
}

/// A breakage profile together with its moments, cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakageLaw {
    variant: Variant,
    e_beta: f64,
    cached: Vec<(f64, f64)>,
}

const CACHED_EXPONENTS: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0];

impl BreakageLaw {
    /// Power-law breakage `(nu + 2) z^nu`.
    pub fn power_law(nu: f64) -> Result<Self> {
        if !(nu > -1.0 && nu <= 0.0) {
            return Err(domain(format!(
                "power-law exponent nu = {nu} must lie in (-1, 0]; the fragment count diverges for nu <= -1"
            )));
        }
        Self::finish(Variant::PowerLaw { nu })
    }

    /// Tabulated law from samples; values are rescaled to unit mass.
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::finish(Variant::Tabulated(Tabulated::new(nodes, values)?))
    }

    /// Reads a two-column `z,beta` CSV. A header row and `#` comments are allowed.
    pub fn tabulated_from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("row {}: expected 2 columns, found {}", row + 1, rec.len())));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(z), Ok(b)) => {
                    nodes.push(z);
                    values.push(b);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::Parse(format!("row {}: non-numeric entry", row + 1))),
            }
        }
        Self::tabulated(nodes, values)
    }

    pub fn tabulated_from_path(path: &Path) -> Result<Self> {
        Self::tabulated_from_csv(std::fs::File::open(path)?)
    }

    /// Smooths the law with a bump of half-width `delta^2`, keeping unit mass.
    pub fn mollify(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("mollification width delta = {delta} must lie in (0, 1)")));
        }
        let mut m = Mollified { base: Box::new(self.clone()), delta, eps: delta * delta, phi: 1.0 };
        m.phi = m.raw_mass_cdf(1.0);
        if !(m.phi > 0.0) {
            return Err(domain("mollified law carries no mass"));
        }
        Self::finish(Variant::Mollified(m))
    }

    fn finish(variant: Variant) -> Result<Self> {
        let mut law = Self { variant, e_beta: f64::NAN, cached: Vec::new() };
        law.e_beta = match law.variant {
            Variant::PowerLaw { nu } => 1.0 / (nu + 2.0),
            _ => {
                law.integrate(|z| -z * z.ln()).map_err(|e| domain(format!("e_beta integral does not converge: {e}")))?
            }
        };
        for k in CACHED_EXPONENTS {
            if let Ok(m) = law.compute_moment(k) {
                law.cached.push((k, m));
            }
        }
        Ok(law)
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    /// Short human-readable name of the variant.
    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::PowerLaw { .. } => "power_law",
            Variant::Tabulated(_) => "tabulated",
            Variant::Mollified(_) => "mollified",
        }
    }

    /// Moments computed at construction, as `(k, int z^k beta)` pairs.
    pub fn cached_moments(&self) -> &[(f64, f64)] {
        &self.cached
    }

    /// `beta(z)`; zero outside (0, 1).
    pub fn eval(&self, z: f64) -> f64 {
        if !(z > 0.0 && z < 1.0) {
            return 0.0;
        }
        match &self.variant {
            Variant::PowerLaw { nu } => (nu + 2.0) * z.powf(*nu),
            Variant::Tabulated(t) => t.eval(z),
            Variant::Mollified(m) => m.eval(z),
        }
    }

    /// Mass fraction `int_0^s z beta(z) dz` carried by fragments of relative size below `s`.
    pub fn mass_cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        match &self.variant {
            Variant::PowerLaw { nu } => s.powf(nu + 2.0),
            Variant::Tabulated(t) => t.mass_cdf(s),
            Variant::Mollified(m) => (m.raw_mass_cdf(s) / m.phi).min(1.0),
        }
    }

    /// Points in (0, 1) where the profile or its derivative jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.variant {
            Variant::PowerLaw { .. } => Vec::new(),
            Variant::Tabulated(t) => t.nodes.clone(),
            Variant::Mollified(m) => {
                let mut b = vec![m.delta - m.eps, m.delta + m.eps, 1.0 - m.eps];
                for p in m.base.breakpoints() {
                    b.push(p - m.eps);
                    b.push(p + m.eps);
                }
                b.retain(|&p| p > 0.0 && p < 1.0);
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            }
        }
    }

    /// `int_0^1 g(z) beta(z) dz` by composite Gauss-Legendre quadrature.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> Result<f64> {
        match &self.variant {
            Variant::Mollified(m) => Ok(m.integrate(&mut g)),
            _ => SingularIntegrator::default().integrate(1.0, &self.breakpoints(), |z| g(z) * self.eval(z)),
        }
    }

    /// `int_0^1 z^k beta(z) dz`, closed form for power laws.
    pub fn beta_moment(&self, k: f64) -> Result<f64> {
        if let Some(&(_, m)) = self.cached.iter().find(|(c, _)| *c == k) {
            return Ok(m);
        }
        self.compute_moment(k)
    }

    fn compute_moment(&self, k: f64) -> Result<f64> {
        if !k.is_finite() {
            return Err(domain(format!("moment exponent {k} is not finite")));
        }
        match self.variant {
            Variant::PowerLaw { nu } => {
                if nu + k + 1.0 <= 0.0 {
                    return Err(domain(format!("moment of order {k} diverges for power law nu = {nu}")));
                }
                Ok((nu + 2.0) / (nu + k + 1.0))
            }
            _ => self.beta_moment_quadrature(k),
        }
    }

    /// `int_0^1 z^k beta(z) dz` by quadrature for every variant.
    pub fn beta_moment_quadrature(&self, k: f64) -> Result<f64> {
        if let Variant::Tabulated(t) = &self.variant {
            if k <= -1.0 && t.values[0] > 0.0 {
                return Err(domain(format!("moment of order {k} diverges for a tabulated law")));
            }
        }
        self.integrate(|z| z.powf(k)).map_err(|e| domain(format!("moment of order {k} does not converge: {e}")))
    }

    /// `Xi_k = 1 - int z^k beta`; positive exactly when `k > 1`.
    pub fn xi(&self, k: f64) -> Result<f64> {
        Ok(1.0 - self.beta_moment(k)?)
    }

    /// `e_beta = int_0^1 z beta(z) |ln z| dz`.
    pub fn e_beta(&self) -> f64 {
        self.e_beta
    }

    /// Daughter density `f(z, x, y)` of fragments of size `z` from a collision of `x` and `y`.
    pub fn eval_daughter(&self, z: f64, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(domain(format!("parent sizes must be positive (got x = {x}, y = {y})")));
        }
        if !(z > 0.0) {
            return Err(domain(format!("fragment size must be positive (got z = {z})")));
        }
        let mut f = 0.0;
        if z < x {
            f += self.eval(z / x) / x;
        }
        if z < y {
            f += self.eval(z / y) / y;
        }
        Ok(f)
    }

    /// `int_0^1 z^p |beta(z) - other(z)| dz`.
    pub fn weighted_distance(&self, other: &BreakageLaw, p: f64) -> Result<f64> {
        let mut breaks = self.breakpoints();
        breaks.extend(other.breakpoints());
        SingularIntegrator::default().integrate(1.0, &breaks, |z| z.powf(p) * (self.eval(z) - other.eval(z)).abs())
    }

    /// `Phi_delta` for mollified laws.
    pub fn mollifier_normalization(&self) -> Option<f64> {
        match &self.variant {
            Variant::Mollified(m) => Some(m.phi),
            _ => None,
        }
    }
}

impl fmt::Display for BreakageLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            Variant::PowerLaw { nu } => write!(f, "power_law(nu={nu})"),
            Variant::Tabulated(t) => write!(f, "tabulated({} nodes)", t.nodes.len()),
            Variant::Mollified(m) => write!(f, "mollified({}, delta={})", m.base, m.delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakageKind {
    #[serde(alias = "PowerLaw", alias = "power-law")]
    PowerLaw,
    #[serde(alias = "Tabulated")]
    Tabulated,
}

/// Breakage block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakageConfig {
    pub variant: BreakageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Two-column CSV, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify_delta: Option<f64>,
}

impl BreakageConfig {
    pub fn power_law(nu: f64) -> Self {
        Self {
            variant: BreakageKind::PowerLaw,
            nu: Some(nu),
            nodes: None,
            values: None,
            csv: None,
            mollify_delta: None,
        }
    }

    pub fn build(&self, base_dir: Option<&Path>) -> Result<BreakageLaw> {
        let law = match self.variant {
            BreakageKind::PowerLaw => {
                if self.nodes.is_some() || self.values.is_some() || self.csv.is_some() {
                    return Err(domain("power_law breakage takes only `nu`"));
                }
                let nu = self.nu.ok_or_else(|| domain("power_law breakage requires `nu`"))?;
                BreakageLaw::power_law(nu)?
            }
            BreakageKind::Tabulated => {
                if self.nu.is_some() {
                    return Err(domain("tabulated breakage does not take `nu`"));
                }
                match (&self.nodes, &self.values, &self.csv) {
                    (Some(n), Some(v), None) => BreakageLaw::tabulated(n.clone(), v.clone())?,
                    (None, None, Some(p)) => {
                        let path = match base_dir {
                            Some(d) if p.is_relative() => d.join(p),
                            _ => p.clone(),
                        };
                        BreakageLaw::tabulated_from_path(&path)?
                    }
                    _ => return Err(domain("tabulated breakage requires either `nodes` and `values` or `csv`")),
                }
            }
        };
        match self.mollify_delta {
            Some(d) => law.mollify(d),
            None => Ok(law),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> CollisionKernel {
        CollisionKernel::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        let k = reference();
        assert_eq!(k.eval(1.0, 1.0).unwrap(), 2.0);
        assert_eq!(k.eval(2.0, 3.0).unwrap(), 12.0);
        assert!(k.eval(0.0, 1.0).is_err());
        assert!(k.eval(1.0, -2.0).is_err());
    }

    #[test]
    fn kernel_constraints() {
        assert!(CollisionKernel::new(0.5, 0.5, 0.0).is_err());
        assert!(CollisionKernel::new(0.8, 0.6, 0.0).is_err());
        assert!(CollisionKernel::new(0.5, 1.1, 0.0).is_err());
        assert!(CollisionKernel::new(0.5, 1.0, 0.6).is_err());
        assert!(CollisionKernel::new(0.5, 1.0, 1.0).is_err());
        let k = CollisionKernel::new(0.75, 0.75, 0.25).unwrap();
        assert_relative_eq!(k.alpha(), 0.5);
        assert_relative_eq!(k.omega(), 2.0);
    }

    #[test]
    fn kernel_deserialization_validates() {
        let k: CollisionKernel = serde_json::from_str(r#"{"lambda1":0.5,"lambda2":1.0}"#).unwrap();
        assert_eq!(k.k0(), 0.0);
        assert!(serde_json::from_str::<CollisionKernel>(r#"{"lambda1":0.5,"lambda2":0.5}"#).is_err());
        assert!(serde_json::from_str::<CollisionKernel>(r#"{"lambda1":1,"lambda2":1,"lamda":1}"#).is_err());
    }

    #[test]
    fn power_law_constants() {
        let b = BreakageLaw::power_law(0.0).unwrap();
        assert_eq!(b.beta_moment(1.0).unwrap(), 1.0);
        assert_relative_eq!(b.beta_moment(2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(b.beta_moment(0.0).unwrap(), 2.0);
        assert_eq!(b.xi(1.0).unwrap(), 0.0);
        assert_relative_eq!(b.xi(2.0).unwrap(), 1.0 / 3.0);
        assert_eq!(b.xi(0.0).unwrap(), -1.0);
        assert_eq!(b.e_beta(), 0.5);
        let b = BreakageLaw::power_law(-0.5).unwrap();
        assert_relative_eq!(b.e_beta(), 2.0 / 3.0);
        assert!(BreakageLaw::power_law(-1.5).is_err());
        assert!(BreakageLaw::power_law(0.5).is_err());
    }

    #[test]
    fn power_law_quadrature_matches_closed_form() {
        for nu in [0.0, -0.3, -0.5, -0.9] {
            let b = BreakageLaw::power_law(nu).unwrap();
            for k in [0.0, 0.25, 0.5, 1.0, 1.75, 2.0, 3.0] {
                let exact = (nu + 2.0) / (nu + k + 1.0);
                let q = b.beta_moment_quadrature(k).unwrap();
                assert!((q - exact).abs() <= 1e-10 * exact, "nu={nu} k={k}: {q} vs {exact}");
            }
            let e = b.integrate(|z| -z * z.ln()).unwrap();
            assert!((e - b.e_beta()).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_divergence_is_a_domain_error() {
        let b = BreakageLaw::power_law(-0.5).unwrap();
        assert!(matches!(b.beta_moment(-0.6), Err(Error::Domain(_))));
        let t = BreakageLaw::tabulated(vec![0.25, 0.75], vec![1.0, 1.0]).unwrap();
        assert!(matches!(t.beta_moment(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn daughter_distribution() {
        let b = BreakageLaw::power_law(0.0).unwrap();
        assert_eq!(b.eval_daughter(0.5, 1.0, 0.25).unwrap(), 2.0);
        assert_eq!(b.eval_daughter(3.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(b.eval_daughter(0.5, 0.0, 1.0).is_err());
        let q = SingularIntegrator::default();
        let mass = q.integrate(3.0, &[1.0, 2.0], |z| z * b.eval_daughter(z, 1.0, 2.0).unwrap()).unwrap();
        assert!((mass - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_constant_law_matches_power_law() {
        let nodes: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let values = vec![5.0; nodes.len()];
        let t = BreakageLaw::tabulated(nodes, values).unwrap();
        assert_relative_eq!(t.eval(0.3), 2.0, epsilon = 1e-14);
        assert!((t.beta_moment(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((t.e_beta() - 0.5).abs() < 1e-12);
        assert!((t.mass_cdf(0.5) - 0.25).abs() < 1e-14);
        if let Variant::Tabulated(tab) = t.variant() {
            assert_relative_eq!(tab.renormalization(), 0.4, epsilon = 1e-14);
        }
    }

    #[test]
    fn tabulated_cdf_matches_quadrature() {
        let t = BreakageLaw::tabulated(vec![0.1, 0.4, 0.8], vec![4.0, 1.0, 2.5]).unwrap();
        let q = SingularIntegrator::default();
        for s in [0.05, 0.1, 0.3, 0.55, 0.8, 0.95] {
            let num = q.integrate(s, &t.breakpoints(), |z| z * t.eval(z)).unwrap();
            assert!((t.mass_cdf(s) - num).abs() < 1e-13, "s={s}");
        }
        assert!((t.mass_cdf(1.0 - 1e-15) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tabulated_csv() {
        let text = "z,beta\n# comment\n0.25,2\n0.5,2\n0.75,2\n";
        let t = BreakageLaw::tabulated_from_csv(text.as_bytes()).unwrap();
        assert!((t.e_beta() - 0.5).abs() < 1e-12);
        assert!(BreakageLaw::tabulated_from_csv("0.5,1\n0.25,1\n".as_bytes()).is_err());
        assert!(BreakageLaw::tabulated_from_csv("0.5,1\n0.7,x\n".as_bytes()).is_err());
    }

    #[test]
    fn mollified_law_has_unit_mass() {
        let b = BreakageLaw::power_law(0.0).unwrap();
        for delta in [0.3, 0.2, 0.1, 0.05] {
            let m = b.mollify(delta).unwrap();
            let mass = m.beta_moment_quadrature(1.0).unwrap();
            assert!((mass - 1.0).abs() < 1e-12, "delta={delta}: {mass}");
            assert!((m.mass_cdf(1.0) - 1.0).abs() < 1e-15);
            let q = SingularIntegrator::default();
            let direct = q.integrate(1.0, &m.breakpoints(), |z| z * m.eval(z)).unwrap();
            assert!((direct - 1.0).abs() < 1e-10, "delta={delta}: {direct}");
            assert_eq!(m.eval(delta - delta * delta - 1e-9), 0.0);
        }
        assert!(b.mollify(0.0).is_err());
        assert!(b.mollify(1.0).is_err());
    }

    #[test]
    fn mollified_cdf_matches_density() {
        let b = BreakageLaw::power_law(-0.5).unwrap().mollify(0.2).unwrap();
        let q = SingularIntegrator::default();
        for s in [0.15, 0.2, 0.5, 0.9, 0.97] {
            let num = q.integrate(s, &b.breakpoints(), |z| z * b.eval(z)).unwrap();
            assert!((b.mass_cdf(s) - num).abs() < 1e-10, "s={s}: {} vs {num}", b.mass_cdf(s));
        }
    }

    #[test]
    fn mollifier_normalization_tends_to_one() {
        let b = BreakageLaw::power_law(0.0).unwrap();
        let mut prev = f64::INFINITY;
        for delta in [0.2, 0.1, 0.05, 0.025] {
            let phi = b.mollify(delta).unwrap().mollifier_normalization().unwrap();
            assert!((phi - 1.0).abs() < prev, "delta={delta}");
            prev = (phi - 1.0).abs();
        }
        // Cutting beta below delta removes delta^2 of the mass to leading order.
        assert!(prev < 2.0 * 0.025 * 0.025);
    }

    #[test]
    fn config_build() {
        let c: BreakageConfig =
            serde_json::from_str(r#"{"variant":"power_law","nu":-0.5,"mollify_delta":0.1}"#).unwrap();
        let b = c.build(None).unwrap();
        assert_eq!(b.name(), "mollified");
        let c: BreakageConfig = serde_json::from_str(r#"{"variant":"power_law","nu":-1.5}"#).unwrap();
        assert!(c.build(None).is_err());
        assert!(serde_json::from_str::<BreakageConfig>(r#"{"variant":"power_law","nu":0,"mu":1}"#).is_err());
        let c: BreakageConfig =
            serde_json::from_str(r#"{"variant":"tabulated","nodes":[0.2,0.8],"values":[1,1]}"#).unwrap();
        assert!((c.build(None).unwrap().beta_moment(1.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
