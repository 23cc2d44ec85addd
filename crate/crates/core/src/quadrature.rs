//! Gauss-Legendre quadrature and composite rules for integrands with an
//! integrable singularity at the origin.

use crate::error::{Error, Result};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite integrator over (0, b] that resolves an algebraic or logarithmic
/// singularity at the origin with dyadic panels.
#[derive(Debug, Clone)]
pub struct SingularIntegrator {
    rule: GaussLegendre,
    max_panel: f64,
    max_levels: usize,
    rel_tol: f64,
}

impl Default for SingularIntegrator {
    fn default() -> Self {
        Self::new(20)
    }
}

impl SingularIntegrator {
    pub fn new(order: usize) -> Self {
        Self { rule: GaussLegendre::new(order), max_panel: 0.125, max_levels: 1000, rel_tol: 1e-17 }
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    /// Integrates `f` over (0, b]. Interior breakpoints split panels so that
    /// kinks of piecewise integrands fall on panel boundaries.
    ///
    /// Returns [`Error::Divergent`] when the dyadic tail near zero does not
    /// become negligible before the levels are exhausted.
    pub fn integrate(&self, b: f64, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> Result<f64> {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > 0.0 && p < b).collect();
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let first = pts[0].min(self.max_panel);
        if first < pts[0] {
            pts.insert(0, first);
        }

        let mut total = 0.0;
        for w in pts.windows(2) {
            total += self.regular(w[0], w[1], &mut f);
        }

        let mut hi = first;
        let mut small = 0;
        for _ in 0..self.max_levels {
            let lo = 0.5 * hi;
            let part = self.rule.integrate(lo, hi, &mut f);
            total += part;
            if !total.is_finite() {
                return Err(Error::Divergent(format!("non-finite partial sum near {lo:e}")));
            }
            if part.abs() <= self.rel_tol * total.abs() || (part == 0.0 && total == 0.0) {
                small += 1;
                if small >= 3 {
                    return Ok(total);
                }
            } else {
                small = 0;
            }
            hi = lo;
            if hi < f64::MIN_POSITIVE {
                break;
            }
        }
        Err(Error::Divergent(format!(
            "singular integral on (0, {b}] did not settle after {} dyadic levels",
            self.max_levels
        )))
    }

    /// Integrates a smooth `f` over [a, b] with panels no wider than the
    /// configured maximum.
    pub fn regular(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let pieces = ((b - a) / self.max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        let mut sum = 0.0;
        for p in 0..pieces {
            let lo = a + h * p as f64;
            let hi = if p + 1 == pieces { b } else { lo + h };
            sum += self.rule.integrate(lo, hi, &mut f);
        }
        sum
    }
}
