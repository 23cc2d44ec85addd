//! Closed-form reference case: `lambda1 = lambda2 = 1`, `beta = 2`.
//!
//! With unit mass the profile equation collapses to `eta(x) = 2 int_x^inf eta`,
//! whose solution is `eta(x) = 4 e^(-2x)`. From `u(0, x) = e^(-x)` the
//! physical problem is linear and solved by `u = (1+2t)^2 e^(-x(1+2t))`.

use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::Result;
use crate::field::DensityField;
use crate::grid::Grid;
use crate::kernels::{BreakageLaw, CollisionKernel};

/// Kernel and breakage law of the reference case.
pub fn reference_parameters() -> (CollisionKernel, BreakageLaw) {
    (
        CollisionKernel::new(1.0, 1.0, 0.0).expect("valid reference kernel"),
        BreakageLaw::power_law(0.0).expect("valid reference law"),
    )
}

/// `4 e^(-2x)`.
pub fn reference_profile(x: f64) -> f64 {
    4.0 * (-2.0 * x).exp()
}

/// `M_k(4 e^(-2x)) = 4 Gamma(k+1) / 2^(k+1)`.
pub fn reference_moment(k: f64) -> f64 {
    4.0 * gamma(k + 1.0) / 2f64.powf(k + 1.0)
}

/// Exact physical solution from `u(0, x) = e^(-x)`.
pub fn reference_solution(t: f64, x: f64) -> f64 {
    let s = 1.0 + 2.0 * t;
    s * s * (-x * s).exp()
}

/// Reference profile sampled at the cell centers and rescaled to unit
/// discrete first moment.
pub fn reference_field(grid: Arc<Grid>) -> Result<DensityField> {
    DensityField::from_fn(grid, reference_profile)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SingularIntegrator;

    #[test]
    fn gamma_moments() {
        assert!((reference_moment(1.0) - 1.0).abs() < 1e-14);
        assert!((reference_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((reference_moment(3.0) - 1.5).abs() < 1e-14);
        assert!((reference_moment(4.0) - 3.0).abs() < 1e-13);
        let q = SingularIntegrator::default();
        for k in [0.0, 0.5, 1.5, 2.5] {
            let num = q.integrate(40.0, &[], |x| x.powf(k) * reference_profile(x)).unwrap();
            assert!((num - reference_moment(k)).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn profile_equation_holds() {
        // eta = 2 int_x^inf eta
        for x in [0.1f64, 1.0, 3.0] {
            let tail = 2.0 * 2.0 * (-2.0 * x).exp();
            assert!((reference_profile(x) - tail).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_solution_satisfies_linear_equation() {
        // u_t = 4 int_x^inf u - 2 x u when the mass is one.
        let (t, x, h) = (0.7, 0.9, 1e-6);
        let ut = (reference_solution(t + h, x) - reference_solution(t - h, x)) / (2.0 * h);
        let s = 1.0 + 2.0 * t;
        let tail = s * (-x * s).exp();
        let rhs = 4.0 * tail - 2.0 * x * reference_solution(t, x);
        assert!((ut - rhs).abs() < 1e-7);
    }
}
