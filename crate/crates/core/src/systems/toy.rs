//! Three-state model with a quadratic coupling and a known stability
//! boundary: step responses stay bounded exactly when u < 0.25.

use nalgebra::{DMatrix, DVector};

use super::FullOrderSystem;

/// dx1/dt = -x1 + 20 x1 x3 + u
/// dx2/dt = -2 x2 + 20 x2 x3 + u
/// dx3/dt = -5 x3 + u
/// y = x1 + x2 + x3
#[derive(Debug, Clone)]
pub struct ToySystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl ToySystem {
    pub fn new() -> Self {
        Self {
            a: DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -5.0])),
            b: DMatrix::from_element(3, 1, 1.0),
            c: DMatrix::from_element(1, 3, 1.0),
        }
    }

    /// Fixed point under the constant input u. The third equation is linear
    /// (x3 = u/5), and substituting into the first two gives
    /// x1 = u/(1-4u), x2 = u/(2-4u); finite and attracting only for u < 1/4.
    pub fn steady_state(u: f64) -> DVector<f64> {
        DVector::from_vec(vec![u / (1.0 - 4.0 * u), u / (2.0 - 4.0 * u), u / 5.0])
    }
}

impl Default for ToySystem {
    fn default() -> Self {
        Self::new()
    }
}

impl FullOrderSystem for ToySystem {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn linear_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn input_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    fn output_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>) {
        let f = u[0];
        out[0] = -x[0] + 20.0 * x[0] * x[2] + f;
        out[1] = -2.0 * x[1] + 20.0 * x[1] * x[2] + f;
        out[2] = -5.0 * x[2] + f;
    }

    fn quadratic_form(&self, a: &DVector<f64>, b: &DVector<f64>, out: &mut DVector<f64>) {
        out[0] = 10.0 * (a[0] * b[2] + a[2] * b[0]);
        out[1] = 10.0 * (a[1] * b[2] + a[2] * b[1]);
        out[2] = 0.0;
    }

    fn cubic_form(
        &self,
        _a: &DVector<f64>,
        _b: &DVector<f64>,
        _c: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        out.fill(0.0);
    }

    fn has_quadratic(&self) -> bool {
        true
    }

    fn has_cubic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn origin_is_a_fixed_point() {
        let sys = ToySystem::new();
        let mut out = DVector::zeros(3);
        sys.rhs(&DVector::zeros(3), &DVector::zeros(1), &mut out);
        assert_eq!(out, DVector::zeros(3));
    }

    #[test]
    fn steady_state_closed_form() {
        let sys = ToySystem::new();
        let xbar = ToySystem::steady_state(0.1);
        assert_relative_eq!(xbar[0], 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(xbar[1], 1.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(xbar[2], 1.0 / 50.0, max_relative = 1e-14);
        let mut out = DVector::zeros(3);
        sys.rhs(&xbar, &DVector::from_element(1, 0.1), &mut out);
        assert!(out.norm() <= 1e-12, "steady-state residual {}", out.norm());
    }

    #[test]
    fn rhs_decomposes_into_forms() {
        let sys = ToySystem::new();
        let mut rng = SplitMix64::new(21);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.uniform(-2.0, 2.0));
            let u = DVector::from_element(1, rng.uniform(-1.0, 1.0));
            let mut f = DVector::zeros(3);
            sys.rhs(&x, &u, &mut f);
            let mut quad = DVector::zeros(3);
            sys.quadratic_form(&x, &x, &mut quad);
            let composed = sys.linear_matrix() * &x + quad + sys.input_matrix() * &u;
            assert_relative_eq!(f, composed, max_relative = 1e-14, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadratic_form_is_symmetric() {
        let sys = ToySystem::new();
        let mut rng = SplitMix64::new(22);
        let a = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        let b = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        let mut t_ab = DVector::zeros(3);
        let mut t_ba = DVector::zeros(3);
        sys.quadratic_form(&a, &b, &mut t_ab);
        sys.quadratic_form(&b, &a, &mut t_ba);
        assert_eq!(t_ab, t_ba);
    }
}
