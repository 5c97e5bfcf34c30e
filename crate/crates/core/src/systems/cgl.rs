//! Complex Ginzburg-Landau equation on a truncated line, discretized with
//! second-order central differences and homogeneous Dirichlet ends, then
//! rewritten as a real system of dimension 2·N_x.
//!
//! dq/dt = (-ν ∂x + γ ∂xx + μ(x)) q - a |q|² q + forcing,
//! with a = 0.1, ν = 2 + 0.4i, γ = 1 - i, μ(x) = (μ₀ - 0.2²) + μ₂ x²/2,
//! μ₀ = 0.38, μ₂ = -0.01. Disturbances are amplified convectively between
//! the two zeros of μ at ±√68; forcing enters through a Gaussian at the
//! upstream zero ("branch I", x̄ = -√68) and the output is a Gaussian
//! measurement at the downstream zero. The advection sign follows the
//! benchmark literature this setup comes from: it transports wavepackets
//! from the forcing site toward the sensor, which is what produces the
//! characteristic transient growth of this model.
//!
//! The real state layout is [Re q(x_0..x_{N-1}), Im q(x_0..x_{N-1})], the
//! input u ∈ R² carries the real and imaginary parts of the complex scalar
//! input, and y ∈ R² the real and imaginary parts of the measurement.

use nalgebra::{DMatrix, DVector};

use super::FullOrderSystem;
use crate::error::{Error, Result};

const NU_RE: f64 = 2.0;
const NU_IM: f64 = 0.4;
const GAMMA_RE: f64 = 1.0;
const GAMMA_IM: f64 = -1.0;
const MU_0: f64 = 0.38;
const MU_2: f64 = -0.01;
const CUBIC_COEFF: f64 = 0.1;
const PROFILE_WIDTH: f64 = 1.6;

/// Center of the forcing Gaussian: the upstream zero of μ(x).
pub fn forcing_center() -> f64 {
    -(-2.0 * (MU_0 - 0.04) / MU_2).sqrt()
}

#[derive(Debug, Clone)]
pub struct CglSystem {
    nx: usize,
    dx: f64,
    grid: Vec<f64>,
    mu: Vec<f64>,
    /// Unit-norm forcing profile (shared by both input channels).
    forcing: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl CglSystem {
    /// `nx` interior nodes on (-l, l) with spacing 2l/(nx+1); the boundary
    /// nodes at ±l carry the homogeneous Dirichlet condition and are not
    /// part of the state.
    pub fn new(nx: usize, l: f64) -> Result<Self> {
        if nx < 16 {
            return Err(Error::Config(format!("need at least 16 grid nodes, got {nx}")));
        }
        let xbar = forcing_center();
        if l <= 2.0 * xbar.abs() {
            return Err(Error::Config(format!(
                "domain half-width {l} too small: both Gaussian sites (±{:.3}) need \
                 room to decay before the Dirichlet ends",
                xbar.abs()
            )));
        }
        let dx = 2.0 * l / (nx + 1) as f64;
        let grid: Vec<f64> = (0..nx).map(|k| -l + (k + 1) as f64 * dx).collect();
        let mu: Vec<f64> = grid.iter().map(|&x| (MU_0 - 0.04) + MU_2 * x * x / 2.0).collect();

        let mut forcing: Vec<f64> =
            grid.iter().map(|&x| (-((x - xbar) / PROFILE_WIDTH).powi(2)).exp()).collect();
        let norm = forcing.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut forcing {
            *v /= norm;
        }
        let sensor: Vec<f64> =
            grid.iter().map(|&x| (-((x + xbar) / PROFILE_WIDTH).powi(2)).exp()).collect();

        // Complex tridiagonal operator -ν D1 + γ D2 + diag(μ) in the block
        // real form [[Re, -Im], [Im, Re]].
        let n = 2 * nx;
        let mut a = DMatrix::zeros(n, n);
        let inv2dx = 1.0 / (2.0 * dx);
        let invdx2 = 1.0 / (dx * dx);
        for k in 0..nx {
            let diag_re = -2.0 * GAMMA_RE * invdx2 + mu[k];
            let diag_im = -2.0 * GAMMA_IM * invdx2;
            set_complex(&mut a, nx, k, k, diag_re, diag_im);
            if k + 1 < nx {
                let up_re = -NU_RE * inv2dx + GAMMA_RE * invdx2;
                let up_im = -NU_IM * inv2dx + GAMMA_IM * invdx2;
                set_complex(&mut a, nx, k, k + 1, up_re, up_im);
            }
            if k > 0 {
                let lo_re = NU_RE * inv2dx + GAMMA_RE * invdx2;
                let lo_im = NU_IM * inv2dx + GAMMA_IM * invdx2;
                set_complex(&mut a, nx, k, k - 1, lo_re, lo_im);
            }
        }

        let mut b = DMatrix::zeros(n, 2);
        let mut c = DMatrix::zeros(2, n);
        for k in 0..nx {
            b[(k, 0)] = forcing[k];
            b[(nx + k, 1)] = forcing[k];
            c[(0, k)] = sensor[k];
            c[(1, nx + k)] = sensor[k];
        }

        Ok(Self { nx, dx, grid, mu, forcing, a, b, c })
    }

    pub fn num_nodes(&self) -> usize {
        self.nx
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    pub fn grid_points(&self) -> &[f64] {
        &self.grid
    }
}

fn set_complex(a: &mut DMatrix<f64>, nx: usize, row: usize, col: usize, re: f64, im: f64) {
    a[(row, col)] = re;
    a[(row, nx + col)] = -im;
    a[(nx + row, col)] = im;
    a[(nx + row, nx + col)] = re;
}

impl FullOrderSystem for CglSystem {
    fn state_dim(&self) -> usize {
        2 * self.nx
    }

    fn input_dim(&self) -> usize {
        2
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
        let nx = self.nx;
        let inv2dx = 1.0 / (2.0 * self.dx);
        let invdx2 = 1.0 / (self.dx * self.dx);
        let (u_re, u_im) = (u[0], u[1]);
        for k in 0..nx {
            let re = x[k];
            let im = x[nx + k];
            let re_m = if k == 0 { 0.0 } else { x[k - 1] };
            let re_p = if k + 1 == nx { 0.0 } else { x[k + 1] };
            let im_m = if k == 0 { 0.0 } else { x[nx + k - 1] };
            let im_p = if k + 1 == nx { 0.0 } else { x[nx + k + 1] };
            let d1_re = (re_p - re_m) * inv2dx;
            let d1_im = (im_p - im_m) * inv2dx;
            let d2_re = (re_p - 2.0 * re + re_m) * invdx2;
            let d2_im = (im_p - 2.0 * im + im_m) * invdx2;
            let local = self.mu[k] - CUBIC_COEFF * (re * re + im * im);
            out[k] = -(NU_RE * d1_re - NU_IM * d1_im) + GAMMA_RE * d2_re - GAMMA_IM * d2_im
                + local * re
                + self.forcing[k] * u_re;
            out[nx + k] = -(NU_RE * d1_im + NU_IM * d1_re)
                + GAMMA_RE * d2_im
                + GAMMA_IM * d2_re
                + local * im
                + self.forcing[k] * u_im;
        }
    }

    fn quadratic_form(&self, _a: &DVector<f64>, _b: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
    }

    /// Symmetric trilinear form of the nodewise cubic term -a |q|² q. Written
    /// in real and imaginary parts the cubic map is
    /// -a (re² + im²) (re, im); polarizing over three arguments gives, per
    /// node, -a [u_re v_re w_re + (u_im v_im w_re + u_im w_im v_re +
    /// v_im w_im u_re)/3] for the real component and the mirrored expression
    /// for the imaginary one.
    fn cubic_form(
        &self,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        let nx = self.nx;
        for k in 0..nx {
            let (ur, ui) = (a[k], a[nx + k]);
            let (vr, vi) = (b[k], b[nx + k]);
            let (wr, wi) = (c[k], c[nx + k]);
            out[k] = -CUBIC_COEFF
                * (ur * vr * wr + (ui * vi * wr + ui * wi * vr + vi * wi * ur) / 3.0);
            out[nx + k] = -CUBIC_COEFF
                * (ui * vi * wi + (ur * vr * wi + ur * wr * vi + vr * wr * ui) / 3.0);
        }
    }

    fn has_quadratic(&self) -> bool {
        false
    }

    fn has_cubic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::rng::SplitMix64;

    fn small() -> CglSystem {
        CglSystem::new(24, 20.0).unwrap()
    }

    fn rand_state(sys: &CglSystem, rng: &mut SplitMix64) -> DVector<f64> {
        DVector::from_fn(sys.state_dim(), |_, _| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn forcing_center_is_branch_one() {
        assert_relative_eq!(forcing_center(), -68.0f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(forcing_center(), -8.246211251235321, max_relative = 1e-12);
    }

    #[test]
    fn grid_geometry() {
        let sys = small();
        let dx = 40.0 / 25.0;
        assert_relative_eq!(sys.spacing(), dx, max_relative = 1e-15);
        assert_relative_eq!(sys.grid_points()[0], -20.0 + dx, max_relative = 1e-14);
        assert_relative_eq!(sys.grid_points()[23], 20.0 - dx, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(CglSystem::new(8, 40.0).is_err());
        assert!(CglSystem::new(64, 16.0).is_err());
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let sys = small();
        let mut out = DVector::zeros(sys.state_dim());
        sys.rhs(&DVector::zeros(sys.state_dim()), &DVector::zeros(2), &mut out);
        assert_eq!(out, DVector::zeros(sys.state_dim()));
    }

    #[test]
    fn stencil_matches_assembled_operator() {
        let sys = small();
        let mut rng = SplitMix64::new(31);
        for _ in 0..5 {
            let x = rand_state(&sys, &mut rng);
            let u = DVector::from_fn(2, |_, _| rng.uniform(-1.0, 1.0));
            let mut f = DVector::zeros(sys.state_dim());
            sys.rhs(&x, &u, &mut f);
            let mut cubic = DVector::zeros(sys.state_dim());
            sys.cubic_form(&x, &x, &x, &mut cubic);
            let composed = sys.linear_matrix() * &x + cubic + sys.input_matrix() * &u;
            assert_relative_eq!(f, composed, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_operator_commutes_with_complex_structure() {
        let sys = small();
        let n = sys.state_dim();
        let nx = n / 2;
        let mut j = DMatrix::zeros(n, n);
        for k in 0..nx {
            j[(k, nx + k)] = -1.0;
            j[(nx + k, k)] = 1.0;
        }
        let comm = sys.linear_matrix() * &j - &j * sys.linear_matrix();
        assert!(comm.amax() <= 1e-10, "commutator norm {}", comm.amax());
    }

    #[test]
    fn cubic_form_matches_nodewise_cubic() {
        let sys = small();
        let mut rng = SplitMix64::new(33);
        let x = rand_state(&sys, &mut rng);
        let nx = sys.num_nodes();
        let mut t3 = DVector::zeros(sys.state_dim());
        sys.cubic_form(&x, &x, &x, &mut t3);
        for k in 0..nx {
            let n2 = x[k] * x[k] + x[nx + k] * x[nx + k];
            assert_relative_eq!(t3[k], -0.1 * n2 * x[k], max_relative = 1e-12, epsilon = 1e-14);
            assert_relative_eq!(
                t3[nx + k],
                -0.1 * n2 * x[nx + k],
                max_relative = 1e-12,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn cubic_form_agrees_with_polarization() {
        let sys = small();
        let mut rng = SplitMix64::new(34);
        let n = sys.state_dim();
        let u = rand_state(&sys, &mut rng);
        let v = rand_state(&sys, &mut rng);
        let w = rand_state(&sys, &mut rng);

        let mut direct = DVector::zeros(n);
        sys.cubic_form(&u, &v, &w, &mut direct);

        // T3(u,v,w) = (1/48) Σ_{ε∈{±1}³} ε1 ε2 ε3 m(ε1 u + ε2 v + ε3 w)
        // for the cubic map m(x) = T3(x,x,x): the mixed term survives with
        // multiplicity 6 in each of the 8 sign combinations, all others
        // cancel.
        let mut polar = DVector::zeros(n);
        let mut buf = DVector::zeros(n);
        for signs in 0..8u32 {
            let s1 = if signs & 1 == 0 { 1.0 } else { -1.0 };
            let s2 = if signs & 2 == 0 { 1.0 } else { -1.0 };
            let s3 = if signs & 4 == 0 { 1.0 } else { -1.0 };
            let arg = s1 * &u + s2 * &v + s3 * &w;
            sys.cubic_form(&arg, &arg, &arg, &mut buf);
            polar += s1 * s2 * s3 / 48.0 * &buf;
        }
        assert_relative_eq!(direct, polar, max_relative = 1e-10, epsilon = 1e-12);

        // permutation symmetry
        let mut perm = DVector::zeros(n);
        sys.cubic_form(&w, &u, &v, &mut perm);
        assert_relative_eq!(direct, perm, max_relative = 1e-13, epsilon = 1e-15);
    }

    #[test]
    fn forcing_columns_are_unit_norm_and_sensor_is_raw() {
        let sys = small();
        let b = sys.input_matrix();
        assert_relative_eq!(b.column(0).norm(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(b.column(1).norm(), 1.0, max_relative = 1e-12);
        let nx = sys.num_nodes();
        // channels do not mix
        assert_eq!(b.column(0).rows(nx, nx).amax(), 0.0);
        assert_eq!(b.column(1).rows(0, nx).amax(), 0.0);

        let c = sys.output_matrix();
        let xbar = forcing_center();
        for k in 0..nx {
            let expected = (-((sys.grid_points()[k] + xbar) / 1.6).powi(2)).exp();
            assert_relative_eq!(c[(0, k)], expected, max_relative = 1e-14);
            assert_relative_eq!(c[(1, nx + k)], expected, max_relative = 1e-14);
        }
        assert_eq!(c.view((0, nx), (1, nx)).amax(), 0.0);
        assert_eq!(c.view((1, 0), (1, nx)).amax(), 0.0);
    }
}
