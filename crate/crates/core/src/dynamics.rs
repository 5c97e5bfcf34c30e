//! Polynomial ODE models, fixed-step RK4 integration, and the oblique
//! encode/decode maps shared by training and evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

/// Reduced dynamics `f_r(z, u) = A_r z + B_r u [+ H_r:zz^T] [+ G_r:(z⊗z⊗z)]`.
///
/// The quadratic tensor is symmetric in its last two indices and the cubic
/// tensor under permutations of its last three; both are symmetrized on
/// construction (the dynamics only see the symmetric part, and symmetry makes
/// the Jacobian contraction below valid).
#[derive(Debug, Clone)]
pub struct PolynomialRom {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: Option<Tensor3>,
    pub g: Option<Tensor4>,
}

/// Highest polynomial degree present in the reduced dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyOrder {
    Linear,
    Quadratic,
    Cubic,
}

impl PolynomialRom {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        h: Option<Tensor3>,
        g: Option<Tensor4>,
    ) -> Result<Self> {
        let r = a.nrows();
        if a.ncols() != r {
            return Err(Error::Dimension("A_r must be square".into()));
        }
        if b.nrows() != r {
            return Err(Error::Dimension("B_r row count must match A_r".into()));
        }
        let mut h = h;
        if let Some(t) = h.as_mut() {
            if t.dims() != [r, r, r] {
                return Err(Error::Dimension("H_r must be r×r×r".into()));
            }
            t.symmetrize_trailing();
        }
        let mut g = g;
        if let Some(t) = g.as_mut() {
            if t.dims() != [r, r, r, r] {
                return Err(Error::Dimension("G_r must be r×r×r×r".into()));
            }
            t.symmetrize_trailing();
        }
        let rom = Self { a, b, h, g };
        if !rom.all_finite() {
            return Err(Error::Data("non-finite entry in reduced operators".into()));
        }
        Ok(rom)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn order(&self) -> PolyOrder {
        if self.g.is_some() {
            PolyOrder::Cubic
        } else if self.h.is_some() {
            PolyOrder::Quadratic
        } else {
            PolyOrder::Linear
        }
    }

    fn all_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.h.as_ref().map_or(true, |t| t.data().iter().all(|v| v.is_finite()))
            && self.g.as_ref().map_or(true, |t| t.data().iter().all(|v| v.is_finite()))
    }

    /// `out = A_r z + B_r u + H_r:zz^T [+ G_r:(z⊗z⊗z)]`.
    pub fn rhs(&self, z: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.a, z, 0.0);
        if u.len() > 0 {
            out.gemv(1.0, &self.b, u, 1.0);
        }
        if let Some(h) = &self.h {
            h.contract_pair(z, z, out);
        }
        if let Some(g) = &self.g {
            g.contract_triple(z, z, z, out);
        }
    }

    /// `∂f_r/∂z = A_r + 2 H_r:z [+ 3 G_r:(z⊗z)]`.
    pub fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = self.a.clone();
        if let Some(h) = &self.h {
            h.accumulate_jacobian(z, &mut jac);
        }
        if let Some(g) = &self.g {
            g.accumulate_jacobian(z, &mut jac);
        }
        jac
    }
}

/// Oblique basis pair with cached solve data for `D = Φ(Ψ^T Φ)^{-1}`.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    phi: DMatrix<f64>,
    psi: DMatrix<f64>,
    /// `(Ψ^T Φ)^{-1}`.
    k: DMatrix<f64>,
    /// `D = Φ (Ψ^T Φ)^{-1}`; decode map and right factor of the projector.
    d: DMatrix<f64>,
    rcond: f64,
}

pub const MIN_PAIR_RCOND: f64 = 1e-10;

impl ProjectionPair {
    pub fn new(phi: DMatrix<f64>, psi: DMatrix<f64>) -> Result<Self> {
        if phi.shape() != psi.shape() {
            return Err(Error::Dimension("basis shapes differ".into()));
        }
        let m = psi.transpose() * &phi;
        let rcond = rcond(&m);
        if !(rcond >= MIN_PAIR_RCOND) {
            return Err(Error::SingularProjection { rcond });
        }
        let inv = m
            .clone()
            .try_inverse()
            .ok_or(Error::SingularProjection { rcond })?;
        let d = &phi * &inv;
        Ok(Self { phi, psi, k: inv, d, rcond })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// `(Ψ^T Φ)^{-1}`.
    pub fn pairing_inverse(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Decode matrix `D = Φ(Ψ^T Φ)^{-1}`.
    pub fn decode_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// `ẑ = Ψ^T x`.
    pub fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        self.psi.transpose() * x
    }

    /// `x̂ = Φ(Ψ^T Φ)^{-1} ẑ`.
    pub fn decode(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.d * z
    }

    /// Oblique projector `P = Φ(Ψ^T Φ)^{-1}Ψ^T` as a dense matrix.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.d * self.psi.transpose()
    }
}

/// Reciprocal 2-norm condition number.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Time-dependent forcing applied through the input matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSignal {
    Zero,
    /// `u(t) = amplitude` for `t >= start`, zero before.
    Step { amplitude: Vec<f64>, start: f64 },
    /// Initial-condition impulse `x0 = B · vector`; the forcing itself is zero.
    Impulse { vector: Vec<f64> },
    /// `u(t) = direction · amplitude · sin(frequency · t + phase)`.
    Sinusoid { amplitude: f64, frequency: f64, phase: f64, direction: Vec<f64> },
    /// Piecewise-linear interpolation of tabulated values (held constant
    /// outside the table).
    SampledSeries { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InputSignal {
    /// Number of input channels the signal drives (0 for `Zero`).
    pub fn input_dim(&self) -> usize {
        match self {
            InputSignal::Zero => 0,
            InputSignal::Step { amplitude, .. } => amplitude.len(),
            InputSignal::Impulse { vector } => vector.len(),
            InputSignal::Sinusoid { direction, .. } => direction.len(),
            InputSignal::SampledSeries { values, .. } => {
                values.first().map_or(0, |v| v.len())
            }
        }
    }

    pub fn eval(&self, t: f64, out: &mut DVector<f64>) {
        match self {
            InputSignal::Zero | InputSignal::Impulse { .. } => out.fill(0.0),
            InputSignal::Step { amplitude, start } => {
                if t >= *start {
                    for (o, a) in out.iter_mut().zip(amplitude) {
                        *o = *a;
                    }
                } else {
                    out.fill(0.0);
                }
            }
            InputSignal::Sinusoid { amplitude, frequency, phase, direction } => {
                let s = amplitude * (frequency * t + phase).sin();
                for (o, d) in out.iter_mut().zip(direction) {
                    *o = s * d;
                }
            }
            InputSignal::SampledSeries { times, values } => {
                if times.is_empty() {
                    out.fill(0.0);
                    return;
                }
                let set = |out: &mut DVector<f64>, v: &Vec<f64>| {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = *x;
                    }
                };
                if t <= times[0] {
                    set(out, &values[0]);
                } else if t >= *times.last().unwrap() {
                    set(out, values.last().unwrap());
                } else {
                    let j = times.partition_point(|&s| s <= t).min(times.len() - 1);
                    let (t0, t1) = (times[j - 1], times[j]);
                    let w = (t - t0) / (t1 - t0);
                    for i in 0..out.len() {
                        out[i] = (1.0 - w) * values[j - 1][i] + w * values[j][i];
                    }
                }
            }
        }
    }
}

/// One recorded response of the full-order system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Strictly increasing sample times.
    pub times: Vec<f64>,
    /// Full-order initial state (n).
    pub x0: DVector<f64>,
    /// Outputs at the sample times (p×N).
    pub outputs: DMatrix<f64>,
    /// Full states at the sample times (n×N), kept when the downstream
    /// consumer needs snapshots (POD, operator inference).
    pub states: Option<DMatrix<f64>>,
    pub input: InputSignal,
    /// Cost normalization weight, strictly positive.
    pub alpha: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Data("trajectory weight must be positive".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("sample times must be strictly increasing".into()));
        }
        if self.outputs.ncols() != self.times.len() {
            return Err(Error::Dimension("output count must match sample times".into()));
        }
        if let Some(x) = &self.states {
            if x.ncols() != self.times.len() || x.nrows() != self.x0.len() {
                return Err(Error::Dimension("state snapshot shape mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Sample times plus the uniform substep count that defines the fine RK4 grid.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    times: Vec<f64>,
    substeps: usize,
}

impl SampleGrid {
    pub fn new(times: Vec<f64>, substeps: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Config("time grid must be non-empty".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("time grid must be strictly increasing".into()));
        }
        if substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        Ok(Self { times, substeps })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn num_samples(&self) -> usize {
        self.times.len()
    }

    /// Number of fine-grid nodes, `(N-1)·substeps + 1`.
    pub fn fine_len(&self) -> usize {
        (self.times.len() - 1) * self.substeps + 1
    }

    /// Time of fine-grid node `k`.
    pub fn fine_time(&self, k: usize) -> f64 {
        let i = k / self.substeps;
        if i >= self.times.len() - 1 {
            return *self.times.last().unwrap();
        }
        let rem = k - i * self.substeps;
        if rem == 0 {
            return self.times[i];
        }
        let h = (self.times[i + 1] - self.times[i]) / self.substeps as f64;
        self.times[i] + rem as f64 * h
    }

    /// Fine-grid node index of sample `i`.
    pub fn sample_node(&self, i: usize) -> usize {
        i * self.substeps
    }

    /// Keep only the samples with `t_i <= horizon` (at least the first).
    pub fn truncated(&self, horizon: f64) -> SampleGrid {
        let mut n = self.times.partition_point(|&t| t <= horizon);
        if n == 0 {
            n = 1;
        }
        SampleGrid { times: self.times[..n].to_vec(), substeps: self.substeps }
    }
}

/// Classical RK4 sweep over the fine grid. `on_node(k, t, x)` is called for
/// every fine node, starting with the initial state at `k = 0`.
pub fn rk4_sweep<F, G>(mut rhs: F, x0: &DVector<f64>, grid: &SampleGrid, mut on_node: G) -> Result<()>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    G: FnMut(usize, f64, &DVector<f64>),
{
    let dim = x0.len();
    let mut x = x0.clone();
    let mut k1 = DVector::zeros(dim);
    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut stage = DVector::zeros(dim);

    on_node(0, grid.fine_time(0), &x);
    let mut node = 0usize;
    for i in 0..grid.num_samples() - 1 {
        let h = (grid.times[i + 1] - grid.times[i]) / grid.substeps as f64;
        for s in 0..grid.substeps {
            let t = grid.times[i] + s as f64 * h;
            rhs(t, &x, &mut k1);
            stage.copy_from(&x);
            stage.axpy(0.5 * h, &k1, 1.0);
            rhs(t + 0.5 * h, &stage, &mut k2);
            stage.copy_from(&x);
            stage.axpy(0.5 * h, &k2, 1.0);
            rhs(t + 0.5 * h, &stage, &mut k3);
            stage.copy_from(&x);
            stage.axpy(h, &k3, 1.0);
            rhs(t + h, &stage, &mut k4);
            for j in 0..dim {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            node += 1;
            let t_next = t + h;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { time: t_next });
            }
            on_node(node, t_next, &x);
        }
    }
    Ok(())
}

/// Integrates `dz/dt = rhs(t, z)` and returns the state at every grid time.
pub fn integrate<F>(mut rhs: F, z0: &DVector<f64>, grid: &SampleGrid) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    let mut samples = Vec::with_capacity(grid.num_samples());
    let substeps = grid.substeps();
    rk4_sweep(&mut rhs, z0, grid, |k, _t, x| {
        if k % substeps == 0 {
            samples.push(x.clone());
        }
    })?;
    Ok(samples)
}

/// Result of simulating a reduced model against a sample grid.
#[derive(Debug, Clone)]
pub struct RomSimulation {
    /// Decoded outputs `ŷ(t_i)` (p×N).
    pub outputs: DMatrix<f64>,
    /// Reduced states at the sample times (r×N).
    pub z_samples: DMatrix<f64>,
    /// Reduced states on the fine integration grid, for adjoint reuse.
    pub z_fine: Vec<DVector<f64>>,
}

/// Simulates the reduced system `dẑ/dt = f_r(ẑ, u)`, `ẑ(0) = Ψ^T x0`, and
/// decodes outputs through `ŷ = C Φ(Ψ^T Φ)^{-1} ẑ`.
pub fn simulate_rom(
    rom: &PolynomialRom,
    pair: &ProjectionPair,
    c: &DMatrix<f64>,
    x0: &DVector<f64>,
    input: &InputSignal,
    grid: &SampleGrid,
) -> Result<RomSimulation> {
    let c_r = c * pair.decode_matrix();
    simulate_rom_reduced(rom, &pair.encode(x0), &c_r, input, grid)
}

/// Reduced-coordinate core of [`simulate_rom`]: starts from `ẑ0` and applies
/// the already-composed reduced output map `C_r = C Φ(Ψ^T Φ)^{-1}` (p×r).
pub fn simulate_rom_reduced(
    rom: &PolynomialRom,
    z0: &DVector<f64>,
    c_r: &DMatrix<f64>,
    input: &InputSignal,
    grid: &SampleGrid,
) -> Result<RomSimulation> {
    let r = rom.dim();
    let p = c_r.nrows();
    let n_samples = grid.num_samples();
    let mut z_fine = Vec::with_capacity(grid.fine_len());
    let mut u = DVector::zeros(rom.input_dim());
    rk4_sweep(
        |t, z, out| {
            input.eval(t, &mut u);
            rom.rhs(z, &u, out);
        },
        z0,
        grid,
        |_k, _t, z| z_fine.push(z.clone()),
    )?;
    let mut z_samples = DMatrix::zeros(r, n_samples);
    let mut outputs = DMatrix::zeros(p, n_samples);
    for i in 0..n_samples {
        let z = &z_fine[grid.sample_node(i)];
        z_samples.set_column(i, z);
        outputs.set_column(i, &(c_r * z));
    }
    Ok(RomSimulation { outputs, z_samples, z_fine })
}
