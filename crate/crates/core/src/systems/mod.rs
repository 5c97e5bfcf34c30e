//! Full-order benchmark systems and trajectory-data generation.

mod cgl;
mod datagen;
mod toy;

pub use cgl::CglSystem;
pub use datagen::{generate_dataset, GeneratedData, Protocol};
pub use toy::ToySystem;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Polynomial full-order model `f(x, u) = A x + T(x, x) + T3(x, x, x) + B u`
/// with linear outputs `y = C x`. The origin is a fixed point of both
/// provided systems.
pub trait FullOrderSystem: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn linear_matrix(&self) -> &DMatrix<f64>;
    fn input_matrix(&self) -> &DMatrix<f64>;
    fn output_matrix(&self) -> &DMatrix<f64>;

    /// Full right-hand side `f(x, u)`.
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>);

    /// Symmetric bilinear form `T(a, b)`; writes zeros when the system has no
    /// quadratic term.
    fn quadratic_form(&self, a: &DVector<f64>, b: &DVector<f64>, out: &mut DVector<f64>);

    /// Symmetric trilinear form `T3(a, b, c)`; writes zeros when the system
    /// has no cubic term.
    fn cubic_form(
        &self,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
        out: &mut DVector<f64>,
    );

    fn has_quadratic(&self) -> bool;
    fn has_cubic(&self) -> bool;
}

/// Everything needed to rebuild a benchmark system exactly. Recorded in
/// dataset manifests so downstream commands (baselines, evaluation) never
/// guess the discretization or integration step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum BenchmarkSpec {
    Toy { dt: f64 },
    Cgl { nx: usize, l: f64, dt: f64 },
}

impl BenchmarkSpec {
    pub fn toy_default() -> Self {
        BenchmarkSpec::Toy { dt: 0.01 }
    }

    /// Paper-scale discretization.
    pub fn cgl_full() -> Self {
        BenchmarkSpec::Cgl { nx: 220, l: 40.0, dt: 0.05 }
    }

    /// Coarse desk-scale preset. Note that at this resolution the discrete
    /// linear operator is unstable (the origin loses stability below roughly
    /// four nodes per unit length), so trajectories saturate on a limit
    /// cycle instead of decaying; the preset is meant for cheap end-to-end
    /// runs, not for reproducing full-scale structural properties.
    pub fn cgl_ci() -> Self {
        BenchmarkSpec::Cgl { nx: 64, l: 30.0, dt: 0.05 }
    }

    pub fn dt(&self) -> f64 {
        match self {
            BenchmarkSpec::Toy { dt } => *dt,
            BenchmarkSpec::Cgl { dt, .. } => *dt,
        }
    }

    pub fn build(&self) -> Result<Box<dyn FullOrderSystem>> {
        match self {
            BenchmarkSpec::Toy { .. } => Ok(Box::new(ToySystem::new())),
            BenchmarkSpec::Cgl { nx, l, .. } => Ok(Box::new(CglSystem::new(*nx, *l)?)),
        }
    }
}
