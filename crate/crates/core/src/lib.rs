//! Non-intrusive trajectory-based optimization of reduced-order models.
//!
//! The crate learns low-dimensional surrogates of large dynamical systems by
//! fitting both an oblique projection (a pair of basis matrices) and the
//! coefficients of a polynomial reduced model directly against full-order
//! output trajectories. Gradients of the trajectory-misfit cost are computed
//! with a discrete adjoint sweep, and the bases are optimized on the product
//! of a Grassmann and a Stiefel manifold via Riemannian conjugate gradients.
//!
//! Classical baselines (POD-Galerkin projection and Operator Inference) and
//! two reference benchmark systems are included so trained models can be
//! compared end to end.

pub mod adjoint;
pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod manifolds;
pub mod optim;
pub mod rng;
pub mod systems;
pub mod tensor;
pub mod trainer;

pub use adjoint::{CostOptions, CostReport, EuclideanGradient, PenaltySpec};
pub use baselines::{OpInfOptions, OpInfResult, Pod};
pub use dynamics::{InputSignal, PolyOrder, PolynomialRom, ProjectionPair, SampleGrid, Trajectory};
pub use error::{Error, Result};
pub use manifolds::{ModelPoint, TangentVector};
pub use optim::{BlockSelector, Objective, OptimOptions, OptimOutcome, Phase, StopReason, TrajectoryObjective};
pub use tensor::{Tensor3, Tensor4};
pub use trainer::{InitMode, PenaltyConfig, TrainingConfig, TrainingLog};
