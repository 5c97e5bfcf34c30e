//! End-to-end training pipeline: baseline initialization, optional
//! pre-projection of the data onto a POD frame, progressive-horizon
//! coordinate descent, and packaging of the final model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adjoint::PenaltySpec;
use crate::baselines::{
    compute_pod, operator_inference, petrov_galerkin_project, snapshot_matrix, OpInfOptions,
};
use crate::dynamics::{PolyOrder, PolynomialRom, ProjectionPair, Trajectory};
use crate::error::{Error, Result};
use crate::manifolds::{GrassmannPoint, ModelPoint, StiefelPoint};
use crate::optim::{
    coordinate_descent, progressive_schedule, BlockSelector, IterationRecord, Objective,
    OptimOptions, StopReason, TrajectoryObjective,
};
use crate::rng::SplitMix64;
use crate::systems::{BenchmarkSpec, FullOrderSystem, GeneratedData};
use crate::tensor::{Tensor3, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Bases from POD; operators by projecting the full-order dynamics.
    PodGalerkin,
    /// Bases from POD; operators by operator inference on the data.
    PodOpinf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub mu: f64,
    pub t_f: f64,
    /// Seeds the unit-sphere draw of the linear probe state.
    pub seed: u64,
    #[serde(default = "default_penalty_step")]
    pub step: f64,
}

fn default_penalty_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub benchmark: BenchmarkSpec,
    pub r: usize,
    pub order: PolyOrder,
    pub init: InitMode,
    /// Tikhonov strength for the operator-inference initializer.
    #[serde(default)]
    pub opinf_lambda: f64,
    #[serde(default)]
    pub optimizer: OptimOptions,
    /// Tensor/basis alternations per horizon.
    #[serde(default = "default_alternations")]
    pub alternations: usize,
    /// Increasing cost horizons; empty means one pass over the full window.
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    /// Dimension of the POD frame the data is pre-projected onto; 0 is off.
    #[serde(default)]
    pub preprojection_rank: usize,
    /// Quadrature substeps per sample interval; derived from the benchmark
    /// integration step when absent.
    #[serde(default)]
    pub substeps: Option<usize>,
}

fn default_alternations() -> usize {
    2
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Config("model order r must be at least 1".into()));
        }
        if self.alternations == 0 {
            return Err(Error::Config("need at least one alternation per horizon".into()));
        }
        self.optimizer.validate()?;
        if let Some(p) = &self.penalty {
            if !(p.mu >= 0.0) {
                return Err(Error::Config("penalty weight must be nonnegative".into()));
            }
            if !(p.t_f > 0.0 && p.t_f.is_finite()) {
                return Err(Error::Config("penalty horizon must be positive".into()));
            }
            if !(p.step > 0.0 && p.step.is_finite()) {
                return Err(Error::Config("penalty integration step must be positive".into()));
            }
        }
        if self.preprojection_rank != 0 && self.preprojection_rank < self.r {
            return Err(Error::Config(
                "pre-projection rank must be at least the model order".into(),
            ));
        }
        if let Some(s) = self.substeps {
            if s == 0 {
                return Err(Error::Config("substeps must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Builds the starting point: `Phi = Psi =` leading POD modes of the
/// weighted snapshot stack, with reduced operators from the selected
/// baseline, coerced to the configured polynomial order.
pub fn initialize(
    config: &TrainingConfig,
    data: &[Trajectory],
    system: Option<&dyn FullOrderSystem>,
) -> Result<ModelPoint> {
    if data.is_empty() {
        return Err(Error::Data("no trajectories to initialize from".into()));
    }
    let snapshots = snapshot_matrix(data, true)?;
    let pod = compute_pod(&snapshots, config.r)?;
    let sigma = &pod.singular_values;
    if sigma[config.r - 1] <= 1e-12 * sigma[0] {
        return Err(Error::Config(format!(
            "model order {} exceeds the numerical rank of the snapshot data",
            config.r
        )));
    }

    let rom = match config.init {
        InitMode::PodGalerkin => {
            let system = system.ok_or_else(|| {
                Error::Config("galerkin initialization needs the full-order system".into())
            })?;
            let pair = ProjectionPair::new(pod.modes.clone(), pod.modes.clone())?;
            petrov_galerkin_project(system, &pair)?
        }
        InitMode::PodOpinf => {
            let opts = OpInfOptions {
                lambda: config.opinf_lambda,
                quadratic: matches!(config.order, PolyOrder::Quadratic | PolyOrder::Cubic),
                cubic: matches!(config.order, PolyOrder::Cubic),
            };
            operator_inference(data, &pod.modes, system, &opts)?.rom
        }
    };
    let rom = coerce_order(rom, config.order);
    ModelPoint::new(
        GrassmannPoint::new(pod.modes.clone())?,
        StiefelPoint::new(pod.modes)?,
        rom,
    )
}

/// Adds missing polynomial blocks as zeros and drops blocks above the
/// requested order, so the trained model class is exactly the configured one.
fn coerce_order(mut rom: PolynomialRom, order: PolyOrder) -> PolynomialRom {
    let r = rom.dim();
    match order {
        PolyOrder::Linear => {
            rom.h = None;
            rom.g = None;
        }
        PolyOrder::Quadratic => {
            if rom.h.is_none() {
                rom.h = Some(Tensor3::zeros(r, r, r));
            }
            rom.g = None;
        }
        PolyOrder::Cubic => {
            if rom.h.is_none() {
                rom.h = Some(Tensor3::zeros(r, r, r));
            }
            if rom.g.is_none() {
                rom.g = Some(Tensor4::zeros(r, r, r, r));
            }
        }
    }
    rom
}

/// Data re-expressed in a k-dimensional POD frame. Measured outputs are kept
/// verbatim (they remain the fitting target); only states and initial
/// conditions move to frame coordinates, and the output map becomes
/// `C · basis`.
#[derive(Debug, Clone)]
pub struct PreProjection {
    pub basis: DMatrix<f64>,
    pub trajectories: Vec<Trajectory>,
    pub output_matrix: DMatrix<f64>,
    pub variance_fraction: f64,
}

/// Projects the training states onto the leading `rank` POD modes of the
/// weighted snapshot stack. `rank = 0` disables pre-projection.
pub fn preproject(
    data: &[Trajectory],
    output_matrix: &DMatrix<f64>,
    rank: usize,
) -> Result<Option<PreProjection>> {
    if rank == 0 {
        return Ok(None);
    }
    let snapshots = snapshot_matrix(data, true)?;
    let pod = compute_pod(&snapshots, rank)?;
    // Unlike the model order, the frame dimension may spill past the
    // numerical rank of the stack (trailing directions are orthonormal and
    // simply carry no data); only exactly degenerate factors are rejected.
    if pod.singular_values[rank - 1] == 0.0 {
        return Err(Error::Config(format!(
            "pre-projection rank {rank} exceeds the rank of the data"
        )));
    }
    let basis = pod.modes;
    let bt = basis.transpose();
    let trajectories = data
        .iter()
        .map(|traj| Trajectory {
            times: traj.times.clone(),
            x0: &bt * &traj.x0,
            outputs: traj.outputs.clone(),
            states: traj.states.as_ref().map(|s| &bt * s),
            input: traj.input.clone(),
            alpha: traj.alpha,
        })
        .collect();
    Ok(Some(PreProjection {
        output_matrix: output_matrix * &basis,
        variance_fraction: pod.energy_fraction,
        basis,
        trajectories,
    }))
}

fn map_into_frame(point: &ModelPoint, basis: &DMatrix<f64>) -> Result<ModelPoint> {
    let bt = basis.transpose();
    ModelPoint::new(
        GrassmannPoint::new(&bt * point.phi())?,
        StiefelPoint::new(&bt * point.psi())?,
        point.rom.clone(),
    )
}

fn lift_from_frame(point: &ModelPoint, basis: &DMatrix<f64>) -> Result<ModelPoint> {
    ModelPoint::new(
        GrassmannPoint::new(basis * point.phi())?,
        StiefelPoint::new(basis * point.psi())?,
        point.rom.clone(),
    )
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    pub records: Vec<IterationRecord>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub final_grad_norm: f64,
    pub stop: StopReason,
    /// True when the final model diverges on the full training window.
    pub unstable: bool,
    /// The seeded unit-sphere probe state, recorded for reproducibility.
    pub z_lin0: Option<Vec<f64>>,
    pub preprojection_rank: usize,
    pub preprojection_variance: Option<f64>,
}

/// Runs the full pipeline: initialize, optionally pre-project, then
/// coordinate descent over the configured horizons with the trajectory
/// objective (plus the stability penalty when configured).
pub fn train(config: &TrainingConfig, data: &GeneratedData) -> Result<(ModelPoint, TrainingLog)> {
    config.validate()?;
    if data.benchmark != config.benchmark {
        return Err(Error::Config(
            "training config and dataset describe different benchmarks".into(),
        ));
    }
    if data.trajectories.is_empty() {
        return Err(Error::Data("dataset holds no trajectories".into()));
    }
    let system = config.benchmark.build()?;
    let initial = initialize(config, &data.trajectories, Some(system.as_ref()))?;

    let penalty_state = config.penalty.as_ref().map(|p| {
        let mut rng = SplitMix64::new(p.seed);
        let mut z0 = DVector::from_fn(config.r, |_, _| rng.normal());
        let norm = z0.norm();
        if norm > 0.0 {
            z0 /= norm;
        } else {
            z0[0] = 1.0;
        }
        let mut spec = PenaltySpec::new(p.mu, p.t_f, z0.clone());
        spec.step = p.step;
        (spec, z0)
    });

    let pre = preproject(&data.trajectories, system.output_matrix(), config.preprojection_rank)?;
    let (work_data, work_c, start) = match &pre {
        Some(p) => (&p.trajectories[..], &p.output_matrix, map_into_frame(&initial, &p.basis)?),
        None => (&data.trajectories[..], system.output_matrix(), initial),
    };

    let times = &work_data[0].times;
    if times.len() < 2 {
        return Err(Error::Data("trajectories need at least two samples".into()));
    }
    let substeps = config.substeps.unwrap_or_else(|| {
        ((times[1] - times[0]) / config.benchmark.dt()).ceil().max(1.0) as usize
    });
    let t_max = *times.last().unwrap();

    let objective = TrajectoryObjective {
        data: work_data,
        output_matrix: work_c,
        substeps,
        penalty: penalty_state.as_ref().map(|(spec, _)| spec.clone()),
    };

    let base: Vec<(BlockSelector, OptimOptions)> = (0..config.alternations)
        .flat_map(|_| {
            [
                (BlockSelector::tensors(), config.optimizer.clone()),
                (BlockSelector::bases(), config.optimizer.clone()),
            ]
        })
        .collect();
    let horizons: Vec<f64> =
        if config.horizons.is_empty() { vec![t_max] } else { config.horizons.clone() };
    let schedule = progressive_schedule(&horizons, t_max, &base)?;

    let outcome = coordinate_descent(&objective, &start, &schedule)?;

    let full_cost = objective.cost(&outcome.point, None)?;
    let unstable = !full_cost.is_finite();

    let final_point = match &pre {
        Some(p) => lift_from_frame(&outcome.point, &p.basis)?,
        None => outcome.point,
    };

    let log = TrainingLog {
        initial_cost: outcome.log.first().map(|r| r.cost).unwrap_or(f64::NAN),
        final_cost: outcome.cost,
        final_grad_norm: outcome.grad_norm,
        stop: outcome.reason,
        records: outcome.log,
        unstable,
        z_lin0: penalty_state.map(|(_, z0)| z0.iter().copied().collect()),
        preprojection_rank: config.preprojection_rank,
        preprojection_variance: pre.as_ref().map(|p| p.variance_fraction),
    };
    Ok((final_point, log))
}
