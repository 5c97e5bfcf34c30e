//! Riemannian conjugate gradient over the product manifold, block coordinate
//! descent, and progressive-horizon training schedules.
//!
//! The optimizer itself is single threaded and fully deterministic; any
//! parallelism lives inside the objective. Directions use Polak-Ribiere with
//! nonnegative clipping, transporting the previous direction and gradient by
//! tangent projection at the new point. Steps are chosen by Armijo
//! backtracking; a trial point whose basis pairing has become numerically
//! singular, or whose cost is non-finite, is rejected exactly like an
//! insufficient decrease. Blocks excluded by the selector receive an exactly
//! zero direction component, and the retraction returns those blocks bit for
//! bit unchanged.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adjoint::{evaluate_cost, euclidean_gradient, stability_penalty, CostOptions, PenaltySpec};
use crate::dynamics::{Trajectory, MIN_PAIR_RCOND};
use crate::error::{Error, Result};
use crate::manifolds::{product_inner, product_norm, ModelPoint, TangentVector};

/// Objective evaluated by the optimizer. `horizon`, when set, restricts the
/// trajectory-matching cost to samples with `t_i <= horizon`; objectives
/// without a notion of time ignore it.
pub trait Objective {
    fn cost(&self, point: &ModelPoint, horizon: Option<f64>) -> Result<f64>;

    /// Cost together with the ambient (Euclidean) gradient. `None` in place
    /// of the gradient signals a non-finite evaluation.
    fn cost_and_gradient(
        &self,
        point: &ModelPoint,
        horizon: Option<f64>,
    ) -> Result<(f64, Option<TangentVector>)>;
}

/// Lets a plain closure act as an objective. The closure is evaluated in
/// full even when only the cost is needed, which is fine for cheap synthetic
/// objectives; implement the trait directly when line searches should skip
/// the gradient.
impl<F> Objective for F
where
    F: Fn(&ModelPoint, Option<f64>) -> Result<(f64, Option<TangentVector>)>,
{
    fn cost(&self, point: &ModelPoint, horizon: Option<f64>) -> Result<f64> {
        self(point, horizon).map(|(c, _)| c)
    }

    fn cost_and_gradient(
        &self,
        point: &ModelPoint,
        horizon: Option<f64>,
    ) -> Result<(f64, Option<TangentVector>)> {
        self(point, horizon)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimOptions {
    pub max_iterations: usize,
    pub gradient_norm_tolerance: f64,
    /// Step tried first on the very first iteration; later iterations start
    /// from the previously accepted step divided by the backtracking factor.
    pub initial_step: f64,
    pub backtracking_factor: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Forced steepest-descent restart after this many iterations.
    pub cg_restart_period: usize,
    /// 0 is silent; anything larger prints one line per accepted step.
    pub verbosity: u8,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_norm_tolerance: 1e-6,
            initial_step: 1.0,
            backtracking_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 40,
            cg_restart_period: 20,
            verbosity: 0,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_norm_tolerance > 0.0) {
            return Err(Error::Config("gradient tolerance must be positive".into()));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::Config("sufficient-decrease constant must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("initial step must be positive and finite".into()));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config("need at least one backtracking trial".into()));
        }
        if self.cg_restart_period == 0 {
            return Err(Error::Config("restart period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which blocks of the model point the current phase may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSelector {
    pub phi: bool,
    pub psi: bool,
    pub a: bool,
    pub b: bool,
    pub h: bool,
    pub g: bool,
}

impl BlockSelector {
    pub fn all() -> Self {
        Self { phi: true, psi: true, a: true, b: true, h: true, g: true }
    }

    pub fn none() -> Self {
        Self { phi: false, psi: false, a: false, b: false, h: false, g: false }
    }

    /// The two basis blocks only.
    pub fn bases() -> Self {
        Self { phi: true, psi: true, ..Self::none() }
    }

    /// The reduced operators only.
    pub fn tensors() -> Self {
        Self { phi: false, psi: false, a: true, b: true, h: true, g: true }
    }

    pub fn only_a() -> Self {
        Self { a: true, ..Self::none() }
    }

    pub fn any(&self) -> bool {
        self.phi || self.psi || self.a || self.b || self.h || self.g
    }

    /// Zeroes the components this selector freezes.
    fn mask(&self, v: &mut TangentVector) {
        if !self.phi {
            v.dphi.fill(0.0);
        }
        if !self.psi {
            v.dpsi.fill(0.0);
        }
        if !self.a {
            v.da.fill(0.0);
        }
        if !self.b {
            v.db.fill(0.0);
        }
        if !self.h {
            if let Some(t) = &mut v.dh {
                t.data_mut().fill(0.0);
            }
        }
        if !self.g {
            if let Some(t) = &mut v.dg {
                t.data_mut().fill(0.0);
            }
        }
    }
}

/// One row of the iteration log. Row 0 of each phase describes the starting
/// point (step size 0); row k describes the state after k accepted steps,
/// with the step size that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub phase: usize,
}

/// Renders the log as CSV (header plus one line per record, LF endings).
pub fn log_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,cost,grad_norm,step_size,phase\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.cost, r.grad_norm, r.step_size, r.phase
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm fell to or below the tolerance.
    GradientTolerance,
    MaxIterations,
    /// No acceptable step along the search direction nor along steepest
    /// descent; the returned point is the best one found.
    LineSearchFailed,
    /// The objective was non-finite before any step could be taken. A
    /// schedule stops here and keeps the progress made in earlier phases.
    NonFiniteStart,
}

#[derive(Debug)]
pub struct OptimOutcome {
    pub point: ModelPoint,
    pub cost: f64,
    pub grad_norm: f64,
    pub reason: StopReason,
    pub log: Vec<IterationRecord>,
}

/// One leg of a coordinate-descent schedule.
#[derive(Debug, Clone)]
pub struct Phase {
    pub selector: BlockSelector,
    pub options: OptimOptions,
    pub horizon: Option<f64>,
}

/// Minimizes the objective along conjugate-gradient directions restricted to
/// the selected blocks, stopping at the gradient tolerance or the iteration
/// cap. Frozen blocks of the result are bit-identical to `x0`'s.
pub fn riemannian_cg(
    objective: &dyn Objective,
    x0: &ModelPoint,
    options: &OptimOptions,
    selector: &BlockSelector,
) -> Result<OptimOutcome> {
    options.validate()?;
    if !selector.any() {
        return Err(Error::Config("block selector enables nothing".into()));
    }
    let mut log = Vec::new();
    let result = run_phase(objective, x0.clone(), options, selector, None, 0, &mut log)?;
    if result.reason == StopReason::NonFiniteStart {
        return Err(Error::Optim(format!(
            "objective is non-finite at the starting point (cost {})",
            result.cost
        )));
    }
    Ok(result.into_outcome(log))
}

/// Runs the phases of a schedule in order, each starting from the previous
/// phase's final point. The combined iteration log tags rows with the phase
/// index. A phase whose starting cost is non-finite (possible when a wider
/// horizon exposes divergence) ends the schedule early, keeping the point
/// and log accumulated so far; only a non-finite very first phase is a hard
/// error.
pub fn coordinate_descent(
    objective: &dyn Objective,
    x0: &ModelPoint,
    schedule: &[Phase],
) -> Result<OptimOutcome> {
    if schedule.is_empty() {
        return Err(Error::Config("coordinate-descent schedule is empty".into()));
    }
    for phase in schedule {
        phase.options.validate()?;
        if !phase.selector.any() {
            return Err(Error::Config("schedule phase enables no blocks".into()));
        }
    }
    let mut point = x0.clone();
    let mut log = Vec::new();
    let mut last = None;
    for (index, phase) in schedule.iter().enumerate() {
        let res = run_phase(
            objective,
            point,
            &phase.options,
            &phase.selector,
            phase.horizon,
            index,
            &mut log,
        )?;
        if res.reason == StopReason::NonFiniteStart && index == 0 {
            return Err(Error::Optim(format!(
                "objective is non-finite at the starting point (cost {})",
                res.cost
            )));
        }
        let stop_here = res.reason == StopReason::NonFiniteStart;
        last = Some((res.cost, res.grad_norm, res.reason));
        point = res.point;
        if stop_here {
            break;
        }
    }
    let (cost, grad_norm, reason) = last.expect("schedule verified non-empty");
    Ok(OptimOutcome { point, cost, grad_norm, reason, log })
}

/// Expands increasing time horizons into a schedule: for each horizon the
/// block phases in `base` run in order with the cost restricted to samples
/// at `t_i <= horizon`. Horizons must be strictly increasing, positive, and
/// no larger than the span of the data.
pub fn progressive_schedule(
    horizons: &[f64],
    data_horizon: f64,
    base: &[(BlockSelector, OptimOptions)],
) -> Result<Vec<Phase>> {
    if horizons.is_empty() {
        return Err(Error::Config("need at least one horizon".into()));
    }
    if base.is_empty() {
        return Err(Error::Config("need at least one block phase per horizon".into()));
    }
    for (selector, options) in base {
        options.validate()?;
        if !selector.any() {
            return Err(Error::Config("schedule phase enables no blocks".into()));
        }
    }
    let mut previous = 0.0;
    for &h in horizons {
        if !(h.is_finite() && h > previous) {
            return Err(Error::Config("horizons must be finite, positive and strictly increasing".into()));
        }
        if h > data_horizon {
            return Err(Error::Config(format!(
                "horizon {h} exceeds the data span {data_horizon}"
            )));
        }
        previous = h;
    }
    let mut schedule = Vec::with_capacity(horizons.len() * base.len());
    for &h in horizons {
        for (selector, options) in base {
            schedule.push(Phase { selector: *selector, options: options.clone(), horizon: Some(h) });
        }
    }
    Ok(schedule)
}

struct PhaseResult {
    point: ModelPoint,
    cost: f64,
    grad_norm: f64,
    reason: StopReason,
}

impl PhaseResult {
    fn into_outcome(self, log: Vec<IterationRecord>) -> OptimOutcome {
        OptimOutcome {
            point: self.point,
            cost: self.cost,
            grad_norm: self.grad_norm,
            reason: self.reason,
            log,
        }
    }
}

fn run_phase(
    objective: &dyn Objective,
    x0: ModelPoint,
    options: &OptimOptions,
    selector: &BlockSelector,
    horizon: Option<f64>,
    phase: usize,
    log: &mut Vec<IterationRecord>,
) -> Result<PhaseResult> {
    let mut point = x0;
    let (mut cost, grad) = objective.cost_and_gradient(&point, horizon)?;
    let mut grad = match grad {
        Some(g) if cost.is_finite() => riemannian_gradient(&point, &g, selector)?,
        None if cost.is_finite() => {
            return Err(Error::Optim(
                "objective reported a finite cost without a gradient".into(),
            ))
        }
        _ => {
            log.push(IterationRecord {
                iteration: 0,
                cost,
                grad_norm: f64::NAN,
                step_size: 0.0,
                phase,
            });
            return Ok(PhaseResult {
                point,
                cost,
                grad_norm: f64::NAN,
                reason: StopReason::NonFiniteStart,
            });
        }
    };
    let mut grad_norm = product_norm(&grad);
    log.push(IterationRecord { iteration: 0, cost, grad_norm, step_size: 0.0, phase });

    // Previous direction and gradient (with the latter's squared norm), in
    // the tangent space of the point where they were computed.
    let mut previous: Option<(TangentVector, TangentVector, f64)> = None;
    let mut next_trial_step = options.initial_step;
    let mut since_restart = 0usize;
    let mut reason = StopReason::MaxIterations;

    for iteration in 1..=options.max_iterations {
        if grad_norm <= options.gradient_norm_tolerance {
            reason = StopReason::GradientTolerance;
            break;
        }

        let mut direction = match &previous {
            Some((dir_old, grad_old, grad_old_sq)) if since_restart < options.cg_restart_period => {
                let transported_grad = riemannian_gradient(&point, grad_old, selector)?;
                let mut y = grad.clone();
                y.axpy(-1.0, &transported_grad);
                let beta = (product_inner(&grad, &y) / grad_old_sq).max(0.0);
                let mut d = riemannian_gradient(&point, dir_old, selector)?;
                d.scale_mut(beta);
                d.axpy(-1.0, &grad);
                d
            }
            _ => steepest(&grad),
        };

        // A conjugate direction that has stopped being a descent direction
        // (relative to the decrease the Armijo test will demand) restarts
        // the recursion at steepest descent.
        let grad_sq = grad_norm * grad_norm;
        let mut restarted = since_restart >= options.cg_restart_period || previous.is_none();
        if product_inner(&grad, &direction) > -options.sufficient_decrease * grad_sq {
            direction = steepest(&grad);
            restarted = true;
        }

        let mut accepted = line_search(
            objective,
            &point,
            &direction,
            cost,
            grad_sq,
            next_trial_step,
            options,
            horizon,
        )?;
        if accepted.is_none() && !is_steepest(&direction, &grad) {
            direction = steepest(&grad);
            restarted = true;
            accepted = line_search(
                objective,
                &point,
                &direction,
                cost,
                grad_sq,
                options.initial_step,
                options,
                horizon,
            )?;
        }
        let (step, new_point, new_cost) = match accepted {
            Some(hit) => hit,
            None => {
                reason = StopReason::LineSearchFailed;
                break;
            }
        };

        let (eval_cost, new_grad) = objective.cost_and_gradient(&new_point, horizon)?;
        let new_grad = match new_grad {
            Some(g) if eval_cost.is_finite() => riemannian_gradient(&new_point, &g, selector)?,
            _ => {
                return Err(Error::Optim(
                    "gradient became non-finite at an accepted point".into(),
                ))
            }
        };

        previous = Some((direction, grad, grad_sq));
        point = new_point;
        cost = new_cost;
        grad = new_grad;
        grad_norm = product_norm(&grad);
        next_trial_step = step / options.backtracking_factor;
        since_restart = if restarted { 1 } else { since_restart + 1 };

        log.push(IterationRecord { iteration, cost, grad_norm, step_size: step, phase });
        if options.verbosity > 0 {
            eprintln!(
                "phase {phase} iter {iteration}: cost {cost:.6e} grad {grad_norm:.3e} step {step:.3e}"
            );
        }
    }

    if grad_norm <= options.gradient_norm_tolerance {
        reason = StopReason::GradientTolerance;
    }
    Ok(PhaseResult { point, cost, grad_norm, reason })
}

/// Projects an ambient gradient (or transports a tangent vector) onto the
/// tangent space at `point` and zeroes the frozen blocks.
fn riemannian_gradient(
    point: &ModelPoint,
    ambient: &TangentVector,
    selector: &BlockSelector,
) -> Result<TangentVector> {
    let mut g = point.project_tangent(ambient)?;
    selector.mask(&mut g);
    Ok(g)
}

fn steepest(grad: &TangentVector) -> TangentVector {
    let mut d = grad.clone();
    d.scale_mut(-1.0);
    d
}

fn is_steepest(direction: &TangentVector, grad: &TangentVector) -> bool {
    let mut diff = direction.clone();
    diff.axpy(1.0, grad);
    diff.is_zero()
}

/// Armijo backtracking: returns the first step along `direction` whose cost
/// satisfies `J_new <= J - c * step * |grad|^2`, or `None` when every trial
/// fails. Degenerate retractions, near-singular basis pairings and
/// non-finite costs count as failed trials.
#[allow(clippy::too_many_arguments)]
fn line_search(
    objective: &dyn Objective,
    point: &ModelPoint,
    direction: &TangentVector,
    cost: f64,
    grad_sq: f64,
    first_step: f64,
    options: &OptimOptions,
    horizon: Option<f64>,
) -> Result<Option<(f64, ModelPoint, f64)>> {
    let mut step = first_step;
    for _ in 0..options.max_backtracks {
        let trial = match point.retract(direction, step) {
            Ok(p) => p,
            Err(Error::DegenerateRetraction) => {
                step *= options.backtracking_factor;
                continue;
            }
            Err(e) => return Err(e),
        };
        if trial.pairing_rcond() < MIN_PAIR_RCOND {
            step *= options.backtracking_factor;
            continue;
        }
        let trial_cost = match objective.cost(&trial, horizon) {
            Ok(c) => c,
            Err(e) if e.is_numerical() => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if trial_cost.is_finite()
            && trial_cost <= cost - options.sufficient_decrease * step * grad_sq
        {
            return Ok(Some((step, trial, trial_cost)));
        }
        step *= options.backtracking_factor;
    }
    Ok(None)
}

/// Trajectory-matching objective: the weighted output-error cost with its
/// adjoint gradient, plus an optional stability penalty on the reduced
/// linear operator.
pub struct TrajectoryObjective<'a> {
    pub data: &'a [Trajectory],
    pub output_matrix: &'a DMatrix<f64>,
    pub substeps: usize,
    pub penalty: Option<PenaltySpec>,
}

impl TrajectoryObjective<'_> {
    fn cost_options(&self, horizon: Option<f64>) -> CostOptions {
        CostOptions { substeps: self.substeps, horizon }
    }

    fn penalty_value_and_grad(&self, a: &DMatrix<f64>) -> Result<Option<(f64, DMatrix<f64>)>> {
        match &self.penalty {
            None => Ok(None),
            Some(spec) => match stability_penalty(a, spec) {
                Ok(pair) => Ok(Some(pair)),
                Err(e) if e.is_numerical() => Ok(Some((f64::INFINITY, DMatrix::zeros(a.nrows(), a.ncols())))),
                Err(e) => Err(e),
            },
        }
    }
}

impl Objective for TrajectoryObjective<'_> {
    fn cost(&self, point: &ModelPoint, horizon: Option<f64>) -> Result<f64> {
        let report = evaluate_cost(
            point.phi(),
            point.psi(),
            &point.rom,
            self.output_matrix,
            self.data,
            &self.cost_options(horizon),
        )?;
        let mut total = report.total;
        if let Some((value, _)) = self.penalty_value_and_grad(&point.rom.a)? {
            total += value;
        }
        Ok(total)
    }

    fn cost_and_gradient(
        &self,
        point: &ModelPoint,
        horizon: Option<f64>,
    ) -> Result<(f64, Option<TangentVector>)> {
        let (report, grad) = euclidean_gradient(
            point.phi(),
            point.psi(),
            &point.rom,
            self.output_matrix,
            self.data,
            &self.cost_options(horizon),
        )?;
        let mut total = report.total;
        let mut grad = match grad {
            Some(g) => g,
            None => return Ok((f64::INFINITY, None)),
        };
        if let Some((value, da)) = self.penalty_value_and_grad(&point.rom.a)? {
            if !value.is_finite() {
                return Ok((f64::INFINITY, None));
            }
            total += value;
            grad.da += da;
        }
        Ok((total, Some(grad)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{compute_pod, petrov_galerkin_project, snapshot_matrix};
    use crate::dynamics::{PolynomialRom, ProjectionPair};
    use crate::manifolds::{random_orthonormal, GrassmannPoint, StiefelPoint};
    use crate::rng::SplitMix64;
    use crate::systems::{generate_dataset, BenchmarkSpec, Protocol};
    use crate::tensor::{Tensor3, Tensor4};
    use nalgebra::DMatrix;

    fn assert_same_bits(a: &DMatrix<f64>, b: &DMatrix<f64>) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    fn random_rom(rng: &mut SplitMix64, r: usize, m: usize, scale: f64) -> PolynomialRom {
        let a = DMatrix::from_fn(r, r, |_, _| scale * rng.normal());
        let b = DMatrix::from_fn(r, m, |_, _| scale * rng.normal());
        let mut h = Tensor3::zeros(r, r, r);
        for v in h.data_mut() {
            *v = scale * rng.normal();
        }
        let mut g = Tensor4::zeros(r, r, r, r);
        for v in g.data_mut() {
            *v = scale * rng.normal();
        }
        PolynomialRom::new(a, b, Some(h), Some(g)).unwrap()
    }

    fn random_point(seed: u64, n: usize, r: usize, m: usize) -> ModelPoint {
        let mut rng = SplitMix64::new(seed);
        let phi = random_orthonormal(n, r, &mut rng);
        let psi = random_orthonormal(n, r, &mut rng);
        let rom = random_rom(&mut rng, r, m, 0.4);
        ModelPoint::new(GrassmannPoint::new(phi).unwrap(), StiefelPoint::new(psi).unwrap(), rom)
            .unwrap()
    }

    /// `J = |rom - target|^2` over the Euclidean blocks; ignores the bases.
    struct Bowl {
        target: PolynomialRom,
    }

    impl Bowl {
        fn residual(&self, point: &ModelPoint) -> TangentVector {
            let mut v = TangentVector::zeros_like(point);
            v.da = &point.rom.a - &self.target.a;
            v.db = &point.rom.b - &self.target.b;
            if let (Some(d), Some(h), Some(t)) = (&mut v.dh, &point.rom.h, &self.target.h) {
                d.axpy(1.0, h);
                d.axpy(-1.0, t);
            }
            if let (Some(d), Some(g), Some(t)) = (&mut v.dg, &point.rom.g, &self.target.g) {
                d.axpy(1.0, g);
                d.axpy(-1.0, t);
            }
            v
        }
    }

    impl Objective for Bowl {
        fn cost(&self, point: &ModelPoint, _horizon: Option<f64>) -> Result<f64> {
            let r = self.residual(point);
            Ok(product_inner(&r, &r))
        }

        fn cost_and_gradient(
            &self,
            point: &ModelPoint,
            _horizon: Option<f64>,
        ) -> Result<(f64, Option<TangentVector>)> {
            let mut r = self.residual(point);
            let cost = product_inner(&r, &r);
            r.scale_mut(2.0);
            Ok((cost, Some(r)))
        }
    }

    /// Checks the sufficient-decrease inequality on every accepted step of
    /// every phase, exactly as the optimizer enforced it.
    fn assert_armijo(log: &[IterationRecord], c: f64) {
        for w in log.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if next.phase != prev.phase || next.iteration == 0 {
                continue;
            }
            assert!(
                next.cost <= prev.cost - c * next.step_size * prev.grad_norm * prev.grad_norm,
                "Armijo violated: {} -> {} with step {} grad {}",
                prev.cost,
                next.cost,
                next.step_size,
                prev.grad_norm
            );
        }
    }

    #[test]
    fn quadratic_bowl_reaches_analytic_minimum() {
        let x0 = random_point(11, 5, 2, 1);
        let mut rng = SplitMix64::new(12);
        let bowl = Bowl { target: random_rom(&mut rng, 2, 1, 0.7) };
        let opts = OptimOptions { max_iterations: 50, gradient_norm_tolerance: 1e-10, ..OptimOptions::default() };

        let out = riemannian_cg(&bowl, &x0, &opts, &BlockSelector::tensors()).unwrap();

        assert_eq!(out.reason, StopReason::GradientTolerance);
        assert!((&out.point.rom.a - &bowl.target.a).norm() <= 1e-8);
        assert!((&out.point.rom.b - &bowl.target.b).norm() <= 1e-8);
        let dh = {
            let mut d = out.point.rom.h.clone().unwrap();
            d.axpy(-1.0, bowl.target.h.as_ref().unwrap());
            d.norm()
        };
        assert!(dh <= 1e-8);
        let dg = {
            let mut d = out.point.rom.g.clone().unwrap();
            d.axpy(-1.0, bowl.target.g.as_ref().unwrap());
            d.norm()
        };
        assert!(dg <= 1e-8);

        assert_same_bits(out.point.phi(), x0.phi());
        assert_same_bits(out.point.psi(), x0.psi());
        assert_armijo(&out.log, opts.sufficient_decrease);
        assert!(out.log.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    /// Minimizing `tr(Phi^T M Phi)` over the Grassmann block must land on the
    /// invariant subspace of the two smallest eigenvalues. The ground truth
    /// is the eigenbasis used to construct M.
    #[test]
    fn rayleigh_trace_finds_minimal_invariant_subspace() {
        let mut rng = SplitMix64::new(7);
        let v = random_orthonormal(6, 6, &mut rng);
        let eigenvalues = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&eigenvalues)) * v.transpose();

        let objective = move |point: &ModelPoint, _h: Option<f64>| -> Result<(f64, Option<TangentVector>)> {
            let cost = (point.phi().transpose() * &m * point.phi()).trace();
            let mut grad = TangentVector::zeros_like(point);
            grad.dphi = 2.0 * (&m * point.phi());
            Ok((cost, Some(grad)))
        };

        let x0 = {
            let mut rng = SplitMix64::new(21);
            let phi = random_orthonormal(6, 2, &mut rng);
            let rom = PolynomialRom::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), None, None).unwrap();
            ModelPoint::new(GrassmannPoint::new(phi.clone()).unwrap(), StiefelPoint::new(phi).unwrap(), rom)
                .unwrap()
        };
        // Near the minimizer the cost sits at the resolution floor of f64
        // (the decrease per step falls below one ulp of the trace), so a
        // cost-comparison line search cannot push the gradient much below
        // 1e-7 on this problem; the subspace angle is quadratically closer.
        let opts = OptimOptions { max_iterations: 500, gradient_norm_tolerance: 1e-7, ..OptimOptions::default() };
        let selector = BlockSelector { phi: true, ..BlockSelector::none() };

        let out = riemannian_cg(&objective, &x0, &opts, &selector).unwrap();

        assert_eq!(out.reason, StopReason::GradientTolerance);
        assert!((out.cost - 3.0).abs() <= 1e-9, "trace {} should approach 1 + 2", out.cost);
        let overlap = v.columns(0, 2).transpose() * out.point.phi();
        let sigma = overlap.svd(false, false).singular_values;
        let angle = sigma.min().min(1.0).acos();
        assert!(angle <= 1e-6, "subspace angle {angle} too large");

        assert_same_bits(out.point.psi(), x0.psi());
        assert_same_bits(&out.point.rom.a, &x0.rom.a);
        assert_same_bits(&out.point.rom.b, &x0.rom.b);
        assert_armijo(&out.log, opts.sufficient_decrease);

        let again = riemannian_cg(&objective, &x0, &opts, &selector).unwrap();
        assert_eq!(again.log, out.log);
        assert_same_bits(again.point.phi(), out.point.phi());
    }

    #[test]
    fn toy_training_descends_from_galerkin_start() {
        let spec = BenchmarkSpec::toy_default();
        let data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
        let system = spec.build().unwrap();

        let snaps = snapshot_matrix(&data.trajectories, true).unwrap();
        let pod = compute_pod(&snaps, 2).unwrap();
        let pair = ProjectionPair::new(pod.modes.clone(), pod.modes.clone()).unwrap();
        let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
        let x0 = ModelPoint::new(
            GrassmannPoint::new(pod.modes.clone()).unwrap(),
            StiefelPoint::new(pod.modes.clone()).unwrap(),
            rom,
        )
        .unwrap();

        let objective = TrajectoryObjective {
            data: &data.trajectories,
            output_matrix: system.output_matrix(),
            substeps: 16,
            penalty: None,
        };
        let opts = OptimOptions { max_iterations: 30, gradient_norm_tolerance: 1e-12, ..OptimOptions::default() };
        let out = riemannian_cg(&objective, &x0, &opts, &BlockSelector::all()).unwrap();

        let initial = out.log[0].cost;
        assert!(initial.is_finite() && initial > 0.0);
        assert!(out.cost < 0.7 * initial, "cost {} barely moved from {}", out.cost, initial);
        assert!(out.log.windows(2).all(|w| w[1].cost <= w[0].cost));
        assert_armijo(&out.log, opts.sufficient_decrease);
    }

    #[test]
    fn invalid_options_and_selectors_are_rejected() {
        let x0 = random_point(31, 4, 2, 1);
        let bowl = Bowl { target: x0.rom.clone() };

        let bad = |opts: OptimOptions| {
            riemannian_cg(&bowl, &x0, &opts, &BlockSelector::tensors()).unwrap_err()
        };
        assert!(matches!(
            bad(OptimOptions { gradient_norm_tolerance: 0.0, ..OptimOptions::default() }),
            Error::Config(_)
        ));
        assert!(matches!(
            bad(OptimOptions { backtracking_factor: 1.0, ..OptimOptions::default() }),
            Error::Config(_)
        ));
        assert!(matches!(
            bad(OptimOptions { sufficient_decrease: 0.0, ..OptimOptions::default() }),
            Error::Config(_)
        ));
        assert!(matches!(
            riemannian_cg(&bowl, &x0, &OptimOptions::default(), &BlockSelector::none()).unwrap_err(),
            Error::Config(_)
        ));
        assert!(matches!(
            coordinate_descent(&bowl, &x0, &[]).unwrap_err(),
            Error::Config(_)
        ));
        let empty_phase = Phase {
            selector: BlockSelector::none(),
            options: OptimOptions::default(),
            horizon: None,
        };
        assert!(matches!(
            coordinate_descent(&bowl, &x0, &[empty_phase]).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn non_finite_start_aborts_with_diagnostic() {
        let x0 = random_point(41, 4, 2, 1);
        let objective = |_p: &ModelPoint, _h: Option<f64>| -> Result<(f64, Option<TangentVector>)> {
            Ok((f64::INFINITY, None))
        };
        let err = riemannian_cg(&objective, &x0, &OptimOptions::default(), &BlockSelector::all())
            .unwrap_err();
        assert!(matches!(err, Error::Optim(_)));

        // The same objective as the sole schedule phase is also a hard error.
        let phase = Phase {
            selector: BlockSelector::all(),
            options: OptimOptions::default(),
            horizon: None,
        };
        let err = coordinate_descent(&objective, &x0, &[phase]).unwrap_err();
        assert!(matches!(err, Error::Optim(_)));
    }

    #[test]
    fn schedule_keeps_progress_when_wider_horizon_diverges() {
        let x0 = random_point(43, 4, 2, 1);
        let mut rng = SplitMix64::new(44);
        let target = random_rom(&mut rng, 2, 1, 0.5);
        let bowl = Bowl { target };
        // Finite bowl below horizon 1, non-finite above it.
        let objective = move |p: &ModelPoint, h: Option<f64>| {
            if h.map_or(true, |h| h > 1.0) {
                Ok((f64::INFINITY, None))
            } else {
                bowl.cost_and_gradient(p, h)
            }
        };
        let opts = OptimOptions { max_iterations: 10, ..OptimOptions::default() };
        let schedule = [
            Phase { selector: BlockSelector::tensors(), options: opts.clone(), horizon: Some(0.5) },
            Phase { selector: BlockSelector::tensors(), options: opts, horizon: Some(2.0) },
        ];
        let outcome = coordinate_descent(&objective, &x0, &schedule).unwrap();
        assert_eq!(outcome.reason, StopReason::NonFiniteStart);
        assert!(outcome.cost.is_infinite());
        // Progress from the first phase is kept: the log holds its rows plus
        // the single non-finite row of the aborted phase.
        let phase0_rows = outcome.log.iter().filter(|r| r.phase == 0).count();
        assert!(phase0_rows > 1);
        assert_eq!(outcome.log.iter().filter(|r| r.phase == 1).count(), 1);
        assert!(outcome.log.last().unwrap().cost.is_infinite());
        // The returned point is the first phase's end point, which the bowl
        // accepts at the narrow horizon.
        let narrow = objective.cost(&outcome.point, Some(0.5)).unwrap();
        let initial = objective.cost(&x0, Some(0.5)).unwrap();
        assert!(narrow < initial);
    }

    #[test]
    fn single_phase_schedule_matches_plain_cg() {
        let x0 = random_point(51, 5, 2, 1);
        let mut rng = SplitMix64::new(52);
        let bowl = Bowl { target: random_rom(&mut rng, 2, 1, 0.5) };
        let opts = OptimOptions { max_iterations: 30, gradient_norm_tolerance: 1e-10, ..OptimOptions::default() };
        let selector = BlockSelector::tensors();

        let plain = riemannian_cg(&bowl, &x0, &opts, &selector).unwrap();
        let phased = coordinate_descent(
            &bowl,
            &x0,
            &[Phase { selector, options: opts.clone(), horizon: None }],
        )
        .unwrap();

        assert_eq!(plain.log, phased.log);
        assert_eq!(plain.reason, phased.reason);
        assert_same_bits(&plain.point.rom.a, &phased.point.rom.a);
        assert_same_bits(&plain.point.rom.b, &phased.point.rom.b);
        assert_same_bits(plain.point.phi(), phased.point.phi());
    }

    #[test]
    fn coordinate_descent_moves_blocks_in_phase_order() {
        let x0 = random_point(61, 5, 2, 1);
        let mut rng = SplitMix64::new(62);
        let bowl = Bowl { target: random_rom(&mut rng, 2, 1, 0.5) };
        let opts = OptimOptions { max_iterations: 40, gradient_norm_tolerance: 1e-10, ..OptimOptions::default() };
        let schedule = [
            Phase { selector: BlockSelector::only_a(), options: opts.clone(), horizon: None },
            Phase {
                selector: BlockSelector { b: true, ..BlockSelector::none() },
                options: opts,
                horizon: None,
            },
        ];

        let out = coordinate_descent(&bowl, &x0, &schedule).unwrap();

        assert!((&out.point.rom.a - &bowl.target.a).norm() <= 1e-8);
        assert!((&out.point.rom.b - &bowl.target.b).norm() <= 1e-8);
        // Blocks outside both phases never move.
        let mut dh = out.point.rom.h.clone().unwrap();
        dh.axpy(-1.0, x0.rom.h.as_ref().unwrap());
        assert!(dh.is_zero());
        assert_same_bits(out.point.phi(), x0.phi());

        // The second phase starts exactly where the first ended.
        let boundary: Vec<_> = out.log.iter().filter(|r| r.phase == 1 && r.iteration == 0).collect();
        let phase0_last = out.log.iter().filter(|r| r.phase == 0).last().unwrap();
        assert_eq!(boundary.len(), 1);
        assert_eq!(boundary[0].cost, phase0_last.cost);
        assert!(out.cost <= out.log[0].cost);
    }

    #[test]
    fn progressive_schedule_validates_and_expands() {
        let opts = OptimOptions::default();
        let base = [(BlockSelector::tensors(), opts.clone()), (BlockSelector::bases(), opts.clone())];

        let schedule = progressive_schedule(&[2.5, 5.0, 10.0], 10.0, &base).unwrap();
        assert_eq!(schedule.len(), 6);
        let horizons: Vec<f64> = schedule.iter().map(|p| p.horizon.unwrap()).collect();
        assert_eq!(horizons, vec![2.5, 2.5, 5.0, 5.0, 10.0, 10.0]);
        assert!(schedule[0].selector == BlockSelector::tensors());
        assert!(schedule[1].selector == BlockSelector::bases());

        assert!(progressive_schedule(&[], 10.0, &base).is_err());
        assert!(progressive_schedule(&[5.0, 5.0], 10.0, &base).is_err());
        assert!(progressive_schedule(&[5.0, 3.0], 10.0, &base).is_err());
        assert!(progressive_schedule(&[5.0, 12.0], 10.0, &base).is_err());
        assert!(progressive_schedule(&[-1.0, 5.0], 10.0, &base).is_err());
        assert!(progressive_schedule(&[5.0], 10.0, &[]).is_err());
    }

    #[test]
    fn full_horizon_phase_matches_unrestricted_training() {
        let spec = BenchmarkSpec::toy_default();
        let data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
        let system = spec.build().unwrap();
        let t_max = *data.trajectories[0].times.last().unwrap();

        let snaps = snapshot_matrix(&data.trajectories, true).unwrap();
        let pod = compute_pod(&snaps, 2).unwrap();
        let pair = ProjectionPair::new(pod.modes.clone(), pod.modes.clone()).unwrap();
        let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
        let x0 = ModelPoint::new(
            GrassmannPoint::new(pod.modes.clone()).unwrap(),
            StiefelPoint::new(pod.modes.clone()).unwrap(),
            rom,
        )
        .unwrap();
        let objective = TrajectoryObjective {
            data: &data.trajectories,
            output_matrix: system.output_matrix(),
            substeps: 12,
            penalty: None,
        };
        let opts = OptimOptions { max_iterations: 6, gradient_norm_tolerance: 1e-12, ..OptimOptions::default() };

        let plain = riemannian_cg(&objective, &x0, &opts, &BlockSelector::all()).unwrap();
        let schedule = progressive_schedule(&[t_max], t_max, &[(BlockSelector::all(), opts)]).unwrap();
        let phased = coordinate_descent(&objective, &x0, &schedule).unwrap();

        assert_eq!(plain.log.len(), phased.log.len());
        for (a, b) in plain.log.iter().zip(phased.log.iter()) {
            assert_eq!(a.cost.to_bits(), b.cost.to_bits());
            assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
            assert_eq!(a.step_size.to_bits(), b.step_size.to_bits());
        }
        assert_same_bits(plain.point.phi(), phased.point.phi());
        assert_same_bits(&plain.point.rom.a, &phased.point.rom.a);
    }

    #[test]
    fn iteration_log_renders_as_csv() {
        let records = [
            IterationRecord { iteration: 0, cost: 2.5, grad_norm: 1.0, step_size: 0.0, phase: 0 },
            IterationRecord { iteration: 1, cost: 1.25, grad_norm: 0.5, step_size: 0.125, phase: 0 },
        ];
        let csv = log_to_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,cost,grad_norm,step_size,phase"));
        assert_eq!(lines.next(), Some("0,2.5,1,0,0"));
        assert_eq!(lines.next(), Some("1,1.25,0.5,0.125,0"));
        assert_eq!(lines.next(), None);
    }
}
