//! Scratch measurements for picking acceptance-test parameters.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nitrom::baselines::{compute_pod, petrov_galerkin_project, snapshot_matrix};
use nitrom::dynamics::{simulate_rom, InputSignal, ProjectionPair, SampleGrid};
use nitrom::optim::{riemannian_cg, BlockSelector, OptimOptions, TrajectoryObjective};
use nitrom::systems::{generate_dataset, BenchmarkSpec, Protocol};
use nitrom::trainer::{initialize, train, InitMode, TrainingConfig};
use nitrom::PolyOrder;
use nitrom_cli::metrics::{evaluate_models, EvaluationModel};

fn toy_config(init: InitMode, lambda: f64) -> TrainingConfig {
    TrainingConfig {
        benchmark: BenchmarkSpec::toy_default(),
        r: 2,
        order: PolyOrder::Quadratic,
        init,
        opinf_lambda: lambda,
        optimizer: Default::default(),
        alternations: 1,
        horizons: Vec::new(),
        penalty: None,
        preprojection_rank: 0,
        substeps: None,
    }
}

fn c5() {
    let t0 = Instant::now();
    let spec = BenchmarkSpec::toy_default();
    let train_data = generate_dataset(&spec, &Protocol::toy_train()).unwrap();
    let system = spec.build().unwrap();
    let c = system.output_matrix().clone();

    let galerkin = initialize(&toy_config(InitMode::PodGalerkin, 0.0), &train_data.trajectories, Some(system.as_ref())).unwrap();
    let opinf = initialize(&toy_config(InitMode::PodOpinf, 1e-6), &train_data.trajectories, Some(system.as_ref())).unwrap();

    let spacing = train_data.trajectories[0].times[1] - train_data.trajectories[0].times[0];
    let substeps = (spacing / spec.dt()).ceil() as usize;
    let objective = TrajectoryObjective {
        data: &train_data.trajectories,
        output_matrix: &c,
        substeps,
        penalty: None,
    };
    let options = OptimOptions {
        max_iterations: 500,
        gradient_norm_tolerance: 1e-6,
        ..Default::default()
    };
    let outcome = riemannian_cg(&objective, &galerkin, &options, &BlockSelector::all()).unwrap();
    println!(
        "c5 train: {} iters, cost {} -> {}, |g| {}, reason {:?}, {:?}",
        outcome.log.last().unwrap().iteration,
        outcome.log[0].cost,
        outcome.cost,
        outcome.grad_norm,
        outcome.reason,
        t0.elapsed()
    );

    let test_data = generate_dataset(&spec, &Protocol::toy_test(2024, 100)).unwrap();
    let models = vec![
        EvaluationModel::from_point("nitrom".into(), &outcome.point, &c * outcome.point.pair().unwrap().decode_matrix()),
        EvaluationModel::from_point("pod-galerkin".into(), &galerkin, &c * galerkin.pair().unwrap().decode_matrix()),
        EvaluationModel::from_point("opinf".into(), &opinf, &c * opinf.pair().unwrap().decode_matrix()),
    ];
    let table = evaluate_models(&models, &test_data).unwrap();
    println!("c5 averages: nitrom {} pg {} opinf {}", table.averages[0], table.averages[1], table.averages[2]);
    println!(
        "c5 ratios: vs pg {} vs opinf {} ({:?} total)",
        table.averages[0] / table.averages[1],
        table.averages[0] / table.averages[2],
        t0.elapsed()
    );
}

fn c6() {
    let spec = BenchmarkSpec::toy_default();
    let system = spec.build().unwrap();
    let n = system.state_dim();
    let id = DMatrix::<f64>::identity(n, n);
    let pair = ProjectionPair::new(id.clone(), id).unwrap();
    let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
    let c = system.output_matrix().clone();

    for amp in [0.24, 0.26] {
        let times: Vec<f64> = (0..=400).map(|i| 0.5 * i as f64).collect();
        let grid = SampleGrid::new(times, 50).unwrap();
        let input = InputSignal::Step { amplitude: vec![amp], start: 0.0 };
        let x0 = DVector::zeros(n);
        match simulate_rom(&rom, &pair, &c, &x0, &input, &grid) {
            Ok(sim) => {
                let max = sim.z_samples.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
                println!("c6 amp {amp}: bounded, max |x| {max}");
            }
            Err(e) => println!("c6 amp {amp}: error {e}"),
        }
    }
}

fn c6b() {
    let spec = BenchmarkSpec::toy_default();
    let system = spec.build().unwrap();
    let n = system.state_dim();
    let id = DMatrix::<f64>::identity(n, n);
    let pair = ProjectionPair::new(id.clone(), id).unwrap();
    let rom = petrov_galerkin_project(system.as_ref(), &pair).unwrap();
    let c = system.output_matrix().clone();

    let _ = (&rom, &pair, &c);
    let t0 = Instant::now();
    let times: Vec<f64> = (0..=200).map(|i| 100.0 * i as f64).collect();
    let grid = SampleGrid::new(times, 1000).unwrap();
    let input = InputSignal::Step { amplitude: vec![0.26], start: 0.0 };
    let x0 = DVector::zeros(n);
    let mut u = DVector::zeros(1);
    let result = nitrom::dynamics::integrate(
        |t, x, out: &mut DVector<f64>| {
            input.eval(t, &mut u);
            system.rhs(x, &u, out);
        },
        &x0,
        &grid,
    );
    match result {
        Ok(samples) => {
            let max = samples.iter().flat_map(|x| x.iter()).fold(0.0f64, |a, &b| a.max(b.abs()));
            println!("c6b amp 0.26 over [0,20000]: bounded, max |x| {max} ({:?})", t0.elapsed());
        }
        Err(e) => println!("c6b amp 0.26 over [0,20000]: error `{e}` ({:?})", t0.elapsed()),
    }
}

fn c9() {
    use nitrom::adjoint::{stability_penalty, PenaltySpec};
    use nitrom::manifolds::{GrassmannPoint, ModelPoint, StiefelPoint, TangentVector};
    use nitrom::rng::SplitMix64;
    use nitrom::PolynomialRom;

    let t0 = Instant::now();
    let r = 5;
    let mut rng = SplitMix64::new(4242);
    let q = nitrom::manifolds::random_orthonormal(r, r, &mut rng);
    let mut lambda = DMatrix::<f64>::zeros(r, r);
    lambda[(0, 0)] = 0.02;
    lambda[(1, 1)] = 0.02;
    lambda[(0, 1)] = 1.0;
    lambda[(1, 0)] = -1.0;
    lambda[(2, 2)] = -0.5;
    lambda[(3, 3)] = -1.0;
    lambda[(4, 4)] = -1.5;
    let a0 = &q * lambda * q.transpose();
    let max_re0 = a0.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    println!("c9 initial max Re eig = {max_re0}");

    let rom = PolynomialRom::new(a0, DMatrix::zeros(r, 0), None, None).unwrap();
    let id = DMatrix::<f64>::identity(r, r);
    let point = ModelPoint::new(
        GrassmannPoint::new(id.clone()).unwrap(),
        StiefelPoint::new(id).unwrap(),
        rom,
    )
    .unwrap();

    let raw = DVector::from_fn(r, |_, _| rng.normal());
    let z0 = &raw / raw.norm();
    let spec = PenaltySpec::new(1e-3, 100.0, z0);
    let objective = move |p: &ModelPoint, _h: Option<f64>| {
        let (value, grad_a) = stability_penalty(&p.rom.a, &spec)?;
        let mut tangent = TangentVector::zeros_like(p);
        tangent.da = grad_a;
        Ok((value, Some(tangent)))
    };
    let options = OptimOptions { max_iterations: 200, gradient_norm_tolerance: 1e-12, ..Default::default() };
    let outcome = riemannian_cg(&objective, &point, &options, &BlockSelector::only_a()).unwrap();
    let max_re = outcome.point.rom.a.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "c9: {} iters, cost {} -> {}, reason {:?}, final max Re eig = {max_re}, {:?}",
        outcome.log.last().unwrap().iteration,
        outcome.log[0].cost,
        outcome.cost,
        outcome.reason,
        t0.elapsed()
    );
}

fn c7() {
    let t0 = Instant::now();
    let spec = BenchmarkSpec::cgl_full();
    let system = spec.build().unwrap();
    let a = system.linear_matrix();
    let eigs = a.complex_eigenvalues();
    let max_re = eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    println!("c7 max Re eig(A) = {max_re} ({:?})", t0.elapsed());

    let data = generate_dataset(&spec, &Protocol::cgl_train_full()).unwrap();
    for (j, traj) in data.trajectories.iter().enumerate() {
        let states = traj.states.as_ref().unwrap();
        let energy: Vec<f64> = (0..states.ncols()).map(|i| states.column(i).norm_squared()).collect();
        let peak = energy.iter().cloned().fold(0.0f64, f64::max);
        let peak_at = energy.iter().position(|&e| e == peak).unwrap();
        println!(
            "c7 traj {j}: E(0) {:.3e} E(t1={:.3}) {:.3e} peak {:.3e} at t {:.1} ratio {:.1}",
            energy[0],
            traj.times[1],
            energy[1],
            peak,
            traj.times[peak_at],
            peak / energy[1]
        );
    }
    let stack = snapshot_matrix(&data.trajectories, false).unwrap();
    let pod = compute_pod(&stack, 5).unwrap();
    println!("c7 pod r=5 energy fraction {} ({:?} total)", pod.energy_fraction, t0.elapsed());
}

fn c8(schedule: &str) {
    let t0 = Instant::now();
    let spec = BenchmarkSpec::cgl_ci();
    let train_data = generate_dataset(&spec, &Protocol::cgl_train_ci()).unwrap();
    let system = spec.build().unwrap();
    let c = system.output_matrix().clone();

    let base = TrainingConfig {
        benchmark: spec.clone(),
        r: 5,
        order: PolyOrder::Cubic,
        init: InitMode::PodOpinf,
        opinf_lambda: 1e9,
        optimizer: Default::default(),
        alternations: 1,
        horizons: Vec::new(),
        penalty: None,
        preprojection_rank: 0,
        substeps: None,
    };
    let pg = initialize(
        &TrainingConfig { init: InitMode::PodGalerkin, ..base.clone() },
        &train_data.trajectories,
        Some(system.as_ref()),
    )
    .unwrap();
    let opinf = initialize(&base, &train_data.trajectories, Some(system.as_ref())).unwrap();

    let config = match schedule {
        "a3x50" => TrainingConfig {
            alternations: 3,
            optimizer: OptimOptions { max_iterations: 50, ..Default::default() },
            ..base.clone()
        },
        "a1x150" => TrainingConfig {
            alternations: 1,
            optimizer: OptimOptions { max_iterations: 150, ..Default::default() },
            ..base.clone()
        },
        "h2a1x75" => TrainingConfig {
            alternations: 1,
            horizons: vec![75.0, 150.0],
            optimizer: OptimOptions { max_iterations: 75, ..Default::default() },
            ..base.clone()
        },
        other => panic!("unknown schedule {other}"),
    };
    let (nitrom, log) = train(&config, &train_data).unwrap();
    let accepted = log.records.iter().filter(|r| r.iteration > 0).count();
    println!(
        "c8 [{schedule}]: {} accepted iters, cost {} -> {}, stop {:?}, unstable {}, {:?}",
        accepted, log.initial_cost, log.final_cost, log.stop, log.unstable, t0.elapsed()
    );

    let test_data = generate_dataset(&spec, &Protocol::cgl_test_ci(77, 20)).unwrap();
    let models = vec![
        EvaluationModel::from_point("nitrom".into(), &nitrom, &c * nitrom.pair().unwrap().decode_matrix()),
        EvaluationModel::from_point("pod-galerkin".into(), &pg, &c * pg.pair().unwrap().decode_matrix()),
        EvaluationModel::from_point("opinf".into(), &opinf, &c * opinf.pair().unwrap().decode_matrix()),
    ];
    let table = evaluate_models(&models, &test_data).unwrap();
    println!(
        "c8 [{schedule}] averages: nitrom {} pg {} opinf {} ({:?} total)",
        table.averages[0], table.averages[1], table.averages[2], t0.elapsed()
    );
}

fn main() {
    let which: Vec<String> = std::env::args().skip(1).collect();
    for arg in which {
        match arg.as_str() {
            "c5" => c5(),
            "c6" => c6(),
            "c6b" => c6b(),
            "c9" => c9(),
            "c7" => c7(),
            s if s.starts_with("c8:") => c8(&s[3..]),
            other => eprintln!("unknown probe {other}"),
        }
    }
}
