//! Model evaluation: normalized output-error traces across a dataset and
//! their CSV rendering. Simulation here is divergence-tolerant; once a model
//! leaves the finite range on a trajectory, every later sample reports +inf
//! instead of aborting the whole table.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use nitrom::dynamics::{PolynomialRom, Trajectory};
use nitrom::error::{Error, Result};
use nitrom::manifolds::ModelPoint;
use nitrom::systems::GeneratedData;

/// A model ready to run: the reduced operators, the encoder `Psi`, and the
/// reduced output map `C_r`, under a display label.
pub struct EvaluationModel {
    pub label: String,
    pub rom: PolynomialRom,
    pub psi: DMatrix<f64>,
    pub c_r: DMatrix<f64>,
}

impl EvaluationModel {
    pub fn from_point(label: String, point: &ModelPoint, c_r: DMatrix<f64>) -> Self {
        Self { label, rom: point.rom.clone(), psi: point.psi().clone(), c_r }
    }
}

/// The error trace table: `errors[model][sample]` is the trajectory-averaged
/// normalized squared output error at `times[sample]`.
pub struct EvaluationTable {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub errors: Vec<Vec<f64>>,
    /// Time average of each trace (mean over samples; +inf propagates).
    pub averages: Vec<f64>,
}

/// Integrates the reduced model over the trajectory's sample grid and
/// returns predicted outputs; columns from the first non-finite state
/// onward are +inf.
pub fn predict_outputs(
    rom: &PolynomialRom,
    psi: &DMatrix<f64>,
    c_r: &DMatrix<f64>,
    traj: &Trajectory,
    substeps: usize,
) -> DMatrix<f64> {
    let num = traj.times.len();
    let p = c_r.nrows();
    let mut outputs = DMatrix::zeros(p, num);
    let mut z = psi.transpose() * &traj.x0;
    let m = rom.input_dim();
    let mut u = DVector::zeros(m);
    let mut k1 = DVector::zeros(rom.dim());
    let mut k2 = DVector::zeros(rom.dim());
    let mut k3 = DVector::zeros(rom.dim());
    let mut k4 = DVector::zeros(rom.dim());
    let mut diverged = false;

    let record = |i: usize, z: &DVector<f64>, outputs: &mut DMatrix<f64>| {
        let y = c_r * z;
        outputs.set_column(i, &y);
    };
    record(0, &z, &mut outputs);

    for i in 0..num - 1 {
        if diverged {
            outputs.column_mut(i + 1).fill(f64::INFINITY);
            continue;
        }
        let h = (traj.times[i + 1] - traj.times[i]) / substeps as f64;
        for s in 0..substeps {
            let t = traj.times[i] + s as f64 * h;
            traj.input.eval(t, &mut u);
            rom.rhs(&z, &u, &mut k1);
            let half = &z + 0.5 * h * &k1;
            traj.input.eval(t + 0.5 * h, &mut u);
            rom.rhs(&half, &u, &mut k2);
            let half = &z + 0.5 * h * &k2;
            rom.rhs(&half, &u, &mut k3);
            let full = &z + h * &k3;
            traj.input.eval(t + h, &mut u);
            rom.rhs(&full, &u, &mut k4);
            z += h / 6.0 * (&k1 + 2.0 * &k2 + 2.0 * &k3 + &k4);
            if !z.iter().all(|v| v.is_finite()) {
                diverged = true;
                break;
            }
        }
        if diverged {
            outputs.column_mut(i + 1).fill(f64::INFINITY);
        } else {
            record(i + 1, &z, &mut outputs);
        }
    }
    outputs
}

/// Error trace of one model over the dataset:
/// `e(t_i) = (1/N_traj) Σ_j (1/α_j) ‖y_j(t_i) − ŷ_j(t_i)‖²`.
pub fn error_trace(model: &EvaluationModel, data: &GeneratedData, substeps: usize) -> Result<Vec<f64>> {
    let times = &data.trajectories[0].times;
    for traj in &data.trajectories {
        if traj.times != *times {
            return Err(Error::Data(
                "error traces need a common sample grid across trajectories".into(),
            ));
        }
        if traj.x0.len() != model.psi.nrows() {
            return Err(Error::Dimension(
                "model state dimension disagrees with the dataset".into(),
            ));
        }
        if traj.outputs.nrows() != model.c_r.nrows() {
            return Err(Error::Dimension(
                "model output dimension disagrees with the dataset".into(),
            ));
        }
        if !(traj.alpha > 0.0) {
            return Err(Error::Data("trajectory weight must be positive".into()));
        }
    }

    let per_traj: Vec<Vec<f64>> = data
        .trajectories
        .par_iter()
        .map(|traj| {
            let pred = predict_outputs(&model.rom, &model.psi, &model.c_r, traj, substeps);
            (0..times.len())
                .map(|i| {
                    let mut sq = 0.0;
                    for (a, b) in traj.outputs.column(i).iter().zip(pred.column(i).iter()) {
                        let d = a - b;
                        sq += d * d;
                    }
                    sq / traj.alpha
                })
                .collect()
        })
        .collect();

    let n_traj = data.trajectories.len() as f64;
    Ok((0..times.len())
        .map(|i| per_traj.iter().map(|e| e[i]).sum::<f64>() / n_traj)
        .collect())
}

pub fn evaluate_models(
    models: &[EvaluationModel],
    data: &GeneratedData,
) -> Result<EvaluationTable> {
    if models.is_empty() {
        return Err(Error::Config("need at least one model to evaluate".into()));
    }
    if data.trajectories.is_empty() {
        return Err(Error::Data("dataset holds no trajectories".into()));
    }
    let times = data.trajectories[0].times.clone();
    if times.len() < 2 {
        return Err(Error::Data("trajectories need at least two samples".into()));
    }
    let spacing = times[1] - times[0];
    let substeps = (spacing / data.benchmark.dt()).ceil().max(1.0) as usize;

    let mut errors = Vec::with_capacity(models.len());
    for model in models {
        errors.push(error_trace(model, data, substeps)?);
    }
    let averages = errors
        .iter()
        .map(|trace| trace.iter().sum::<f64>() / trace.len() as f64)
        .collect();
    Ok(EvaluationTable {
        times,
        labels: models.iter().map(|m| m.label.clone()).collect(),
        errors,
        averages,
    })
}

/// Measured and predicted output traces, grouped per trajectory: columns
/// `t`, then for trajectory j the measured `y{j}_{c}` components followed by
/// each model's `{label}_y{j}_{c}` predictions.
pub fn predictions_csv(models: &[EvaluationModel], data: &GeneratedData) -> Result<String> {
    if models.is_empty() {
        return Err(Error::Config("need at least one model".into()));
    }
    if data.trajectories.is_empty() {
        return Err(Error::Data("dataset holds no trajectories".into()));
    }
    let times = &data.trajectories[0].times;
    if times.len() < 2 {
        return Err(Error::Data("trajectories need at least two samples".into()));
    }
    for traj in &data.trajectories {
        if traj.times != *times {
            return Err(Error::Data(
                "output traces need a common sample grid across trajectories".into(),
            ));
        }
    }
    let spacing = times[1] - times[0];
    let substeps = (spacing / data.benchmark.dt()).ceil().max(1.0) as usize;
    let p = data.trajectories[0].outputs.nrows();
    let n = data.trajectories[0].x0.len();
    for model in models {
        if model.c_r.nrows() != p || model.psi.nrows() != n {
            return Err(Error::Dimension(
                "model dimensions disagree with the dataset".into(),
            ));
        }
    }

    let mut header = String::from("t");
    let mut columns: Vec<&DMatrix<f64>> = Vec::new();
    let mut predicted: Vec<Vec<DMatrix<f64>>> = Vec::new();
    for model in models {
        let per_traj: Vec<DMatrix<f64>> = data
            .trajectories
            .par_iter()
            .map(|traj| predict_outputs(&model.rom, &model.psi, &model.c_r, traj, substeps))
            .collect();
        predicted.push(per_traj);
    }
    for (j, traj) in data.trajectories.iter().enumerate() {
        for c in 0..p {
            header.push_str(&format!(",y{j}_{c}"));
        }
        columns.push(&traj.outputs);
        for (model, per_traj) in models.iter().zip(&predicted) {
            for c in 0..p {
                header.push_str(&format!(",{}_y{j}_{c}", sanitize_label(&model.label)));
            }
            columns.push(&per_traj[j]);
        }
    }
    header.push('\n');

    let mut out = header;
    for i in 0..times.len() {
        out.push_str(&csv_float(times[i]));
        for block in &columns {
            for c in 0..p {
                out.push(',');
                out.push_str(&csv_float(block[(c, i)]));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn csv_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Renders the table with one column per model and a trailing summary row
/// of time-averaged errors (LF line endings).
pub fn evaluation_csv(table: &EvaluationTable) -> String {
    let mut out = String::from("t");
    for label in &table.labels {
        out.push(',');
        out.push_str(&sanitize_label(label));
    }
    out.push('\n');
    for (i, t) in table.times.iter().enumerate() {
        out.push_str(&csv_float(*t));
        for trace in &table.errors {
            out.push(',');
            out.push_str(&csv_float(trace[i]));
        }
        out.push('\n');
    }
    out.push_str("average");
    for avg in &table.averages {
        out.push(',');
        out.push_str(&csv_float(*avg));
    }
    out.push('\n');
    out
}

/// Keeps labels CSV-safe without quoting: commas, quotes and line breaks
/// become underscores.
fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c == ',' || c == '"' || c == '\n' || c == '\r' { '_' } else { c })
        .collect()
}
