//! Model and dataset persistence: UTF-8 JSON documents whose floats
//! round-trip bit-exactly (shortest decimal form that reparses to the same
//! bits), plus content hashing for provenance metadata.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nitrom::dynamics::{PolyOrder, PolynomialRom, Trajectory};
use nitrom::error::{Error, Result};
use nitrom::manifolds::{GrassmannPoint, ModelPoint, StiefelPoint};
use nitrom::systems::{BenchmarkSpec, GeneratedData, Protocol};
use nitrom::tensor::{Tensor3, Tensor4};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub config_hash: String,
    pub data_hash: String,
    /// Unix epoch seconds; honors SOURCE_DATE_EPOCH so reruns reproduce the
    /// file byte for byte (0 when neither clock source is usable).
    pub created: u64,
}

impl ModelMetadata {
    pub fn new(config_hash: String, data_hash: String) -> Self {
        let created = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        Self { config_hash, data_hash, created }
    }
}

/// On-disk reduced-order model: bases, reduced operators and the reduced
/// output map, stored as row-major nested lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub order: PolyOrder,
    #[serde(rename = "Phi")]
    pub phi: Vec<Vec<f64>>,
    #[serde(rename = "Psi")]
    pub psi: Vec<Vec<f64>>,
    #[serde(rename = "A_r")]
    pub a_r: Vec<Vec<f64>>,
    #[serde(rename = "B_r")]
    pub b_r: Vec<Vec<f64>>,
    #[serde(rename = "H_r")]
    pub h_r: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "G_r", default, skip_serializing_if = "Option::is_none")]
    pub g_r: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(rename = "C_r")]
    pub c_r: Vec<Vec<f64>>,
    pub metadata: ModelMetadata,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], label: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Data(format!("{label}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Data(format!("{label}: ragged or empty rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn tensor3_rows(t: &Tensor3) -> Vec<Vec<Vec<f64>>> {
    let [n0, n1, n2] = t.dims();
    (0..n0)
        .map(|i| (0..n1).map(|j| (0..n2).map(|k| t.get(i, j, k)).collect()).collect())
        .collect()
}

fn tensor3_from_rows(rows: &[Vec<Vec<f64>>], r: usize, label: &str) -> Result<Tensor3> {
    let mut t = Tensor3::zeros(r, r, r);
    if rows.len() != r {
        return Err(Error::Data(format!("{label}: expected {r} slices")));
    }
    for (i, slice) in rows.iter().enumerate() {
        if slice.len() != r || slice.iter().any(|row| row.len() != r) {
            return Err(Error::Data(format!("{label}: slice {i} has wrong shape")));
        }
        for (j, row) in slice.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                t.set(i, j, k, v);
            }
        }
    }
    Ok(t)
}

fn tensor4_rows(t: &Tensor4) -> Vec<Vec<Vec<Vec<f64>>>> {
    let [n0, n1, n2, n3] = t.dims();
    (0..n0)
        .map(|i| {
            (0..n1)
                .map(|j| {
                    (0..n2).map(|k| (0..n3).map(|l| t.get(i, j, k, l)).collect()).collect()
                })
                .collect()
        })
        .collect()
}

fn tensor4_from_rows(rows: &[Vec<Vec<Vec<f64>>>], r: usize, label: &str) -> Result<Tensor4> {
    let mut t = Tensor4::zeros(r, r, r, r);
    if rows.len() != r {
        return Err(Error::Data(format!("{label}: expected {r} blocks")));
    }
    for (i, block) in rows.iter().enumerate() {
        if block.len() != r {
            return Err(Error::Data(format!("{label}: block {i} has wrong shape")));
        }
        for (j, slice) in block.iter().enumerate() {
            if slice.len() != r || slice.iter().any(|row| row.len() != r) {
                return Err(Error::Data(format!("{label}: block {i},{j} has wrong shape")));
            }
            for (k, row) in slice.iter().enumerate() {
                for (l, &v) in row.iter().enumerate() {
                    t.set(i, j, k, l, v);
                }
            }
        }
    }
    Ok(t)
}

impl ModelFile {
    /// Packages a trained point together with the reduced output map
    /// `C_r = C · Phi (Psi^T Phi)^{-1}`.
    pub fn from_model(
        point: &ModelPoint,
        output_matrix: &DMatrix<f64>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        let pair = point.pair()?;
        let c_r = output_matrix * pair.decode_matrix();
        let r = point.reduced_dim();
        let rom = &point.rom;
        let h = match &rom.h {
            Some(t) => tensor3_rows(t),
            None => tensor3_rows(&Tensor3::zeros(r, r, r)),
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            n: point.full_dim(),
            r,
            m: rom.input_dim(),
            order: rom.order(),
            phi: matrix_rows(point.phi()),
            psi: matrix_rows(point.psi()),
            a_r: matrix_rows(&rom.a),
            b_r: matrix_rows(&rom.b),
            h_r: h,
            g_r: rom.g.as_ref().map(tensor4_rows),
            c_r: matrix_rows(&c_r),
            metadata,
        })
    }

    /// Rebuilds the model point and the reduced output map, re-validating
    /// every structural invariant.
    pub fn to_model(&self) -> Result<(ModelPoint, DMatrix<f64>)> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let phi = matrix_from_rows(&self.phi, "Phi")?;
        let psi = matrix_from_rows(&self.psi, "Psi")?;
        let a = matrix_from_rows(&self.a_r, "A_r")?;
        let b = matrix_from_rows(&self.b_r, "B_r")?;
        let c_r = matrix_from_rows(&self.c_r, "C_r")?;
        if phi.shape() != (self.n, self.r) || psi.shape() != (self.n, self.r) {
            return Err(Error::Dimension("basis shape disagrees with header".into()));
        }
        if a.shape() != (self.r, self.r) || b.shape() != (self.r, self.m) {
            return Err(Error::Dimension("operator shape disagrees with header".into()));
        }
        if c_r.ncols() != self.r {
            return Err(Error::Dimension("output map shape disagrees with header".into()));
        }
        let h = match self.order {
            PolyOrder::Linear => None,
            PolyOrder::Quadratic | PolyOrder::Cubic => {
                Some(tensor3_from_rows(&self.h_r, self.r, "H_r")?)
            }
        };
        let g = match (self.order, &self.g_r) {
            (PolyOrder::Cubic, Some(rows)) => Some(tensor4_from_rows(rows, self.r, "G_r")?),
            (PolyOrder::Cubic, None) => {
                return Err(Error::Data("cubic model is missing its G_r block".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Data("non-cubic model carries a G_r block".into()))
            }
            (_, None) => None,
        };
        let rom = PolynomialRom::new(a, b, h, g)?;
        let point = ModelPoint::new(GrassmannPoint::new(phi)?, StiefelPoint::new(psi)?, rom)?;
        Ok((point, c_r))
    }
}

/// On-disk dataset record for a single trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub alpha: f64,
    pub input: nitrom::dynamics::InputSignal,
    pub times: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub benchmark: BenchmarkSpec,
    pub protocol: Protocol,
    pub trajectories: Vec<TrajectoryRecord>,
}

impl DatasetFile {
    pub fn from_data(data: &GeneratedData) -> Self {
        let trajectories = data
            .trajectories
            .iter()
            .map(|t| TrajectoryRecord {
                alpha: t.alpha,
                input: t.input.clone(),
                times: t.times.clone(),
                x0: t.x0.iter().copied().collect(),
                y: matrix_rows(&t.outputs),
                x: t.states.as_ref().map(matrix_rows),
            })
            .collect();
        Self { benchmark: data.benchmark.clone(), protocol: data.protocol.clone(), trajectories }
    }

    pub fn into_data(self) -> Result<GeneratedData> {
        let mut trajectories = Vec::with_capacity(self.trajectories.len());
        for (i, rec) in self.trajectories.into_iter().enumerate() {
            let outputs = matrix_from_rows(&rec.y, "Y")?;
            let states = match &rec.x {
                Some(rows) => Some(matrix_from_rows(rows, "X")?),
                None => None,
            };
            let traj = Trajectory {
                times: rec.times,
                x0: DVector::from_vec(rec.x0),
                outputs,
                states,
                input: rec.input,
                alpha: rec.alpha,
            };
            traj.validate().map_err(|e| {
                Error::Data(format!("trajectory {i} failed validation: {e}"))
            })?;
            trajectories.push(traj);
        }
        Ok(GeneratedData {
            benchmark: self.benchmark,
            protocol: self.protocol,
            trajectories,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serializes as pretty JSON with a trailing newline; the stable field
/// order plus shortest-round-trip floats make rewrites byte-identical.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_bytes(value)?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}
