//! Grassmann × Stiefel × Euclidean product-manifold primitives: tangent
//! projections, QR retraction, projection-based vector transport, and the
//! product metric.
//!
//! Points carry orthonormal basis representatives at all times. Keeping the
//! Grassmann representative orthonormal reduces the subspace metric weight
//! `(Φ^T Φ)^{-1}` to the identity, so the product metric is the plain sum of
//! block Frobenius inner products.

use nalgebra::DMatrix;

use crate::dynamics::{PolynomialRom, ProjectionPair, rcond, MIN_PAIR_RCOND};
use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

pub const ORTHONORMALITY_TOL: f64 = 1e-10;

fn check_orthonormal(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let r = m.ncols();
    let gram = m.transpose() * m;
    let defect = (&gram - DMatrix::identity(r, r)).norm();
    if defect > ORTHONORMALITY_TOL {
        return Err(Error::Data(format!(
            "{what} representative is not orthonormal (defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// Point on the Stiefel manifold: an n×r matrix with orthonormal columns.
#[derive(Debug, Clone)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&m, "Stiefel")?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Point on the Grassmann manifold, stored as an orthonormal representative
/// of the subspace.
#[derive(Debug, Clone)]
pub struct GrassmannPoint(DMatrix<f64>);

impl GrassmannPoint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&m, "Grassmann")?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `Z - Ψ sym(Ψ^T Z)`: orthogonal projection onto the Stiefel tangent space.
pub fn stiefel_project_tangent(psi: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if psi.shape() != z.shape() {
        return Err(Error::Dimension("tangent candidate shape mismatch".into()));
    }
    let m = psi.transpose() * z;
    let sym = 0.5 * (&m + m.transpose());
    Ok(z - psi * sym)
}

/// `(I - ΦΦ^T) Z`: projection onto the horizontal space at Φ.
pub fn grassmann_project_horizontal(phi: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if phi.shape() != z.shape() {
        return Err(Error::Dimension("tangent candidate shape mismatch".into()));
    }
    Ok(z - phi * (phi.transpose() * z))
}

/// Thin-QR retraction with the sign convention that the diagonal of R is
/// nonnegative. A tangent of exactly zero returns the point unchanged
/// (bit for bit), which keeps frozen blocks stable across iterations.
pub fn qr_retract(x: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xi.shape() {
        return Err(Error::Dimension("tangent shape mismatch in retraction".into()));
    }
    if xi.iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    let qr = (x + xi).qr();
    let mut q = qr.q();
    let r = qr.r();
    let rank_tol = 1e-12 * r.diagonal().amax().max(1.0);
    for j in 0..r.nrows() {
        let d = r[(j, j)];
        if d.abs() <= rank_tol {
            return Err(Error::DegenerateRetraction);
        }
        if d < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    Ok(q)
}

/// Tangent vector on the product manifold; the same container also carries
/// ambient (Euclidean) gradients before projection. Tensor components are
/// present exactly when the model's corresponding term is present.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub dphi: DMatrix<f64>,
    pub dpsi: DMatrix<f64>,
    pub da: DMatrix<f64>,
    pub db: DMatrix<f64>,
    pub dh: Option<Tensor3>,
    pub dg: Option<Tensor4>,
}

impl TangentVector {
    pub fn zeros_like(point: &ModelPoint) -> Self {
        let (n, r) = point.phi().shape();
        let m = point.rom.input_dim();
        Self {
            dphi: DMatrix::zeros(n, r),
            dpsi: DMatrix::zeros(n, r),
            da: DMatrix::zeros(r, r),
            db: DMatrix::zeros(r, m),
            dh: point.rom.h.as_ref().map(|_| Tensor3::zeros(r, r, r)),
            dg: point.rom.g.as_ref().map(|_| Tensor4::zeros(r, r, r, r)),
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        self.dphi.scale_mut(c);
        self.dpsi.scale_mut(c);
        self.da.scale_mut(c);
        self.db.scale_mut(c);
        if let Some(t) = &mut self.dh {
            t.scale_mut(c);
        }
        if let Some(t) = &mut self.dg {
            t.scale_mut(c);
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &TangentVector) {
        self.dphi.zip_apply(&other.dphi, |a, b| *a += c * b);
        self.dpsi.zip_apply(&other.dpsi, |a, b| *a += c * b);
        self.da.zip_apply(&other.da, |a, b| *a += c * b);
        self.db.zip_apply(&other.db, |a, b| *a += c * b);
        match (&mut self.dh, &other.dh) {
            (Some(a), Some(b)) => a.axpy(c, b),
            (None, None) => {}
            _ => panic!("mismatched quadratic blocks"),
        }
        match (&mut self.dg, &other.dg) {
            (Some(a), Some(b)) => a.axpy(c, b),
            (None, None) => {}
            _ => panic!("mismatched cubic blocks"),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dphi.iter().all(|&v| v == 0.0)
            && self.dpsi.iter().all(|&v| v == 0.0)
            && self.da.iter().all(|&v| v == 0.0)
            && self.db.iter().all(|&v| v == 0.0)
            && self.dh.as_ref().map_or(true, |t| t.is_zero())
            && self.dg.as_ref().map_or(true, |t| t.is_zero())
    }
}

/// Point on the product manifold `G_{n,r} × S_{n,r} × R^{r×r} × R^{r×r×r} ×
/// R^{r×m} [× R^{r×r×r×r}]`: the basis pair plus the reduced operators.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    phi: GrassmannPoint,
    psi: StiefelPoint,
    pub rom: PolynomialRom,
}

impl ModelPoint {
    pub fn new(phi: GrassmannPoint, psi: StiefelPoint, rom: PolynomialRom) -> Result<Self> {
        if phi.matrix().shape() != psi.matrix().shape() {
            return Err(Error::Dimension("basis shapes differ".into()));
        }
        if phi.matrix().ncols() != rom.dim() {
            return Err(Error::Dimension("basis column count must match reduced order".into()));
        }
        let rc = rcond(&(psi.matrix().transpose() * phi.matrix()));
        if !(rc >= MIN_PAIR_RCOND) {
            return Err(Error::SingularProjection { rcond: rc });
        }
        Ok(Self { phi, psi, rom })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        self.phi.matrix()
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        self.psi.matrix()
    }

    pub fn reduced_dim(&self) -> usize {
        self.rom.dim()
    }

    pub fn full_dim(&self) -> usize {
        self.phi.matrix().nrows()
    }

    /// Builds the cached oblique pair; fails if `Ψ^T Φ` has become singular.
    pub fn pair(&self) -> Result<ProjectionPair> {
        ProjectionPair::new(self.phi().clone(), self.psi().clone())
    }

    pub fn pairing_rcond(&self) -> f64 {
        rcond(&(self.psi().transpose() * self.phi()))
    }

    /// Projects an ambient block vector onto the tangent space: horizontal
    /// projection for the Φ block, Stiefel tangent projection for the Ψ
    /// block, identity on the Euclidean tensor blocks.
    pub fn project_tangent(&self, ambient: &TangentVector) -> Result<TangentVector> {
        Ok(TangentVector {
            dphi: grassmann_project_horizontal(self.phi(), &ambient.dphi)?,
            dpsi: stiefel_project_tangent(self.psi(), &ambient.dpsi)?,
            da: ambient.da.clone(),
            db: ambient.db.clone(),
            dh: ambient.dh.clone(),
            dg: ambient.dg.clone(),
        })
    }

    /// Moves along a tangent vector: QR retraction on each basis block,
    /// addition on the tensor blocks.
    pub fn retract(&self, xi: &TangentVector, step: f64) -> Result<ModelPoint> {
        let scaled_phi;
        let scaled_psi;
        let (dphi, dpsi): (&DMatrix<f64>, &DMatrix<f64>) = if step == 1.0 {
            (&xi.dphi, &xi.dpsi)
        } else {
            scaled_phi = &xi.dphi * step;
            scaled_psi = &xi.dpsi * step;
            (&scaled_phi, &scaled_psi)
        };
        let phi = GrassmannPoint(qr_retract(self.phi(), dphi)?);
        let psi = StiefelPoint(qr_retract(self.psi(), dpsi)?);

        let add_mat = |x: &DMatrix<f64>, d: &DMatrix<f64>| -> DMatrix<f64> {
            if d.iter().all(|&v| v == 0.0) {
                x.clone()
            } else {
                x + d * step
            }
        };
        let a = add_mat(&self.rom.a, &xi.da);
        let b = add_mat(&self.rom.b, &xi.db);
        let h = match (&self.rom.h, &xi.dh) {
            (Some(t), Some(d)) => Some(if d.is_zero() {
                t.clone()
            } else {
                let mut out = t.clone();
                out.axpy(step, d);
                out
            }),
            (Some(t), None) => Some(t.clone()),
            (None, Some(_)) => return Err(Error::Dimension("tangent has quadratic block but model does not".into())),
            (None, None) => None,
        };
        let g = match (&self.rom.g, &xi.dg) {
            (Some(t), Some(d)) => Some(if d.is_zero() {
                t.clone()
            } else {
                let mut out = t.clone();
                out.axpy(step, d);
                out
            }),
            (Some(t), None) => Some(t.clone()),
            (None, Some(_)) => return Err(Error::Dimension("tangent has cubic block but model does not".into())),
            (None, None) => None,
        };
        let rom = PolynomialRom { a, b, h, g };
        Ok(ModelPoint { phi, psi, rom })
    }

    /// Transports a tangent vector to this point by projecting each basis
    /// block onto the destination tangent space (tensor blocks are parallel).
    pub fn transport_to(&self, eta: &TangentVector) -> Result<TangentVector> {
        self.project_tangent(eta)
    }
}

/// Product metric: sum of Frobenius inner products over all blocks.
pub fn product_inner(xi: &TangentVector, eta: &TangentVector) -> f64 {
    let mut acc = xi.dphi.dot(&eta.dphi)
        + xi.dpsi.dot(&eta.dpsi)
        + xi.da.dot(&eta.da)
        + xi.db.dot(&eta.db);
    if let (Some(a), Some(b)) = (&xi.dh, &eta.dh) {
        acc += a.dot(b);
    }
    if let (Some(a), Some(b)) = (&xi.dg, &eta.dg) {
        acc += a.dot(b);
    }
    acc
}

pub fn product_norm(xi: &TangentVector) -> f64 {
    product_inner(xi, xi).sqrt()
}

/// Orthonormalizes the columns of a matrix (thin QR with the nonnegative-R
/// sign convention).
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    qr_retract(&DMatrix::zeros(m.nrows(), m.ncols()), m)
}

/// Random n×r matrix with orthonormal columns, for tests and seeding.
pub fn random_orthonormal(n: usize, r: usize, rng: &mut crate::rng::SplitMix64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, r, |_, _| rng.normal());
    orthonormalize(&raw).expect("random Gaussian matrix is full rank almost surely")
}
