//! Dense row-major 3- and 4-way tensors.
//!
//! These back the quadratic and cubic terms of the reduced dynamics. Only the
//! handful of contractions the model needs are provided; symmetry in the
//! trailing indices is the caller's contract (see
//! [`Tensor3::symmetrize_trailing`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense tensor with shape `(n0, n1, n2)`, row-major (`k` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

/// Dense tensor with shape `(n0, n1, n2, n3)`, row-major (`l` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Self { dims: [n0, n1, n2], data: vec![0.0; n0 * n1 * n2] }
    }

    pub fn from_vec(n0: usize, n1: usize, n2: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n0 * n1 * n2 {
            return Err(Error::Dimension(format!(
                "tensor data length {} does not match shape ({n0}, {n1}, {n2})",
                data.len()
            )));
        }
        Ok(Self { dims: [n0, n1, n2], data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let l = self.idx(i, j, k);
        self.data[l] = v;
    }

    /// Averages over the trailing index pair: `T[i,j,k] <- (T[i,j,k] + T[i,k,j]) / 2`.
    pub fn symmetrize_trailing(&mut self) {
        let [n0, n1, n2] = self.dims;
        assert_eq!(n1, n2, "trailing symmetrization needs square trailing dims");
        for i in 0..n0 {
            for j in 0..n1 {
                for k in (j + 1)..n2 {
                    let a = self.get(i, j, k);
                    let b = self.get(i, k, j);
                    let m = 0.5 * (a + b);
                    self.set(i, j, k, m);
                    self.set(i, k, j, m);
                }
            }
        }
    }

    /// `out[i] = sum_{j,k} T[i,j,k] y[j] z[k]`.
    pub fn contract_pair(&self, y: &DVector<f64>, z: &DVector<f64>, out: &mut DVector<f64>) {
        let [n0, n1, n2] = self.dims;
        debug_assert_eq!(y.len(), n1);
        debug_assert_eq!(z.len(), n2);
        debug_assert_eq!(out.len(), n0);
        for i in 0..n0 {
            let mut acc = 0.0;
            let base = i * n1 * n2;
            for j in 0..n1 {
                let row = base + j * n2;
                let yj = y[j];
                if yj == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for k in 0..n2 {
                    inner += self.data[row + k] * z[k];
                }
                acc += yj * inner;
            }
            out[i] += acc;
        }
    }

    /// `out[i,l] += 2 * sum_k T[i,l,k] z[k]` (the Jacobian of the quadratic
    /// term, valid when the trailing indices are symmetric).
    pub fn accumulate_jacobian(&self, z: &DVector<f64>, out: &mut DMatrix<f64>) {
        let [n0, n1, n2] = self.dims;
        for i in 0..n0 {
            for l in 0..n1 {
                let row = (i * n1 + l) * n2;
                let mut acc = 0.0;
                for k in 0..n2 {
                    acc += self.data[row + k] * z[k];
                }
                out[(i, l)] += 2.0 * acc;
            }
        }
    }

    /// Rank-one update `T[i,j,k] += c * a[i] * b[j] * d[k]`.
    pub fn add_outer(&mut self, c: f64, a: &DVector<f64>, b: &DVector<f64>, d: &DVector<f64>) {
        let [n0, n1, n2] = self.dims;
        for i in 0..n0 {
            let ca = c * a[i];
            if ca == 0.0 {
                continue;
            }
            let base = i * n1 * n2;
            for j in 0..n1 {
                let cab = ca * b[j];
                let row = base + j * n2;
                for k in 0..n2 {
                    self.data[row + k] += cab * d[k];
                }
            }
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Tensor3) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

impl Tensor4 {
    pub fn zeros(n0: usize, n1: usize, n2: usize, n3: usize) -> Self {
        Self { dims: [n0, n1, n2, n3], data: vec![0.0; n0 * n1 * n2 * n3] }
    }

    pub fn from_vec(n0: usize, n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n0 * n1 * n2 * n3 {
            return Err(Error::Dimension(format!(
                "tensor data length {} does not match shape ({n0}, {n1}, {n2}, {n3})",
                data.len()
            )));
        }
        Ok(Self { dims: [n0, n1, n2, n3], data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.dims[1] + j) * self.dims[2] + k) * self.dims[3] + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let m = self.idx(i, j, k, l);
        self.data[m] = v;
    }

    /// Averages over all six orderings of the trailing index triple.
    pub fn symmetrize_trailing(&mut self) {
        let [n0, n1, n2, n3] = self.dims;
        assert!(n1 == n2 && n2 == n3, "trailing symmetrization needs cubic trailing dims");
        let r = n1;
        for i in 0..n0 {
            for j in 0..r {
                for k in j..r {
                    for l in k..r {
                        let m = (self.get(i, j, k, l)
                            + self.get(i, j, l, k)
                            + self.get(i, k, j, l)
                            + self.get(i, k, l, j)
                            + self.get(i, l, j, k)
                            + self.get(i, l, k, j))
                            / 6.0;
                        self.set(i, j, k, l, m);
                        self.set(i, j, l, k, m);
                        self.set(i, k, j, l, m);
                        self.set(i, k, l, j, m);
                        self.set(i, l, j, k, m);
                        self.set(i, l, k, j, m);
                    }
                }
            }
        }
    }

    /// `out[i] += sum_{j,k,l} T[i,j,k,l] a[j] b[k] c[l]`.
    pub fn contract_triple(
        &self,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        let [n0, n1, n2, n3] = self.dims;
        for i in 0..n0 {
            let mut acc = 0.0;
            for j in 0..n1 {
                let aj = a[j];
                if aj == 0.0 {
                    continue;
                }
                let mut accj = 0.0;
                for k in 0..n2 {
                    let bk = b[k];
                    if bk == 0.0 {
                        continue;
                    }
                    let row = ((i * n1 + j) * n2 + k) * n3;
                    let mut inner = 0.0;
                    for l in 0..n3 {
                        inner += self.data[row + l] * c[l];
                    }
                    accj += bk * inner;
                }
                acc += aj * accj;
            }
            out[i] += acc;
        }
    }

    /// `out[i,q] += 3 * sum_{k,l} T[i,q,k,l] z[k] z[l]` (Jacobian of the cubic
    /// term, valid when the trailing indices are symmetric).
    pub fn accumulate_jacobian(&self, z: &DVector<f64>, out: &mut DMatrix<f64>) {
        let [n0, n1, n2, n3] = self.dims;
        for i in 0..n0 {
            for q in 0..n1 {
                let mut acc = 0.0;
                for k in 0..n2 {
                    let zk = z[k];
                    if zk == 0.0 {
                        continue;
                    }
                    let row = ((i * n1 + q) * n2 + k) * n3;
                    let mut inner = 0.0;
                    for l in 0..n3 {
                        inner += self.data[row + l] * z[l];
                    }
                    acc += zk * inner;
                }
                out[(i, q)] += 3.0 * acc;
            }
        }
    }

    /// Rank-one update `T[i,j,k,l] += c * a[i] * b[j] * b[k] * b[l]`.
    pub fn add_outer(&mut self, c: f64, a: &DVector<f64>, b: &DVector<f64>) {
        let [n0, n1, n2, n3] = self.dims;
        for i in 0..n0 {
            let ca = c * a[i];
            if ca == 0.0 {
                continue;
            }
            for j in 0..n1 {
                let cab = ca * b[j];
                for k in 0..n2 {
                    let cabk = cab * b[k];
                    let row = ((i * n1 + j) * n2 + k) * n3;
                    for l in 0..n3 {
                        self.data[row + l] += cabk * b[l];
                    }
                }
            }
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn axpy(&mut self, c: f64, other: &Tensor4) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}
