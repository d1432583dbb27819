//! Proper orthogonal decomposition in a weighted inner product.

use faer::{Mat, Side};

use crate::error::{invalid, Error, Result};
use crate::linalg::{apply_real, SparseCholesky, SpMat};

/// SPD Gram operator defining an inner product.
pub trait InnerProduct {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// Fails with `InvalidArgument` unless the operator is positive definite.
    fn check_spd(&self) -> Result<()>;
}

impl InnerProduct for SpMat {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        apply_real(self, x)
    }
    fn check_spd(&self) -> Result<()> {
        SparseCholesky::new(self)
            .map(|_| ())
            .map_err(|_| Error::InvalidArgument("inner product is not positive definite".into()))
    }
}

impl InnerProduct for Mat<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        crate::truth::dense_matvec(self, x)
    }
    fn check_spd(&self) -> Result<()> {
        self.llt(Side::Lower)
            .map(|_| ())
            .map_err(|_| Error::InvalidArgument("inner product is not positive definite".into()))
    }
}

/// Identity inner product of a given dimension.
pub struct Euclidean(pub usize);

impl InnerProduct for Euclidean {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn check_spd(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodTarget {
    Size(usize),
    /// Keep the smallest `n` with `lambda_{n+1} / lambda_1 <= tol`.
    Tolerance(f64),
}

#[derive(Debug, Clone)]
pub struct PodResult {
    /// Orthonormal columns in the inner product.
    pub modes: Mat<f64>,
    /// Full non-increasing spectrum of the snapshot correlation matrix.
    pub eigenvalues: Vec<f64>,
}

impl PodResult {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }
}

/// Residual level, relative to the column norm, below which a snapshot is
/// treated as linearly dependent on the previous ones.
const DEPENDENT: f64 = 1e-13;

/// POD through an inner-product QR of the snapshots followed by an SVD of the
/// small triangular factor. Singular values are resolved to machine precision
/// rather than its square root, as the correlation-matrix route would give.
pub fn pod(snapshots: &Mat<f64>, inner: &dyn InnerProduct, target: PodTarget) -> Result<PodResult> {
    let n = snapshots.nrows();
    if n != inner.dim() {
        return Err(Error::DimensionMismatch(format!(
            "snapshots of length {n} with a {}-dimensional inner product",
            inner.dim()
        )));
    }
    inner.check_spd()?;
    if let PodTarget::Tolerance(t) = target {
        if !(t >= 0.0) {
            return invalid(format!("POD tolerance {t}"));
        }
    }
    let m = snapshots.ncols();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut xq: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut v = snapshots.col_as_slice(j).to_vec();
        let norm0 = inner_norm(&v, inner);
        let mut r = vec![0.0; q.len() + 1];
        if norm0 == 0.0 {
            r_cols.push(r);
            continue;
        }
        for _ in 0..2 {
            for (i, (qi, xqi)) in q.iter().zip(&xq).enumerate() {
                let c: f64 = v.iter().zip(xqi).map(|(a, b)| a * b).sum();
                r[i] += c;
                v.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = inner_norm(&v, inner);
        if norm > DEPENDENT * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            r[q.len()] = norm;
            xq.push(inner.apply(&v));
            q.push(v);
        } else {
            r.pop();
        }
        r_cols.push(r);
    }
    let k = q.len();
    if k == 0 {
        return Ok(PodResult { modes: Mat::zeros(n, 0), eigenvalues: vec![0.0; m] });
    }
    let rmat = Mat::<f64>::from_fn(k, m, |i, j| r_cols[j].get(i).copied().unwrap_or(0.0));
    let svd = rmat
        .thin_svd()
        .map_err(|e| Error::InvalidArgument(format!("snapshot SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut eigenvalues: Vec<f64> = order.iter().map(|&i| s[i] * s[i]).collect();
    let rank = eigenvalues.iter().take_while(|&&l| l > 0.0).count().min(k);
    eigenvalues.resize(m, 0.0);
    let keep = match target {
        PodTarget::Size(t) => t.min(rank),
        PodTarget::Tolerance(tol) => {
            let mut t = 1;
            while t < rank && eigenvalues[t] / eigenvalues[0] > tol {
                t += 1;
            }
            t.min(rank)
        }
    };
    let modes = Mat::from_fn(n, keep, |row, c| {
        let col = order[c];
        (0..k).map(|i| q[i][row] * u[(i, col)]).sum()
    });
    Ok(PodResult { modes, eigenvalues })
}

/// Orthonormalizes `v` against `basis` in the inner product; `None` when `v` is dependent.
pub fn orthonormalize_against(basis: &[Vec<f64>], mut v: Vec<f64>, inner: &dyn InnerProduct) -> Option<Vec<f64>> {
    let norm0 = inner_norm(&v, inner);
    if norm0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let xb = inner.apply(b);
            let c: f64 = v.iter().zip(&xb).map(|(p, q)| p * q).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
    }
    let norm = inner_norm(&v, inner);
    if norm <= 1e-10 * norm0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn inner_norm(v: &[f64], inner: &dyn InnerProduct) -> f64 {
    let xv = inner.apply(v);
    v.iter().zip(&xv).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt()
}

/// Largest deviation of `V^T X V` from the identity.
pub fn orthonormality_defect(modes: &Mat<f64>, inner: &dyn InnerProduct) -> f64 {
    let k = modes.ncols();
    let xv: Vec<Vec<f64>> = (0..k).map(|j| inner.apply(modes.col_as_slice(j))).collect();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let g: f64 = modes.col_as_slice(i).iter().zip(&xv[j]).map(|(p, q)| p * q).sum();
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}
