//! Sparse and dense linear-algebra helpers on top of `faer`.
//!
//! Matrices are CSC with `usize` indices. Real operators are stored once and
//! applied to real or complex vectors through the [`Scalar`] trait.

use std::fmt::Debug;
use std::io::Write;
use std::path::Path;

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, MatMut, Side};
use num_traits::NumAssign;

use crate::error::{check_len, Error, Result};

pub use faer::c64;

pub type SpMat = SparseColMat<usize, f64>;
pub type CSpMat = SparseColMat<usize, c64>;

/// Field scalar used by generic kernels: `f64` or `c64`.
pub trait Scalar:
    Copy + Send + Sync + Debug + PartialEq + NumAssign + From<f64> + faer::traits::ComplexField + 'static
{
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn abs2(self) -> f64;
    fn scale(self, r: f64) -> Self;
    fn from_c64(z: c64) -> Option<Self>;
    fn to_c64(self) -> c64;
}

impl Scalar for f64 {
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn abs2(self) -> f64 {
        self * self
    }
    #[inline]
    fn scale(self, r: f64) -> Self {
        self * r
    }
    fn from_c64(z: c64) -> Option<Self> {
        (z.im == 0.0).then_some(z.re)
    }
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
}

impl Scalar for c64 {
    #[inline]
    fn conj(self) -> Self {
        c64::conj(&self)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn scale(self, r: f64) -> Self {
        c64::new(self.re * r, self.im * r)
    }
    fn from_c64(z: c64) -> Option<Self> {
        Some(z)
    }
    fn to_c64(self) -> c64 {
        self
    }
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    nrows: usize,
    ncols: usize,
    entries: Vec<Triplet<usize, usize, T>>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: T) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push(Triplet::new(row, col, val));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> Result<SparseColMat<usize, T>> {
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .map_err(|e| Error::InvalidArgument(format!("sparse build: {e:?}")))
    }
}

/// Calls `f(row, col, value)` for every stored entry.
pub fn for_each_entry<T: Scalar>(a: &SparseColMat<usize, T>, mut f: impl FnMut(usize, usize, T)) {
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        for p in cp[j]..cp[j + 1] {
            f(ri[p], j, v[p]);
        }
    }
}

/// `y = A x` for a matrix and vector of the same scalar type.
pub fn apply<T: Scalar>(a: &SparseColMat<usize, T>, x: &[T], y: &mut [T]) {
    y.iter_mut().for_each(|v| *v = T::zero());
    apply_add(a, x, y);
}

/// `y += A x`.
pub fn apply_add<T: Scalar>(a: &SparseColMat<usize, T>, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), a.ncols());
    debug_assert_eq!(y.len(), a.nrows());
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == T::zero() {
            continue;
        }
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += v[p] * xj;
        }
    }
}

/// `y += s A x` with a real matrix applied to a vector of any scalar type.
pub fn apply_real_add<T: Scalar>(a: &SpMat, x: &[T], s: f64, y: &mut [T]) {
    debug_assert_eq!(x.len(), a.ncols());
    debug_assert_eq!(y.len(), a.nrows());
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j].scale(s);
        if xj == T::zero() {
            continue;
        }
        for p in cp[j]..cp[j + 1] {
            y[ri[p]] += xj.scale(v[p]);
        }
    }
}

/// `A x` with a real matrix.
pub fn apply_real<T: Scalar>(a: &SpMat, x: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); a.nrows()];
    apply_real_add(a, x, 1.0, &mut y);
    y
}

/// `x^H A x` real part, square-rooted. Used for energy-type norms.
pub fn energy_norm<T: Scalar>(a: &SpMat, x: &[T]) -> f64 {
    let ax = apply_real(a, x);
    dot_conj(x, &ax).re().max(0.0).sqrt()
}

/// `sum conj(x_i) y_i`.
pub fn dot_conj<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + a.conj() * *b)
}

pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.abs2()).sum::<f64>().sqrt()
}

pub fn to_complex(a: &SpMat) -> CSpMat {
    let mut b = TripletBuilder::with_capacity(a.nrows(), a.ncols(), a.val().len());
    for_each_entry(a, |i, j, v| b.push(i, j, c64::new(v, 0.0)));
    b.build().expect("valid pattern")
}

/// `sum_k s_k A_k` over real matrices with real weights.
pub fn combine_real(terms: &[(f64, &SpMat)]) -> Result<SpMat> {
    combine(terms, |s, v| s * v)
}

/// `sum_k s_k A_k` over real matrices with complex weights.
pub fn combine_complex(terms: &[(c64, &SpMat)]) -> Result<CSpMat> {
    combine(terms, |s, v| s.scale(v))
}

fn combine<T: Scalar>(terms: &[(T, &SpMat)], mul: impl Fn(T, f64) -> T) -> Result<SparseColMat<usize, T>> {
    let Some((_, first)) = terms.first() else {
        return Err(Error::InvalidArgument("empty linear combination".into()));
    };
    let (n, m) = (first.nrows(), first.ncols());
    let cap = terms.iter().map(|(_, a)| a.val().len()).sum();
    let mut b = TripletBuilder::with_capacity(n, m, cap);
    for (s, a) in terms {
        if a.nrows() != n || a.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "combining {}x{} with {}x{}",
                n,
                m,
                a.nrows(),
                a.ncols()
            )));
        }
        for_each_entry(a, |i, j, v| b.push(i, j, mul(*s, v)));
    }
    b.build()
}

/// Extracts the submatrix `A[rows, cols]`.
pub fn submatrix<T: Scalar>(a: &SparseColMat<usize, T>, rows: &[usize], cols: &[usize]) -> SparseColMat<usize, T> {
    let mut rmap = vec![usize::MAX; a.nrows()];
    for (k, &r) in rows.iter().enumerate() {
        rmap[r] = k;
    }
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    let mut b = TripletBuilder::new(rows.len(), cols.len());
    for (jn, &j) in cols.iter().enumerate() {
        for p in cp[j]..cp[j + 1] {
            let r = rmap[ri[p]];
            if r != usize::MAX {
                b.push(r, jn, v[p]);
            }
        }
    }
    b.build().expect("valid pattern")
}

/// Dense copy; meant for small matrices and tests.
pub fn to_dense<T: Scalar>(a: &SparseColMat<usize, T>) -> Mat<T> {
    let mut d = Mat::<T>::zeros(a.nrows(), a.ncols());
    for_each_entry(a, |i, j, v| d[(i, j)] += v);
    d
}

/// Largest absolute entry of `A - A^T`.
pub fn asymmetry(a: &SpMat) -> f64 {
    let at = a.to_owned().transpose().to_col_major().expect("transpose");
    let d = combine_real(&[(1.0, a), (-1.0, &at)]).expect("same shape");
    d.val().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Sparse LU factorization with repeated solves.
pub struct SparseLu<T: Scalar> {
    lu: Lu<usize, T>,
    n: usize,
}

impl<T: Scalar> SparseLu<T> {
    pub fn new(a: &SparseColMat<usize, T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!("LU of {}x{} matrix", a.nrows(), a.ncols())));
        }
        let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = b.len();
        self.lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, n, 1));
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        self.lu.solve(b)
    }
}

/// Sparse Cholesky factorization of a symmetric positive-definite real matrix.
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn new(a: &SpMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Cholesky of {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("sparse Cholesky: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place for a real or complex right-hand side.
    pub fn solve_in_place<T: Scalar>(&self, b: &mut [T]) {
        let n = b.len();
        if let Some(bf) = as_real_mut(b) {
            self.llt
                .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(bf, n, 1));
            return;
        }
        let mut re: Vec<f64> = b.iter().map(|v| v.to_c64().re).collect();
        let mut im: Vec<f64> = b.iter().map(|v| v.to_c64().im).collect();
        self.llt
            .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut re, n, 1));
        self.llt
            .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut im, n, 1));
        for (k, v) in b.iter_mut().enumerate() {
            *v = T::from_c64(c64::new(re[k], im[k])).expect("complex scalar");
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }
}

fn as_real_mut<T: Scalar>(b: &mut [T]) -> Option<&mut [f64]> {
    if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>() {
        // SAFETY: T is f64, checked above.
        Some(unsafe { std::slice::from_raw_parts_mut(b.as_mut_ptr() as *mut f64, b.len()) })
    } else {
        None
    }
}

/// Dense LU with partial pivoting for small systems.
pub struct DenseLu<T: Scalar> {
    lu: faer::linalg::solvers::PartialPivLu<T>,
    n: usize,
}

impl<T: Scalar> DenseLu<T> {
    pub fn new(a: &Mat<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!("LU of {}x{} matrix", a.nrows(), a.ncols())));
        }
        let lu = a.partial_piv_lu();
        // Partial pivoting never fails; detect exact singularity from U's diagonal.
        let u = lu.U();
        let scale = (0..a.nrows()).map(|i| u[(i, i)].abs2()).fold(0.0f64, f64::max).sqrt();
        for i in 0..a.nrows() {
            let d = u[(i, i)].abs2().sqrt();
            if !d.is_finite() || d <= scale * 1e-15 || (scale == 0.0 && a.nrows() > 0) {
                return Err(Error::Singular(format!("dense LU pivot {i} is {d:e}")));
            }
        }
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = b.len();
        self.lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, n, 1));
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `y = A x` for a dense matrix.
pub fn dense_apply<T: Scalar>(a: &Mat<T>, x: &[T], y: &mut [T]) {
    debug_assert_eq!(a.ncols(), x.len());
    y.iter_mut().for_each(|v| *v = T::zero());
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == T::zero() {
            continue;
        }
        let col = a.col_as_slice(j);
        for (yi, aij) in y.iter_mut().zip(col) {
            *yi += *aij * xj;
        }
    }
}

/// Real symmetric matrix `X^T A X` for dense `X`.
pub fn gram_real(a: &SpMat, x: &Mat<f64>) -> Mat<f64> {
    let n = x.ncols();
    let ax: Vec<Vec<f64>> = (0..n).map(|j| apply_real(a, x.col_as_slice(j))).collect();
    Mat::from_fn(n, n, |i, j| {
        x.col_as_slice(i).iter().zip(&ax[j]).map(|(p, q)| p * q).sum()
    })
}

/// Writes a sparse matrix in Matrix Market coordinate format.
pub fn write_matrix_market<T: Scalar>(path: &Path, a: &SparseColMat<usize, T>) -> Result<()> {
    let complex = std::any::TypeId::of::<T>() == std::any::TypeId::of::<c64>();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "%%MatrixMarket matrix coordinate {} general",
        if complex { "complex" } else { "real" }
    )?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.val().len())?;
    let mut err = Ok(());
    for_each_entry(a, |i, j, v| {
        if err.is_err() {
            return;
        }
        let z = v.to_c64();
        err = if complex {
            writeln!(w, "{} {} {:.17e} {:.17e}", i + 1, j + 1, z.re, z.im)
        } else {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, z.re)
        };
    });
    err?;
    w.flush()?;
    Ok(())
}

/// Reads a real Matrix Market coordinate file written by [`write_matrix_market`].
pub fn read_matrix_market_real(path: &Path) -> Result<SpMat> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('%'));
    let header = lines.next().ok_or_else(|| Error::CorruptFile("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::CorruptFile(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::CorruptFile(format!("bad header {header:?}")));
    }
    let mut b = TripletBuilder::with_capacity(dims[0], dims[1], dims[2]);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 3 {
            continue;
        }
        let bad = || Error::CorruptFile(format!("bad entry {line:?}"));
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        let v: f64 = f[2].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || i > dims[0] || j > dims[1] {
            return Err(bad());
        }
        b.push(i - 1, j - 1, v);
    }
    b.build()
}

/// Relative difference `||a - b|| / ||b||` in the Euclidean norm.
pub fn rel_diff<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    check_len("rel_diff", a.len(), b.len())?;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).abs2()).sum::<f64>().sqrt();
    let den = norm2(b);
    Ok(if den == 0.0 { num } else { num / den })
}

pub fn zeros<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::zero(); n]
}
