//! Reference solvers: sparse direct frequency solves and implicit Newmark-beta
//! marching, shared between the full FE model and reduced models.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forms::TimeSignature;
use crate::linalg::{apply, apply_real_add, c64, dense_apply, norm2, CSpMat, DenseLu, Scalar, SparseCholesky, SparseLu, SpMat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkConfig {
    pub beta: f64,
    pub gamma: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl NewmarkConfig {
    /// Average-acceleration rule (`beta = 1/4`, `gamma = 1/2`).
    pub fn trapezoidal(t_final: f64, n_steps: usize) -> Self {
        NewmarkConfig { beta: 0.25, gamma: 0.5, t_final, n_steps }
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Newmark horizon {} with {} steps",
                self.t_final, self.n_steps
            )));
        }
        if !(self.beta > 0.0 && self.gamma >= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "Newmark coefficients beta={}, gamma={}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }

    pub fn halved(&self) -> Self {
        NewmarkConfig { n_steps: self.n_steps / 2, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    Fe,
    Reduced,
}

/// Stored solution states. Entry `k` belongs to step `k * stride`.
#[derive(Debug, Clone)]
pub struct TimeHistory<T> {
    pub times: Vec<f64>,
    pub u: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub a: Vec<Vec<T>>,
    pub config: NewmarkConfig,
    pub basis: BasisTag,
    pub stride: usize,
}

impl<T: Scalar> TimeHistory<T> {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// What [`newmark_march`] keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryOptions {
    pub stride: usize,
    pub keep_rates: bool,
}

impl Default for HistoryOptions {
    fn default() -> Self {
        HistoryOptions { stride: 1, keep_rates: true }
    }
}

/// Separable load `sum_k f_k f_t,k(t)`.
#[derive(Debug, Clone)]
pub struct LoadHistory<T> {
    pub terms: Vec<(Vec<T>, TimeSignature)>,
}

impl<T: Scalar> LoadHistory<T> {
    pub fn single(f: Vec<T>, sig: TimeSignature) -> Self {
        LoadHistory { terms: vec![(f, sig)] }
    }

    pub fn eval_into(&self, t: f64, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (f, sig) in &self.terms {
            let s = sig.value(t);
            if s == 0.0 {
                continue;
            }
            for (o, fi) in out.iter_mut().zip(f) {
                *o += fi.scale(s);
            }
        }
    }
}

/// Operators needed by the Newmark recursion.
pub trait SecondOrderSystem<T: Scalar> {
    fn dim(&self) -> usize;
    /// `y += s C x`.
    fn damping_add(&self, x: &[T], s: f64, y: &mut [T]);
    /// `y += s A x`.
    fn stiffness_add(&self, x: &[T], s: f64, y: &mut [T]);
    /// `y += s M x`.
    fn mass_add(&self, x: &[T], s: f64, y: &mut [T]);
    /// Overwrites `b` with `T^{-1} b`, `T = M + gamma dt C + beta dt^2 A`.
    fn solve_tangent(&self, b: &mut [T]);
    /// Overwrites `b` with `M^{-1} b`.
    fn solve_mass(&self, b: &mut [T]);
}

/// Sparse real system with Cholesky factorizations of `T` and `M`.
pub struct SparseSystem<'a> {
    pub m: &'a SpMat,
    pub c: &'a SpMat,
    pub a: &'a SpMat,
    tangent: SparseCholesky,
    mass: SparseCholesky,
}

impl<'a> SparseSystem<'a> {
    pub fn new(m: &'a SpMat, c: &'a SpMat, a: &'a SpMat, cfg: &NewmarkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = m.nrows();
        for (name, x) in [("damping", c), ("stiffness", a)] {
            if x.nrows() != n || x.ncols() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("{name} matrix does not match mass")));
            }
        }
        let dt = cfg.dt();
        let t = crate::linalg::combine_real(&[(1.0, m), (cfg.gamma * dt, c), (cfg.beta * dt * dt, a)])?;
        let tangent = SparseCholesky::new(&t).map_err(|e| Error::Singular(format!("time-marching matrix: {e}")))?;
        let mass = SparseCholesky::new(m).map_err(|e| Error::Singular(format!("mass matrix: {e}")))?;
        Ok(SparseSystem { m, c, a, tangent, mass })
    }
}

impl<T: Scalar> SecondOrderSystem<T> for SparseSystem<'_> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn damping_add(&self, x: &[T], s: f64, y: &mut [T]) {
        apply_real_add(self.c, x, s, y);
    }
    fn stiffness_add(&self, x: &[T], s: f64, y: &mut [T]) {
        apply_real_add(self.a, x, s, y);
    }
    fn mass_add(&self, x: &[T], s: f64, y: &mut [T]) {
        apply_real_add(self.m, x, s, y);
    }
    fn solve_tangent(&self, b: &mut [T]) {
        self.tangent.solve_in_place(b);
    }
    fn solve_mass(&self, b: &mut [T]) {
        self.mass.solve_in_place(b);
    }
}

/// Small dense system, real or complex, factored with partial-pivot LU.
pub struct DenseSystem<T: Scalar> {
    pub m: Mat<T>,
    pub c: Mat<T>,
    pub a: Mat<T>,
    tangent: DenseLu<T>,
    mass: DenseLu<T>,
}

impl<T: Scalar> DenseSystem<T> {
    pub fn new(m: Mat<T>, c: Mat<T>, a: Mat<T>, cfg: &NewmarkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = m.nrows();
        if [m.ncols(), c.nrows(), c.ncols(), a.nrows(), a.ncols()].iter().any(|&d| d != n) {
            return Err(Error::DimensionMismatch("dense Newmark operators differ in size".into()));
        }
        let dt = cfg.dt();
        let (g, b) = (T::from(cfg.gamma * dt), T::from(cfg.beta * dt * dt));
        let t = Mat::from_fn(n, n, |i, j| m[(i, j)] + g * c[(i, j)] + b * a[(i, j)]);
        let tangent = DenseLu::new(&t)?;
        let mass = DenseLu::new(&m)?;
        Ok(DenseSystem { m, c, a, tangent, mass })
    }
}

fn dense_add<T: Scalar>(a: &Mat<T>, x: &[T], s: f64, y: &mut [T]) {
    for j in 0..a.ncols() {
        let xj = x[j].scale(s);
        if xj == T::zero() {
            continue;
        }
        for (yi, aij) in y.iter_mut().zip(a.col_as_slice(j)) {
            *yi += *aij * xj;
        }
    }
}

impl<T: Scalar> SecondOrderSystem<T> for DenseSystem<T> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn damping_add(&self, x: &[T], s: f64, y: &mut [T]) {
        dense_add(&self.c, x, s, y);
    }
    fn stiffness_add(&self, x: &[T], s: f64, y: &mut [T]) {
        dense_add(&self.a, x, s, y);
    }
    fn mass_add(&self, x: &[T], s: f64, y: &mut [T]) {
        dense_add(&self.m, x, s, y);
    }
    fn solve_tangent(&self, b: &mut [T]) {
        self.tangent.solve_in_place(b);
    }
    fn solve_mass(&self, b: &mut [T]) {
        self.mass.solve_in_place(b);
    }
}

/// State passed to marching observers.
pub struct StepState<'a, T> {
    pub step: usize,
    pub time: f64,
    pub u: &'a [T],
    pub v: &'a [T],
    pub a: &'a [T],
}

/// Newmark recursion from rest, streaming every state to `observer`.
///
/// The stiffness predictor is `u + dt v + dt^2 (1/2 - beta) a`, the same
/// combination used in the displacement update, which keeps the scheme
/// consistent and unconditionally stable for `beta = 1/4`, `gamma = 1/2`.
pub fn march_with<T: Scalar, S: SecondOrderSystem<T> + ?Sized>(
    sys: &S,
    load: &LoadHistory<T>,
    cfg: &NewmarkConfig,
    mut observer: impl FnMut(StepState<'_, T>),
) -> Result<()> {
    cfg.validate()?;
    let n = sys.dim();
    for (f, _) in &load.terms {
        check_len("load vector", f.len(), n)?;
    }
    let (dt, beta, gamma) = (cfg.dt(), cfg.beta, cfg.gamma);
    let mut u = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut a = vec![T::zero(); n];
    load.eval_into(0.0, &mut a);
    sys.solve_mass(&mut a);
    observer(StepState { step: 0, time: 0.0, u: &u, v: &v, a: &a });
    let mut rhs = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    let c1 = dt * (1.0 - gamma);
    let c2 = dt * dt * (0.5 - beta);
    for j in 1..=cfg.n_steps {
        let t = cfg.time(j);
        load.eval_into(t, &mut rhs);
        for k in 0..n {
            tmp[k] = v[k] + a[k].scale(c1);
        }
        sys.damping_add(&tmp, -1.0, &mut rhs);
        for k in 0..n {
            tmp[k] = u[k] + v[k].scale(dt) + a[k].scale(c2);
        }
        sys.stiffness_add(&tmp, -1.0, &mut rhs);
        sys.solve_tangent(&mut rhs);
        for k in 0..n {
            let an = rhs[k];
            u[k] = tmp[k] + an.scale(beta * dt * dt);
            v[k] += a[k].scale(c1) + an.scale(gamma * dt);
            a[k] = an;
        }
        observer(StepState { step: j, time: t, u: &u, v: &v, a: &a });
    }
    Ok(())
}

/// Marches and stores states according to `opts`.
pub fn march_store<T: Scalar, S: SecondOrderSystem<T> + ?Sized>(
    sys: &S,
    load: &LoadHistory<T>,
    cfg: &NewmarkConfig,
    basis: BasisTag,
    opts: HistoryOptions,
) -> Result<TimeHistory<T>> {
    let stride = opts.stride.max(1);
    let mut h = TimeHistory { times: vec![], u: vec![], v: vec![], a: vec![], config: *cfg, basis, stride };
    march_with(sys, load, cfg, |s| {
        if s.step % stride == 0 {
            h.times.push(s.time);
            h.u.push(s.u.to_vec());
            if opts.keep_rates {
                h.v.push(s.v.to_vec());
                h.a.push(s.a.to_vec());
            }
        }
    })?;
    Ok(h)
}

/// Full FE marching with one factorization of the time-marching matrix.
pub fn newmark_march(
    m: &SpMat,
    c: &SpMat,
    a: &SpMat,
    load: &LoadHistory<f64>,
    cfg: &NewmarkConfig,
    opts: HistoryOptions,
) -> Result<TimeHistory<f64>> {
    let sys = SparseSystem::new(m, c, a, cfg)?;
    march_store(&sys, load, cfg, BasisTag::Fe, opts)
}

/// Solves `M a0 = f0`.
pub fn initial_acceleration(m: &SpMat, f0: &[f64]) -> Result<Vec<f64>> {
    check_len("initial load", f0.len(), m.nrows())?;
    let ch = SparseCholesky::new(m).map_err(|e| Error::Singular(format!("mass matrix: {e}")))?;
    Ok(ch.solve(f0))
}

/// Direct solve of the complex frequency-domain system.
pub fn solve_frequency_fe(a_hat: &CSpMat, f_hat: &[c64]) -> Result<Vec<c64>> {
    check_len("frequency load", f_hat.len(), a_hat.nrows())?;
    if norm2(f_hat) == 0.0 {
        return Ok(vec![c64::new(0.0, 0.0); f_hat.len()]);
    }
    let lu = SparseLu::new(a_hat).map_err(|e| Error::Singular(format!("frequency operator: {e}")))?;
    let x = lu.solve(f_hat);
    check_solution(a_hat, &x, f_hat)?;
    Ok(x)
}

/// Rejects non-finite solutions and residuals that betray a numerically singular operator.
pub(crate) fn check_solution(a: &CSpMat, x: &[c64], f: &[c64]) -> Result<()> {
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    let mut r = vec![c64::new(0.0, 0.0); f.len()];
    apply(a, x, &mut r);
    let res: f64 = r.iter().zip(f).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt() / norm2(f);
    if !(res <= 1e-6) {
        return Err(Error::Singular(format!("relative residual {res:e}")));
    }
    Ok(())
}

/// Richardson indicator `(delta, epsilon)` from runs with `N` and `N/2` steps.
///
/// `delta = max_j ||u_fine(t_j) - u_coarse(t_j)|| / max_j ||u_fine(t_j)||` over
/// the shared nodes, and `epsilon = delta / 3` for a second-order scheme.
pub fn richardson_indicator<T: Scalar>(
    fine: &TimeHistory<T>,
    coarse: &TimeHistory<T>,
    norm: impl Fn(&[T]) -> f64,
) -> Result<(f64, f64)> {
    let (cf, cc) = (&fine.config, &coarse.config);
    if cf.n_steps != 2 * cc.n_steps || (cf.t_final - cc.t_final).abs() > 1e-12 * cf.t_final {
        return Err(Error::InvalidArgument(format!(
            "incompatible histories: {} steps over {} vs {} steps over {}",
            cf.n_steps, cf.t_final, cc.n_steps, cc.t_final
        )));
    }
    let mut num = 0.0f64;
    let mut diff = Vec::new();
    for (k, uc) in coarse.u.iter().enumerate() {
        let fine_step = 2 * k * coarse.stride;
        if fine_step % fine.stride != 0 {
            continue;
        }
        let Some(uf) = fine.u.get(fine_step / fine.stride) else { continue };
        diff.clear();
        diff.extend(uf.iter().zip(uc).map(|(p, q)| *p - *q));
        num = num.max(norm(&diff));
    }
    let den = fine.u.iter().map(|u| norm(u)).fold(0.0f64, f64::max);
    let delta = if den > 0.0 { num / den } else { 0.0 };
    Ok((delta, delta / 3.0))
}

/// Dense matrix-vector helper re-exported for reduced models.
pub fn dense_matvec<T: Scalar>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); a.nrows()];
    dense_apply(a, x, &mut y);
    y
}
