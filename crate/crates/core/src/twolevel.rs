//! Two-level reduction: PR-RBC frequency snapshots, a strong greedy over the
//! frequency grid, Galerkin projection of the time-domain problem and complex
//! reduced Newmark marching with dyadic step refinement.

use std::time::Instant;

use faer::Mat;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{apply_real, c64, SpMat};
use crate::online::{reconstruct_fe, solve_prrbc, Projection, SolveDiagnostics, SystemModel, SystemParams};
use crate::truth::{march_store, BasisTag, DenseSystem, HistoryOptions, LoadHistory, NewmarkConfig, TimeHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub sigma_t_ref: f64,
    pub c_under: usize,
    pub c_over: usize,
    pub omegas: Vec<f64>,
    pub n_omega: usize,
}

impl FrequencyGrid {
    pub fn d_omega(&self) -> f64 {
        1.0 / (self.c_under as f64 * self.sigma_t_ref)
    }

    pub fn omega_max(&self) -> f64 {
        self.c_over as f64 / self.sigma_t_ref
    }
}

/// `{0, dw, ..., c_over / sigma}` with `dw = 1 / (c_under sigma)`.
pub fn build_frequency_grid(sigma_t_ref: f64, c_under: usize, c_over: usize) -> Result<FrequencyGrid> {
    if c_under == 0 || c_over == 0 {
        return invalid(format!("frequency grid counts ({c_under}, {c_over}) must be positive"));
    }
    if !(sigma_t_ref > 0.0 && sigma_t_ref.is_finite()) {
        return invalid(format!("reference time scale {sigma_t_ref}"));
    }
    let n_omega = c_under * c_over + 1;
    let dw = 1.0 / (c_under as f64 * sigma_t_ref);
    let omegas = (0..n_omega).map(|k| k as f64 * dw).collect();
    Ok(FrequencyGrid { sigma_t_ref, c_under, c_over, omegas, n_omega })
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub omega: f64,
    pub coefficients: Vec<c64>,
    /// FE representation `Z u`.
    pub field: Vec<c64>,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub params: SystemParams,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn fields(&self) -> Vec<&[c64]> {
        self.snapshots.iter().map(|s| s.field.as_slice()).collect()
    }

    pub fn any_near_singular(&self) -> bool {
        self.snapshots.iter().any(|s| s.diagnostics.near_singular)
    }
}

/// One PR-RBC solve per grid frequency, with a unit time transform on every load.
pub fn level1_snapshots(
    sys: &SystemModel,
    params: &SystemParams,
    grid: &FrequencyGrid,
    projection: Projection,
) -> Result<SnapshotSet> {
    let snapshots = grid
        .omegas
        .par_iter()
        .map(|&omega| {
            let s = solve_prrbc(sys, params, omega, projection)?;
            let field = reconstruct_fe(sys, &s.coefficients)?;
            Ok(Snapshot { omega, coefficients: s.coefficients, field, diagnostics: s.diagnostics })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SnapshotSet { params: params.clone(), snapshots })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreedyConfig {
    pub eps: f64,
    /// Upper bound `M` on the basis size.
    pub max_size: usize,
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { eps: 1e-5, max_size: usize::MAX, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyResult {
    /// Snapshot indices in order of selection.
    pub selected: Vec<usize>,
    /// Entry `k` is the largest error of the first `k + 1` basis functions
    /// over all snapshots, divided by the error after the first pick.
    pub trace: Vec<f64>,
    pub epsilon_a: f64,
    pub seed: u64,
    #[serde(skip)]
    pub basis: Vec<Vec<c64>>,
}

impl GreedyResult {
    pub fn size(&self) -> usize {
        self.basis.len()
    }
}

fn herm_dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn h1_norm_with(hx: &[c64], x: &[c64]) -> f64 {
    herm_dot(x, hx).re.max(0.0).sqrt()
}

/// Largest value, lowest index on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Relative residual level at which a snapshot counts as reproduced.
const EXHAUSTED: f64 = 1e-12;

/// Strong greedy over the snapshot fields with errors measured in `h1`.
///
/// The basis is orthonormal in `h1`. Its size never exceeds
/// `min(n_snapshots, max_size)`, and selection stops early when every
/// snapshot is reproduced to roundoff.
pub fn strong_greedy(fields: &[&[c64]], h1: &SpMat, cfg: &GreedyConfig) -> Result<GreedyResult> {
    let n = fields.len();
    if n == 0 {
        return invalid("strong greedy needs at least one snapshot");
    }
    if !(cfg.eps > 0.0) {
        return invalid(format!("greedy tolerance {}", cfg.eps));
    }
    for f in fields {
        check_len("snapshot", f.len(), h1.nrows())?;
    }
    let cap = n.min(cfg.max_size.max(1));
    let mut res: Vec<Vec<c64>> = fields.iter().map(|f| f.to_vec()).collect();
    let mut hres: Vec<Vec<c64>> = res.iter().map(|r| apply_real(h1, r)).collect();
    let mut errs: Vec<f64> = res.iter().zip(&hres).map(|(r, h)| h1_norm_with(h, r)).collect();
    let empty = GreedyResult { selected: vec![], trace: vec![], epsilon_a: 0.0, seed: cfg.seed, basis: vec![] };
    if errs.iter().all(|e| *e == 0.0) {
        warn!("all snapshots vanish; the reduced basis is empty");
        return Ok(empty);
    }
    // Residuals this far below the largest snapshot are Gram-Schmidt roundoff.
    let floor = EXHAUSTED * errs.iter().fold(0.0f64, |m, e| m.max(*e));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut first = rng.random_range(0..n);
    if errs[first] == 0.0 {
        // A zero snapshot spans nothing; take the next nonzero one.
        first = (0..n).map(|k| (first + k) % n).find(|&j| errs[j] > 0.0).expect("a nonzero snapshot");
    }
    let mut basis: Vec<Vec<c64>> = Vec::new();
    let mut hbasis: Vec<Vec<c64>> = Vec::new();
    let mut selected = Vec::new();
    let add = |j: usize,
                   res: &mut Vec<Vec<c64>>,
                   hres: &mut Vec<Vec<c64>>,
                   errs: &mut Vec<f64>,
                   basis: &mut Vec<Vec<c64>>,
                   hbasis: &mut Vec<Vec<c64>>|
     -> bool {
        let mut b = res[j].clone();
        // Second Gram-Schmidt pass against the current basis.
        for (q, hq) in basis.iter().zip(hbasis.iter()) {
            let c = herm_dot(hq, &b);
            b.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        let mut hb = apply_real(h1, &b);
        let nb = h1_norm_with(&hb, &b);
        if !(nb > floor) {
            return false;
        }
        b.iter_mut().for_each(|x| *x /= nb);
        hb.iter_mut().for_each(|x| *x /= nb);
        for k in 0..res.len() {
            let c = herm_dot(&hb, &res[k]);
            res[k].iter_mut().zip(&b).for_each(|(x, y)| *x -= c * y);
            hres[k].iter_mut().zip(&hb).for_each(|(x, y)| *x -= c * y);
            errs[k] = h1_norm_with(&hres[k], &res[k]);
            if errs[k] <= floor {
                errs[k] = 0.0;
            }
        }
        errs[j] = 0.0;
        basis.push(b);
        hbasis.push(hb);
        true
    };
    add(first, &mut res, &mut hres, &mut errs, &mut basis, &mut hbasis);
    selected.push(first);
    let epsilon_a = errs.iter().fold(0.0f64, |m, e| m.max(*e));
    let mut trace = Vec::new();
    if epsilon_a == 0.0 {
        trace.push(0.0);
        return Ok(GreedyResult { selected, trace, epsilon_a, seed: cfg.seed, basis });
    }
    let mut e_i = f64::INFINITY;
    while basis.len() < cap && e_i > cfg.eps {
        let j = argmax(&errs);
        let m = errs[j];
        if m == 0.0 {
            break;
        }
        e_i = m / epsilon_a;
        trace.push(e_i);
        if !add(j, &mut res, &mut hres, &mut errs, &mut basis, &mut hbasis) {
            trace.pop();
            break;
        }
        selected.push(j);
    }
    trace.push(errs.iter().fold(0.0f64, |m, e| m.max(*e)) / epsilon_a);
    Ok(GreedyResult { selected, trace, epsilon_a, seed: cfg.seed, basis })
}

/// Full FE problem for one global parameter: operators, loads and norm.
pub struct FeProblem {
    pub mass: SpMat,
    pub damping: SpMat,
    pub stiffness: SpMat,
    pub loads: LoadHistory<f64>,
    pub h1: SpMat,
    /// Output rows, `N_q x N_h`.
    pub outputs: Option<SpMat>,
}

impl FeProblem {
    /// Every active load must carry a time signature.
    pub fn from_system(sys: &SystemModel, params: &SystemParams, outputs: Option<SpMat>) -> Result<Self> {
        let [mass, damping, stiffness] = sys.fe_operators(params)?;
        let mut terms = Vec::new();
        for (c, f) in sys.fe_loads(params)? {
            let sig = params.components[c]
                .signature
                .ok_or_else(|| Error::InvalidArgument(format!("load on component {c} has no time signature")))?;
            terms.push((f, sig));
        }
        if let Some(q) = &outputs {
            check_len("output columns", q.ncols(), sys.n_free())?;
        }
        Ok(FeProblem { mass, damping, stiffness, loads: LoadHistory { terms }, h1: sys.h1.clone(), outputs })
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        crate::linalg::energy_norm(&self.h1, u)
    }
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// `N_h x N`, columns of the basis.
    pub basis: Mat<c64>,
    pub mass: Mat<c64>,
    pub damping: Mat<c64>,
    pub stiffness: Mat<c64>,
    pub loads: LoadHistory<c64>,
    /// `N_q x N`.
    pub outputs: Option<Mat<c64>>,
    /// Gram of `[Re Z, -Im Z]` in H1, for norms of `Re[Z U]`.
    pub real_gram: Mat<f64>,
}

impl ReducedModel {
    pub fn size(&self) -> usize {
        self.basis.ncols()
    }

    /// `Re[Z u]` in FE coefficients.
    pub fn reconstruct(&self, u: &[c64]) -> Vec<f64> {
        let mut out = vec![0.0; self.basis.nrows()];
        for (j, uj) in u.iter().enumerate() {
            for (o, z) in out.iter_mut().zip(self.basis.col_as_slice(j)) {
                *o += (z * uj).re;
            }
        }
        out
    }

    /// H1 norm of `Re[Z u]` without leaving reduced coordinates.
    pub fn h1_norm(&self, u: &[c64]) -> f64 {
        let n = u.len();
        let x: Vec<f64> = u.iter().map(|v| v.re).chain(u.iter().map(|v| v.im)).collect();
        let mut s = 0.0;
        for j in 0..2 * n {
            for i in 0..2 * n {
                s += x[i] * self.real_gram[(i, j)] * x[j];
            }
        }
        s.max(0.0).sqrt()
    }
}

fn triple(z: &Mat<c64>, hz: &[Vec<c64>]) -> Mat<c64> {
    let n = z.ncols();
    Mat::from_fn(n, n, |i, j| herm_dot(z.col_as_slice(i), &hz[j]))
}

/// Galerkin projection `Z^H X Z` of the time-domain operators.
pub fn project_rom(problem: &FeProblem, basis: &[Vec<c64>]) -> Result<ReducedModel> {
    if basis.is_empty() {
        return invalid("cannot project onto an empty basis");
    }
    let nh = problem.dim();
    for b in basis {
        check_len("basis vector", b.len(), nh)?;
    }
    let n = basis.len();
    let z = Mat::from_fn(nh, n, |i, j| basis[j][i]);
    let mul = |a: &SpMat| -> Vec<Vec<c64>> { basis.iter().map(|b| apply_real(a, b)).collect() };
    let mass = triple(&z, &mul(&problem.mass));
    let damping = triple(&z, &mul(&problem.damping));
    let stiffness = triple(&z, &mul(&problem.stiffness));
    let terms = problem
        .loads
        .terms
        .iter()
        .map(|(f, sig)| {
            let fr = (0..n).map(|j| z.col_as_slice(j).iter().zip(f).map(|(a, b)| a.conj() * b).sum()).collect();
            (fr, *sig)
        })
        .collect();
    let outputs = problem.outputs.as_ref().map(|q| {
        let cols: Vec<Vec<c64>> = basis.iter().map(|b| apply_real(q, b)).collect();
        Mat::from_fn(q.nrows(), n, |i, j| cols[j][i])
    });
    let w: Vec<Vec<f64>> = (0..2 * n)
        .map(|k| {
            if k < n {
                basis[k].iter().map(|v| v.re).collect()
            } else {
                basis[k - n].iter().map(|v| -v.im).collect()
            }
        })
        .collect();
    let hw: Vec<Vec<f64>> = w.iter().map(|x| apply_real(&problem.h1, x)).collect();
    let real_gram =
        Mat::from_fn(2 * n, 2 * n, |i, j| w[i].iter().zip(&hw[j]).map(|(a, b)| a * b).sum::<f64>());
    Ok(ReducedModel { basis: z, mass, damping, stiffness, loads: LoadHistory { terms }, outputs, real_gram })
}

/// Zero-dimensional model whose reconstruction is identically zero.
fn empty_rom(problem: &FeProblem) -> ReducedModel {
    let z = || Mat::<c64>::zeros(0, 0);
    ReducedModel {
        basis: Mat::zeros(problem.dim(), 0),
        mass: z(),
        damping: z(),
        stiffness: z(),
        loads: LoadHistory { terms: Vec::new() },
        outputs: problem.outputs.as_ref().map(|q| Mat::zeros(q.nrows(), 0)),
        real_gram: Mat::zeros(0, 0),
    }
}

pub fn reduced_newmark_march(rom: &ReducedModel, cfg: &NewmarkConfig) -> Result<TimeHistory<c64>> {
    let sys = DenseSystem::new(rom.mass.clone(), rom.damping.clone(), rom.stiffness.clone(), cfg)
        .map_err(|e| Error::Singular(format!("reduced time-marching matrix: {e}")))?;
    march_store(&sys, &rom.loads, cfg, BasisTag::Reduced, HistoryOptions::default())
}

/// `Re[Q_RB U^j]` for every stored state, one row per output.
pub fn qoi_extract(rom: &ReducedModel, history: &TimeHistory<c64>) -> Result<Vec<Vec<f64>>> {
    let q = rom.outputs.as_ref().ok_or_else(|| Error::InvalidArgument("reduced model has no outputs".into()))?;
    let mut out = vec![Vec::with_capacity(history.len()); q.nrows()];
    for u in &history.u {
        check_len("reduced state", u.len(), q.ncols())?;
        for (i, row) in out.iter_mut().enumerate() {
            row.push((0..q.ncols()).map(|j| q[(i, j)] * u[j]).sum::<c64>().re);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub n_steps_initial: usize,
    pub eps_dt: f64,
    pub max_steps: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t_final: 1.0, n_steps_initial: 500, eps_dt: 1e-3, max_steps: 16000, beta: 0.25, gamma: 0.5 }
    }
}

impl TimeConfig {
    pub fn newmark(&self, n_steps: usize) -> NewmarkConfig {
        NewmarkConfig { beta: self.beta, gamma: self.gamma, t_final: self.t_final, n_steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsonRow {
    pub n_steps: usize,
    pub delta: f64,
    pub epsilon: f64,
}

/// Measured wall time and operation-count estimate of one cost term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTerm {
    pub seconds: f64,
    pub operations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Frequency solves: bubble factorizations and the Schur solve.
    pub level1: CostTerm,
    /// Greedy selection and projection.
    pub greedy_projection: CostTerm,
    /// Reduced marching and outputs, over every refinement level.
    pub marching: CostTerm,
    /// Exponent used for the Schur solve in the estimate.
    pub kappa: f64,
}

impl CostReport {
    pub fn total_seconds(&self) -> f64 {
        self.level1.seconds + self.greedy_projection.seconds + self.marching.seconds
    }
}

/// Exponent applied to the Schur dimension in the level-1 operation count.
pub const SCHUR_KAPPA: f64 = 1.5;

/// Level-1 operation count for one frequency.
pub fn level1_operations(sys: &SystemModel) -> f64 {
    let lib = &sys.library;
    let mut ops = 0.0;
    for c in &sys.components {
        if let Ok(tr) = lib.training(c.archetype) {
            if let Some(b) = &tr.inhomogeneity {
                ops += (b.n_modes() as f64).powi(3);
            }
        }
    }
    for p in &sys.ports {
        for m in &p.members {
            if let Ok(tr) = lib.training(sys.components[m.component].archetype) {
                for b in &tr.variants[m.variant].bubbles[..p.n_modes] {
                    ops += (b.n_modes() as f64).powi(3);
                }
            }
        }
    }
    ops + (sys.n_schur as f64).powf(SCHUR_KAPPA)
}

pub struct TwoLevelRun {
    pub snapshots: SnapshotSet,
    pub greedy: GreedyResult,
    pub rom: ReducedModel,
    /// History at the accepted step count.
    pub history: TimeHistory<c64>,
    pub n_steps: usize,
    pub richardson: Vec<RichardsonRow>,
    pub converged: bool,
    pub cost: CostReport,
}

/// Richardson indicators of a fine reduced history against one with half the steps.
pub fn reduced_richardson(rom: &ReducedModel, fine: &TimeHistory<c64>, coarse: &TimeHistory<c64>) -> Result<(f64, f64)> {
    crate::truth::richardson_indicator(fine, coarse, |u| rom.h1_norm(u))
}

pub fn run_two_level(
    sys: &SystemModel,
    params: &SystemParams,
    grid: &FrequencyGrid,
    greedy: &GreedyConfig,
    time: &TimeConfig,
    projection: Projection,
    outputs: Option<SpMat>,
) -> Result<TwoLevelRun> {
    time.newmark(time.n_steps_initial.max(1)).validate()?;
    if time.n_steps_initial < 1 || time.max_steps < 2 * time.n_steps_initial {
        return invalid(format!(
            "step schedule starts at {} with a cap of {}",
            time.n_steps_initial, time.max_steps
        ));
    }
    let problem = FeProblem::from_system(sys, params, outputs)?;

    let t0 = Instant::now();
    let snapshots = level1_snapshots(sys, params, grid, projection)?;
    let level1 = CostTerm { seconds: t0.elapsed().as_secs_f64(), operations: grid.n_omega as f64 * level1_operations(sys) };

    let t0 = Instant::now();
    let fields = snapshots.fields();
    let g = strong_greedy(&fields, &sys.h1, greedy)?;
    if g.basis.is_empty() {
        warn!("all frequency snapshots vanish; the reduced solution is identically zero");
        let greedy_projection = CostTerm { seconds: t0.elapsed().as_secs_f64(), operations: 0.0 };
        let steps = 2 * time.n_steps_initial;
        let cfg = time.newmark(steps);
        let history = TimeHistory {
            times: (0..=steps).map(|j| cfg.time(j)).collect(),
            u: vec![Vec::new(); steps + 1],
            v: Vec::new(),
            a: Vec::new(),
            config: cfg,
            basis: BasisTag::Reduced,
            stride: 1,
        };
        return Ok(TwoLevelRun {
            snapshots,
            greedy: g,
            rom: empty_rom(&problem),
            history,
            n_steps: steps,
            richardson: vec![RichardsonRow { n_steps: steps, delta: 0.0, epsilon: 0.0 }],
            converged: true,
            cost: CostReport { level1, greedy_projection, marching: CostTerm::default(), kappa: SCHUR_KAPPA },
        });
    }
    let rom = project_rom(&problem, &g.basis)?;
    let n = g.size() as f64;
    let nh = sys.n_free() as f64;
    let greedy_projection = CostTerm {
        seconds: t0.elapsed().as_secs_f64(),
        operations: grid.n_omega as f64 * (sys.z.val().len() as f64 + sys.h1.val().len() as f64 + n * nh + n.powi(4)),
    };

    let t0 = Instant::now();
    let mut rows = Vec::new();
    let mut steps = time.n_steps_initial;
    let mut coarse = reduced_newmark_march(&rom, &time.newmark(steps))?;
    let mut total_steps = steps;
    let mut converged = false;
    let fine = loop {
        steps *= 2;
        let fine = reduced_newmark_march(&rom, &time.newmark(steps))?;
        total_steps += steps;
        let (delta, epsilon) = reduced_richardson(&rom, &fine, &coarse)?;
        rows.push(RichardsonRow { n_steps: steps, delta, epsilon });
        if epsilon <= time.eps_dt {
            converged = true;
            break fine;
        }
        if 2 * steps > time.max_steps {
            warn!("step refinement stopped at {steps} steps with epsilon {epsilon:e}");
            break fine;
        }
        coarse = fine;
    };
    let nq = rom.outputs.as_ref().map_or(0, |q| q.nrows()) as f64;
    let marching = CostTerm { seconds: t0.elapsed().as_secs_f64(), operations: total_steps as f64 * (n * n + nq * n) };
    Ok(TwoLevelRun {
        snapshots,
        greedy: g,
        rom,
        history: fine,
        n_steps: steps,
        richardson: rows,
        converged,
        cost: CostReport { level1, greedy_projection, marching, kappa: SCHUR_KAPPA },
    })
}

/// Time-domain comparison of a reduced history against FE truth marched with the same steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub times: Vec<f64>,
    /// Error divided by the time average of the truth norm.
    pub relative_error: Vec<f64>,
    /// Error divided by the largest truth norm.
    pub relative_error_max_norm: Vec<f64>,
    pub truth_seconds: f64,
}

impl TruthComparison {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_error.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn max_relative_error_max_norm(&self) -> f64 {
        self.relative_error_max_norm.iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

/// Marches the FE truth and measures `||Re[Z U^j] - u^j||_H1` at every step.
pub fn compare_with_truth(problem: &FeProblem, rom: &ReducedModel, history: &TimeHistory<c64>) -> Result<TruthComparison> {
    let cfg = history.config;
    if history.stride != 1 || history.len() != cfg.n_steps + 1 {
        return invalid("truth comparison needs every reduced step");
    }
    let t0 = Instant::now();
    let sys = crate::truth::SparseSystem::new(&problem.mass, &problem.damping, &problem.stiffness, &cfg)?;
    let truth_seconds_start = t0.elapsed().as_secs_f64();
    let mut errs = Vec::with_capacity(cfg.n_steps + 1);
    let mut norms = Vec::with_capacity(cfg.n_steps + 1);
    let mut times = Vec::with_capacity(cfg.n_steps + 1);
    let mut march_time = 0.0;
    let mut last = Instant::now();
    crate::truth::march_with(&sys, &problem.loads, &cfg, |s| {
        march_time += last.elapsed().as_secs_f64();
        let mut d = rom.reconstruct(&history.u[s.step]);
        d.iter_mut().zip(s.u).for_each(|(a, b)| *a -= b);
        errs.push(problem.h1_norm(&d));
        norms.push(problem.h1_norm(s.u));
        times.push(s.time);
        last = Instant::now();
    })?;
    // Trapezoidal time average of the truth norm.
    let dt = cfg.dt();
    let integral: f64 = norms.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    let avg = integral / cfg.t_final;
    let max = norms.iter().fold(0.0f64, |m, v| m.max(*v));
    let scale = |d: f64| if d > 0.0 { 1.0 / d } else { 0.0 };
    Ok(TruthComparison {
        relative_error: errs.iter().map(|e| e * scale(avg)).collect(),
        relative_error_max_norm: errs.iter().map(|e| e * scale(max)).collect(),
        times,
        truth_seconds: truth_seconds_start + march_time,
    })
}
