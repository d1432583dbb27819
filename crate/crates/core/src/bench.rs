//! Bridge benchmark: configuration, layout, parameter sets, end-to-end runs
//! and plot data.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{LoadParams, MaterialParams, TimeSignature};
use crate::linalg::SpMat;
use crate::multicomp::Placement;
use crate::offline::{
    bridge_library_spec, precompute_projections, train_library, LibrarySpec, LoadBox, MaterialBox, TrainedLibrary,
    TrainingConfig,
};
use crate::online::{
    assemble_schur, instantiate_system, ComponentParams, Projection, SystemLayout, SystemModel, SystemParams,
};
use crate::truth::{march_with, NewmarkConfig, SparseSystem};
use crate::twolevel::{
    build_frequency_grid, compare_with_truth, qoi_extract, run_two_level, FeProblem, FrequencyGrid, GreedyConfig,
    RichardsonRow, TimeConfig, CostReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    /// Deck segment length `L`.
    pub length: f64,
    pub height: f64,
    /// Cells per length `L` along x; even.
    pub nx_per_length: usize,
    pub ny: usize,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec { length: 5.0, height: 1.0, nx_per_length: 12, ny: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSpec {
    pub rho: f64,
    /// Nominal Young's modulus.
    pub e: f64,
    pub nu: f64,
    /// Largest mass-proportional damping coefficient.
    pub alpha: f64,
    /// Largest stiffness-proportional damping coefficient.
    pub beta: f64,
    /// Young's modulus range relative to the nominal value.
    pub e_range: [f64; 2],
    pub damping_floor: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            rho: 1180.0,
            e: 2.755e9,
            nu: 0.35,
            alpha: 5.3785e-4,
            beta: 1.0634e-4,
            e_range: [0.75, 1.25],
            damping_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSpec {
    /// In units of `E / T_ref`.
    pub force_range: [f64; 2],
    pub x_center_range: [f64; 2],
    pub sigma_x_range: [f64; 2],
    pub friction_range: [f64; 2],
    /// In units of the reference time scale `sigma_ref = 16 T_ref`.
    pub sigma_t_range: [f64; 2],
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec {
            force_range: [-20.0, -10.0],
            x_center_range: [2.46, 2.54],
            sigma_x_range: [0.02, 0.04],
            friction_range: [0.5, 0.7],
            sigma_t_range: [0.75, 1.25],
        }
    }
}

/// Load of the example parameter, on a 1-based component number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleLoad {
    pub component: usize,
    pub sigma_x: f64,
    /// In units of `E / T_ref`.
    pub force: f64,
    /// In units of `sigma_ref`.
    pub sigma_t: f64,
    pub friction: f64,
    pub x_center: f64,
}

fn example_loads() -> Vec<ExampleLoad> {
    vec![
        ExampleLoad { component: 4, sigma_x: 0.02, force: -20.0, sigma_t: 0.75, friction: 0.7, x_center: 2.5 },
        ExampleLoad { component: 8, sigma_x: 0.03, force: -15.0, sigma_t: 1.0, friction: 0.6, x_center: 2.5 },
        ExampleLoad { component: 12, sigma_x: 0.04, force: -10.0, sigma_t: 1.25, friction: 0.5, x_center: 2.5 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpec {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec { n_samples: 10, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub c_under: usize,
    pub c_over: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { c_under: 10, c_over: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSpec {
    /// Horizon in units of `T_ref`.
    pub t_final: f64,
    pub n_steps_initial: usize,
    pub eps_dt: f64,
    pub max_steps: usize,
    /// Step count of stand-alone truth runs.
    pub truth_steps: usize,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec { t_final: 800.0, n_steps_initial: 500, eps_dt: 1e-3, max_steps: 16000, truth_steps: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub geometry: GeometrySpec,
    pub material: MaterialSpec,
    pub load: LoadSpec,
    pub example: Vec<ExampleLoad>,
    pub random: RandomSpec,
    pub grid: GridSpec,
    pub greedy: GreedyConfig,
    pub time: TimeSpec,
    pub training: TrainingConfig,
    pub projection: Projection,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            geometry: GeometrySpec::default(),
            material: MaterialSpec::default(),
            load: LoadSpec::default(),
            example: example_loads(),
            random: RandomSpec::default(),
            grid: GridSpec::default(),
            greedy: GreedyConfig::default(),
            time: TimeSpec::default(),
            training: TrainingConfig::default(),
            projection: Projection::default(),
        }
    }
}

/// Components of the bridge: archetype and left end, the last one mirrored.
const BRIDGE: [(usize, f64); 15] = [
    (1, 0.0),
    (2, 1.5),
    (3, 3.0),
    (4, 4.0),
    (3, 5.0),
    (2, 6.0),
    (3, 7.5),
    (4, 8.5),
    (3, 9.5),
    (2, 10.5),
    (3, 12.0),
    (4, 13.0),
    (3, 14.0),
    (2, 15.0),
    (1, 16.5),
];

/// 0-based indices of the components that may carry a load.
pub const LOADED_COMPONENTS: [usize; 3] = [3, 7, 11];

fn cfg_err<T>(path: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Config(format!("{path}: {msg}")))
}

fn check_range(path: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return cfg_err(path, format!("[{}, {}] is not an interval", r[0], r[1]));
    }
    Ok(())
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if !(g.length > 0.0 && g.height > 0.0) {
            return cfg_err("geometry", "dimensions must be positive");
        }
        if g.nx_per_length == 0 || g.nx_per_length % 2 != 0 || g.ny == 0 {
            return cfg_err("geometry.nx_per_length", "needs an even, positive cell count and ny > 0");
        }
        let m = &self.material;
        if !(m.nu > 0.0 && m.nu < 0.5) {
            return cfg_err("material.nu", format!("{} outside (0, 0.5)", m.nu));
        }
        if !(m.rho > 0.0 && m.e > 0.0) {
            return cfg_err("material", "rho and e must be positive");
        }
        if !(m.alpha >= 0.0 && m.beta >= 0.0) {
            return cfg_err("material", "damping maxima must be nonnegative");
        }
        if !(m.damping_floor > 0.0 && m.damping_floor <= 1.0) {
            return cfg_err("material.damping_floor", m.damping_floor);
        }
        check_range("material.e_range", m.e_range)?;
        if !(m.e_range[0] > 0.0) {
            return cfg_err("material.e_range", "must be positive");
        }
        let l = &self.load;
        check_range("load.force_range", l.force_range)?;
        check_range("load.x_center_range", l.x_center_range)?;
        check_range("load.sigma_x_range", l.sigma_x_range)?;
        check_range("load.friction_range", l.friction_range)?;
        check_range("load.sigma_t_range", l.sigma_t_range)?;
        if !(l.sigma_x_range[0] > 0.0 && l.sigma_t_range[0] > 0.0) {
            return cfg_err("load", "widths must be positive");
        }
        for (i, e) in self.example.iter().enumerate() {
            if !LOADED_COMPONENTS.contains(&(e.component.wrapping_sub(1))) {
                return cfg_err(&format!("example[{i}].component"), format!("component {} cannot carry a load", e.component));
            }
            if !(e.sigma_x > 0.0 && e.sigma_t > 0.0) {
                return cfg_err(&format!("example[{i}]"), "widths must be positive");
            }
        }
        if self.grid.c_under == 0 || self.grid.c_over == 0 {
            return cfg_err("grid", "counts must be positive");
        }
        if !(self.greedy.eps > 0.0) {
            return cfg_err("greedy.eps", self.greedy.eps);
        }
        let t = &self.time;
        if !(t.t_final > 0.0) || t.n_steps_initial == 0 || t.max_steps < 2 * t.n_steps_initial || t.truth_steps == 0 {
            return cfg_err("time", "needs a positive horizon and a step cap of at least twice the initial count");
        }
        if !(t.eps_dt > 0.0) {
            return cfg_err("time.eps_dt", t.eps_dt);
        }
        Ok(())
    }

    /// Shear wave speed `sqrt(E / (2 rho (1 + nu)))`.
    pub fn wave_speed(&self) -> f64 {
        let m = &self.material;
        (m.e / (2.0 * m.rho * (1.0 + m.nu))).sqrt()
    }

    pub fn t_ref(&self) -> f64 {
        self.geometry.height / self.wave_speed()
    }

    pub fn sigma_ref(&self) -> f64 {
        16.0 * self.t_ref()
    }

    pub fn t_final(&self) -> f64 {
        self.time.t_final * self.t_ref()
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        build_frequency_grid(self.sigma_ref(), self.grid.c_under, self.grid.c_over)
    }

    pub fn material_box(&self) -> MaterialBox {
        let m = &self.material;
        MaterialBox {
            e: [m.e_range[0] * m.e, m.e_range[1] * m.e],
            alpha_max: m.alpha,
            beta_max: m.beta,
            rho: m.rho,
            nu: m.nu,
            damping_floor: m.damping_floor,
        }
    }

    pub fn load_box(&self) -> LoadBox {
        let s = self.material.e / self.t_ref();
        let l = &self.load;
        LoadBox {
            force: [l.force_range[0] * s, l.force_range[1] * s],
            x_center: l.x_center_range,
            sigma_x: l.sigma_x_range,
            friction: l.friction_range,
        }
    }

    pub fn library_spec(&self) -> Result<LibrarySpec> {
        let g = &self.geometry;
        bridge_library_spec(
            g.length,
            g.height,
            g.nx_per_length,
            g.ny,
            self.material_box(),
            self.load_box(),
            self.frequency_grid()?.omegas,
        )
    }

    /// Fifteen components: end spans, four T piers, deck segments with three loadable ones.
    pub fn bridge_layout(&self) -> SystemLayout {
        let l = self.geometry.length;
        let items: Vec<(usize, Placement)> = BRIDGE
            .iter()
            .enumerate()
            .map(|(i, &(a, x))| {
                let pl = if i == BRIDGE.len() - 1 { Placement::mirrored_at(x * l, 0.0) } else { Placement::at(x * l, 0.0) };
                (a, pl)
            })
            .collect();
        SystemLayout::chain(&items)
    }

    pub fn time_config(&self) -> TimeConfig {
        TimeConfig {
            t_final: self.t_final(),
            n_steps_initial: self.time.n_steps_initial,
            eps_dt: self.time.eps_dt,
            max_steps: self.time.max_steps,
            ..TimeConfig::default()
        }
    }

    /// Nominal modulus, damping at half its maxima, and the example loads.
    pub fn mu_example(&self) -> SystemParams {
        let m = &self.material;
        let mat = MaterialParams { e: m.e, nu: m.nu, rho: m.rho, alpha: 0.5 * m.alpha, beta: 0.5 * m.beta };
        let mut p = SystemParams::uniform(BRIDGE.len(), mat);
        let (s, sr) = (m.e / self.t_ref(), self.sigma_ref());
        for e in &self.example {
            let c = &mut p.components[e.component - 1];
            c.load = Some(LoadParams {
                force: e.force * s,
                x_center: e.x_center,
                sigma_x: e.sigma_x,
                friction: e.friction,
                active: true,
            });
            c.signature = Some(TimeSignature { sigma_t: e.sigma_t * sr });
        }
        p
    }

    /// Random global parameters: independent materials per component and one
    /// of the seven nonempty subsets of loads.
    pub fn random_samples(&self) -> Vec<SystemParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.random.seed);
        let mb = self.material_box();
        let lb = self.load_box();
        let sr = self.sigma_ref();
        let st = self.load.sigma_t_range;
        (0..self.random.n_samples)
            .map(|_| {
                let components: Vec<ComponentParams> = (0..BRIDGE.len())
                    .map(|_| ComponentParams { material: mb.sample(&mut rng), load: None, signature: None })
                    .collect();
                let mut p = SystemParams { components };
                let combo = rng.random_range(1..8u32);
                for (k, &c) in LOADED_COMPONENTS.iter().enumerate() {
                    if combo & (1 << k) != 0 {
                        p.components[c].load = Some(lb.sample(&mut rng));
                        let s = if st[1] > st[0] { rng.random_range(st[0]..=st[1]) } else { st[0] };
                        p.components[c].signature = Some(TimeSignature { sigma_t: s * sr });
                    }
                }
                p
            })
            .collect()
    }

    /// Vertical displacement at the top middle of each loadable component.
    pub fn output_points(&self) -> Vec<[f64; 2]> {
        let l = self.geometry.length;
        LOADED_COMPONENTS.iter().map(|&c| [(BRIDGE[c].1 + 0.5) * l, self.geometry.height]).collect()
    }
}

/// Parses a JSON benchmark spec; an empty file gives the defaults.
pub fn parse_bench_spec(path: &Path) -> Result<BenchmarkSpec> {
    let text = fs::read_to_string(path)?;
    parse_bench_str(&text)
}

pub fn parse_bench_str(text: &str) -> Result<BenchmarkSpec> {
    let spec: BenchmarkSpec = if text.trim().is_empty() {
        BenchmarkSpec::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?
    };
    spec.validate()?;
    Ok(spec)
}

pub fn emit_bench_spec(spec: &BenchmarkSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(spec)?)
}

pub fn train_bridge_library(spec: &BenchmarkSpec) -> Result<TrainedLibrary> {
    spec.validate()?;
    let mut lib = train_library(&spec.library_spec()?, &spec.training)?;
    if lib.components.iter().any(|c| c.projections.is_none()) {
        precompute_projections(&mut lib)?;
    }
    Ok(lib)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    TwoLevel,
    Truth,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSet {
    Example,
    Random,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub n_steps: usize,
    pub seconds: f64,
    /// Largest error over time, divided by the time-averaged truth norm.
    pub max_relative_error: Option<f64>,
    /// The same error divided by the largest truth norm.
    pub max_relative_error_max_norm: Option<f64>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    pub label: String,
    pub loads: Vec<usize>,
    pub n_basis: Option<usize>,
    pub n_steps: Option<usize>,
    pub converged: Option<bool>,
    pub greedy_seed: u64,
    pub greedy_selected: Vec<usize>,
    pub greedy_trace: Vec<f64>,
    pub richardson: Vec<RichardsonRow>,
    pub cost: Option<CostReport>,
    pub near_singular: bool,
    pub truth: Option<TruthSummary>,
    #[serde(skip)]
    pub series: Series,
}

/// Time series kept for plot data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub times: Vec<f64>,
    pub relative_error: Vec<f64>,
    pub relative_error_max_norm: Vec<f64>,
    pub qoi_times: Vec<f64>,
    pub qoi: Vec<Vec<f64>>,
    pub truth_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub offline_seconds: f64,
    pub n_free: usize,
    pub n_schur: usize,
    pub n_basis_functions: usize,
    pub z_density: f64,
    pub schur_density: f64,
    pub runs: Vec<MuReport>,
}

impl RunReport {
    /// Any run that failed to meet its step-refinement tolerance.
    pub fn any_unconverged(&self) -> bool {
        self.runs.iter().any(|r| r.converged == Some(false))
    }
}

pub fn instantiate_bridge(spec: &BenchmarkSpec, library: Arc<TrainedLibrary>) -> Result<SystemModel> {
    instantiate_system(&spec.bridge_layout(), library)
}

fn loaded(params: &SystemParams) -> Vec<usize> {
    (0..params.components.len())
        .filter(|&c| params.components[c].load.is_some_and(|l| l.active))
        .map(|c| c + 1)
        .collect()
}

/// FE truth march alone, recording the outputs and the H1 norm.
fn truth_only(problem: &FeProblem, cfg: &NewmarkConfig) -> Result<(f64, Series)> {
    let t0 = Instant::now();
    let sys = SparseSystem::new(&problem.mass, &problem.damping, &problem.stiffness, cfg)?;
    let mut s = Series::default();
    let nq = problem.outputs.as_ref().map_or(0, |q| q.nrows());
    s.qoi = vec![Vec::new(); nq];
    let mut elapsed = t0.elapsed().as_secs_f64();
    let mut last = Instant::now();
    march_with(&sys, &problem.loads, cfg, |st| {
        elapsed += last.elapsed().as_secs_f64();
        s.qoi_times.push(st.time);
        s.truth_norm.push(problem.h1_norm(st.u));
        if let Some(q) = &problem.outputs {
            let y = crate::linalg::apply_real(q, st.u);
            for (row, v) in s.qoi.iter_mut().zip(y) {
                row.push(v);
            }
        }
        last = Instant::now();
    })?;
    Ok((elapsed, s))
}

/// Runs one global parameter.
pub fn run_one(
    spec: &BenchmarkSpec,
    sys: &SystemModel,
    label: &str,
    params: &SystemParams,
    mode: RunMode,
    outputs: &SpMat,
) -> Result<MuReport> {
    let problem = FeProblem::from_system(sys, params, Some(outputs.clone()))?;
    let mut rep = MuReport {
        label: label.to_string(),
        loads: loaded(params),
        n_basis: None,
        n_steps: None,
        converged: None,
        greedy_seed: spec.greedy.seed,
        greedy_selected: vec![],
        greedy_trace: vec![],
        richardson: vec![],
        cost: None,
        near_singular: false,
        truth: None,
        series: Series::default(),
    };
    if mode == RunMode::Truth {
        let cfg = NewmarkConfig::trapezoidal(spec.t_final(), spec.time.truth_steps);
        let (seconds, series) = truth_only(&problem, &cfg)?;
        rep.truth = Some(TruthSummary {
            n_steps: cfg.n_steps,
            seconds,
            max_relative_error: None,
            max_relative_error_max_norm: None,
            speedup: None,
        });
        rep.series = series;
        return Ok(rep);
    }
    let grid = spec.frequency_grid()?;
    let run = run_two_level(sys, params, &grid, &spec.greedy, &spec.time_config(), spec.projection, Some(outputs.clone()))?;
    rep.n_basis = Some(run.greedy.size());
    rep.n_steps = Some(run.n_steps);
    rep.converged = Some(run.converged);
    rep.greedy_selected = run.greedy.selected.clone();
    rep.greedy_trace = run.greedy.trace.clone();
    rep.richardson = run.richardson.clone();
    rep.near_singular = run.snapshots.any_near_singular();
    rep.series.qoi = qoi_extract(&run.rom, &run.history)?;
    rep.series.qoi_times = run.history.times.clone();
    if mode == RunMode::Both {
        let cmp = compare_with_truth(&problem, &run.rom, &run.history)?;
        rep.truth = Some(TruthSummary {
            n_steps: run.n_steps,
            seconds: cmp.truth_seconds,
            max_relative_error: Some(cmp.max_relative_error()),
            max_relative_error_max_norm: Some(cmp.max_relative_error_max_norm()),
            speedup: Some(cmp.truth_seconds / run.cost.total_seconds()),
        });
        rep.series.times = cmp.times;
        rep.series.relative_error = cmp.relative_error;
        rep.series.relative_error_max_norm = cmp.relative_error_max_norm;
    }
    rep.cost = Some(run.cost);
    Ok(rep)
}

/// The bridge benchmark over the example and/or random parameters.
///
/// Parameters run one after another so that wall times are not skewed by
/// concurrent runs.
pub fn run_bridge_benchmark(
    spec: &BenchmarkSpec,
    library: Option<Arc<TrainedLibrary>>,
    mode: RunMode,
    samples: SampleSet,
) -> Result<RunReport> {
    spec.validate()?;
    let t0 = Instant::now();
    let library = match library {
        Some(l) => l,
        None => Arc::new(train_bridge_library(spec)?),
    };
    let offline_seconds = if library.meta.offline_seconds > 0.0 {
        library.meta.offline_seconds
    } else {
        t0.elapsed().as_secs_f64()
    };
    let sys = instantiate_bridge(spec, library)?;
    let outputs = sys.nodal_sampler(&spec.output_points(), 1)?;
    let mut params: Vec<(String, SystemParams)> = Vec::new();
    if matches!(samples, SampleSet::Example | SampleSet::All) {
        params.push(("example".into(), spec.mu_example()));
    }
    if matches!(samples, SampleSet::Random | SampleSet::All) {
        for (i, p) in spec.random_samples().into_iter().enumerate() {
            params.push((format!("random{:02}", i + 1), p));
        }
    }
    let schur = assemble_schur(&sys, &spec.mu_example(), spec.frequency_grid()?.d_omega(), spec.projection)?;
    let mut runs = Vec::with_capacity(params.len());
    for (label, p) in &params {
        log::info!("running {label}");
        runs.push(run_one(spec, &sys, label, p, mode, &outputs)?);
    }
    Ok(RunReport {
        mode,
        offline_seconds,
        n_free: sys.n_free(),
        n_schur: sys.n_schur,
        n_basis_functions: sys.n_basis(),
        z_density: sys.z_density(),
        schur_density: SystemModel::schur_density(&schur),
        runs,
    })
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub const GREEDY_HEADER: [&str; 2] = ["i", "e_i"];
pub const RICHARDSON_HEADER: [&str; 3] = ["n_steps", "delta_dt", "epsilon_dt"];
pub const ERROR_HEADER: [&str; 3] = ["t", "rel_error_time_avg", "rel_error_max_norm"];

/// Writes `report.json` and per-run CSV series into `dir`.
pub fn emit_plot_data(report: &RunReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let json = dir.join("report.json");
    fs::write(&json, serde_json::to_string_pretty(report)?)?;
    files.push(json);
    let header = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for r in &report.runs {
        if !r.greedy_trace.is_empty() {
            let p = dir.join(format!("greedy_{}.csv", r.label));
            write_csv(&p, &header(&GREEDY_HEADER), r.greedy_trace.iter().enumerate().map(|(i, e)| vec![(i + 1) as f64, *e]))?;
            files.push(p);
        }
        if !r.richardson.is_empty() {
            let p = dir.join(format!("richardson_{}.csv", r.label));
            write_csv(
                &p,
                &header(&RICHARDSON_HEADER),
                r.richardson.iter().map(|x| vec![x.n_steps as f64, x.delta, x.epsilon]),
            )?;
            files.push(p);
        }
        let s = &r.series;
        if !s.times.is_empty() {
            let p = dir.join(format!("error_{}.csv", r.label));
            write_csv(
                &p,
                &header(&ERROR_HEADER),
                (0..s.times.len()).map(|k| vec![s.times[k], s.relative_error[k], s.relative_error_max_norm[k]]),
            )?;
            files.push(p);
        }
        if !s.qoi_times.is_empty() && !s.qoi.is_empty() {
            let p = dir.join(format!("qoi_{}.csv", r.label));
            let mut h = vec!["t".to_string()];
            h.extend((0..s.qoi.len()).map(|i| format!("q{i}")));
            write_csv(&p, &h, (0..s.qoi_times.len()).map(|k| {
                let mut row = vec![s.qoi_times[k]];
                row.extend(s.qoi.iter().map(|q| q[k]));
                row
            }))?;
            files.push(p);
        }
    }
    Ok(files)
}
