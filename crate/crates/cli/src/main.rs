use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use prrbc::bench::{
    emit_plot_data, parse_bench_spec, run_bridge_benchmark, train_bridge_library, BenchmarkSpec, RunMode, SampleSet,
};
use prrbc::offline::{load_library, save_library, TrainedLibrary};
use prrbc::online::{
    assemble_schur, export_schur, instantiate_system, reconstruct_fe, solve_prrbc, Projection, SystemLayout,
    SystemModel, SystemParams,
};
use prrbc::truth::NewmarkConfig;
use prrbc::twolevel::{compare_with_truth, qoi_extract, run_two_level, FeProblem};

#[derive(Parser)]
#[command(name = "prrbc", version, about = "Two-level PR-RBC reduction for 2D elastodynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the archetype library and write it to a file.
    OfflineTrain {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monolithic FE solve, in frequency (`--omega`) or time.
    SolveFe {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One PR-RBC frequency solve.
    SolvePrrbc {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        galerkin: bool,
        /// Also solve the monolithic FE problem and report the H1 relative error.
        #[arg(long)]
        check_fe: bool,
        #[arg(long)]
        export_schur: Option<PathBuf>,
        #[arg(long)]
        export_z: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Level-1 snapshots, strong greedy, reduced marching.
    SolveTwoLevel {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        eps_dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also march the FE truth and report the time-domain error.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bridge benchmark over the example and random parameters.
    Bench {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "all")]
        samples: Samples,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SpecArg {
    /// JSON benchmark spec; defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct SystemArgs {
    #[command(flatten)]
    spec: SpecArg,
    /// Trained library; trained on the fly when omitted.
    #[arg(long)]
    library: Option<PathBuf>,
    /// JSON system layout; the bridge when omitted.
    #[arg(long)]
    system: Option<PathBuf>,
    /// JSON global parameters; the example parameter when omitted.
    #[arg(long)]
    mu: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    TwoLevel,
    Truth,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Samples {
    Example,
    Random,
    All,
}

fn load_spec(a: &SpecArg) -> Result<BenchmarkSpec> {
    match &a.spec {
        Some(p) => parse_bench_spec(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(BenchmarkSpec::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

fn library(spec: &BenchmarkSpec, path: Option<&Path>) -> Result<Arc<TrainedLibrary>> {
    Ok(Arc::new(match path {
        Some(p) => load_library(p).with_context(|| format!("loading {}", p.display()))?,
        None => train_bridge_library(spec)?,
    }))
}

struct Setup {
    spec: BenchmarkSpec,
    sys: SystemModel,
    params: SystemParams,
}

fn setup(a: &SystemArgs) -> Result<Setup> {
    let spec = load_spec(&a.spec)?;
    let lib = library(&spec, a.library.as_deref())?;
    let layout: SystemLayout = match &a.system {
        Some(p) => read_json(p)?,
        None => spec.bridge_layout(),
    };
    let sys = instantiate_system(&layout, lib)?;
    let params = match &a.mu {
        Some(p) => read_json(p)?,
        None => spec.mu_example(),
    };
    Ok(Setup { spec, sys, params })
}

fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn write_field(path: &Path, u: &[prrbc::linalg::c64]) -> Result<()> {
    let mut s = String::from("re,im\n");
    for v in u {
        s.push_str(&format!("{:e},{:e}\n", v.re, v.im));
    }
    fs::write(path, s)?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::OfflineTrain { spec, out } => {
            let spec = load_spec(&spec)?;
            let lib = train_bridge_library(&spec)?;
            save_library(&lib, &out)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "sizes": format!("{:?}", lib.sizes()), "meta": lib.meta }))?);
            Ok(true)
        }
        Command::SolveFe { sys, omega, steps, out } => {
            let s = setup(&sys)?;
            if let Some(w) = omega {
                let u = s.sys.solve_fe_frequency(&s.params, w)?;
                fs::create_dir_all(&out)?;
                write_field(&out.join("fe_frequency.csv"), &u)?;
                write_json(&out, "fe.json", &json!({ "omega": w, "n_free": s.sys.n_free(), "h1_norm": s.sys.h1_norm(&u) }))?;
            } else {
                let n = steps.unwrap_or(s.spec.time.truth_steps);
                let problem = FeProblem::from_system(&s.sys, &s.params, None)?;
                let cfg = NewmarkConfig::trapezoidal(s.spec.t_final(), n);
                let t0 = std::time::Instant::now();
                let mut norms = Vec::with_capacity(n + 1);
                let ss = prrbc::truth::SparseSystem::new(&problem.mass, &problem.damping, &problem.stiffness, &cfg)?;
                prrbc::truth::march_with(&ss, &problem.loads, &cfg, |st| norms.push([st.time, problem.h1_norm(st.u)]))?;
                let secs = t0.elapsed().as_secs_f64();
                fs::create_dir_all(&out)?;
                let mut csv = String::from("t,h1_norm\n");
                for [t, v] in &norms {
                    csv.push_str(&format!("{t:e},{v:e}\n"));
                }
                fs::write(out.join("fe_norms.csv"), csv)?;
                write_json(&out, "fe.json", &json!({ "n_steps": n, "seconds": secs, "n_free": s.sys.n_free() }))?;
            }
            Ok(true)
        }
        Command::SolvePrrbc { sys, omega, galerkin, check_fe, export_schur: es, export_z, out } => {
            let s = setup(&sys)?;
            let proj = if galerkin { Projection::Galerkin } else { Projection::PetrovGalerkin };
            let sol = solve_prrbc(&s.sys, &s.params, omega, proj)?;
            let u = reconstruct_fe(&s.sys, &sol.coefficients)?;
            let schur = assemble_schur(&s.sys, &s.params, omega, proj)?;
            if let Some(p) = es {
                export_schur(&p, &schur)?;
            }
            if let Some(p) = export_z {
                s.sys.export_z(&p)?;
            }
            let fe_error = if check_fe {
                let ufe = s.sys.solve_fe_frequency(&s.params, omega)?;
                Some(prrbc::online::h1_relative_error(&s.sys, &u, &ufe)?)
            } else {
                None
            };
            fs::create_dir_all(&out)?;
            write_field(&out.join("prrbc_field.csv"), &u)?;
            write_json(
                &out,
                "prrbc.json",
                &json!({
                    "omega": omega,
                    "diagnostics": sol.diagnostics,
                    "n_basis_functions": s.sys.n_basis(),
                    "z_density": s.sys.z_density(),
                    "schur_density": SystemModel::schur_density(&schur),
                    "fe_h1_relative_error": fe_error,
                }),
            )?;
            Ok(!sol.diagnostics.near_singular)
        }
        Command::SolveTwoLevel { sys, eps, eps_dt, seed, compare, out } => {
            let mut s = setup(&sys)?;
            if let Some(e) = eps {
                s.spec.greedy.eps = e;
            }
            if let Some(e) = eps_dt {
                s.spec.time.eps_dt = e;
            }
            if let Some(k) = seed {
                s.spec.greedy.seed = k;
            }
            s.spec.validate()?;
            let grid = s.spec.frequency_grid()?;
            let outputs = s.sys.nodal_sampler(&s.spec.output_points(), 1).ok();
            let run = run_two_level(&s.sys, &s.params, &grid, &s.spec.greedy, &s.spec.time_config(), s.spec.projection, outputs.clone())?;
            let truth = if compare {
                let problem = FeProblem::from_system(&s.sys, &s.params, outputs)?;
                let c = compare_with_truth(&problem, &run.rom, &run.history)?;
                Some(json!({
                    "max_relative_error": c.max_relative_error(),
                    "max_relative_error_max_norm": c.max_relative_error_max_norm(),
                    "truth_seconds": c.truth_seconds,
                    "speedup": c.truth_seconds / run.cost.total_seconds(),
                }))
            } else {
                None
            };
            fs::create_dir_all(&out)?;
            if run.rom.outputs.is_some() {
                let q = qoi_extract(&run.rom, &run.history)?;
                let mut csv = String::from("t");
                for i in 0..q.len() {
                    csv.push_str(&format!(",q{i}"));
                }
                csv.push('\n');
                for (k, t) in run.history.times.iter().enumerate() {
                    csv.push_str(&format!("{t:e}"));
                    for row in &q {
                        csv.push_str(&format!(",{:e}", row[k]));
                    }
                    csv.push('\n');
                }
                fs::write(out.join("qoi.csv"), csv)?;
            }
            write_json(
                &out,
                "two_level.json",
                &json!({
                    "n_basis": run.greedy.size(),
                    "n_steps": run.n_steps,
                    "converged": run.converged,
                    "greedy": run.greedy,
                    "richardson": run.richardson,
                    "cost": run.cost,
                    "truth": truth,
                }),
            )?;
            Ok(run.converged)
        }
        Command::Bench { spec, library: lib_path, mode, samples, out } => {
            let spec = load_spec(&spec)?;
            let lib = match lib_path {
                Some(p) => Some(library(&spec, Some(&p))?),
                None => None,
            };
            let mode = match mode {
                Mode::TwoLevel => RunMode::TwoLevel,
                Mode::Truth => RunMode::Truth,
                Mode::Both => RunMode::Both,
            };
            let samples = match samples {
                Samples::Example => SampleSet::Example,
                Samples::Random => SampleSet::Random,
                Samples::All => SampleSet::All,
            };
            let report = run_bridge_benchmark(&spec, lib, mode, samples)?;
            let files = emit_plot_data(&report, &out)?;
            for r in &report.runs {
                println!(
                    "{:<10} N={:<3} Nt={:<5} converged={:<5} err={}",
                    r.label,
                    r.n_basis.map_or("-".into(), |v| v.to_string()),
                    r.n_steps.map_or("-".into(), |v| v.to_string()),
                    r.converged.map_or("-".into(), |v| v.to_string()),
                    r.truth.as_ref().and_then(|t| t.max_relative_error).map_or("-".into(), |v| format!("{v:.3e}")),
                );
            }
            println!("wrote {} files to {}", files.len(), out.display());
            Ok(!report.any_unconverged())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("finished with a convergence or conditioning failure flag");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
