//! Acceptance report on the default (desk-scale) bridge: one PASS/FAIL line per criterion.

mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{max_abs_diff, random_cvec, random_mat, rng, sparse_to_na, to_na};
use faer::Mat;
use nalgebra::{Complex, DMatrix, DVector};
use prrbc::bench::{instantiate_bridge, train_bridge_library, BenchmarkSpec};
use prrbc::forms::{assemble_damping, assemble_mass, assemble_stiffness, frequency_operator, TimeSignature};
use prrbc::linalg::{c64, to_dense, SpMat, TripletBuilder};
use prrbc::multicomp::Placement;
use prrbc::offline::{pod, PodTarget, TrainedLibrary};
use prrbc::online::*;
use prrbc::truth::{
    march_store, newmark_march, richardson_indicator, BasisTag, DenseSystem, HistoryOptions, LoadHistory,
    NewmarkConfig,
};
use prrbc::twolevel::*;
use rand::Rng;

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn line(&mut self, id: u32, pass: bool, detail: String) {
        println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn rates(deltas: &[f64]) -> Vec<f64> {
    deltas.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn in_order_band(r: &[f64]) -> bool {
    r.iter().all(|p| (p - 2.0).abs() <= 0.2)
}

/// Damped oscillator `u'' + 0.1 u' + 4 u = t exp(-t)` on [0, 20].
fn oscillator_deltas() -> Vec<f64> {
    let mk = |v: f64| Mat::from_fn(1, 1, |_, _| v);
    let load = LoadHistory::single(vec![1.0], TimeSignature { sigma_t: 1.0 });
    let hist = |n: usize| {
        let cfg = NewmarkConfig::trapezoidal(20.0, n);
        let sys = DenseSystem::new(mk(1.0), mk(0.1), mk(4.0), &cfg).unwrap();
        march_store(&sys, &load, &cfg, BasisTag::Fe, HistoryOptions::default()).unwrap()
    };
    let h: Vec<_> = [200, 400, 800, 1600].iter().map(|&n| hist(n)).collect();
    h.windows(2).map(|w| richardson_indicator(&w[1], &w[0], |u: &[f64]| u[0].abs()).unwrap().0).collect()
}

fn rom_deltas(rom: &ReducedModel, n0: usize, t_final: f64) -> Vec<f64> {
    let h: Vec<_> = (0..4)
        .map(|k| reduced_newmark_march(rom, &NewmarkConfig::trapezoidal(t_final, n0 << k)).unwrap())
        .collect();
    h.windows(2).map(|w| reduced_richardson(rom, &w[1], &w[0]).unwrap().0).collect()
}

struct Outcome {
    label: String,
    run: TwoLevelRun,
    cmp: TruthComparison,
    seconds: f64,
}

fn run_with_truth(spec: &BenchmarkSpec, sys: &SystemModel, label: &str, p: &SystemParams) -> Outcome {
    let t0 = Instant::now();
    let grid = spec.frequency_grid().unwrap();
    let run = run_two_level(sys, p, &grid, &spec.greedy, &spec.time_config(), spec.projection, None).unwrap();
    let problem = FeProblem::from_system(sys, p, None).unwrap();
    let cmp = compare_with_truth(&problem, &run.rom, &run.history).unwrap();
    Outcome { label: label.into(), run, cmp, seconds: t0.elapsed().as_secs_f64() }
}

fn cz(v: c64) -> Complex<f64> {
    Complex::new(v.re, v.im)
}

fn identity(n: usize) -> SpMat {
    let mut b = TripletBuilder::new(n, n);
    for i in 0..n {
        b.push(i, i, 1.0);
    }
    b.build().unwrap()
}

fn pod_oracle_defect() -> f64 {
    let mut r = rng(11);
    let (n, m) = (40, 20);
    let s = random_mat(&mut r, n, m);
    let b = random_mat(&mut r, n, n);
    let x = Mat::from_fn(n, n, |i, j| (0..n).map(|k| b[(k, i)] * b[(k, j)]).sum::<f64>() + if i == j { 1.0 } else { 0.0 });
    let res = pod(&s, &x, PodTarget::Size(m)).unwrap();
    let (sn, xn) = (to_na(&s), to_na(&x));
    let eig = (sn.transpose() * &xn * &sn).symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let modes = to_na(&res.modes);
    let mut worst = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        worst = worst.max((res.eigenvalues[k] - eig.eigenvalues[i]).abs() / l1);
        let v = &sn * eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt();
        let dot = (v.transpose() * &xn * modes.column(k))[(0, 0)];
        worst = worst.max((dot.abs() - 1.0).abs());
    }
    worst
}

/// Affine frequency operator against direct assembly with the same material.
fn affine_defect(lib: &TrainedLibrary) -> f64 {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let mat = lib.spec.material.sample(&mut r);
        let omega = r.random_range(0.0..*lib.spec.omegas.last().unwrap());
        let m = assemble_mass(&arch.space, mat.rho).unwrap();
        let a = assemble_stiffness(&arch.space, mat.e, mat.nu).unwrap();
        let direct = to_dense(&frequency_operator(&m, &assemble_damping(&m, &a, mat.alpha, mat.beta).unwrap(), &a, omega).unwrap());
        let affine = to_dense(&arch.operators.frequency(&mat, omega).unwrap());
        let mut scale = 0.0f64;
        let mut diff = 0.0f64;
        for j in 0..direct.ncols() {
            for i in 0..direct.nrows() {
                scale = scale.max(direct[(i, j)].norm());
                diff = diff.max((direct[(i, j)] - affine[(i, j)]).norm());
            }
        }
        worst = worst.max(diff / scale);
    }
    worst
}

/// Projected library blocks and a reduced model against dense triple products.
fn triple_defect(lib: &TrainedLibrary, problem: &FeProblem) -> f64 {
    let mut worst = 0.0f64;
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let proj = c.projections.as_ref().unwrap();
        let w = to_na(&c.function_set());
        for (blocks, op) in [(&proj.mass, &arch.operators.mass_unit), (&proj.stiffness, &arch.operators.stiffness_unit)] {
            let direct = w.transpose() * sparse_to_na(op) * &w;
            worst = worst.max(max_abs_diff(&to_na(blocks), &direct) / direct.abs().max());
        }
    }
    let mut r = rng(4);
    let basis: Vec<Vec<c64>> = (0..5).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(problem, &basis).unwrap();
    let zm = DMatrix::from_fn(problem.dim(), 5, |i, j| cz(basis[j][i]));
    for (got, op) in [(&rom.mass, &problem.mass), (&rom.damping, &problem.damping), (&rom.stiffness, &problem.stiffness)] {
        let oracle = zm.adjoint() * sparse_to_na(op).map(|v| Complex::new(v, 0.0)) * &zm;
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for i in 0..5 {
            for j in 0..5 {
                worst = worst.max((cz(got[(i, j)]) - oracle[(i, j)]).norm() / scale);
            }
        }
    }
    worst
}

fn identity_rom_defect(problem: &FeProblem, t_final: f64) -> f64 {
    let n = problem.dim();
    let basis: Vec<Vec<c64>> =
        (0..n).map(|k| (0..n).map(|i| c64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect()).collect();
    let rom = project_rom(problem, &basis).unwrap();
    let cfg = NewmarkConfig::trapezoidal(t_final, 60);
    let red = reduced_newmark_march(&rom, &cfg).unwrap();
    let truth =
        newmark_march(&problem.mass, &problem.damping, &problem.stiffness, &problem.loads, &cfg, HistoryOptions::default())
            .unwrap();
    let scale = truth.u.iter().map(|u| problem.h1_norm(u)).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (ur, ut) in red.u.iter().zip(&truth.u) {
        let mut d = rom.reconstruct(ur);
        d.iter_mut().zip(ut).for_each(|(a, b)| *a -= b);
        worst = worst.max(problem.h1_norm(&d) / scale);
    }
    worst
}

/// Number of random snapshot sets on which every greedy pick is the brute-force argmax.
fn greedy_argmax_matches(n_sets: u64) -> u64 {
    let mut ok = 0;
    for seed in 0..n_sets {
        let mut r = rng(100 + seed);
        let dim = 6 + seed as usize;
        let snaps: Vec<Vec<c64>> = (0..2 * dim).map(|_| random_cvec(&mut r, dim)).collect();
        let fields: Vec<&[c64]> = snaps.iter().map(|v| v.as_slice()).collect();
        let g = strong_greedy(&fields, &identity(dim), &GreedyConfig { eps: 1e-12, ..Default::default() }).unwrap();
        let all = (1..g.size()).all(|k| {
            let q = DMatrix::from_fn(dim, k, |i, j| cz(snaps[g.selected[j]][i])).qr().q();
            let errs: Vec<f64> = snaps
                .iter()
                .map(|x| {
                    let x = DVector::from_iterator(dim, x.iter().map(|v| cz(*v)));
                    (&x - &q * (q.adjoint() * &x)).norm()
                })
                .collect();
            let max = errs.iter().cloned().fold(0.0, f64::max);
            errs.iter().position(|e| *e == max) == Some(g.selected[k])
        });
        ok += all as u64;
    }
    ok
}

fn bubble_trace_max(lib: &TrainedLibrary) -> f64 {
    let mut worst = 0.0f64;
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let mut fixed: Vec<usize> = arch.ports.iter().flat_map(|p| p.dofs.iter().copied()).collect();
        fixed.extend(arch.space.dirichlet_dofs());
        for b in c.variants.iter().flat_map(|v| v.bubbles.iter()).chain(c.inhomogeneity.iter()) {
            for j in 0..b.n_modes() {
                worst = fixed.iter().map(|&d| b.modes[(d, j)].abs()).fold(worst, f64::max);
            }
        }
    }
    worst
}

fn main() {
    let spec = BenchmarkSpec::default();
    let mut rep = Report { failed: vec![] };
    let t0 = Instant::now();
    let lib = Arc::new(train_bridge_library(&spec).expect("training"));
    let offline = t0.elapsed().as_secs_f64();
    let sys = instantiate_bridge(&spec, lib.clone()).expect("bridge");
    println!(
        "desk bridge: n_free {} n_schur {} basis functions {} offline {offline:.1} s",
        sys.n_free(),
        sys.n_schur,
        sys.n_basis()
    );

    let example = run_with_truth(&spec, &sys, "example", &spec.mu_example());
    let randoms: Vec<Outcome> = spec
        .random_samples()
        .iter()
        .enumerate()
        .map(|(i, p)| run_with_truth(&spec, &sys, &format!("random{:02}", i + 1), p))
        .collect();
    for o in std::iter::once(&example).chain(&randoms) {
        println!(
            "  {:<9} N={:<3} Nt={:<5} eps_dt={:.2e} err={:.3e} err(max-norm)={:.3e} speedup={:.1}",
            o.label,
            o.run.greedy.size(),
            o.run.n_steps,
            o.run.richardson.last().map_or(0.0, |r| r.epsilon),
            o.cmp.max_relative_error(),
            o.cmp.max_relative_error_max_norm(),
            o.cmp.truth_seconds / o.run.cost.total_seconds()
        );
    }

    // 1. Second-order marching.
    let t1 = Instant::now();
    let osc = rates(&oscillator_deltas());
    let bridge_rates = rates(&rom_deltas(&example.run.rom, example.run.n_steps, spec.t_final()));
    let secs = t1.elapsed().as_secs_f64();
    rep.line(
        1,
        in_order_band(&osc) && in_order_band(&bridge_rates) && secs <= 120.0,
        format!("oscillator rates {osc:.3?}, bridge rates {bridge_rates:.3?} (target 2 +- 0.2), {secs:.1} s"),
    );

    // 2. Example accuracy over the whole horizon.
    let e2 = example.cmp.max_relative_error();
    rep.line(
        2,
        e2 <= 1e-2 && example.seconds <= 600.0,
        format!(
            "max relative error {e2:.3e} (<= 1e-2), max-norm variant {:.3e}, {} steps, {:.1} s",
            example.cmp.max_relative_error_max_norm(),
            example.cmp.times.len(),
            example.seconds
        ),
    );

    // 3. Greedy size band.
    let g = &example.run.greedy;
    let monotone = g.trace.windows(2).all(|w| w[1] <= w[0]);
    rep.line(3, (10..=41).contains(&g.size()) && monotone, format!("N = {} in [10, 41], trace non-increasing: {monotone}", g.size()));

    // 4. Richardson gate on the random samples.
    let gated = randoms.iter().filter(|o| o.run.converged && [1000, 2000, 4000].contains(&o.run.n_steps)).count();
    let steps: Vec<usize> = randoms.iter().map(|o| o.run.n_steps).collect();
    rep.line(4, gated >= 9, format!("{gated}/10 converged with N_t in {{1000, 2000, 4000}}; N_t = {steps:?}"));

    // 5. PR-RBC frequency solutions against monolithic FE.
    let omegas = spec.frequency_grid().unwrap().omegas;
    let mut r = rng(77);
    let mut errs = Vec::new();
    for p in spec.random_samples() {
        let mut p = p;
        for c in &mut p.components {
            c.material = lib.spec.material.sample(&mut r);
        }
        let omega = omegas[r.random_range(0..omegas.len())];
        let s = solve_prrbc(&sys, &p, omega, spec.projection).unwrap();
        let u = reconstruct_fe(&sys, &s.coefficients).unwrap();
        errs.push(h1_relative_error(&sys, &u, &sys.solve_fe_frequency(&p, omega).unwrap()).unwrap());
    }
    let e5 = errs.iter().cloned().fold(0.0, f64::max);
    rep.line(5, e5 <= 1e-2, format!("max H1 relative error {e5:.3e} over 10 samples (<= 1e-2)"));

    // 6. Structural invariants on every assembly.
    let l = spec.geometry.length;
    let pair = instantiate_system(
        &SystemLayout::chain(&[(3, Placement::at(0.0, 0.0)), (4, Placement::at(l, 0.0))]),
        lib.clone(),
    )
    .unwrap();
    let mut pair_params = SystemParams::uniform(2, spec.mu_example().components[0].material);
    pair_params.components[1].load = spec.mu_example().components[3].load;
    let mut assemblies = vec![(&sys, spec.mu_example(), omegas[5]), (&pair, pair_params, omegas[20])];
    for (k, p) in spec.random_samples().into_iter().take(3).enumerate() {
        assemblies.push((&sys, p, omegas[10 * k + 3]));
    }
    let mut support = 0;
    let mut staircase = true;
    let mut max_factorized = true;
    for (s, p, w) in &assemblies {
        support = support.max(s.max_z_support());
        let schur = assemble_schur(s, p, *w, spec.projection).unwrap();
        staircase &= schur_is_staircase(s, &schur);
        max_factorized &= solve_prrbc(s, p, *w, spec.projection).unwrap().diagnostics.max_factorized == s.n_schur;
    }
    let trace = bubble_trace_max(&lib);
    rep.line(
        6,
        support <= 2 && staircase && max_factorized && trace <= 1e-12,
        format!(
            "Z support {support} (<= 2), staircase {staircase}, Schur-sized factorizations {max_factorized}, bubble trace {trace:.1e} (<= 1e-12)"
        ),
    );

    // 7. Online speedup and cost ordering.
    let all: Vec<&Outcome> = std::iter::once(&example).chain(&randoms).collect();
    let speedup = all.iter().map(|o| o.cmp.truth_seconds).sum::<f64>() / all.iter().map(|o| o.run.cost.total_seconds()).sum::<f64>();
    let ordered = all.iter().filter(|o| o.run.cost.level1.seconds > o.run.cost.greedy_projection.seconds).count();
    let c = &example.run.cost;
    rep.line(
        7,
        speedup >= 5.0 && ordered == all.len(),
        format!(
            "speedup {speedup:.1} over 11 runs (>= 5); level-1 > greedy in {ordered}/{} runs; example: level-1 {:.3} s, greedy {:.3} s, marching {:.3} s",
            all.len(),
            c.level1.seconds,
            c.greedy_projection.seconds,
            c.marching.seconds
        ),
    );

    // 8. Oracle equivalence suite.
    let t8 = Instant::now();
    let lone = instantiate_system(&SystemLayout::chain(&[(4, Placement::at(0.0, 0.0))]), lib.clone()).unwrap();
    let mut lone_params = SystemParams::uniform(1, spec.mu_example().components[3].material);
    lone_params.components[0].load = spec.mu_example().components[3].load;
    lone_params.components[0].signature = Some(TimeSignature { sigma_t: spec.sigma_ref() });
    let lone_problem = FeProblem::from_system(&lone, &lone_params, None).unwrap();
    let d_pod = pod_oracle_defect();
    let d_aff = affine_defect(&lib);
    let d_tri = triple_defect(&lib, &lone_problem);
    let d_id = identity_rom_defect(&lone_problem, 40.0 * spec.t_ref());
    let greedy_ok = greedy_argmax_matches(4);
    let secs = t8.elapsed().as_secs_f64();
    rep.line(
        8,
        d_pod <= 1e-10 && d_aff <= 1e-12 && d_tri <= 1e-12 && d_id <= 1e-12 && greedy_ok == 4 && secs <= 60.0,
        format!(
            "pod {d_pod:.1e} (<= 1e-10), affine {d_aff:.1e}, triple products {d_tri:.1e}, identity ROM {d_id:.1e} (each <= 1e-12), greedy argmax {greedy_ok}/4 sets, {secs:.1} s"
        ),
    );

    // 9. Spectral coverage of the frequency grid.
    let w_max = spec.frequency_grid().unwrap().omega_max();
    let mut worst: f64 = 0.0;
    let mut cols = Vec::new();
    for f in [0.75, 1.0, 1.25] {
        let sig = TimeSignature { sigma_t: f * spec.sigma_ref() };
        // Closed-form ratio against the transform itself; the peak sits at omega = 0.
        let ratio = sig.transform(w_max).norm() / sig.transform(0.0).norm();
        assert!((ratio - sig.transform_ratio(w_max)).abs() <= 1e-14);
        worst = worst.max(ratio);
        cols.push(format!("{f} sigma_ref: {ratio:.4}"));
    }
    rep.line(9, worst <= 0.06, format!("|f_hat(w_max)| / max |f_hat| = {} (<= 0.06 for all)", cols.join(", ")));

    println!(
        "summary: {}/9 criteria pass{}",
        9 - rep.failed.len(),
        if rep.failed.is_empty() { String::new() } else { format!("; failing {:?}", rep.failed) }
    );
}
