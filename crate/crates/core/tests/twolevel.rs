mod common;

use common::*;
use nalgebra::{Complex, DMatrix, DVector};
use prrbc::forms::TimeSignature;
use prrbc::linalg::{apply_real, c64, SpMat, TripletBuilder};
use prrbc::multicomp::Placement;
use prrbc::online::*;
use prrbc::truth::{newmark_march, HistoryOptions, NewmarkConfig};
use prrbc::twolevel::*;
use proptest::prelude::*;

fn identity(n: usize) -> SpMat {
    let mut b = TripletBuilder::new(n, n);
    for i in 0..n {
        b.push(i, i, 1.0);
    }
    b.build().unwrap()
}

fn cz(v: c64) -> Complex<f64> {
    Complex::new(v.re, v.im)
}

fn lone_deck() -> SystemModel {
    let layout = SystemLayout::chain(&[(4, Placement::at(0.0, 0.0))]);
    instantiate_system(&layout, library()).unwrap()
}

fn lone_deck_params() -> SystemParams {
    let mut p = SystemParams::uniform(1, nominal_material());
    p.components[0].load = Some(example_load());
    p.components[0].signature = Some(TimeSignature { sigma_t: small_spec().sigma_ref() });
    p
}

fn short_time(n_steps: usize) -> NewmarkConfig {
    NewmarkConfig::trapezoidal(40.0 * small_spec().t_ref(), n_steps)
}

#[test]
fn default_grid_has_41_frequencies() {
    let spec = small_spec();
    let g = spec.frequency_grid().unwrap();
    assert_eq!(g.n_omega, 41);
    assert_eq!(g.omegas.len(), 41);
    assert_eq!(g.omegas[0], 0.0);
    let dw = 1.0 / (10.0 * spec.sigma_ref());
    assert!((g.d_omega() - dw).abs() <= 1e-15 * dw);
    assert!((g.omegas[40] - 4.0 / spec.sigma_ref()).abs() <= 1e-12 * g.omegas[40]);
}

#[test]
fn smallest_grid_has_two_points() {
    let g = build_frequency_grid(2.0, 1, 1).unwrap();
    assert_eq!(g.omegas, vec![0.0, 0.5]);
    assert!(build_frequency_grid(2.0, 0, 1).is_err());
    assert!(build_frequency_grid(-1.0, 1, 1).is_err());
}

#[test]
fn zero_loads_give_zero_snapshots() {
    let sys = bridge();
    let p = SystemParams::uniform(15, nominal_material());
    let grid = build_frequency_grid(small_spec().sigma_ref(), 2, 2).unwrap();
    let s = level1_snapshots(sys, &p, &grid, Projection::PetrovGalerkin).unwrap();
    assert_eq!(s.snapshots.len(), 5);
    assert!(s.fields().iter().all(|f| f.iter().all(|v| v.norm() == 0.0)));
}

#[test]
fn static_snapshot_is_real_and_snapshots_match_fe() {
    let spec = small_spec();
    let sys = bridge();
    let p = spec.mu_example();
    let grid = spec.frequency_grid().unwrap();
    let s = level1_snapshots(sys, &p, &grid, Projection::PetrovGalerkin).unwrap();
    let f0 = &s.snapshots[0].field;
    let im: Vec<c64> = f0.iter().map(|v| c64::new(v.im, 0.0)).collect();
    assert!(sys.h1_norm(&im) <= 1e-10 * sys.h1_norm(f0));
    for k in [0, 10, 25, 40] {
        let fe = sys.solve_fe_frequency(&p, grid.omegas[k]).unwrap();
        assert!(h1_relative_error(sys, &s.snapshots[k].field, &fe).unwrap() <= 1e-2, "omega index {k}");
    }
    assert!(!s.any_near_singular());
}

#[test]
fn equal_snapshots_give_one_function() {
    let v: Vec<c64> = (0..6).map(|i| c64::new(i as f64, 1.0)).collect();
    let fields: Vec<&[c64]> = vec![&v; 5];
    let g = strong_greedy(&fields, &identity(6), &GreedyConfig::default()).unwrap();
    assert_eq!(g.size(), 1);
    assert_eq!(g.trace, vec![0.0]);
}

#[test]
fn orthogonal_snapshots_are_exhausted() {
    let n = 7;
    let vs: Vec<Vec<c64>> = (0..n)
        .map(|k| (0..n).map(|i| if i == k { c64::new(0.0, 1.0 + k as f64) } else { c64::new(0.0, 0.0) }).collect())
        .collect();
    let fields: Vec<&[c64]> = vs.iter().map(|v| v.as_slice()).collect();
    let cfg = GreedyConfig { eps: 1e-14, ..Default::default() };
    let g = strong_greedy(&fields, &identity(n), &cfg).unwrap();
    assert_eq!(g.size(), n);
    assert_eq!(*g.trace.last().unwrap(), 0.0);
    let capped = strong_greedy(&fields, &identity(n), &GreedyConfig { max_size: 3, ..cfg }).unwrap();
    assert_eq!(capped.size(), 3);
}

#[test]
fn all_zero_snapshots_give_an_empty_basis() {
    let z = vec![c64::new(0.0, 0.0); 4];
    let g = strong_greedy(&[&z, &z], &identity(4), &GreedyConfig::default()).unwrap();
    assert_eq!(g.size(), 0);
    assert!(strong_greedy(&[], &identity(4), &GreedyConfig::default()).is_err());
}

/// Projection errors of every snapshot onto the span of the chosen ones, by QR.
fn brute_force_errors(snaps: &[Vec<c64>], chosen: &[usize]) -> Vec<f64> {
    let n = snaps[0].len();
    let s = DMatrix::from_fn(n, chosen.len(), |i, j| cz(snaps[chosen[j]][i]));
    let q = s.qr().q();
    snaps
        .iter()
        .map(|x| {
            let x = DVector::from_iterator(n, x.iter().map(|v| cz(*v)));
            let r = &x - &q * (q.adjoint() * &x);
            r.norm()
        })
        .collect()
}

#[test]
fn greedy_picks_match_brute_force_argmax() {
    let mut r = rng(21);
    let snaps: Vec<Vec<c64>> = (0..12).map(|_| random_cvec(&mut r, 9)).collect();
    let fields: Vec<&[c64]> = snaps.iter().map(|v| v.as_slice()).collect();
    let g = strong_greedy(&fields, &identity(9), &GreedyConfig { eps: 1e-12, ..Default::default() }).unwrap();
    assert_eq!(g.size(), 9);
    let mut eps_a = 0.0;
    for k in 1..g.size() {
        let errs = brute_force_errors(&snaps, &g.selected[..k]);
        let max = errs.iter().cloned().fold(0.0, f64::max);
        if k == 1 {
            eps_a = max;
        }
        let pick = errs.iter().position(|e| *e == max).unwrap();
        assert_eq!(g.selected[k], pick, "step {k}");
        assert!((g.trace[k - 1] - max / eps_a).abs() <= 1e-10, "trace {k}");
    }
}

#[test]
fn greedy_basis_is_h1_orthonormal_and_seeded() {
    let sys = two_decks();
    let p = two_deck_params();
    let grid = small_spec().frequency_grid().unwrap();
    let s = level1_snapshots(&sys, &p, &grid, Projection::PetrovGalerkin).unwrap();
    let fields = s.fields();
    let g = strong_greedy(&fields, &sys.h1, &GreedyConfig::default()).unwrap();
    for (i, a) in g.basis.iter().enumerate() {
        let ha = apply_real(&sys.h1, a);
        for (j, b) in g.basis.iter().enumerate() {
            let d: c64 = b.iter().zip(&ha).map(|(x, y)| x.conj() * y).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((d - c64::new(expect, 0.0)).norm() <= 1e-10);
        }
    }
    let again = strong_greedy(&fields, &sys.h1, &GreedyConfig::default()).unwrap();
    assert_eq!(again.selected, g.selected);
    assert_eq!(g.trace.len(), g.size());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_trace_is_non_increasing(seed in 0u64..5000, n in 2usize..15, dim in 2usize..10) {
        let mut r = rng(seed);
        let snaps: Vec<Vec<c64>> = (0..n).map(|_| random_cvec(&mut r, dim)).collect();
        let fields: Vec<&[c64]> = snaps.iter().map(|v| v.as_slice()).collect();
        let cfg = GreedyConfig { eps: 1e-12, seed, ..Default::default() };
        let g = strong_greedy(&fields, &identity(dim), &cfg).unwrap();
        prop_assert!(g.size() <= n.min(dim) && g.size() >= 1);
        prop_assert!((g.trace[0] - 1.0).abs() <= 1e-12 || g.size() == 1);
        for w in g.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        let mut sel = g.selected.clone();
        sel.sort_unstable();
        sel.dedup();
        prop_assert_eq!(sel.len(), g.size());
    }
}

fn dense_triple(z: &[Vec<c64>], a: &SpMat) -> DMatrix<Complex<f64>> {
    let n = z[0].len();
    let zm = DMatrix::from_fn(n, z.len(), |i, j| cz(z[j][i]));
    let ad = sparse_to_na(a).map(|v| Complex::new(v, 0.0));
    zm.adjoint() * ad * zm
}

#[test]
fn projection_matches_dense_triple_products() {
    let sys = lone_deck();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), None).unwrap();
    let mut r = rng(4);
    let basis: Vec<Vec<c64>> = (0..5).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(&problem, &basis).unwrap();
    for (got, op) in [(&rom.mass, &problem.mass), (&rom.damping, &problem.damping), (&rom.stiffness, &problem.stiffness)] {
        let oracle = dense_triple(&basis, op);
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        for i in 0..5 {
            for j in 0..5 {
                assert!((cz(got[(i, j)]) - oracle[(i, j)]).norm() <= 1e-12 * scale);
                // Real symmetric operators project to Hermitian matrices.
                assert!((got[(i, j)] - got[(j, i)].conj()).norm() <= 1e-12 * scale);
            }
        }
    }
    let (f, _) = &problem.loads.terms[0];
    let (fr, _) = &rom.loads.terms[0];
    for (j, b) in basis.iter().enumerate() {
        let d: c64 = b.iter().zip(f).map(|(x, y)| x.conj() * y).sum();
        assert!((d - fr[j]).norm() <= 1e-12 * d.norm().max(1.0));
    }
}

#[test]
fn single_vector_projection_has_positive_real_part() {
    let sys = lone_deck();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), None).unwrap();
    let mut r = rng(8);
    let v = random_cvec(&mut r, problem.dim());
    let rom = project_rom(&problem, &[v.clone()]).unwrap();
    assert_eq!(rom.size(), 1);
    let mv = apply_real(&problem.mass, &v);
    let direct: c64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
    assert!((rom.mass[(0, 0)] - direct).norm() <= 1e-12 * direct.norm());
    assert!(rom.mass[(0, 0)].re > 0.0 && rom.stiffness[(0, 0)].re > 0.0);
    assert!(project_rom(&problem, &[]).is_err());
}

#[test]
fn identity_basis_reproduces_truth_marching() {
    let sys = lone_deck();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), None).unwrap();
    let n = problem.dim();
    let basis: Vec<Vec<c64>> = (0..n)
        .map(|k| (0..n).map(|i| c64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let rom = project_rom(&problem, &basis).unwrap();
    let cfg = short_time(60);
    let red = reduced_newmark_march(&rom, &cfg).unwrap();
    let truth =
        newmark_march(&problem.mass, &problem.damping, &problem.stiffness, &problem.loads, &cfg, HistoryOptions::default())
            .unwrap();
    let scale = truth.u.iter().map(|u| problem.h1_norm(u)).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (ur, ut) in red.u.iter().zip(&truth.u) {
        let mut d = rom.reconstruct(ur);
        d.iter_mut().zip(ut).for_each(|(a, b)| *a -= b);
        assert!(problem.h1_norm(&d) <= 1e-12 * scale);
    }
}

#[test]
fn zero_force_gives_zero_history_and_outputs() {
    let sys = lone_deck();
    let mut p = lone_deck_params();
    p.components[0].load.as_mut().unwrap().force = 0.0;
    let q = sys.nodal_sampler(&[[2.5, 1.0]], 1).unwrap();
    let problem = FeProblem::from_system(&sys, &p, Some(q)).unwrap();
    let mut r = rng(2);
    let basis: Vec<Vec<c64>> = (0..3).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(&problem, &basis).unwrap();
    let h = reduced_newmark_march(&rom, &short_time(20)).unwrap();
    assert!(h.u.iter().all(|u| u.iter().all(|v| v.norm() == 0.0)));
    let out = qoi_extract(&rom, &h).unwrap();
    assert!(out[0].iter().all(|v| *v == 0.0));
}

#[test]
fn nodal_output_matches_reconstructed_field() {
    let sys = lone_deck();
    let q = sys.nodal_sampler(&[[2.5, 1.0], [1.25, 0.5]], 1).unwrap();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), Some(q.clone())).unwrap();
    let mut r = rng(6);
    let basis: Vec<Vec<c64>> = (0..4).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(&problem, &basis).unwrap();
    let h = reduced_newmark_march(&rom, &short_time(30)).unwrap();
    let out = qoi_extract(&rom, &h).unwrap();
    for (j, u) in h.u.iter().enumerate() {
        let full = rom.reconstruct(u);
        let direct = apply_real(&q, &full);
        let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for k in 0..2 {
            assert!((out[k][j] - direct[k]).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn reduced_norm_matches_norm_of_reconstruction() {
    let sys = lone_deck();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), None).unwrap();
    let mut r = rng(12);
    let basis: Vec<Vec<c64>> = (0..4).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(&problem, &basis).unwrap();
    let u = random_cvec(&mut r, 4);
    let direct = problem.h1_norm(&rom.reconstruct(&u));
    assert!((rom.h1_norm(&u) - direct).abs() <= 1e-10 * direct);
}

#[test]
fn conjugate_augmentation_leaves_the_real_field_unchanged() {
    let sys = two_decks();
    let p = two_deck_params();
    let problem = FeProblem::from_system(&sys, &p, None).unwrap();
    let grid = small_spec().frequency_grid().unwrap();
    let s = level1_snapshots(&sys, &p, &grid, Projection::PetrovGalerkin).unwrap();
    let picked: Vec<Vec<c64>> = [20usize, 30, 40].iter().map(|&k| s.snapshots[k].field.clone()).collect();
    let conj: Vec<Vec<c64>> = picked.iter().map(|b| b.iter().map(|v| v.conj()).collect()).collect();
    let re_im: Vec<Vec<c64>> = picked
        .iter()
        .flat_map(|b| {
            [b.iter().map(|v| c64::new(v.re, 0.0)).collect::<Vec<_>>(), b.iter().map(|v| c64::new(v.im, 0.0)).collect()]
        })
        .collect();
    let orth = |vs: &[Vec<c64>]| {
        let f: Vec<&[c64]> = vs.iter().map(|v| v.as_slice()).collect();
        strong_greedy(&f, &sys.h1, &GreedyConfig { eps: 1e-14, ..Default::default() }).unwrap().basis
    };
    let augmented: Vec<Vec<c64>> = picked.iter().chain(&conj).cloned().collect();
    let (ra, rr) = (project_rom(&problem, &orth(&augmented)).unwrap(), project_rom(&problem, &orth(&re_im)).unwrap());
    assert_eq!((ra.size(), rr.size()), (6, 6));
    let cfg = short_time(80);
    let (ha, hr) = (reduced_newmark_march(&ra, &cfg).unwrap(), reduced_newmark_march(&rr, &cfg).unwrap());
    let scale = hr.u.iter().map(|u| rr.h1_norm(u)).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for j in 0..=cfg.n_steps {
        let mut d = ra.reconstruct(&ha.u[j]);
        d.iter_mut().zip(rr.reconstruct(&hr.u[j])).for_each(|(a, b)| *a -= b);
        assert!(problem.h1_norm(&d) <= 1e-10 * scale, "step {j}");
    }
}

#[test]
fn reduced_states_satisfy_the_equation_of_motion() {
    let sys = lone_deck();
    let problem = FeProblem::from_system(&sys, &lone_deck_params(), None).unwrap();
    let mut r = rng(31);
    let basis: Vec<Vec<c64>> = (0..6).map(|_| random_cvec(&mut r, problem.dim())).collect();
    let rom = project_rom(&problem, &basis).unwrap();
    let cfg = short_time(50);
    let h = reduced_newmark_march(&rom, &cfg).unwrap();
    let n = rom.size();
    let mul = |m: &faer::Mat<c64>, x: &[c64]| -> Vec<c64> { (0..n).map(|i| (0..n).map(|k| m[(i, k)] * x[k]).sum()).collect() };
    let mut f = vec![c64::new(0.0, 0.0); n];
    for j in 0..=cfg.n_steps {
        rom.loads.eval_into(cfg.time(j), &mut f);
        let (ma, cv, ku) = (mul(&rom.mass, &h.a[j]), mul(&rom.damping, &h.v[j]), mul(&rom.stiffness, &h.u[j]));
        let scale = ma.iter().chain(&ku).chain(&f).fold(0.0f64, |m, v| m.max(v.norm())).max(1e-300);
        for i in 0..n {
            assert!((ma[i] + cv[i] + ku[i] - f[i]).norm() <= 1e-10 * scale, "step {j}");
        }
    }
}

#[test]
fn two_level_run_on_two_decks() {
    let spec = small_spec();
    let sys = two_decks();
    let p = two_deck_params();
    // The clamped pair responds above the default band; widen the grid.
    let grid = build_frequency_grid(spec.sigma_ref(), 10, 8).unwrap();
    let time = spec.time_config();
    let run =
        run_two_level(&sys, &p, &grid, &GreedyConfig::default(), &time, Projection::PetrovGalerkin, None).unwrap();
    assert!(run.converged);
    assert!(run.n_steps % 1000 == 0 && run.n_steps <= time.max_steps);
    assert!(run.richardson.iter().all(|r| r.delta > 0.0));
    assert!((1..=41).contains(&run.greedy.size()));
    let problem = FeProblem::from_system(&sys, &p, None).unwrap();
    let cmp = compare_with_truth(&problem, &run.rom, &run.history).unwrap();
    assert!(cmp.max_relative_error() <= 1e-2, "{}", cmp.max_relative_error());
    assert!(run.cost.total_seconds() > 0.0);
}

#[test]
fn zero_load_run_is_trivial() {
    let spec = small_spec();
    let sys = two_decks();
    let p = SystemParams::uniform(2, nominal_material());
    let q = sys.nodal_sampler(&[[7.5, 1.0]], 1).unwrap();
    let time = spec.time_config();
    let run = run_two_level(&sys, &p, &spec.frequency_grid().unwrap(), &GreedyConfig::default(), &time, Projection::PetrovGalerkin, Some(q))
        .unwrap();
    assert!(run.converged);
    assert_eq!(run.n_steps, 2 * time.n_steps_initial);
    assert_eq!(run.greedy.size(), 0);
    let out = qoi_extract(&run.rom, &run.history).unwrap();
    assert_eq!(out[0].len(), run.n_steps + 1);
    assert!(out[0].iter().all(|v| *v == 0.0));
}

#[test]
fn missing_time_signature_is_rejected() {
    let sys = lone_deck();
    let mut p = lone_deck_params();
    p.components[0].signature = None;
    assert!(FeProblem::from_system(&sys, &p, None).is_err());
}
