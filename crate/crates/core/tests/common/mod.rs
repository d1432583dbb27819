#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use faer::Mat;
use nalgebra::DMatrix;
use prrbc::bench::{instantiate_bridge, train_bridge_library, BenchmarkSpec};
use prrbc::forms::{LoadParams, MaterialParams, TimeSignature};
use prrbc::linalg::{c64, to_dense, SpMat};
use prrbc::multicomp::Placement;
use prrbc::offline::TrainedLibrary;
use prrbc::online::{instantiate_system, SystemLayout, SystemModel, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coarse bridge: quick to train, same structure as the full benchmark.
pub fn small_spec() -> BenchmarkSpec {
    let mut s = BenchmarkSpec::default();
    s.geometry.nx_per_length = 6;
    s.geometry.ny = 3;
    s
}

pub fn library() -> Arc<TrainedLibrary> {
    static LIB: OnceLock<Arc<TrainedLibrary>> = OnceLock::new();
    LIB.get_or_init(|| Arc::new(train_bridge_library(&small_spec()).expect("training"))).clone()
}

pub fn bridge() -> &'static SystemModel {
    static SYS: OnceLock<SystemModel> = OnceLock::new();
    SYS.get_or_init(|| instantiate_bridge(&small_spec(), library()).expect("bridge"))
}

/// Plain deck followed by a loaded deck, both outer ends clamped.
pub fn two_decks() -> SystemModel {
    let l = small_spec().geometry.length;
    let layout = SystemLayout::chain(&[(3, Placement::at(0.0, 0.0)), (4, Placement::at(l, 0.0))]);
    instantiate_system(&layout, library()).expect("two decks")
}

pub fn nominal_material() -> MaterialParams {
    let m = small_spec().material;
    MaterialParams { e: m.e, nu: m.nu, rho: m.rho, alpha: 0.5 * m.alpha, beta: 0.5 * m.beta }
}

pub fn example_load() -> LoadParams {
    let s = small_spec();
    LoadParams { force: -15.0 * s.material.e / s.t_ref(), x_center: 2.5, sigma_x: 0.03, friction: 0.6, active: true }
}

pub fn two_deck_params() -> SystemParams {
    let s = small_spec();
    let mut p = SystemParams::uniform(2, nominal_material());
    p.components[1].load = Some(example_load());
    p.components[1].signature = Some(TimeSignature { sigma_t: s.sigma_ref() });
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Mat<f64> {
    Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

pub fn to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn sparse_to_na(a: &SpMat) -> DMatrix<f64> {
    to_na(&to_dense(a))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}
