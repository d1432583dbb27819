mod common;

use common::*;
use faer::Mat;
use nalgebra::DMatrix;
use prrbc::forms::project_real;
use prrbc::linalg::{c64, to_dense, SpMat};
use prrbc::mesh::BoundaryTag;
use prrbc::offline::pod::{orthonormality_defect, Euclidean};
use prrbc::offline::*;
use prrbc::Error;
use proptest::prelude::*;

fn spd(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Mat<f64> {
    let b = random_mat(rng, n, n);
    Mat::from_fn(n, n, |i, j| {
        let s: f64 = (0..n).map(|k| b[(k, i)] * b[(k, j)]).sum();
        s + if i == j { 1.0 } else { 0.0 }
    })
}

#[test]
fn pod_matches_dense_gram_eigensolve() {
    let mut r = rng(11);
    let (n, m) = (40, 20);
    let s = random_mat(&mut r, n, m);
    let x = spd(&mut r, n);
    let res = pod(&s, &x, PodTarget::Size(m)).unwrap();

    let (sn, xn) = (to_na(&s), to_na(&x));
    let gram = sn.transpose() * &xn * &sn;
    let eig = gram.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    for (k, &i) in order.iter().enumerate() {
        assert!((res.eigenvalues[k] - eig.eigenvalues[i]).abs() <= 1e-10 * l1, "eigenvalue {k}");
    }
    // Oracle mode k is S y_k / sqrt(lambda_k); agreement up to sign.
    let modes = to_na(&res.modes);
    for (k, &i) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(i);
        let v = &sn * y / eig.eigenvalues[i].sqrt();
        let mk = modes.column(k);
        let dot = (v.transpose() * &xn * mk)[(0, 0)];
        assert!((dot.abs() - 1.0).abs() <= 1e-10, "mode {k}: {dot}");
    }
    assert!(orthonormality_defect(&res.modes, &x) <= 1e-10);
}

#[test]
fn pod_of_repeated_orthogonal_pair() {
    let s = Mat::from_fn(5, 8, |i, j| if i == j % 2 { (j + 1) as f64 } else { 0.0 });
    let r = pod(&s, &Euclidean(5), PodTarget::Tolerance(0.0)).unwrap();
    assert_eq!(r.eigenvalues.iter().filter(|l| **l > 0.0).count(), 2);
}

#[test]
fn pod_rejects_mismatched_inner_product() {
    let s = Mat::<f64>::zeros(4, 2);
    assert!(matches!(pod(&s, &Euclidean(3), PodTarget::Size(1)), Err(Error::DimensionMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pod_invariants(seed in 0u64..10_000, n in 3usize..25, m in 1usize..12, keep in 1usize..12) {
        let mut r = rng(seed);
        let s = random_mat(&mut r, n, m);
        let res = pod(&s, &Euclidean(n), PodTarget::Size(keep)).unwrap();
        prop_assert_eq!(res.eigenvalues.len(), m);
        prop_assert!(res.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(res.eigenvalues.iter().all(|l| *l >= 0.0));
        prop_assert_eq!(res.n_modes(), keep.min(m).min(n));
        prop_assert!(orthonormality_defect(&res.modes, &Euclidean(n)) <= 1e-10);
        // Total energy equals the trace of the correlation matrix.
        let energy: f64 = (0..m).map(|j| s.col_as_slice(j).iter().map(|v| v * v).sum::<f64>()).sum();
        let total: f64 = res.eigenvalues.iter().sum();
        prop_assert!((total - energy).abs() <= 1e-10 * energy);
    }
}

#[test]
fn bubbles_vanish_on_ports_and_dirichlet_dofs() {
    let lib = library();
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let mut fixed: Vec<usize> = arch.ports.iter().flat_map(|p| p.dofs.iter().copied()).collect();
        fixed.extend(arch.space.dirichlet_dofs());
        let spaces = c.variants.iter().flat_map(|v| v.bubbles.iter()).chain(c.inhomogeneity.iter());
        for b in spaces {
            for j in 0..b.n_modes() {
                let worst = fixed.iter().map(|&d| b.modes[(d, j)].abs()).fold(0.0, f64::max);
                assert!(worst <= 1e-12, "archetype {} {:?} mode {j}: {worst}", c.archetype, b.kind);
            }
        }
    }
}

#[test]
fn trained_spaces_are_orthonormal() {
    let lib = library();
    for p in &lib.port_spaces {
        assert!(orthonormality_defect(&p.modes, &p.inner_product) <= 1e-10, "port {}", p.reference_port);
        assert!(p.spectrum.windows(2).all(|w| w[0] >= w[1]));
    }
    for c in &lib.components {
        let h1 = &lib.archetype(c.archetype).unwrap().operators.h1;
        for b in c.variants.iter().flat_map(|v| v.bubbles.iter()).chain(c.inhomogeneity.iter()) {
            assert!(orthonormality_defect(&b.modes, h1) <= 1e-10);
            assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}

#[test]
fn port_spectra_are_dominated_by_the_first_mode() {
    let lib = library();
    for p in &lib.port_spaces {
        let kept = p.n_modes() - p.n_inhomogeneity_modes;
        let ratio = p.spectrum[0] / p.spectrum[kept - 1];
        assert!(ratio >= 10.0, "port {}: ratio {ratio}", p.reference_port);
    }
}

#[test]
fn reference_ports_have_expected_sizes() {
    let sizes = library().sizes();
    assert_eq!(sizes.port_spaces, vec![(1, 10), (2, 12), (3, 10)]);
    assert_eq!(sizes.inhomogeneity_bubbles, vec![(4, 10)]);
}

#[test]
fn projections_match_direct_triple_products() {
    let lib = library();
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let proj = c.projections.as_ref().unwrap();
        assert_eq!(ComponentProjections::N_TERMS, 2);
        let w = to_na(&c.function_set());
        assert_eq!(w.ncols(), proj.layout.n_cols);
        for (blocks, op) in [(&proj.mass, &arch.operators.mass_unit), (&proj.stiffness, &arch.operators.stiffness_unit)] {
            let direct = w.transpose() * sparse_to_na(op) * &w;
            let scale = direct.abs().max();
            assert!(max_abs_diff(&to_na(blocks), &direct) <= 1e-11 * scale);
        }
    }
}

fn split(a: &Mat<c64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re),
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im),
    )
}

#[test]
fn reduced_operator_from_blocks_matches_projected_fe_operator() {
    use rand::Rng;
    let lib = library();
    let mut r = rng(5);
    for c in &lib.components {
        let arch = lib.archetype(c.archetype).unwrap();
        let proj = c.projections.as_ref().unwrap();
        let mat = lib.spec.material.sample(&mut r);
        let omega = r.random_range(0.0..*lib.spec.omegas.last().unwrap());
        let [tm, ta] = mat.affine_coefficients(omega);
        let n = proj.layout.n_cols;
        let from_blocks = Mat::from_fn(n, n, |i, j| tm * proj.mass[(i, j)] + ta * proj.stiffness[(i, j)]);
        let (are, aim) = split(&to_dense(&arch.operators.frequency(&mat, omega).unwrap()));
        let w = to_na(&c.function_set());
        let (dre, dim) = (w.transpose() * are * &w, w.transpose() * aim * &w);
        let (bre, bim) = split(&from_blocks);
        let scale = dre.abs().max().max(dim.abs().max());
        assert!(max_abs_diff(&bre, &dre) <= 1e-11 * scale);
        assert!(max_abs_diff(&bim, &dim) <= 1e-11 * scale);
    }
}

#[test]
fn projected_load_rows_are_rows_of_the_function_set() {
    let lib = library();
    let c = lib.training(4).unwrap();
    let proj = c.projections.as_ref().unwrap();
    let w = c.function_set();
    assert!(!proj.load_dofs.is_empty());
    for (k, &d) in proj.load_dofs.iter().enumerate() {
        for j in 0..w.ncols() {
            assert_eq!(proj.load_rows[(k, j)], w[(d, j)]);
        }
    }
    let direct = project_real(&lib.archetype(4).unwrap().operators.mass_unit, &w);
    assert!(max_abs_diff(&to_na(&direct), &to_na(&proj.mass)) <= 1e-11 * to_na(&direct).abs().max());
}

fn degenerate_spec() -> LibrarySpec {
    let s = small_spec();
    let mut spec = s.library_spec().unwrap();
    spec.omegas = vec![0.0];
    spec.material.e = [s.material.e, s.material.e];
    spec.material.alpha_max = 0.0;
    spec.material.beta_max = 0.0;
    spec
}

#[test]
fn parameter_independent_operator_gives_one_lifting_bubble() {
    let spec = degenerate_spec();
    let archs: Vec<_> = spec.archetypes.iter().map(|a| build_archetype(&spec, a).unwrap()).collect();
    let cfg = TrainingConfig::default();
    let ctx = TrainingContext::new(&spec, &archs, &cfg);
    let arch = ctx.archetype(3).unwrap();
    let n = arch.port(BoundaryTag::Left).unwrap().n_dofs();
    let mode: Vec<f64> = (0..n).map(|i| if i % 2 == 1 { 1.0 } else { 0.0 }).collect();
    let b = build_lifting_bubbles(&ctx, arch, BoundaryTag::Left, &mode, 6, 6).unwrap();
    assert_eq!(b.n_modes(), 1);
}

#[test]
fn load_scaling_alone_gives_one_inhomogeneity_mode() {
    let mut spec = degenerate_spec();
    let l = spec.load;
    spec.load = LoadBox {
        force: l.force,
        x_center: [2.5, 2.5],
        sigma_x: [0.03, 0.03],
        friction: [0.6, 0.6],
    };
    let archs: Vec<_> = spec.archetypes.iter().map(|a| build_archetype(&spec, a).unwrap()).collect();
    let cfg = TrainingConfig::default();
    let ctx = TrainingContext::new(&spec, &archs, &cfg);
    let b = build_inhomogeneity_bubbles(&ctx, ctx.archetype(4).unwrap(), 8, 5).unwrap();
    assert_eq!(b.n_modes(), 1);
    assert!(b.eigenvalues[1] <= 1e-20 * b.eigenvalues[0]);
}

#[test]
fn inhomogeneity_bubbles_need_a_loaded_archetype() {
    let spec = small_spec().library_spec().unwrap();
    let archs: Vec<_> = spec.archetypes.iter().map(|a| build_archetype(&spec, a).unwrap()).collect();
    let cfg = TrainingConfig::default();
    let ctx = TrainingContext::new(&spec, &archs, &cfg);
    let r = build_inhomogeneity_bubbles(&ctx, ctx.archetype(3).unwrap(), 4, 2);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn lifting_variants_of_the_plain_deck() {
    let spec = small_spec().library_spec().unwrap();
    let v = lifting_variants(&spec, 3).unwrap();
    // Left member of port 2 and right member of port 3, each also mirrored.
    assert_eq!(v.len(), 4);
    assert!(v.contains(&LiftingVariant { side: BoundaryTag::Right, reference_port: 2, flip: false }));
    assert!(v.contains(&LiftingVariant { side: BoundaryTag::Left, reference_port: 3, flip: false }));
}

#[test]
fn mirrored_trace_flips_horizontal_components() {
    let mut v = vec![1.0, 2.0, 3.0, 4.0];
    mirror_trace(&mut v);
    assert_eq!(v, vec![-1.0, 2.0, -3.0, 4.0]);
}

#[test]
fn library_file_round_trip() {
    let lib = library();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.bin");
    save_library(&lib, &path).unwrap();
    let back = load_library(&path).unwrap();
    assert_eq!(back.spec, lib.spec);
    assert_eq!(back.port_spaces, lib.port_spaces);
    assert_eq!(back.components, lib.components);
    assert_eq!(back.sizes(), lib.sizes());
}

#[test]
fn damaged_library_files_are_rejected() {
    let lib = library();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.bin");
    save_library(&lib, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_library(&cut), Err(Error::CorruptFile(_))));

    let flipped = dir.path().join("flipped.bin");
    let mut b = bytes.clone();
    let last = b.len() - 3;
    b[last] ^= 0x5a;
    std::fs::write(&flipped, &b).unwrap();
    assert!(matches!(load_library(&flipped), Err(Error::CorruptFile(_))));

    let version = dir.path().join("version.bin");
    let mut b = bytes.clone();
    b[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&version, &b).unwrap();
    assert!(matches!(load_library(&version), Err(Error::Incompatible(_))));

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a library").unwrap();
    assert!(matches!(load_library(&junk), Err(Error::CorruptFile(_))));
}

#[test]
fn sparse_mass_is_symmetric_positive() {
    let lib = library();
    let m: &SpMat = &lib.archetype(3).unwrap().operators.mass_unit;
    let d = sparse_to_na(m);
    assert!(max_abs_diff(&d, &d.transpose()) <= 1e-12 * d.abs().max());
    assert!(d.cholesky().is_some());
}
