use proptest::prelude::*;
use randla::detkernels::{eigh, orth, pinv, qrcp, svd, CountingOperator};
use randla::lowrank::{
    curd1, evd1, evd2, frob_estimate, osid1, osid1_sketch, osid_qrcp, qb1, qb2, qb3, rf1, rocs1, spectral_bound, svd1,
    tsog1, Axis, PowerConfig,
};
use randla::synth::{
    compose, gaussian_matrix, gen_matrix, psd_with_eigenvalues, random_orthonormal, MatrixSpec, Spectrum,
};
use randla::{DMatrix, DVector, RngKey};

fn key(tag: u64) -> RngKey {
    RngKey::new(0x10e4).derive(tag)
}

fn spectrum_matrix(m: usize, n: usize, sigma: &[f64], seed: RngKey) -> DMatrix<f64> {
    let p = sigma.len();
    compose(
        &random_orthonormal(m, p, seed.derive(1)),
        &DVector::from_column_slice(sigma),
        &random_orthonormal(n, p, seed.derive(2)),
    )
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    svd(a).sigma.get(0).copied().unwrap_or(0.0)
}

/// sin of the angle between `v` and range(`q`), for orthonormal `q`.
fn angle_to_range(q: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v - q * q.tr_mul(v)).norm() / v.norm()
}

#[test]
fn oblivious_sketch_never_touches_the_matrix() {
    let a = CountingOperator::new(gaussian_matrix(30, 20, key(1)));
    let s = tsog1(&a, 5, &PowerConfig::with_passes(0), key(2)).unwrap();
    assert_eq!(s.shape(), (20, 5));
    assert_eq!(a.total(), 0);
}

#[test]
fn pass_count_and_parity() {
    for p in 0..5 {
        let a = CountingOperator::new(gaussian_matrix(30, 20, key(3)));
        tsog1(&a, 4, &PowerConfig::with_passes(p), key(4)).unwrap();
        assert_eq!(a.total(), p);
        // Odd counts start from an m×k matrix, so the adjoint comes first
        // and is applied one more time than A.
        assert_eq!(a.adjoint_count(), p.div_ceil(2));
    }
}

#[test]
fn power_passes_improve_alignment() {
    let n = 60;
    let mut sigma = vec![1.0; n];
    sigma[0] = 10.0;
    let a = DMatrix::from_diagonal(&DVector::from_vec(sigma));
    let e1 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let better = (0..20)
        .filter(|&t| {
            let angle = |p| {
                let s = tsog1(&a, 2, &PowerConfig::with_passes(p), key(100 + t)).unwrap();
                angle_to_range(&orth(&(&a * s)), &e1)
            };
            angle(2) < angle(0)
        })
        .count();
    assert!(better > 10, "{better}/20");
}

#[test]
fn rangefinder_drops_rank() {
    let a = gaussian_matrix(40, 3, key(5)) * gaussian_matrix(3, 25, key(6));
    let q = rf1(&a, 5, &PowerConfig::default(), key(7)).unwrap();
    assert_eq!(q.ncols(), 3);
}

#[test]
fn rangefinder_recovers_an_orthonormal_range() {
    let a = random_orthonormal(50, 6, key(8));
    let q = rf1(&a, 6, &PowerConfig::default(), key(9)).unwrap();
    assert!((&a - &q * q.tr_mul(&a)).norm() < 1e-10);
}

#[test]
fn rangefinder_error_near_the_tail() {
    let spec = MatrixSpec::new(200, 100, Spectrum::Step { r: 10, gap: 100.0 }, key(10));
    let a = gen_matrix(&spec).unwrap();
    let ok = (0..20)
        .filter(|&t| {
            let q = rf1(&a, 10, &PowerConfig::with_passes(2), key(200 + t)).unwrap();
            spectral_norm(&(&a - &q * q.tr_mul(&a))) <= 3.0
        })
        .count();
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn qb1_identities() {
    let a = gaussian_matrix(40, 4, key(11)) * gaussian_matrix(4, 30, key(12));
    let cfg = PowerConfig::default();
    let f = qb1(&a, 6, &cfg, key(13)).unwrap();
    assert!((&f.b - f.q.tr_mul(&a)).amax() == 0.0);
    assert!((&a - f.reconstruct()).norm() <= 1e-8 * a.norm());

    let g = gaussian_matrix(40, 30, key(14));
    let f = qb1(&g, 6, &cfg, key(15)).unwrap();
    let q = rf1(&g, 6, &cfg, key(15)).unwrap();
    assert_eq!((&g - f.reconstruct()).norm(), (&g - &q * q.tr_mul(&g)).norm());
}

#[test]
fn qb2_stops_early_on_concentrated_mass() {
    let mut sigma = vec![(0.1f64 / 48.0).sqrt(); 50];
    sigma[0] = 0.8f64.sqrt();
    sigma[1] = 0.1f64.sqrt();
    let a = spectrum_matrix(80, 50, &sigma, key(16));
    let f = qb2(&a, 20, 0.5, 2, &PowerConfig::default(), key(17)).unwrap();
    assert!(f.rank() <= 4, "rank {}", f.rank());
    let direct = (&a - f.reconstruct()).norm();
    assert!(direct <= 0.5 * a.norm());
    let tracked = f.squared_error.unwrap().sqrt();
    assert!((tracked - direct).abs() <= 1e-6 * direct);
}

#[test]
fn qb2_full_rank_is_exact() {
    let a = gaussian_matrix(30, 20, key(18));
    let f = qb2(&a, 20, 0.0, 3, &PowerConfig::default(), key(19)).unwrap();
    assert!((&a - f.reconstruct()).norm() <= 1e-8 * a.norm());
}

#[test]
fn qb3_matches_qb2_on_a_gapped_matrix() {
    let spec = MatrixSpec::new(150, 80, Spectrum::Step { r: 8, gap: 1e3 }, key(20));
    let a = gen_matrix(&spec).unwrap();
    let cfg = PowerConfig::default();
    let e2 = (&a - qb2(&a, 8, 0.0, 4, &cfg, key(21)).unwrap().reconstruct()).norm();
    let e3 = (&a - qb3(&a, 8, 0.0, 4, &cfg, key(21)).unwrap().reconstruct()).norm();
    assert!((e2 - e3).abs() <= 1e-4 * e2, "{e2} vs {e3}");
}

#[test]
fn qb3_tracks_exact_rank() {
    let a = gaussian_matrix(60, 5, key(22)) * gaussian_matrix(5, 40, key(23));
    let f = qb3(&a, 12, 0.0, 3, &PowerConfig::default(), key(24)).unwrap();
    assert!(f.squared_error.unwrap() <= 1e-6 * a.norm_squared());
    assert!(qb3(&a, 40, 0.0, 3, &PowerConfig::default(), key(24)).is_err());
}

#[test]
fn qb3_reads_the_matrix_twice() {
    let a = CountingOperator::new(gaussian_matrix(60, 40, key(25)));
    qb3(&a, 10, 0.0, 2, &PowerConfig::with_passes(0), key(26)).unwrap();
    assert_eq!((a.forward_count(), a.adjoint_count()), (1, 1));
}

#[test]
fn svd1_leading_values() {
    let mut sigma = vec![0.1; 40];
    sigma[0] = 10.0;
    sigma[1] = 5.0;
    sigma[2] = 1.0;
    let a = spectrum_matrix(100, 40, &sigma, key(27));
    let f = svd1(&a, 2, 0.0, 2, &PowerConfig::with_passes(2), key(28)).unwrap();
    assert_eq!(f.rank(), 2);
    assert!((f.sigma[0] - 10.0).abs() <= 0.5 && (f.sigma[1] - 5.0).abs() <= 0.25);
}

#[test]
fn svd1_exact_on_low_rank() {
    let a = gaussian_matrix(50, 4, key(29)) * gaussian_matrix(4, 30, key(30));
    let f = svd1(&a, 4, 0.0, 5, &PowerConfig::default(), key(31)).unwrap();
    assert!(f.rank() <= 4);
    assert!((&a - f.reconstruct()).norm() <= 1e-8 * a.norm());
}

#[test]
fn evd1_indefinite_diagonal() {
    let n = 30;
    let mut d = vec![0.1; n];
    d[0] = 5.0;
    d[1] = -4.0;
    let a = DMatrix::from_diagonal(&DVector::from_vec(d));
    let f = evd1(&a, 2, 0.0, 5, &PowerConfig::default(), key(32)).unwrap();
    assert!((f.lambda[0] - 5.0).abs() <= 0.25 && (f.lambda[1] + 4.0).abs() <= 0.2, "{:?}", f.lambda);
    assert!(f.lambda.iter().zip(f.lambda.iter().skip(1)).all(|(x, y)| x.abs() >= y.abs()));
}

#[test]
fn evd1_exact_on_low_rank_psd() {
    let g = gaussian_matrix(40, 3, key(33));
    let a = &g * g.transpose();
    let f = evd1(&a, 3, 0.0, 5, &PowerConfig::default(), key(34)).unwrap();
    assert!((&a - f.reconstruct()).norm() <= 1e-8 * a.norm());
}

#[test]
fn evd2_recovers_leading_eigenvalues() {
    let mut lambda = vec![1e-12; 50];
    lambda[0] = 1.0;
    lambda[1] = 0.5;
    let a = psd_with_eigenvalues(&lambda, key(35));
    let f = evd2(&a, 2, 5, key(36), 1).unwrap();
    assert!((f.lambda[0] - 1.0).abs() <= 0.01 && (f.lambda[1] - 0.5).abs() <= 0.005);
    let z = evd2(&DMatrix::<f64>::zeros(20, 20), 3, 2, key(37), 1).unwrap();
    assert_eq!(z.rank(), 0);
}

#[test]
fn nystrom_approximation_is_dominated() {
    for t in 0..10 {
        let lambda: Vec<f64> = (0..40).map(|j| (-0.3 * j as f64).exp()).collect();
        let a = psd_with_eigenvalues(&lambda, key(300 + t));
        let f = evd2(&a, 5, 3, key(400 + t), 1).unwrap();
        assert!(f.lambda.iter().all(|&l| l >= 0.0));
        let (gap, _) = eigh(&(&a - f.reconstruct()));
        assert!(gap.min() >= -1e-8 * spectral_norm(&a), "seed {t}: {}", gap.min());
    }
}

#[test]
fn id_of_prepivoted_identity_block() {
    let w = gaussian_matrix(3, 4, key(38)) * 0.1;
    let mut y = DMatrix::zeros(3, 7);
    y.view_mut((0, 0), (3, 3)).copy_from(&DMatrix::<f64>::identity(3, 3));
    y.view_mut((0, 3), (3, 4)).copy_from(&w);
    let id = osid_qrcp(&y, 3, Axis::Column).unwrap();
    assert_eq!(id.skeleton, vec![0, 1, 2]);
    assert!((id.m.columns(3, 4) - w).amax() < 1e-14);
    assert_eq!(id.m.columns(0, 3).into_owned(), DMatrix::<f64>::identity(3, 3));
}

#[test]
fn id_error_equals_qrcp_truncation() {
    let y = gaussian_matrix(4, 8, key(39));
    let id = osid_qrcp(&y, 3, Axis::Column).unwrap();
    let full = qrcp(&y, None);
    let tail = full.r.view((3, 3), (1, 5)).norm();
    let err = (&y - id.reconstruct(&y)).norm();
    assert!((err - tail).abs() <= 1e-12 * y.norm());

    let low = gaussian_matrix(10, 3, key(40)) * gaussian_matrix(3, 12, key(41));
    for axis in [Axis::Column, Axis::Row] {
        let id = osid_qrcp(&low, 3, axis).unwrap();
        assert!((&low - id.reconstruct(&low)).norm() <= 1e-8 * low.norm());
    }
}

#[test]
fn osid1_exact_and_skeleton_identity() {
    let a = gaussian_matrix(60, 4, key(42)) * gaussian_matrix(4, 50, key(43));
    for axis in [Axis::Column, Axis::Row] {
        let id = osid1(&a, 4, 5, axis, &PowerConfig::with_passes(1), key(44)).unwrap();
        assert!((&a - id.reconstruct(&a)).norm() <= 1e-8 * a.norm());
        let block = match axis {
            Axis::Column => DMatrix::from_fn(4, 4, |i, c| id.m[(i, id.skeleton[c])]),
            Axis::Row => DMatrix::from_fn(4, 4, |r, i| id.m[(id.skeleton[r], i)]),
        };
        assert_eq!(block, DMatrix::<f64>::identity(4, 4));
    }
}

#[test]
fn osid1_bound_without_oversampling() {
    let spec = MatrixSpec::new(80, 60, Spectrum::Exp { decay: 0.3 }, key(45));
    let a = gen_matrix(&spec).unwrap();
    let cfg = PowerConfig::with_passes(1);
    let y = osid1_sketch(&a, 6, 0, Axis::Column, &cfg, key(46)).unwrap();
    let id = osid_qrcp(&y, 6, Axis::Column).unwrap();
    let approx = &a * pinv(&y) * &y;
    let lhs = spectral_norm(&(&a - id.reconstruct(&a)));
    let rhs = (1.0 + id.interp_norm()) * spectral_norm(&(&a - approx));
    assert!(lhs <= rhs * (1.0 + 1e-10), "{lhs} > {rhs}");
}

#[test]
fn rocs1_finds_the_dominant_column() {
    for t in 0..20 {
        let mut a = gaussian_matrix(40, 25, key(500 + t));
        let j = (t as usize * 7) % 25;
        a.column_mut(j).scale_mut(1e3);
        let idx = rocs1(&a, 3, 2, Axis::Column, &PowerConfig::default(), key(600 + t)).unwrap();
        assert_eq!(idx[0], j, "seed {t}");
    }
}

#[test]
fn rocs1_full_selection_distinct_and_deterministic() {
    let a = gaussian_matrix(30, 12, key(47));
    let cfg = PowerConfig::default();
    let idx = rocs1(&a, 12, 0, Axis::Column, &cfg, key(48)).unwrap();
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..12).collect::<Vec<_>>());
    assert_eq!(idx, rocs1(&a, 12, 0, Axis::Column, &cfg, key(48)).unwrap());
}

#[test]
fn cur_exact_on_low_rank_both_shapes() {
    let tall = gaussian_matrix(50, 4, key(49)) * gaussian_matrix(4, 30, key(50));
    let wide = tall.transpose();
    for a in [tall, wide] {
        let f = curd1(&a, 4, 3, &PowerConfig::default(), key(51)).unwrap();
        assert!((&a - f.reconstruct(&a)).norm() <= 1e-6 * a.norm());
    }
}

#[test]
fn cur_error_close_to_truncated_svd() {
    let spec = MatrixSpec::new(120, 80, Spectrum::Step { r: 5, gap: 50.0 }, key(52));
    let a = gen_matrix(&spec).unwrap();
    let optimal = svd(&a).sigma.iter().skip(5).map(|s| s * s).sum::<f64>().sqrt();
    let ok = (0..20)
        .filter(|&t| {
            let f = curd1(&a, 5, 5, &PowerConfig::default(), key(700 + t)).unwrap();
            (&a - f.reconstruct(&a)).norm() <= 10.0 * optimal
        })
        .count();
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn spectral_bound_cases() {
    assert_eq!(spectral_bound(&DMatrix::<f64>::zeros(5, 5), 3, 2.0, key(53)), 0.0);
    let id = DMatrix::<f64>::identity(20, 20);
    let held = (0..1000).filter(|&t| spectral_bound(&id, 10, 2.0, key(1000 + t)) >= 1.0).count();
    assert!(held >= 995, "{held}/1000");
    let a = gaussian_matrix(8, 6, key(54));
    let twice = &a * 2.0;
    let (b1, b2) = (spectral_bound(&a, 4, 3.0, key(55)), spectral_bound(&twice, 4, 3.0, key(55)));
    assert!((b2 - 2.0 * b1).abs() <= 1e-14 * b2);
}

#[test]
fn frob_estimate_of_identity_and_rank_one() {
    let n = 15;
    let r = 4;
    let seed = key(56);
    let z = DMatrix::from_vec(n, r, randla::rng::gaussian_stream(seed, n * r));
    let est = frob_estimate(&DMatrix::<f64>::identity(n, n), r, seed);
    assert!((est - z.norm_squared() / r as f64).abs() < 1e-12 * est);

    let u = randla::synth::gaussian_vector(10, key(57));
    let v = randla::synth::gaussian_vector(n, key(58));
    let a = &u * v.transpose();
    let direct: f64 = z.column_iter().map(|c| v.dot(&c).powi(2)).sum::<f64>() / r as f64;
    let est = frob_estimate(&a, r, seed) / u.norm_squared();
    assert!((est - direct).abs() <= 1e-12 * direct);
}

#[test]
fn frob_estimate_unbiased() {
    let a = gaussian_matrix(12, 10, key(59));
    let r = 3;
    let trials = 2000;
    let truth = a.norm_squared();
    let mean = (0..trials).map(|t| frob_estimate(&a, r, key(2000 + t))).sum::<f64>() / trials as f64;
    let var_bound = 2.0 / r as f64 * spectral_norm(&a).powi(2) * truth;
    assert!((mean - truth).abs() <= 3.0 * (var_bound / trials as f64).sqrt(), "{mean} vs {truth}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn drivers_never_beat_the_optimum(k in 1usize..8, seed in any::<u64>()) {
        let spec = MatrixSpec::new(40, 30, Spectrum::Power { decay: 1.0 }, RngKey::new(seed));
        let a = gen_matrix(&spec).unwrap();
        let s = spec.singular_values();
        let optimal = s.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt();
        let cfg = PowerConfig::default();
        let errors = [
            (&a - qb1(&a, k, &cfg, RngKey::new(seed ^ 1)).unwrap().reconstruct()).norm(),
            (&a - svd1(&a, k, 0.0, 3, &cfg, RngKey::new(seed ^ 2)).unwrap().reconstruct()).norm(),
            (&a - osid1(&a, k, 3, Axis::Column, &cfg, RngKey::new(seed ^ 3)).unwrap().reconstruct(&a)).norm(),
            (&a - curd1(&a, k, 3, &cfg, RngKey::new(seed ^ 4)).unwrap().reconstruct(&a)).norm(),
        ];
        for e in errors {
            prop_assert!(e >= (1.0 - 1e-8) * optimal);
        }
    }

    #[test]
    fn qb_factors_orthonormal(k in 1usize..10, seed in any::<u64>()) {
        let a = gaussian_matrix(25, 18, RngKey::new(seed));
        let f = qb2(&a, k, 0.0, 3, &PowerConfig::default(), RngKey::new(seed ^ 5)).unwrap();
        let r = f.rank();
        prop_assert!((f.q.tr_mul(&f.q) - DMatrix::<f64>::identity(r, r)).amax() < 1e-10);
        prop_assert!((&f.b - f.q.tr_mul(&a)).amax() < 1e-10 * a.amax());
    }
}
