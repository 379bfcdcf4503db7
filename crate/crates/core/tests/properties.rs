use hyloc::crlb::{hybrid_crlb, CrlbKind};
use hyloc::harness::common_sigmas;
use hyloc::nalgebra::{DMatrix, DVector};
use hyloc::objective::{compute_weights, Problem};
use hyloc::seed::derive_seed;
use hyloc::sim::{inject_nlos, simulate_all, NlosConfig};
use hyloc::types::{generate_network, wrap_angle, Mask, MeasurementKind, NetworkGeometry, NoiseSigmas, Point, RssParams};
use hyloc::wls::{build_system, wls_solve};
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (0usize..15).prop_map(|i| Mask::all_methods()[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn active_weights_are_positive(n in 3usize..12, seed in 0u64..1000, sig in 0.05f64..5.0, mask in mask_strategy()) {
        let g = generate_network(n, 40.0, seed).unwrap();
        let d: Vec<f64> = g.anchors().iter().map(|m| (g.source() - m).norm()).collect();
        let w = compute_weights(Some(&d), &NoiseSigmas::uniform(n, sig, sig, sig, sig), mask, n).unwrap();
        for kind in MeasurementKind::ALL {
            let ws = w.for_kind(kind);
            if mask.contains(kind) {
                prop_assert!(ws.iter().all(|x| *x > 0.0));
            } else {
                prop_assert!(ws.iter().all(|x| *x == 0.0));
            }
        }
    }

    #[test]
    fn objective_is_nonnegative(seed in 0u64..1000, mask in mask_strategy(), x in -60.0f64..60.0, y in -60.0f64..60.0, z in -60.0f64..60.0) {
        let g = generate_network(6, 50.0, seed).unwrap();
        let sig = common_sigmas(6, 1.0);
        let m = simulate_all(&g, &RssParams::default(), &sig, seed + 1).unwrap();
        let w = compute_weights(None, &sig, mask, 6).unwrap();
        let p = Problem::new(g.anchors(), &m, &w, RssParams::default(), g.dim()).unwrap();
        prop_assert!(p.objective(Point::new(x, y, z)).unwrap() >= 0.0);
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn nlos_bias_is_nonnegative_and_bounded(seed in 0u64..1000, beta in 0.0f64..10.0, paths in 0usize..6) {
        let g = generate_network(6, 50.0, seed).unwrap();
        let m = simulate_all(&g, &RssParams::default(), &common_sigmas(6, 1.0), seed).unwrap();
        let out = inject_nlos(&m, 6, &NlosConfig::new(beta, paths, seed + 7)).unwrap();
        let toa = m.toa.as_ref().unwrap().iter().zip(out.toa.as_ref().unwrap());
        let mut biased = 0;
        for (a, b) in toa {
            prop_assert!(b - a >= 0.0 && b - a <= beta);
            if b != a {
                biased += 1;
            }
        }
        prop_assert!(biased <= paths);
        for (a, b) in m.rss.as_ref().unwrap().iter().zip(out.rss.as_ref().unwrap()) {
            prop_assert!(b - a >= 0.0 && b - a <= beta);
        }
    }

    #[test]
    fn seeds_are_path_dependent(base in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        prop_assume!(i != j);
        prop_assert_eq!(derive_seed(base, &[i, 1]), derive_seed(base, &[i, 1]));
        prop_assert_ne!(derive_seed(base, &[i]), derive_seed(base, &[j]));
        prop_assert_ne!(derive_seed(base, &[i, j]), derive_seed(base, &[j, i]));
    }
}

fn geometry(seed: u64) -> NetworkGeometry {
    generate_network(5, 50.0, seed).unwrap()
}

#[test]
fn enlarging_the_mask_never_loosens_the_bound() {
    let p = RssParams::default();
    for seed in 0..100 {
        let g = geometry(seed);
        let sigma = common_sigmas(5, 1.0);
        let masks = Mask::all_methods();
        let traces: Vec<Option<f64>> =
            masks.iter().map(|m| hybrid_crlb(*m, &g, &sigma, &p).unwrap().trace_crlb).collect();
        for (a, ta) in masks.iter().zip(&traces) {
            for (b, tb) in masks.iter().zip(&traces) {
                if let (true, Some(ta), Some(tb)) = (a.is_subset_of(*b), ta, tb) {
                    assert!(tb <= &(ta * (1.0 + 1e-12) + 1e-12), "seed {seed}: {b} {tb} > {a} {ta}");
                }
            }
        }
    }
}

#[test]
fn bound_grows_strictly_with_each_sigma() {
    let p = RssParams::default();
    let g = geometry(21);
    let base = common_sigmas(5, 1.0);
    let full = |s: &NoiseSigmas| hybrid_crlb(Mask::ALL, &g, s, &p).unwrap().trace_crlb.unwrap();
    let t0 = full(&base);
    for kind in MeasurementKind::ALL {
        let mut prev = t0;
        for factor in [1.5, 2.0, 4.0] {
            let mut s = base.clone();
            let list = match kind {
                MeasurementKind::Toa => &mut s.toa,
                MeasurementKind::Tdoa => &mut s.tdoa,
                MeasurementKind::Rss => &mut s.rss,
                MeasurementKind::Aoa => &mut s.aoa,
            };
            for v in list.iter_mut() {
                *v *= factor;
            }
            let t = full(&s);
            assert!(t > prev, "{kind} x{factor}: {t} <= {prev}");
            prev = t;
        }
    }
}

#[test]
fn hybrid_fim_is_sum_of_types() {
    let p = RssParams::default();
    let g = geometry(5);
    let sigma = common_sigmas(5, 0.7);
    let r = hybrid_crlb(Mask::ALL, &g, &sigma, &p).unwrap();
    assert_eq!(r.fim_by_type.len(), 5);
    let mut sum = DMatrix::zeros(3, 3);
    for kind in [CrlbKind::Toa, CrlbKind::Tdoa, CrlbKind::Rss, CrlbKind::AoaAzimuth, CrlbKind::AoaElevation] {
        sum += hybrid_crlb(Mask::ALL, &g, &sigma, &p).unwrap().fim_by_type[&kind].clone();
    }
    assert_eq!(sum, r.fim_hybrid);
    let inv = r.crlb.unwrap();
    assert!((&inv * &r.fim_hybrid - DMatrix::identity(3, 3)).norm() < 1e-9);
}

fn noisy(seed: u64, n: usize) -> (NetworkGeometry, hyloc::MeasurementSet, hyloc::objective::WeightSet) {
    let g = generate_network(n, 50.0, seed).unwrap();
    let sig = common_sigmas(n, 1.0);
    let m = simulate_all(&g, &RssParams::default(), &sig, seed + 3).unwrap();
    let w = compute_weights(m.toa.as_deref(), &sig, Mask::ALL, n).unwrap();
    (g, m, w)
}

#[test]
fn wls_matches_dense_normal_equations() {
    let p = RssParams::default();
    for seed in 0..20 {
        let (g, m, w) = noisy(seed, 8);
        let sys = build_system(&m, g.anchors(), &w, &p, g.dim()).unwrap();
        // (Aᵀ W A) x = Aᵀ W b solved by plain Gaussian elimination
        let k = sys.a.ncols();
        let mut ata = vec![vec![0.0; k + 1]; k];
        for r in 0..sys.a.nrows() {
            for i in 0..k {
                for j in 0..k {
                    ata[i][j] += sys.weights[r] * sys.a[(r, i)] * sys.a[(r, j)];
                }
                ata[i][k] += sys.weights[r] * sys.a[(r, i)] * sys.b[r];
            }
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&a, &b| ata[a][c].abs().total_cmp(&ata[b][c].abs())).unwrap();
            ata.swap(c, piv);
            for r in 0..k {
                if r != c {
                    let f = ata[r][c] / ata[c][c];
                    for j in c..=k {
                        ata[r][j] -= f * ata[c][j];
                    }
                }
            }
        }
        let oracle = DVector::from_iterator(k, (0..k).map(|i| ata[i][k] / ata[i][i]));
        let x = sys.solve().unwrap();
        assert!((&x - &oracle).norm() <= 1e-10 * oracle.norm(), "seed {seed}");
        let s = wls_solve(&m, g.anchors(), &w, &p, g.dim()).unwrap();
        assert!((s - Point::new(x[0], x[1], x[2])).norm() < 1e-12);
    }
}

#[test]
fn wls_is_translation_equivariant() {
    let p = RssParams::default();
    let shift = Point::new(120.0, -35.0, 7.5);
    for seed in 0..20 {
        let (g, m, w) = noisy(seed, 8);
        let moved: Vec<Point> = g.anchors().iter().map(|a| a + shift).collect();
        let s0 = wls_solve(&m, g.anchors(), &w, &p, g.dim()).unwrap();
        let s1 = wls_solve(&m, &moved, &w, &p, g.dim()).unwrap();
        assert!((s1 - (s0 + shift)).norm() < 1e-6, "seed {seed}: {}", (s1 - s0 - shift).norm());
    }
}
