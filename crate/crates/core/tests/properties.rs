use cfmc::association::{AssociationState, Scenario};
use cfmc::fronthaul::{enforce_fronthaul, node_loads, FronthaulParams, ProcessingMode};
use cfmc::linalg::{circular_normal, CMat, CVec, C64};
use cfmc::precoding::{equal_stream_power, jpzf_user, pzf_local};
use cfmc::propagation::{correlated_shadowing, los_probability_uma, los_probability_umi, ShadowingModel};
use cfmc::geometry::Point;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pzf_is_unit_norm_and_nulls(seed in any::<u64>(), n in 2usize..16, frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ((n - 1) as f64 * frac) as usize;
        let target = circular_normal(&mut rng, n, 1.0);
        let protected: Vec<CVec> = (0..p).map(|_| circular_normal(&mut rng, n, 1.0)).collect();
        let w = pzf_local(&target, &protected).unwrap();
        prop_assert!((w.norm() - 1.0).abs() < 1e-10);
        for q in &protected {
            prop_assert!(q.normalize().dotc(&w).norm() < 1e-9);
        }
    }

    #[test]
    fn jpzf_nulls_and_aligns(seed in any::<u64>(), dim in 2usize..40, frac in 0.0f64..1.0, extra in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = ((dim - 1) as f64 * frac) as usize;
        let target = circular_normal(&mut rng, dim, 1.0);
        let others: Vec<CVec> = (0..r + extra).map(|_| circular_normal(&mut rng, dim, 1.0)).collect();
        let w = jpzf_user(&target, &others, r).unwrap();
        prop_assert!((w.norm() - 1.0).abs() < 1e-10);
        let d = target.dotc(&w);
        prop_assert!(d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
        let norms: Vec<f64> = others.iter().map(|v| v.norm()).collect();
        for j in cfmc::association::top_indices(&norms, r) {
            prop_assert!(others[j].normalize().dotc(&w).norm() < 1e-9);
        }
    }

    #[test]
    fn equal_stream_binding_node_is_tight(seed in any::<u64>(), m in 1usize..6, l in 0usize..4, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na, nb) = (3, 5);
        let q = CMat::from_fn(na * m + nb * l, k, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let p_ap: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..10.0)).collect();
        let p_bs: Vec<f64> = (0..l).map(|_| rng.random_range(1.0..40.0)).collect();
        let es = equal_stream_power(&q, na, nb, &p_ap, &p_bs);
        let ratios: Vec<f64> = (0..m).map(|i| es.ap_power(i) / p_ap[i])
            .chain((0..l).map(|i| es.bs_power(i) / p_bs[i]))
            .collect();
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        prop_assert!(max <= 1.0 + 1e-12);
        prop_assert!((max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fronthaul_pruning_postconditions(
        seed in any::<u64>(),
        k in 1usize..25,
        m in 1usize..6,
        l in 0usize..4,
        joint in any::<bool>(),
        users_fit in 1.0f64..12.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = AssociationState::empty(Scenario::Full, k, m, l);
        for i in 0..k {
            for n in 0..m + l {
                a.set_merged(i, n, rng.random_bool(0.6));
            }
        }
        let delta = DMatrix::from_fn(k, m + l, |_, _| 10f64.powf(rng.random_range(-13.0..-7.0)));
        let mut p = FronthaulParams {
            mode: if joint { ProcessingMode::Joint } else { ProcessingMode::Local },
            ..FronthaulParams::default()
        };
        p.f_limit = users_fit * p.data_per_user();
        let mut links = Vec::new();
        let (out, trace) = enforce_fronthaul(&a, &delta, 1e-13, 8, 32, &p, |s| {
            links.push(s.link_count());
            Ok(())
        }).unwrap();
        prop_assert!(links.windows(2).all(|w| w[1] < w[0]));
        prop_assert_eq!(links.len(), trace.iterations + 1);
        let loads = node_loads(&out, 8, 32, &p);
        prop_assert!(loads.iter().all(|&f| f - p.f_limit <= 0.0));
        // only links are removed, never added
        for i in 0..k {
            for n in 0..m + l {
                prop_assert!(a.merged(i, n) || !out.merged(i, n));
            }
        }
        let (again, t2) = enforce_fronthaul(&out, &delta, 1e-13, 8, 32, &p, |_| Ok(())).unwrap();
        prop_assert_eq!(again, out);
        prop_assert_eq!(t2.iterations, 0);
    }

    #[test]
    fn los_probability_bounds(d in 0.0f64..5000.0) {
        let uma = los_probability_uma(d, 1.5).unwrap();
        let umi = los_probability_umi(d);
        if d <= 18.0 {
            prop_assert_eq!(uma, 1.0);
            prop_assert_eq!(umi, 1.0);
        } else {
            prop_assert!(uma > 0.0 && uma < 1.0);
            prop_assert!(umi > 0.0 && umi < 1.0);
        }
    }
}

#[test]
fn shadowing_marginals_are_gaussian() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for model in [ShadowingModel::BS, ShadowingModel::AP] {
        let z = correlated_shadowing(&model, &[Point::new(0.0, 0.0)], 100_000, &mut rng).unwrap();
        let mut v: Vec<f64> = z.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, model.sigma_db).unwrap();
        let n = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic Kolmogorov-Smirnov critical value at the 1% level
        let crit = 1.628 / n.sqrt();
        assert!(d < crit, "KS statistic {d} vs {crit}");
    }
}
