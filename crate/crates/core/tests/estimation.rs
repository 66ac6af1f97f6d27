use cfmc::geometry::{build_hex_layout, ApMode, NetworkLayout};
use cfmc::linalg::{CMat, C64};
use cfmc::pilots::{assign_pilots, lmmse_estimate, uplink_training_rx, PilotBook};
use cfmc::propagation::{compute_large_scale, draw_channels, FadingMode, LargeScaleSet, PropagationParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N_AP: usize = 4;
const N_BS: usize = 8;
const TRAIN: f64 = 9.6;
const NOISE: f64 = 6.3e-13;

/// Three users sharing two pilots around a single site with one AP.
fn setup(seed: u64) -> (NetworkLayout, LargeScaleSet, PilotBook, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_hex_layout(500.0, 1, 0)
        .unwrap()
        .place_aps(ApMode::Uniform, 1, &mut rng)
        .drop_users(1, &mut rng)
        .unwrap();
    let params = PropagationParams {
        fading: FadingMode::Rician,
        ..PropagationParams::default()
    };
    let large = compute_large_scale(&layout, &params, &mut rng).unwrap();
    let book = assign_pilots(&layout.ues, 2).unwrap();
    (layout, large, book, rng)
}

#[test]
fn pilots_are_shared() {
    let (_, _, book, _) = setup(1);
    let k = book.n_users();
    let shared = (0..k).any(|i| (0..k).any(|j| i != j && book.pilot_of(i) == book.pilot_of(j)));
    assert!(shared);
}

#[test]
fn estimation_error_is_uncorrelated_with_estimate() {
    let (layout, large, book, mut rng) = setup(2);
    let k_users = layout.n_ues();
    let nodes = layout.n_aps() + layout.n_bs();
    let train = vec![TRAIN; k_users];
    let trials = 10_000;
    let mut samples = vec![Vec::with_capacity(trials); k_users * nodes];
    for _ in 0..trials {
        let ch = draw_channels(&large, N_AP, N_BS, &mut rng);
        let obs = uplink_training_rx(&ch, &book, &train, NOISE, &mut rng);
        let est = lmmse_estimate(&obs, &book, &large, &train, NOISE, N_AP, N_BS);
        for k in 0..k_users {
            for n in 0..nodes {
                let g_hat = est.merged(k, n);
                let err = ch.merged(k, n) - g_hat;
                samples[k * nodes + n].push(g_hat.dotc(&err));
            }
        }
    }
    for (idx, s) in samples.iter().enumerate() {
        let n = s.len() as f64;
        let mean: C64 = s.iter().sum::<C64>() / n;
        let var_re = s.iter().map(|z| (z.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
        let var_im = s.iter().map(|z| (z.im - mean.im).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.re.abs() <= 3.0 * (var_re / n).sqrt(), "link {idx}: {mean}");
        assert!(mean.im.abs() <= 3.0 * (var_im / n).sqrt(), "link {idx}: {mean}");
    }
}

#[test]
fn estimate_covariance_matches_monte_carlo() {
    let (layout, large, book, mut rng) = setup(3);
    let k_users = layout.n_ues();
    let nodes = layout.n_aps() + layout.n_bs();
    let train = vec![TRAIN; k_users];
    let trials = 10_000;
    let mut acc: Vec<CMat> = (0..k_users * nodes)
        .map(|i| {
            let n = if i % nodes < layout.n_aps() { N_AP } else { N_BS };
            CMat::zeros(n, n)
        })
        .collect();
    let mut last = None;
    for _ in 0..trials {
        let ch = draw_channels(&large, N_AP, N_BS, &mut rng);
        let obs = uplink_training_rx(&ch, &book, &train, NOISE, &mut rng);
        let est = lmmse_estimate(&obs, &book, &large, &train, NOISE, N_AP, N_BS);
        for k in 0..k_users {
            for n in 0..nodes {
                let g = est.merged(k, n);
                acc[k * nodes + n] += g * g.adjoint();
            }
        }
        last = Some(est);
    }
    let est = last.unwrap();
    for k in 0..k_users {
        for n in 0..nodes {
            let emp = &acc[k * nodes + n] / C64::new(trials as f64, 0.0);
            let model = est.estimate_covariance(k, n, &large);
            let rel = (&emp - &model).norm() / model.norm();
            assert!(rel < 0.05, "user {k} node {n}: relative error {rel}");
        }
    }
}
