//! Downlink SINR, spectral efficiency, CDFs and the Monte Carlo driver.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::association::{associate, Scenario};
use crate::config::SimConfig;
use crate::error::Result;
use crate::fronthaul::{enforce_fronthaul, FronthaulTrace};
use crate::geometry::{build_hex_layout, NetworkLayout, UserClass};
use crate::linalg::{CVec, C64};
use crate::pilots::{assign_pilots, lmmse_estimate, perfect_csi, uplink_training_rx};
use crate::precoding::{compute_precoders, Precoder, PrecoderPowerSet};
use crate::propagation::{compute_large_scale, draw_channels, ChannelSet};

/// SINR of every user. Beamformers may come from estimates, but the
/// received signal is always formed with the true channels.
pub fn dl_sinr(channels: &ChannelSet, plan: &PrecoderPowerSet, noise_var: f64) -> Vec<f64> {
    let k_users = plan.beams.len();
    let tx: Vec<Vec<(usize, CVec)>> = plan
        .beams
        .iter()
        .map(|b| b.iter().map(|s| (s.node, s.transmit_vector())).collect())
        .collect();
    (0..k_users)
        .map(|k| {
            let received = |j: usize| -> C64 {
                tx[j]
                    .iter()
                    .map(|(n, v)| {
                        let ch = channels.merged(k, *n);
                        if v.len() == ch.len() {
                            ch.dotc(v)
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                    .sum()
            };
            let signal = received(k).norm_sqr();
            let interference: f64 = (0..k_users).filter(|&j| j != k).map(|j| received(j).norm_sqr()).sum();
            signal / (interference + noise_var)
        })
        .collect()
}

/// Fraction of the coherence block spent on downlink data.
pub fn se_prefactor(tau_p: usize, tau_c: usize) -> f64 {
    let tau_d = (tau_c - tau_p) as f64 / 2.0;
    tau_d / tau_c as f64
}

/// Spectral efficiency of one SINR sample.
pub fn spectral_efficiency(sinr: f64, tau_p: usize, tau_c: usize) -> f64 {
    se_prefactor(tau_p, tau_c) * (1.0 + sinr).log2()
}

/// Upper bound on the spectral efficiency of each user, averaging over
/// its SINR samples.
pub fn se_upper_bound(sinr_samples: &[Vec<f64>], tau_p: usize, tau_c: usize) -> Vec<f64> {
    sinr_samples
        .iter()
        .map(|s| {
            if s.is_empty() {
                return 0.0;
            }
            let mean = s.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / s.len() as f64;
            se_prefactor(tau_p, tau_c) * mean
        })
        .collect()
}

/// Empirical CDF as sorted `(value, fraction)` pairs.
pub fn cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// Sample median (midpoint of the two central values for even counts).
pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSample {
    pub user_id: usize,
    pub class: UserClass,
    pub sinr: f64,
    pub se: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub precoder: Precoder,
    pub alpha: f64,
    /// Users of the evaluation cells only.
    pub users: Vec<UserSample>,
    pub fh_trace: Option<FronthaulTrace>,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream reserved for frozen geometry, distinct from every trial stream.
const GEOMETRY_STREAM: u64 = u64::MAX;

fn populate(base: &NetworkLayout, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<NetworkLayout> {
    base.place_aps(cfg.ap_mode, cfg.aps_per_cell, rng).drop_users(cfg.users_per_sector, rng)
}

/// Runs a single trial of the full pipeline.
pub fn run_trial(cfg: &SimConfig, base: &NetworkLayout, frozen: Option<&NetworkLayout>, trial: usize) -> Result<TrialResult> {
    let mut rng = trial_rng(cfg.master_seed, trial as u64);
    let layout = match frozen {
        Some(l) => l.clone(),
        None => populate(base, cfg, &mut rng)?,
    };
    let large = compute_large_scale(&layout, &cfg.propagation(), &mut rng)?;
    let channels = draw_channels(&large, cfg.n_ant_ap, cfg.n_ant_bs, &mut rng);
    let noise_var = cfg.noise_var();
    let train_powers = vec![cfg.train_power(); layout.n_ues()];
    let est = if cfg.perfect_csi {
        perfect_csi(&channels, &large, &train_powers, cfg.n_ant_ap, cfg.n_ant_bs)
    } else {
        let book = assign_pilots(&layout.ues, cfg.tau_p)?;
        let obs = uplink_training_rx(&channels, &book, &train_powers, noise_var, &mut rng);
        lmmse_estimate(&obs, &book, &large, &train_powers, noise_var, cfg.n_ant_ap, cfg.n_ant_bs)
    };
    let assoc = associate(
        cfg.scenario,
        &large.rho_matrix(),
        &large.beta_matrix(),
        cfg.n_serving_ap,
        cfg.n_serving_bs,
        cfg.n_ant_ap,
        cfg.n_ant_bs,
    );
    let params = cfg.precoding();

    let (plan, fh_trace) = if cfg.fronthaul_enforce {
        let delta = nalgebra::DMatrix::from_fn(layout.n_ues(), assoc.n_nodes(), |k, n| large.merged(k, n));
        let mut last = None;
        let (_, trace) = enforce_fronthaul(
            &assoc,
            &delta,
            noise_var,
            cfg.n_ant_ap,
            cfg.n_ant_bs,
            &cfg.fronthaul(),
            |state| {
                last = Some(compute_precoders(cfg.precoder, state, &est, &large, &params)?);
                Ok(())
            },
        )?;
        // the callback last ran on the final association
        (last.expect("callback runs at least once"), Some(trace))
    } else {
        (compute_precoders(cfg.precoder, &assoc, &est, &large, &params)?, None)
    };

    let sinr = dl_sinr(&channels, &plan, noise_var);
    let mut users = Vec::new();
    for k in 0..layout.n_ues() {
        if !layout.is_evaluated(layout.ue_cells[k]) {
            continue;
        }
        if plan.beams[k].is_empty() {
            warn!("trial {trial}: user {k} has no serving node");
        }
        let se = spectral_efficiency(sinr[k], cfg.tau_p, cfg.tau_c);
        users.push(UserSample {
            user_id: k,
            class: layout.classify(k),
            sinr: sinr[k],
            se,
            rate_bps: se * cfg.bandwidth_hz,
        });
    }
    debug!("trial {trial} done");
    Ok(TrialResult {
        trial,
        seed: cfg.master_seed,
        scenario: cfg.scenario,
        precoder: cfg.precoder,
        alpha: cfg.alpha,
        users,
        fh_trace,
    })
}

/// Runs `cfg.trials` independent trials in parallel. Trial `t` draws from
/// stream `t` of a generator seeded with `master_seed`, so results do not
/// depend on scheduling; they are returned in trial order.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let base = build_hex_layout(cfg.isd, cfg.n_center_sites, cfg.n_ring_sites)?;
    let frozen = if cfg.freeze_geometry {
        Some(populate(&base, cfg, &mut trial_rng(cfg.master_seed, GEOMETRY_STREAM))?)
    } else {
        None
    };
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &base, frozen.as_ref(), t))
        .collect()
}

/// Rates of all evaluated users of `class`, pooled over trials.
pub fn pooled_rates(results: &[TrialResult], class: UserClass) -> Vec<f64> {
    results
        .iter()
        .flat_map(|r| r.users.iter())
        .filter(|u| u.class == class)
        .map(|u| u.rate_bps)
        .collect()
}

pub fn all_rates(results: &[TrialResult]) -> Vec<f64> {
    results.iter().flat_map(|r| r.users.iter()).map(|u| u.rate_bps).collect()
}
