//! Downlink beamforming and power control.
//!
//! Local precoders (MRT, PZF, MMSE) are computed per node from that node's
//! own estimates and paired with fractional power allocation. In the fully
//! cooperative scenario the CPU may instead compute joint partial
//! zero-forcing over the stacked channel of each user's serving set, with
//! one common power scalar chosen so that no node exceeds its budget.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::association::{top_indices, AssociationState, Scenario};
use crate::error::{Result, SimError};
use crate::linalg::{hermitian_inverse, inner, orth_basis, project_out, CMat, CVec, C64};
use crate::pilots::{link_covariance, EstimateSet};
use crate::propagation::LargeScaleSet;

/// Rank tolerance of the orthonormal-basis step, relative to the largest
/// column norm.
pub const ORTH_TOL: f64 = 1e-10;
/// A projected beamformer shorter than this fraction of its input is
/// treated as degenerate.
pub const DEGENERATE_FRAC: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precoder {
    Mrt,
    Pzf,
    Mmse,
    Jpzf,
}

impl Precoder {
    pub fn as_str(&self) -> &'static str {
        match self {
            Precoder::Mrt => "mrt",
            Precoder::Pzf => "pzf",
            Precoder::Mmse => "mmse",
            Precoder::Jpzf => "jpzf",
        }
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, Precoder::Jpzf)
    }
}

fn normalized(v: &CVec) -> Option<CVec> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v.unscale(n))
}

/// Maximum ratio transmission: the normalized local estimate.
pub fn mrt(estimate: &CVec) -> Result<CVec> {
    normalized(estimate).ok_or(SimError::ZeroBeamformer)
}

/// Local partial zero-forcing: projects the target estimate onto the
/// orthogonal complement of the protected users' estimates.
pub fn pzf_local(target: &CVec, protected: &[CVec]) -> Result<CVec> {
    let n = target.len();
    if !protected.is_empty() && protected.len() > n.saturating_sub(1) {
        return Err(SimError::invalid(format!(
            "{} protected users need more than {n} antennas",
            protected.len()
        )));
    }
    let basis = orth_basis(protected, ORTH_TOL);
    let w = project_out(target, &basis);
    if w.norm() <= DEGENERATE_FRAC * target.norm() {
        warn!("PZF target lies in the protected span; falling back to MRT");
        return mrt(target);
    }
    mrt(&w)
}

/// Node-level MMSE matrix `sum_j eta_j (g_j g_j^H + G_j - Ghat_j) + sigma^2 I`.
fn mmse_matrix(estimates: &[CVec], stats: &[CMat], stats_hat: &[CMat], etas: &[f64], noise_var: f64) -> CMat {
    let n = estimates.first().map_or(0, |v| v.len());
    let mut m = CMat::identity(n, n) * C64::new(noise_var, 0.0);
    for ((g, (s, sh)), &eta) in estimates.iter().zip(stats.iter().zip(stats_hat)).zip(etas) {
        let outer = g * g.adjoint();
        m += (outer + s - sh) * C64::new(eta, 0.0);
    }
    // keep it exactly Hermitian for the Cholesky step
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Local MMSE beamformer for `serving_estimates[target]`.
pub fn mmse_local(
    serving_estimates: &[CVec],
    stats: &[CMat],
    stats_hat: &[CMat],
    etas: &[f64],
    noise_var: f64,
    target: usize,
) -> Result<CVec> {
    let m = mmse_matrix(serving_estimates, stats, stats_hat, etas, noise_var);
    let inv = hermitian_inverse(&m);
    mrt(&(inv * &serving_estimates[target]))
}

/// Fractional power allocation. Returns `eta` as a `users x (M + L)`
/// matrix over merged node indices; unserved entries are zero.
pub fn fpa_powers(
    assoc: &AssociationState,
    large: &LargeScaleSet,
    alpha: f64,
    p_max_ap: &[f64],
    p_max_bs: &[f64],
) -> DMatrix<f64> {
    let n_aps = assoc.n_aps();
    let mut eta = DMatrix::zeros(assoc.n_ues(), assoc.n_nodes());
    for n in 0..assoc.n_nodes() {
        let served = assoc.served_by(n);
        if served.is_empty() {
            continue;
        }
        let p_max = if n < n_aps { p_max_ap[n] } else { p_max_bs[n - n_aps] };
        let weights: Vec<f64> = served.iter().map(|&k| large.merged(k, n).powf(-alpha)).collect();
        let total: f64 = weights.iter().sum();
        for (&k, w) in served.iter().zip(&weights) {
            eta[(k, n)] = p_max * w / total;
        }
    }
    eta
}

/// Stacked estimate of user `j` over the serving set of user `k`:
/// APs of `k` in index order, then its BSs.
pub fn stacked_estimate(est: &EstimateSet, serving: &[usize], j: usize) -> CVec {
    let dim: usize = serving.iter().map(|&n| est.merged(j, n).len()).sum();
    let mut out = CVec::zeros(dim);
    let mut at = 0;
    for &n in serving {
        let seg = est.merged(j, n);
        out.rows_mut(at, seg.len()).copy_from(seg);
        at += seg.len();
    }
    out
}

/// Joint PZF beamformer for one user. `others` holds the stacked
/// estimates of every other user; the `r` with the largest norm are
/// nulled. The result is rotated so that `target^H w` is real and positive.
pub fn jpzf_user(target: &CVec, others: &[CVec], r: usize) -> Result<CVec> {
    let dim = target.len();
    if dim < r {
        return Err(SimError::invalid(format!(
            "stacked dimension {dim} cannot protect {r} users"
        )));
    }
    let norms: Vec<f64> = others.iter().map(|v| v.norm()).collect();
    let chosen: Vec<CVec> = top_indices(&norms, r).into_iter().map(|j| others[j].clone()).collect();
    let basis = orth_basis(&chosen, ORTH_TOL);
    let mut w = project_out(target, &basis);
    if w.norm() <= DEGENERATE_FRAC * target.norm() {
        warn!("JPZF target lies in the protected span; falling back to the normalized estimate");
        w = target.clone();
    }
    let mut w = mrt(&w)?;
    let d = inner(target, &w);
    if d.norm() > 0.0 {
        w *= d.conj() / d.norm();
    }
    Ok(w)
}

/// Joint PZF for every user of a fully cooperative association. Users
/// without serving nodes get an empty vector.
pub fn jpzf(est: &EstimateSet, assoc: &AssociationState, r_jpzf: usize) -> Result<Vec<CVec>> {
    jpzf_impl(est, assoc, r_jpzf, false)
}

fn jpzf_impl(est: &EstimateSet, assoc: &AssociationState, r_jpzf: usize, clamp: bool) -> Result<Vec<CVec>> {
    let k_users = assoc.n_ues();
    let mut out = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let serving = assoc.serving(k);
        if serving.is_empty() {
            out.push(CVec::zeros(0));
            continue;
        }
        let target = stacked_estimate(est, &serving, k);
        let others: Vec<CVec> = (0..k_users).filter(|&j| j != k).map(|j| stacked_estimate(est, &serving, j)).collect();
        let mut r = r_jpzf.min(others.len());
        if clamp {
            r = r.min(target.len().saturating_sub(1));
        }
        match jpzf_user(&target, &others, r) {
            Ok(w) => out.push(w),
            Err(SimError::ZeroBeamformer) => out.push(CVec::zeros(target.len())),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Scatters each stacked beamformer into the `(N_AP M + N_BS L) x K`
/// matrix `Q`, AP blocks first, in the serving order of every user.
pub fn build_q(assoc: &AssociationState, stacked: &[CVec], n_ant_ap: usize, n_ant_bs: usize) -> CMat {
    let (m_aps, l_bs) = (assoc.n_aps(), assoc.n_bs());
    let mut q = CMat::zeros(n_ant_ap * m_aps + n_ant_bs * l_bs, assoc.n_ues());
    for (k, w) in stacked.iter().enumerate() {
        if w.is_empty() {
            continue;
        }
        let mut ind = 0;
        for m in 0..m_aps {
            if assoc.a[(k, m)] == 1 {
                let seg = w.rows(ind, n_ant_ap);
                q.view_mut((m * n_ant_ap, k), (n_ant_ap, 1)).copy_from(&seg);
                ind += n_ant_ap;
            }
        }
        for l in 0..l_bs {
            if assoc.b[(k, l)] == 1 {
                let seg = w.rows(ind, n_ant_bs);
                q.view_mut((n_ant_ap * m_aps + l * n_ant_bs, k), (n_ant_bs, 1)).copy_from(&seg);
                ind += n_ant_bs;
            }
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualStreamPower {
    /// Common per-stream power.
    pub eta: f64,
    /// Row-summed squared magnitudes of each AP block.
    pub q_ap: Vec<f64>,
    /// Row-summed squared magnitudes of each BS block.
    pub q_bs: Vec<f64>,
}

impl EqualStreamPower {
    pub fn ap_power(&self, m: usize) -> f64 {
        self.eta * self.q_ap[m]
    }

    pub fn bs_power(&self, l: usize) -> f64 {
        self.eta * self.q_bs[l]
    }
}

/// `eta = min_n P_n / q_n` over nodes that transmit.
pub fn equal_stream_power(
    q: &CMat,
    n_ant_ap: usize,
    n_ant_bs: usize,
    p_max_ap: &[f64],
    p_max_bs: &[f64],
) -> EqualStreamPower {
    let block = |start: usize, len: usize| -> f64 { q.rows(start, len).iter().map(|z| z.norm_sqr()).sum() };
    let q_ap: Vec<f64> = (0..p_max_ap.len()).map(|m| block(m * n_ant_ap, n_ant_ap)).collect();
    let off = n_ant_ap * p_max_ap.len();
    let q_bs: Vec<f64> = (0..p_max_bs.len()).map(|l| block(off + l * n_ant_bs, n_ant_bs)).collect();
    let eta = q_ap
        .iter()
        .zip(p_max_ap)
        .chain(q_bs.iter().zip(p_max_bs))
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, p)| p / q)
        .fold(f64::INFINITY, f64::min);
    let eta = if eta.is_finite() {
        eta
    } else {
        warn!("no node transmits; equal-stream power set to zero");
        0.0
    };
    EqualStreamPower { eta, q_ap, q_bs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub central_mults: u64,
    pub local_mults: u64,
}

/// Dominant complex-multiplication counts of the centralized and the local
/// PZF precoder computation.
pub fn precoder_complexity(
    n_serving_ap: u64,
    n_serving_bs: u64,
    n_ant_ap: u64,
    n_ant_bs: u64,
    n_pzf_ap: u64,
    n_pzf_bs: u64,
    r_jpzf: u64,
) -> Complexity {
    let dim = n_ant_ap * n_serving_ap + n_ant_bs * n_serving_bs;
    Complexity {
        central_mults: r_jpzf * r_jpzf * dim,
        local_mults: n_serving_bs * n_pzf_bs * n_pzf_bs * n_ant_bs + n_serving_ap * n_pzf_ap * n_pzf_ap * n_ant_ap,
    }
}

/// Beam of one serving link: `w` is unit-norm for local precoders; under
/// joint precoding it is the node's segment of the stacked beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingBeam {
    pub node: usize,
    pub w: CVec,
    pub eta: f64,
}

impl ServingBeam {
    /// `sqrt(eta) w`.
    pub fn transmit_vector(&self) -> CVec {
        &self.w * C64::new(self.eta.sqrt(), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPrecoding {
    pub stacked: Vec<CVec>,
    pub q: CMat,
    pub power: EqualStreamPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderPowerSet {
    pub precoder: Precoder,
    /// Serving beams per user.
    pub beams: Vec<Vec<ServingBeam>>,
    pub joint: Option<JointPrecoding>,
}

impl PrecoderPowerSet {
    /// Total transmit power of merged node `n`.
    pub fn node_power(&self, n: usize) -> f64 {
        self.beams
            .iter()
            .flatten()
            .filter(|b| b.node == n)
            .map(|b| b.eta * b.w.norm_squared())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingParams {
    pub n_pzf_ap: usize,
    pub n_pzf_bs: usize,
    pub r_jpzf: usize,
    pub alpha: f64,
    pub p_max_ap: Vec<f64>,
    pub p_max_bs: Vec<f64>,
    pub noise_var: f64,
}

/// Computes beamformers and powers for every serving link of `assoc`.
pub fn compute_precoders(
    precoder: Precoder,
    assoc: &AssociationState,
    est: &EstimateSet,
    large: &LargeScaleSet,
    params: &PrecodingParams,
) -> Result<PrecoderPowerSet> {
    let k_users = assoc.n_ues();
    let mut beams: Vec<Vec<ServingBeam>> = vec![Vec::new(); k_users];

    if precoder.is_joint() {
        if assoc.scenario != Scenario::Full {
            return Err(SimError::invalid("joint PZF requires the fully cooperative scenario"));
        }
        let stacked = jpzf_impl(est, assoc, params.r_jpzf, true)?;
        let q = build_q(assoc, &stacked, est.n_ant_ap, est.n_ant_bs);
        let power = equal_stream_power(&q, est.n_ant_ap, est.n_ant_bs, &params.p_max_ap, &params.p_max_bs);
        for (k, w) in stacked.iter().enumerate() {
            let mut at = 0;
            for n in assoc.serving(k) {
                let len = if n < assoc.n_aps() { est.n_ant_ap } else { est.n_ant_bs };
                beams[k].push(ServingBeam {
                    node: n,
                    w: w.rows(at, len).into_owned(),
                    eta: power.eta,
                });
                at += len;
            }
        }
        return Ok(PrecoderPowerSet {
            precoder,
            beams,
            joint: Some(JointPrecoding { stacked, q, power }),
        });
    }

    let eta = fpa_powers(assoc, large, params.alpha, &params.p_max_ap, &params.p_max_bs);
    for n in 0..assoc.n_nodes() {
        let served = assoc.served_by(n);
        if served.is_empty() {
            continue;
        }
        let is_ap = n < assoc.n_aps();
        let estimates: Vec<CVec> = served.iter().map(|&k| est.merged(k, n).clone()).collect();
        let ws: Vec<Result<CVec>> = match precoder {
            Precoder::Mrt => estimates.iter().map(mrt).collect(),
            Precoder::Pzf => {
                let n_pzf = if is_ap { params.n_pzf_ap } else { params.n_pzf_bs };
                served
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| {
                        let others: Vec<usize> = served.iter().copied().filter(|&j| j != k).collect();
                        let strength: Vec<f64> = others.iter().map(|&j| large.merged(j, n)).collect();
                        let protected: Vec<CVec> = top_indices(&strength, n_pzf)
                            .into_iter()
                            .map(|p| est.merged(others[p], n).clone())
                            .collect();
                        pzf_local(&estimates[i], &protected)
                    })
                    .collect()
            }
            Precoder::Mmse => {
                let stats: Vec<CMat> = served
                    .iter()
                    .map(|&k| link_covariance(large, k, n, est.n_ant_ap, est.n_ant_bs))
                    .collect();
                let stats_hat: Vec<CMat> = served.iter().map(|&k| est.estimate_covariance(k, n, large)).collect();
                let etas: Vec<f64> = served.iter().map(|&k| est.train_powers[k]).collect();
                let inv = hermitian_inverse(&mmse_matrix(&estimates, &stats, &stats_hat, &etas, params.noise_var));
                estimates.iter().map(|g| mrt(&(&inv * g))).collect()
            }
            Precoder::Jpzf => unreachable!(),
        };
        for (&k, w) in served.iter().zip(ws) {
            let (w, p) = match w {
                Ok(w) => (w, eta[(k, n)]),
                Err(SimError::ZeroBeamformer) => (CVec::zeros(estimates[0].len()), 0.0),
                Err(e) => return Err(e),
            };
            beams[k].push(ServingBeam { node: n, w, eta: p });
        }
    }
    for b in beams.iter_mut() {
        b.sort_by_key(|s| s.node);
    }
    Ok(PrecoderPowerSet {
        precoder,
        beams,
        joint: None,
    })
}
