//! Fronthaul load model and capacity-driven link pruning.

use std::io::Write;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::association::AssociationState;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingMode {
    /// Beamformers computed at the nodes; only data crosses the fronthaul.
    Local,
    /// Beamformers computed at the CPU and shipped with the data.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FronthaulParams {
    pub m_qam: u32,
    pub n_rb: u32,
    pub n_sc_rb: u32,
    pub n_sc_ofdm: u32,
    pub tau_data: f64,
    pub tau_weight: f64,
    pub n_q: u32,
    pub n_cb_rb: u32,
    pub eta_cpri: f64,
    /// Capacity of every node's link in bit/s.
    pub f_limit: f64,
    pub mode: ProcessingMode,
}

impl Default for FronthaulParams {
    fn default() -> Self {
        FronthaulParams {
            m_qam: 256,
            n_rb: 55,
            n_sc_rb: 19,
            n_sc_ofdm: 14,
            tau_data: 0.5e-3,
            tau_weight: 0.2e-3,
            n_q: 8,
            n_cb_rb: 64,
            eta_cpri: 0.85,
            f_limit: 5e9,
            mode: ProcessingMode::Local,
        }
    }
}

impl FronthaulParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.m_qam, self.n_rb, self.n_sc_rb, self.n_sc_ofdm, self.n_q, self.n_cb_rb];
        if counts.contains(&0) {
            return Err(SimError::Constraint("fronthaul counts must be positive".into()));
        }
        if !(self.tau_data > 0.0 && self.tau_weight > 0.0 && self.f_limit > 0.0) {
            return Err(SimError::Constraint("fronthaul delays and limit must be positive".into()));
        }
        if !(self.eta_cpri > 0.0 && self.eta_cpri <= 1.0) {
            return Err(SimError::Constraint("eta_cpri must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Data load of one served user.
    pub fn data_per_user(&self) -> f64 {
        (self.m_qam as f64).log2()
            * self.n_rb as f64
            * (self.n_sc_rb as f64 / self.tau_data)
            * (self.n_sc_ofdm as f64 / self.eta_cpri)
    }

    /// Weight load of one served user at a node with `n_antennas`.
    pub fn weight_per_user(&self, n_antennas: usize) -> f64 {
        match self.mode {
            ProcessingMode::Local => 0.0,
            ProcessingMode::Joint => {
                2.0 * (self.n_rb as f64 / self.n_cb_rb as f64)
                    * (n_antennas as f64 / self.tau_weight)
                    * (self.n_q as f64 / self.eta_cpri)
            }
        }
    }

    /// Largest number of users a node with `n_antennas` can serve.
    pub fn max_users(&self, n_antennas: usize) -> usize {
        (self.f_limit / (self.data_per_user() + self.weight_per_user(n_antennas))).floor() as usize
    }
}

pub fn fh_data_load(n_served: usize, params: &FronthaulParams) -> f64 {
    n_served as f64 * params.data_per_user()
}

pub fn fh_weight_load(n_served: usize, n_antennas: usize, params: &FronthaulParams) -> f64 {
    n_served as f64 * params.weight_per_user(n_antennas)
}

/// Total load of every merged node (APs first).
pub fn node_loads(assoc: &AssociationState, n_ant_ap: usize, n_ant_bs: usize, params: &FronthaulParams) -> Vec<f64> {
    (0..assoc.n_nodes())
        .map(|n| {
            let served = assoc.served_by(n).len();
            let n_ant = if n < assoc.n_aps() { n_ant_ap } else { n_ant_bs };
            fh_data_load(served, params) + fh_weight_load(served, n_ant, params)
        })
        .collect()
}

/// Large-scale SINR estimate of user `k` if node `excluded` stopped
/// serving anyone. `delta` is `users x (M + L)`.
pub fn proxy_sinr(k: usize, excluded: usize, assoc: &AssociationState, delta: &DMatrix<f64>, noise_var: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for n in (0..assoc.n_nodes()).filter(|&n| n != excluded) {
        for j in 0..assoc.n_ues() {
            if assoc.merged(j, n) {
                if j == k {
                    signal += delta[(k, n)];
                } else {
                    interference += delta[(k, n)];
                }
            }
        }
    }
    signal / (interference + noise_var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub node_id: usize,
    /// Load of the node before the removal.
    pub load: f64,
    pub removed_user: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FronthaulTrace {
    pub rows: Vec<TraceRow>,
    pub iterations: usize,
}

impl FronthaulTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iteration", "node_id", "F_n", "removed_user"])?;
        for r in &self.rows {
            wtr.write_record([
                r.iteration.to_string(),
                r.node_id.to_string(),
                format!("{:.3}", r.load),
                r.removed_user.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| SimError::io("<fronthaul trace>", e))?;
        Ok(())
    }
}

/// Removes links until every node's load fits its capacity. At each
/// iteration every violating node drops the served user with the largest
/// proxy SINR (lower index on ties). `precoder_callback` runs before each
/// load evaluation, standing in for the beamformer recomputation.
pub fn enforce_fronthaul<F>(
    assoc: &AssociationState,
    delta: &DMatrix<f64>,
    noise_var: f64,
    n_ant_ap: usize,
    n_ant_bs: usize,
    params: &FronthaulParams,
    mut precoder_callback: F,
) -> Result<(AssociationState, FronthaulTrace)>
where
    F: FnMut(&AssociationState) -> Result<()>,
{
    params.validate()?;
    let mut state = assoc.clone();
    let mut trace = FronthaulTrace::default();
    loop {
        precoder_callback(&state)?;
        let loads = node_loads(&state, n_ant_ap, n_ant_bs, params);
        let violating: Vec<usize> = (0..loads.len()).filter(|&n| loads[n] > params.f_limit).collect();
        if violating.is_empty() {
            break;
        }
        trace.iterations += 1;
        // all choices use the association as it stood at the start of the pass
        let snapshot = state.clone();
        for &n in &violating {
            let mut best: Option<(usize, f64)> = None;
            for k in snapshot.served_by(n) {
                let s = proxy_sinr(k, n, &snapshot, delta, noise_var);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((k, s));
                }
            }
            let (k, _) = best.expect("a loaded node serves at least one user");
            state.set_merged(k, n, false);
            if state.serving(k).is_empty() {
                warn!("fronthaul pruning disconnected user {k}");
            }
            trace.rows.push(TraceRow {
                iteration: trace.iterations,
                node_id: n,
                load: loads[n],
                removed_user: k,
            });
        }
    }
    if trace.iterations > 0 {
        info!("fronthaul pruning removed {} links in {} iterations", trace.rows.len(), trace.iterations);
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::Scenario;

    fn joint() -> FronthaulParams {
        FronthaulParams {
            mode: ProcessingMode::Joint,
            ..FronthaulParams::default()
        }
    }

    #[test]
    fn per_user_loads() {
        let p = joint();
        assert!((fh_data_load(1, &p) - 275_388_235.294).abs() < 1.0);
        assert!((fh_weight_load(1, 8, &p) - 647_058.82).abs() < 1.0);
        assert_eq!(fh_data_load(0, &p), 0.0);
        assert!((fh_data_load(7, &p) - 7.0 * fh_data_load(1, &p)).abs() < 1e-3);
        assert!((fh_weight_load(1, 32, &p) - 4.0 * fh_weight_load(1, 8, &p)).abs() < 1e-6);
        assert_eq!(fh_weight_load(5, 8, &FronthaulParams::default()), 0.0);
        assert_eq!(p.max_users(8), 18);
    }

    #[test]
    fn validation() {
        assert!(FronthaulParams::default().validate().is_ok());
        let bad = FronthaulParams {
            eta_cpri: 1.2,
            ..FronthaulParams::default()
        };
        assert!(bad.validate().is_err());
    }

    fn full_assoc(k: usize, m: usize) -> AssociationState {
        let mut a = AssociationState::empty(Scenario::Full, k, m, 0);
        for i in 0..k {
            for n in 0..m {
                a.set_merged(i, n, true);
            }
        }
        a
    }

    #[test]
    fn proxy_examples() {
        let mut a = AssociationState::empty(Scenario::Full, 1, 2, 0);
        a.set_merged(0, 0, true);
        let delta = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        assert_eq!(proxy_sinr(0, 0, &a, &delta, 0.5), 0.0);
        a.set_merged(0, 1, true);
        assert!((proxy_sinr(0, 0, &a, &delta, 0.5) - 10.0).abs() < 1e-12);

        // two users, two nodes, both fully connected
        let a = full_assoc(2, 2);
        let delta = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 8.0]);
        // user 0 without node 1: signal 1, interference from user 1 on node 0 -> 1
        assert!((proxy_sinr(0, 1, &a, &delta, 1.0) - 0.5).abs() < 1e-12);
        // user 1 without node 0: signal 8, interference 8
        assert!((proxy_sinr(1, 0, &a, &delta, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn removes_user_with_largest_proxy() {
        // node 0 serves both users and fits only one; nodes 1, 2 serve one each
        let mut a = AssociationState::empty(Scenario::Full, 2, 3, 0);
        a.set_merged(0, 0, true);
        a.set_merged(1, 0, true);
        a.set_merged(0, 1, true);
        a.set_merged(1, 2, true);
        let p = FronthaulParams {
            f_limit: 1.5 * FronthaulParams::default().data_per_user(),
            ..FronthaulParams::default()
        };
        let delta = DMatrix::from_row_slice(2, 3, &[9.0, 0.5, 0.0, 9.0, 0.0, 2.0]);
        assert!((proxy_sinr(0, 0, &a, &delta, 1.0) - 0.5).abs() < 1e-12);
        assert!((proxy_sinr(1, 0, &a, &delta, 1.0) - 2.0).abs() < 1e-12);
        let (out, trace) = enforce_fronthaul(&a, &delta, 1.0, 8, 32, &p, |_| Ok(())).unwrap();
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.rows[0].removed_user, 1);
        assert!(!out.merged(1, 0) && out.merged(0, 0));
    }

    #[test]
    fn unchanged_when_within_limits() {
        let a = full_assoc(3, 2);
        let delta = DMatrix::from_element(3, 2, 1.0);
        let mut calls = 0;
        let (out, trace) = enforce_fronthaul(&a, &delta, 1.0, 8, 32, &joint(), |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(out, a);
        assert_eq!(trace.iterations, 0);
        assert_eq!(calls, 1);
    }

    #[test]
    fn caps_ap_at_eighteen_users() {
        let a = full_assoc(30, 1);
        let delta = DMatrix::from_fn(30, 1, |k, _| 1.0 + k as f64);
        let (out, _) = enforce_fronthaul(&a, &delta, 1e-3, 8, 32, &joint(), |_| Ok(())).unwrap();
        assert_eq!(out.served_by(0).len(), 18);
    }

    #[test]
    fn disconnecting_removal_is_kept() {
        let a = full_assoc(2, 1);
        let p = FronthaulParams {
            f_limit: 1.0,
            ..FronthaulParams::default()
        };
        let delta = DMatrix::from_element(2, 1, 1.0);
        let (out, trace) = enforce_fronthaul(&a, &delta, 1.0, 8, 32, &p, |_| Ok(())).unwrap();
        assert_eq!(out.link_count(), 0);
        assert_eq!(trace.iterations, 2);
        // equal proxies: lower index goes first
        assert_eq!(trace.rows[0].removed_user, 0);
    }
}
