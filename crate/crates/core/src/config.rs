//! Simulation configuration: schema, defaults, validation and TOML I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::Scenario;
use crate::error::{Result, SimError};
use crate::fronthaul::{FronthaulParams, ProcessingMode};
use crate::geometry::ApMode;
use crate::precoding::{Precoder, PrecodingParams};
use crate::propagation::{FadingMode, PropagationParams};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub isd: f64,
    pub n_center_sites: usize,
    pub n_ring_sites: usize,
    pub aps_per_cell: usize,
    pub users_per_sector: usize,
    pub n_ant_bs: usize,
    pub n_ant_ap: usize,
    pub p_bs_dbm: f64,
    pub p_ap_dbm: f64,
    pub n_serving_bs: usize,
    pub n_serving_ap: usize,
    pub n_pzf_bs: usize,
    pub n_pzf_ap: usize,
    pub r_jpzf: usize,
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub n0_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub m_qam: u32,
    pub n_rb: u32,
    pub n_sc: u32,
    pub n_sc_rb: u32,
    pub n_sc_ofdm: u32,
    pub tau_data: f64,
    pub tau_weight: f64,
    pub n_q: u32,
    pub n_cb_rb: u32,
    pub eta_cpri: f64,
    pub fh_limit_bps: f64,
    pub fronthaul_enforce: bool,
    pub tau_c: usize,
    pub tau_p: usize,
    /// Uplink pilot power per symbol, in mW.
    pub pilot_power_mw: f64,
    pub scenario: Scenario,
    pub precoder: Precoder,
    pub alpha: f64,
    pub ap_mode: ApMode,
    pub fading: FadingMode,
    pub trials: usize,
    pub master_seed: u64,
    /// Keep AP and user positions fixed across trials.
    pub freeze_geometry: bool,
    /// Build beamformers from the true channels instead of estimates.
    pub perfect_csi: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            isd: 500.0,
            n_center_sites: 3,
            n_ring_sites: 9,
            aps_per_cell: 9,
            users_per_sector: 5,
            n_ant_bs: 32,
            n_ant_ap: 8,
            p_bs_dbm: 46.0,
            p_ap_dbm: 39.0,
            n_serving_bs: 3,
            n_serving_ap: 6,
            n_pzf_bs: 16,
            n_pzf_ap: 4,
            r_jpzf: 72,
            fc_hz: 3.5e9,
            bandwidth_hz: 20e6,
            n0_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            m_qam: 256,
            n_rb: 55,
            n_sc: 1024,
            n_sc_rb: 19,
            n_sc_ofdm: 14,
            tau_data: 0.5e-3,
            tau_weight: 0.2e-3,
            n_q: 8,
            n_cb_rb: 64,
            eta_cpri: 0.85,
            fh_limit_bps: 5e9,
            fronthaul_enforce: false,
            tau_c: 640,
            tau_p: 32,
            pilot_power_mw: 300.0,
            scenario: Scenario::Full,
            precoder: Precoder::Mmse,
            alpha: -0.5,
            ap_mode: ApMode::Uniform,
            fading: FadingMode::Rayleigh,
            trials: 200,
            master_seed: 1,
            freeze_geometry: false,
            perfect_csi: false,
        }
    }
}

impl SimConfig {
    /// Small layout used for quick runs: one evaluated site, two ring
    /// sites, three APs per cell and three users per sector.
    pub fn desk() -> Self {
        SimConfig {
            n_center_sites: 1,
            n_ring_sites: 2,
            aps_per_cell: 3,
            users_per_sector: 3,
            ..SimConfig::default()
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_center_sites + self.n_ring_sites
    }

    pub fn n_bs(&self) -> usize {
        3 * self.n_sites()
    }

    pub fn n_aps(&self) -> usize {
        self.aps_per_cell * self.n_sites()
    }

    pub fn n_ues(&self) -> usize {
        self.users_per_sector * self.n_bs()
    }

    pub fn p_bs_watt(&self) -> f64 {
        dbm_to_watt(self.p_bs_dbm)
    }

    pub fn p_ap_watt(&self) -> f64 {
        dbm_to_watt(self.p_ap_dbm)
    }

    /// Noise power over the signal bandwidth in W.
    pub fn noise_var(&self) -> f64 {
        dbm_to_watt(self.n0_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db)
    }

    /// Total training energy of one user across its pilot sequence, in W.
    pub fn train_power(&self) -> f64 {
        self.tau_p as f64 * self.pilot_power_mw * 1e-3
    }

    pub fn propagation(&self) -> PropagationParams {
        PropagationParams {
            fc_hz: self.fc_hz,
            fading: self.fading,
            ..PropagationParams::default()
        }
    }

    pub fn precoding(&self) -> PrecodingParams {
        PrecodingParams {
            n_pzf_ap: self.n_pzf_ap,
            n_pzf_bs: self.n_pzf_bs,
            r_jpzf: self.r_jpzf,
            alpha: self.alpha,
            p_max_ap: vec![self.p_ap_watt(); self.n_aps()],
            p_max_bs: vec![self.p_bs_watt(); self.n_bs()],
            noise_var: self.noise_var(),
        }
    }

    pub fn fronthaul(&self) -> FronthaulParams {
        FronthaulParams {
            m_qam: self.m_qam,
            n_rb: self.n_rb,
            n_sc_rb: self.n_sc_rb,
            n_sc_ofdm: self.n_sc_ofdm,
            tau_data: self.tau_data,
            tau_weight: self.tau_weight,
            n_q: self.n_q,
            n_cb_rb: self.n_cb_rb,
            eta_cpri: self.eta_cpri,
            f_limit: self.fh_limit_bps,
            mode: if self.precoder.is_joint() {
                ProcessingMode::Joint
            } else {
                ProcessingMode::Local
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SimError::Constraint(msg));
        if !(self.isd > 0.0 && self.isd.is_finite()) {
            return fail(format!("isd must be positive, got {}", self.isd));
        }
        if self.n_center_sites == 0 {
            return fail("n_center_sites must be at least 1".into());
        }
        if self.users_per_sector == 0 {
            return fail("users_per_sector must be at least 1".into());
        }
        if self.n_ant_ap == 0 || self.n_ant_bs == 0 {
            return fail("antenna counts must be positive".into());
        }
        if self.n_pzf_ap >= self.n_ant_ap {
            return fail(format!("n_pzf_ap ({}) must be < n_ant_ap ({})", self.n_pzf_ap, self.n_ant_ap));
        }
        if self.n_pzf_bs >= self.n_ant_bs {
            return fail(format!("n_pzf_bs ({}) must be < n_ant_bs ({})", self.n_pzf_bs, self.n_ant_bs));
        }
        let max_r = self.n_ant_ap * self.n_serving_ap + self.n_ant_bs * self.n_serving_bs;
        if self.r_jpzf > max_r {
            return fail(format!(
                "r_jpzf ({}) must be <= n_ant_ap*n_serving_ap + n_ant_bs*n_serving_bs ({max_r})",
                self.r_jpzf
            ));
        }
        if self.tau_p == 0 || self.tau_p > self.tau_c {
            return fail(format!("tau_p ({}) must lie in [1, tau_c = {}]", self.tau_p, self.tau_c));
        }
        if self.n_serving_ap > self.n_aps() {
            return fail(format!("n_serving_ap ({}) exceeds the {} APs", self.n_serving_ap, self.n_aps()));
        }
        if self.n_serving_bs > self.n_bs() {
            return fail(format!("n_serving_bs ({}) exceeds the {} BSs", self.n_serving_bs, self.n_bs()));
        }
        if !(self.bandwidth_hz > 0.0 && self.fc_hz > 0.0 && self.pilot_power_mw >= 0.0) {
            return fail("bandwidth, carrier and pilot power must be positive".into());
        }
        if self.master_seed > i64::MAX as u64 {
            return fail("master_seed must fit in a signed 64-bit integer".into());
        }
        if !self.alpha.is_finite() {
            return fail("alpha must be finite".into());
        }
        if self.precoder.is_joint() && self.scenario != Scenario::Full {
            return fail("precoder jpzf requires scenario full".into());
        }
        if self.fronthaul_enforce && self.scenario != Scenario::Full {
            return fail("fronthaul enforcement requires scenario full".into());
        }
        self.fronthaul().validate()
    }

    /// Parses TOML text, applying defaults for absent keys.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::Parse {
            path: "<config>".into(),
            msg: e.to_string(),
        })?;
        let known: toml::Table = toml::Table::try_from(SimConfig::default()).expect("default config serializes");
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(SimError::UnknownKey(key.clone()));
        }
        let cfg: SimConfig = table.try_into().map_err(|e: toml::de::Error| SimError::Parse {
            path: "<config>".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    SimConfig::from_toml_str(&text).map_err(|e| match e {
        SimError::Parse { msg, .. } => SimError::Parse {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}
