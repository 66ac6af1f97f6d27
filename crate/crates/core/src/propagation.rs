//! Large-scale propagation (3GPP 38.901 UMa for the macro sectors, UMi for
//! the access points), correlated shadowing, the sector antenna pattern and
//! the Rician small-scale channel draw.

use std::f64::consts::PI;
use std::io::Write;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{angle_diff, NetworkLayout};
use crate::linalg::{circular_normal, CMat, CVec, C64};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
/// Lower validity bound of the path-loss models (m).
pub const MIN_PATHLOSS_DISTANCE: f64 = 10.0;
/// Distances up to this value are always in LOS (m).
pub const LOS_RADIUS: f64 = 18.0;
/// LOS probabilities at or above `1 - PURE_LOS_EPS` map to a pure-LOS channel.
pub const PURE_LOS_EPS: f64 = 1e-9;
/// Diagonal jitter added to shadowing correlation matrices.
pub const SHADOW_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ap,
    Bs,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Ap => "ap",
            NodeKind::Bs => "bs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingMode {
    Rayleigh,
    Rician,
}

/// Linear Rician factor, with an explicit variant for the K -> infinity limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RicianK {
    Finite(f64),
    PureLos,
}

impl RicianK {
    /// Fraction of the link power carried by the deterministic path.
    pub fn los_fraction(&self) -> f64 {
        match *self {
            RicianK::Finite(k) => k / (k + 1.0),
            RicianK::PureLos => 1.0,
        }
    }
}

fn c_height(h_ue: f64) -> f64 {
    if h_ue <= 13.0 {
        0.0
    } else {
        ((h_ue - 13.0) / 10.0).powf(1.5)
    }
}

fn check_ue_height(h_ue: f64) -> Result<()> {
    if (1.5..=23.0).contains(&h_ue) {
        Ok(())
    } else {
        Err(SimError::invalid(format!("UE height {h_ue} m outside the UMa model range [1.5, 23]")))
    }
}

/// UMa LOS probability toward a macro sector.
pub fn los_probability_uma(d2d: f64, h_ue: f64) -> Result<f64> {
    check_ue_height(h_ue)?;
    if d2d <= LOS_RADIUS {
        return Ok(1.0);
    }
    let base = LOS_RADIUS / d2d + (1.0 - LOS_RADIUS / d2d) * (-d2d / 63.0).exp();
    let corr = 1.0 + 1.25 * c_height(h_ue) * (d2d / 100.0).powi(3) * (-d2d / 150.0).exp();
    Ok((base * corr).clamp(0.0, 1.0))
}

/// UMi street-canyon LOS probability toward an access point.
pub fn los_probability_umi(d2d: f64) -> f64 {
    if d2d <= LOS_RADIUS {
        1.0
    } else {
        LOS_RADIUS / d2d + (1.0 - LOS_RADIUS / d2d) * (-d2d / 36.0).exp()
    }
}

pub fn rician_factor(p_los: f64) -> RicianK {
    if p_los >= 1.0 - PURE_LOS_EPS {
        RicianK::PureLos
    } else {
        RicianK::Finite(p_los.max(0.0) / (1.0 - p_los))
    }
}

pub fn breakpoint_distance(h_tx_eff: f64, h_ue_eff: f64, fc_hz: f64) -> f64 {
    4.0 * h_tx_eff * h_ue_eff * fc_hz / SPEED_OF_LIGHT
}

/// Effective environment height for a UMa link. For UEs at or below 13 m
/// this is 1 m without consuming randomness.
pub fn effective_env_height_uma<R: Rng + ?Sized>(d2d: f64, h_ue: f64, rng: &mut R) -> f64 {
    let g = if d2d <= LOS_RADIUS {
        0.0
    } else {
        1.25 * (d2d / 100.0).powi(3) * (-d2d / 150.0).exp()
    };
    let c = if h_ue < 13.0 { 0.0 } else { c_height(h_ue) * g };
    if c == 0.0 {
        return 1.0;
    }
    let p = 1.0 / (1.0 + c);
    let u: f64 = rng.random();
    if u < p {
        1.0
    } else {
        let third = (1.0 - p) / 3.0;
        if u < p + third {
            12.0
        } else if u < p + 2.0 * third {
            15.0
        } else {
            h_ue - 1.5
        }
    }
}

fn clamp_distances(d2d: f64, d3d: f64) -> (f64, f64) {
    if d2d >= MIN_PATHLOSS_DISTANCE {
        (d2d, d3d)
    } else {
        let dh2 = (d3d * d3d - d2d * d2d).max(0.0);
        (MIN_PATHLOSS_DISTANCE, (MIN_PATHLOSS_DISTANCE.powi(2) + dh2).sqrt())
    }
}

/// UMa path loss in dB.
pub fn pathloss_uma<R: Rng + ?Sized>(
    d2d: f64,
    d3d: f64,
    h_bs: f64,
    h_ue: f64,
    fc_hz: f64,
    los: bool,
    rng: &mut R,
) -> f64 {
    let (d2d, d3d) = clamp_distances(d2d, d3d);
    let fc_ghz = fc_hz / 1e9;
    let h_e = effective_env_height_uma(d2d, h_ue, rng);
    let d_bp = breakpoint_distance(h_bs - h_e, h_ue - h_e, fc_hz);
    let pl_los = if d2d <= d_bp {
        28.0 + 22.0 * d3d.log10() + 20.0 * fc_ghz.log10()
    } else {
        28.0 + 40.0 * d3d.log10() + 20.0 * fc_ghz.log10() - 9.0 * (d_bp * d_bp + (h_bs - h_ue).powi(2)).log10()
    };
    if los {
        pl_los
    } else {
        let nlos = 13.54 + 39.08 * d3d.log10() + 20.0 * fc_ghz.log10() - 0.6 * (h_ue - 1.5);
        pl_los.max(nlos)
    }
}

/// UMi path loss in dB (effective environment height fixed to 1 m).
pub fn pathloss_umi(d2d: f64, d3d: f64, h_ap: f64, h_ue: f64, fc_hz: f64, los: bool) -> f64 {
    let (d2d, d3d) = clamp_distances(d2d, d3d);
    let fc_ghz = fc_hz / 1e9;
    let d_bp = breakpoint_distance(h_ap - 1.0, h_ue - 1.0, fc_hz);
    let pl_los = if d2d <= d_bp {
        32.4 + 21.0 * d3d.log10() + 20.0 * fc_ghz.log10()
    } else {
        32.4 + 40.0 * d3d.log10() + 20.0 * fc_ghz.log10() - 9.5 * (d_bp * d_bp + (h_ap - h_ue).powi(2)).log10()
    };
    if los {
        pl_los
    } else {
        let nlos = 22.4 + 35.3 * d3d.log10() + 21.3 * fc_ghz.log10() - 0.3 * (h_ue - 1.5);
        pl_los.max(nlos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowingModel {
    pub sigma_db: f64,
    pub corr_distance: f64,
}

impl ShadowingModel {
    pub const BS: ShadowingModel = ShadowingModel {
        sigma_db: 6.0,
        corr_distance: 50.0,
    };
    pub const AP: ShadowingModel = ShadowingModel {
        sigma_db: 7.82,
        corr_distance: 13.0,
    };

    /// Model covariance between the shadowing of two users `dist` apart
    /// toward the same node.
    pub fn covariance(&self, dist: f64) -> f64 {
        self.sigma_db * self.sigma_db * (-dist / self.corr_distance).exp()
    }
}

/// Shadowing in dB, shape `n_users x n_nodes`. Columns are independent;
/// within a column the users follow the exponential distance correlation.
pub fn correlated_shadowing<R: Rng + ?Sized>(
    model: &ShadowingModel,
    ue_positions: &[crate::geometry::Point],
    n_nodes: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let k = ue_positions.len();
    let corr = DMatrix::from_fn(k, k, |i, j| {
        let c = (-ue_positions[i].dist(&ue_positions[j]) / model.corr_distance).exp();
        if i == j {
            c + SHADOW_JITTER
        } else {
            c
        }
    });
    let chol = corr
        .cholesky()
        .ok_or_else(|| SimError::Decomposition("shadowing correlation matrix is not positive definite".into()))?;
    let lower = chol.l();
    let white = DMatrix::from_fn(k, n_nodes, |_, _| StandardNormal.sample(rng));
    Ok(lower * white * model.sigma_db)
}

/// Sector antenna pattern: Gaussian in the linear domain (parabolic in dB)
/// over the front half-plane, a constant floor behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub max_gain_dbi: f64,
    pub edge_attenuation_db: f64,
    pub hpbw_deg: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        AntennaPattern {
            max_gain_dbi: 8.0,
            edge_attenuation_db: 30.0,
            hpbw_deg: 65.0,
        }
    }
}

impl AntennaPattern {
    pub fn gain_db(&self, angle_off_boresight: f64) -> f64 {
        let a = angle_off_boresight.abs();
        if a >= PI / 2.0 {
            return self.max_gain_dbi - self.edge_attenuation_db;
        }
        let hpbw = self.hpbw_deg.to_radians();
        let att = 12.0 * (a / hpbw).powi(2);
        self.max_gain_dbi - att.min(self.edge_attenuation_db)
    }

    pub fn gain_linear(&self, angle_off_boresight: f64) -> f64 {
        db_to_linear(self.gain_db(angle_off_boresight))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Half-wavelength ULA response, element `i` equal to `exp(j pi i sin(angle))`.
pub fn steering_vector(angle: f64, n_antennas: usize) -> CVec {
    let s = angle.sin();
    DVector::from_fn(n_antennas, |i, _| C64::from_polar(1.0, PI * i as f64 * s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkLargeScale {
    pub d2d: f64,
    pub d3d: f64,
    pub p_los: f64,
    pub is_los: bool,
    pub k_factor: RicianK,
    pub pathloss_db: f64,
    pub shadow_db: f64,
    /// Antenna pattern gain (dB); zero for AP links.
    pub gain_db: f64,
    /// beta (AP links) or rho (BS links), linear.
    pub coeff_linear: f64,
    /// Angle of the direct path in the array's frame.
    pub aod: f64,
}

impl LinkLargeScale {
    pub fn coeff_db(&self) -> f64 {
        self.gain_db - self.pathloss_db + self.shadow_db
    }

    /// Channel covariance `coeff / (K + 1) (K a a^H + I)`.
    pub fn covariance(&self, n_antennas: usize) -> CMat {
        let a = steering_vector(self.aod, n_antennas);
        let aa = &a * a.adjoint();
        match self.k_factor {
            RicianK::PureLos => aa * C64::new(self.coeff_linear, 0.0),
            RicianK::Finite(k) => {
                let s = self.coeff_linear / (k + 1.0);
                (aa * C64::new(k, 0.0) + CMat::identity(n_antennas, n_antennas)) * C64::new(s, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    pub fc_hz: f64,
    pub fading: FadingMode,
    pub pattern: AntennaPattern,
    pub shadow_bs: ShadowingModel,
    pub shadow_ap: ShadowingModel,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            fc_hz: 3.5e9,
            fading: FadingMode::Rayleigh,
            pattern: AntennaPattern::default(),
            shadow_bs: ShadowingModel::BS,
            shadow_ap: ShadowingModel::AP,
        }
    }
}

/// Large-scale tables for every UE-AP and UE-BS link, row-major by user.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleSet {
    pub n_ues: usize,
    pub n_aps: usize,
    pub n_bs: usize,
    pub ap: Vec<LinkLargeScale>,
    pub bs: Vec<LinkLargeScale>,
}

impl LargeScaleSet {
    pub fn ap_link(&self, k: usize, m: usize) -> &LinkLargeScale {
        &self.ap[k * self.n_aps + m]
    }

    pub fn bs_link(&self, k: usize, l: usize) -> &LinkLargeScale {
        &self.bs[k * self.n_bs + l]
    }

    pub fn beta(&self, k: usize, m: usize) -> f64 {
        self.ap_link(k, m).coeff_linear
    }

    pub fn rho(&self, k: usize, l: usize) -> f64 {
        self.bs_link(k, l).coeff_linear
    }

    pub fn beta_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_ues, self.n_aps, |k, m| self.beta(k, m))
    }

    pub fn rho_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_ues, self.n_bs, |k, l| self.rho(k, l))
    }

    /// Large-scale coefficient toward the merged node index (APs first).
    pub fn merged(&self, k: usize, n: usize) -> f64 {
        if n < self.n_aps {
            self.beta(k, n)
        } else {
            self.rho(k, n - self.n_aps)
        }
    }

    /// `k,node_id,kind,d2d,p_los,is_los,PL_dB,shadow_dB,coeff_dB` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "node_id", "kind", "d2d", "p_los", "is_los", "PL_dB", "shadow_dB", "coeff_dB"])?;
        for k in 0..self.n_ues {
            for m in 0..self.n_aps {
                let l = self.ap_link(k, m);
                wr.serialize((k, m, "ap", l.d2d, l.p_los, l.is_los as u8, l.pathloss_db, l.shadow_db, l.coeff_db()))?;
            }
            for b in 0..self.n_bs {
                let l = self.bs_link(k, b);
                wr.serialize((k, b, "bs", l.d2d, l.p_los, l.is_los as u8, l.pathloss_db, l.shadow_db, l.coeff_db()))?;
            }
        }
        wr.flush().map_err(|e| SimError::io("<large-scale>", e))?;
        Ok(())
    }
}

/// Draws LOS states, path losses and shadowing for every link of `layout`.
///
/// The LOS state is a Bernoulli draw with the model probability in both
/// fading modes; in Rayleigh mode the Rician factor is forced to zero.
pub fn compute_large_scale<R: Rng + ?Sized>(
    layout: &NetworkLayout,
    params: &PropagationParams,
    rng: &mut R,
) -> Result<LargeScaleSet> {
    let k_users = layout.n_ues();
    let n_aps = layout.n_aps();
    let n_bs = layout.n_bs();
    let shadow_ap = correlated_shadowing(&params.shadow_ap, &layout.ues, n_aps, rng)?;
    let shadow_bs = correlated_shadowing(&params.shadow_bs, &layout.ues, n_bs, rng)?;

    let k_of = |p: f64| match params.fading {
        FadingMode::Rayleigh => RicianK::Finite(0.0),
        FadingMode::Rician => rician_factor(p),
    };

    let mut ap = Vec::with_capacity(k_users * n_aps);
    let mut bs = Vec::with_capacity(k_users * n_bs);
    for (k, ue) in layout.ues.iter().enumerate() {
        for (m, node) in layout.aps.iter().enumerate() {
            let d2d = ue.dist(node);
            let d3d = d2d.hypot(layout.h_ap - layout.h_ue);
            let p_los = los_probability_umi(d2d);
            let is_los = rng.random::<f64>() < p_los;
            let pl = pathloss_umi(d2d, d3d, layout.h_ap, layout.h_ue, params.fc_hz, is_los);
            let z = shadow_ap[(k, m)];
            ap.push(LinkLargeScale {
                d2d,
                d3d,
                p_los,
                is_los,
                k_factor: k_of(p_los),
                pathloss_db: pl,
                shadow_db: z,
                gain_db: 0.0,
                coeff_linear: db_to_linear(-pl + z),
                aod: node.azimuth_to(ue),
            });
        }
        for l in 0..n_bs {
            let node = layout.bs_position(l);
            let d2d = ue.dist(&node);
            let d3d = d2d.hypot(layout.h_bs - layout.h_ue);
            let p_los = los_probability_uma(d2d, layout.h_ue)?;
            let is_los = rng.random::<f64>() < p_los;
            let pl = pathloss_uma(d2d, d3d, layout.h_bs, layout.h_ue, params.fc_hz, is_los, rng);
            let z = shadow_bs[(k, l)];
            let off = angle_diff(node.azimuth_to(ue), layout.sector_orientations[l]);
            let gain_db = params.pattern.gain_db(off);
            bs.push(LinkLargeScale {
                d2d,
                d3d,
                p_los,
                is_los,
                k_factor: k_of(p_los),
                pathloss_db: pl,
                shadow_db: z,
                gain_db,
                coeff_linear: db_to_linear(gain_db - pl + z),
                aod: off,
            });
        }
    }
    debug!("large-scale tables: {k_users} users, {n_aps} APs, {n_bs} BSs");
    Ok(LargeScaleSet {
        n_ues: k_users,
        n_aps,
        n_bs,
        ap,
        bs,
    })
}

/// Small-scale channel realizations, row-major by user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub n_ues: usize,
    pub n_aps: usize,
    pub n_bs: usize,
    pub g: Vec<CVec>,
    pub h: Vec<CVec>,
    pub ap_phase: Vec<f64>,
    pub bs_phase: Vec<f64>,
}

impl ChannelSet {
    pub fn g(&self, k: usize, m: usize) -> &CVec {
        &self.g[k * self.n_aps + m]
    }

    pub fn h(&self, k: usize, l: usize) -> &CVec {
        &self.h[k * self.n_bs + l]
    }

    /// Channel toward the merged node index (APs first).
    pub fn merged(&self, k: usize, n: usize) -> &CVec {
        if n < self.n_aps {
            self.g(k, n)
        } else {
            self.h(k, n - self.n_aps)
        }
    }
}

/// One Rician draw `sqrt(c/(K+1)) [sqrt(K) e^{j phase} a + w]`.
pub fn draw_link<R: Rng + ?Sized>(link: &LinkLargeScale, n_antennas: usize, rng: &mut R) -> (CVec, f64) {
    let phase = rng.random::<f64>() * 2.0 * PI;
    let a = steering_vector(link.aod, n_antennas);
    let v = match link.k_factor {
        RicianK::PureLos => a * C64::from_polar(link.coeff_linear.sqrt(), phase),
        RicianK::Finite(k) => {
            let scatter = circular_normal(rng, n_antennas, 1.0);
            let s = (link.coeff_linear / (k + 1.0)).sqrt();
            (a * C64::from_polar(k.sqrt(), phase) + scatter) * C64::new(s, 0.0)
        }
    };
    (v, phase)
}

pub fn draw_channels<R: Rng + ?Sized>(
    large: &LargeScaleSet,
    n_ant_ap: usize,
    n_ant_bs: usize,
    rng: &mut R,
) -> ChannelSet {
    let mut g = Vec::with_capacity(large.ap.len());
    let mut ap_phase = Vec::with_capacity(large.ap.len());
    for link in &large.ap {
        let (v, p) = draw_link(link, n_ant_ap, rng);
        g.push(v);
        ap_phase.push(p);
    }
    let mut h = Vec::with_capacity(large.bs.len());
    let mut bs_phase = Vec::with_capacity(large.bs.len());
    for link in &large.bs {
        let (v, p) = draw_link(link, n_ant_bs, rng);
        h.push(v);
        bs_phase.push(p);
    }
    ChannelSet {
        n_ues: large.n_ues,
        n_aps: large.n_aps,
        n_bs: large.n_bs,
        g,
        h,
        ap_phase,
        bs_phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::geometry::Point;

    fn link(coeff: f64, k: RicianK) -> LinkLargeScale {
        LinkLargeScale {
            d2d: 50.0,
            d3d: 51.0,
            p_los: 0.5,
            is_los: true,
            k_factor: k,
            pathloss_db: 80.0,
            shadow_db: 0.0,
            gain_db: 0.0,
            coeff_linear: coeff,
            aod: 0.3,
        }
    }

    #[test]
    fn uma_los_probability() {
        assert_eq!(los_probability_uma(10.0, 1.5).unwrap(), 1.0);
        assert_eq!(los_probability_uma(18.0, 1.5).unwrap(), 1.0);
        let expect = 18.0 / 63.0 + (45.0 / 63.0) * (-1.0f64).exp();
        assert!((los_probability_uma(63.0, 1.5).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.5485).abs() < 1e-4);
        assert!(los_probability_uma(1e6, 1.5).unwrap() < 1e-4);
        assert!(los_probability_uma(100.0, 1.0).is_err());
        assert!(los_probability_uma(100.0, 30.0).is_err());
    }

    #[test]
    fn umi_los_probability() {
        assert_eq!(los_probability_umi(0.0), 1.0);
        assert_eq!(los_probability_umi(18.0), 1.0);
        let p = los_probability_umi(36.0);
        assert!((p - (0.5 + 0.5 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((p - 0.6839).abs() < 1e-4);
        let mut prev = 1.0;
        for i in 0..2000 {
            let p = los_probability_umi(i as f64 * 0.5);
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn rician_factor_values() {
        assert_eq!(rician_factor(0.5), RicianK::Finite(1.0));
        assert_eq!(rician_factor(0.0), RicianK::Finite(0.0));
        assert_eq!(rician_factor(1.0), RicianK::PureLos);
    }

    #[test]
    fn breakpoints() {
        assert!((breakpoint_distance(24.0, 0.5, 3.5e9) - 560.0).abs() < 1e-9);
        assert!((breakpoint_distance(9.0, 0.5, 3.5e9) - 210.0).abs() < 1e-9);
        let a = breakpoint_distance(9.0, 0.5, 3.5e9);
        assert!((breakpoint_distance(9.0, 0.5, 7e9) - 2.0 * a).abs() < 1e-9);
    }

    #[test]
    fn pathloss_reference_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // d3d = 100 m exactly, below both breakpoints
        let d2d = (100.0f64.powi(2) - 23.5f64.powi(2)).sqrt();
        let uma = pathloss_uma(d2d, 100.0, 25.0, 1.5, 3.5e9, true, &mut rng);
        assert!((uma - 82.88).abs() < 0.01, "{uma}");
        let d2d = (100.0f64.powi(2) - 8.5f64.powi(2)).sqrt();
        let umi = pathloss_umi(d2d, 100.0, 10.0, 1.5, 3.5e9, true);
        assert!((umi - 85.28).abs() < 0.01, "{umi}");
    }

    #[test]
    fn low_ue_has_unit_environment_height() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in [5.0, 50.0, 300.0] {
            assert_eq!(effective_env_height_uma(d, 1.5, &mut rng), 1.0);
        }
        // tall UEs draw from the full set
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            seen.insert(effective_env_height_uma(200.0, 20.0, &mut rng) as i64);
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn nlos_dominates_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev_umi = (0.0, 0.0);
        for i in 0..1000 {
            let d2d = 10.0 + i as f64 * 5.0;
            let d3d_bs = d2d.hypot(23.5);
            let d3d_ap = d2d.hypot(8.5);
            let los = pathloss_uma(d2d, d3d_bs, 25.0, 1.5, 3.5e9, true, &mut rng);
            let nlos = pathloss_uma(d2d, d3d_bs, 25.0, 1.5, 3.5e9, false, &mut rng);
            assert!(nlos >= los);
            let los = pathloss_umi(d2d, d3d_ap, 10.0, 1.5, 3.5e9, true);
            let nlos = pathloss_umi(d2d, d3d_ap, 10.0, 1.5, 3.5e9, false);
            assert!(nlos >= los);
            assert!(los >= prev_umi.0 && nlos >= prev_umi.1);
            prev_umi = (los, nlos);
        }
    }

    #[test]
    fn antenna_pattern() {
        let p = AntennaPattern::default();
        assert_eq!(p.gain_db(0.0), 8.0);
        for a in [0.1, 0.5, 1.0, 1.4] {
            assert_eq!(p.gain_db(a), p.gain_db(-a));
            assert!(p.gain_db(a) < 8.0);
        }
        assert!((p.gain_db(32.5f64.to_radians()) - 5.0).abs() < 1e-9);
        assert_eq!(p.gain_db(PI / 2.0), -22.0);
        assert_eq!(p.gain_db(-PI / 2.0), -22.0);
        assert_eq!(p.gain_db(PI), -22.0);
    }

    #[test]
    fn steering_vectors() {
        let a = steering_vector(0.0, 4);
        assert!(a.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let b = steering_vector(PI / 2.0, 2);
        assert!((b[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        for t in [-1.0, 0.2, 2.5] {
            assert!((steering_vector(t, 16).norm_squared() - 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shadowing_same_user_full_variance() {
        let m = ShadowingModel::BS;
        assert_eq!(m.covariance(0.0), 36.0);
        assert!((m.covariance(50.0) - 36.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn shadowing_empirical_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pos = [Point::new(0.0, 0.0), Point::new(50.0, 0.0)];
        let n = 100_000;
        let z = correlated_shadowing(&ShadowingModel::BS, &pos, n, &mut rng).unwrap();
        let cov = (0..n).map(|i| z[(0, i)] * z[(1, i)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| z[(0, i)].powi(2)).sum::<f64>() / n as f64;
        let target = 36.0 * (-1.0f64).exp();
        assert!((cov - target).abs() / target < 0.05, "cov {cov}");
        assert!((var - 36.0).abs() / 36.0 < 0.05, "var {var}");
    }

    #[test]
    fn rayleigh_power_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = link(2.5, RicianK::Finite(0.0));
        let n = 10_000;
        let p: Vec<f64> = (0..n).map(|_| draw_link(&l, 8, &mut rng).0.norm_squared() / (8.0 * 2.5)).collect();
        let mean = p.iter().sum::<f64>() / n as f64;
        let sd = (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn pure_los_is_deterministic_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = link(3.0, RicianK::PureLos);
        for _ in 0..10 {
            let (v, phase) = draw_link(&l, 8, &mut rng);
            assert!((v.norm_squared() - 24.0).abs() < 1e-9);
            let a = steering_vector(l.aod, 8) * C64::from_polar(3f64.sqrt(), phase);
            assert!((v - a).norm() < 1e-12);
        }
        // large finite K approaches the sentinel
        let big = link(3.0, RicianK::Finite(1e8));
        let (v, _) = draw_link(&big, 8, &mut rng);
        assert!((v.norm_squared() / 24.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rice_power_split_at_unit_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = link(1.0, RicianK::Finite(1.0));
        let a = steering_vector(l.aod, 4);
        let n = 10_000;
        // LOS part power = |a^H v|^2 / N^2 expectation split: deterministic
        // component power equals (K/(K+1)) N
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let (v, phase) = draw_link(&l, 4, &mut rng);
                let los = &a * C64::from_polar((0.5f64).sqrt(), phase);
                let scatter = v - &los;
                scatter.norm_squared() / 4.0
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        // scattered share is 1 - K/(K+1) = 1/2
        assert!((mean - 0.5).abs() < 3.0 * sd / (n as f64).sqrt(), "scatter share {mean}");
        assert_eq!(l.k_factor.los_fraction(), 0.5);
    }
}
