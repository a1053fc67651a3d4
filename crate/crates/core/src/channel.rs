//! Air-to-ground channel: geometry, LoS probability, log-distance path loss,
//! link-budget SNR, and the CQI chain.
//!
//! The chain is `positions -> geometry -> LoS sample -> path loss -> SNR ->
//! CQI -> spectral efficiency`. Everything except the LoS draw (and optional
//! shadowing) is a pure function, so a fixed LoS state makes the whole chain
//! deterministic. SNR is linear in transmit power: raising `tx_power_dbm` by
//! delta raises SNR by exactly delta for any geometry.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in m/s.
const C_M_S: f64 = 299_792_458.0;

/// Default CQI index -> spectral efficiency (bit/s/Hz), entries for CQI 1..=15.
pub const DEFAULT_CQI_EFFICIENCY: [f64; 15] = [
    0.15, 0.23, 0.38, 0.60, 0.88, 1.18, 1.48, 1.91, 2.41, 2.73, 3.32, 3.90, 4.52, 5.12, 5.55,
];

/// Scalar link budget: transmit power, antenna/amplifier gains, and the
/// receiver noise characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudget {
    /// Per-reference-signal transmit power (dBm).
    pub tx_power_dbm: f64,
    /// Transmit-side antenna plus amplifier gain (dB).
    pub tx_gain_db: f64,
    /// Receive-side antenna plus LNA gain (dB).
    pub rx_gain_db: f64,
    /// Receiver noise figure (dB).
    pub noise_figure_db: f64,
    /// Noise bandwidth of the carrier (Hz).
    pub bandwidth_hz: f64,
    /// Center frequency (Hz).
    #[serde(default = "default_carrier_freq")]
    pub carrier_freq_hz: f64,
}

fn default_carrier_freq() -> f64 {
    3.5e9
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: -27.0,
            tx_gain_db: 46.0,
            rx_gain_db: 22.0,
            noise_figure_db: 7.0,
            bandwidth_hz: 40.0e6,
            carrier_freq_hz: 3.5e9,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(ChannelError::BadBudget("bandwidth_hz must be > 0"));
        }
        if !(self.carrier_freq_hz > 0.0) {
            return Err(ChannelError::BadBudget("carrier_freq_hz must be > 0"));
        }
        Ok(())
    }

    /// Thermal noise floor: -174 dBm/Hz + 10 log10(B) + NF.
    pub fn noise_floor_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }
}

/// Channel model constants. All are overridable per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelCfg {
    /// LoS probability at zero (or negative) elevation.
    pub p0: f64,
    /// Elevation (degrees) at which LoS probability saturates at 1.
    pub theta_sat_deg: f64,
    /// Path-loss exponent under line of sight.
    pub exponent_los: f64,
    /// Path-loss exponent without line of sight.
    pub exponent_nlos: f64,
    /// SNR (dB) at the bottom of the CQI 1 step.
    pub snr_min_db: f64,
    /// SNR width (dB) of one CQI step.
    pub snr_step_db: f64,
    /// CQI 1..=15 spectral efficiencies (bit/s/Hz).
    pub cqi_efficiency: Vec<f64>,
    /// Lognormal shadowing toggle; off keeps the chain deterministic.
    pub shadowing_enabled: bool,
    /// Shadowing standard deviation (dB).
    pub shadowing_sigma_db: f64,
    /// Cadence at which LoS state and CQI are refreshed (ms).
    pub update_period_ms: u64,
    /// Calibration hook: (elevation_deg, gain_db) breakpoints applied on top
    /// of the budget gains, linearly interpolated. Empty means flat 0 dB.
    pub elevation_gain_db: Vec<(f64, f64)>,
}

impl Default for ChannelCfg {
    fn default() -> Self {
        ChannelCfg {
            p0: 0.3,
            theta_sat_deg: 45.0,
            exponent_los: 2.0,
            exponent_nlos: 3.5,
            snr_min_db: -6.0,
            snr_step_db: 2.0,
            cqi_efficiency: DEFAULT_CQI_EFFICIENCY.to_vec(),
            shadowing_enabled: false,
            shadowing_sigma_db: 4.0,
            update_period_ms: 100,
            elevation_gain_db: Vec::new(),
        }
    }
}

impl ChannelCfg {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.cqi_efficiency.len() != 15 {
            return Err(ChannelError::BadConfig(
                "cqi_efficiency must have exactly 15 entries",
            ));
        }
        if self
            .cqi_efficiency
            .windows(2)
            .any(|w| !(w[1] >= w[0]) || !(w[0] > 0.0))
        {
            return Err(ChannelError::BadConfig(
                "cqi_efficiency must be positive and non-decreasing",
            ));
        }
        if !(self.snr_step_db > 0.0) {
            return Err(ChannelError::BadConfig("snr_step_db must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(ChannelError::BadConfig("p0 must be in [0, 1]"));
        }
        if !(self.theta_sat_deg > 0.0) {
            return Err(ChannelError::BadConfig("theta_sat_deg must be > 0"));
        }
        if self.update_period_ms == 0 {
            return Err(ChannelError::BadConfig("update_period_ms must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("coincident UE and gNB positions")]
    CoincidentPositions,
    #[error("non-finite position component")]
    NonFinitePosition,
    #[error("distance {0} m below the 1 m path-loss reference")]
    BelowReferenceDistance(f64),
    #[error("invalid link budget: {0}")]
    BadBudget(&'static str),
    #[error("invalid channel config: {0}")]
    BadConfig(&'static str),
}

/// 3D geometry between a UE and the gNB antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub distance_3d_m: f64,
    pub horizontal_m: f64,
    pub elevation_deg: f64,
}

/// Per-UE channel snapshot for one update period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub distance_3d_m: f64,
    pub elevation_deg: f64,
    pub los: bool,
    pub path_loss_db: f64,
    pub snr_db: f64,
    pub cqi: u8,
}

/// Euclidean distance, horizontal range, and elevation angle of the UE as
/// seen from the gNB (positive above the antenna).
pub fn geometry(ue_pos: [f64; 3], gnb_pos: [f64; 3]) -> Result<Geometry, ChannelError> {
    if ue_pos.iter().chain(gnb_pos.iter()).any(|v| !v.is_finite()) {
        return Err(ChannelError::NonFinitePosition);
    }
    let dx = ue_pos[0] - gnb_pos[0];
    let dy = ue_pos[1] - gnb_pos[1];
    let dz = ue_pos[2] - gnb_pos[2];
    let horizontal = (dx * dx + dy * dy).sqrt();
    let distance = (dx * dx + dy * dy + dz * dz).sqrt();
    if distance == 0.0 {
        return Err(ChannelError::CoincidentPositions);
    }
    Ok(Geometry {
        distance_3d_m: distance,
        horizontal_m: horizontal,
        elevation_deg: dz.atan2(horizontal).to_degrees(),
    })
}

/// LoS probability grows linearly from `p0` at zero elevation to 1 at
/// `theta_sat_deg`; negative elevations stay at `p0`.
pub fn los_probability(cfg: &ChannelCfg, elevation_deg: f64) -> f64 {
    let raised = cfg.p0 + (1.0 - cfg.p0) * elevation_deg.max(0.0) / cfg.theta_sat_deg;
    raised.clamp(cfg.p0, 1.0)
}

/// One Bernoulli draw from the scenario's LoS stream. Always consumes exactly
/// one value so parallel runs with different budgets stay draw-aligned.
pub fn sample_los<R: Rng>(probability: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < probability
}

/// Free-space path loss at the 1 m reference distance.
pub fn reference_path_loss_db(carrier_freq_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * carrier_freq_hz / C_M_S).log10()
}

/// Log-distance path loss: PL_ref(f) + 10 n log10(d), n depending on LoS.
pub fn path_loss_db(
    cfg: &ChannelCfg,
    distance_3d_m: f64,
    carrier_freq_hz: f64,
    los: bool,
) -> Result<f64, ChannelError> {
    if distance_3d_m < 1.0 {
        return Err(ChannelError::BelowReferenceDistance(distance_3d_m));
    }
    let n = if los {
        cfg.exponent_los
    } else {
        cfg.exponent_nlos
    };
    Ok(reference_path_loss_db(carrier_freq_hz) + 10.0 * n * distance_3d_m.log10())
}

/// Lognormal shadowing term in dB (Box-Muller over the shadowing stream).
/// Draws only when shadowing is enabled, leaving other streams untouched.
pub fn shadowing_db<R: Rng>(cfg: &ChannelCfg, rng: &mut R) -> f64 {
    if !cfg.shadowing_enabled {
        return 0.0;
    }
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * cfg.shadowing_sigma_db
}

/// Received SNR in dB for a given path loss.
pub fn snr_db(budget: &LinkBudget, path_loss_db: f64) -> f64 {
    budget.tx_power_dbm + budget.tx_gain_db + budget.rx_gain_db
        - path_loss_db
        - budget.noise_floor_dbm()
}

/// Extra antenna gain at the given elevation from the calibration table
/// (linear interpolation, clamped at the ends; empty table is flat 0 dB).
pub fn elevation_gain_db(cfg: &ChannelCfg, elevation_deg: f64) -> f64 {
    let table = &cfg.elevation_gain_db;
    if table.is_empty() {
        return 0.0;
    }
    if elevation_deg <= table[0].0 {
        return table[0].1;
    }
    for w in table.windows(2) {
        let (e0, g0) = w[0];
        let (e1, g1) = w[1];
        if elevation_deg <= e1 {
            let t = (elevation_deg - e0) / (e1 - e0);
            return g0 + t * (g1 - g0);
        }
    }
    table[table.len() - 1].1
}

/// Quantizes SNR onto the CQI ladder: 1 + floor((snr - snr_min)/step),
/// clamped to [1, 15]. Monotone non-decreasing in SNR.
pub fn snr_to_cqi(cfg: &ChannelCfg, snr_db: f64) -> u8 {
    let step = ((snr_db - cfg.snr_min_db) / cfg.snr_step_db).floor();
    let idx = 1.0 + step;
    idx.clamp(1.0, 15.0) as u8
}

/// Spectral efficiency for a CQI index (1..=15).
pub fn cqi_to_efficiency(cfg: &ChannelCfg, cqi: u8) -> f64 {
    let idx = cqi.clamp(1, 15) as usize - 1;
    cfg.cqi_efficiency[idx]
}

/// Full deterministic chain for a known LoS state (no shadowing draw).
pub fn evaluate(
    cfg: &ChannelCfg,
    budget: &LinkBudget,
    ue_pos: [f64; 3],
    gnb_pos: [f64; 3],
    los: bool,
    shadow_db: f64,
) -> Result<ChannelState, ChannelError> {
    let geo = geometry(ue_pos, gnb_pos)?;
    let pl = path_loss_db(cfg, geo.distance_3d_m, budget.carrier_freq_hz, los)? + shadow_db;
    let snr = snr_db(budget, pl) + elevation_gain_db(cfg, geo.elevation_deg);
    Ok(ChannelState {
        distance_3d_m: geo.distance_3d_m,
        elevation_deg: geo.elevation_deg,
        los,
        path_loss_db: pl,
        snr_db: snr,
        cqi: snr_to_cqi(cfg, snr),
    })
}
