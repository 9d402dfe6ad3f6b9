//! Propagation and rate math: free-space line-of-sight gain, SNR, and the
//! Shannon rate of one subchannel.
//!
//! The downlink is deterministic free-space LoS; the gain of a link does not
//! depend on which subchannel carries it. An optional multiplicative Rician
//! fading factor exists behind [`rician_fading_factor`] for experimentation
//! but is off everywhere in the solver and acceptance paths.

use crate::error::{Error, Result};
use crate::model::Scenario;

/// 3D distance between a ground user and a UAV: `sqrt(h^2 + ||o - c||^2)`.
pub fn distance(user_pos_m: [f64; 2], uav_pos_m: [f64; 3]) -> f64 {
    let dx = user_pos_m[0] - uav_pos_m[0];
    let dy = user_pos_m[1] - uav_pos_m[1];
    let h = uav_pos_m[2];
    (h * h + dx * dx + dy * dy).sqrt()
}

/// Free-space path-loss gain `g0 / d^alpha`, valid from the 1 m reference.
pub fn channel_gain(d_m: f64, g0: f64, alpha: f64) -> Result<f64> {
    if d_m < 1.0 {
        return Err(Error::OutOfModel { d: d_m });
    }
    Ok(g0 / d_m.powf(alpha))
}

/// Received SNR `p * g / sigma^2`.
pub fn snr(p_w: f64, gain: f64, sigma2_w: f64) -> f64 {
    p_w * gain / sigma2_w
}

/// Shannon rate of one subchannel, bits/s: `omega * log2(1 + gamma)`.
pub fn rate(omega_hz: f64, gamma: f64) -> f64 {
    omega_hz * (1.0 + gamma).log2()
}

/// Multiplicative Rician power-fading sample with factor `k` (linear).
///
/// Mean 1; not used by any solver stage.
pub fn rician_fading_factor(k: f64, rng: &mut impl rand::Rng) -> f64 {
    let sigma = (1.0 / (2.0 * (k + 1.0))).sqrt();
    let los = (k / (k + 1.0)).sqrt();
    // Box-Muller pair for the scattered component
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    let i = los + sigma * r * c;
    let q = sigma * r * s;
    i * i + q * q
}

/// Precomputed link gains and distances for every (user, UAV) pair.
///
/// Free of per-subchannel structure: the free-space model has no
/// frequency-selective term, so one gain per link covers all subchannels.
#[derive(Debug, Clone)]
pub struct LinkGainTable {
    gains: Vec<f64>,
    distances: Vec<f64>,
    num_uavs: usize,
    /// Noise power over one subchannel, watts.
    pub noise_w: f64,
    /// Subchannel bandwidth, Hz.
    pub omega_hz: f64,
}

impl LinkGainTable {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let num_users = scenario.num_users();
        let num_uavs = scenario.num_uavs();
        let mut gains = vec![0.0; num_users * num_uavs];
        let mut distances = vec![0.0; num_users * num_uavs];
        for r in scenario.users() {
            let pos = scenario.user_config(r).position_m;
            for (n, mno) in scenario.mnos.iter().enumerate() {
                let d = distance(pos, mno.uav_position_m);
                let g = channel_gain(d, scenario.radio.reference_gain, scenario.radio.path_loss_exponent)?;
                gains[r.global * num_uavs + n] = g;
                distances[r.global * num_uavs + n] = d;
            }
        }
        Ok(Self {
            gains,
            distances,
            num_uavs,
            noise_w: scenario.radio.noise_power_w(),
            omega_hz: scenario.radio.subchannel_bandwidth_hz,
        })
    }

    pub fn gain(&self, user_global: usize, uav: usize) -> f64 {
        self.gains[user_global * self.num_uavs + uav]
    }

    pub fn distance_m(&self, user_global: usize, uav: usize) -> f64 {
        self.distances[user_global * self.num_uavs + uav]
    }

    /// Rate of one subchannel from UAV `uav` to a user at power `p_w`, bits/s.
    pub fn rate_bps(&self, user_global: usize, uav: usize, p_w: f64) -> f64 {
        rate(self.omega_hz, snr(p_w, self.gain(user_global, uav), self.noise_w))
    }
}
