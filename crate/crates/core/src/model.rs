//! Domain types, unit conversions, and seeded scenario generation.
//!
//! Internal units are watts, Hz, bits/s, meters, and linear gains. Inputs
//! stated in dBm/dB are converted exactly once at the configuration
//! boundary; no dB arithmetic appears downstream of construction.
//!
//! Scenario generation is a pure function of `(template, seed)`. The
//! generator is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`), a
//! counter-based stream cipher RNG with a portable, documented expansion,
//! so the same template and seed reproduce the same scenario on every
//! platform. Draw order is fixed: for each MNO, subchannel price(s) then
//! power price; then for each SP in order, per user: x, y, minimum rate,
//! payment rate. Every uniform draw consumes exactly one `f64` from the
//! stream and is mapped as `lo + u * (hi - lo)`, so editing a range (for a
//! price sweep) never shifts the draws of unrelated quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a dBm level to watts: `10^(level/10)` milliwatts.
pub fn dbm_to_watt(level_dbm: f64) -> f64 {
    10f64.powf(level_dbm / 10.0) / 1000.0
}

/// Converts a dB ratio to a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise power in watts over `bandwidth_hz` for a spectral density in dBm/Hz.
pub fn noise_power(density_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watt(density_dbm_per_hz) * bandwidth_hz
}

pub const BITS_PER_MBPS: f64 = 1e6;

/// One MNO and the UAV it operates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnoConfig {
    /// UAV position in meters: x, y, altitude.
    pub uav_position_m: [f64; 3],
    pub num_subchannels: usize,
    /// Total transmit power budget of the UAV, watts.
    pub max_power_w: f64,
    /// Lease price per subchannel, one entry per subchannel.
    pub price_per_subchannel: Vec<f64>,
    /// Lease price per watt of transmit power.
    pub price_per_watt: f64,
    /// Maximum number of users the UAV serves.
    pub user_capacity: usize,
}

impl MnoConfig {
    pub fn altitude_m(&self) -> f64 {
        self.uav_position_m[2]
    }

    /// Mean subchannel price; the per-user cost share used when ranking UAVs.
    pub fn mean_subchannel_price(&self) -> f64 {
        self.price_per_subchannel.iter().sum::<f64>() / self.price_per_subchannel.len() as f64
    }

    fn validate(&self, idx: usize) -> Result<()> {
        if self.altitude_m() <= 0.0 {
            return Err(Error::InvalidScenario(format!("mno {idx}: altitude must be > 0")));
        }
        if self.max_power_w <= 0.0 {
            return Err(Error::InvalidScenario(format!("mno {idx}: max_power_w must be > 0")));
        }
        if self.num_subchannels == 0 {
            return Err(Error::InvalidScenario(format!("mno {idx}: needs at least one subchannel")));
        }
        if self.price_per_subchannel.len() != self.num_subchannels {
            return Err(Error::InvalidScenario(format!(
                "mno {idx}: price_per_subchannel must have one entry per subchannel"
            )));
        }
        if self.price_per_subchannel.iter().any(|p| !p.is_finite() || *p < 0.0)
            || !self.price_per_watt.is_finite()
            || self.price_per_watt < 0.0
        {
            return Err(Error::InvalidScenario(format!("mno {idx}: prices must be >= 0")));
        }
        if self.user_capacity == 0 {
            return Err(Error::InvalidScenario(format!("mno {idx}: user_capacity must be >= 1")));
        }
        Ok(())
    }
}

/// One mobile user of a service provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserConfig {
    /// Ground position in meters.
    pub position_m: [f64; 2],
    /// Minimum required data rate, bits/s.
    pub min_rate_bps: f64,
}

/// One service provider and its users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpConfig {
    pub users: Vec<UserConfig>,
    /// Per-user payment rate, money per Mbps; aligned with `users`.
    pub payment_per_mbps: Vec<f64>,
}

/// Radio parameters shared by all links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub subchannel_bandwidth_hz: f64,
    /// Channel gain at the 1 m reference distance, linear.
    pub reference_gain: f64,
    pub path_loss_exponent: f64,
    pub noise_density_dbm_per_hz: f64,
    pub area_side_m: f64,
}

impl RadioParams {
    /// Noise power over one subchannel, watts.
    pub fn noise_power_w(&self) -> f64 {
        noise_power(self.noise_density_dbm_per_hz, self.subchannel_bandwidth_hz)
    }

    fn validate(&self) -> Result<()> {
        if self.subchannel_bandwidth_hz <= 0.0 {
            return Err(Error::InvalidScenario("subchannel bandwidth must be > 0".into()));
        }
        if self.reference_gain <= 0.0 {
            return Err(Error::InvalidScenario("reference gain must be > 0".into()));
        }
        if self.path_loss_exponent < 2.0 {
            return Err(Error::InvalidScenario("path loss exponent must be >= 2".into()));
        }
        if !(self.noise_power_w() > 0.0) {
            return Err(Error::InvalidScenario("derived noise power must be > 0".into()));
        }
        if self.area_side_m <= 0.0 {
            return Err(Error::InvalidScenario("area side must be > 0".into()));
        }
        Ok(())
    }
}

/// A full network instance: MNOs/UAVs, SPs/users, radio parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mnos: Vec<MnoConfig>,
    pub sps: Vec<SpConfig>,
    pub radio: RadioParams,
    pub seed: u64,
}

/// Identifies one user both by (SP, local) coordinates and by its global index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserRef {
    pub sp: usize,
    pub user: usize,
    pub global: usize,
}

impl Scenario {
    pub fn num_uavs(&self) -> usize {
        self.mnos.len()
    }

    pub fn num_sps(&self) -> usize {
        self.sps.len()
    }

    pub fn num_users(&self) -> usize {
        self.sps.iter().map(|sp| sp.users.len()).sum()
    }

    /// Total number of subchannel slots across all UAVs.
    pub fn num_slots(&self) -> usize {
        self.mnos.iter().map(|m| m.num_subchannels).sum()
    }

    /// Offset of UAV `n`'s first slot in the flattened (uav, channel) layout.
    pub fn slot_offset(&self, uav: usize) -> usize {
        self.mnos[..uav].iter().map(|m| m.num_subchannels).sum()
    }

    pub fn slot_index(&self, uav: usize, channel: usize) -> usize {
        self.slot_offset(uav) + channel
    }

    /// Maps a flattened slot index back to (uav, channel).
    pub fn slot_coords(&self, slot: usize) -> (usize, usize) {
        let mut rem = slot;
        for (n, mno) in self.mnos.iter().enumerate() {
            if rem < mno.num_subchannels {
                return (n, rem);
            }
            rem -= mno.num_subchannels;
        }
        panic!("slot {slot} out of range");
    }

    pub fn users(&self) -> impl Iterator<Item = UserRef> + '_ {
        self.sps.iter().enumerate().flat_map(|(m, sp)| {
            let base: usize = self.sps[..m].iter().map(|s| s.users.len()).sum();
            (0..sp.users.len()).map(move |u| UserRef { sp: m, user: u, global: base + u })
        })
    }

    pub fn user_global_index(&self, sp: usize, user: usize) -> usize {
        let base: usize = self.sps[..sp].iter().map(|s| s.users.len()).sum();
        base + user
    }

    pub fn user_of_global(&self, global: usize) -> UserRef {
        let mut rem = global;
        for (m, sp) in self.sps.iter().enumerate() {
            if rem < sp.users.len() {
                return UserRef { sp: m, user: rem, global };
            }
            rem -= sp.users.len();
        }
        panic!("user {global} out of range");
    }

    pub fn user_config(&self, r: UserRef) -> &UserConfig {
        &self.sps[r.sp].users[r.user]
    }

    /// Payment rate (money per Mbps) of one user.
    pub fn payment_rate(&self, r: UserRef) -> f64 {
        self.sps[r.sp].payment_per_mbps[r.user]
    }

    pub fn validate(&self) -> Result<()> {
        if self.mnos.is_empty() {
            return Err(Error::InvalidScenario("need at least one MNO".into()));
        }
        if self.sps.is_empty() {
            return Err(Error::InvalidScenario("need at least one SP".into()));
        }
        if self.num_users() == 0 {
            return Err(Error::InvalidScenario("need at least one user".into()));
        }
        self.radio.validate()?;
        for (i, mno) in self.mnos.iter().enumerate() {
            mno.validate(i)?;
        }
        for (m, sp) in self.sps.iter().enumerate() {
            if sp.payment_per_mbps.len() != sp.users.len() {
                return Err(Error::InvalidScenario(format!(
                    "sp {m}: payment_per_mbps must have one entry per user"
                )));
            }
            for (u, cfg) in sp.users.iter().enumerate() {
                if cfg.min_rate_bps <= 0.0 {
                    return Err(Error::InvalidScenario(format!("sp {m} user {u}: min rate must be > 0")));
                }
                let [x, y] = cfg.position_m;
                let side = self.radio.area_side_m;
                if !(0.0..=side).contains(&x) || !(0.0..=side).contains(&y) {
                    return Err(Error::InvalidScenario(format!(
                        "sp {m} user {u}: position outside the {side} m area"
                    )));
                }
                if sp.payment_per_mbps[u] <= 0.0 {
                    return Err(Error::InvalidScenario(format!("sp {m} user {u}: payment rate must be > 0")));
                }
            }
        }
        Ok(())
    }

    /// Short stable digest of the scenario contents (FNV-1a over canonical JSON).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}

/// Template from which concrete scenarios are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioTemplate {
    pub num_mnos: usize,
    pub users_per_sp: Vec<usize>,
    pub area_side_m: f64,
    pub uav_altitude_m: f64,
    /// Horizontal UAV positions; defaults to vertical-strip centroids.
    pub uav_positions_m: Option<Vec<[f64; 2]>>,
    pub num_subchannels: usize,
    pub subchannel_bandwidth_hz: f64,
    pub max_power_dbm: f64,
    pub reference_gain_db: f64,
    pub noise_density_dbm_per_hz: f64,
    pub path_loss_exponent: f64,
    /// Subchannel price range, drawn per MNO (or per subchannel, see below).
    pub subchannel_price_range: [f64; 2],
    /// Power price range, drawn per MNO.
    pub power_price_range: [f64; 2],
    pub min_rate_mbps_range: [f64; 2],
    pub payment_per_mbps_range: [f64; 2],
    /// Per-UAV user cap; defaults to the subchannel count.
    pub user_capacity: Option<usize>,
    /// Draw a distinct subchannel price per subchannel instead of one per MNO.
    pub per_subchannel_price: bool,
}

impl Default for ScenarioTemplate {
    /// The reference setup: 3 MNOs, SPs with 20/10/5 users in a 400 m square,
    /// UAVs at 100 m, 20 subchannels of 150 kHz, 35 dBm power budget,
    /// -10 dB reference gain, -174 dBm/Hz noise density.
    fn default() -> Self {
        Self {
            num_mnos: 3,
            users_per_sp: vec![20, 10, 5],
            area_side_m: 400.0,
            uav_altitude_m: 100.0,
            uav_positions_m: None,
            num_subchannels: 20,
            subchannel_bandwidth_hz: 150e3,
            max_power_dbm: 35.0,
            reference_gain_db: -10.0,
            noise_density_dbm_per_hz: -174.0,
            path_loss_exponent: 2.0,
            subchannel_price_range: [2.0, 3.0],
            power_price_range: [4.0, 5.0],
            min_rate_mbps_range: [20.0, 30.0],
            payment_per_mbps_range: [0.3, 0.5],
            user_capacity: None,
            per_subchannel_price: false,
        }
    }
}

impl ScenarioTemplate {
    fn validate(&self) -> Result<()> {
        if self.num_mnos == 0 || self.users_per_sp.is_empty() {
            return Err(Error::InvalidScenario("template needs at least one MNO and one SP".into()));
        }
        for (what, r) in [
            ("subchannel_price_range", self.subchannel_price_range),
            ("power_price_range", self.power_price_range),
            ("min_rate_mbps_range", self.min_rate_mbps_range),
            ("payment_per_mbps_range", self.payment_per_mbps_range),
        ] {
            if !(r[0] <= r[1]) {
                return Err(Error::InvalidRange { what, lo: r[0], hi: r[1] });
            }
        }
        if let Some(pos) = &self.uav_positions_m {
            if pos.len() != self.num_mnos {
                return Err(Error::InvalidScenario("uav_positions_m must have one entry per MNO".into()));
            }
        }
        Ok(())
    }

    /// Default horizontal placement: centroids of `num_mnos` vertical strips.
    pub fn default_uav_positions(&self) -> Vec<[f64; 2]> {
        let n = self.num_mnos;
        (0..n)
            .map(|i| {
                let x = self.area_side_m * (2 * i + 1) as f64 / (2 * n) as f64;
                [x, self.area_side_m / 2.0]
            })
            .collect()
    }
}

/// Draws a deterministic scenario from `template` and `seed`.
pub fn generate_scenario(template: &ScenarioTemplate, seed: u64) -> Result<Scenario> {
    use rand::{Rng, SeedableRng};

    template.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut unif = |lo: f64, hi: f64| {
        let u: f64 = rng.gen();
        lo + u * (hi - lo)
    };

    let positions = template
        .uav_positions_m
        .clone()
        .unwrap_or_else(|| template.default_uav_positions());
    let max_power_w = dbm_to_watt(template.max_power_dbm);
    let capacity = template.user_capacity.unwrap_or(template.num_subchannels);

    let mut mnos = Vec::with_capacity(template.num_mnos);
    for pos in positions.iter().take(template.num_mnos) {
        let [blo, bhi] = template.subchannel_price_range;
        let price_per_subchannel = if template.per_subchannel_price {
            (0..template.num_subchannels).map(|_| unif(blo, bhi)).collect()
        } else {
            vec![unif(blo, bhi); template.num_subchannels]
        };
        let [tlo, thi] = template.power_price_range;
        let price_per_watt = unif(tlo, thi);
        mnos.push(MnoConfig {
            uav_position_m: [pos[0], pos[1], template.uav_altitude_m],
            num_subchannels: template.num_subchannels,
            max_power_w,
            price_per_subchannel,
            price_per_watt,
            user_capacity: capacity,
        });
    }

    let mut sps = Vec::with_capacity(template.users_per_sp.len());
    for &count in &template.users_per_sp {
        let mut users = Vec::with_capacity(count);
        let mut payment = Vec::with_capacity(count);
        for _ in 0..count {
            let x = unif(0.0, template.area_side_m);
            let y = unif(0.0, template.area_side_m);
            let [rlo, rhi] = template.min_rate_mbps_range;
            let min_rate_bps = unif(rlo, rhi) * BITS_PER_MBPS;
            let [dlo, dhi] = template.payment_per_mbps_range;
            payment.push(unif(dlo, dhi));
            users.push(UserConfig { position_m: [x, y], min_rate_bps });
        }
        sps.push(SpConfig { users, payment_per_mbps: payment });
    }

    let scenario = Scenario {
        mnos,
        sps,
        radio: RadioParams {
            subchannel_bandwidth_hz: template.subchannel_bandwidth_hz,
            reference_gain: db_to_linear(template.reference_gain_db),
            path_loss_exponent: template.path_loss_exponent,
            noise_density_dbm_per_hz: template.noise_density_dbm_per_hz,
            area_side_m: template.area_side_m,
        },
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Unit annotations embedded in serialized scenario documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitsBlock {
    pub position: String,
    pub power: String,
    pub rate: String,
    pub bandwidth: String,
    pub gain: String,
    pub noise_density: String,
    pub prices: String,
}

impl Default for UnitsBlock {
    fn default() -> Self {
        Self {
            position: "meters".into(),
            power: "watts".into(),
            rate: "bits_per_second".into(),
            bandwidth: "hertz".into(),
            gain: "linear".into(),
            noise_density: "dbm_per_hz".into(),
            prices: "money; payment per mbps, subchannel per lease, power per watt".into(),
        }
    }
}

/// On-disk form of a full scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub units: UnitsBlock,
    pub scenario: Scenario,
}

impl From<Scenario> for ScenarioDocument {
    fn from(scenario: Scenario) -> Self {
        Self { units: UnitsBlock::default(), scenario }
    }
}

/// On-disk form of a scenario template; the CLI's input format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDocument {
    #[serde(default)]
    pub units: UnitsBlock,
    pub template: ScenarioTemplate,
}

impl From<ScenarioTemplate> for TemplateDocument {
    fn from(template: ScenarioTemplate) -> Self {
        Self { units: UnitsBlock::default(), template }
    }
}
