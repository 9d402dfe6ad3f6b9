//! Revenue, cost, utility, and QoS evaluation over the three decision
//! matrices: association `A`, subchannel assignment `X`, transmit power `P`.
//!
//! Payment rates are money per Mbps, so revenue converts achieved rates from
//! bits/s to Mbps at the point of multiplication; rates stay in bits/s
//! everywhere else. The cost power term deliberately sums `a * p` without an
//! `x` factor; under the canonical support rule (power only on assigned
//! slots) the two forms coincide, which `tests::cost_with_or_without_x`
//! pins down.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGainTable;
use crate::model::{Scenario, BITS_PER_MBPS};

/// Binary user-to-UAV association, dense so that invalid states remain
/// representable for the feasibility checker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    data: Vec<bool>,
    num_users: usize,
    num_uavs: usize,
}

impl AssociationMatrix {
    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            data: vec![false; scenario.num_users() * scenario.num_uavs()],
            num_users: scenario.num_users(),
            num_uavs: scenario.num_uavs(),
        }
    }

    pub fn get(&self, user_global: usize, uav: usize) -> bool {
        self.data[user_global * self.num_uavs + uav]
    }

    pub fn set(&mut self, user_global: usize, uav: usize, value: bool) {
        self.data[user_global * self.num_uavs + uav] = value;
    }

    /// The single UAV a user is associated with, if any and unique.
    pub fn uav_of(&self, user_global: usize) -> Option<usize> {
        (0..self.num_uavs).find(|&n| self.get(user_global, n))
    }

    pub fn users_of(&self, uav: usize) -> Vec<usize> {
        (0..self.num_users).filter(|&u| self.get(u, uav)).collect()
    }

    pub fn num_associated(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// Binary user-to-(UAV, subchannel) assignment in the flattened slot layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    data: Vec<bool>,
    num_users: usize,
    num_slots: usize,
}

impl AssignmentMatrix {
    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            data: vec![false; scenario.num_users() * scenario.num_slots()],
            num_users: scenario.num_users(),
            num_slots: scenario.num_slots(),
        }
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn get(&self, user_global: usize, slot: usize) -> bool {
        self.data[user_global * self.num_slots + slot]
    }

    pub fn set(&mut self, user_global: usize, slot: usize, value: bool) {
        self.data[user_global * self.num_slots + slot] = value;
    }

    /// Occupant of a slot under the one-user-per-subchannel rule.
    pub fn user_at(&self, slot: usize) -> Option<usize> {
        (0..self.num_users).find(|&u| self.get(u, slot))
    }

    pub fn slots_of(&self, user_global: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_slots).filter(move |&s| self.get(user_global, s))
    }

    pub fn num_assigned(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// Nonnegative transmit power per (user, UAV, subchannel), watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix {
    data: Vec<f64>,
    num_users: usize,
    num_slots: usize,
}

impl PowerMatrix {
    pub fn zeros(scenario: &Scenario) -> Self {
        Self {
            data: vec![0.0; scenario.num_users() * scenario.num_slots()],
            num_users: scenario.num_users(),
            num_slots: scenario.num_slots(),
        }
    }

    pub fn get(&self, user_global: usize, slot: usize) -> f64 {
        self.data[user_global * self.num_slots + slot]
    }

    pub fn set(&mut self, user_global: usize, slot: usize, p_w: f64) {
        self.data[user_global * self.num_slots + slot] = p_w;
    }

    /// Total power emitted on a slot (over all users).
    pub fn slot_power(&self, slot: usize) -> f64 {
        (0..self.num_users).map(|u| self.get(u, slot)).sum()
    }

    /// Canonical support rule: zero out power wherever `x = 0`.
    pub fn apply_support_rule(&mut self, x: &AssignmentMatrix) {
        for u in 0..self.num_users {
            for s in 0..self.num_slots {
                if !x.get(u, s) {
                    self.set(u, s, 0.0);
                }
            }
        }
    }

    pub fn max_abs_diff(&self, other: &PowerMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Power available per (UAV, subchannel) slot, independent of which user
/// occupies the slot. This is the view the assignment stage optimizes
/// against: reassigning a slot hands its power to the new occupant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPower {
    power: Vec<f64>,
}

impl ChannelPower {
    /// Each UAV's budget split equally across its subchannels.
    pub fn equal_split(scenario: &Scenario) -> Self {
        let mut power = vec![0.0; scenario.num_slots()];
        for (slot, p) in power.iter_mut().enumerate() {
            let (uav, _) = scenario.slot_coords(slot);
            let mno = &scenario.mnos[uav];
            *p = mno.max_power_w / mno.num_subchannels as f64;
        }
        Self { power }
    }

    /// Collapses a power matrix to per-slot totals.
    pub fn from_matrix(p: &PowerMatrix, scenario: &Scenario) -> Self {
        Self { power: (0..scenario.num_slots()).map(|s| p.slot_power(s)).collect() }
    }

    pub fn from_vec(power: Vec<f64>) -> Self {
        Self { power }
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.power[slot]
    }

    pub fn num_slots(&self) -> usize {
        self.power.len()
    }

    /// Maps slot powers onto an assignment: power flows only on assigned slots.
    pub fn to_power_matrix(&self, x: &AssignmentMatrix, scenario: &Scenario) -> PowerMatrix {
        let mut p = PowerMatrix::zeros(scenario);
        for slot in 0..scenario.num_slots() {
            if let Some(u) = x.user_at(slot) {
                p.set(u, slot, self.power[slot]);
            }
        }
        p
    }
}

/// Per-SP and network-wide utility figures plus QoS satisfaction flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub per_sp: Vec<SpUtility>,
    pub total_utility: f64,
    /// One flag per global user: achieved rate meets the minimum.
    pub qos_satisfied: Vec<bool>,
    /// Achieved rate per global user, bits/s.
    pub user_rates_bps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpUtility {
    pub revenue: f64,
    pub cost: f64,
    pub utility: f64,
}

impl UtilityBreakdown {
    pub fn zeros(scenario: &Scenario) -> Self {
        let n = scenario.num_users();
        Self {
            per_sp: vec![SpUtility { revenue: 0.0, cost: 0.0, utility: 0.0 }; scenario.num_sps()],
            total_utility: 0.0,
            qos_satisfied: vec![false; n],
            user_rates_bps: vec![0.0; n],
        }
    }
}

/// Achieved downlink rate of user (sp, user): sum of `a * x * R` over slots.
pub fn user_rate_bps(
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    sp: usize,
    user: usize,
) -> f64 {
    let g = scenario.user_global_index(sp, user);
    let mut total = 0.0;
    for slot in 0..scenario.num_slots() {
        if !x.get(g, slot) {
            continue;
        }
        let (uav, _) = scenario.slot_coords(slot);
        if !a.get(g, uav) {
            continue;
        }
        total += gains.rate_bps(g, uav, p.get(g, slot));
    }
    total
}

/// Revenue of an SP: payment rate times achieved rate in Mbps, per user.
pub fn revenue(
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    sp: usize,
) -> f64 {
    (0..scenario.sps[sp].users.len())
        .map(|u| {
            let rate = user_rate_bps(scenario, gains, a, x, p, sp, u);
            scenario.sps[sp].payment_per_mbps[u] * rate / BITS_PER_MBPS
        })
        .sum()
}

/// Leasing cost of an SP: per-subchannel price on assigned slots plus the
/// power price on every associated user's power (no `x` factor, see module
/// docs).
pub fn cost(
    scenario: &Scenario,
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    sp: usize,
) -> f64 {
    let mut total = 0.0;
    for u in 0..scenario.sps[sp].users.len() {
        let g = scenario.user_global_index(sp, u);
        for slot in 0..scenario.num_slots() {
            let (uav, ch) = scenario.slot_coords(slot);
            if !a.get(g, uav) {
                continue;
            }
            if x.get(g, slot) {
                total += scenario.mnos[uav].price_per_subchannel[ch];
            }
            total += scenario.mnos[uav].price_per_watt * p.get(g, slot);
        }
    }
    total
}

/// Evaluates per-SP revenue, cost, utility, the network total, and per-user
/// QoS satisfaction.
pub fn total_utility(
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
) -> UtilityBreakdown {
    let mut per_sp = Vec::with_capacity(scenario.num_sps());
    let mut qos = vec![false; scenario.num_users()];
    let mut rates = vec![0.0; scenario.num_users()];
    let mut total = 0.0;
    for (m, sp) in scenario.sps.iter().enumerate() {
        let rev = revenue(scenario, gains, a, x, p, m);
        let cst = cost(scenario, a, x, p, m);
        for u in 0..sp.users.len() {
            let g = scenario.user_global_index(m, u);
            rates[g] = user_rate_bps(scenario, gains, a, x, p, m, u);
            qos[g] = rates[g] >= sp.users[u].min_rate_bps;
        }
        let utility = rev - cst;
        total += utility;
        per_sp.push(SpUtility { revenue: rev, cost: cst, utility });
    }
    UtilityBreakdown { per_sp, total_utility: total, qos_satisfied: qos, user_rates_bps: rates }
}
