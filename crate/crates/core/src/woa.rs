//! Whale-optimization search over subchannel assignments at a fixed
//! per-slot power allocation.
//!
//! Each search agent is an integer vector with one entry per (UAV,
//! subchannel) slot. Entry value 0 leaves the slot unassigned; value `k >= 1`
//! assigns it to the k-th user associated with that slot's UAV. The
//! one-user-per-subchannel constraint and assignment-implies-association
//! consistency therefore hold by construction, and repair reduces to
//! clamping entries into their slot's valid range.
//!
//! The position updates follow the encircling / bubble-net / search-for-prey
//! moves with the floor applied to land back on the integer grid. The
//! random coefficients `r`, the branch selector `p`, and the spiral
//! parameter `l` are drawn once per agent per iteration (scalar
//! coefficients, broadcast over dimensions), with `A = 2 a r - a` and
//! `C = 2 r`; `a` decays linearly from 2 to 0 over the run.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGainTable;
use crate::economics::{AssignmentMatrix, AssociationMatrix, ChannelPower};
use crate::error::{Error, Result};
use crate::model::{Scenario, BITS_PER_MBPS};
use rand::{Rng, SeedableRng};

/// Search parameters for the assignment stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoaParams {
    /// Population size.
    pub population: usize,
    pub max_iterations: usize,
    /// Logarithmic spiral shape constant.
    pub spiral_b: f64,
    /// Penalty factor on squared QoS shortfall (shortfall in Mbps).
    pub penalty_xi: f64,
    pub seed: u64,
}

impl Default for WoaParams {
    fn default() -> Self {
        Self { population: 30, max_iterations: 100, spiral_b: 1.0, penalty_xi: 1e3, seed: 0 }
    }
}

impl WoaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParams("population must be >= 2".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidParams("max_iterations must be >= 1".into()));
        }
        if !(self.penalty_xi > 0.0) {
            return Err(Error::InvalidParams("penalty_xi must be > 0".into()));
        }
        Ok(())
    }
}

/// Decode context: candidate users per UAV and the per-slot entry bounds.
#[derive(Debug, Clone)]
pub struct AgentSpace {
    /// Associated users per UAV, ascending global id.
    pub candidates: Vec<Vec<usize>>,
    /// Per slot: owning UAV.
    slot_uav: Vec<usize>,
    /// Per slot: maximum entry value (candidate count of the owning UAV).
    slot_cap: Vec<i64>,
}

impl AgentSpace {
    pub fn new(scenario: &Scenario, a: &AssociationMatrix) -> Self {
        let candidates: Vec<Vec<usize>> = (0..scenario.num_uavs()).map(|n| a.users_of(n)).collect();
        let mut slot_uav = Vec::with_capacity(scenario.num_slots());
        let mut slot_cap = Vec::with_capacity(scenario.num_slots());
        for slot in 0..scenario.num_slots() {
            let (uav, _) = scenario.slot_coords(slot);
            slot_uav.push(uav);
            slot_cap.push(candidates[uav].len() as i64);
        }
        Self { candidates, slot_uav, slot_cap }
    }

    pub fn dim(&self) -> usize {
        self.slot_cap.len()
    }

    /// True when no UAV has any associated user.
    pub fn is_empty(&self) -> bool {
        self.slot_cap.iter().all(|&c| c == 0)
    }

    /// Number of decodable assignments (product of per-slot ranges).
    pub fn search_space_size(&self) -> u128 {
        self.slot_cap.iter().map(|&c| c as u128 + 1).product()
    }

    /// Occupant of `slot` under `agent`, if any.
    pub fn occupant(&self, agent: &[i64], slot: usize) -> Option<usize> {
        let v = agent[slot];
        if v >= 1 && v <= self.slot_cap[slot] {
            Some(self.candidates[self.slot_uav[slot]][(v - 1) as usize])
        } else {
            None
        }
    }

    pub fn decode(&self, agent: &[i64], scenario: &Scenario) -> AssignmentMatrix {
        let mut x = AssignmentMatrix::empty(scenario);
        for slot in 0..self.dim() {
            if let Some(u) = self.occupant(agent, slot) {
                x.set(u, slot, true);
            }
        }
        x
    }

    /// Inverse of `decode` for assignments consistent with the association.
    pub fn encode(&self, x: &AssignmentMatrix) -> Vec<i64> {
        (0..self.dim())
            .map(|slot| match x.user_at(slot) {
                Some(u) => {
                    let pos = self.candidates[self.slot_uav[slot]]
                        .iter()
                        .position(|&c| c == u)
                        .expect("occupant must be associated with the slot's UAV");
                    pos as i64 + 1
                }
                None => 0,
            })
            .collect()
    }

    pub fn random_agent(&self, rng: &mut impl Rng) -> Vec<i64> {
        self.slot_cap.iter().map(|&c| rng.gen_range(0..=c)).collect()
    }
}

/// Clamps every entry into its slot's valid range `[0, cap]`. Idempotent.
pub fn repair(agent: &mut [i64], space: &AgentSpace) {
    for (v, &cap) in agent.iter_mut().zip(&space.slot_cap) {
        *v = (*v).clamp(0, cap);
    }
}

/// Linear decay of the exploration coefficient from 2 to 0.
pub fn a_schedule(iteration: usize, max_iterations: usize) -> f64 {
    if max_iterations <= 1 {
        2.0
    } else {
        2.0 * (1.0 - iteration as f64 / (max_iterations - 1) as f64)
    }
}

/// Encircling move: `X' = floor(X* - A |C X* - X|)` with `A = 2ar - a`, `C = 2r`.
pub fn encircle_raw(agent: &[i64], best: &[i64], a: f64, r: f64) -> Vec<i64> {
    let coef_a = 2.0 * a * r - a;
    let coef_c = 2.0 * r;
    agent
        .iter()
        .zip(best)
        .map(|(&x, &b)| {
            let d = (coef_c * b as f64 - x as f64).abs();
            (b as f64 - coef_a * d).floor() as i64
        })
        .collect()
}

/// Bubble-net spiral move: `X' = floor(|X* - X| e^{bl} cos(2 pi l) + X*)`.
pub fn bubble_raw(agent: &[i64], best: &[i64], spiral_b: f64, l: f64) -> Vec<i64> {
    let factor = (spiral_b * l).exp() * (2.0 * std::f64::consts::PI * l).cos();
    agent
        .iter()
        .zip(best)
        .map(|(&x, &b)| {
            let d = (b - x).abs() as f64;
            (d * factor + b as f64).floor() as i64
        })
        .collect()
}

/// Exploration move: encircling form around a random agent instead of the best.
pub fn search_raw(agent: &[i64], x_rand: &[i64], a: f64, r: f64) -> Vec<i64> {
    encircle_raw(agent, x_rand, a, r)
}

/// Encircling move with a fresh random coefficient, repaired into range.
pub fn encircle_update(
    agent: &[i64],
    best: &[i64],
    a: f64,
    rng: &mut impl Rng,
    space: &AgentSpace,
) -> Vec<i64> {
    let r: f64 = rng.gen();
    let mut out = encircle_raw(agent, best, a, r);
    repair(&mut out, space);
    out
}

/// Bubble-net move with a fresh `l` in [-1, 1], repaired into range.
pub fn bubble_net_update(
    agent: &[i64],
    best: &[i64],
    spiral_b: f64,
    rng: &mut impl Rng,
    space: &AgentSpace,
) -> Vec<i64> {
    let l: f64 = rng.gen_range(-1.0..=1.0);
    let mut out = bubble_raw(agent, best, spiral_b, l);
    repair(&mut out, space);
    out
}

/// Exploration move against a random member of `population`, repaired.
pub fn random_search_update(
    agent: &[i64],
    population: &[Vec<i64>],
    a: f64,
    rng: &mut impl Rng,
    space: &AgentSpace,
) -> Vec<i64> {
    let r: f64 = rng.gen();
    let j = rng.gen_range(0..population.len());
    let mut out = search_raw(agent, &population[j], a, r);
    repair(&mut out, space);
    out
}

/// Fitness of a candidate assignment at the given per-slot powers: network
/// utility minus `xi` times the squared QoS shortfall (Mbps) of every user
/// whose achieved rate falls below the minimum.
pub fn fitness(
    agent: &[i64],
    space: &AgentSpace,
    scenario: &Scenario,
    gains: &LinkGainTable,
    power: &ChannelPower,
    xi: f64,
) -> FitnessValue {
    let mut rates = vec![0.0f64; scenario.num_users()];
    let mut cost = 0.0;
    for slot in 0..space.dim() {
        if let Some(u) = space.occupant(agent, slot) {
            let (uav, ch) = scenario.slot_coords(slot);
            let p = power.get(slot);
            rates[u] += gains.rate_bps(u, uav, p);
            cost += scenario.mnos[uav].price_per_subchannel[ch] + scenario.mnos[uav].price_per_watt * p;
        }
    }
    let mut revenue = 0.0;
    let mut penalty = 0.0;
    let mut violations = 0usize;
    for r in scenario.users() {
        revenue += scenario.payment_rate(r) * rates[r.global] / BITS_PER_MBPS;
        let shortfall_mbps = (rates[r.global] - scenario.user_config(r).min_rate_bps) / BITS_PER_MBPS;
        if shortfall_mbps < 0.0 {
            violations += 1;
            penalty += shortfall_mbps * shortfall_mbps;
        }
    }
    let utility = revenue - cost;
    FitnessValue { value: utility - xi * penalty, utility, violations }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessValue {
    /// Penalized objective used for selection.
    pub value: f64,
    /// Raw network utility of the decoded assignment.
    pub utility: f64,
    /// Users whose QoS shortfall is strictly positive.
    pub violations: usize,
}

/// One row of the per-iteration search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoaTraceRow {
    pub iteration: usize,
    pub best_fitness: f64,
    pub violations: usize,
}

/// Result of a whale-optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct WoaOutcome {
    pub assignment: AssignmentMatrix,
    pub best_fitness: f64,
    pub trace: Vec<WoaTraceRow>,
}

/// Runs the assignment search. `warm_start`, when given, seeds agent 0 with
/// the current assignment; the best agent is retained across iterations and
/// replaced only by a strictly better one, so the best-fitness trace is
/// non-decreasing.
pub fn woa_solve(
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    power: &ChannelPower,
    params: &WoaParams,
    warm_start: Option<&AssignmentMatrix>,
) -> Result<WoaOutcome> {
    params.validate()?;
    let space = AgentSpace::new(scenario, a);
    let eval = |agent: &[i64]| fitness(agent, &space, scenario, gains, power, params.penalty_xi);

    if space.is_empty() {
        let agent = vec![0i64; space.dim()];
        let f = eval(&agent);
        return Ok(WoaOutcome {
            assignment: space.decode(&agent, scenario),
            best_fitness: f.value,
            trace: vec![WoaTraceRow { iteration: 0, best_fitness: f.value, violations: f.violations }],
        });
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let mut agents: Vec<Vec<i64>> = Vec::with_capacity(params.population);
    agents.push(match warm_start {
        Some(x) => space.encode(x),
        None => vec![0i64; space.dim()],
    });
    while agents.len() < params.population {
        agents.push(space.random_agent(&mut rng));
    }

    let mut best_agent = agents[0].clone();
    let mut best = eval(&best_agent);
    for agent in &agents[1..] {
        let f = eval(agent);
        if f.value > best.value {
            best = f;
            best_agent = agent.clone();
        }
    }
    let mut trace = Vec::with_capacity(params.max_iterations + 1);
    trace.push(WoaTraceRow { iteration: 0, best_fitness: best.value, violations: best.violations });

    for t in 0..params.max_iterations {
        let a_coef = a_schedule(t, params.max_iterations);
        let snapshot = agents.clone();
        for (k, agent) in agents.iter_mut().enumerate() {
            let r: f64 = rng.gen();
            let coef_a = 2.0 * a_coef * r - a_coef;
            let p: f64 = rng.gen();
            let mut updated = if p < 0.5 {
                if coef_a.abs() < 1.0 {
                    encircle_raw(&snapshot[k], &best_agent, a_coef, r)
                } else {
                    let j = rng.gen_range(0..params.population);
                    search_raw(&snapshot[k], &snapshot[j], a_coef, r)
                }
            } else {
                let l: f64 = rng.gen_range(-1.0..=1.0);
                bubble_raw(&snapshot[k], &best_agent, params.spiral_b, l)
            };
            repair(&mut updated, &space);
            *agent = updated;
        }
        for agent in &agents {
            let f = eval(agent);
            if f.value > best.value {
                best = f;
                best_agent = agent.clone();
            }
        }
        trace.push(WoaTraceRow { iteration: t + 1, best_fitness: best.value, violations: best.violations });
    }

    Ok(WoaOutcome {
        assignment: space.decode(&best_agent, scenario),
        best_fitness: best.value,
        trace,
    })
}

/// Enumerates every decodable agent of a small space; test and baseline
/// oracle helper, panics if the space exceeds `limit` points.
pub fn enumerate_agents(space: &AgentSpace, limit: u128) -> Vec<Vec<i64>> {
    assert!(space.search_space_size() <= limit, "search space too large to enumerate");
    let dim = space.dim();
    let mut out = Vec::new();
    let mut current = vec![0i64; dim];
    loop {
        out.push(current.clone());
        let mut idx = 0;
        loop {
            if idx == dim {
                return out;
            }
            if current[idx] < space.slot_cap[idx] {
                current[idx] += 1;
                break;
            }
            current[idx] = 0;
            idx += 1;
        }
    }
}
