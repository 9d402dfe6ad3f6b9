//! Transmit power allocation at a fixed subchannel assignment: Lagrangian
//! relaxation with closed-form primal updates and projected subgradient
//! dual updates.
//!
//! Money-facing quantities keep the payment-rate units: rates enter the
//! objective, the QoS slack, and the closed form in Mbps, so the QoS
//! multiplier `lambda` shares units with the payment rate and the closed
//! form balances exactly against the derivative of the utility. The
//! effective bandwidth constant is therefore `omega / 1e6`.
//!
//! The closed form has two modes. The default
//! [`Prop1Mode::CorrectDerivation`] divides by `ln 2`, which is what makes
//! the stationarity residual of the Lagrangian vanish at interior optima.
//! [`Prop1Mode::PaperVerbatim`] omits that divisor and reproduces the
//! printed formula; its residual is nonzero by exactly that factor.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGainTable;
use crate::economics::{
    total_utility, AssignmentMatrix, AssociationMatrix, PowerMatrix, UtilityBreakdown,
};
use crate::error::{Error, Result};
use crate::model::{Scenario, BITS_PER_MBPS};

/// Which printed form of the closed-form power expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prop1Mode {
    /// Include the 1/ln2 factor that the stationarity condition requires.
    CorrectDerivation,
    /// Reproduce the printed closed form without the 1/ln2 factor.
    PaperVerbatim,
}

/// Parameters of the dual ascent loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    /// Step-size constant `z` in `z / sqrt(t)`.
    pub step_z: f64,
    /// Stop when the max-norm power change drops to this level, watts.
    pub tolerance_w: f64,
    pub max_iterations: usize,
    /// Initial value of every multiplier.
    pub initial_dual: f64,
    pub mode: Prop1Mode,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            step_z: 0.1,
            tolerance_w: 1e-6,
            max_iterations: 2000,
            initial_dual: 0.01,
            mode: Prop1Mode::CorrectDerivation,
        }
    }
}

/// Subgradient step size `z / sqrt(t)`.
pub fn step_size(z: f64, t: usize) -> f64 {
    z / (t as f64).sqrt()
}

/// Nonnegative multipliers for the QoS, sum-power, and per-channel
/// constraints, all kept nonnegative by projection after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Per global user (QoS), money per Mbps.
    pub lambda: Vec<f64>,
    /// Per UAV (sum power), money per watt.
    pub mu: Vec<f64>,
    /// Per (user, slot) (per-channel cap), money per watt.
    pub nu: Vec<f64>,
}

impl DualState {
    pub fn uniform(scenario: &Scenario, value: f64) -> Self {
        Self {
            lambda: vec![value; scenario.num_users()],
            mu: vec![value; scenario.num_uavs()],
            nu: vec![value; scenario.num_users() * scenario.num_slots()],
        }
    }

    pub fn nu_at(&self, user_global: usize, slot: usize, num_slots: usize) -> f64 {
        self.nu[user_global * num_slots + slot]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lambda.iter().chain(&self.mu).chain(&self.nu).all(|v| *v >= 0.0)
    }

    fn norm(values: &[f64]) -> f64 {
        values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn lambda_norm(&self) -> f64 {
        Self::norm(&self.lambda)
    }

    pub fn mu_norm(&self) -> f64 {
        Self::norm(&self.mu)
    }

    pub fn nu_norm(&self) -> f64 {
        Self::norm(&self.nu)
    }
}

fn omega_mbps(scenario: &Scenario) -> f64 {
    scenario.radio.subchannel_bandwidth_hz / BITS_PER_MBPS
}

/// Rate of one link in Mbps at power `p_w`.
fn rate_mbps(gains: &LinkGainTable, user: usize, uav: usize, p_w: f64) -> f64 {
    gains.rate_bps(user, uav, p_w) / BITS_PER_MBPS
}

/// Closed-form stationary power of one (user, slot) link given the duals.
///
/// `[x omega (delta + lambda) / (ln2 (theta + mu x + nu)) - sigma^2 d^alpha / g0]+`
/// with `omega` in Mbps terms; the verbatim mode drops the `ln2`.
pub fn closed_form_power(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    duals: &DualState,
    user_global: usize,
    slot: usize,
    mode: Prop1Mode,
) -> Result<f64> {
    let (uav, _) = scenario.slot_coords(slot);
    let r = scenario.user_of_global(user_global);
    let assigned = x.get(user_global, slot);
    let x_f = if assigned { 1.0 } else { 0.0 };
    let denom = scenario.mnos[uav].price_per_watt
        + duals.mu[uav] * x_f
        + duals.nu_at(user_global, slot, scenario.num_slots());
    if denom <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "zero denominator in closed-form power for user {user_global} slot {slot}"
        )));
    }
    let delta = scenario.payment_rate(r);
    let lambda = duals.lambda[user_global];
    let ln2 = if mode == Prop1Mode::CorrectDerivation { std::f64::consts::LN_2 } else { 1.0 };
    // sigma^2 d^alpha / g0 == sigma^2 / g
    let floor_term = gains.noise_w / gains.gain(user_global, uav);
    let p = x_f * omega_mbps(scenario) * (delta + lambda) / (ln2 * denom) - floor_term;
    Ok(p.max(0.0))
}

/// The Lagrangian of the power subproblem, evaluated exactly as displayed:
/// objective plus `lambda`-weighted QoS slack, `nu`-weighted per-channel
/// headroom, and `mu`-weighted sum-power headroom.
pub fn lagrangian_value(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    duals: &DualState,
) -> f64 {
    let num_slots = scenario.num_slots();
    let mut value = 0.0;
    for r in scenario.users() {
        let delta = scenario.payment_rate(r);
        let mut rate = 0.0;
        for slot in 0..num_slots {
            let (uav, ch) = scenario.slot_coords(slot);
            let pw = p.get(r.global, slot);
            if x.get(r.global, slot) {
                rate += rate_mbps(gains, r.global, uav, pw);
                value -= scenario.mnos[uav].price_per_subchannel[ch];
            }
            value -= scenario.mnos[uav].price_per_watt * pw;
            value += duals.nu_at(r.global, slot, num_slots) * (scenario.mnos[uav].max_power_w - pw);
        }
        value += delta * rate;
        let min_mbps = scenario.user_config(r).min_rate_bps / BITS_PER_MBPS;
        value += duals.lambda[r.global] * (rate - min_mbps);
    }
    for (n, mno) in scenario.mnos.iter().enumerate() {
        let mut spent = 0.0;
        for ch in 0..mno.num_subchannels {
            let slot = scenario.slot_index(n, ch);
            for u in 0..scenario.num_users() {
                if x.get(u, slot) {
                    spent += p.get(u, slot);
                }
            }
        }
        value += duals.mu[n] * (mno.max_power_w - spent);
    }
    value
}

/// Analytic partial derivative of the Lagrangian in one link power.
pub fn lagrangian_dp(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    duals: &DualState,
    user_global: usize,
    slot: usize,
    p_w: f64,
) -> f64 {
    let (uav, _) = scenario.slot_coords(slot);
    let r = scenario.user_of_global(user_global);
    let x_f = if x.get(user_global, slot) { 1.0 } else { 0.0 };
    let delta = scenario.payment_rate(r);
    let lambda = duals.lambda[user_global];
    let g = gains.gain(user_global, uav);
    let sigma2 = gains.noise_w;
    x_f * (delta + lambda) * omega_mbps(scenario) * g
        / (std::f64::consts::LN_2 * (sigma2 + p_w * g))
        - scenario.mnos[uav].price_per_watt
        - duals.mu[uav] * x_f
        - duals.nu_at(user_global, slot, scenario.num_slots())
}

/// First derivative of the utility objective in one link power (no duals).
pub fn utility_dp(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    user_global: usize,
    slot: usize,
    p_w: f64,
) -> f64 {
    let (uav, _) = scenario.slot_coords(slot);
    let r = scenario.user_of_global(user_global);
    let x_f = if x.get(user_global, slot) { 1.0 } else { 0.0 };
    let g = gains.gain(user_global, uav);
    x_f * scenario.payment_rate(r) * omega_mbps(scenario) * g
        / (std::f64::consts::LN_2 * (gains.noise_w + p_w * g))
        - scenario.mnos[uav].price_per_watt
}

/// Second derivative of the utility objective in one link power.
pub fn utility_d2p(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    user_global: usize,
    slot: usize,
    p_w: f64,
) -> f64 {
    let (uav, _) = scenario.slot_coords(slot);
    let r = scenario.user_of_global(user_global);
    let x_f = if x.get(user_global, slot) { 1.0 } else { 0.0 };
    let g = gains.gain(user_global, uav);
    let denom = gains.noise_w + p_w * g;
    -x_f * scenario.payment_rate(r) * omega_mbps(scenario) * g * g
        / (std::f64::consts::LN_2 * denom * denom)
}

/// One projected subgradient step on every multiplier with step `z/sqrt(t)`.
pub fn update_duals(
    duals: &DualState,
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    step: f64,
) -> DualState {
    let num_slots = scenario.num_slots();
    let mut next = duals.clone();
    for r in scenario.users() {
        let mut rate = 0.0;
        for slot in 0..num_slots {
            if x.get(r.global, slot) {
                let (uav, _) = scenario.slot_coords(slot);
                rate += rate_mbps(gains, r.global, uav, p.get(r.global, slot));
            }
        }
        let slack = rate - scenario.user_config(r).min_rate_bps / BITS_PER_MBPS;
        next.lambda[r.global] = (duals.lambda[r.global] - step * slack).max(0.0);
    }
    for (n, mno) in scenario.mnos.iter().enumerate() {
        let mut spent = 0.0;
        for ch in 0..mno.num_subchannels {
            let slot = scenario.slot_index(n, ch);
            for u in 0..scenario.num_users() {
                if x.get(u, slot) {
                    spent += p.get(u, slot);
                }
            }
        }
        next.mu[n] = (duals.mu[n] - step * (mno.max_power_w - spent)).max(0.0);
    }
    for u in 0..scenario.num_users() {
        for slot in 0..num_slots {
            let (uav, _) = scenario.slot_coords(slot);
            let slack = scenario.mnos[uav].max_power_w - p.get(u, slot);
            let idx = u * num_slots + slot;
            next.nu[idx] = (duals.nu[idx] - step * slack).max(0.0);
        }
    }
    next
}

/// Scales each UAV's powers down proportionally when the sum-power budget is
/// exceeded; leaves feasible UAVs untouched.
pub fn project_sum_power(p: &mut PowerMatrix, x: &AssignmentMatrix, scenario: &Scenario) {
    for (n, mno) in scenario.mnos.iter().enumerate() {
        let mut spent = 0.0;
        for ch in 0..mno.num_subchannels {
            let slot = scenario.slot_index(n, ch);
            for u in 0..scenario.num_users() {
                if x.get(u, slot) {
                    spent += p.get(u, slot);
                }
            }
        }
        if spent > mno.max_power_w && spent > 0.0 {
            let scale = mno.max_power_w / spent;
            for ch in 0..mno.num_subchannels {
                let slot = scenario.slot_index(n, ch);
                for u in 0..scenario.num_users() {
                    p.set(u, slot, p.get(u, slot) * scale);
                }
            }
        }
    }
}

/// Equal split of each UAV's budget over its assigned slots (zero elsewhere).
pub fn equal_split_on_assignment(scenario: &Scenario, x: &AssignmentMatrix) -> PowerMatrix {
    let mut p = PowerMatrix::zeros(scenario);
    for slot in 0..scenario.num_slots() {
        if let Some(u) = x.user_at(slot) {
            let (uav, _) = scenario.slot_coords(slot);
            let mno = &scenario.mnos[uav];
            p.set(u, slot, mno.max_power_w / mno.num_subchannels as f64);
        }
    }
    p
}

/// One row of the dual-ascent trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTraceRow {
    pub iteration: usize,
    pub lambda_norm: f64,
    pub mu_norm: f64,
    pub nu_norm: f64,
    pub power_change_w: f64,
    pub primal_utility: f64,
}

/// Result of the power stage: the feasibility-projected iterate with the
/// highest utility seen along the dual trajectory. When every dualized
/// constraint is satisfiable this is the converged iterate; when the QoS
/// targets are unreachable the late iterates overspend power chasing them
/// and the best iterate is the economically meaningful answer. The
/// `converged` flag reports the stop rule outcome either way.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolveOutcome {
    pub power: PowerMatrix,
    pub breakdown: UtilityBreakdown,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<PowerTraceRow>,
    pub duals: DualState,
}

/// Alternates closed-form primal updates and subgradient dual updates until
/// the max-norm power change drops below tolerance or the iteration budget
/// runs out. Power iterates respect the per-channel box by construction; the
/// sum-power budget is enforced by a final proportional projection.
pub fn solve_power(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    a: &AssociationMatrix,
    params: &PowerParams,
    record_trace: bool,
) -> Result<PowerSolveOutcome> {
    let num_slots = scenario.num_slots();
    let mut duals = DualState::uniform(scenario, params.initial_dual);
    let mut p_prev = equal_split_on_assignment(scenario, x);
    let mut trace = Vec::new();
    let mut best: Option<(f64, PowerMatrix, UtilityBreakdown, DualState)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=params.max_iterations {
        iterations = t;
        let step = step_size(params.step_z, t);
        duals = update_duals(&duals, scenario, gains, x, &p_prev, step);
        debug_assert!(duals.is_nonnegative());

        let mut p_next = PowerMatrix::zeros(scenario);
        for u in 0..scenario.num_users() {
            for slot in 0..num_slots {
                let (uav, _) = scenario.slot_coords(slot);
                let p = closed_form_power(scenario, gains, x, &duals, u, slot, params.mode)?
                    .min(scenario.mnos[uav].max_power_w);
                p_next.set(u, slot, p);
            }
        }
        let change = p_next.max_abs_diff(&p_prev);

        let mut projected = p_next.clone();
        project_sum_power(&mut projected, x, scenario);
        let breakdown = total_utility(scenario, gains, a, x, &projected);
        if best.as_ref().map_or(true, |(u, ..)| breakdown.total_utility > *u) {
            best = Some((breakdown.total_utility, projected, breakdown.clone(), duals.clone()));
        }
        if record_trace {
            trace.push(PowerTraceRow {
                iteration: t,
                lambda_norm: duals.lambda_norm(),
                mu_norm: duals.mu_norm(),
                nu_norm: duals.nu_norm(),
                power_change_w: change,
                primal_utility: breakdown.total_utility,
            });
        }
        p_prev = p_next;
        if change <= params.tolerance_w {
            converged = true;
            break;
        }
    }

    let (_, power, breakdown, final_duals) = best.expect("at least one iteration ran");
    Ok(PowerSolveOutcome { power, breakdown, converged, iterations, trace, duals: final_duals })
}

/// Report of the concavity verification: agreement of the analytic first
/// derivative with central finite differences, and the sign of the second
/// derivative, at random interior points of assigned links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub samples: usize,
    pub max_first_derivative_rel_err: f64,
    pub max_second_derivative: f64,
    pub pass: bool,
}

/// Samples assigned links at random powers and cross-checks the analytic
/// derivatives of the utility against finite differences of the
/// single-link objective.
pub fn verify_concavity(
    scenario: &Scenario,
    gains: &LinkGainTable,
    x: &AssignmentMatrix,
    samples: usize,
    seed: u64,
) -> ConcavityReport {
    use rand::{Rng, SeedableRng};
    let assigned: Vec<(usize, usize)> = (0..scenario.num_users())
        .flat_map(|u| (0..scenario.num_slots()).map(move |s| (u, s)))
        .filter(|&(u, s)| x.get(u, s))
        .collect();
    if assigned.is_empty() {
        return ConcavityReport {
            samples: 0,
            max_first_derivative_rel_err: 0.0,
            max_second_derivative: f64::NEG_INFINITY,
            pass: false,
        };
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut max_second = f64::NEG_INFINITY;
    for _ in 0..samples {
        let (u, slot) = assigned[rng.gen_range(0..assigned.len())];
        let (uav, _) = scenario.slot_coords(slot);
        let mno = &scenario.mnos[uav];
        let p: f64 = rng.gen_range(0.0..mno.max_power_w);
        let g = gains.gain(u, uav);
        let delta = scenario.payment_rate(scenario.user_of_global(u));
        let theta = mno.price_per_watt;
        let omega_m = omega_mbps(scenario);
        let link = |p: f64| delta * omega_m * (1.0 + p * g / gains.noise_w).log2() - theta * p;

        let h = 1e-6 * p.max(0.01);
        let fd = (link(p + h) - link(p - h)) / (2.0 * h);
        let analytic = utility_dp(scenario, gains, x, u, slot, p);
        let rel = (analytic - fd).abs() / analytic.abs().max(1e-12);
        max_rel = max_rel.max(rel);
        max_second = max_second.max(utility_d2p(scenario, gains, x, u, slot, p));
    }
    ConcavityReport {
        samples,
        max_first_derivative_rel_err: max_rel,
        max_second_derivative: max_second,
        pass: max_rel <= 1e-5 && max_second < 0.0,
    }
}
