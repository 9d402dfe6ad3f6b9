//! Outer orchestration: associate users once, then alternate the
//! subchannel-assignment search and the power allocation until the total
//! utility stops moving.
//!
//! The assignment stage is warm-started with the incumbent assignment each
//! round and keeps its best agent, so a round that finds nothing better
//! reproduces the incumbent exactly and the loop stops. The reported final
//! allocation is the best feasible (resource-constraint) iterate ever seen;
//! users that miss their QoS target are reported, never dropped — their
//! achieved rate still earns revenue.

use serde::{Deserialize, Serialize};

use crate::association::{associate, Matching};
use crate::channel::LinkGainTable;
use crate::economics::{
    total_utility, AssignmentMatrix, AssociationMatrix, ChannelPower, PowerMatrix,
    UtilityBreakdown,
};
use crate::error::Result;
use crate::model::Scenario;
use crate::power::{solve_power, PowerParams, PowerTraceRow};
use crate::woa::{woa_solve, WoaParams, WoaTraceRow};

/// Parameters of one full solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub woa: WoaParams,
    pub power: PowerParams,
    /// Stop when the utility changes by at most this much between rounds.
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Master seed; per-round search seeds derive from it.
    pub seed: u64,
    /// Record per-iteration stage traces in the report.
    pub record_traces: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            woa: WoaParams::default(),
            power: PowerParams::default(),
            tol_outer: 1e-3,
            max_outer: 50,
            seed: 0,
            record_traces: true,
        }
    }
}

/// SplitMix64 step; derives per-round search seeds from the master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A violated constraint with indices and magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// Achieved rate below the minimum, bits/s short.
    Qos { sp: usize, user: usize, shortfall_bps: f64 },
    /// User associated with more than one UAV.
    MultipleAssociation { user_global: usize, count: usize },
    /// UAV serving more users than its capacity.
    Capacity { uav: usize, count: usize, capacity: usize },
    /// Subchannel assigned to more than one user.
    ChannelConflict { uav: usize, channel: usize, count: usize },
    /// Sum of assigned powers above the UAV budget, watts over.
    SumPower { uav: usize, excess_w: f64 },
    /// A single link power outside [0, max], watts outside.
    PowerBox { user_global: usize, uav: usize, channel: usize, outside_w: f64 },
    /// Assignment without the matching association.
    AssignmentWithoutAssociation { user_global: usize, uav: usize, channel: usize },
}

impl Violation {
    /// True for the resource-side constraints the solver must satisfy by
    /// construction; QoS is the penalty-relaxed service target.
    pub fn is_resource(&self) -> bool {
        !matches!(self, Violation::Qos { .. })
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Qos { sp, user, shortfall_bps } => {
                write!(f, "qos: sp {sp} user {user} short {shortfall_bps:.0} bit/s")
            }
            Violation::MultipleAssociation { user_global, count } => {
                write!(f, "single-association: user {user_global} linked to {count} UAVs")
            }
            Violation::Capacity { uav, count, capacity } => {
                write!(f, "capacity: uav {uav} serves {count} > {capacity}")
            }
            Violation::ChannelConflict { uav, channel, count } => {
                write!(f, "channel-conflict: uav {uav} channel {channel} carries {count} users")
            }
            Violation::SumPower { uav, excess_w } => {
                write!(f, "sum-power: uav {uav} over budget by {excess_w:.3e} W")
            }
            Violation::PowerBox { user_global, uav, channel, outside_w } => {
                write!(f, "power-box: user {user_global} uav {uav} channel {channel} outside by {outside_w:.3e} W")
            }
            Violation::AssignmentWithoutAssociation { user_global, uav, channel } => {
                write!(f, "x-implies-a: user {user_global} on uav {uav} channel {channel} without association")
            }
        }
    }
}

const POWER_FEAS_TOL_W: f64 = 1e-9;

/// Enumerates every violated constraint of an allocation; empty means
/// feasible.
pub fn check_feasibility(
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    scenario: &Scenario,
) -> Vec<Violation> {
    let gains = LinkGainTable::new(scenario).expect("validated scenario");
    let mut out = Vec::new();

    for r in scenario.users() {
        let rate = crate::economics::user_rate_bps(scenario, &gains, a, x, p, r.sp, r.user);
        let min = scenario.user_config(r).min_rate_bps;
        if rate < min {
            out.push(Violation::Qos { sp: r.sp, user: r.user, shortfall_bps: min - rate });
        }
        let count = (0..scenario.num_uavs()).filter(|&n| a.get(r.global, n)).count();
        if count > 1 {
            out.push(Violation::MultipleAssociation { user_global: r.global, count });
        }
    }

    for (n, mno) in scenario.mnos.iter().enumerate() {
        let served = a.users_of(n).len();
        if served > mno.user_capacity {
            out.push(Violation::Capacity { uav: n, count: served, capacity: mno.user_capacity });
        }

        let mut spent = 0.0;
        for ch in 0..mno.num_subchannels {
            let slot = scenario.slot_index(n, ch);
            let mut occupants = 0;
            for u in 0..scenario.num_users() {
                let pw = p.get(u, slot);
                if x.get(u, slot) {
                    occupants += 1;
                    spent += pw;
                    if !a.get(u, n) {
                        out.push(Violation::AssignmentWithoutAssociation {
                            user_global: u,
                            uav: n,
                            channel: ch,
                        });
                    }
                }
                if pw < 0.0 {
                    out.push(Violation::PowerBox { user_global: u, uav: n, channel: ch, outside_w: -pw });
                } else if pw > mno.max_power_w + POWER_FEAS_TOL_W {
                    out.push(Violation::PowerBox {
                        user_global: u,
                        uav: n,
                        channel: ch,
                        outside_w: pw - mno.max_power_w,
                    });
                }
            }
            if occupants > 1 {
                out.push(Violation::ChannelConflict { uav: n, channel: ch, count: occupants });
            }
        }
        if spent > mno.max_power_w + POWER_FEAS_TOL_W {
            out.push(Violation::SumPower { uav: n, excess_w: spent - mno.max_power_w });
        }
    }
    out
}

/// One outer round of the alternation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub round: usize,
    /// Utility of this round's (X, P) iterate.
    pub utility: f64,
    /// Best utility seen so far (non-decreasing by elitism).
    pub best_utility: f64,
    pub woa_best_fitness: f64,
    pub power_converged: bool,
    pub power_iterations: usize,
}

/// Final allocation in a serialization-friendly shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSnapshot {
    /// Per slot: occupying global user, if any.
    pub slot_user: Vec<Option<usize>>,
    /// Per slot: transmit power, watts.
    pub slot_power_w: Vec<f64>,
}

impl AllocationSnapshot {
    pub fn new(x: &AssignmentMatrix, p: &PowerMatrix, scenario: &Scenario) -> Self {
        let slot_user: Vec<Option<usize>> = (0..scenario.num_slots()).map(|s| x.user_at(s)).collect();
        let slot_power_w = (0..scenario.num_slots()).map(|s| p.slot_power(s)).collect();
        Self { slot_user, slot_power_w }
    }
}

/// Everything one solve produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scenario_digest: String,
    pub seed: u64,
    pub method: String,
    /// Global ids of users no UAV can serve (empty preference list).
    pub unservable_users: Vec<usize>,
    /// Per global user: associated UAV.
    pub association: Vec<Option<usize>>,
    pub outer_iterations: Vec<OuterIteration>,
    pub woa_traces: Vec<Vec<WoaTraceRow>>,
    pub power_traces: Vec<Vec<PowerTraceRow>>,
    pub allocation: AllocationSnapshot,
    pub breakdown: UtilityBreakdown,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub violations: Vec<String>,
    /// QoS violations are expected wherever the targets are unreachable;
    /// resource violations indicate a solver bug.
    pub resource_feasible: bool,
}

/// Runs association once, then alternates assignment search and power
/// allocation to a utility fixed point.
pub fn solve(scenario: &Scenario, params: &SolveParams) -> Result<SolveReport> {
    scenario.validate()?;
    let start = std::time::Instant::now();
    let gains = LinkGainTable::new(scenario)?;
    let (profile, matching, a) = associate(scenario, &gains);

    let mut report = SolveReport {
        scenario_digest: scenario.digest(),
        seed: params.seed,
        method: "proposed".into(),
        unservable_users: profile.unservable.clone(),
        association: matching.user_to_uav.clone(),
        outer_iterations: Vec::new(),
        woa_traces: Vec::new(),
        power_traces: Vec::new(),
        allocation: AllocationSnapshot::new(
            &AssignmentMatrix::empty(scenario),
            &PowerMatrix::zeros(scenario),
            scenario,
        ),
        breakdown: UtilityBreakdown::zeros(scenario),
        converged: false,
        iterations: 0,
        wall_time_s: 0.0,
        violations: Vec::new(),
        resource_feasible: true,
    };

    if matching.num_matched() == 0 {
        // nothing to allocate; the empty allocation is the answer
        report.converged = true;
        finish(&mut report, scenario, &gains, &a, start);
        return Ok(report);
    }

    let mut channel_power = ChannelPower::equal_split(scenario);
    let mut incumbent_x: Option<AssignmentMatrix> = None;
    let mut best: Option<(f64, AssignmentMatrix, PowerMatrix)> = None;
    let mut prev_utility = f64::INFINITY;

    for round in 1..=params.max_outer {
        report.iterations = round;
        let woa_params = WoaParams {
            seed: derive_seed(params.seed, round as u64),
            ..params.woa.clone()
        };
        let woa_out = woa_solve(scenario, &gains, &a, &channel_power, &woa_params, incumbent_x.as_ref())?;
        let power_out = solve_power(scenario, &gains, &woa_out.assignment, &a, &params.power, params.record_traces)?;

        let utility = power_out.breakdown.total_utility;
        if best.as_ref().map_or(true, |(u, ..)| utility > *u) {
            best = Some((utility, woa_out.assignment.clone(), power_out.power.clone()));
        }
        report.outer_iterations.push(OuterIteration {
            round,
            utility,
            best_utility: best.as_ref().map(|(u, ..)| *u).unwrap(),
            woa_best_fitness: woa_out.best_fitness,
            power_converged: power_out.converged,
            power_iterations: power_out.iterations,
        });
        if params.record_traces {
            report.woa_traces.push(woa_out.trace);
            report.power_traces.push(power_out.trace);
        }

        channel_power = ChannelPower::from_matrix(&power_out.power, scenario);
        incumbent_x = Some(woa_out.assignment);

        if (utility - prev_utility).abs() <= params.tol_outer {
            report.converged = true;
            break;
        }
        prev_utility = utility;
    }

    let (_, x, p) = best.expect("at least one round ran");
    report.allocation = AllocationSnapshot::new(&x, &p, scenario);
    report.breakdown = total_utility(scenario, &gains, &a, &x, &p);
    let violations = check_feasibility(&a, &x, &p, scenario);
    report.resource_feasible = violations.iter().all(|v| !v.is_resource());
    report.violations = violations.iter().map(|v| v.to_string()).collect();
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn finish(
    report: &mut SolveReport,
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    start: std::time::Instant,
) {
    let x = AssignmentMatrix::empty(scenario);
    let p = PowerMatrix::zeros(scenario);
    report.breakdown = total_utility(scenario, gains, a, &x, &p);
    let violations = check_feasibility(a, &x, &p, scenario);
    report.resource_feasible = violations.iter().all(|v| !v.is_resource());
    report.violations = violations.iter().map(|v| v.to_string()).collect();
    report.wall_time_s = start.elapsed().as_secs_f64();
}

/// Re-exported for report assembly by the baselines.
pub(crate) fn finalize_report(
    report: &mut SolveReport,
    scenario: &Scenario,
    gains: &LinkGainTable,
    a: &AssociationMatrix,
    x: &AssignmentMatrix,
    p: &PowerMatrix,
    start: std::time::Instant,
) {
    report.allocation = AllocationSnapshot::new(x, p, scenario);
    report.breakdown = total_utility(scenario, gains, a, x, p);
    let violations = check_feasibility(a, x, p, scenario);
    report.resource_feasible = violations.iter().all(|v| !v.is_resource());
    report.violations = violations.iter().map(|v| v.to_string()).collect();
    report.wall_time_s = start.elapsed().as_secs_f64();
}

/// The paper-style matching output bundled for reuse by the baselines.
pub(crate) fn associate_for_report(
    scenario: &Scenario,
    gains: &LinkGainTable,
) -> (Vec<usize>, Matching, AssociationMatrix) {
    let (profile, matching, a) = associate(scenario, gains);
    (profile.unservable, matching, a)
}
