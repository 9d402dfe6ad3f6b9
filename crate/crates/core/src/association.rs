//! User association as a one-to-many matching between users and UAVs,
//! solved by user-proposing deferred acceptance.
//!
//! Users rank UAVs by the per-user utility share under the equal-power
//! split: payment-rate revenue of one subchannel minus the one-subchannel
//! cost share (mean subchannel price plus the power price on the equal
//! power share). A UAV enters a user's list only if it could meet the
//! user's minimum rate under the equal power split across all of its
//! subchannels; users whose list comes out empty are unservable and stay
//! unmatched. UAVs rank users by the equal-power single-subchannel rate,
//! which is independent of the subchannel index. Ties break toward the
//! lower index so all preferences are strict.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGainTable;
use crate::economics::AssociationMatrix;
use crate::error::{Error, Result};
use crate::model::{Scenario, BITS_PER_MBPS};

/// Rate of one subchannel when the UAV splits its power budget equally
/// across its subchannels, bits/s.
pub fn equal_power_rate(scenario: &Scenario, gains: &LinkGainTable, user_global: usize, uav: usize) -> f64 {
    let mno = &scenario.mnos[uav];
    let p = mno.max_power_w / mno.num_subchannels as f64;
    gains.rate_bps(user_global, uav, p)
}

/// Strict, filtered preference lists for both sides of the matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    /// Per global user: UAV ids in descending score order (filtered).
    pub user_prefs: Vec<Vec<usize>>,
    /// Per global user: scores aligned with `user_prefs`.
    pub user_scores: Vec<Vec<f64>>,
    /// Per UAV: all global user ids in descending rate order.
    pub uav_prefs: Vec<Vec<usize>>,
    /// Per UAV: rank position of each global user (lower is better).
    pub uav_rank: Vec<Vec<usize>>,
    /// Global ids of users with empty lists (no UAV can meet their minimum rate).
    pub unservable: Vec<usize>,
}

impl PreferenceProfile {
    pub fn num_users(&self) -> usize {
        self.user_prefs.len()
    }

    pub fn num_uavs(&self) -> usize {
        self.uav_prefs.len()
    }

    /// Rank of `uav` in a user's list; `None` when unacceptable.
    pub fn user_rank_of(&self, user_global: usize, uav: usize) -> Option<usize> {
        self.user_prefs[user_global].iter().position(|&n| n == uav)
    }
}

/// Builds both preference profiles from the scenario geometry and prices.
pub fn build_preferences(scenario: &Scenario, gains: &LinkGainTable) -> PreferenceProfile {
    let num_users = scenario.num_users();
    let num_uavs = scenario.num_uavs();

    let mut user_prefs = Vec::with_capacity(num_users);
    let mut user_scores = Vec::with_capacity(num_users);
    let mut unservable = Vec::new();
    for r in scenario.users() {
        let mut scored: Vec<(usize, f64)> = Vec::new();
        for (n, mno) in scenario.mnos.iter().enumerate() {
            let rate_bps = equal_power_rate(scenario, gains, r.global, n);
            // feasibility filter: the UAV's full equal-split capability
            let capability = mno.num_subchannels as f64 * rate_bps;
            if capability < scenario.user_config(r).min_rate_bps {
                continue;
            }
            let revenue = scenario.payment_rate(r) * rate_bps / BITS_PER_MBPS;
            let cost_share = mno.mean_subchannel_price()
                + mno.price_per_watt * mno.max_power_w / mno.num_subchannels as f64;
            scored.push((n, revenue - cost_share));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        if scored.is_empty() {
            unservable.push(r.global);
        }
        user_prefs.push(scored.iter().map(|(n, _)| *n).collect());
        user_scores.push(scored.iter().map(|(_, s)| *s).collect());
    }

    let mut uav_prefs = Vec::with_capacity(num_uavs);
    let mut uav_rank = Vec::with_capacity(num_uavs);
    for n in 0..num_uavs {
        let mut scored: Vec<(usize, f64)> = (0..num_users)
            .map(|g| (g, equal_power_rate(scenario, gains, g, n)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let prefs: Vec<usize> = scored.iter().map(|(g, _)| *g).collect();
        let mut rank = vec![0; num_users];
        for (pos, &g) in prefs.iter().enumerate() {
            rank[g] = pos;
        }
        uav_prefs.push(prefs);
        uav_rank.push(rank);
    }

    PreferenceProfile { user_prefs, user_scores, uav_prefs, uav_rank, unservable }
}

/// Outcome of the matching stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Per global user: the matched UAV, if any.
    pub user_to_uav: Vec<Option<usize>>,
    /// Per UAV: matched global user ids.
    pub uav_to_users: Vec<Vec<usize>>,
    /// Number of proposals made before termination.
    pub proposals: usize,
}

impl Matching {
    pub fn num_matched(&self) -> usize {
        self.user_to_uav.iter().filter(|m| m.is_some()).count()
    }
}

/// A witness that a matching is unstable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockingPair {
    pub user_global: usize,
    pub uav: usize,
}

/// User-proposing deferred acceptance with per-UAV capacities.
///
/// Terminates within `users * uavs` proposals: each proposal permanently
/// consumes one entry of some user's preference list.
pub fn deferred_acceptance(profile: &PreferenceProfile, capacities: &[usize]) -> Matching {
    let num_users = profile.num_users();
    let num_uavs = profile.num_uavs();
    assert_eq!(capacities.len(), num_uavs, "one capacity per UAV");

    let mut next_choice = vec![0usize; num_users];
    let mut matched_to: Vec<Option<usize>> = vec![None; num_users];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); num_uavs];
    let mut queue: std::collections::VecDeque<usize> =
        (0..num_users).filter(|&g| !profile.user_prefs[g].is_empty()).collect();
    let mut proposals = 0usize;

    while let Some(g) = queue.pop_front() {
        let prefs = &profile.user_prefs[g];
        if next_choice[g] >= prefs.len() {
            continue; // exhausted; stays unmatched
        }
        let n = prefs[next_choice[g]];
        next_choice[g] += 1;
        proposals += 1;

        if held[n].len() < capacities[n] {
            held[n].push(g);
            matched_to[g] = Some(n);
            continue;
        }
        // full: replace the worst held user iff the proposer ranks higher
        let (worst_pos, &worst) = held[n]
            .iter()
            .enumerate()
            .max_by_key(|(_, &u)| profile.uav_rank[n][u])
            .expect("capacity >= 1");
        if profile.uav_rank[n][g] < profile.uav_rank[n][worst] {
            held[n][worst_pos] = g;
            matched_to[g] = Some(n);
            matched_to[worst] = None;
            queue.push_back(worst);
        } else {
            queue.push_back(g);
        }
    }

    for users in held.iter_mut() {
        users.sort_unstable();
    }
    Matching { user_to_uav: matched_to, uav_to_users: held, proposals }
}

/// Checks stability: no user-UAV pair strictly prefers each other over their
/// current matches (capacity-aware). `Ok(None)` means stable; `Ok(Some(..))`
/// carries a witness; malformed matchings are an error.
pub fn is_stable(
    matching: &Matching,
    profile: &PreferenceProfile,
    capacities: &[usize],
) -> Result<Option<BlockingPair>> {
    validate_matching(matching, capacities)?;
    if matching.user_to_uav.len() != profile.num_users() {
        return Err(Error::InvalidScenario("matching and profile disagree on the user count".into()));
    }
    let mut current_ranks = vec![None; profile.num_users()];
    for g in 0..profile.num_users() {
        if let Some(n) = matching.user_to_uav[g] {
            match profile.user_rank_of(g, n) {
                Some(rank) => current_ranks[g] = Some(rank),
                None => {
                    return Err(Error::InvalidScenario(format!(
                        "user {g} is matched to uav {n} outside their preference list"
                    )))
                }
            }
        }
    }
    for g in 0..profile.num_users() {
        let current_rank = current_ranks[g];
        for (rank, &n) in profile.user_prefs[g].iter().enumerate() {
            // user strictly prefers n over the current match (or is unmatched)
            let user_prefers = match current_rank {
                Some(cur) => rank < cur,
                None => true,
            };
            if !user_prefers || matching.user_to_uav[g] == Some(n) {
                continue;
            }
            let held = &matching.uav_to_users[n];
            let uav_accepts = if held.len() < capacities[n] {
                true
            } else {
                let worst = held
                    .iter()
                    .copied()
                    .max_by_key(|&u| profile.uav_rank[n][u])
                    .expect("held nonempty");
                profile.uav_rank[n][g] < profile.uav_rank[n][worst]
            };
            if uav_accepts {
                return Ok(Some(BlockingPair { user_global: g, uav: n }));
            }
        }
    }
    Ok(None)
}

/// Validates the matching against its definition: one UAV per user, capacity
/// respected, and the two sides mutually consistent.
pub fn validate_matching(matching: &Matching, capacities: &[usize]) -> Result<()> {
    for (n, users) in matching.uav_to_users.iter().enumerate() {
        if users.len() > capacities[n] {
            return Err(Error::InvalidScenario(format!("uav {n} exceeds capacity")));
        }
        for &g in users {
            if matching.user_to_uav[g] != Some(n) {
                return Err(Error::InvalidScenario(format!("user {g} and uav {n} disagree")));
            }
        }
    }
    for (g, m) in matching.user_to_uav.iter().enumerate() {
        if let Some(n) = m {
            if !matching.uav_to_users[*n].contains(&g) {
                return Err(Error::InvalidScenario(format!("user {g} missing from uav {n}")));
            }
        }
    }
    Ok(())
}

/// Materializes the matching as an association matrix.
pub fn matching_to_association(matching: &Matching, scenario: &Scenario) -> AssociationMatrix {
    let mut a = AssociationMatrix::empty(scenario);
    for (g, m) in matching.user_to_uav.iter().enumerate() {
        if let Some(n) = m {
            a.set(g, *n, true);
        }
    }
    a
}

/// Convenience wrapper: preferences, matching, and the association matrix.
pub fn associate(scenario: &Scenario, gains: &LinkGainTable) -> (PreferenceProfile, Matching, AssociationMatrix) {
    let profile = build_preferences(scenario, gains);
    let capacities: Vec<usize> = scenario.mnos.iter().map(|m| m.user_capacity).collect();
    let matching = deferred_acceptance(&profile, &capacities);
    let a = matching_to_association(&matching, scenario);
    (profile, matching, a)
}
