//! Copilot user grouping inside each cell.
//!
//! Two selection rules build the groups that will share one pilot slot:
//! a power-agnostic rule that greedily maximizes the number of distinct
//! beams covered per slot, and a power-aware rule that maximizes captured
//! beam power, assigning every covered beam to the member that carries the
//! most power on it. Exhaustive per-slot optima are provided as oracles.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::signature::SpatialSignature;

/// One grouping candidate: a user together with its serving-link signature.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSignature {
    pub user: usize,
    /// Retained beam indices, strictly ascending.
    pub beams: Vec<usize>,
    /// Per-beam power ζ aligned with `beams`; strictly positive.
    pub beam_power: Vec<f64>,
}

impl UserSignature {
    fn power_on(&self, beam: usize) -> Option<f64> {
        self.beams.binary_search(&beam).ok().map(|i| self.beam_power[i])
    }
}

/// The grouping problem for one cell: eligible candidates over an
/// `n_beams`-beam grid, sorted by ascending user id.
#[derive(Debug, Clone)]
pub struct GroupingInstance {
    pub n_beams: usize,
    pub users: Vec<UserSignature>,
}

impl GroupingInstance {
    pub fn new(n_beams: usize, users: Vec<UserSignature>) -> Result<Self> {
        if n_beams == 0 {
            return Err(Error::InvalidParameter("beam grid must be nonempty".into()));
        }
        for pair in users.windows(2) {
            if pair[0].user >= pair[1].user {
                return Err(Error::InvalidParameter("candidates must have strictly ascending user ids".into()));
            }
        }
        for u in &users {
            if u.beams.is_empty() {
                return Err(Error::InvalidParameter(format!("user {} has an empty signature", u.user)));
            }
            if u.beams.len() != u.beam_power.len() {
                return Err(Error::DimensionMismatch { expected: u.beams.len(), got: u.beam_power.len() });
            }
            for pair in u.beams.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(Error::InvalidParameter(format!("user {} beams must ascend", u.user)));
                }
            }
            if *u.beams.last().unwrap() >= n_beams {
                return Err(Error::InvalidParameter(format!("user {} references a beam outside the grid", u.user)));
            }
            if u.beam_power.iter().any(|&p| p <= 0.0) {
                return Err(Error::InvalidParameter(format!("user {} has a nonpositive beam power", u.user)));
            }
        }
        Ok(Self { n_beams, users })
    }

    /// Build the instance from serving-link signatures, dropping users whose
    /// signature is empty. Returns the instance and the skipped user ids.
    pub fn from_serving_signatures(n_beams: usize, sigs: &[SpatialSignature]) -> Result<(Self, Vec<usize>)> {
        let mut users = Vec::new();
        let mut skipped = Vec::new();
        for sig in sigs {
            if sig.is_empty() {
                skipped.push(sig.link.user);
            } else {
                users.push(UserSignature {
                    user: sig.link.user,
                    beams: sig.beams.clone(),
                    beam_power: sig.beam_power.clone(),
                });
            }
        }
        users.sort_by_key(|u| u.user);
        skipped.sort_unstable();
        let inst = Self::new(n_beams, users)?;
        Ok((inst, skipped))
    }

    fn find(&self, user: usize) -> Option<&UserSignature> {
        self.users.binary_search_by_key(&user, |u| u.user).ok().map(|i| &self.users[i])
    }
}

/// A copilot allocation: selected members plus, for every covered beam, the
/// member currently credited with it and that member's power on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Member user ids in the order they were merged.
    pub members: Vec<usize>,
    owner: BTreeMap<usize, (usize, f64)>,
    /// Captured power: the sum of owned per-beam powers.
    pub value: f64,
}

impl Allocation {
    pub fn empty() -> Self {
        Self { members: Vec::new(), owner: BTreeMap::new(), value: 0.0 }
    }

    pub fn contains(&self, user: usize) -> bool {
        self.members.contains(&user)
    }

    /// Number of members W(A).
    pub fn width(&self) -> usize {
        self.members.len()
    }

    pub fn owner_of(&self, beam: usize) -> Option<usize> {
        self.owner.get(&beam).map(|&(user, _)| user)
    }

    pub fn owned_power(&self, beam: usize) -> Option<f64> {
        self.owner.get(&beam).map(|&(_, power)| power)
    }

    pub fn covered_beams(&self) -> Vec<usize> {
        self.owner.keys().copied().collect()
    }

    /// `(beam, owner, power)` triples in ascending beam order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.owner.iter().map(|(&beam, &(user, power))| (beam, user, power))
    }

    /// Add a member and hand it the listed beams, keeping `value` in step.
    fn merge(&mut self, user: usize, claims: &[(usize, f64)]) {
        self.members.push(user);
        for &(beam, power) in claims {
            let previous = self.owner.insert(beam, (user, power));
            self.value += power - previous.map_or(0.0, |(_, p)| p);
        }
    }
}

/// Marginal value of handing `beam` to `user` on top of `alloc`: the user's
/// power on the beam, minus the incumbent owner's power if the beam is
/// already covered. The beam must belong to the user's signature.
pub fn residual_value(inst: &GroupingInstance, alloc: &Allocation, user: usize, beam: usize) -> Result<f64> {
    let candidate = inst
        .find(user)
        .ok_or_else(|| Error::InvalidParameter(format!("user {user} is not a candidate")))?;
    let power = candidate
        .power_on(beam)
        .ok_or_else(|| Error::InvalidParameter(format!("beam {beam} is not in user {user}'s signature")))?;
    Ok(power - alloc.owned_power(beam).unwrap_or(0.0))
}

/// Greedy captured-power maximization under a member cap. Each round picks
/// the outside user with the largest total positive residual, hands it the
/// beams it improves, then sweeps the remaining users in ascending id order,
/// merging (cap permitting) any whose every signature beam still has a
/// strictly positive residual.
pub fn greedy_gmc(inst: &GroupingInstance, cap: usize) -> Result<Allocation> {
    if cap == 0 {
        return Err(Error::InvalidParameter("member cap must be positive".into()));
    }
    let mut alloc = Allocation::empty();
    let mut claims: Vec<(usize, f64)> = Vec::new();
    while alloc.width() < cap {
        let mut best: Option<(usize, f64)> = None;
        for u in &inst.users {
            if alloc.contains(u.user) {
                continue;
            }
            let gain: f64 = u
                .beams
                .iter()
                .zip(&u.beam_power)
                .map(|(&beam, &power)| (power - alloc.owned_power(beam).unwrap_or(0.0)).max(0.0))
                .sum();
            if gain > 0.0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((u.user, gain));
            }
        }
        let Some((picked, _)) = best else { break };
        let picked_sig = inst.find(picked).unwrap();
        claims.clear();
        for (&beam, &power) in picked_sig.beams.iter().zip(&picked_sig.beam_power) {
            if power - alloc.owned_power(beam).unwrap_or(0.0) > 0.0 {
                claims.push((beam, power));
            }
        }
        alloc.merge(picked, &claims);

        for u in &inst.users {
            if alloc.width() >= cap {
                break;
            }
            if alloc.contains(u.user) {
                continue;
            }
            let improves_everywhere = u
                .beams
                .iter()
                .zip(&u.beam_power)
                .all(|(&beam, &power)| power - alloc.owned_power(beam).unwrap_or(0.0) > 0.0);
            if improves_everywhere {
                claims.clear();
                claims.extend(u.beams.iter().copied().zip(u.beam_power.iter().copied()));
                alloc.merge(u.user, &claims);
            }
        }
    }
    Ok(alloc)
}

/// One pilot slot's copilot group.
#[derive(Debug, Clone, PartialEq)]
pub struct CopilotGroup {
    pub cell: usize,
    pub slot: usize,
    /// Member user ids in selection order.
    pub members: Vec<usize>,
    /// Beams credited to the group, ascending.
    pub covered_beams: Vec<usize>,
    /// Power-agnostic: number of covered beams. Power-aware: captured power.
    pub value: f64,
    /// Power-agnostic only: a member was admitted with zero coverage gain.
    pub zero_gain_fill: bool,
    /// Power-aware only: the per-beam ownership produced by the merge.
    pub allocation: Option<Allocation>,
}

/// All groups of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrouping {
    pub cell: usize,
    pub groups: Vec<CopilotGroup>,
    /// Set when the cell ran out of eligible users before filling its slots.
    pub shortfall: bool,
}

impl CellGrouping {
    pub fn group(&self, slot: usize) -> &CopilotGroup {
        &self.groups[slot]
    }
}

fn validate_caps(cells: &[GroupingInstance], caps: &[Vec<usize>]) -> Result<usize> {
    if cells.len() != caps.len() {
        return Err(Error::DimensionMismatch { expected: cells.len(), got: caps.len() });
    }
    let tau = caps.first().map_or(0, Vec::len);
    if tau == 0 {
        return Err(Error::InvalidParameter("at least one pilot slot is required".into()));
    }
    for per_cell in caps {
        if per_cell.len() != tau {
            return Err(Error::DimensionMismatch { expected: tau, got: per_cell.len() });
        }
        if per_cell.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParameter("every slot cap must be positive".into()));
        }
    }
    Ok(tau)
}

/// Uniform slot caps: `u` members for each of `tau` slots in every cell.
pub fn uniform_caps(n_cells: usize, tau: usize, u: usize) -> Vec<Vec<usize>> {
    vec![vec![u; tau]; n_cells]
}

fn agnostic_cell(inst: &GroupingInstance, caps: &[usize], cell: usize) -> CellGrouping {
    let n = inst.users.len();
    let mut taken = vec![false; n];
    let mut remaining = n;
    let mut groups = Vec::with_capacity(caps.len());
    let mut shortfall = false;
    for (slot, &cap) in caps.iter().enumerate() {
        let mut uncovered = vec![true; inst.n_beams];
        let mut members = Vec::new();
        let mut zero_gain_fill = false;
        for _ in 0..cap {
            if remaining == 0 {
                shortfall = true;
                break;
            }
            let mut best = usize::MAX;
            let mut best_gain = -1isize;
            for (i, u) in inst.users.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let gain = u.beams.iter().filter(|&&b| uncovered[b]).count() as isize;
                if gain > best_gain {
                    best_gain = gain;
                    best = i;
                }
            }
            if best_gain == 0 {
                zero_gain_fill = true;
            }
            members.push(inst.users[best].user);
            for &b in &inst.users[best].beams {
                uncovered[b] = false;
            }
            taken[best] = true;
            remaining -= 1;
        }
        let covered_beams: Vec<usize> =
            (0..inst.n_beams).filter(|&b| !uncovered[b]).collect();
        let value = covered_beams.len() as f64;
        groups.push(CopilotGroup {
            cell,
            slot,
            members,
            covered_beams,
            value,
            zero_gain_fill,
            allocation: None,
        });
    }
    CellGrouping { cell, groups, shortfall }
}

/// Power-agnostic grouping: per slot, greedily admit the user covering the
/// most still-uncovered beams (ties to the smallest id); each slot starts
/// from a fresh uncovered set, and no user serves two slots.
pub fn group_power_agnostic(cells: &[GroupingInstance], caps: &[Vec<usize>]) -> Result<Vec<CellGrouping>> {
    validate_caps(cells, caps)?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(cell, inst)| agnostic_cell(inst, &caps[cell], cell))
        .collect())
}

/// The single pool user with the largest captured signature power, owning
/// all of its beams (ties to the smallest id).
fn best_single(inst: &GroupingInstance) -> Option<Allocation> {
    let best = inst
        .users
        .iter()
        .max_by(|a, b| {
            let pa: f64 = a.beam_power.iter().sum();
            let pb: f64 = b.beam_power.iter().sum();
            pa.partial_cmp(&pb).unwrap().then(b.user.cmp(&a.user))
        })?;
    let mut alloc = Allocation::empty();
    let claims: Vec<(usize, f64)> =
        best.beams.iter().copied().zip(best.beam_power.iter().copied()).collect();
    alloc.merge(best.user, &claims);
    Some(alloc)
}

fn aware_cell(inst: &GroupingInstance, caps: &[usize], cell: usize) -> Result<CellGrouping> {
    let mut in_pool: Vec<bool> = vec![true; inst.users.len()];
    let mut groups = Vec::with_capacity(caps.len());
    let mut shortfall = false;
    for (slot, &cap) in caps.iter().enumerate() {
        let pool: Vec<UserSignature> = inst
            .users
            .iter()
            .zip(&in_pool)
            .filter(|(_, &live)| live)
            .map(|(u, _)| u.clone())
            .collect();
        if pool.is_empty() {
            shortfall = true;
            groups.push(CopilotGroup {
                cell,
                slot,
                members: Vec::new(),
                covered_beams: Vec::new(),
                value: 0.0,
                zero_gain_fill: false,
                allocation: Some(Allocation::empty()),
            });
            continue;
        }
        let sub = GroupingInstance { n_beams: inst.n_beams, users: pool };
        let grouped = greedy_gmc(&sub, cap)?;
        let single = best_single(&sub).unwrap();
        let chosen = if single.value > grouped.value { single } else { grouped };
        for member in &chosen.members {
            let idx = inst.users.binary_search_by_key(member, |u| u.user).unwrap();
            in_pool[idx] = false;
        }
        groups.push(CopilotGroup {
            cell,
            slot,
            members: chosen.members.clone(),
            covered_beams: chosen.covered_beams(),
            value: chosen.value,
            zero_gain_fill: false,
            allocation: Some(chosen),
        });
    }
    Ok(CellGrouping { cell, groups, shortfall })
}

/// Power-aware grouping: per slot, run the greedy captured-power merge over
/// the remaining pool, compare it against the best single user, keep the
/// better allocation (ties favor the merged group), and retire its members.
pub fn group_power_aware(cells: &[GroupingInstance], caps: &[Vec<usize>]) -> Result<Vec<CellGrouping>> {
    validate_caps(cells, caps)?;
    cells
        .iter()
        .enumerate()
        .map(|(cell, inst)| aware_cell(inst, &caps[cell], cell))
        .collect()
}

/// Objective used by the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingMode {
    /// Count of distinct covered beams.
    Coverage,
    /// Captured power with per-beam best owner.
    CapturedPower,
}

fn subset_value(inst: &GroupingInstance, subset: &[usize], mode: GroupingMode, scratch: &mut [f64]) -> f64 {
    scratch.fill(0.0);
    for &i in subset {
        let u = &inst.users[i];
        for (&beam, &power) in u.beams.iter().zip(&u.beam_power) {
            match mode {
                GroupingMode::Coverage => scratch[beam] = 1.0,
                GroupingMode::CapturedPower => scratch[beam] = scratch[beam].max(power),
            }
        }
    }
    scratch.iter().sum()
}

/// Exhaustive optimum of the slot-sum objective: each slot independently
/// takes its best group of at most `cap` users (the formulation does not
/// forbid reusing a user across slots, so slots decouple). Guarded against
/// instances whose subset count exceeds ten million.
pub fn brute_force_grouping_oracle(
    inst: &GroupingInstance,
    caps: &[usize],
    mode: GroupingMode,
) -> Result<f64> {
    if caps.is_empty() || caps.iter().any(|&c| c == 0) {
        return Err(Error::InvalidParameter("slot caps must be positive".into()));
    }
    let n = inst.users.len();
    let mut work = 0.0f64;
    for &cap in caps {
        let mut per_slot = 1.0f64;
        let mut level = 1.0f64;
        for j in 1..=cap.min(n) {
            level *= (n - j + 1) as f64 / j as f64;
            per_slot += level;
        }
        work += per_slot;
    }
    if work > 1e7 {
        return Err(Error::TooLarge(format!("oracle would enumerate {work:.3e} subsets")));
    }

    let mut scratch = vec![0.0; inst.n_beams];
    let mut opt = 0.0;
    for &cap in caps {
        let mut best = 0.0f64;
        let mut subset: Vec<usize> = Vec::with_capacity(cap.min(n));
        enumerate_subsets(n, cap.min(n), 0, &mut subset, &mut |s| {
            let v = subset_value(inst, s, mode, &mut scratch);
            if v > best {
                best = v;
            }
        });
        opt += best;
    }
    Ok(opt)
}

fn enumerate_subsets(
    n: usize,
    max_size: usize,
    start: usize,
    subset: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if !subset.is_empty() {
        visit(subset);
    }
    if subset.len() == max_size {
        return;
    }
    for i in start..n {
        subset.push(i);
        enumerate_subsets(n, max_size, i + 1, subset, visit);
        subset.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn user(id: usize, beams: &[usize], power: &[f64]) -> UserSignature {
        UserSignature { user: id, beams: beams.to_vec(), beam_power: power.to_vec() }
    }

    fn instance(n_beams: usize, users: Vec<UserSignature>) -> GroupingInstance {
        GroupingInstance::new(n_beams, users).unwrap()
    }

    fn random_instance(n_beams: usize, n_users: usize, max_sig: usize, seed: u64) -> GroupingInstance {
        let mut rng = stream(seed, &[90]);
        let users = (0..n_users)
            .map(|id| {
                let size = rng.gen_range(1..=max_sig);
                let mut beams: Vec<usize> = (0..n_beams).collect();
                for i in 0..size {
                    let j = rng.gen_range(i..n_beams);
                    beams.swap(i, j);
                }
                beams.truncate(size);
                beams.sort_unstable();
                let beam_power = beams.iter().map(|_| rng.gen_range(1..=10) as f64).collect();
                UserSignature { user: id, beams, beam_power }
            })
            .collect();
        instance(n_beams, users)
    }

    #[test]
    fn instance_validation_rejects_malformed_candidates() {
        assert!(GroupingInstance::new(0, vec![]).is_err());
        assert!(GroupingInstance::new(4, vec![user(1, &[0], &[1.0]), user(0, &[1], &[1.0])]).is_err());
        assert!(GroupingInstance::new(4, vec![user(0, &[], &[])]).is_err());
        assert!(GroupingInstance::new(4, vec![user(0, &[2, 1], &[1.0, 1.0])]).is_err());
        assert!(GroupingInstance::new(4, vec![user(0, &[5], &[1.0])]).is_err());
        assert!(GroupingInstance::new(4, vec![user(0, &[1], &[0.0])]).is_err());
        assert!(GroupingInstance::new(4, vec![user(0, &[1], &[1.0, 2.0])]).is_err());
    }

    #[test]
    fn residual_value_cases() {
        let inst = instance(8, vec![user(0, &[2], &[2.5]), user(1, &[2, 3], &[1.5, 4.0])]);
        let mut alloc = Allocation::empty();
        assert_eq!(residual_value(&inst, &alloc, 0, 2).unwrap(), 2.5);
        alloc.merge(0, &[(2, 2.5)]);
        assert_eq!(residual_value(&inst, &alloc, 1, 2).unwrap(), -1.0);
        assert_eq!(residual_value(&inst, &alloc, 1, 3).unwrap(), 4.0);
        assert_eq!(residual_value(&inst, &alloc, 0, 2).unwrap(), 0.0);
        assert!(residual_value(&inst, &alloc, 0, 3).is_err());
        assert!(residual_value(&inst, &alloc, 7, 3).is_err());
    }

    #[test]
    fn gmc_single_candidate() {
        let inst = instance(4, vec![user(3, &[1], &[3.0])]);
        let alloc = greedy_gmc(&inst, 1).unwrap();
        assert_eq!(alloc.members, vec![3]);
        assert_eq!(alloc.value, 3.0);
        assert_eq!(alloc.owner_of(1), Some(3));
        assert_eq!(alloc.width(), 1);
    }

    #[test]
    fn gmc_disjoint_candidates_all_join() {
        let inst = instance(8, vec![
            user(0, &[0, 1], &[2.0, 1.0]),
            user(1, &[2], &[5.0]),
            user(2, &[4, 5, 6], &[1.0, 1.0, 1.0]),
        ]);
        let alloc = greedy_gmc(&inst, 4).unwrap();
        assert_eq!(alloc.width(), 3);
        assert!((alloc.value - 11.0).abs() < 1e-12);
        assert_eq!(alloc.covered_beams(), vec![0, 1, 2, 4, 5, 6]);
        for (beam, owner, power) in alloc.entries() {
            let u = inst.find(owner).unwrap();
            assert_eq!(u.power_on(beam), Some(power));
        }
    }

    #[test]
    fn gmc_contested_beam_goes_to_the_stronger_member() {
        let inst = instance(4, vec![
            user(0, &[0, 1], &[3.0, 2.0]),
            user(1, &[0, 2], &[2.5, 4.0]),
        ]);
        let alloc = greedy_gmc(&inst, 2).unwrap();
        assert_eq!(alloc.owner_of(0), Some(0));
        assert_eq!(alloc.owner_of(1), Some(0));
        assert_eq!(alloc.owner_of(2), Some(1));
        assert!((alloc.value - 9.0).abs() < 1e-12);
    }

    #[test]
    fn gmc_sweep_merges_strict_improvers_under_the_cap() {
        let inst = instance(6, vec![
            user(0, &[0, 1], &[5.0, 5.0]),
            user(1, &[2], &[1.0]),
            user(2, &[3], &[1.0]),
        ]);
        let full = greedy_gmc(&inst, 3).unwrap();
        assert_eq!(full.members, vec![0, 1, 2]);
        assert!((full.value - 12.0).abs() < 1e-12);
        let capped = greedy_gmc(&inst, 2).unwrap();
        assert_eq!(capped.members, vec![0, 1]);
        assert!((capped.value - 11.0).abs() < 1e-12);
    }

    #[test]
    fn gmc_value_matches_its_own_ownership_table() {
        for seed in 0..50 {
            let inst = random_instance(8, 6, 4, seed);
            let alloc = greedy_gmc(&inst, 3).unwrap();
            let from_entries: f64 = alloc.entries().map(|(_, _, p)| p).sum();
            assert!((alloc.value - from_entries).abs() < 1e-12);
        }
    }

    #[test]
    fn gmc_brackets_the_exhaustive_optimum() {
        // The first density pick already captures at least OPT/cap (the
        // optimum uses at most `cap` users, each worth at most the best
        // single density), and every later merge is monotone.
        for seed in 0..300 {
            let inst = random_instance(8, 5, 4, seed);
            let cap = 2;
            let alloc = greedy_gmc(&inst, cap).unwrap();
            let opt = brute_force_grouping_oracle(&inst, &[cap], GroupingMode::CapturedPower).unwrap();
            assert!(alloc.value <= opt + 1e-9, "seed {seed}: greedy beats the optimum");
            assert!(
                alloc.value >= opt / cap as f64 - 1e-9,
                "seed {seed}: greedy {} below 1/{cap} of optimum {opt}",
                alloc.value
            );
        }
    }

    #[test]
    fn agnostic_disjoint_users_fill_one_slot() {
        let inst = instance(8, vec![
            user(0, &[0, 1], &[1.0, 1.0]),
            user(1, &[2, 3, 4], &[1.0, 1.0, 1.0]),
            user(2, &[6], &[1.0]),
        ]);
        let out = group_power_agnostic(&[inst], &[vec![3]]).unwrap();
        let g = &out[0].groups[0];
        assert_eq!(g.members, vec![1, 0, 2]);
        assert_eq!(g.covered_beams, vec![0, 1, 2, 3, 4, 6]);
        assert_eq!(g.value, 6.0);
        assert!(!g.zero_gain_fill);
        assert!(!out[0].shortfall);
    }

    #[test]
    fn agnostic_duplicate_signatures_trigger_zero_gain_fill() {
        let inst = instance(4, vec![
            user(0, &[0, 1], &[1.0, 1.0]),
            user(1, &[0, 1], &[1.0, 1.0]),
            user(2, &[0, 1], &[1.0, 1.0]),
        ]);
        let out = group_power_agnostic(&[inst], &[vec![2, 1]]).unwrap();
        let first = &out[0].groups[0];
        assert_eq!(first.members, vec![0, 1]);
        assert!(first.zero_gain_fill);
        assert_eq!(first.value, 2.0);
        // The second slot starts from a fresh uncovered set, so the leftover
        // duplicate still contributes full coverage there.
        let second = &out[0].groups[1];
        assert_eq!(second.members, vec![2]);
        assert!(!second.zero_gain_fill);
        assert_eq!(second.value, 2.0);
    }

    #[test]
    fn agnostic_shortfall_when_users_run_out() {
        let inst = instance(4, vec![
            user(0, &[0], &[1.0]),
            user(1, &[1], &[1.0]),
            user(2, &[2], &[1.0]),
        ]);
        let out = group_power_agnostic(&[inst], &[vec![2, 2]]).unwrap();
        assert!(out[0].shortfall);
        assert_eq!(out[0].groups[0].members.len(), 2);
        assert_eq!(out[0].groups[1].members.len(), 1);
    }

    #[test]
    fn agnostic_members_are_exclusive_and_caps_hold() {
        for seed in 0..50 {
            let inst = random_instance(10, 9, 4, seed);
            let caps = vec![vec![2, 3, 1]];
            let out = group_power_agnostic(&[inst.clone()], &caps).unwrap();
            let mut seen = std::collections::HashSet::new();
            for (slot, g) in out[0].groups.iter().enumerate() {
                assert!(g.members.len() <= caps[0][slot]);
                for &m in &g.members {
                    assert!(seen.insert(m), "seed {seed}: user {m} grouped twice");
                }
                let mut union: Vec<usize> = g
                    .members
                    .iter()
                    .flat_map(|&m| inst.find(m).unwrap().beams.clone())
                    .collect();
                union.sort_unstable();
                union.dedup();
                assert_eq!(g.covered_beams, union);
            }
        }
    }

    #[test]
    fn aware_lone_user_lands_in_the_first_slot() {
        let inst = instance(4, vec![user(5, &[1, 2], &[2.0, 1.0])]);
        let out = group_power_aware(&[inst], &[vec![2, 2]]).unwrap();
        assert_eq!(out[0].groups[0].members, vec![5]);
        assert!((out[0].groups[0].value - 3.0).abs() < 1e-12);
        assert!(out[0].groups[1].members.is_empty());
        assert!(out[0].shortfall);
    }

    #[test]
    fn aware_merged_group_never_trails_the_best_single_user() {
        for seed in 0..100 {
            let inst = random_instance(8, 7, 4, seed);
            let best_single_value: f64 = inst
                .users
                .iter()
                .map(|u| u.beam_power.iter().sum::<f64>())
                .fold(0.0, f64::max);
            let out = group_power_aware(&[inst.clone()], &[vec![3]]).unwrap();
            assert!(
                out[0].groups[0].value >= best_single_value - 1e-12,
                "seed {seed}: merged value lost to a single user"
            );
        }
    }

    #[test]
    fn aware_members_are_exclusive_across_slots() {
        for seed in 0..50 {
            let inst = random_instance(8, 8, 3, seed);
            let out = group_power_aware(&[inst], &[vec![2, 2, 2]]).unwrap();
            let mut seen = std::collections::HashSet::new();
            for g in &out[0].groups {
                assert!(g.members.len() <= 2);
                for &m in &g.members {
                    assert!(seen.insert(m));
                }
                let alloc = g.allocation.as_ref().unwrap();
                assert_eq!(alloc.covered_beams(), g.covered_beams);
                let recomputed: f64 = alloc.entries().map(|(_, _, p)| p).sum();
                assert!((g.value - recomputed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_cell_produces_empty_groups_and_a_shortfall() {
        let inst = GroupingInstance::new(4, vec![]).unwrap();
        let agnostic = group_power_agnostic(&[inst.clone()], &[vec![2, 2]]).unwrap();
        assert!(agnostic[0].shortfall);
        assert!(agnostic[0].groups.iter().all(|g| g.members.is_empty()));
        let aware = group_power_aware(&[inst], &[vec![2, 2]]).unwrap();
        assert!(aware[0].shortfall);
        assert!(aware[0].groups.iter().all(|g| g.members.is_empty()));
    }

    #[test]
    fn from_serving_signatures_skips_empty_ones() {
        use crate::signature::{LinkId, SpatialSignature};
        let sigs = vec![
            SpatialSignature {
                link: LinkId { cell: 0, user: 2, bs: 0 },
                beams: vec![1],
                beam_power: vec![0.9],
                trace: 1.0,
            },
            SpatialSignature {
                link: LinkId { cell: 0, user: 0, bs: 0 },
                beams: vec![],
                beam_power: vec![],
                trace: 1.0,
            },
        ];
        let (inst, skipped) = GroupingInstance::from_serving_signatures(4, &sigs).unwrap();
        assert_eq!(skipped, vec![0]);
        assert_eq!(inst.users.len(), 1);
        assert_eq!(inst.users[0].user, 2);
    }

    #[test]
    fn oracle_handles_simple_cases() {
        let inst = instance(8, vec![user(0, &[1, 2, 3], &[1.0, 2.0, 3.0])]);
        assert_eq!(brute_force_grouping_oracle(&inst, &[1], GroupingMode::Coverage).unwrap(), 3.0);
        assert_eq!(
            brute_force_grouping_oracle(&inst, &[1], GroupingMode::CapturedPower).unwrap(),
            6.0
        );
        // Two slots double the optimum because slots decouple.
        assert_eq!(brute_force_grouping_oracle(&inst, &[1, 1], GroupingMode::Coverage).unwrap(), 6.0);
    }

    #[test]
    fn oracle_is_invariant_to_duplicated_candidates() {
        let base = instance(8, vec![
            user(0, &[0, 1], &[2.0, 2.0]),
            user(1, &[2, 3], &[1.0, 5.0]),
        ]);
        let doubled = instance(8, vec![
            user(0, &[0, 1], &[2.0, 2.0]),
            user(1, &[2, 3], &[1.0, 5.0]),
            user(2, &[0, 1], &[2.0, 2.0]),
        ]);
        for mode in [GroupingMode::Coverage, GroupingMode::CapturedPower] {
            let a = brute_force_grouping_oracle(&base, &[2, 2], mode).unwrap();
            let b = brute_force_grouping_oracle(&doubled, &[2, 2], mode).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn oracle_dominates_both_greedy_rules() {
        for seed in 0..200 {
            let inst = random_instance(8, 6, 4, seed);
            let caps = vec![vec![2, 2]];
            let agnostic = group_power_agnostic(&[inst.clone()], &caps).unwrap();
            let total: f64 = agnostic[0].groups.iter().map(|g| g.value).sum();
            let opt = brute_force_grouping_oracle(&inst, &caps[0], GroupingMode::Coverage).unwrap();
            assert!(total <= opt + 1e-9, "seed {seed}: agnostic greedy beat its oracle");

            let aware = group_power_aware(&[inst.clone()], &caps).unwrap();
            let total: f64 = aware[0].groups.iter().map(|g| g.value).sum();
            let opt =
                brute_force_grouping_oracle(&inst, &caps[0], GroupingMode::CapturedPower).unwrap();
            assert!(total <= opt + 1e-9, "seed {seed}: aware greedy beat its oracle");
        }
    }

    #[test]
    fn oracle_refuses_oversized_instances() {
        let users = (0..60)
            .map(|id| user(id, &[id % 16], &[1.0]))
            .collect();
        let inst = instance(16, users);
        match brute_force_grouping_oracle(&inst, &[30], GroupingMode::Coverage) {
            Err(Error::TooLarge(_)) => {}
            other => panic!("expected a size guard, got {other:?}"),
        }
    }
}
