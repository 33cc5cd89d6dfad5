//! Distributed randomized selection of the `ell` smallest keys.
//!
//! The leader keeps a half-open key range `(lower, upper]` known to contain the
//! answer's boundary, together with the per-machine count of keys inside it.
//! Each iteration draws a pivot uniformly from the live range in two hops
//! (machine `i` with probability `n_i / s`, then a uniform key on `i`), counts
//! the keys in `(lower, pivot]` across the cluster, and moves one end of the
//! range to the pivot. When the range holds exactly the number of keys still
//! sought, the leader broadcasts `Finished(upper)` and every machine outputs its
//! keys at or below `upper`.
//!
//! Followers never see the leader's decision directly. They learn it from the
//! next pivot (which always lies inside the new range), or from the one-bit
//! [`RangeUpdate`] carried by `PickPivot` when they are asked to draw.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::outcome::{LeaderReport, NodeReport, Outcome, SelectionTrace};
use crate::point::DistKey;
use crate::rng::{self, SimRng};
use crate::sim::primitives::{Election, Tally, Uplink};
use crate::sim::{
    run_protocol, Envelope, Message, MessageKind, Node, Payload, RangeUpdate, RunMetrics, SimError, SimOptions,
    StepContext, LEADER,
};

/// Upper limit on keys in one selection, so counts stay far from overflow.
pub const MAX_KEYS: u64 = 1 << 40;

/// Picks index `i` with probability `counts[i] / sum(counts)`.
pub fn choose_machine(counts: &[u64], rng: &mut impl Rng) -> Option<usize> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut ticket = rng.gen_range(0..total);
    for (i, &c) in counts.iter().enumerate() {
        if ticket < c {
            return Some(i);
        }
        ticket -= c;
    }
    unreachable!("ticket below total")
}

/// Index range of the sorted `keys` that lie in `(lower, upper]`; `None` is unbounded.
pub(crate) fn range_of(keys: &[DistKey], lower: Option<DistKey>, upper: Option<DistKey>) -> Range<usize> {
    let start = lower.map_or(0, |lo| keys.partition_point(|k| *k <= lo));
    let end = upper.map_or(keys.len(), |hi| keys.partition_point(|k| *k <= hi));
    start..end.max(start)
}

/// Uniform key among the sorted `keys` in `(lower, upper]`.
pub fn choose_in_range(
    keys: &[DistKey],
    lower: Option<DistKey>,
    upper: Option<DistKey>,
    rng: &mut impl Rng,
) -> Option<DistKey> {
    let r = range_of(keys, lower, upper);
    if r.is_empty() {
        return None;
    }
    Some(keys[rng.gen_range(r)])
}

/// The part of the sorted `keys` a machine outputs on `Finished`: keys up to a
/// bound, all of them when no bound is given, or the first `c` for a count.
pub(crate) fn finished_keys(keys: &[DistKey], payload: Payload) -> Vec<DistKey> {
    let end = match payload {
        Payload::Key(upper) => range_of(keys, None, Some(upper)).end,
        Payload::Count(c) => keys.len().min(usize::try_from(c).unwrap_or(usize::MAX)),
        _ => keys.len(),
    };
    keys[..end].to_vec()
}

pub(crate) enum FollowerStep {
    Reply(MessageKind, Payload),
    Output(Vec<DistKey>),
    Unhandled,
}

/// A non-leader machine's view of the selection loop.
#[derive(Debug)]
pub(crate) struct FollowerSelection {
    keys: Vec<DistKey>,
    lower: Option<DistKey>,
    upper: Option<DistKey>,
    /// Last pivot counted against, whose effect on the range is not yet known.
    pending: Option<DistKey>,
}

impl FollowerSelection {
    /// `keys` must be sorted.
    pub(crate) fn new(keys: Vec<DistKey>) -> Self {
        debug_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        FollowerSelection { keys, lower: None, upper: None, pending: None }
    }

    pub(crate) fn live_count(&self) -> u64 {
        range_of(&self.keys, self.lower, self.upper).len() as u64
    }

    fn settle(&mut self, update: RangeUpdate) {
        if let Some(p) = self.pending.take() {
            match update {
                RangeUpdate::LowerToPivot => self.lower = Some(p),
                RangeUpdate::UpperToPivot => self.upper = Some(p),
            }
        }
    }

    pub(crate) fn handle(&mut self, msg: &Message, rng: &mut SimRng) -> Result<FollowerStep, SimError> {
        match (msg.kind, msg.payload) {
            (MessageKind::PickPivot, payload) => {
                if let Payload::Update(update) = payload {
                    self.settle(update);
                }
                let pivot = choose_in_range(&self.keys, self.lower, self.upper, rng)
                    .ok_or_else(|| SimError::Internal("asked for a pivot with an empty range".into()))?;
                Ok(FollowerStep::Reply(MessageKind::PivotReply, Payload::Key(pivot)))
            }
            (MessageKind::GetCount, Payload::Key(pivot)) => {
                if let Some(prev) = self.pending {
                    // the new pivot lies inside the updated range
                    self.settle(if pivot <= prev { RangeUpdate::UpperToPivot } else { RangeUpdate::LowerToPivot });
                }
                self.pending = Some(pivot);
                let n = range_of(&self.keys, self.lower, Some(pivot)).len() as u64;
                Ok(FollowerStep::Reply(MessageKind::CountReply, Payload::Count(n)))
            }
            (MessageKind::Finished, payload) => Ok(FollowerStep::Output(finished_keys(&self.keys, payload))),
            _ => Ok(FollowerStep::Unhandled),
        }
    }
}

#[derive(Debug)]
enum LeaderState {
    AwaitPivot { from: usize },
    AwaitCounts { pivot: DistKey, tally: Tally<u64> },
    Done(Vec<DistKey>),
}

/// The leader's side of the selection loop, started once all initial counts are in.
#[derive(Debug)]
pub(crate) struct LeaderSelection {
    keys: Vec<DistKey>,
    lower: Option<DistKey>,
    upper: Option<DistKey>,
    counts: Vec<u64>,
    total: u64,
    remaining: u64,
    last_update: Option<RangeUpdate>,
    state: LeaderState,
    trace: SelectionTrace,
}

impl LeaderSelection {
    /// `keys` are the leader's own (sorted); `counts[i]` is machine `i`'s key count.
    pub(crate) fn start(
        keys: Vec<DistKey>,
        counts: Vec<u64>,
        ell: u64,
        ctx: &mut StepContext<'_>,
        rng: &mut SimRng,
    ) -> Result<Self, SimError> {
        let total = counts.iter().sum();
        if ell > total {
            return Err(SimError::Internal(format!("selecting {ell} of {total} keys")));
        }
        let mut sel = LeaderSelection {
            keys,
            lower: None,
            upper: None,
            counts,
            total,
            remaining: ell,
            last_update: None,
            state: LeaderState::Done(Vec::new()),
            trace: SelectionTrace::default(),
        };
        sel.advance(ctx, rng)?;
        Ok(sel)
    }

    pub(crate) fn is_done(&self) -> bool {
        matches!(self.state, LeaderState::Done(_))
    }

    pub(crate) fn into_parts(self) -> (Vec<DistKey>, SelectionTrace) {
        match self.state {
            LeaderState::Done(keys) => (keys, self.trace),
            _ => (Vec::new(), self.trace),
        }
    }

    fn advance(&mut self, ctx: &mut StepContext<'_>, rng: &mut SimRng) -> Result<(), SimError> {
        if self.remaining == 0 {
            ctx.broadcast(MessageKind::Finished, Payload::Count(0));
            self.state = LeaderState::Done(Vec::new());
            return Ok(());
        }
        if self.total == self.remaining {
            ctx.broadcast(MessageKind::Finished, self.upper.map_or(Payload::Empty, Payload::Key));
            let end = range_of(&self.keys, None, self.upper).end;
            self.state = LeaderState::Done(self.keys[..end].to_vec());
            return Ok(());
        }
        self.trace.iterations += 1;
        self.trace.range_sizes.push(self.total);
        let machine = choose_machine(&self.counts, rng)
            .ok_or_else(|| SimError::Internal("pivot requested from an empty range".into()))?;
        if machine == LEADER {
            let pivot = choose_in_range(&self.keys, self.lower, self.upper, rng)
                .ok_or_else(|| SimError::Internal("leader count out of sync".into()))?;
            self.trace.local_pivots += 1;
            self.query_counts(pivot, ctx);
        } else {
            let payload = self.last_update.map_or(Payload::Empty, Payload::Update);
            ctx.send(machine, MessageKind::PickPivot, payload);
            self.state = LeaderState::AwaitPivot { from: machine };
        }
        Ok(())
    }

    fn query_counts(&mut self, pivot: DistKey, ctx: &mut StepContext<'_>) {
        ctx.broadcast(MessageKind::GetCount, Payload::Key(pivot));
        let own = range_of(&self.keys, self.lower, Some(pivot)).len() as u64;
        self.state = LeaderState::AwaitCounts { pivot, tally: Tally::new(ctx.machines(), own) };
    }

    fn decide(&mut self, pivot: DistKey, replies: Vec<u64>) -> Result<(), SimError> {
        let below: u64 = replies.iter().sum();
        if below < self.remaining {
            for (c, r) in self.counts.iter_mut().zip(&replies) {
                *c = c.checked_sub(*r).ok_or_else(|| SimError::Internal("count exceeds range".into()))?;
            }
            self.remaining -= below;
            self.total -= below;
            self.lower = Some(pivot);
            self.last_update = Some(RangeUpdate::LowerToPivot);
        } else {
            self.counts = replies;
            self.total = below;
            self.upper = Some(pivot);
            self.last_update = Some(RangeUpdate::UpperToPivot);
        }
        Ok(())
    }

    pub(crate) fn on_message(
        &mut self,
        env: &Envelope,
        ctx: &mut StepContext<'_>,
        rng: &mut SimRng,
    ) -> Result<(), SimError> {
        match (&mut self.state, env.message.kind, env.message.payload) {
            (LeaderState::AwaitPivot { from }, MessageKind::PivotReply, Payload::Key(pivot)) if *from == env.src => {
                self.query_counts(pivot, ctx);
            }
            (LeaderState::AwaitCounts { tally, .. }, MessageKind::CountReply, Payload::Count(n)) => {
                tally.put(env.src, n)?;
                if tally.is_complete() {
                    let state = std::mem::replace(&mut self.state, LeaderState::Done(Vec::new()));
                    let LeaderState::AwaitCounts { pivot, tally } = state else { unreachable!() };
                    self.decide(pivot, tally.into_values())?;
                    self.advance(ctx, rng)?;
                }
            }
            _ => return Err(ctx.unexpected(env)),
        }
        Ok(())
    }
}

enum LeaderStage {
    Electing(Election),
    Counting(Tally<u64>),
    Selecting(LeaderSelection),
}

enum Role {
    Leader { keys: Option<Vec<DistKey>>, stage: LeaderStage },
    Follower { uplink: Uplink, election: Election, sel: FollowerSelection, started: bool, output: Option<Vec<DistKey>> },
}

struct SelectNode {
    index: usize,
    ell: u64,
    rng: SimRng,
    role: Role,
}

impl Node for SelectNode {
    type Output = NodeReport;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        let k = ctx.machines();
        match &mut self.role {
            Role::Leader { keys, stage } => {
                for env in ctx.inbox() {
                    match (&mut *stage, env.message.kind, env.message.payload) {
                        (LeaderStage::Electing(election), MessageKind::LeaderId, _) => {
                            if election.hear(k) {
                                let own = keys.as_ref().map_or(0, |k| k.len() as u64);
                                *stage = LeaderStage::Counting(Tally::new(k, own));
                            }
                        }
                        (LeaderStage::Counting(tally), MessageKind::CountReply, Payload::Count(n)) => {
                            tally.put(env.src, n)?;
                            if tally.is_complete() {
                                let LeaderStage::Counting(tally) =
                                    std::mem::replace(stage, LeaderStage::Electing(Election::new()))
                                else {
                                    unreachable!()
                                };
                                let own = keys.take().unwrap_or_default();
                                let sel = LeaderSelection::start(own, tally.into_values(), self.ell, ctx, &mut self.rng)?;
                                *stage = LeaderStage::Selecting(sel);
                            }
                        }
                        (LeaderStage::Selecting(sel), _, _) => sel.on_message(env, ctx, &mut self.rng)?,
                        _ => return Err(ctx.unexpected(env)),
                    }
                }
            }
            Role::Follower { uplink, election, sel, started, output } => {
                if !std::mem::replace(started, true) {
                    election.announce(self.index, uplink);
                    uplink.push(MessageKind::CountReply, Payload::Count(sel.live_count()));
                }
                for env in ctx.inbox() {
                    match sel.handle(&env.message, &mut self.rng)? {
                        FollowerStep::Reply(kind, payload) => uplink.push(kind, payload),
                        FollowerStep::Output(keys) => *output = Some(keys),
                        FollowerStep::Unhandled => return Err(ctx.unexpected(env)),
                    }
                }
                uplink.flush(ctx);
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        match &self.role {
            Role::Leader { stage: LeaderStage::Selecting(sel), .. } => sel.is_done(),
            Role::Leader { .. } => false,
            Role::Follower { uplink, output, .. } => output.is_some() && uplink.is_empty(),
        }
    }

    fn finish(self) -> NodeReport {
        match self.role {
            Role::Leader { stage: LeaderStage::Selecting(sel), .. } => {
                let (keys, trace) = sel.into_parts();
                NodeReport { keys, leader: Some(LeaderReport { trace, ..LeaderReport::default() }) }
            }
            Role::Leader { .. } => NodeReport::default(),
            Role::Follower { output, .. } => NodeReport { keys: output.unwrap_or_default(), leader: None },
        }
    }
}

pub(crate) fn check_machines(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::TooFewMachines(k));
    }
    Ok(())
}

fn sorted_sets(key_sets: &[Vec<DistKey>]) -> Result<(Vec<Vec<DistKey>>, u64)> {
    let mut total = 0u64;
    let sets = key_sets
        .iter()
        .map(|s| {
            if s.iter().any(DistKey::is_sentinel) {
                return Err(Error::InvalidConfig("the all-ones key is reserved".into()));
            }
            total += s.len() as u64;
            let mut s = s.clone();
            s.sort_unstable();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    if total > MAX_KEYS {
        return Err(Error::InvalidConfig(format!("{total} keys exceed the 2^40 limit")));
    }
    Ok((sets, total))
}

/// Finds the `ell` smallest keys held across `key_sets.len()` machines.
///
/// Machine 0 is elected leader (1 round), followers report their key counts
/// (1 round), then the pivot loop runs until the range is exact.
pub fn run_selection(key_sets: &[Vec<DistKey>], ell: u64, seed: u64, opts: &SimOptions) -> Result<Outcome> {
    let k = key_sets.len();
    check_machines(k)?;
    let (sets, total) = sorted_sets(key_sets)?;
    if ell > total {
        return Err(Error::NotEnoughPoints { requested: ell, available: total });
    }
    let nodes = sets
        .into_iter()
        .enumerate()
        .map(|(index, keys)| {
            let role = if index == LEADER {
                Role::Leader { keys: Some(keys), stage: LeaderStage::Electing(Election::new()) }
            } else {
                Role::Follower {
                    uplink: Uplink::default(),
                    election: Election::new(),
                    sel: FollowerSelection::new(keys),
                    started: false,
                    output: None,
                }
            };
            SelectNode { index, ell, rng: rng::machine(seed, index), role }
        })
        .collect();
    let out = run_protocol(nodes, &opts.engine_config(total))?;
    Ok(Outcome::from_run(out))
}

enum PivotRole {
    Leader { keys: Vec<DistKey>, counts: Vec<u64>, started: bool, pivot: Option<DistKey> },
    Follower(FollowerSelection),
}

struct PivotNode {
    rng: SimRng,
    role: PivotRole,
}

impl Node for PivotNode {
    type Output = Option<DistKey>;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        match &mut self.role {
            PivotRole::Leader { keys, counts, started, pivot } => {
                if !std::mem::replace(started, true) {
                    let machine = choose_machine(counts, &mut self.rng)
                        .ok_or_else(|| SimError::Internal("no keys to pick from".into()))?;
                    if machine == LEADER {
                        *pivot = choose_in_range(keys, None, None, &mut self.rng);
                    } else {
                        ctx.send(machine, MessageKind::PickPivot, Payload::Empty);
                    }
                }
                for env in ctx.inbox() {
                    match env.message.payload {
                        Payload::Key(p) if env.message.kind == MessageKind::PivotReply => *pivot = Some(p),
                        _ => return Err(ctx.unexpected(env)),
                    }
                }
            }
            PivotRole::Follower(sel) => {
                for env in ctx.inbox() {
                    match sel.handle(&env.message, &mut self.rng)? {
                        FollowerStep::Reply(kind, payload) => ctx.send(LEADER, kind, payload),
                        _ => return Err(ctx.unexpected(env)),
                    }
                }
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        match &self.role {
            PivotRole::Leader { pivot, .. } => pivot.is_some(),
            PivotRole::Follower(_) => true,
        }
    }

    fn finish(self) -> Option<DistKey> {
        match self.role {
            PivotRole::Leader { pivot, .. } => pivot,
            PivotRole::Follower(_) => None,
        }
    }
}

/// One uniform pivot draw over all keys, with the leader already knowing each
/// machine's count. Costs 2 rounds and 2 messages unless the leader picks itself.
pub fn pick_pivot(key_sets: &[Vec<DistKey>], seed: u64) -> Result<(DistKey, RunMetrics)> {
    let k = key_sets.len();
    check_machines(k)?;
    let (sets, total) = sorted_sets(key_sets)?;
    if total == 0 {
        return Err(Error::NotEnoughPoints { requested: 1, available: 0 });
    }
    let counts: Vec<u64> = sets.iter().map(|s| s.len() as u64).collect();
    let nodes = sets
        .into_iter()
        .enumerate()
        .map(|(index, keys)| PivotNode {
            rng: rng::machine(seed, index),
            role: if index == LEADER {
                PivotRole::Leader { keys, counts: counts.clone(), started: false, pivot: None }
            } else {
                PivotRole::Follower(FollowerSelection::new(keys))
            },
        })
        .collect();
    let out = run_protocol(nodes, &SimOptions::default().engine_config(total))?;
    let pivot = out.outputs[LEADER].ok_or_else(|| SimError::Internal("no pivot drawn".into()))?;
    Ok((pivot, out.metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_select;
    use crate::sim::Phase;
    use rand::SeedableRng;

    fn keys(values: &[u64]) -> Vec<DistKey> {
        values.iter().map(|&v| DistKey::new(v, v)).collect()
    }

    #[test]
    fn two_machines_five_keys() {
        let sets = vec![keys(&[1, 5, 9]), keys(&[3, 7])];
        for seed in 0..20 {
            let out = run_selection(&sets, 2, seed, &SimOptions::default()).unwrap();
            assert_eq!(out.keys(), keys(&[1, 3]));
            assert_eq!(out.keys(), oracle_select(&sets, 2).unwrap());
        }
    }

    #[test]
    fn ell_equal_to_total_skips_the_loop() {
        let sets = vec![keys(&[4, 2]), keys(&[8]), keys(&[])];
        let out = run_selection(&sets, 3, 1, &SimOptions::default()).unwrap();
        assert_eq!(out.keys(), keys(&[2, 4, 8]));
        assert_eq!(out.report.trace.iterations, 0);
        // election, counts, finished
        assert_eq!(out.metrics.rounds, 3);
        assert_eq!(out.metrics.phase(Phase::Finish), 1);
    }

    #[test]
    fn ell_one_finds_the_minimum() {
        let sets = vec![keys(&[40, 12, 90]), keys(&[33, 7]), keys(&[18, 71, 64])];
        for seed in 0..20 {
            let out = run_selection(&sets, 1, seed, &SimOptions::default()).unwrap();
            assert_eq!(out.keys(), keys(&[7]));
        }
    }

    #[test]
    fn ell_zero_outputs_nothing() {
        let sets = vec![keys(&[1]), keys(&[2])];
        let out = run_selection(&sets, 0, 0, &SimOptions::default()).unwrap();
        assert!(out.keys().is_empty());
        let empty = vec![vec![], vec![]];
        let out = run_selection(&empty, 0, 0, &SimOptions::default()).unwrap();
        assert!(out.keys().is_empty());
        assert_eq!(out.metrics.kind(MessageKind::PivotReply), 0);
    }

    #[test]
    fn errors_before_start() {
        let sets = vec![keys(&[1]), keys(&[2])];
        assert!(matches!(
            run_selection(&sets, 3, 0, &SimOptions::default()),
            Err(Error::NotEnoughPoints { requested: 3, available: 2 })
        ));
        assert!(run_selection(&sets[..1], 1, 0, &SimOptions::default()).is_err());
        let bad = vec![vec![DistKey::SENTINEL], keys(&[1])];
        assert!(run_selection(&bad, 1, 0, &SimOptions::default()).is_err());
    }

    #[test]
    fn duplicate_distances_resolved_by_id() {
        let sets = vec![
            vec![DistKey::new(5, 10), DistKey::new(5, 3)],
            vec![DistKey::new(5, 7), DistKey::new(1, 99)],
        ];
        let out = run_selection(&sets, 3, 9, &SimOptions::default()).unwrap();
        assert_eq!(out.keys(), vec![DistKey::new(1, 99), DistKey::new(5, 3), DistKey::new(5, 7)]);
    }

    #[test]
    fn choose_machine_respects_zero_weights() {
        let mut rng = SimRng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(choose_machine(&[0, 0, 5, 0], &mut rng), Some(2));
        }
        assert_eq!(choose_machine(&[0, 0], &mut rng), None);
    }

    #[test]
    fn range_is_half_open() {
        let ks = keys(&[1, 2, 3, 4, 5]);
        let k = |v| Some(DistKey::new(v, v));
        assert_eq!(range_of(&ks, None, None), 0..5);
        assert_eq!(range_of(&ks, k(2), k(4)), 2..4);
        assert_eq!(range_of(&ks, k(5), None), 5..5);
        assert_eq!(range_of(&ks, k(4), k(2)), 4..4);
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(choose_in_range(&ks, k(3), k(4), &mut rng), k(4));
        assert_eq!(choose_in_range(&ks, k(4), k(4), &mut rng), None);
    }

    #[test]
    fn pivot_from_single_holder_costs_two_rounds() {
        let sets = vec![vec![], keys(&[5, 6, 7])];
        for seed in 0..10 {
            let (p, m) = pick_pivot(&sets, seed).unwrap();
            assert!(sets[1].contains(&p));
            assert_eq!((m.rounds, m.messages), (2, 2));
            assert_eq!(m.kind(MessageKind::PickPivot), 1);
            assert_eq!(m.kind(MessageKind::PivotReply), 1);
        }
        // the leader drawing from its own keys needs no communication
        let (p, m) = pick_pivot(&[keys(&[4]), vec![]], 0).unwrap();
        assert_eq!(p, DistKey::new(4, 4));
        assert_eq!((m.rounds, m.messages), (0, 0));
    }
}
