//! Distributed ℓ-nearest-neighbors with sampling-based pruning.
//!
//! Every machine keeps only its ℓ closest keys (conceptually padded with
//! sentinels up to exactly ℓ), sends `m = 12⌈log₂ℓ⌉` uniform samples of that
//! padded set to the leader, and the leader broadcasts the sample at rank
//! `21⌈log₂ℓ⌉` as a pruning bound. Selection then runs on the few keys at or
//! below the bound. If pruning left fewer than ℓ keys the leader broadcasts
//! an empty bound, which restores the full truncated sets.

use rand::Rng;

use crate::error::{Error, Result};
use crate::outcome::{LeaderReport, NodeReport, Outcome};
use crate::point::{dist_key, DistKey, Metric, Point};
use crate::rng::{self, SimRng};
use crate::select::{check_machines, FollowerSelection, FollowerStep, LeaderSelection, MAX_KEYS};
use crate::sim::primitives::{Election, Tally, Uplink};
use crate::sim::{
    log2_ceil, run_protocol, MessageKind, Node, Payload, RunMetrics, SimError, SimOptions, StepContext, LEADER,
};

/// Parameters of one nearest-neighbor query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnnConfig {
    pub ell: u64,
    /// Samples per machine, in units of `⌈log₂ℓ⌉`.
    pub sample_factor: u64,
    /// Rank of the pruning key among all samples, in units of `⌈log₂ℓ⌉`.
    pub rank_factor: u64,
    pub metric: Metric,
    pub seed: u64,
}

impl KnnConfig {
    pub const SAMPLE_FACTOR: u64 = 12;
    pub const RANK_FACTOR: u64 = 21;

    pub fn new(ell: u64, metric: Metric, seed: u64) -> Self {
        KnnConfig { ell, sample_factor: Self::SAMPLE_FACTOR, rank_factor: Self::RANK_FACTOR, metric, seed }
    }

    pub fn log_ell(&self) -> u64 {
        u64::from(log2_ceil(self.ell))
    }

    pub fn samples_per_machine(&self) -> u64 {
        self.sample_factor * self.log_ell()
    }

    fn unclamped_rank(&self) -> u64 {
        self.rank_factor * self.log_ell()
    }

    /// 1-based rank of the pruning key among `total` samples.
    pub fn pruning_rank(&self, total: u64) -> u64 {
        self.unclamped_rank().min(total)
    }

    /// Whether `k` machines sample and prune, or go straight to selection.
    pub fn uses_sampling(&self, k: usize) -> bool {
        self.ell >= 4 && self.unclamped_rank() <= k as u64 * self.samples_per_machine()
    }

    fn validate(&self) -> Result<()> {
        if self.sample_factor == 0 || self.rank_factor == 0 {
            return Err(Error::InvalidConfig("sample and rank factors must be at least 1".into()));
        }
        if self.sample_factor > 1 << 20 || self.rank_factor > 1 << 20 {
            return Err(Error::InvalidConfig("sample and rank factors are capped at 2^20".into()));
        }
        Ok(())
    }
}

/// The `ell` smallest keys of `keys`, ascending.
pub fn local_nearest(mut keys: Vec<DistKey>, ell: usize) -> Vec<DistKey> {
    if ell < keys.len() {
        if ell > 0 {
            keys.select_nth_unstable(ell - 1);
        }
        keys.truncate(ell);
    }
    keys.sort_unstable();
    keys
}

fn local_keys(points: &[Point], query: &Point, ell: u64, metric: Metric) -> Result<Vec<DistKey>> {
    let keys = points.iter().map(|p| dist_key(p, query, metric)).collect::<Result<Vec<_>>>()?;
    Ok(local_nearest(keys, usize::try_from(ell).unwrap_or(usize::MAX)))
}

/// A machine's ℓ closest keys padded with sentinels to exactly ℓ, ascending.
pub fn local_truncate(points: &[Point], query: &Point, ell: u64, metric: Metric) -> Result<Vec<DistKey>> {
    let mut keys = local_keys(points, query, ell, metric)?;
    keys.resize(ell as usize, DistKey::SENTINEL);
    Ok(keys)
}

/// `m` draws with replacement from the ascending `real` keys padded to `ell` with sentinels.
pub fn draw_samples(real: &[DistKey], ell: u64, m: u64, rng: &mut impl Rng) -> Vec<DistKey> {
    (0..m)
        .map(|_| {
            let i = rng.gen_range(0..ell);
            usize::try_from(i).ok().and_then(|i| real.get(i)).copied().unwrap_or(DistKey::SENTINEL)
        })
        .collect()
}

/// The key at 1-based `rank` of the ascending `samples`.
pub fn pruning_key(samples: &[DistKey], rank: u64) -> Option<DistKey> {
    let i = usize::try_from(rank).ok()?.checked_sub(1)?;
    samples.get(i).copied()
}

/// Real keys at or below `bound`.
pub fn prune(keys: &[DistKey], bound: DistKey) -> Vec<DistKey> {
    keys.iter().copied().filter(|k| !k.is_sentinel() && *k <= bound).collect()
}

/// `prune` with `None` meaning no bound at all.
fn bounded(keys: &[DistKey], bound: Option<DistKey>) -> Vec<DistKey> {
    match bound {
        Some(b) => prune(keys, b),
        None => keys.to_vec(),
    }
}

enum FollowerStage {
    AwaitBound,
    Selecting(FollowerSelection),
    Done(Vec<DistKey>),
}

struct KnnFollower {
    real: Vec<DistKey>,
    uplink: Uplink,
    election: Election,
    started: bool,
    stage: FollowerStage,
}

enum LeaderStage {
    Gathering(Vec<DistKey>),
    Counting { tally: Tally<u64>, own: Vec<DistKey> },
    Selecting(LeaderSelection),
}

struct KnnLeader {
    real: Vec<DistKey>,
    election: Election,
    elected: bool,
    stage: LeaderStage,
    report: LeaderReport,
}

enum Role {
    Leader(KnnLeader),
    Follower(KnnFollower),
}

struct KnnNode {
    index: usize,
    cfg: KnnConfig,
    sampling: bool,
    rng: SimRng,
    role: Role,
}

impl KnnNode {
    fn new(index: usize, real: Vec<DistKey>, cfg: KnnConfig, k: usize) -> Self {
        let sampling = cfg.uses_sampling(k);
        let mut rng = rng::machine(cfg.seed, index);
        let role = if index == LEADER {
            let stage = if sampling {
                LeaderStage::Gathering(draw_samples(&real, cfg.ell, cfg.samples_per_machine(), &mut rng))
            } else {
                LeaderStage::Counting { tally: Tally::new(k, real.len() as u64), own: real.clone() }
            };
            let report = LeaderReport { survivors: real.len() as u64, ..LeaderReport::default() };
            Role::Leader(KnnLeader { real, election: Election::new(), elected: false, stage, report })
        } else {
            Role::Follower(KnnFollower {
                real,
                uplink: Uplink::default(),
                election: Election::new(),
                started: false,
                stage: FollowerStage::AwaitBound,
            })
        };
        KnnNode { index, cfg, sampling, rng, role }
    }
}

impl KnnFollower {
    fn step(&mut self, index: usize, cfg: &KnnConfig, sampling: bool, rng: &mut SimRng, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        if !std::mem::replace(&mut self.started, true) {
            self.election.announce(index, &mut self.uplink);
            if sampling {
                for key in draw_samples(&self.real, cfg.ell, cfg.samples_per_machine(), rng) {
                    self.uplink.push(MessageKind::SampleItem, Payload::Key(key));
                }
            } else {
                self.restrict(None);
            }
        }
        for env in ctx.inbox() {
            match (&mut self.stage, env.message.kind, env.message.payload) {
                (FollowerStage::AwaitBound | FollowerStage::Selecting(_), MessageKind::Broadcast, payload) => {
                    self.restrict(payload.key());
                }
                (FollowerStage::Selecting(sel), _, _) => match sel.handle(&env.message, rng)? {
                    FollowerStep::Reply(kind, payload) => self.uplink.push(kind, payload),
                    FollowerStep::Output(keys) => self.stage = FollowerStage::Done(keys),
                    FollowerStep::Unhandled => return Err(ctx.unexpected(env)),
                },
                _ => return Err(ctx.unexpected(env)),
            }
        }
        self.uplink.flush(ctx);
        Ok(())
    }

    /// Keeps the keys at or below `bound` as selection candidates and reports their count.
    fn restrict(&mut self, bound: Option<DistKey>) {
        let survivors = bounded(&self.real, bound);
        self.uplink.push(MessageKind::CountReply, Payload::Count(survivors.len() as u64));
        self.stage = FollowerStage::Selecting(FollowerSelection::new(survivors));
    }
}

impl KnnLeader {
    fn step(&mut self, cfg: &KnnConfig, rng: &mut SimRng, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        let k = ctx.machines();
        for env in ctx.inbox() {
            match (&mut self.stage, env.message.kind, env.message.payload) {
                (_, MessageKind::LeaderId, _) if !self.elected => self.elected = self.election.hear(k),
                (LeaderStage::Gathering(samples), MessageKind::SampleItem, Payload::Key(key)) => samples.push(key),
                (LeaderStage::Counting { tally, .. }, MessageKind::CountReply, Payload::Count(n)) => tally.put(env.src, n)?,
                (LeaderStage::Selecting(sel), _, _) => sel.on_message(env, ctx, rng)?,
                _ => return Err(ctx.unexpected(env)),
            }
        }
        if !self.elected {
            return Ok(());
        }
        let m = cfg.samples_per_machine();
        match &mut self.stage {
            LeaderStage::Gathering(samples) if samples.len() as u64 == k as u64 * m => {
                samples.sort_unstable();
                let rank = cfg.pruning_rank(samples.len() as u64);
                let bound = pruning_key(samples, rank).ok_or_else(|| SimError::Internal("no samples".into()))?;
                self.report.sampled = true;
                self.report.pruning_key = Some(bound);
                // a sentinel bound prunes nothing; it stays on this machine
                self.restrict(Some(bound).filter(|b| !b.is_sentinel()), ctx);
            }
            LeaderStage::Counting { tally, .. } if tally.is_complete() => {
                let LeaderStage::Counting { tally, own } =
                    std::mem::replace(&mut self.stage, LeaderStage::Gathering(Vec::new()))
                else {
                    unreachable!()
                };
                let counts = tally.into_values();
                let total: u64 = counts.iter().sum();
                if !self.report.fallback {
                    self.report.survivors = total;
                }
                if total < cfg.ell && self.report.sampled && !self.report.fallback {
                    self.report.fallback = true;
                    self.restrict(None, ctx);
                } else {
                    let sel = LeaderSelection::start(own, counts, cfg.ell, ctx, rng)?;
                    self.stage = LeaderStage::Selecting(sel);
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn restrict(&mut self, bound: Option<DistKey>, ctx: &mut StepContext<'_>) {
        ctx.broadcast(MessageKind::Broadcast, bound.map_or(Payload::Empty, Payload::Key));
        let own = bounded(&self.real, bound);
        let tally = Tally::new(ctx.machines(), own.len() as u64);
        self.stage = LeaderStage::Counting { tally, own };
    }
}

impl Node for KnnNode {
    type Output = NodeReport;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        match &mut self.role {
            Role::Leader(l) => l.step(&self.cfg, &mut self.rng, ctx),
            Role::Follower(f) => f.step(self.index, &self.cfg, self.sampling, &mut self.rng, ctx),
        }
    }

    fn is_done(&self) -> bool {
        match &self.role {
            Role::Leader(l) => matches!(&l.stage, LeaderStage::Selecting(sel) if sel.is_done()),
            Role::Follower(f) => matches!(f.stage, FollowerStage::Done(_)) && f.uplink.is_empty(),
        }
    }

    fn finish(self) -> NodeReport {
        match self.role {
            Role::Leader(l) => match l.stage {
                LeaderStage::Selecting(sel) => {
                    let (keys, trace) = sel.into_parts();
                    NodeReport { keys, leader: Some(LeaderReport { trace, ..l.report }) }
                }
                _ => NodeReport { keys: Vec::new(), leader: Some(l.report) },
            },
            Role::Follower(f) => match f.stage {
                FollowerStage::Done(keys) => NodeReport { keys, leader: None },
                _ => NodeReport::default(),
            },
        }
    }
}

/// Per-machine local ℓ-NN keys (without padding) and the total point count.
pub(crate) fn truncate_all(
    machines: &[Vec<Point>],
    query: &Point,
    ell: u64,
    metric: Metric,
) -> Result<(Vec<Vec<DistKey>>, u64)> {
    check_machines(machines.len())?;
    let n: u64 = machines.iter().map(|m| m.len() as u64).sum();
    if machines.iter().flatten().any(|p| p.id == DistKey::SENTINEL.id) {
        return Err(Error::InvalidDataset("point id 2^64-1 is reserved".into()));
    }
    if n > MAX_KEYS {
        return Err(Error::InvalidConfig(format!("{n} points exceed the 2^40 limit")));
    }
    if ell > n {
        return Err(Error::NotEnoughPoints { requested: ell, available: n });
    }
    let sets = machines.iter().map(|pts| local_keys(pts, query, ell, metric)).collect::<Result<Vec<_>>>()?;
    Ok((sets, n))
}

/// Runs the sampling ℓ-NN protocol over points already placed on machines.
pub fn run_knn(machines: &[Vec<Point>], query: &Point, cfg: &KnnConfig, opts: &SimOptions) -> Result<Outcome> {
    cfg.validate()?;
    let (sets, n) = truncate_all(machines, query, cfg.ell, cfg.metric)?;
    let k = sets.len();
    let nodes = sets.into_iter().enumerate().map(|(i, real)| KnnNode::new(i, real, *cfg, k)).collect();
    let out = run_protocol(nodes, &opts.engine_config(n))?;
    Ok(Outcome::from_run(out))
}

/// What the leader holds after the sampling exchange.
#[derive(Clone, Debug)]
pub struct SampleRound {
    /// All `k·m` samples, ascending.
    pub samples: Vec<DistKey>,
    pub pruning_key: DistKey,
    pub metrics: RunMetrics,
}

struct SampleNode {
    keys: Vec<DistKey>,
    ell: u64,
    m: u64,
    rank_factor: u64,
    rng: SimRng,
    started: bool,
    result: Option<(Vec<DistKey>, DistKey)>,
    collected: Vec<DistKey>,
    uplink: Uplink,
}

impl Node for SampleNode {
    type Output = Option<(Vec<DistKey>, DistKey)>;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        let k = ctx.machines() as u64;
        if !std::mem::replace(&mut self.started, true) {
            let drawn = draw_samples(&self.keys, self.ell, self.m, &mut self.rng);
            if ctx.index() == LEADER {
                self.collected = drawn;
            } else {
                drawn.into_iter().for_each(|key| self.uplink.push(MessageKind::SampleItem, Payload::Key(key)));
            }
        }
        for env in ctx.inbox() {
            match (env.message.kind, env.message.payload) {
                (MessageKind::SampleItem, Payload::Key(key)) if ctx.index() == LEADER => self.collected.push(key),
                (MessageKind::Broadcast, Payload::Key(bound)) => self.result = Some((Vec::new(), bound)),
                _ => return Err(ctx.unexpected(env)),
            }
        }
        if ctx.index() == LEADER && self.result.is_none() && self.collected.len() as u64 == k * self.m {
            let mut samples = std::mem::take(&mut self.collected);
            samples.sort_unstable();
            let rank = (self.rank_factor * u64::from(log2_ceil(self.ell))).min(samples.len() as u64);
            let bound = pruning_key(&samples, rank).ok_or_else(|| SimError::Internal("no samples".into()))?;
            ctx.broadcast(MessageKind::Broadcast, Payload::Key(bound));
            self.result = Some((samples, bound));
        }
        self.uplink.flush(ctx);
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.result.is_some() && self.uplink.is_empty()
    }

    fn finish(self) -> Self::Output {
        self.result
    }
}

/// The sampling exchange on its own: every machine holds exactly ℓ keys
/// (sentinels allowed), streams `m` samples to the leader, and the leader
/// broadcasts the pruning key. Takes `m + 1` rounds.
pub fn sample_phase(truncated: &[Vec<DistKey>], cfg: &KnnConfig, opts: &SimOptions) -> Result<SampleRound> {
    cfg.validate()?;
    check_machines(truncated.len())?;
    if cfg.ell < 2 {
        return Err(Error::InvalidConfig("sampling needs ell >= 2".into()));
    }
    if let Some(bad) = truncated.iter().find(|s| s.len() as u64 != cfg.ell) {
        return Err(Error::InvalidConfig(format!("machine holds {} keys, expected {}", bad.len(), cfg.ell)));
    }
    let n = truncated.len() as u64 * cfg.ell;
    let nodes = truncated
        .iter()
        .enumerate()
        .map(|(i, keys)| {
            let mut keys: Vec<DistKey> = keys.iter().copied().filter(|k| !k.is_sentinel()).collect();
            keys.sort_unstable();
            SampleNode {
                keys,
                ell: cfg.ell,
                m: cfg.samples_per_machine(),
                rank_factor: cfg.rank_factor,
                rng: rng::machine(cfg.seed, i),
                started: false,
                result: None,
                collected: Vec::new(),
                uplink: Uplink::default(),
            }
        })
        .collect();
    let out = run_protocol(nodes, &opts.engine_config(n))?;
    let metrics = out.metrics;
    let (samples, pruning_key) =
        out.outputs.into_iter().next().flatten().ok_or_else(|| SimError::Internal("leader has no result".into()))?;
    Ok(SampleRound { samples, pruning_key, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_knn;
    use crate::sim::Phase;

    fn line(values: &[i64], first_id: u64) -> Vec<Point> {
        values.iter().enumerate().map(|(i, &v)| Point::new(first_id + i as u64, vec![v])).collect()
    }

    fn q(v: i64) -> Point {
        Point::new(u64::MAX - 1, vec![v])
    }

    #[test]
    fn constants_follow_log_ell() {
        let cfg = KnnConfig::new(1024, Metric::L1, 0);
        assert_eq!(cfg.samples_per_machine(), 120);
        assert_eq!(cfg.pruning_rank(u64::MAX), 210);
        let small = KnnConfig::new(4, Metric::L1, 0);
        assert_eq!(small.samples_per_machine(), 24);
        assert_eq!(small.pruning_rank(48), 42);
        assert!(small.uses_sampling(2));
        assert!(!KnnConfig::new(3, Metric::L1, 0).uses_sampling(64));
        let tight = KnnConfig { rank_factor: 100, ..small };
        assert!(!tight.uses_sampling(2));
    }

    #[test]
    fn truncation_pads_and_cuts() {
        let pts = line(&[10, 2, 7], 0);
        let keys = local_truncate(&pts, &q(0), 5, Metric::L1).unwrap();
        assert_eq!(keys.len(), 5);
        assert_eq!(keys.iter().filter(|k| k.is_sentinel()).count(), 2);
        assert_eq!(keys[0], DistKey::new(2, 1));

        let pts = line(&[9, 1, 8, 2, 7, 3, 6, 4, 5, 0], 100);
        let keys = local_truncate(&pts, &q(0), 5, Metric::L1).unwrap();
        let dists: Vec<u64> = keys.iter().map(|k| k.dist).collect();
        assert_eq!(dists, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn prune_bounds() {
        let keys = vec![DistKey::new(1, 1), DistKey::new(4, 2), DistKey::SENTINEL];
        assert_eq!(prune(&keys, DistKey::SENTINEL).len(), 2);
        assert!(prune(&keys, DistKey::new(0, 0)).is_empty());
        assert_eq!(prune(&keys, DistKey::new(4, 2)).len(), 2);
    }

    #[test]
    fn sample_phase_costs_m_plus_one_rounds() {
        let cfg = KnnConfig::new(4, Metric::L1, 3);
        let sets: Vec<Vec<DistKey>> =
            (0..2u64).map(|i| (0..4u64).map(|j| DistKey::new(j, i * 10 + j)).collect()).collect();
        let out = sample_phase(&sets, &cfg, &SimOptions::default()).unwrap();
        assert_eq!(out.samples.len(), 48);
        assert_eq!(out.pruning_key, out.samples[41]);
        assert_eq!(out.metrics.rounds, 25);
        assert_eq!(out.metrics.kind(MessageKind::SampleItem), 24);
        assert_eq!(out.metrics.kind(MessageKind::Broadcast), 1);
    }

    #[test]
    fn small_line_matches_oracle() {
        let machines = vec![line(&[1, 9], 0), line(&[5, 13], 10)];
        let all: Vec<Point> = machines.concat();
        for ell in 0..=4u64 {
            for seed in 0..10 {
                let cfg = KnnConfig::new(ell, Metric::L1, seed);
                let out = run_knn(&machines, &q(6), &cfg, &SimOptions::default()).unwrap();
                let mut want = oracle_knn(&all, &q(6), ell as usize, Metric::L1).unwrap();
                want.sort_unstable();
                let mut got = out.ids();
                got.sort_unstable();
                assert_eq!(got, want, "ell {ell} seed {seed}");
            }
        }
    }

    #[test]
    fn sampling_run_matches_oracle() {
        let machines: Vec<Vec<Point>> = (0..4).map(|m| line(&(0..200).map(|i| (i * 37 + m * 11) % 997).collect::<Vec<_>>(), m as u64 * 1000)).collect();
        let all = machines.concat();
        for seed in 0..5 {
            let cfg = KnnConfig::new(64, Metric::L2Squared, seed);
            let out = run_knn(&machines, &q(500), &cfg, &SimOptions::default()).unwrap();
            assert!(out.report.sampled);
            assert_eq!(out.ids(), oracle_knn(&all, &q(500), 64, Metric::L2Squared).unwrap());
            assert!(out.metrics.phase(Phase::Sample) > 0);
        }
    }

    #[test]
    fn padding_heavy_samples_never_broadcast_the_sentinel() {
        // ell far above each machine's share: most samples are padding
        let machines: Vec<Vec<Point>> = (0..8).map(|m| line(&(0..10).collect::<Vec<_>>(), m * 100)).collect();
        let all = machines.concat();
        let cfg = KnnConfig::new(64, Metric::L1, 2);
        let out = run_knn(&machines, &q(3), &cfg, &SimOptions::logged()).unwrap();
        assert_eq!(out.report.pruning_key, Some(DistKey::SENTINEL));
        assert_eq!(out.ids(), oracle_knn(&all, &q(3), 64, Metric::L1).unwrap());
        for m in out.log.unwrap() {
            if m.message.payload.key().is_some_and(|k| k.is_sentinel()) {
                assert_eq!(m.message.kind, MessageKind::SampleItem);
            }
        }
    }

    #[test]
    fn tiny_rank_forces_fallback() {
        let machines: Vec<Vec<Point>> = (0..4).map(|m| line(&(0..50).collect::<Vec<_>>(), m * 100)).collect();
        let all = machines.concat();
        let cfg = KnnConfig { rank_factor: 1, ..KnnConfig::new(32, Metric::L1, 1) };
        let out = run_knn(&machines, &q(0), &cfg, &SimOptions::default()).unwrap();
        assert!(out.report.fallback);
        assert!(out.report.survivors < 32);
        assert_eq!(out.ids(), oracle_knn(&all, &q(0), 32, Metric::L1).unwrap());
    }

    #[test]
    fn rejects_bad_requests() {
        let machines = vec![line(&[1], 0), line(&[2], 1)];
        let cfg = KnnConfig::new(3, Metric::L1, 0);
        assert!(matches!(run_knn(&machines, &q(0), &cfg, &SimOptions::default()), Err(Error::NotEnoughPoints { .. })));
        assert!(run_knn(&machines[..1], &q(0), &KnnConfig::new(1, Metric::L1, 0), &SimOptions::default()).is_err());
        let bad = KnnConfig { sample_factor: 0, ..KnnConfig::new(1, Metric::L1, 0) };
        assert!(run_knn(&machines, &q(0), &bad, &SimOptions::default()).is_err());
    }
}
