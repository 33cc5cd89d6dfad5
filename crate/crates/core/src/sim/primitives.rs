//! Leader election, broadcast and gather on the complete graph, plus the
//! small building blocks the protocols share.

use std::collections::VecDeque;

use super::engine::{run_protocol, EngineConfig, Node, RunOutput, SimError, StepContext};
use super::message::{Bandwidth, Message, MessageKind, Payload};
use super::metrics::RunMetrics;
use super::LEADER;

/// Follower-side FIFO towards the leader, drained one message per round.
#[derive(Debug, Default)]
pub(crate) struct Uplink {
    queue: VecDeque<Message>,
}

impl Uplink {
    pub(crate) fn push(&mut self, kind: MessageKind, payload: Payload) {
        self.queue.push_back(Message::new(kind, payload));
    }

    pub(crate) fn flush(&mut self, ctx: &mut StepContext<'_>) {
        if let Some(m) = self.queue.pop_front() {
            ctx.send(LEADER, m.kind, m.payload);
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Leader-side collection of exactly one value per machine; slot 0 is the leader's own.
#[derive(Debug)]
pub(crate) struct Tally<T> {
    slots: Vec<Option<T>>,
    missing: usize,
}

impl<T> Tally<T> {
    pub(crate) fn new(k: usize, own: T) -> Self {
        let mut slots: Vec<Option<T>> = (0..k).map(|_| None).collect();
        slots[LEADER] = Some(own);
        Tally { slots, missing: k - 1 }
    }

    pub(crate) fn put(&mut self, src: usize, value: T) -> Result<(), SimError> {
        let slot = &mut self.slots[src];
        if slot.is_some() {
            return Err(SimError::Internal(format!("machine {src} answered twice")));
        }
        *slot = Some(value);
        self.missing -= 1;
        Ok(())
    }

    pub(crate) fn is_complete(&self) -> bool {
        self.missing == 0
    }

    pub(crate) fn into_values(self) -> Vec<T> {
        self.slots.into_iter().map(|s| s.expect("tally complete")).collect()
    }
}

/// Min-index election: every follower announces itself to machine 0.
#[derive(Debug)]
pub(crate) struct Election {
    announced: bool,
    heard: usize,
}

impl Election {
    pub(crate) fn new() -> Self {
        Election { announced: false, heard: 0 }
    }

    /// Follower side: queue the announcement once.
    pub(crate) fn announce(&mut self, index: usize, uplink: &mut Uplink) {
        if !std::mem::replace(&mut self.announced, true) {
            uplink.push(MessageKind::LeaderId, Payload::Id(index as u64));
        }
    }

    /// Leader side: returns true once every follower has been heard from.
    pub(crate) fn hear(&mut self, k: usize) -> bool {
        self.heard += 1;
        self.heard == k - 1
    }
}

struct ElectNode {
    index: usize,
    uplink: Uplink,
    election: Election,
    elected: bool,
}

impl Node for ElectNode {
    type Output = usize;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        if self.index == LEADER {
            for env in ctx.inbox() {
                if env.message.kind != MessageKind::LeaderId {
                    return Err(ctx.unexpected(env));
                }
                self.elected = self.election.hear(ctx.machines());
            }
        } else {
            self.election.announce(self.index, &mut self.uplink);
            self.uplink.flush(ctx);
            self.elected = self.uplink.is_empty();
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.elected
    }

    fn finish(self) -> usize {
        LEADER
    }
}

fn check_k(k: usize) -> Result<(), crate::Error> {
    if k < 2 {
        return Err(crate::Error::TooFewMachines(k));
    }
    Ok(())
}

/// Elects the minimum-index machine: 1 round, `k - 1` messages.
pub fn elect_leader(k: usize) -> crate::Result<(usize, RunMetrics)> {
    check_k(k)?;
    let nodes = (0..k)
        .map(|index| ElectNode { index, uplink: Uplink::default(), election: Election::new(), elected: false })
        .collect();
    let out = run_protocol(nodes, &EngineConfig::new(Bandwidth::fitting_key(k as u64)))?;
    Ok((out.outputs[LEADER], out.metrics))
}

struct BroadcastNode {
    index: usize,
    value: Option<Payload>,
    sent: bool,
}

impl Node for BroadcastNode {
    type Output = Option<Payload>;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        if self.index == LEADER {
            if !std::mem::replace(&mut self.sent, true) {
                ctx.broadcast(MessageKind::Broadcast, self.value.expect("leader holds the value"));
            }
        } else if let Some(env) = ctx.inbox().first() {
            self.value = Some(env.message.payload);
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        if self.index == LEADER {
            self.sent
        } else {
            self.value.is_some()
        }
    }

    fn finish(self) -> Option<Payload> {
        self.value
    }
}

/// Leader (machine 0) sends one item to everyone: 1 round, `k - 1` messages.
pub fn broadcast(k: usize, value: Payload, bandwidth: Bandwidth) -> crate::Result<(Vec<Payload>, RunMetrics)> {
    check_k(k)?;
    let nodes = (0..k)
        .map(|index| BroadcastNode { index, value: (index == LEADER).then_some(value), sent: false })
        .collect();
    let out = run_protocol(nodes, &EngineConfig::new(bandwidth))?;
    Ok((out.outputs.into_iter().map(|v| v.expect("delivered")).collect(), out.metrics))
}

struct GatherNode {
    index: usize,
    expected: usize,
    items: Vec<Payload>,
    uplink: Uplink,
    received: Vec<Vec<Payload>>,
}

impl Node for GatherNode {
    type Output = Vec<Vec<Payload>>;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        if self.index == LEADER {
            for env in ctx.inbox() {
                self.received[env.src].push(env.message.payload);
            }
        } else {
            for item in self.items.drain(..) {
                self.uplink.push(MessageKind::DataItem, item);
            }
            self.uplink.flush(ctx);
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        if self.index == LEADER {
            self.received.iter().skip(1).all(|r| r.len() == self.expected)
        } else {
            self.items.is_empty() && self.uplink.is_empty()
        }
    }

    fn finish(self) -> Vec<Vec<Payload>> {
        self.received
    }
}

/// Every machine streams its `m` items to the leader: `m` rounds, `(k - 1) m` messages.
///
/// Returns, at the leader, the items of every machine; the leader's own are local.
pub fn gather(items: Vec<Vec<Payload>>, bandwidth: Bandwidth) -> crate::Result<(Vec<Vec<Payload>>, RunMetrics)> {
    let k = items.len();
    check_k(k)?;
    let m = items[0].len();
    if items.iter().any(|v| v.len() != m) {
        return Err(crate::Error::InvalidConfig("gather needs the same item count on every machine".into()));
    }
    let mut received = vec![Vec::new(); k];
    received[LEADER] = items[LEADER].clone();
    let nodes = items
        .into_iter()
        .enumerate()
        .map(|(index, items)| GatherNode {
            index,
            expected: m,
            items: if index == LEADER { Vec::new() } else { items },
            uplink: Uplink::default(),
            received: if index == LEADER { received.clone() } else { Vec::new() },
        })
        .collect();
    let out = run_protocol(nodes, &EngineConfig::new(bandwidth))?;
    let RunOutput { mut outputs, metrics, .. } = out;
    Ok((outputs.swap_remove(LEADER), metrics))
}
