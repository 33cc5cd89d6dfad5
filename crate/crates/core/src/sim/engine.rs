use std::io::Write;

use thiserror::Error;

use super::message::{Bandwidth, Envelope, Message, MessageKind, Payload};
use super::metrics::{Phase, RunMetrics};
use super::MAX_ROUNDS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("round {round}: machine {src} sent twice to machine {dst}")]
    LinkOverload { round: u64, src: usize, dst: usize },

    #[error("round {round}: {bits}-bit payload from {src} to {dst} exceeds the {limit}-bit link")]
    Oversize { round: u64, src: usize, dst: usize, bits: u32, limit: u32 },

    #[error("round {round}: machine {src} addressed invalid destination {dst}")]
    BadDestination { round: u64, src: usize, dst: usize },

    #[error("round {round}: machine {node} received unexpected {kind} from {src}")]
    Unexpected { round: u64, node: usize, src: usize, kind: MessageKind },

    #[error("no termination after {0} rounds")]
    RoundLimit(u64),

    #[error("internal protocol error: {0}")]
    Internal(String),
}

impl SimError {
    /// True when a protocol broke the model rather than hitting an internal fault.
    pub fn is_violation(&self) -> bool {
        !matches!(self, SimError::Internal(_))
    }
}

/// One machine's behaviour.
///
/// Each round the engine hands the machine every message sent to it in the
/// previous round; the machine computes locally and queues at most one message
/// per outgoing link.
pub trait Node {
    type Output;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError>;

    fn is_done(&self) -> bool;

    fn finish(self) -> Self::Output;
}

pub struct StepContext<'a> {
    index: usize,
    k: usize,
    round: u64,
    inbox: &'a [Envelope],
    outbox: &'a mut Vec<Envelope>,
}

impl<'a> StepContext<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn machines(&self) -> usize {
        self.k
    }

    /// Round in which anything sent now travels (1-based).
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn inbox(&self) -> &'a [Envelope] {
        self.inbox
    }

    pub fn send(&mut self, dst: usize, kind: MessageKind, payload: Payload) {
        self.outbox.push(Envelope { src: self.index, dst, message: Message::new(kind, payload) });
    }

    /// Sends the same message to every other machine.
    pub fn broadcast(&mut self, kind: MessageKind, payload: Payload) {
        let me = self.index;
        for dst in (0..self.k).filter(|&d| d != me) {
            self.send(dst, kind, payload);
        }
    }

    pub fn unexpected(&self, env: &Envelope) -> SimError {
        SimError::Unexpected { round: self.round, node: self.index, src: env.src, kind: env.message.kind }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub bandwidth: Bandwidth,
    pub max_rounds: u64,
    pub record_log: bool,
}

impl EngineConfig {
    pub fn new(bandwidth: Bandwidth) -> Self {
        EngineConfig { bandwidth, max_rounds: MAX_ROUNDS, record_log: false }
    }

    pub fn with_log(mut self, record: bool) -> Self {
        self.record_log = record;
        self
    }

    pub fn with_max_rounds(mut self, max_rounds: u64) -> Self {
        self.max_rounds = max_rounds;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoggedMessage {
    pub round: u64,
    pub src: usize,
    pub dst: usize,
    pub message: Message,
}

#[derive(Debug)]
pub struct RunOutput<T> {
    pub outputs: Vec<T>,
    pub metrics: RunMetrics,
    pub log: Option<Vec<LoggedMessage>>,
}

impl<T> RunOutput<T> {
    /// Writes the message log as CSV `round,kind,src,dst`.
    pub fn write_log_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "round,kind,src,dst")?;
        for m in self.log.iter().flatten() {
            writeln!(w, "{},{},{},{}", m.round, m.message.kind, m.src, m.dst)?;
        }
        Ok(())
    }
}

/// Runs `nodes` in lock-step until every node is done and nothing is in flight.
///
/// A round is counted for every step in which at least one message was sent,
/// or in which nothing was sent while some node was still running. The final
/// quiet step that observes termination is not a round.
pub fn run_protocol<N: Node>(mut nodes: Vec<N>, config: &EngineConfig) -> Result<RunOutput<N::Output>, SimError> {
    let k = nodes.len();
    let mut metrics = RunMetrics::default();
    let mut log = config.record_log.then(Vec::new);
    let mut inboxes: Vec<Vec<Envelope>> = vec![Vec::new(); k];
    let mut sent: Vec<Envelope> = Vec::new();
    let mut outbox: Vec<Envelope> = Vec::new();
    let mut used = vec![false; k];

    loop {
        let round = metrics.rounds + 1;
        sent.clear();
        for (index, node) in nodes.iter_mut().enumerate() {
            outbox.clear();
            let mut ctx = StepContext { index, k, round, inbox: &inboxes[index], outbox: &mut outbox };
            node.step(&mut ctx)?;
            used.iter_mut().for_each(|u| *u = false);
            for env in &outbox {
                if env.dst >= k || env.dst == index {
                    return Err(SimError::BadDestination { round, src: index, dst: env.dst });
                }
                if std::mem::replace(&mut used[env.dst], true) {
                    return Err(SimError::LinkOverload { round, src: index, dst: env.dst });
                }
                if !config.bandwidth.admits(&env.message.payload) {
                    return Err(SimError::Oversize {
                        round,
                        src: index,
                        dst: env.dst,
                        bits: env.message.payload.bits(),
                        limit: config.bandwidth.bits(),
                    });
                }
            }
            sent.extend_from_slice(&outbox);
        }

        if sent.is_empty() && nodes.iter().all(Node::is_done) {
            break;
        }
        if metrics.rounds >= config.max_rounds {
            return Err(SimError::RoundLimit(metrics.rounds));
        }
        let phase = sent.first().map_or(Phase::Idle, |e| Phase::of(e.message.kind));
        metrics.record_round(phase);

        inboxes.iter_mut().for_each(Vec::clear);
        for env in &sent {
            metrics.record_message(env.message.kind);
            if let Some(log) = log.as_mut() {
                log.push(LoggedMessage { round, src: env.src, dst: env.dst, message: env.message });
            }
            inboxes[env.dst].push(*env);
        }
    }

    Ok(RunOutput { outputs: nodes.into_iter().map(Node::finish).collect(), metrics, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scripted node: sends `script[t]` at its `t`-th step, done when the script runs out.
    struct Scripted {
        script: Vec<Vec<(usize, Payload)>>,
        t: usize,
        received: usize,
    }

    impl Scripted {
        fn new(script: Vec<Vec<(usize, Payload)>>) -> Self {
            Scripted { script, t: 0, received: 0 }
        }
    }

    impl Node for Scripted {
        type Output = usize;

        fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
            self.received += ctx.inbox().len();
            if let Some(sends) = self.script.get(self.t) {
                for &(dst, payload) in sends {
                    ctx.send(dst, MessageKind::Broadcast, payload);
                }
            }
            self.t += 1;
            Ok(())
        }

        fn is_done(&self) -> bool {
            self.t >= self.script.len()
        }

        fn finish(self) -> usize {
            self.received
        }
    }

    fn cfg() -> EngineConfig {
        EngineConfig::new(Bandwidth::fitting_key(1024)).with_log(true)
    }

    #[test]
    fn idle_protocol_takes_no_rounds() {
        let nodes = (0..3).map(|_| Scripted::new(vec![])).collect();
        let out = run_protocol(nodes, &cfg()).unwrap();
        assert_eq!((out.metrics.rounds, out.metrics.messages), (0, 0));
    }

    #[test]
    fn broadcast_costs_one_round() {
        let k = 5;
        let mut nodes: Vec<_> = (0..k).map(|_| Scripted::new(vec![])).collect();
        nodes[0] = Scripted::new(vec![(1..k).map(|d| (d, Payload::Count(9))).collect()]);
        let out = run_protocol(nodes, &cfg()).unwrap();
        assert_eq!(out.metrics.rounds, 1);
        assert_eq!(out.metrics.messages, (k - 1) as u64);
        assert_eq!(out.outputs, vec![0, 1, 1, 1, 1]);
    }

    #[test]
    fn streaming_m_items_takes_m_rounds() {
        let m = 7;
        let nodes = vec![Scripted::new(vec![]), Scripted::new(vec![vec![(0, Payload::Count(1))]; m])];
        let out = run_protocol(nodes, &cfg()).unwrap();
        assert_eq!(out.metrics.rounds, m as u64);
        assert_eq!(out.outputs[0], m);
        let rounds: Vec<u64> = out.log.unwrap().iter().map(|l| l.round).collect();
        assert_eq!(rounds, (1..=m as u64).collect::<Vec<_>>());
    }

    #[test]
    fn two_messages_on_one_link_is_a_violation() {
        let nodes = vec![
            Scripted::new(vec![vec![(1, Payload::Count(1)), (1, Payload::Count(2))]]),
            Scripted::new(vec![]),
        ];
        let err = run_protocol(nodes, &cfg()).unwrap_err();
        assert_eq!(err, SimError::LinkOverload { round: 1, src: 0, dst: 1 });
        assert!(err.is_violation());
    }

    #[test]
    fn oversized_payload_is_a_violation() {
        let nodes = vec![Scripted::new(vec![vec![(1, Payload::Count(1))]]), Scripted::new(vec![])];
        let tight = EngineConfig::new(Bandwidth::for_population(1024, 1));
        assert!(matches!(run_protocol(nodes, &tight), Err(SimError::Oversize { bits: 64, limit: 10, .. })));
    }

    #[test]
    fn self_and_out_of_range_sends_are_rejected() {
        let nodes = vec![Scripted::new(vec![vec![(0, Payload::Empty)]]), Scripted::new(vec![])];
        assert!(matches!(run_protocol(nodes, &cfg()), Err(SimError::BadDestination { dst: 0, .. })));
        let nodes = vec![Scripted::new(vec![vec![(5, Payload::Empty)]]), Scripted::new(vec![])];
        assert!(matches!(run_protocol(nodes, &cfg()), Err(SimError::BadDestination { dst: 5, .. })));
    }

    struct Forever;

    impl Node for Forever {
        type Output = ();
        fn step(&mut self, _: &mut StepContext<'_>) -> Result<(), SimError> {
            Ok(())
        }
        fn is_done(&self) -> bool {
            false
        }
        fn finish(self) {}
    }

    #[test]
    fn runaway_protocol_hits_the_guard() {
        let err = run_protocol(vec![Forever, Forever], &cfg().with_max_rounds(50)).unwrap_err();
        assert_eq!(err, SimError::RoundLimit(50));
        let err = run_protocol(vec![Forever, Forever], &EngineConfig::new(Bandwidth::from_bits(128))).unwrap_err();
        assert_eq!(err, SimError::RoundLimit(MAX_ROUNDS));
    }

    #[test]
    fn log_csv() {
        let nodes = vec![Scripted::new(vec![vec![(1, Payload::Empty)]]), Scripted::new(vec![])];
        let out = run_protocol(nodes, &cfg()).unwrap();
        let mut buf = Vec::new();
        out.write_log_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "round,kind,src,dst\n1,Broadcast,0,1\n");
    }
}
