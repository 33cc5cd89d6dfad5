//! The straightforward comparison protocol: every machine streams its local
//! ℓ nearest keys to the leader, which picks the global ℓ smallest.
//!
//! A follower streams without pause, so once the election is over the leader
//! treats a silent round from a follower as the end of that follower's stream.

use crate::error::Result;
use crate::knn::truncate_all;
use crate::outcome::{LeaderReport, NodeReport, Outcome};
use crate::point::{DistKey, Metric, Point};
use crate::select::finished_keys;
use crate::sim::primitives::{Election, Uplink};
use crate::sim::{run_protocol, MessageKind, Node, Payload, SimError, SimOptions, StepContext, LEADER};

enum BaselineNode {
    Leader {
        ell: u64,
        own: Vec<DistKey>,
        received: Vec<DistKey>,
        election: Election,
        /// Rounds observed since the election finished.
        listening: u64,
        streaming: Vec<bool>,
        /// Keys the leader chose from.
        candidates: u64,
        output: Option<Vec<DistKey>>,
    },
    Follower {
        index: usize,
        keys: Vec<DistKey>,
        uplink: Uplink,
        election: Election,
        started: bool,
        output: Option<Vec<DistKey>>,
    },
}

impl Node for BaselineNode {
    type Output = NodeReport;

    fn step(&mut self, ctx: &mut StepContext<'_>) -> Result<(), SimError> {
        let k = ctx.machines();
        match self {
            BaselineNode::Leader { ell, own, received, election, listening, streaming, candidates, output } => {
                if output.is_some() {
                    return Ok(());
                }
                let mut heard = vec![false; k];
                for env in ctx.inbox() {
                    match (env.message.kind, env.message.payload) {
                        (MessageKind::LeaderId, _) if *listening == 0 => {
                            if election.hear(k) {
                                *listening = 1;
                            }
                        }
                        (MessageKind::DataItem, Payload::Key(key)) if streaming[env.src] => {
                            received.push(key);
                            heard[env.src] = true;
                        }
                        _ => return Err(ctx.unexpected(env)),
                    }
                }
                if *listening == 0 {
                    return Ok(());
                }
                if *listening > 1 {
                    for (s, h) in streaming.iter_mut().zip(&heard).skip(1) {
                        *s &= *h;
                    }
                }
                *listening += 1;
                if streaming.iter().skip(1).any(|&s| s) {
                    return Ok(());
                }
                received.extend_from_slice(own);
                *candidates = received.len() as u64;
                received.sort_unstable();
                received.truncate(*ell as usize);
                let payload = received.last().map_or(Payload::Count(0), |&bound| Payload::Key(bound));
                ctx.broadcast(MessageKind::Finished, payload);
                *output = Some(finished_keys(own, payload));
            }
            BaselineNode::Follower { index, keys, uplink, election, started, output } => {
                if !std::mem::replace(started, true) {
                    election.announce(*index, uplink);
                    for key in keys.iter() {
                        uplink.push(MessageKind::DataItem, Payload::Key(*key));
                    }
                }
                for env in ctx.inbox() {
                    match env.message.kind {
                        MessageKind::Finished => *output = Some(finished_keys(keys, env.message.payload)),
                        _ => return Err(ctx.unexpected(env)),
                    }
                }
                uplink.flush(ctx);
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        match self {
            BaselineNode::Leader { output, .. } => output.is_some(),
            BaselineNode::Follower { output, uplink, .. } => output.is_some() && uplink.is_empty(),
        }
    }

    fn finish(self) -> NodeReport {
        match self {
            BaselineNode::Leader { output, candidates, .. } => NodeReport {
                keys: output.unwrap_or_default(),
                leader: Some(LeaderReport { survivors: candidates, ..LeaderReport::default() }),
            },
            BaselineNode::Follower { output, .. } => NodeReport { keys: output.unwrap_or_default(), leader: None },
        }
    }
}

/// Runs the gather-everything protocol over points already placed on machines.
pub fn run_baseline(
    machines: &[Vec<Point>],
    query: &Point,
    ell: u64,
    metric: Metric,
    opts: &SimOptions,
) -> Result<Outcome> {
    let (sets, n) = truncate_all(machines, query, ell, metric)?;
    let k = sets.len();
    let nodes = sets
        .into_iter()
        .enumerate()
        .map(|(index, keys)| {
            if index == LEADER {
                BaselineNode::Leader {
                    ell,
                    own: keys,
                    received: Vec::new(),
                    election: Election::new(),
                    listening: 0,
                    streaming: vec![true; k],
                    candidates: 0,
                    output: None,
                }
            } else {
                BaselineNode::Follower {
                    index,
                    keys,
                    uplink: Uplink::default(),
                    election: Election::new(),
                    started: false,
                    output: None,
                }
            }
        })
        .collect();
    let out = run_protocol(nodes, &opts.engine_config(n))?;
    Ok(Outcome::from_run(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_knn;

    fn line(values: &[i64], first_id: u64) -> Vec<Point> {
        values.iter().enumerate().map(|(i, &v)| Point::new(first_id + i as u64, vec![v])).collect()
    }

    #[test]
    fn two_machines_one_neighbor() {
        let machines = vec![line(&[4], 0), line(&[1], 1)];
        let q = Point::new(99, vec![0]);
        let out = run_baseline(&machines, &q, 1, Metric::L1, &SimOptions::default()).unwrap();
        assert_eq!(out.ids(), vec![1]);
        assert_eq!(out.metrics.kind(MessageKind::DataItem), 1);
        assert_eq!(out.per_machine[0], vec![]);
    }

    #[test]
    fn rounds_track_the_longest_stream() {
        let machines = vec![line(&[0; 3], 0), line(&(0..10).collect::<Vec<_>>(), 10), vec![]];
        let all = machines.concat();
        let q = Point::new(99, vec![5]);
        let out = run_baseline(&machines, &q, 6, Metric::L2Squared, &SimOptions::default()).unwrap();
        assert_eq!(out.ids(), oracle_knn(&all, &q, 6, Metric::L2Squared).unwrap());
        assert_eq!(out.metrics.kind(MessageKind::DataItem), 6);
        // election, six data rounds, one silent round, finished
        assert_eq!(out.metrics.rounds, 9);
    }

    #[test]
    fn nothing_requested() {
        let machines = vec![vec![], vec![]];
        let q = Point::new(0, vec![0]);
        let out = run_baseline(&machines, &q, 0, Metric::L1, &SimOptions::default()).unwrap();
        assert!(out.ids().is_empty());
        assert_eq!(out.metrics.kind(MessageKind::DataItem), 0);
    }
}
