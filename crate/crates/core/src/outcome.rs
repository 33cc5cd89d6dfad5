use serde::Serialize;

use crate::point::{DistKey, PointId};
use crate::sim::{LoggedMessage, RunMetrics};

/// What the leader learned while driving the selection loop.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SelectionTrace {
    /// Pivot iterations executed.
    pub iterations: u64,
    /// Keys in the live range at the start of each iteration.
    pub range_sizes: Vec<u64>,
    /// Pivots the leader drew from its own keys, at no communication cost.
    pub local_pivots: u64,
}

/// Leader-side facts about a nearest-neighbor run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeaderReport {
    pub sampled: bool,
    pub pruning_key: Option<DistKey>,
    /// Candidates left after pruning with the sampled key.
    pub survivors: u64,
    pub fallback: bool,
    pub trace: SelectionTrace,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct NodeReport {
    pub keys: Vec<DistKey>,
    pub leader: Option<LeaderReport>,
}

/// Result of one protocol execution.
#[derive(Debug)]
pub struct Outcome {
    /// Keys each machine output, ascending.
    pub per_machine: Vec<Vec<DistKey>>,
    pub metrics: RunMetrics,
    pub report: LeaderReport,
    pub log: Option<Vec<LoggedMessage>>,
}

impl Outcome {
    pub(crate) fn from_run(out: crate::sim::RunOutput<NodeReport>) -> Self {
        let mut report = LeaderReport::default();
        let per_machine = out
            .outputs
            .into_iter()
            .map(|r| {
                if let Some(l) = r.leader {
                    report = l;
                }
                r.keys
            })
            .collect();
        Outcome { per_machine, metrics: out.metrics, report, log: out.log }
    }

    /// Union of all outputs, ascending.
    pub fn keys(&self) -> Vec<DistKey> {
        let mut all: Vec<DistKey> = self.per_machine.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Output ids, nearest first.
    pub fn ids(&self) -> Vec<PointId> {
        self.keys().into_iter().map(|k| k.id).collect()
    }
}

/// The protocols a query can run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Sampling, pruning, then selection.
    #[default]
    Knn,
    /// Stream local ℓ-NN to the leader.
    Baseline,
    /// Selection over every point's key, no truncation.
    Selection,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Knn, Algorithm::Baseline, Algorithm::Selection];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Baseline => "baseline",
            Algorithm::Selection => "selection",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| crate::Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}
