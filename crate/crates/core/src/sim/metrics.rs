use std::collections::BTreeMap;
use std::fmt;

use serde::ser::{Serialize, SerializeMap, Serializer};

use super::message::MessageKind;

/// Protocol stage a round is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Election,
    Truncate,
    Sample,
    Prune,
    Select,
    Gather,
    Finish,
    /// Rounds in which nobody sent anything but some machine was still running.
    Idle,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Election,
        Phase::Truncate,
        Phase::Sample,
        Phase::Prune,
        Phase::Select,
        Phase::Gather,
        Phase::Finish,
        Phase::Idle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Election => "election",
            Phase::Truncate => "truncate",
            Phase::Sample => "sample",
            Phase::Prune => "prune",
            Phase::Select => "select",
            Phase::Gather => "gather",
            Phase::Finish => "finish",
            Phase::Idle => "idle",
        }
    }

    /// Truncation and pruning are local, so only their broadcasts show up here.
    pub fn of(kind: MessageKind) -> Phase {
        match kind {
            MessageKind::LeaderId => Phase::Election,
            MessageKind::SampleItem => Phase::Sample,
            MessageKind::Broadcast => Phase::Prune,
            MessageKind::GetCount
            | MessageKind::CountReply
            | MessageKind::PickPivot
            | MessageKind::PivotReply => Phase::Select,
            MessageKind::DataItem => Phase::Gather,
            MessageKind::Finished => Phase::Finish,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact counters for one protocol execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub rounds: u64,
    pub messages: u64,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
    pub phase_rounds: BTreeMap<Phase, u64>,
}

impl Default for RunMetrics {
    fn default() -> Self {
        RunMetrics {
            rounds: 0,
            messages: 0,
            messages_by_kind: MessageKind::ALL.iter().map(|&k| (k, 0)).collect(),
            phase_rounds: Phase::ALL.iter().map(|&p| (p, 0)).collect(),
        }
    }
}

impl RunMetrics {
    pub fn kind(&self, kind: MessageKind) -> u64 {
        self.messages_by_kind.get(&kind).copied().unwrap_or(0)
    }

    pub fn phase(&self, phase: Phase) -> u64 {
        self.phase_rounds.get(&phase).copied().unwrap_or(0)
    }

    pub(crate) fn record_round(&mut self, phase: Phase) {
        self.rounds += 1;
        *self.phase_rounds.entry(phase).or_insert(0) += 1;
    }

    pub(crate) fn record_message(&mut self, kind: MessageKind) {
        self.messages += 1;
        *self.messages_by_kind.entry(kind).or_insert(0) += 1;
    }

    /// Flat JSON object: `rounds`, `messages`, `messages.<Kind>`, `phase.<name>`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("metrics serialize")
    }
}

impl Serialize for RunMetrics {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer
            .serialize_map(Some(2 + self.messages_by_kind.len() + self.phase_rounds.len()))?;
        map.serialize_entry("rounds", &self.rounds)?;
        map.serialize_entry("messages", &self.messages)?;
        for (kind, count) in &self.messages_by_kind {
            map.serialize_entry(&format!("messages.{kind}"), count)?;
        }
        for (phase, count) in &self.phase_rounds {
            map.serialize_entry(&format!("phase.{phase}"), count)?;
        }
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_flat() {
        let mut m = RunMetrics::default();
        m.record_round(Phase::Election);
        m.record_message(MessageKind::LeaderId);
        let v = m.to_json();
        let obj = v.as_object().unwrap();
        assert!(obj.values().all(|v| v.is_u64()));
        assert_eq!(obj["rounds"], 1);
        assert_eq!(obj["messages.LeaderId"], 1);
        assert_eq!(obj["phase.election"], 1);
        assert_eq!(obj["phase.sample"], 0);
    }
}
