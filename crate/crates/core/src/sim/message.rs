use std::fmt;

use serde::Serialize;

use crate::point::DistKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MessageKind {
    GetCount,
    CountReply,
    PickPivot,
    PivotReply,
    Broadcast,
    Finished,
    SampleItem,
    DataItem,
    LeaderId,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        MessageKind::GetCount,
        MessageKind::CountReply,
        MessageKind::PickPivot,
        MessageKind::PivotReply,
        MessageKind::Broadcast,
        MessageKind::Finished,
        MessageKind::SampleItem,
        MessageKind::DataItem,
        MessageKind::LeaderId,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::GetCount => "GetCount",
            MessageKind::CountReply => "CountReply",
            MessageKind::PickPivot => "PickPivot",
            MessageKind::PivotReply => "PivotReply",
            MessageKind::Broadcast => "Broadcast",
            MessageKind::Finished => "Finished",
            MessageKind::SampleItem => "SampleItem",
            MessageKind::DataItem => "DataItem",
            MessageKind::LeaderId => "LeaderId",
        }
    }

    /// Kinds that carry information derived from data points.
    pub fn is_data_plane(self) -> bool {
        matches!(self, MessageKind::SampleItem | MessageKind::PivotReply | MessageKind::DataItem)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which end of the selection range moved to the last pivot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RangeUpdate {
    LowerToPivot,
    UpperToPivot,
}

/// Message contents. There is deliberately no variant that can hold coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Payload {
    Empty,
    Key(DistKey),
    Count(u64),
    Id(u64),
    Update(RangeUpdate),
}

impl Payload {
    pub fn bits(&self) -> u32 {
        match self {
            Payload::Empty => 0,
            Payload::Key(_) => 128,
            Payload::Count(_) | Payload::Id(_) => 64,
            Payload::Update(_) => 1,
        }
    }

    pub fn key(&self) -> Option<DistKey> {
        match *self {
            Payload::Key(k) => Some(k),
            _ => None,
        }
    }

    pub fn count(&self) -> Option<u64> {
        match *self {
            Payload::Count(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub payload: Payload,
}

impl Message {
    pub fn new(kind: MessageKind, payload: Payload) -> Self {
        Message { kind, payload }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub src: usize,
    pub dst: usize,
    pub message: Message,
}

/// Per-link capacity in bits per round: `B = c * ceil(log2 n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bandwidth {
    bits: u32,
}

impl Bandwidth {
    pub fn from_bits(bits: u32) -> Self {
        Bandwidth { bits }
    }

    /// `c * ceil(log2 max(n, 2))` bits.
    pub fn for_population(n: u64, c: u32) -> Self {
        Bandwidth { bits: c.saturating_mul(log2_ceil(n.max(2))) }
    }

    /// The smallest `c` for which one [`DistKey`] fits in a message.
    pub fn fitting_key(n: u64) -> Self {
        let word = log2_ceil(n.max(2));
        Self::for_population(n, Payload::Key(DistKey::SENTINEL).bits().div_ceil(word))
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn admits(&self, payload: &Payload) -> bool {
        payload.bits() <= self.bits
    }
}

/// `ceil(log2 x)` for `x >= 1`; zero for `x <= 1`.
pub fn log2_ceil(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_ceil_values() {
        let cases = [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1024, 10), (1025, 11), (1 << 40, 40)];
        for (x, want) in cases {
            assert_eq!(log2_ceil(x), want, "x = {x}");
        }
    }

    #[test]
    fn default_bandwidth_fits_one_key() {
        for n in [0u64, 2, 10, 1000, 1 << 20, 1 << 40] {
            let b = Bandwidth::fitting_key(n);
            assert!(b.admits(&Payload::Key(DistKey::SENTINEL)), "n = {n}");
            assert_eq!(b.bits() % log2_ceil(n.max(2)), 0);
        }
        // n = 1024: words of 10 bits, 13 of them hold 128 bits
        assert_eq!(Bandwidth::fitting_key(1024).bits(), 130);
        assert!(!Bandwidth::for_population(1024, 1).admits(&Payload::Count(3)));
    }
}
