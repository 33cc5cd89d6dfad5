//! The k-machine model: `k` fully connected machines computing in synchronous
//! rounds, each directed link carrying at most one `B`-bit message per round.

mod engine;
mod message;
mod metrics;
pub mod primitives;

pub use engine::{run_protocol, EngineConfig, LoggedMessage, Node, RunOutput, SimError, StepContext};
pub use message::{log2_ceil, Bandwidth, Envelope, Message, MessageKind, Payload, RangeUpdate};
pub use metrics::{Phase, RunMetrics};

/// Machine index of the leader. Min-index election always picks machine 0.
pub const LEADER: usize = 0;

/// Default non-termination guard.
pub const MAX_ROUNDS: u64 = 1_000_000;

/// Knobs shared by every protocol run.
#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    /// Keep every delivered message for inspection.
    pub record_log: bool,
    pub max_rounds: u64,
    /// Bandwidth constant `c` in `B = c * ceil(log2 n)`. `None` picks the
    /// smallest `c` that fits one key.
    pub bandwidth_factor: Option<u32>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { record_log: false, max_rounds: MAX_ROUNDS, bandwidth_factor: None }
    }
}

impl SimOptions {
    pub fn logged() -> Self {
        SimOptions { record_log: true, ..Self::default() }
    }

    pub fn engine_config(&self, population: u64) -> EngineConfig {
        let bandwidth = match self.bandwidth_factor {
            Some(c) => Bandwidth::for_population(population, c),
            None => Bandwidth::fitting_key(population),
        };
        EngineConfig { bandwidth, max_rounds: self.max_rounds, record_log: self.record_log }
    }
}
