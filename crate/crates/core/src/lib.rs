//! Simulator of the k-machine model with distributed selection and
//! ℓ-nearest-neighbor protocols, plus the oracles used to check them.

pub mod baseline;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod generate;
pub mod knn;
pub mod label;
pub mod oracle;
pub mod outcome;
pub mod point;
pub mod query;
pub mod rng;
pub mod select;
pub mod sim;
pub mod verify;

pub use baseline::run_baseline;
pub use dataset::{partition, Dataset, PartitionPolicy};
pub use error::{Error, Result};
pub use knn::{run_knn, KnnConfig};
pub use label::{assign_label, LabelMode};
pub use oracle::{oracle_knn, oracle_select};
pub use outcome::{Algorithm, LeaderReport, Outcome, SelectionTrace};
pub use point::{dist_key, distance, DistKey, Metric, Point, PointId};
pub use select::{pick_pivot, run_selection};
pub use sim::{RunMetrics, SimOptions};
pub use query::{run_algorithm, run_query, QueryRequest, QueryResult};
