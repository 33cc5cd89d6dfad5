//! One query against a dataset, end to end: partition, run, score, label.

use std::collections::HashMap;

use serde::Serialize;

use crate::baseline::run_baseline;
use crate::dataset::{partition, Dataset, PartitionPolicy};
use crate::error::{Error, Result};
use crate::knn::{run_knn, KnnConfig};
use crate::label::{assign_label, LabelMode};
use crate::oracle::oracle_knn;
use crate::outcome::{Algorithm, Outcome};
use crate::point::{dist_key, Metric, Point, PointId};
use crate::select::run_selection;
use crate::sim::{RunMetrics, SimOptions};

/// Runs `algo` for the `ell` nearest points to `query` over points already on machines.
pub fn run_algorithm(
    algo: Algorithm,
    machines: &[Vec<Point>],
    query: &Point,
    ell: u64,
    metric: Metric,
    seed: u64,
    opts: &SimOptions,
) -> Result<Outcome> {
    match algo {
        Algorithm::Knn => run_knn(machines, query, &KnnConfig::new(ell, metric, seed), opts),
        Algorithm::Baseline => run_baseline(machines, query, ell, metric, opts),
        Algorithm::Selection => {
            let keys = machines
                .iter()
                .map(|pts| pts.iter().map(|p| dist_key(p, query, metric)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let mut out = run_selection(&keys, ell, seed, opts)?;
            out.report.survivors = keys.iter().map(|k| k.len() as u64).sum();
            Ok(out)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QueryRequest {
    pub k: usize,
    pub ell: u64,
    pub seed: u64,
    pub metric: Metric,
    pub algo: Algorithm,
    pub partition: PartitionPolicy,
    pub verify: bool,
    pub label_mode: LabelMode,
    pub sim: SimOptions,
}

impl QueryRequest {
    pub fn new(k: usize, ell: u64, seed: u64) -> Self {
        QueryRequest {
            k,
            ell,
            seed,
            metric: Metric::L2Squared,
            algo: Algorithm::Knn,
            partition: PartitionPolicy::UniformRandom,
            verify: false,
            label_mode: LabelMode::Classify,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QueryResult {
    pub algo: Algorithm,
    pub k: usize,
    pub l: u64,
    pub n: u64,
    /// Nearest first.
    pub neighbor_ids: Vec<PointId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
    pub survivors: u64,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

/// Partitions `ds`, runs the request, and optionally checks the answer against the oracle.
pub fn run_query(ds: &Dataset, query: &Point, req: &QueryRequest) -> Result<(QueryResult, Outcome)> {
    if query.dim() != ds.dim() {
        return Err(Error::DimensionMismatch { left: query.dim(), right: ds.dim() });
    }
    let machines = partition(ds, req.k, req.partition, req.seed)?;
    let outcome = run_algorithm(req.algo, &machines, query, req.ell, req.metric, req.seed, &req.sim)?;
    let neighbor_ids = outcome.ids();
    let correct = if req.verify {
        Some(oracle_knn(ds.points(), query, req.ell as usize, req.metric)? == neighbor_ids)
    } else {
        None
    };
    let label = if ds.has_labels() && !neighbor_ids.is_empty() {
        let by_id: HashMap<PointId, i64> = ds.points().iter().filter_map(|p| Some((p.id, p.label?))).collect();
        let labels: Vec<i64> = neighbor_ids.iter().filter_map(|id| by_id.get(id).copied()).collect();
        Some(assign_label(&labels, req.label_mode)?)
    } else {
        None
    };
    let result = QueryResult {
        algo: req.algo,
        k: req.k,
        l: req.ell,
        n: ds.len() as u64,
        neighbor_ids,
        label,
        survivors: outcome.report.survivors,
        fallback: outcome.report.fallback,
        correct,
        metrics: outcome.metrics.clone(),
    };
    Ok((result, outcome))
}
