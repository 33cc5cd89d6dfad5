//! Checking protocol runs: trial records, a goodness-of-fit test, and inputs
//! built to stress the edge cases.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{partition, Dataset, PartitionPolicy};
use crate::error::{Error, Result};
use crate::generate::{generate, Distribution, GenSpec};
use crate::oracle::oracle_knn;
use crate::outcome::{Algorithm, Outcome};
use crate::point::{Metric, Point, PointId, MAX_COORD, MAX_DIM};
use crate::sim::RunMetrics;

/// One protocol execution, scored against the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub k: usize,
    pub l: u64,
    pub n: u64,
    pub d: usize,
    pub algo: Algorithm,
    pub trial: u64,
    pub rounds: u64,
    pub messages: u64,
    pub survivors: u64,
    pub fallback: bool,
    /// `None` when the run was not checked.
    pub correct: Option<bool>,
    #[serde(skip)]
    pub metrics: RunMetrics,
}

impl TrialReport {
    pub fn new(k: usize, l: u64, n: u64, d: usize, algo: Algorithm, trial: u64, outcome: &Outcome) -> Self {
        TrialReport {
            k,
            l,
            n,
            d,
            algo,
            trial,
            rounds: outcome.metrics.rounds,
            messages: outcome.metrics.messages,
            survivors: outcome.report.survivors,
            fallback: outcome.report.fallback,
            correct: None,
            metrics: outcome.metrics.clone(),
        }
    }

    /// Scores the run against ids computed independently, nearest first.
    pub fn score(mut self, outcome: &Outcome, expected: &[PointId]) -> Self {
        self.correct = Some(outcome.ids() == expected);
        self
    }
}

/// Upper-tail p-value of Pearson's chi-square test of `observed` against the
/// uniform law over its cells.
pub fn chi_square_uniform(observed: &[u64], trials: u64) -> Result<f64> {
    let cells = observed.len();
    if cells < 2 {
        return Err(Error::Degenerate(format!("{cells} cells")));
    }
    let sum: u64 = observed.iter().sum();
    if sum != trials {
        return Err(Error::Degenerate(format!("observed counts sum to {sum}, not {trials}")));
    }
    let expected = trials as f64 / cells as f64;
    if expected < 5.0 {
        return Err(Error::Degenerate(format!("expected count {expected:.2} per cell is below 5")));
    }
    let stat: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let law = ChiSquared::new((cells - 1) as f64).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(law.sf(stat))
}

/// A ready-to-run query with its oracle answer.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub machines: Vec<Vec<Point>>,
    pub query: Point,
    pub ell: u64,
    pub metric: Metric,
    /// Oracle ids, nearest first, computed from the undistributed points.
    pub expected: Vec<PointId>,
}

impl Instance {
    pub fn new(name: impl Into<String>, machines: Vec<Vec<Point>>, query: Point, ell: u64, metric: Metric) -> Result<Self> {
        let all: Vec<Point> = machines.concat();
        let expected = oracle_knn(&all, &query, ell as usize, metric)?;
        Ok(Instance { name: name.into(), machines, query, ell, metric, expected })
    }

    pub fn n(&self) -> u64 {
        self.machines.iter().map(|m| m.len() as u64).sum()
    }

    pub fn dim(&self) -> usize {
        self.query.dim()
    }
}

fn points(coords: impl IntoIterator<Item = Vec<i64>>, first_id: u64) -> Vec<Point> {
    coords.into_iter().enumerate().map(|(i, c)| Point::new(first_id + i as u64, c)).collect()
}

fn split(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<Point>>> {
    partition(ds, k, PartitionPolicy::UniformRandom, seed)
}

/// Inputs that exercise ties, skew and empty machines.
pub fn adversarial_instances() -> Result<Vec<Instance>> {
    let q1 = |v: i64| Point::new(PointId::MAX, vec![v]);
    let mut out = Vec::new();

    // every point identical, ids decide everything
    let same: Vec<Point> = points((0..64).map(|_| vec![42, -7]), 1000);
    let same = Dataset::new(same, 2)?;
    out.push(Instance::new("all-duplicates", split(&same, 4, 1)?, Point::new(PointId::MAX, vec![0, 0]), 32, Metric::L2Squared)?);
    out.push(Instance::new("all-duplicates-l1", split(&same, 4, 1)?, Point::new(PointId::MAX, vec![42, -7]), 1, Metric::L1)?);

    // one machine holds everything
    let mut machines = vec![Vec::new(); 8];
    machines[3] = points((0..300).map(|i| vec![(i * 7919) % 1000]), 0);
    out.push(Instance::new("one-holder", machines.clone(), q1(500), 40, Metric::L1)?);
    out.push(Instance::new("one-holder-all", machines, q1(500), 300, Metric::L1)?);

    // leader and most followers empty
    let mut machines = vec![Vec::new(); 6];
    machines[2] = points((0..100).map(|i| vec![i]), 0);
    machines[5] = points((0..100).map(|i| vec![i]), 100);
    out.push(Instance::new("sparse-machines", machines, q1(50), 25, Metric::LInf)?);

    // ell = 1 with a tie at the minimum
    let mut machines = vec![points([vec![5], vec![9]], 10), points([vec![5], vec![1]], 20), Vec::new()];
    machines[2] = points([vec![7]], 5);
    out.push(Instance::new("ell-one-tie", machines, q1(6), 1, Metric::L1)?);

    // ell = n
    let ds = generate(&GenSpec::new(96, 3, 4, 5))?;
    out.push(Instance::new("ell-equals-n", split(&ds, 4, 5)?, Point::new(PointId::MAX, vec![0, 0, 0]), 96, Metric::L1)?);

    // skewed distributions
    for (dist, metric) in [(Distribution::Clustered, Metric::L2Squared), (Distribution::Geometric, Metric::L1)] {
        let spec = GenSpec { distribution: dist, ..GenSpec::new(4000, 2, 8, 9) };
        let ds = generate(&spec)?;
        let q = crate::generate::query_point(&spec, 0);
        out.push(Instance::new(format!("{dist}"), split(&ds, 8, 9)?, q, 100, metric)?);
    }

    // distances near the top of the 64-bit range
    let far = MAX_COORD - 1;
    let corners = points((0..40).map(|i| (0..MAX_DIM).map(|j| if (i >> (j % 6)) & 1 == 1 { far } else { 0 }).collect()), 0);
    let ds = Dataset::new(corners, MAX_DIM)?;
    out.push(Instance::new("extreme-coords", split(&ds, 4, 2)?, Point::new(PointId::MAX, vec![0; MAX_DIM]), 10, Metric::L2Squared)?);

    // nothing to find
    out.push(Instance::new("empty", vec![Vec::new(); 4], q1(0), 0, Metric::L1)?);

    Ok(out)
}
