//! Parameter sweeps: many seeded trials per cell, aggregated.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{partition, PartitionPolicy};
use crate::error::{Error, Result};
use crate::generate::{generate, query_point, Distribution, GenSpec};
use crate::oracle::sorted_keys;
use crate::outcome::Algorithm;
use crate::point::Metric;
use crate::query::run_algorithm;
use crate::rng;
use crate::sim::SimOptions;
use crate::verify::TrialReport;

/// Oracle checks are on by default up to this many points.
pub const AUTO_VERIFY_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchSpec {
    pub ks: Vec<usize>,
    pub ells: Vec<u64>,
    pub ns: Vec<u64>,
    pub ds: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub metric: Metric,
    pub algos: Vec<Algorithm>,
    pub distribution: Distribution,
    pub partition: PartitionPolicy,
    /// `None` verifies exactly the cells with at most [`AUTO_VERIFY_LIMIT`] points.
    pub verify: Option<bool>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            ks: vec![16],
            ells: vec![1024],
            ns: vec![1 << 18],
            ds: vec![1],
            trials: 30,
            seed: 0,
            metric: Metric::L2Squared,
            algos: vec![Algorithm::Knn, Algorithm::Baseline],
            distribution: Distribution::Uniform,
            partition: PartitionPolicy::UniformRandom,
            verify: None,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.ks.is_empty() || self.ells.is_empty() || self.ns.is_empty() || self.ds.is_empty() || self.algos.is_empty() {
            return bad("every sweep list needs at least one value");
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k < 2) {
            return Err(Error::TooFewMachines(k));
        }
        if self.ells.contains(&0) || self.ns.contains(&0) || self.ds.contains(&0) {
            return bad("sweep values must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        let max_ell = *self.ells.iter().max().expect("non-empty");
        if let Some(&n) = self.ns.iter().find(|&&n| n < max_ell) {
            return Err(Error::NotEnoughPoints { requested: max_ell, available: n });
        }
        Ok(())
    }

    fn verifies(&self, n: u64) -> bool {
        self.verify.unwrap_or(n <= AUTO_VERIFY_LIMIT)
    }
}

const DATA_TAG: u64 = 0x6461_7461;
const RUN_TAG: u64 = 0x0072_756e;

/// Trials sharing one dataset: every ℓ and algorithm for a `(k, n, d, trial)`.
fn run_job(spec: &BenchSpec, k: usize, n: u64, d: usize, trial: u64) -> Result<Vec<TrialReport>> {
    let data_seed = rng::derive(spec.seed, &[DATA_TAG, k as u64, n, d as u64, trial]);
    let gen = GenSpec { distribution: spec.distribution, ..GenSpec::new(n, d, k as u64, data_seed) };
    let ds = generate(&gen)?;
    let query = query_point(&gen, 0);
    let machines = partition(&ds, k, spec.partition, data_seed)?;
    let oracle = if spec.verifies(n) { Some(sorted_keys(ds.points(), &query, spec.metric)?) } else { None };
    let mut reports = Vec::with_capacity(spec.ells.len() * spec.algos.len());
    for &ell in &spec.ells {
        let run_seed = rng::derive(spec.seed, &[RUN_TAG, k as u64, ell, n, d as u64, trial]);
        for &algo in &spec.algos {
            let out = run_algorithm(algo, &machines, &query, ell, spec.metric, run_seed, &SimOptions::default())?;
            let report = TrialReport::new(k, ell, n, d, algo, trial, &out);
            reports.push(match &oracle {
                Some(keys) => {
                    let want: Vec<u64> = keys[..ell as usize].iter().map(|key| key.id).collect();
                    report.score(&out, &want)
                }
                None => report,
            });
        }
    }
    Ok(reports)
}

fn position<T: PartialEq>(list: &[T], x: &T) -> usize {
    list.iter().position(|y| y == x).unwrap_or(usize::MAX)
}

/// Runs every trial of every cell. Reports come back sorted by cell, then trial,
/// regardless of scheduling.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<TrialReport>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &k in &spec.ks {
        for &n in &spec.ns {
            for &d in &spec.ds {
                jobs.extend((0..spec.trials).map(|t| (k, n, d, t)));
            }
        }
    }
    let batches = jobs
        .into_par_iter()
        .map(|(k, n, d, t)| run_job(spec, k, n, d, t))
        .collect::<Result<Vec<_>>>()?;
    let mut reports: Vec<TrialReport> = batches.into_iter().flatten().collect();
    reports.sort_by_key(|r| {
        (
            position(&spec.ks, &r.k),
            position(&spec.ells, &r.l),
            position(&spec.ns, &r.n),
            position(&spec.ds, &r.d),
            position(&spec.algos, &r.algo),
            r.trial,
        )
    });
    Ok(reports)
}

/// Trials whose output differed from the oracle.
pub fn failures(reports: &[TrialReport]) -> Vec<&TrialReport> {
    reports.iter().filter(|r| r.correct == Some(false)).collect()
}

/// CSV with header `k,l,n,algo,trial,rounds,messages,survivors,fallback,correct`.
pub fn write_csv(reports: &[TrialReport], writer: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "l", "n", "algo", "trial", "rounds", "messages", "survivors", "fallback", "correct"])?;
    for r in reports {
        let correct = match r.correct {
            Some(true) => "true",
            Some(false) => "false",
            None => "na",
        };
        w.write_record([
            r.k.to_string(),
            r.l.to_string(),
            r.n.to_string(),
            r.algo.to_string(),
            r.trial.to_string(),
            r.rounds.to_string(),
            r.messages.to_string(),
            r.survivors.to_string(),
            r.fallback.to_string(),
            correct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub max: u64,
}

impl Stats {
    pub fn of(values: &[u64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        Some(Stats { median: median_sorted(&v), mean: v.iter().sum::<u64>() as f64 / v.len() as f64, max: v[v.len() - 1] })
    }
}

/// Median of sorted values; the mean of the middle pair for even lengths.
pub fn median_sorted(v: &[u64]) -> f64 {
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] as f64 + v[m] as f64) / 2.0
    }
}

pub fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    median_sorted(&v)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub k: usize,
    pub l: u64,
    pub n: u64,
    pub d: usize,
    pub algo: Algorithm,
    pub trials: u64,
    pub rounds: Stats,
    pub messages: Stats,
    pub survivors: Stats,
    pub fallbacks: u64,
    pub incorrect: u64,
    pub unverified: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub k: usize,
    pub l: u64,
    pub n: u64,
    pub d: usize,
    pub baseline_rounds: f64,
    pub knn_rounds: f64,
    /// Median baseline rounds over median knn rounds.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub ratios: Vec<RatioRow>,
}

/// Aggregates sorted reports cell by cell.
pub fn summarize(reports: &[TrialReport]) -> Summary {
    let mut cells: Vec<CellSummary> = Vec::new();
    for group in reports.chunk_by(|a, b| (a.k, a.l, a.n, a.d, a.algo) == (b.k, b.l, b.n, b.d, b.algo)) {
        let r0 = &group[0];
        let pick = |f: fn(&TrialReport) -> u64| Stats::of(&group.iter().map(f).collect::<Vec<_>>()).expect("non-empty group");
        cells.push(CellSummary {
            k: r0.k,
            l: r0.l,
            n: r0.n,
            d: r0.d,
            algo: r0.algo,
            trials: group.len() as u64,
            rounds: pick(|r| r.rounds),
            messages: pick(|r| r.messages),
            survivors: pick(|r| r.survivors),
            fallbacks: group.iter().filter(|r| r.fallback).count() as u64,
            incorrect: group.iter().filter(|r| r.correct == Some(false)).count() as u64,
            unverified: group.iter().filter(|r| r.correct.is_none()).count() as u64,
        });
    }
    let ratios = cells
        .iter()
        .filter(|c| c.algo == Algorithm::Baseline)
        .filter_map(|b| {
            let knn = cells.iter().find(|c| c.algo == Algorithm::Knn && (c.k, c.l, c.n, c.d) == (b.k, b.l, b.n, b.d))?;
            Some(RatioRow {
                k: b.k,
                l: b.l,
                n: b.n,
                d: b.d,
                baseline_rounds: b.rounds.median,
                knn_rounds: knn.rounds.median,
                ratio: b.rounds.median / knn.rounds.median,
            })
        })
        .collect();
    Summary { cells, ratios }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchSpec {
        BenchSpec {
            ks: vec![2, 4],
            ells: vec![8, 32],
            ns: vec![500],
            trials: 3,
            seed: 5,
            algos: Algorithm::ALL.to_vec(),
            ..BenchSpec::default()
        }
    }

    #[test]
    fn rows_per_cell_and_order() {
        let spec = small();
        let reports = run_bench(&spec).unwrap();
        assert_eq!(reports.len(), 2 * 2 * 3 * 3);
        assert!(reports.iter().all(|r| r.correct == Some(true)));
        assert_eq!((reports[0].k, reports[0].l, reports[0].algo, reports[0].trial), (2, 8, Algorithm::Knn, 0));
        assert_eq!((reports[1].k, reports[1].trial), (2, 1));
        let summary = summarize(&reports);
        assert_eq!(summary.cells.len(), 12);
        assert_eq!(summary.ratios.len(), 4);
        assert!(summary.cells.iter().all(|c| c.trials == 3));
    }

    #[test]
    fn csv_is_reproducible() {
        let render = || {
            let mut buf = Vec::new();
            write_csv(&run_bench(&small()).unwrap(), &mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("k,l,n,algo,trial,rounds,messages,survivors,fallback,correct\n"));
    }

    #[test]
    fn validation() {
        assert!(BenchSpec { ks: vec![1], ..small() }.validate().is_err());
        assert!(BenchSpec { trials: 0, ..small() }.validate().is_err());
        assert!(BenchSpec { ells: vec![600], ..small() }.validate().is_err());
        assert!(BenchSpec { algos: vec![], ..small() }.validate().is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3, 1, 2]), 2.0);
        assert_eq!(median(&[4, 1, 3, 2]), 2.5);
        let s = Stats::of(&[1, 2, 6]).unwrap();
        assert_eq!((s.median, s.mean, s.max), (2.0, 3.0, 6));
    }
}
