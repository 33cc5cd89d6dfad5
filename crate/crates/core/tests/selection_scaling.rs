use rand::Rng;
use rayon::prelude::*;

use kmachine::bench::median;
use kmachine::rng;
use kmachine::sim::{log2_ceil, SimOptions};
use kmachine::{run_selection, DistKey, RunMetrics};

const K: usize = 16;
const TRIALS: u64 = 30;
const MESSAGE_C: u64 = 40;

/// `n` distinct keys spread uniformly at random over `K` machines, selecting the median.
fn trial(n: u64, t: u64) -> RunMetrics {
    let mut r = rng::stream(0xc0ffee, &[n, t]);
    let mut sets = vec![Vec::new(); K];
    for id in 0..n {
        sets[r.gen_range(0..K)].push(DistKey::new(r.gen_range(0..1 << 40), id));
    }
    let ell = n / 2;
    let out = run_selection(&sets, ell, rng::derive(0xc0ffee, &[n, t, 1]), &SimOptions::default()).unwrap();
    let mut all: Vec<DistKey> = sets.concat();
    all.sort_unstable();
    assert_eq!(out.keys(), all[..ell as usize]);
    out.metrics
}

#[test]
fn rounds_grow_logarithmically_in_n() {
    let run = |n: u64| -> Vec<RunMetrics> { (0..TRIALS).into_par_iter().map(|t| trial(n, t)).collect() };
    let small = run(1 << 10);
    let large = run(1 << 20);
    let med = |ms: &[RunMetrics]| median(&ms.iter().map(|m| m.rounds).collect::<Vec<_>>());
    let ratio = med(&large) / med(&small);
    assert!(ratio <= 3.0, "median rounds {} vs {}: ratio {ratio}", med(&large), med(&small));

    for (n, ms) in [(1u64 << 10, &small), (1 << 20, &large)] {
        let bound = MESSAGE_C * K as u64 * u64::from(log2_ceil(n));
        for m in ms {
            assert!(m.messages <= bound, "n={n}: {} messages > {bound}", m.messages);
        }
    }
}
