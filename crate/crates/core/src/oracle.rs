//! Centralized brute-force answers used as ground truth.

use crate::error::{Error, Result};
use crate::point::{dist_key, DistKey, Metric, Point, PointId};

/// All keys of `points` relative to `query`, fully sorted.
pub fn sorted_keys(points: &[Point], query: &Point, metric: Metric) -> Result<Vec<DistKey>> {
    let mut keys = points.iter().map(|p| dist_key(p, query, metric)).collect::<Result<Vec<_>>>()?;
    keys.sort_unstable();
    Ok(keys)
}

/// The `ell` nearest points to `query`, by full sort. Ids come back nearest first.
pub fn oracle_knn(points: &[Point], query: &Point, ell: usize, metric: Metric) -> Result<Vec<PointId>> {
    if ell > points.len() {
        return Err(Error::NotEnoughPoints { requested: ell as u64, available: points.len() as u64 });
    }
    let keys = sorted_keys(points, query, metric)?;
    Ok(keys[..ell].iter().map(|k| k.id).collect())
}

/// The `ell` smallest keys of a multiset split over machines, by full sort.
pub fn oracle_select(key_sets: &[Vec<DistKey>], ell: usize) -> Result<Vec<DistKey>> {
    let mut all: Vec<DistKey> = key_sets.iter().flatten().copied().collect();
    if ell > all.len() {
        return Err(Error::NotEnoughPoints { requested: ell as u64, available: all.len() as u64 });
    }
    all.sort_unstable();
    all.truncate(ell);
    Ok(all)
}
