//! Points, metrics and the `(distance, id)` ordering key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PointId = u64;

/// Largest accepted coordinate magnitude.
pub const MAX_COORD: i64 = 1 << 30;
/// Largest accepted dimension.
pub const MAX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub id: PointId,
    pub coords: Vec<i64>,
    pub label: Option<i64>,
}

impl Point {
    pub fn new(id: PointId, coords: Vec<i64>) -> Self {
        Point { id, coords, label: None }
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    L1,
    /// Euclidean distance, reported squared so it stays an integer.
    L2Squared,
    LInf,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2Squared, Metric::LInf];

    pub fn distance(self, a: &[i64], b: &[i64]) -> Result<u64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
        }
        let mut diffs = a.iter().zip(b).map(|(&x, &y)| (i128::from(x) - i128::from(y)).unsigned_abs());
        let total = match self {
            Metric::L1 => diffs.try_fold(0u128, |acc, d| acc.checked_add(d)),
            Metric::L2Squared => {
                diffs.try_fold(0u128, |acc, d| d.checked_mul(d).and_then(|sq| acc.checked_add(sq)))
            }
            Metric::LInf => Some(diffs.max().unwrap_or(0)),
        };
        total.and_then(|t| u64::try_from(t).ok()).ok_or(Error::Overflow)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2Squared => "l2",
            Metric::LInf => "linf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "manhattan" => Ok(Metric::L1),
            "l2" | "l2sq" | "euclidean" => Ok(Metric::L2Squared),
            "linf" | "chebyshev" => Ok(Metric::LInf),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

pub fn distance(p: &Point, q: &Point, metric: Metric) -> Result<u64> {
    metric.distance(&p.coords, &q.coords)
}

/// A point's distance to the query paired with its id.
///
/// Ordering is lexicographic on `(dist, id)`, so keys of distinct points never
/// compare equal even when the distances tie. This pair is the only thing
/// machines ever exchange about a data point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DistKey {
    pub dist: u64,
    pub id: PointId,
}

impl DistKey {
    /// Padding value that sorts after every real key. Never a valid point.
    pub const SENTINEL: DistKey = DistKey { dist: u64::MAX, id: u64::MAX };

    pub const fn new(dist: u64, id: PointId) -> Self {
        DistKey { dist, id }
    }

    pub fn is_sentinel(&self) -> bool {
        *self == Self::SENTINEL
    }
}

impl fmt::Display for DistKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sentinel() {
            f.write_str("(inf)")
        } else {
            write!(f, "({}, #{})", self.dist, self.id)
        }
    }
}

pub fn dist_key(p: &Point, q: &Point, metric: Metric) -> Result<DistKey> {
    Ok(DistKey::new(distance(p, q, metric)?, p.id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: u64, c: &[i64]) -> Point {
        Point::new(id, c.to_vec())
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&pt(0, &[0, 0]), &pt(1, &[3, 4]), Metric::L2Squared).unwrap(), 25);
        for m in Metric::ALL {
            assert_eq!(distance(&pt(0, &[7]), &pt(1, &[7]), m).unwrap(), 0);
        }
        assert_eq!(distance(&pt(0, &[1, -2]), &pt(1, &[4, 2]), Metric::L1).unwrap(), 7);
        assert_eq!(distance(&pt(0, &[1, -2]), &pt(1, &[4, 2]), Metric::LInf).unwrap(), 4);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = distance(&pt(0, &[1, 2]), &pt(1, &[1]), Metric::L1).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { left: 2, right: 1 }));
    }

    #[test]
    fn overflow_is_reported() {
        let a = pt(0, &[i64::MIN; 4]);
        let b = pt(1, &[i64::MAX; 4]);
        assert!(matches!(distance(&a, &b, Metric::L2Squared), Err(Error::Overflow)));
        assert!(matches!(distance(&a, &b, Metric::L1), Err(Error::Overflow)));
        // largest in-range L2 case: 16 dims, every component differs by 2^30 - 1
        let a = pt(0, &[0; MAX_DIM]);
        let b = pt(1, &[MAX_COORD - 1; MAX_DIM]);
        assert!(distance(&a, &b, Metric::L2Squared).is_ok());
    }

    #[test]
    fn ties_break_by_id() {
        let q = pt(99, &[0]);
        let a = dist_key(&pt(3, &[5]), &q, Metric::L1).unwrap();
        let b = dist_key(&pt(2, &[-5]), &q, Metric::L1).unwrap();
        assert_ne!(a, b);
        assert!(b < a);
        assert_eq!(dist_key(&pt(5, &[0]), &q, Metric::L1).unwrap(), DistKey::new(0, 5));
        assert!(DistKey::new(1, 1000) < DistKey::new(2, 0));
        assert!(DistKey::new(u64::MAX - 1, u64::MAX) < DistKey::SENTINEL);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("l3".parse::<Metric>().is_err());
    }
}
