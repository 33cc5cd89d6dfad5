//! Synthetic datasets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::point::{Point, PointId, MAX_COORD, MAX_DIM};
use crate::rng::{self, SimRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distribution {
    /// Independent uniform coordinates in `[0, 2^30)`.
    #[default]
    Uniform,
    /// Tight blobs around a handful of uniform centers.
    Clustered,
    /// Exponentially skewed towards the origin.
    Geometric,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Clustered => "clustered",
            Distribution::Geometric => "geometric",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "clustered" => Ok(Distribution::Clustered),
            "geometric" => Ok(Distribution::Geometric),
            other => Err(Error::InvalidConfig(format!("unknown distribution `{other}`"))),
        }
    }
}

const CLUSTERS: usize = 8;
const CLUSTER_RADIUS: i64 = 1 << 16;
const GEOMETRIC_SCALE: f64 = (1u64 << 20) as f64;

/// Draws coordinate vectors from one distribution.
#[derive(Debug)]
pub struct Sampler {
    dist: Distribution,
    dim: usize,
    centers: Vec<Vec<i64>>,
}

impl Sampler {
    pub fn new(dist: Distribution, dim: usize, rng: &mut SimRng) -> Self {
        let centers = match dist {
            Distribution::Clustered => (0..CLUSTERS).map(|_| uniform(dim, rng)).collect(),
            _ => Vec::new(),
        };
        Sampler { dist, dim, centers }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<i64> {
        match self.dist {
            Distribution::Uniform => uniform(self.dim, rng),
            Distribution::Clustered => {
                let c = &self.centers[rng.gen_range(0..self.centers.len())];
                c.iter()
                    .map(|&x| (x + rng.gen_range(-CLUSTER_RADIUS..=CLUSTER_RADIUS)).clamp(0, MAX_COORD - 1))
                    .collect()
            }
            Distribution::Geometric => (0..self.dim)
                .map(|_| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    ((-u.ln() * GEOMETRIC_SCALE) as i64).min(MAX_COORD - 1)
                })
                .collect(),
        }
    }
}

fn uniform(dim: usize, rng: &mut SimRng) -> Vec<i64> {
    (0..dim).map(|_| rng.gen_range(0..MAX_COORD)).collect()
}

/// Id of the `index`-th generated point: origin machine in the high 32 bits,
/// position on that machine in the low 32.
pub fn point_id(index: u64, k: u64) -> PointId {
    ((index % k) << 32) | (index / k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenSpec {
    pub n: u64,
    pub dim: usize,
    /// Machine count used for id assignment.
    pub k: u64,
    pub seed: u64,
    pub distribution: Distribution,
    /// Attach labels in `0..classes` when set.
    pub classes: Option<u32>,
}

impl GenSpec {
    pub fn new(n: u64, dim: usize, k: u64, seed: u64) -> Self {
        GenSpec { n, dim, k, seed, distribution: Distribution::Uniform, classes: None }
    }
}

pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    if spec.dim == 0 || spec.dim > MAX_DIM {
        return Err(Error::InvalidConfig(format!("dimension must be in 1..={MAX_DIM}, got {}", spec.dim)));
    }
    if spec.k == 0 {
        return Err(Error::InvalidConfig("id assignment needs k >= 1".into()));
    }
    if spec.n / spec.k >= 1 << 32 {
        return Err(Error::InvalidConfig(format!("{} points do not fit the id layout", spec.n)));
    }
    if spec.classes == Some(0) {
        return Err(Error::InvalidConfig("classes must be at least 1".into()));
    }
    let mut rng = rng::stream(spec.seed, &[0x0067_656e, spec.distribution as u64]);
    let sampler = Sampler::new(spec.distribution, spec.dim, &mut rng);
    let points = (0..spec.n)
        .map(|i| {
            let p = Point::new(point_id(i, spec.k), sampler.sample(&mut rng));
            match spec.classes {
                Some(c) => p.with_label(i64::from(rng.gen_range(0..c))),
                None => p,
            }
        })
        .collect();
    Dataset::new(points, spec.dim)
}

/// A query point drawn from the same distribution family, independent of the data.
pub fn query_point(spec: &GenSpec, trial: u64) -> Point {
    let mut rng = rng::stream(spec.seed, &[0x0067_656e, spec.distribution as u64]);
    let sampler = Sampler::new(spec.distribution, spec.dim, &mut rng);
    let mut rng = rng::stream(spec.seed, &[0x7175_6572, trial]);
    Point::new(PointId::MAX, sampler.sample(&mut rng))
}
