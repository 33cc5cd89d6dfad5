//! Datasets, the CSV file format, and partitioning across machines.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::point::{Point, MAX_COORD, MAX_DIM};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    points: Vec<Point>,
    dim: usize,
}

impl Dataset {
    /// Validates ids, dimensions and coordinate bounds.
    pub fn new(points: Vec<Point>, dim: usize) -> Result<Self> {
        if dim > MAX_DIM {
            return Err(Error::InvalidDataset(format!("dimension {dim} exceeds {MAX_DIM}")));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.coords.len() != dim {
                return Err(Error::DimensionMismatch { left: p.coords.len(), right: dim });
            }
            if p.id == u64::MAX {
                return Err(Error::InvalidDataset("id 2^64-1 is reserved".into()));
            }
            if !seen.insert(p.id) {
                return Err(Error::InvalidDataset(format!("duplicate id {}", p.id)));
            }
            if let Some(c) = p.coords.iter().find(|c| c.abs() > MAX_COORD) {
                return Err(Error::InvalidDataset(format!(
                    "point {}: coordinate {c} exceeds magnitude 2^30",
                    p.id
                )));
            }
        }
        Ok(Dataset { points, dim })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.label.is_some())
    }

    pub fn get(&self, id: u64) -> Option<&Point> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv { path: path.into(), source },
            Error::InvalidDataset(msg) => {
                Error::InvalidDataset(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Parses `id,label,c0,...,c{d-1}`; an empty label field means unlabeled.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let csv_err = |source| Error::Csv { path: "<input>".into(), source };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "label" {
            return Err(Error::InvalidDataset("header must start with `id,label`".into()));
        }
        let dim = headers.len() - 2;
        for (i, h) in headers.iter().skip(2).enumerate() {
            if h != format!("c{i}") {
                return Err(Error::InvalidDataset(format!("unexpected column `{h}`, expected `c{i}`")));
            }
        }
        let mut points = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let line = row + 2;
            let field = |i: usize| -> Result<i64> {
                record[i].parse::<i64>().map_err(|_| {
                    Error::InvalidDataset(format!("line {line}: `{}` is not an integer", &record[i]))
                })
            };
            let id = record[0]
                .parse::<u64>()
                .map_err(|_| Error::InvalidDataset(format!("line {line}: bad id `{}`", &record[0])))?;
            let label = if record[1].is_empty() { None } else { Some(field(1)?) };
            let coords = (2..record.len()).map(field).collect::<Result<Vec<_>>>()?;
            points.push(Point { id, coords, label });
        }
        Dataset::new(points, dim)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
        self.to_writer(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::Csv { path: path.into(), source },
            other => other,
        })
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let csv_err = |source| Error::Csv { path: "<output>".into(), source };
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.dim).map(|i| format!("c{i}")));
        wtr.write_record(&header).map_err(csv_err)?;
        let mut row = Vec::with_capacity(self.dim + 2);
        for p in &self.points {
            row.clear();
            row.push(p.id.to_string());
            row.push(p.label.map(|l| l.to_string()).unwrap_or_default());
            row.extend(p.coords.iter().map(i64::to_string));
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| csv_err(e.into()))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PartitionPolicy {
    #[default]
    UniformRandom,
    RoundRobin,
}

impl std::str::FromStr for PartitionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "random" => Ok(PartitionPolicy::UniformRandom),
            "round-robin" | "rr" => Ok(PartitionPolicy::RoundRobin),
            other => Err(Error::InvalidConfig(format!("unknown partition policy `{other}`"))),
        }
    }
}

/// Splits the dataset over `k` machines. Every point lands on exactly one machine.
pub fn partition(ds: &Dataset, k: usize, policy: PartitionPolicy, seed: u64) -> Result<Vec<Vec<Point>>> {
    if k < 2 {
        return Err(Error::TooFewMachines(k));
    }
    let mut machines = vec![Vec::with_capacity(ds.len() / k + 1); k];
    match policy {
        PartitionPolicy::RoundRobin => {
            for (i, p) in ds.points.iter().enumerate() {
                machines[i % k].push(p.clone());
            }
        }
        PartitionPolicy::UniformRandom => {
            let mut rng = rng::stream(seed, &[0x7061_7274]);
            for p in &ds.points {
                machines[rng.gen_range(0..k)].push(p.clone());
            }
        }
    }
    Ok(machines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: u64) -> Dataset {
        Dataset::new((0..n).map(|i| Point::new(i, vec![i as i64])).collect(), 1).unwrap()
    }

    #[test]
    fn round_robin_splits_evenly() {
        let parts = partition(&line(10), 2, PartitionPolicy::RoundRobin, 0).unwrap();
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5]);
    }

    #[test]
    fn uniform_partition_is_a_disjoint_cover_and_deterministic() {
        let ds = line(10);
        let a = partition(&ds, 3, PartitionPolicy::UniformRandom, 42).unwrap();
        let b = partition(&ds, 3, PartitionPolicy::UniformRandom, 42).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<u64> = a.iter().flatten().map(|p| p.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn one_machine_is_rejected() {
        assert!(matches!(
            partition(&line(3), 1, PartitionPolicy::RoundRobin, 0),
            Err(Error::TooFewMachines(1))
        ));
    }

    #[test]
    fn validation() {
        let dup = vec![Point::new(1, vec![0]), Point::new(1, vec![2])];
        assert!(Dataset::new(dup, 1).is_err());
        assert!(Dataset::new(vec![Point::new(1, vec![0, 0])], 1).is_err());
        assert!(Dataset::new(vec![Point::new(1, vec![MAX_COORD + 1])], 1).is_err());
        assert!(Dataset::new(vec![Point::new(u64::MAX, vec![0])], 1).is_err());
        assert!(Dataset::new(vec![], 17).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(
            vec![Point::new(4, vec![1, -2]).with_label(3), Point::new(9, vec![0, 7])],
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "id,label,c0,c1\n4,3,1,-2\n9,,0,7\n");
        assert_eq!(Dataset::from_reader(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn csv_errors() {
        assert!(Dataset::from_reader("x,label,c0\n1,,2\n".as_bytes()).is_err());
        assert!(Dataset::from_reader("id,label,c0\n1,,abc\n".as_bytes()).is_err());
        assert!(Dataset::from_reader("id,label,c0\n1,,2,3\n".as_bytes()).is_err());
        let empty = Dataset::from_reader("id,label,c0,c1\n".as_bytes()).unwrap();
        assert_eq!((empty.len(), empty.dim()), (0, 2));
    }
}
