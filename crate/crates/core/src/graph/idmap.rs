use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::GraphError;

/// Bijection between raw ids found in input files and dense `0..n` ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    originals: Vec<u64>,
    dense: HashMap<u64, usize>,
}

impl IdMap {
    /// Dense ids follow the order of `originals`.
    pub fn from_originals(originals: Vec<u64>) -> Self {
        let dense = originals.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        Self { originals, dense }
    }

    /// Dense ids assigned in ascending raw-id order.
    pub fn from_sorted_unique(mut raw: Vec<u64>) -> Self {
        raw.sort_unstable();
        raw.dedup();
        Self::from_originals(raw)
    }

    /// Identity map over `0..n`.
    pub fn identity(n: usize) -> Self {
        Self::from_originals((0..n as u64).collect())
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn dense(&self, original: u64) -> Option<usize> {
        self.dense.get(&original).copied()
    }

    pub fn original(&self, dense: usize) -> u64 {
        self.originals[dense]
    }

    pub fn originals(&self) -> &[u64] {
        &self.originals
    }

    /// Keeps the listed dense ids (in that order) and renumbers them `0..`.
    pub fn select(&self, kept: &[usize]) -> Self {
        Self::from_originals(kept.iter().map(|&d| self.originals[d]).collect())
    }

    /// Writes `original_id dense_id` lines.
    pub fn write(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = String::with_capacity(self.len() * 12);
        for (d, o) in self.originals.iter().enumerate() {
            let _ = writeln!(out, "{o} {d}");
        }
        fs::write(path, out).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |reason| GraphError::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                content: line.to_string(),
                reason,
            };
            let mut it = line.split_whitespace();
            let (Some(o), Some(d), None) = (it.next(), it.next(), it.next()) else {
                return Err(malformed("expected `original_id dense_id`"));
            };
            let o: u64 = o.parse().map_err(|_| malformed("original id is not an integer"))?;
            let d: usize = d.parse().map_err(|_| malformed("dense id is not an integer"))?;
            pairs.push((d, o));
        }
        pairs.sort_unstable();
        for (k, &(d, _)) in pairs.iter().enumerate() {
            if d != k {
                return Err(GraphError::Invalid(format!(
                    "{}: dense ids are not contiguous at {k}",
                    path.display()
                )));
            }
        }
        Ok(Self::from_originals(pairs.into_iter().map(|(_, o)| o).collect()))
    }
}
