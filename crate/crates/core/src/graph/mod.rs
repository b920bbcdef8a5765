//! Loading, filtering and indexing of the interaction graph and the
//! knowledge graph.

mod idmap;
mod interactions;
mod knowledge;
mod sampling;
mod split;

use std::fs;
use std::path::Path;

pub use idmap::IdMap;
pub use interactions::{
    build_norm_adjacency, k_core_filter, load_dense_interactions, load_interactions, InteractionGraph,
    Interactions, KCore, NormAdjacency,
};
pub use knowledge::{load_dense_triplets, load_triplets, KgEdge, KnowledgeGraph, LoadedKg};
pub use sampling::{sample_bpr_triples, BprTriple};
pub use split::{split, DatasetSplit};

use crate::error::GraphError;

/// Reads non-empty lines of exactly `N` whitespace-separated non-negative
/// integers.
pub(crate) fn read_records<const N: usize>(path: &Path) -> Result<Vec<[u64; N]>, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let malformed = |reason| GraphError::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            content: trimmed.to_string(),
            reason,
        };
        let mut rec = [0u64; N];
        let mut fields = trimmed.split_whitespace();
        for slot in rec.iter_mut() {
            let field = fields.next().ok_or_else(|| malformed("too few fields"))?;
            *slot = field.parse().map_err(|_| malformed("field is not a non-negative integer"))?;
        }
        if fields.next().is_some() {
            return Err(malformed("too many fields"));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(GraphError::Empty(path.to_path_buf()));
    }
    Ok(out)
}

/// Writes `a b` (or `a b c`) integer lines.
pub(crate) fn write_records<const N: usize>(
    path: &Path,
    records: impl IntoIterator<Item = [usize; N]>,
) -> Result<(), GraphError> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for rec in records {
        let mut first = true;
        for v in rec {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}
