//! Preprocessed datasets: ingestion from raw files and the on-disk layout
//! consumed by training.
//!
//! An ingested directory holds dense-id files:
//!
//! ```text
//! meta.txt       n_users n_items n_entities n_relations
//! train.txt      user item
//! test.txt       user item
//! kg.txt         head relation tail
//! user_map.txt, item_map.txt, entity_map.txt, relation_map.txt
//! ```

use std::fs;
use std::path::Path;

use numgrad::Real;

use crate::error::{GraphError, Result};
use crate::graph::{
    build_norm_adjacency, k_core_filter, load_dense_interactions, load_dense_triplets, load_interactions,
    load_triplets, split, InteractionGraph, KnowledgeGraph, NormAdjacency,
};

/// Everything the model trains and evaluates on.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub train: InteractionGraph,
    /// Held-out items per user.
    pub test: Vec<Vec<usize>>,
    pub kg: KnowledgeGraph,
    pub adj: NormAdjacency<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(train: InteractionGraph, test: Vec<Vec<usize>>, kg: KnowledgeGraph) -> Result<Self> {
        if kg.n_items() != train.n_items() {
            return Err(GraphError::Invalid(format!(
                "knowledge graph covers {} items but the interaction graph has {}",
                kg.n_items(),
                train.n_items()
            ))
            .into());
        }
        if test.len() != train.n_users() {
            return Err(GraphError::Invalid(format!(
                "test sets for {} users but the interaction graph has {}",
                test.len(),
                train.n_users()
            ))
            .into());
        }
        if let Some((u, i)) = test
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
            .find(|&(u, i)| i >= train.n_items() || train.contains(u, i))
        {
            return Err(GraphError::Invalid(format!("test pair ({u}, {i}) is out of range or also in train")).into());
        }
        let adj = build_norm_adjacency(&train);
        Ok(Self { train, test, kg, adj })
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    /// Reads a directory written by [`ingest`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(&dir.join("meta.txt"))?;
        let [n_users, n_items, n_entities, n_relations] = meta;
        let train = load_dense_interactions(&dir.join("train.txt"), n_users, n_items)?;
        let test_graph = match load_dense_interactions(&dir.join("test.txt"), n_users, n_items) {
            Ok(g) => g,
            Err(GraphError::Empty(_)) => InteractionGraph::from_pairs(n_users, n_items, [])?,
            Err(e) => return Err(e.into()),
        };
        let test = (0..n_users).map(|u| test_graph.items_of(u).to_vec()).collect();
        let kg = match load_dense_triplets(&dir.join("kg.txt"), n_items, n_entities, n_relations) {
            Ok(kg) => kg,
            Err(GraphError::Empty(_)) => KnowledgeGraph::from_edges(n_items, n_entities, n_relations, Vec::new())?,
            Err(e) => return Err(e.into()),
        };
        Self::new(train, test, kg)
    }
}

fn read_meta(path: &Path) -> Result<[usize; 4]> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fields: Vec<usize> = text.split_whitespace().filter_map(|f| f.parse().ok()).collect();
    match fields.as_slice() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(GraphError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            content: text.trim().to_string(),
            reason: "expected `n_users n_items n_entities n_relations`",
        }
        .into()),
    }
}

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        GraphError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn pairs_text(pairs: impl Iterator<Item = (usize, usize)>) -> String {
    pairs.map(|(u, i)| format!("{u} {i}\n")).collect()
}

/// Sizes reported by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub train: usize,
    pub test: usize,
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
}

/// Loads raw interactions and triplets, applies the k-core filter, splits
/// per user and writes the dense layout to `out`.
pub fn ingest(
    interactions: &Path,
    triplets: &Path,
    kcore: usize,
    test_ratio: f64,
    seed: u64,
    out: &Path,
) -> Result<IngestSummary> {
    let raw = load_interactions(interactions)?;
    let core = k_core_filter(&raw.graph, kcore)?;
    let users = raw.users.select(&core.users);
    let items = raw.items.select(&core.items);
    let kg = load_triplets(triplets, &items)?;
    let parts = split(&core.graph, test_ratio, seed)?;

    fs::create_dir_all(out).map_err(|source| GraphError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let g = &core.graph;
    write_file(
        &out.join("meta.txt"),
        format!(
            "{} {} {} {}\n",
            g.n_users(),
            g.n_items(),
            kg.kg.n_entities(),
            kg.kg.n_relations()
        ),
    )?;
    write_file(&out.join("train.txt"), pairs_text(parts.train.pairs()))?;
    write_file(&out.join("test.txt"), pairs_text(parts.test_pairs()))?;
    kg.write_triplets(&out.join("kg.txt"))?;
    users.write(&out.join("user_map.txt"))?;
    items.write(&out.join("item_map.txt"))?;
    kg.entities.write(&out.join("entity_map.txt"))?;
    kg.relations.write(&out.join("relation_map.txt"))?;
    Ok(IngestSummary {
        users: g.n_users(),
        items: g.n_items(),
        interactions: g.n_interactions(),
        train: parts.train.n_interactions(),
        test: parts.n_test_interactions(),
        entities: kg.kg.n_entities(),
        relations: kg.kg.n_relations(),
        triplets: kg.triplets.len(),
    })
}
