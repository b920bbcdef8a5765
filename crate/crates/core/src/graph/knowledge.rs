use std::path::Path;

use numgrad::{Real, Tensor};
use rand::Rng;

use super::idmap::IdMap;
use super::{read_records, write_records};
use crate::error::GraphError;

/// One relation-labelled link between an item and an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KgEdge {
    pub item: usize,
    pub entity: usize,
    pub relation: usize,
}

/// Item-centric knowledge graph.
///
/// Entity ids `0..n_items` are the items themselves; attribute entities
/// follow. Edges are kept sorted by `(item, entity, relation)` with one
/// edge per distinct relation between a pair, so an item's binary
/// adjacency row `z_i` is the set of distinct entities in its edge slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    n_items: usize,
    n_entities: usize,
    n_relations: usize,
    edges: Vec<KgEdge>,
    offsets: Vec<usize>,
}

impl KnowledgeGraph {
    pub fn from_edges(
        n_items: usize,
        n_entities: usize,
        n_relations: usize,
        mut edges: Vec<KgEdge>,
    ) -> Result<Self, GraphError> {
        if n_items > n_entities {
            return Err(GraphError::Invalid(format!(
                "{n_items} items exceed {n_entities} entities; items must be entities"
            )));
        }
        for e in &edges {
            if e.item >= n_items || e.entity >= n_entities || e.relation >= n_relations {
                return Err(GraphError::TripletOutOfRange {
                    head: e.item,
                    relation: e.relation,
                    tail: e.entity,
                    reason: format!(
                        "limits are {n_items} items, {n_entities} entities, {n_relations} relations"
                    ),
                });
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut offsets = vec![0usize; n_items + 1];
        for e in &edges {
            offsets[e.item + 1] += 1;
        }
        for k in 0..n_items {
            offsets[k + 1] += offsets[k];
        }
        Ok(Self {
            n_items,
            n_entities,
            n_relations,
            edges,
            offsets,
        })
    }

    /// Builds the graph from dense `(head, relation, tail)` triplets. A
    /// triplet links item `h` to entity `t` when `h` is an item, and item
    /// `t` to entity `h` when `t` is an item.
    pub fn from_triplets(
        n_items: usize,
        n_entities: usize,
        n_relations: usize,
        triplets: &[(usize, usize, usize)],
    ) -> Result<Self, GraphError> {
        let mut edges = Vec::with_capacity(triplets.len());
        for &(head, relation, tail) in triplets {
            if head >= n_entities || tail >= n_entities || relation >= n_relations {
                return Err(GraphError::TripletOutOfRange {
                    head,
                    relation,
                    tail,
                    reason: format!("limits are {n_entities} entities and {n_relations} relations"),
                });
            }
            if head < n_items {
                edges.push(KgEdge {
                    item: head,
                    entity: tail,
                    relation,
                });
            }
            if tail < n_items && tail != head {
                edges.push(KgEdge {
                    item: tail,
                    entity: head,
                    relation,
                });
            }
        }
        Self::from_edges(n_items, n_entities, n_relations, edges)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    /// `offsets[i]..offsets[i + 1]` indexes item `i`'s edges.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, item: usize) -> &[KgEdge] {
        &self.edges[self.offsets[item]..self.offsets[item + 1]]
    }

    /// Distinct entities linked to `item`, ascending.
    pub fn entities_of(&self, item: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.neighbors(item).iter().map(|e| e.entity).collect();
        out.dedup();
        out
    }

    /// Relations recorded between `item` and `entity`, ascending.
    pub fn relations_between(&self, item: usize, entity: usize) -> impl Iterator<Item = usize> + '_ {
        let nb = self.neighbors(item);
        let start = nb.partition_point(|e| e.entity < entity);
        nb[start..].iter().take_while(move |e| e.entity == entity).map(|e| e.relation)
    }

    /// Binary adjacency rows `z_i` for the given items, `[items, entities]`.
    pub fn adjacency_rows<T: Real>(&self, items: &[usize]) -> Tensor<T> {
        let mut out = Tensor::zeros(&[items.len(), self.n_entities]);
        for (r, &i) in items.iter().enumerate() {
            for e in self.neighbors(i) {
                out.set(r, e.entity, T::one());
            }
        }
        out
    }

    /// Distinct `(item, entity)` pairs.
    pub fn item_entity_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.item, e.entity)).collect();
        out.dedup();
        out
    }

    /// Relation with the most edges; ties go to the lowest id.
    pub fn most_frequent_relation(&self) -> usize {
        let mut counts = vec![0usize; self.n_relations.max(1)];
        for e in &self.edges {
            counts[e.relation] += 1;
        }
        let mut best = 0;
        for (r, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = r;
            }
        }
        best
    }

    /// Keeps each edge independently with probability `1 − rate`.
    pub fn dropout<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> Result<Self, GraphError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(GraphError::Invalid(format!("KG dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(self.clone());
        }
        let kept = self
            .edges
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() >= rate)
            .collect();
        Self::from_edges(self.n_items, self.n_entities, self.n_relations, kept)
    }

    /// Writes `item relation entity` lines in dense ids.
    pub fn write_triplets(&self, path: &Path) -> Result<(), GraphError> {
        write_records(path, self.edges.iter().map(|e| [e.item, e.relation, e.entity]))
    }
}

/// A knowledge graph read from raw ids.
#[derive(Debug, Clone)]
pub struct LoadedKg {
    pub kg: KnowledgeGraph,
    /// Dense entity id to raw id; the first `n_items` entries are the items.
    pub entities: IdMap,
    pub relations: IdMap,
    /// Every input triplet as dense `(head, relation, tail)`.
    pub triplets: Vec<(usize, usize, usize)>,
}

impl LoadedKg {
    /// Writes the dense triplets as `head relation tail` lines.
    pub fn write_triplets(&self, path: &Path) -> Result<(), GraphError> {
        write_records(path, self.triplets.iter().map(|&(h, r, t)| [h, r, t]))
    }
}

/// Reads `head relation tail` triplets whose ids share the raw item id
/// space of the interaction file. Raw ids found in `items` become those
/// items; all other entities are numbered after the items in ascending
/// raw-id order.
pub fn load_triplets(path: &Path, items: &IdMap) -> Result<LoadedKg, GraphError> {
    let records = read_records::<3>(path)?;
    let mut others: Vec<u64> = records
        .iter()
        .flat_map(|r| [r[0], r[2]])
        .filter(|&raw| items.dense(raw).is_none())
        .collect();
    others.sort_unstable();
    others.dedup();
    let entities = IdMap::from_originals(items.originals().iter().copied().chain(others).collect());
    let relations = IdMap::from_sorted_unique(records.iter().map(|r| r[1]).collect());
    let dense: Vec<(usize, usize, usize)> = records
        .iter()
        .map(|r| {
            (
                entities.dense(r[0]).expect("entity was indexed"),
                relations.dense(r[1]).expect("relation was indexed"),
                entities.dense(r[2]).expect("entity was indexed"),
            )
        })
        .collect();
    let kg = KnowledgeGraph::from_triplets(items.len(), entities.len(), relations.len(), &dense)?;
    Ok(LoadedKg {
        kg,
        entities,
        relations,
        triplets: dense,
    })
}

/// Reads `head relation tail` triplets already in dense ids, rejecting
/// any id beyond the given limits.
pub fn load_dense_triplets(
    path: &Path,
    n_items: usize,
    n_entities: usize,
    n_relations: usize,
) -> Result<KnowledgeGraph, GraphError> {
    let records = read_records::<3>(path)?;
    let triplets: Vec<(usize, usize, usize)> = records
        .iter()
        .map(|r| (r[0] as usize, r[1] as usize, r[2] as usize))
        .collect();
    KnowledgeGraph::from_triplets(n_items, n_entities, n_relations, &triplets)
}
