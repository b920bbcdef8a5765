//! Relation-aware attentive aggregation of entity embeddings into items.
//!
//! For item `i` with neighbours `N_i`:
//!
//! ```text
//! α(e, r, i) = softmax_{e ∈ N_i} LeakyReLU(rᵀ W [x_e ‖ x_i])
//! x_i ← Drop(Norm(x_i + Σ_e α(e, r, i) x_e))
//! ```
//!
//! `Norm` is L2 row normalisation.

use std::sync::Arc;

use numgrad::{Axis, Real, Result, Tape, Var};
use rand::Rng;

use crate::graph::KnowledgeGraph;

pub const NORM_EPS: f64 = 1e-8;

/// Edge lists of one knowledge-graph view, laid out for the tape.
#[derive(Debug, Clone)]
pub struct KgIndex {
    n_items: usize,
    items: Arc<[usize]>,
    entities: Arc<[usize]>,
    relations: Arc<[usize]>,
    offsets: Arc<[usize]>,
    item_rows: Arc<[usize]>,
    other_rows: Arc<[usize]>,
}

impl KgIndex {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let edges = kg.edges();
        Self {
            n_items: kg.n_items(),
            items: edges.iter().map(|e| e.item).collect(),
            entities: edges.iter().map(|e| e.entity).collect(),
            relations: edges.iter().map(|e| e.relation).collect(),
            offsets: kg.offsets().into(),
            item_rows: (0..kg.n_items()).collect(),
            other_rows: (kg.n_items()..kg.n_entities()).collect(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.entities.len()
    }
}

/// Settings shared by every aggregation call.
#[derive(Debug, Clone, Copy)]
pub struct AggregatorConfig {
    pub slope: f64,
    pub out_dropout: f64,
}

/// Attention weights over every edge of `index`, `[edges, 1]`, normalised
/// per item.
pub fn attention<T: Real>(
    tape: &mut Tape<T>,
    entity: Var,
    relation: Var,
    w: Var,
    index: &KgIndex,
    slope: f64,
) -> Result<Var> {
    let xe = tape.gather_rows(entity, index.entities.clone())?;
    let xi = tape.gather_rows(entity, index.items.clone())?;
    let pair = tape.concat(&[xe, xi], Axis::Cols)?;
    let wt = tape.transpose(w)?;
    let proj = tape.matmul(pair, wt)?;
    let r = tape.gather_rows(relation, index.relations.clone())?;
    let rp = tape.mul(r, proj)?;
    let score = tape.sum_rows(rp)?;
    let logits = tape.leaky_relu(score, T::lit(slope));
    tape.segment_softmax(logits, index.offsets.clone())
}

/// Runs one aggregation layer per entry of `ws` and returns the item
/// embeddings `[items, d]`. Between layers the item rows of the entity
/// table are replaced by the freshly aggregated items.
pub fn aggregate<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    entity: Var,
    relation: Var,
    ws: &[Var],
    index: &KgIndex,
    cfg: AggregatorConfig,
    rng: &mut R,
) -> Result<Var> {
    let mut table = entity;
    let mut items = tape.gather_rows(entity, index.item_rows.clone())?;
    for (layer, &w) in ws.iter().enumerate() {
        if layer > 0 {
            table = if index.other_rows.is_empty() {
                items
            } else {
                let others = tape.gather_rows(entity, index.other_rows.clone())?;
                tape.concat(&[items, others], Axis::Rows)?
            };
        }
        let summed = if index.n_edges() == 0 {
            items
        } else {
            let alpha = attention(tape, table, relation, w, index, cfg.slope)?;
            let xe = tape.gather_rows(table, index.entities.clone())?;
            let msg = tape.mul_col(xe, alpha)?;
            let agg = tape.scatter_add_rows(msg, index.items.clone(), index.n_items)?;
            tape.add(items, agg)?
        };
        let normed = tape.l2_normalize_rows(summed, T::lit(NORM_EPS))?;
        items = tape.dropout(normed, cfg.out_dropout, rng)?;
    }
    Ok(items)
}
