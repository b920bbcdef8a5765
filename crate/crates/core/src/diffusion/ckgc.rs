//! Collaborative knowledge-graph convolution loss.
//!
//! User embeddings travel to entities along the user-entity affinities
//! `A·χ̂_0` and come back to items along `χ̂_0`, both row-normalised:
//!
//! ```text
//! E_i′ = norm(χ̂_0) · (norm(A·χ̂_0)ᵀ · E_u)
//! ```
//!
//! The loss is the mean squared distance between `E_i′` and `E_i`. The
//! product is evaluated right to left so no `|U| × |E|` matrix is formed.
//! Predictions are clamped at zero so that row sums stay non-negative.

use std::sync::Arc;

use numgrad::{CsrMatrix, Real, Result, Tape, Var};

use crate::graph::InteractionGraph;

pub const ROW_SUM_FLOOR: f64 = 1e-8;

/// Interaction columns of a batch of items: `A_b` is `[users, batch]`.
#[derive(Debug, Clone)]
pub struct BatchInteractions<T> {
    a: Arc<CsrMatrix<T>>,
    at: Arc<CsrMatrix<T>>,
}

impl<T: Real> BatchInteractions<T> {
    pub fn new(g: &InteractionGraph, items: &[usize]) -> Result<Self> {
        let mut entries = Vec::new();
        for (col, &i) in items.iter().enumerate() {
            entries.extend(g.users_of(i).iter().map(|&u| (u, col, T::one())));
        }
        let a = CsrMatrix::from_triplets(g.n_users(), items.len(), entries)?;
        let at = a.transpose();
        Ok(Self {
            a: Arc::new(a),
            at: Arc::new(at),
        })
    }

    pub fn n_users(&self) -> usize {
        self.a.rows()
    }
}

/// `x0_hat` is `[batch, entities]`, `users` is `[users, d]` and `items` is
/// `[batch, d]`.
pub fn ckgc_loss<T: Real>(
    tape: &mut Tape<T>,
    inter: &BatchInteractions<T>,
    x0_hat: Var,
    users: Var,
    items: Var,
) -> Result<Var> {
    let floor = T::lit(ROW_SUM_FLOOR);
    let p = tape.clamp_min(x0_hat, T::zero());
    let item_mass = tape.sum_rows(p)?;
    let user_mass = tape.spmm(inter.a.clone(), item_mass)?;
    let user_mass = tape.clamp_min(user_mass, floor);
    let scaled_users = tape.div_col(users, user_mass)?;
    let per_item = tape.spmm(inter.at.clone(), scaled_users)?;
    let pt = tape.transpose(p)?;
    let per_entity = tape.matmul(pt, per_item)?;
    let back = tape.matmul(p, per_entity)?;
    let item_mass = tape.clamp_min(item_mass, floor);
    let predicted = tape.div_col(back, item_mass)?;
    let err = tape.squared_error(predicted, items)?;
    let batch = tape.value(items).rows().max(1);
    Ok(tape.scale(err, T::lit(1.0 / batch as f64)))
}
