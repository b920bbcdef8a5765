use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interactions::InteractionGraph;
use crate::error::GraphError;

/// Per-user train/test holdout.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: InteractionGraph,
    /// Held-out items per user, ascending.
    pub test: Vec<Vec<usize>>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn n_test_interactions(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn test_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.test
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }
}

/// Holds out `round(n · test_ratio)` of each user's `n` items, never all of
/// them, so every user with a test item keeps at least one train item.
pub fn split(g: &InteractionGraph, test_ratio: f64, seed: u64) -> Result<DatasetSplit, GraphError> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(GraphError::Invalid(format!("test ratio {test_ratio} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_pairs = Vec::with_capacity(g.n_interactions());
    let mut test = Vec::with_capacity(g.n_users());
    for u in 0..g.n_users() {
        let mut items = g.items_of(u).to_vec();
        items.shuffle(&mut rng);
        let n = items.len();
        let n_test = ((n as f64 * test_ratio).round() as usize).min(n.saturating_sub(1));
        let mut held = items.split_off(n - n_test);
        held.sort_unstable();
        train_pairs.extend(items.into_iter().map(|i| (u, i)));
        test.push(held);
    }
    let train = InteractionGraph::from_pairs(g.n_users(), g.n_items(), train_pairs)?;
    Ok(DatasetSplit { train, test, seed })
}
