use rand::Rng;

use super::interactions::InteractionGraph;

/// A user with one observed item `pos` and one unobserved item `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Draws exactly `batch_size` triples with replacement. Users are drawn
/// uniformly among those with at least one observed and one unobserved
/// item; the negative is uniform over the user's unobserved items. Returns
/// an empty batch when no user qualifies.
pub fn sample_bpr_triples<R: Rng + ?Sized>(g: &InteractionGraph, batch_size: usize, rng: &mut R) -> Vec<BprTriple> {
    let n_items = g.n_items();
    let mut eligible = Vec::with_capacity(g.n_users());
    let mut saturated = 0usize;
    for u in 0..g.n_users() {
        let d = g.user_degree(u);
        if d == n_items && d > 0 {
            saturated += 1;
        } else if d > 0 {
            eligible.push(u);
        }
    }
    if saturated > 0 {
        log::warn!("skipping {saturated} user(s) who interacted with every item");
    }
    if eligible.is_empty() {
        return Vec::new();
    }
    (0..batch_size)
        .map(|_| {
            let user = eligible[rng.random_range(0..eligible.len())];
            let items = g.items_of(user);
            let pos = items[rng.random_range(0..items.len())];
            let neg = loop {
                let j = rng.random_range(0..n_items);
                if !g.contains(user, j) {
                    break j;
                }
            };
            BprTriple { user, pos, neg }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn negatives_avoid_observed_items() {
        let g = InteractionGraph::from_pairs(1, 3, [(0, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in sample_bpr_triples(&g, 200, &mut rng) {
            assert_eq!(t.pos, 0);
            assert!(t.neg == 1 || t.neg == 2);
        }
    }

    #[test]
    fn exact_batch_size_and_saturated_users_skipped() {
        let g = InteractionGraph::from_pairs(3, 2, [(0, 0), (0, 1), (1, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_bpr_triples(&g, 1024, &mut rng);
        assert_eq!(batch.len(), 1024);
        assert!(batch.iter().all(|t| t.user == 1 && t.pos == 1 && t.neg == 0));
    }

    #[test]
    fn no_eligible_users_gives_empty_batch() {
        let g = InteractionGraph::from_pairs(1, 1, [(0, 0)]).unwrap();
        assert!(sample_bpr_triples(&g, 8, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }

    #[test]
    fn negatives_are_uniform() {
        // chi-square over the 8 unobserved items, 7 degrees of freedom
        let g = InteractionGraph::from_pairs(1, 10, [(0, 3), (0, 6)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut counts = [0usize; 10];
        for t in sample_bpr_triples(&g, n, &mut rng) {
            counts[t.neg] += 1;
        }
        assert_eq!(counts[3] + counts[6], 0);
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 3 && *j != 6)
            .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-square with 7 dof
        assert!(chi2 < 24.32, "chi2 = {chi2}");
    }
}
