use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use numgrad::{CsrMatrix, Real};

use super::idmap::IdMap;
use super::read_records;
use crate::error::GraphError;

/// Bipartite user-item graph with both adjacency directions indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    n_users: usize,
    n_items: usize,
    user_ptr: Vec<usize>,
    user_items: Vec<usize>,
    item_ptr: Vec<usize>,
    item_users: Vec<usize>,
}

fn csr_lists(n: usize, mut pairs: Vec<(usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    pairs.sort_unstable();
    let mut ptr = vec![0usize; n + 1];
    let mut idx = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        ptr[a + 1] += 1;
        idx.push(b);
    }
    for k in 0..n {
        ptr[k + 1] += ptr[k];
    }
    (ptr, idx)
}

impl InteractionGraph {
    /// Builds the graph from dense `(user, item)` pairs; duplicates collapse.
    pub fn from_pairs(
        n_users: usize,
        n_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        for &(user, item) in &pairs {
            if user >= n_users || item >= n_items {
                return Err(GraphError::InteractionOutOfRange {
                    user,
                    item,
                    n_users,
                    n_items,
                });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let (user_ptr, user_items) = csr_lists(n_users, pairs.clone());
        let (item_ptr, item_users) = csr_lists(n_items, pairs.into_iter().map(|(u, i)| (i, u)).collect());
        Ok(Self {
            n_users,
            n_items,
            user_ptr,
            user_items,
            item_ptr,
            item_users,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_interactions(&self) -> usize {
        self.user_items.len()
    }

    /// Sorted train items of `user`.
    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.user_items[self.user_ptr[user]..self.user_ptr[user + 1]]
    }

    /// Sorted users of `item`.
    pub fn users_of(&self, item: usize) -> &[usize] {
        &self.item_users[self.item_ptr[item]..self.item_ptr[item + 1]]
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.user_ptr[user + 1] - self.user_ptr[user]
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.item_ptr[item + 1] - self.item_ptr[item]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.items_of(user).binary_search(&item).is_ok()
    }

    /// All `(user, item)` pairs in user-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_users).flat_map(move |u| self.items_of(u).iter().map(move |&i| (u, i)))
    }
}

/// An interaction graph together with the raw-id maps it was built from.
#[derive(Debug, Clone)]
pub struct Interactions {
    pub graph: InteractionGraph,
    pub users: IdMap,
    pub items: IdMap,
}

/// Reads whitespace-separated `user item` pairs and re-densifies both id
/// spaces in ascending raw-id order.
pub fn load_interactions(path: &Path) -> Result<Interactions, GraphError> {
    let records = read_records::<2>(path)?;
    let users = IdMap::from_sorted_unique(records.iter().map(|r| r[0]).collect());
    let items = IdMap::from_sorted_unique(records.iter().map(|r| r[1]).collect());
    let pairs = records.iter().map(|r| {
        (
            users.dense(r[0]).expect("user was indexed"),
            items.dense(r[1]).expect("item was indexed"),
        )
    });
    let graph = InteractionGraph::from_pairs(users.len(), items.len(), pairs)?;
    Ok(Interactions { graph, users, items })
}

/// Reads `user item` pairs that already use dense ids.
pub fn load_dense_interactions(path: &Path, n_users: usize, n_items: usize) -> Result<InteractionGraph, GraphError> {
    let records = read_records::<2>(path)?;
    InteractionGraph::from_pairs(
        n_users,
        n_items,
        records.iter().map(|r| (r[0] as usize, r[1] as usize)),
    )
}

/// Result of [`k_core_filter`]: the surviving graph with `users[new] = old`
/// and `items[new] = old` id correspondences.
#[derive(Debug, Clone)]
pub struct KCore {
    pub graph: InteractionGraph,
    pub users: Vec<usize>,
    pub items: Vec<usize>,
}

/// Repeatedly removes users and items with fewer than `k` interactions
/// until every remaining node has degree at least `k`.
pub fn k_core_filter(g: &InteractionGraph, k: usize) -> Result<KCore, GraphError> {
    if k == 0 {
        return Err(GraphError::Invalid("k-core requires k >= 1".into()));
    }
    let nu = g.n_users();
    // users occupy nodes 0..nu, items nu..nu+ni
    let mut degree: Vec<usize> = (0..nu)
        .map(|u| g.user_degree(u))
        .chain((0..g.n_items()).map(|i| g.item_degree(i)))
        .collect();
    let mut removed = vec![false; degree.len()];
    let mut queue: VecDeque<usize> = (0..degree.len()).filter(|&n| degree[n] < k).collect();
    for &n in &queue {
        removed[n] = true;
    }
    while let Some(node) = queue.pop_front() {
        let neighbors: Box<dyn Iterator<Item = usize>> = if node < nu {
            Box::new(g.items_of(node).iter().map(|&i| i + nu))
        } else {
            Box::new(g.users_of(node - nu).iter().copied())
        };
        for nb in neighbors {
            if removed[nb] {
                continue;
            }
            degree[nb] -= 1;
            if degree[nb] < k {
                removed[nb] = true;
                queue.push_back(nb);
            }
        }
    }

    let users: Vec<usize> = (0..nu).filter(|&u| !removed[u]).collect();
    let items: Vec<usize> = (0..g.n_items()).filter(|&i| !removed[i + nu]).collect();
    if users.is_empty() || items.is_empty() {
        return Err(GraphError::EmptyCore { k });
    }
    let mut new_user = vec![usize::MAX; nu];
    for (n, &u) in users.iter().enumerate() {
        new_user[u] = n;
    }
    let mut new_item = vec![usize::MAX; g.n_items()];
    for (n, &i) in items.iter().enumerate() {
        new_item[i] = n;
    }
    let pairs = g
        .pairs()
        .filter(|&(u, i)| !removed[u] && !removed[i + nu])
        .map(|(u, i)| (new_user[u], new_item[i]));
    let graph = InteractionGraph::from_pairs(users.len(), items.len(), pairs)?;
    Ok(KCore { graph, users, items })
}

/// Symmetric-normalized bipartite adjacency, one matrix per direction.
#[derive(Debug, Clone)]
pub struct NormAdjacency<T> {
    /// `[users, items]`, entry `1/√(|N_u|·|N_i|)` per edge.
    pub user_item: Arc<CsrMatrix<T>>,
    /// Transpose of `user_item`.
    pub item_user: Arc<CsrMatrix<T>>,
}

/// Builds the normalized adjacency from train edges; isolated nodes have
/// empty rows.
pub fn build_norm_adjacency<T: Real>(g: &InteractionGraph) -> NormAdjacency<T> {
    let entries: Vec<(usize, usize, T)> = g
        .pairs()
        .map(|(u, i)| {
            let w = 1.0 / ((g.user_degree(u) * g.item_degree(i)) as f64).sqrt();
            (u, i, T::lit(w))
        })
        .collect();
    let user_item = CsrMatrix::from_triplets(g.n_users(), g.n_items(), entries).expect("edges are in range");
    let item_user = user_item.transpose();
    NormAdjacency {
        user_item: Arc::new(user_item),
        item_user: Arc::new(item_user),
    }
}
