//! Synthetic datasets with planted structure.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GraphError, Result};
use crate::graph::{InteractionGraph, KnowledgeGraph};

/// Block-structured knowledge graph: items come in blocks that share a
/// set of true entities, and every item also links a few noise entities
/// taken from other blocks.
#[derive(Debug, Clone)]
pub struct PlantedKg {
    pub kg: KnowledgeGraph,
    /// True entities of each item, ascending.
    pub truth: Vec<Vec<usize>>,
    pub triplets: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub blocks: usize,
    pub items_per_block: usize,
    pub true_per_block: usize,
    pub noise_per_item: usize,
}

impl Default for PlantedSpec {
    /// 20 items over 15 attribute entities: 5 blocks of 4 items, 3 true
    /// and 2 noise entities per item.
    fn default() -> Self {
        Self {
            blocks: 5,
            items_per_block: 4,
            true_per_block: 3,
            noise_per_item: 2,
        }
    }
}

pub fn planted_kg(spec: PlantedSpec, seed: u64) -> Result<PlantedKg> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = spec.blocks * spec.items_per_block;
    let n_attr = spec.blocks * spec.true_per_block;
    let n_entities = n_items + n_attr;
    // entity ids are shuffled so that id order carries no block information
    let mut ids: Vec<usize> = (n_items..n_entities).collect();
    ids.shuffle(&mut rng);
    let mut triplets = Vec::new();
    let mut truth = Vec::with_capacity(n_items);
    for item in 0..n_items {
        let block = item / spec.items_per_block;
        let mut own: Vec<usize> = (0..spec.true_per_block)
            .map(|k| ids[block * spec.true_per_block + k])
            .collect();
        own.sort_unstable();
        let others: Vec<usize> = (n_items..n_entities).filter(|e| !own.contains(e)).collect();
        let noise: Vec<usize> = others.choose_multiple(&mut rng, spec.noise_per_item).copied().collect();
        triplets.extend(own.iter().chain(&noise).map(|&e| (item, 0, e)));
        truth.push(own);
    }
    let kg = KnowledgeGraph::from_triplets(n_items, n_entities, 1, &triplets)?;
    Ok(PlantedKg { kg, truth, triplets })
}

/// Users, items and attribute entities split into latent communities.
#[derive(Debug, Clone, Copy)]
pub struct CommunitySpec {
    pub users: usize,
    pub items: usize,
    pub communities: usize,
    pub items_per_user: usize,
    /// Within-community popularity follows `1 / rank^popularity_skew`.
    pub popularity_skew: f64,
    pub entities_per_community: usize,
    pub entities_per_item: usize,
    pub relations: usize,
    /// Irrelevant triplets added, as a fraction of the relevant ones.
    pub noise_ratio: f64,
}

impl Default for CommunitySpec {
    fn default() -> Self {
        Self {
            users: 200,
            items: 100,
            communities: 2,
            items_per_user: 12,
            popularity_skew: 1.5,
            entities_per_community: 10,
            entities_per_item: 3,
            relations: 3,
            noise_ratio: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommunityData {
    pub interactions: InteractionGraph,
    pub kg: KnowledgeGraph,
    pub triplets: Vec<(usize, usize, usize)>,
    /// Community of every item.
    pub item_community: Vec<usize>,
    /// Number of injected irrelevant triplets (the last ones in `triplets`).
    pub noise_triplets: usize,
}

pub fn community_dataset(spec: CommunitySpec, seed: u64) -> Result<CommunityData> {
    if spec.communities == 0 || spec.items % spec.communities != 0 || spec.users < spec.communities {
        return Err(GraphError::Invalid("items must split evenly into a positive number of communities".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = spec.items / spec.communities;
    if spec.items_per_user > per {
        return Err(GraphError::Invalid("items_per_user exceeds community size".into()).into());
    }
    let item_community: Vec<usize> = (0..spec.items).map(|i| i / per).collect();
    // popularity order within each community is a random permutation
    let popularity: Vec<Vec<f64>> = (0..spec.communities)
        .map(|_| {
            let mut ranks: Vec<usize> = (0..per).collect();
            ranks.shuffle(&mut rng);
            ranks.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(spec.popularity_skew)).collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for u in 0..spec.users {
        let c = u * spec.communities / spec.users;
        let local: Vec<usize> = (0..per).collect();
        let chosen = local
            .choose_multiple_weighted(&mut rng, spec.items_per_user, |&j| popularity[c][j])
            .map_err(|e| GraphError::Invalid(e.to_string()))?;
        pairs.extend(chosen.map(|&j| (u, c * per + j)));
    }
    let interactions = InteractionGraph::from_pairs(spec.users, spec.items, pairs)?;

    let n_attr = spec.communities * spec.entities_per_community;
    let n_entities = spec.items + n_attr;
    let community_entities =
        |c: usize| -> Vec<usize> { (0..spec.entities_per_community).map(|k| spec.items + c * spec.entities_per_community + k).collect() };
    let mut triplets = Vec::new();
    for item in 0..spec.items {
        let own = community_entities(item_community[item]);
        for &e in own.choose_multiple(&mut rng, spec.entities_per_item) {
            triplets.push((item, rng.random_range(0..spec.relations), e));
        }
    }
    let noise_triplets = (triplets.len() as f64 * spec.noise_ratio).round() as usize;
    for _ in 0..noise_triplets {
        let item = rng.random_range(0..spec.items);
        let mut c = rng.random_range(0..spec.communities - 1);
        if c >= item_community[item] {
            c += 1;
        }
        let e = *community_entities(c).choose(&mut rng).expect("non-empty community");
        triplets.push((item, rng.random_range(0..spec.relations), e));
    }
    let kg = KnowledgeGraph::from_triplets(spec.items, n_entities, spec.relations, &triplets)?;
    Ok(CommunityData {
        interactions,
        kg,
        triplets,
        item_community,
        noise_triplets,
    })
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        GraphError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Writes `interactions.txt`, `kg.txt` (community dataset) and
/// `planted_kg.txt` into `dir`.
pub fn write_synthetic(dir: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let data = community_dataset(CommunitySpec::default(), seed)?;
    write(
        &dir.join("interactions.txt"),
        data.interactions.pairs().map(|(u, i)| format!("{u} {i}\n")).collect(),
    )?;
    let triplet_text =
        |ts: &[(usize, usize, usize)]| -> String { ts.iter().map(|(h, r, t)| format!("{h} {r} {t}\n")).collect() };
    write(&dir.join("kg.txt"), triplet_text(&data.triplets))?;
    let planted = planted_kg(PlantedSpec::default(), seed)?;
    write(&dir.join("planted_kg.txt"), triplet_text(&planted.triplets))
}
