use diffkg::graph::split;
use diffkg::synth::{community_dataset, CommunitySpec};
use diffkg::{Dataset, RunConfig};

/// A small community dataset that trains in well under a second per epoch.
pub fn small_data(seed: u64) -> Dataset<f64> {
    let spec = CommunitySpec {
        users: 40,
        items: 30,
        communities: 2,
        items_per_user: 6,
        entities_per_community: 5,
        ..CommunitySpec::default()
    };
    let c = community_dataset(spec, seed).unwrap();
    let sp = split(&c.interactions, 0.2, seed).unwrap();
    Dataset::new(sp.train, sp.test, c.kg).unwrap()
}

pub fn small_config(extra: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text("d=16\nhidden=32\nbatch_size=64\ndiff_batch_size=16\nk=3\nlr_rec=0.01\nprecision=f64")
        .unwrap();
    cfg.apply_text(extra).unwrap();
    cfg.validate().unwrap();
    cfg
}
