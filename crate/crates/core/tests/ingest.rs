use std::fs;

use diffkg::data::ingest;
use diffkg::graph::IdMap;
use diffkg::synth::write_synthetic;
use diffkg::Dataset;

#[test]
fn ingested_directory_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let out = dir.path().join("data");
    write_synthetic(&raw, 7).unwrap();
    let summary = ingest(&raw.join("interactions.txt"), &raw.join("kg.txt"), 5, 0.2, 1, &out).unwrap();
    assert_eq!(summary.train + summary.test, summary.interactions);

    let data = Dataset::<f64>::load(&out).unwrap();
    assert_eq!(data.n_users(), summary.users);
    assert_eq!(data.n_items(), summary.items);
    assert_eq!(data.kg.n_entities(), summary.entities);
    assert_eq!(data.train.n_interactions(), summary.train);
    assert_eq!(data.test.iter().map(Vec::len).sum::<usize>(), summary.test);

    let items = IdMap::read(&out.join("item_map.txt")).unwrap();
    assert_eq!(items.len(), summary.items);
    let entities = IdMap::read(&out.join("entity_map.txt")).unwrap();
    // kept items come first in the entity space with the same raw ids
    assert_eq!(&entities.originals()[..items.len()], items.originals());
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    write_synthetic(&raw, 2).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ingest(&raw.join("interactions.txt"), &raw.join("kg.txt"), 5, 0.2, 3, &out).unwrap();
        ["train.txt", "test.txt", "kg.txt"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn malformed_input_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let inter = dir.path().join("inter.txt");
    fs::write(&inter, "1 2\n3 x\n").unwrap();
    let kg = dir.path().join("kg.txt");
    fs::write(&kg, "1 0 5\n").unwrap();
    let err = ingest(&inter, &kg, 1, 0.2, 0, &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains(":2:"), "{err}");
}

#[test]
fn too_large_core_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let inter = dir.path().join("inter.txt");
    fs::write(&inter, "1 2\n1 3\n2 2\n").unwrap();
    let kg = dir.path().join("kg.txt");
    fs::write(&kg, "2 0 9\n").unwrap();
    let err = ingest(&inter, &kg, 5, 0.2, 0, &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("5-core"), "{err}");
}
