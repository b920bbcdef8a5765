use diffkg::diffusion::{
    elbo_loss, gaussian_like, q_sample, reverse_generate, topk_rebuild, Denoiser, NoiseSchedule,
};
use diffkg::graph::KnowledgeGraph;
use numgrad::{Adam, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn net(width: usize, hidden: usize, seed: u64) -> (ParamStore<f64>, Denoiser) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Denoiser::new(&mut store, width, hidden, 0.2, &mut rng);
    (store, d)
}

#[test]
fn prediction_depends_on_step() {
    let (store, d) = net(6, 16, 1);
    let x = Tensor::from_fn(2, 6, |i, j| ((i + j) % 2) as f64);
    let a = d.predict(&store, &x, 1).unwrap();
    let b = d.predict(&store, &x, 4).unwrap();
    assert_ne!(a, b);
}

#[test]
fn reverse_without_corruption_ignores_rng() {
    let sched = NoiseSchedule::new(5, 0, 0.1, 1e-4, 1e-2).unwrap();
    let (store, d) = net(5, 8, 2);
    let x = Tensor::from_fn(3, 5, |i, j| ((i * j) % 2) as f64);
    let a = reverse_generate(&x, &sched, &d, &store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = reverse_generate(&x, &sched, &d, &store, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);

    let noisy = NoiseSchedule::new(5, 3, 0.1, 1e-4, 1e-2).unwrap();
    let a = reverse_generate(&x, &noisy, &d, &store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = reverse_generate(&x, &noisy, &d, &store, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn overfits_a_single_row() {
    // a noisier schedule keeps the per-step ELBO weights comparable
    let sched = NoiseSchedule::new(5, 0, 1.0, 0.1, 0.5).unwrap();
    let (mut store, d) = net(8, 64, 3);
    let mut opt = Adam::new(&store, 1e-3);
    let row = Tensor::from_rows(&[vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]]).unwrap();
    let batch = Tensor::from_fn(16, 8, |_, j| row.get(0, j));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for e in 0..1500 {
        let steps: Vec<usize> = (0..16).map(|r| 1 + (r + e) % 5).collect();
        let noise = gaussian_like(batch.shape(), &mut rng);
        let mut tape = Tape::new();
        let (loss, _) = elbo_loss(&mut tape, &d, &store, &batch, &steps, &noise, &sched).unwrap();
        let g = tape.backward(loss).unwrap().for_store(&store);
        opt.step(&mut store, &g).unwrap();
    }
    let out = reverse_generate(&row, &sched, &d, &store, &mut rng).unwrap();
    let err: f64 = out.data().iter().zip(row.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 0.05, "max error {err}");
}

#[test]
fn q_sample_at_zero_noise_is_scaled_input() {
    let sched = NoiseSchedule::new(3, 0, 0.5, 0.1, 0.3).unwrap();
    let x = Tensor::from_fn(2, 3, |i, j| (i + j) as f64);
    let zero = Tensor::zeros(&[2, 3]);
    let out = q_sample(&x, 2, &zero, &sched);
    let c = sched.alpha_bar(2).sqrt();
    assert_eq!(out, x.map(|v| v * c));
}

#[test]
fn rebuild_keeps_original_relations() {
    let kg = KnowledgeGraph::from_triplets(2, 5, 3, &[(0, 2, 2), (0, 1, 3), (1, 0, 4)]).unwrap();
    let scores = Tensor::from_rows(&[vec![0.0, 0.0, 0.9, 0.1, 0.8], vec![0.0, 0.0, 0.7, 0.2, 0.1]]).unwrap();
    let rebuilt = topk_rebuild(&scores, 2, &kg).unwrap();
    assert_eq!(rebuilt.entities_of(0), vec![2, 4]);
    assert_eq!(rebuilt.relations_between(0, 2).collect::<Vec<_>>(), vec![2]);
    assert_eq!(rebuilt.entities_of(1), vec![2, 3]);
    // pairs absent from the original graph take the most frequent relation
    assert_eq!(rebuilt.relations_between(1, 3).collect::<Vec<_>>(), vec![0]);
    assert!(topk_rebuild(&scores, 6, &kg).is_err());
}
