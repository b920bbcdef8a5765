//! Gaussian diffusion over binary item-entity adjacency rows.

mod ckgc;
mod denoiser;
mod schedule;

use numgrad::{Real, Result, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

pub use ckgc::{ckgc_loss, BatchInteractions, ROW_SUM_FLOOR};
pub use denoiser::{step_embedding, Denoiser, STEP_EMBED_DIM};
pub use schedule::NoiseSchedule;

use crate::error::GraphError;
use crate::graph::{KgEdge, KnowledgeGraph};

/// Standard normal draws shaped like `like`.
pub fn gaussian_like<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// `χ_t = √ᾱ_t·χ_0 + √(1 − ᾱ_t)·ε` with row `r` taken at step `steps[r]`.
pub fn q_sample_rows<T: Real>(x0: &Tensor<T>, steps: &[usize], noise: &Tensor<T>, sched: &NoiseSchedule) -> Tensor<T> {
    assert_eq!(x0.shape(), noise.shape());
    assert_eq!(x0.rows(), steps.len());
    let mut out = x0.clone();
    for (r, &t) in steps.iter().enumerate() {
        let a = T::lit(sched.alpha_bar(t).sqrt());
        let b = T::lit(sched.one_minus_alpha_bar(t).sqrt());
        for (o, &e) in out.row_mut(r).iter_mut().zip(noise.row(r)) {
            *o = a * *o + b * e;
        }
    }
    out
}

/// [`q_sample_rows`] with every row at step `t`.
pub fn q_sample<T: Real>(x0: &Tensor<T>, t: usize, noise: &Tensor<T>, sched: &NoiseSchedule) -> Tensor<T> {
    q_sample_rows(x0, &vec![t; x0.rows()], noise, sched)
}

/// `μ = c0·χ̂_0 + ct·χ_t`, the mean of `q(χ_{t−1} | χ_t, χ̂_0)`.
pub fn posterior_mean<T: Real>(x_t: &Tensor<T>, x0_hat: &Tensor<T>, t: usize, sched: &NoiseSchedule) -> Tensor<T> {
    let (c0, ct) = sched.posterior_coefficients(t);
    let (c0, ct) = (T::lit(c0), T::lit(ct));
    x0_hat.zip_map(x_t, |p, x| c0 * p + ct * x)
}

/// Weighted reconstruction term of the ELBO, averaged over rows, together
/// with the denoiser's prediction `χ̂_0`.
pub fn elbo_loss<T: Real>(
    tape: &mut Tape<T>,
    net: &Denoiser,
    store: &numgrad::ParamStore<T>,
    x0: &Tensor<T>,
    steps: &[usize],
    noise: &Tensor<T>,
    sched: &NoiseSchedule,
) -> Result<(Var, Var)> {
    let x_t = tape.constant(q_sample_rows(x0, steps, noise, sched));
    let pred = net.forward(tape, store, x_t, steps)?;
    Ok((weighted_error(tape, pred, x0, steps, sched)?, pred))
}

/// `Σ_r w(t_r)·‖pred_r − x0_r‖² / rows`.
pub fn weighted_error<T: Real>(
    tape: &mut Tape<T>,
    pred: Var,
    x0: &Tensor<T>,
    steps: &[usize],
    sched: &NoiseSchedule,
) -> Result<Var> {
    let target = tape.constant(x0.clone());
    let batch = steps.len().max(1) as f64;
    let weights = Tensor::column(steps.iter().map(|&t| T::lit(sched.elbo_weight(t) / batch)).collect());
    let weights = tape.constant(weights);
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let weighted = tape.mul_col(sq, weights)?;
    Ok(tape.sum(weighted))
}

/// Deterministic reverse inference: corrupt `x0` to step `T′` (no
/// corruption when `T′ = 0`), take that as `χ̂_T`, then apply the
/// posterior mean for `t = T, …, 1`.
pub fn reverse_generate<T: Real, R: Rng + ?Sized>(
    x0: &Tensor<T>,
    sched: &NoiseSchedule,
    net: &Denoiser,
    store: &numgrad::ParamStore<T>,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let t_prime = sched.inference_steps();
    let mut x = if t_prime == 0 {
        x0.clone()
    } else {
        let noise = gaussian_like(x0.shape(), rng);
        q_sample(x0, t_prime, &noise, sched)
    };
    for t in (1..=sched.steps()).rev() {
        let pred = net.predict(store, &x, t)?;
        x = posterior_mean(&x, &pred, t, sched);
    }
    Ok(x)
}

/// Indices of the `k` largest scores, ties to the lower index, returned
/// in ascending index order. NaN ranks below everything.
pub fn topk_entities<T: Real>(scores: &[T], k: usize) -> Vec<usize> {
    let key = |j: usize| {
        let s = scores[j];
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s.as_f64()
        }
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| key(*b).total_cmp(&key(*a)).then(a.cmp(b));
    idx.select_nth_unstable_by(k - 1, cmp);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Builds `G_k′` from per-item entity selections. A rebuilt edge keeps
/// every relation the original graph had between the pair; otherwise it
/// gets the most frequent relation.
pub fn rebuild_from_selection(original: &KnowledgeGraph, selection: &[Vec<usize>]) -> std::result::Result<KnowledgeGraph, GraphError> {
    let fallback = original.most_frequent_relation();
    let mut edges = Vec::new();
    for (item, entities) in selection.iter().enumerate() {
        for &entity in entities {
            let before = edges.len();
            edges.extend(
                original
                    .relations_between(item, entity)
                    .map(|relation| KgEdge { item, entity, relation }),
            );
            if edges.len() == before {
                edges.push(KgEdge {
                    item,
                    entity,
                    relation: fallback,
                });
            }
        }
    }
    KnowledgeGraph::from_edges(
        original.n_items(),
        original.n_entities(),
        original.n_relations().max(1),
        edges,
    )
}

/// Keeps each item's `k` highest-scoring entities. `scores` is
/// `[items, entities]`.
pub fn topk_rebuild<T: Real>(scores: &Tensor<T>, k: usize, original: &KnowledgeGraph) -> std::result::Result<KnowledgeGraph, GraphError> {
    check_k(k, original.n_entities())?;
    if scores.shape() != [original.n_items(), original.n_entities()] {
        return Err(GraphError::Invalid(format!(
            "score matrix {:?} does not match {} items x {} entities",
            scores.shape(),
            original.n_items(),
            original.n_entities()
        )));
    }
    let selection: Vec<Vec<usize>> = (0..scores.rows()).map(|i| topk_entities(scores.row(i), k)).collect();
    rebuild_from_selection(original, &selection)
}

pub fn check_k(k: usize, n_entities: usize) -> std::result::Result<(), GraphError> {
    if k == 0 || k > n_entities {
        return Err(GraphError::Invalid(format!("top-k of {k} outside 1..={n_entities} entities")));
    }
    Ok(())
}
