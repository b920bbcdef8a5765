//! Joint training of the knowledge-graph diffusion model and the
//! recommender.
//!
//! One epoch runs three phases:
//!
//! 1. minimise `(1 − λ0)·L_elbo + λ0·L_ckgc` over mini-batches of item rows;
//! 2. regenerate every item row and rebuild the denoised graph `G_k′`;
//! 3. minimise `L_bpr + λ1·L_cl + λ2·‖Θ‖²` over BPR batches, contrasting an
//!    edge-dropout view of the original graph against `G_k′`.

mod losses;

use std::collections::BTreeSet;
use std::sync::Arc;

use numgrad::{Adam, Checkpoint, ParamId, ParamStore, Real, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use losses::{bpr_loss, kgdm_loss, rec_loss};

use crate::aggregator::{aggregate, AggregatorConfig, KgIndex};
use crate::config::HyperParams;
use crate::contrastive::infonce;
use crate::data::Dataset;
use crate::diffusion::{
    check_k, ckgc_loss, elbo_loss, gaussian_like, rebuild_from_selection, reverse_generate, topk_entities,
    BatchInteractions, Denoiser, NoiseSchedule,
};
use crate::encoder::{encode, predict_scores};
use crate::error::{Error, Result};
use crate::eval::{evaluate_full_rank, rank_top_n, EvalReport};
use crate::graph::{sample_bpr_triples, KnowledgeGraph};

const PHASE_INIT: u64 = 0;
const PHASE_DIFFUSION: u64 = 1;
const PHASE_REBUILD: u64 = 2;
const PHASE_REC: u64 = 3;

/// Mean losses of one epoch. Terms that were not computed are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub elbo: f64,
    pub ckgc: f64,
    pub kgdm: f64,
    pub bpr: f64,
    pub cl: f64,
    pub rec: f64,
}

impl EpochStats {
    /// Header of the per-epoch metrics file for cutoff `n`.
    pub fn csv_header(n: usize) -> String {
        format!("epoch,elbo,ckgc,kgdm,bpr,cl,rec,recall@{n},ndcg@{n}")
    }

    /// One metrics line; evaluation columns are empty when `report` is
    /// `None`. Floats use the shortest round-trip representation.
    pub fn csv_row(&self, report: Option<&EvalReport>) -> String {
        let (recall, ndcg) = report.map_or((String::new(), String::new()), |r| (r.recall.to_string(), r.ndcg.to_string()));
        format!(
            "{},{},{},{},{},{},{},{recall},{ndcg}",
            self.epoch, self.elbo, self.ckgc, self.kgdm, self.bpr, self.cl, self.rec
        )
    }
}

/// Parameter handles of the recommendation group.
#[derive(Debug, Clone)]
pub struct RecParams {
    pub users: ParamId,
    /// `[entities, d]`; the first `n_items` rows are the item embeddings.
    pub entities: ParamId,
    pub relations: ParamId,
    pub attention: Vec<ParamId>,
}

impl RecParams {
    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.users, self.entities, self.relations];
        ids.extend(&self.attention);
        ids
    }
}

#[derive(Debug, Clone, Copy)]
struct Placed {
    users: Var,
    entities: Var,
    relations: Var,
}

fn uniform<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-bound..bound)))
}

fn non_finite(what: &'static str, epoch: usize, phase: &'static str) -> Error {
    Error::NonFinite { what, epoch, phase }
}

pub struct Model<T: Real> {
    hp: HyperParams,
    schedule: NoiseSchedule,
    rec: ParamStore<T>,
    rec_ids: RecParams,
    rec_opt: Adam<T>,
    diff: ParamStore<T>,
    denoiser: Option<Denoiser>,
    diff_opt: Adam<T>,
    kg_prime: KnowledgeGraph,
    epoch: usize,
}

impl<T: Real> Model<T> {
    pub fn new(hp: HyperParams, schedule: NoiseSchedule, data: &Dataset<T>) -> Result<Self> {
        let kg = &data.kg;
        if !hp.disable_dm {
            check_k(hp.k, kg.n_entities())?;
        }
        let mut rng = Self::stream(hp.seed, 0, PHASE_INIT);
        let d = hp.d;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rec = ParamStore::new();
        let users = rec.add("rec/users", uniform(data.n_users(), d, bound, &mut rng));
        let entities = rec.add("rec/entities", uniform(kg.n_entities(), d, bound, &mut rng));
        let relations = rec.add("rec/relations", uniform(kg.n_relations().max(1), d, bound, &mut rng));
        let w_bound = (6.0 / (3 * d) as f64).sqrt();
        let attention = (0..hp.agg_layers)
            .map(|l| rec.add(format!("rec/attention{l}"), uniform(d, 2 * d, w_bound, &mut rng)))
            .collect();
        let rec_ids = RecParams {
            users,
            entities,
            relations,
            attention,
        };
        let mut diff = ParamStore::new();
        let denoiser =
            (!hp.disable_dm).then(|| Denoiser::new(&mut diff, kg.n_entities(), hp.hidden, hp.leaky_slope, &mut rng));
        let rec_opt = Adam::new(&rec, hp.lr_rec);
        let diff_opt = Adam::new(&diff, hp.lr_diff);
        Ok(Self {
            hp,
            schedule,
            rec,
            rec_ids,
            rec_opt,
            diff,
            denoiser,
            diff_opt,
            kg_prime: kg.clone(),
            epoch: 0,
        })
    }

    fn stream(seed: u64, epoch: usize, phase: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64 * 4 + phase);
        rng
    }

    fn rng(&self, phase: u64) -> ChaCha8Rng {
        Self::stream(self.hp.seed, self.epoch, phase)
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn rec_params(&self) -> (&ParamStore<T>, &RecParams) {
        (&self.rec, &self.rec_ids)
    }

    pub fn rec_params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.rec
    }

    pub fn denoiser(&self) -> Option<(&ParamStore<T>, &Denoiser)> {
        self.denoiser.as_ref().map(|d| (&self.diff, d))
    }

    /// The current denoised graph `G_k′`.
    pub fn kg_prime(&self) -> &KnowledgeGraph {
        &self.kg_prime
    }

    fn lambda0(&self) -> f64 {
        if self.hp.disable_ckgc {
            0.0
        } else {
            self.hp.lambda0
        }
    }

    fn place(&self, tape: &mut Tape<T>, trainable: bool) -> (Placed, Vec<Var>) {
        let put = |tape: &mut Tape<T>, id| {
            if trainable {
                tape.param(&self.rec, id)
            } else {
                tape.frozen(&self.rec, id)
            }
        };
        let placed = Placed {
            users: put(tape, self.rec_ids.users),
            entities: put(tape, self.rec_ids.entities),
            relations: put(tape, self.rec_ids.relations),
        };
        let ws = self.rec_ids.attention.iter().map(|&id| put(tape, id)).collect();
        (placed, ws)
    }

    #[allow(clippy::too_many_arguments)]
    fn view<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        p: Placed,
        ws: &[Var],
        index: &KgIndex,
        data: &Dataset<T>,
        out_dropout: f64,
        rng: &mut R,
    ) -> Result<(Var, Var)> {
        let cfg = AggregatorConfig {
            slope: self.hp.leaky_slope,
            out_dropout,
        };
        let items = aggregate(tape, p.entities, p.relations, ws, index, cfg, rng)?;
        Ok(encode(tape, p.users, items, &data.adj, self.hp.layers)?)
    }

    /// Runs all three phases once.
    pub fn train_epoch(&mut self, data: &Dataset<T>) -> Result<EpochStats> {
        let mut stats = EpochStats {
            epoch: self.epoch,
            ..EpochStats::default()
        };
        if !self.hp.disable_dm {
            let (elbo, ckgc, kgdm) = self.diffusion_phase(data)?;
            stats.elbo = elbo;
            stats.ckgc = ckgc;
            stats.kgdm = kgdm;
        }
        self.refresh_kg_prime(data)?;
        let (bpr, cl, rec) = self.recommendation_phase(data)?;
        stats.bpr = bpr;
        stats.cl = cl;
        stats.rec = rec;
        self.epoch += 1;
        Ok(stats)
    }

    /// Phase 1. Returns mean `(elbo, ckgc, kgdm)` over batches.
    pub fn diffusion_phase(&mut self, data: &Dataset<T>) -> Result<(f64, f64, f64)> {
        let Some(net) = self.denoiser.clone() else {
            return Ok((0.0, 0.0, 0.0));
        };
        let mut rng = self.rng(PHASE_DIFFUSION);
        let mut order: Vec<usize> = (0..data.n_items()).collect();
        order.shuffle(&mut rng);
        let lambda0 = self.lambda0();
        let (mut elbo_sum, mut ckgc_sum, mut total_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(self.hp.diff_batch_size) {
            let x0: Tensor<T> = data.kg.adjacency_rows(batch);
            let steps: Vec<usize> = (0..batch.len())
                .map(|_| rng.random_range(1..=self.schedule.steps()))
                .collect();
            let noise = gaussian_like(x0.shape(), &mut rng);
            let mut tape = Tape::new();
            let (elbo, pred) = elbo_loss(&mut tape, &net, &self.diff, &x0, &steps, &noise, &self.schedule)?;
            let ckgc = if lambda0 > 0.0 {
                let inter = BatchInteractions::new(&data.train, batch)?;
                let users = tape.frozen(&self.rec, self.rec_ids.users);
                let table = self.rec.get(self.rec_ids.entities).gather_rows(batch)?;
                let items = tape.constant(table);
                Some(ckgc_loss(&mut tape, &inter, pred, users, items)?)
            } else {
                None
            };
            let loss = kgdm_loss(&mut tape, elbo, ckgc, lambda0)?;
            let value = tape.value(loss).item().as_f64();
            if !value.is_finite() {
                return Err(non_finite("diffusion loss", self.epoch, "diffusion"));
            }
            let grads = tape.backward(loss)?.for_store(&self.diff);
            self.diff_opt
                .step(&mut self.diff, &grads)
                .map_err(|_| non_finite("denoiser gradient", self.epoch, "diffusion"))?;
            elbo_sum += tape.value(elbo).item().as_f64();
            ckgc_sum += ckgc.map_or(0.0, |c| tape.value(c).item().as_f64());
            total_sum += value;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        Ok((elbo_sum / n, ckgc_sum / n, total_sum / n))
    }

    /// Phase 2: regenerates `G_k′` from the current denoiser, or copies the
    /// original graph when diffusion is disabled.
    pub fn refresh_kg_prime(&mut self, data: &Dataset<T>) -> Result<()> {
        self.kg_prime = self.generate_kg_prime(data, self.epoch)?;
        Ok(())
    }

    fn generate_kg_prime(&self, data: &Dataset<T>, epoch: usize) -> Result<KnowledgeGraph> {
        let Some(net) = &self.denoiser else {
            return Ok(data.kg.clone());
        };
        let mut rng = Self::stream(self.hp.seed, epoch, PHASE_REBUILD);
        let items: Vec<usize> = (0..data.n_items()).collect();
        let mut selection = Vec::with_capacity(items.len());
        for batch in items.chunks(self.hp.diff_batch_size) {
            let x0: Tensor<T> = data.kg.adjacency_rows(batch);
            let x = reverse_generate(&x0, &self.schedule, net, &self.diff, &mut rng)?;
            if !x.all_finite() {
                return Err(non_finite("generated adjacency", epoch, "rebuild"));
            }
            selection.extend((0..x.rows()).map(|r| topk_entities(x.row(r), self.hp.k)));
        }
        Ok(rebuild_from_selection(&data.kg, &selection)?)
    }

    /// Phase 3. Returns mean `(bpr, cl, total)` over batches.
    pub fn recommendation_phase(&mut self, data: &Dataset<T>) -> Result<(f64, f64, f64)> {
        let mut rng = self.rng(PHASE_REC);
        let index2 = KgIndex::new(&self.kg_prime);
        let n_batches = data.train.n_interactions().div_ceil(self.hp.batch_size).max(1);
        let use_cl = !self.hp.disable_cl && self.hp.lambda1 > 0.0;
        let (mut bpr_sum, mut cl_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for _ in 0..n_batches {
            let triples = sample_bpr_triples(&data.train, self.hp.batch_size, &mut rng);
            if triples.is_empty() {
                return Err(Error::Invalid(
                    "no user has both an observed and an unobserved item; nothing to rank".into(),
                ));
            }
            let mut tape = Tape::new();
            let (p, ws) = self.place(&mut tape, true);
            let (xu2, xi2) = self.view(&mut tape, p, &ws, &index2, data, self.hp.out_dropout, &mut rng)?;

            let u_idx: Arc<[usize]> = triples.iter().map(|t| t.user).collect();
            let i_idx: Arc<[usize]> = triples.iter().map(|t| t.pos).collect();
            let j_idx: Arc<[usize]> = triples.iter().map(|t| t.neg).collect();
            let eu = tape.gather_rows(xu2, u_idx)?;
            let ei = tape.gather_rows(xi2, i_idx)?;
            let ej = tape.gather_rows(xi2, j_idx)?;
            let pos = tape.mul(eu, ei)?;
            let pos = tape.sum_rows(pos)?;
            let neg = tape.mul(eu, ej)?;
            let neg = tape.sum_rows(neg)?;
            let bpr = bpr_loss(&mut tape, pos, neg)?;

            let cl = if use_cl {
                let dropped = data.kg.dropout(self.hp.kg_dropout, &mut rng)?;
                let index1 = KgIndex::new(&dropped);
                let (xu1, xi1) = self.view(&mut tape, p, &ws, &index1, data, self.hp.out_dropout, &mut rng)?;
                let users: Arc<[usize]> = triples
                    .iter()
                    .map(|t| t.user)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let items: Arc<[usize]> = triples
                    .iter()
                    .flat_map(|t| [t.pos, t.neg])
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let a = tape.gather_rows(xu1, users.clone())?;
                let b = tape.gather_rows(xu2, users)?;
                let cl_u = infonce(&mut tape, a, b, self.hp.tau)?;
                let a = tape.gather_rows(xi1, items.clone())?;
                let b = tape.gather_rows(xi2, items)?;
                let cl_i = infonce(&mut tape, a, b, self.hp.tau)?;
                Some(tape.add(cl_u, cl_i)?)
            } else {
                None
            };

            let mut l2 = tape.sum_sq(p.users);
            for v in [p.entities, p.relations].into_iter().chain(ws.iter().copied()) {
                let s = tape.sum_sq(v);
                l2 = tape.add(l2, s)?;
            }
            let loss = rec_loss(&mut tape, bpr, cl, l2, self.hp.lambda1, self.hp.lambda2)?;
            let value = tape.value(loss).item().as_f64();
            if !value.is_finite() {
                return Err(non_finite("recommendation loss", self.epoch, "recommendation"));
            }
            let grads = tape.backward(loss)?.for_store(&self.rec);
            self.rec_opt
                .step(&mut self.rec, &grads)
                .map_err(|_| non_finite("recommendation gradient", self.epoch, "recommendation"))?;
            bpr_sum += tape.value(bpr).item().as_f64();
            cl_sum += cl.map_or(0.0, |c| tape.value(c).item().as_f64());
            total_sum += value;
        }
        let n = n_batches as f64;
        Ok((bpr_sum / n, cl_sum / n, total_sum / n))
    }

    /// Final `(users, items)` encodings on `G_k′` without dropout.
    pub fn encodings(&self, data: &Dataset<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let (p, ws) = self.place(&mut tape, false);
        let index = KgIndex::new(&self.kg_prime);
        let mut rng = self.rng(PHASE_INIT);
        let (xu, xi) = self.view(&mut tape, p, &ws, &index, data, 0.0, &mut rng)?;
        Ok((tape.value(xu).clone(), tape.value(xi).clone()))
    }

    pub fn evaluate(&self, data: &Dataset<T>) -> Result<EvalReport> {
        let (xu, xi) = self.encodings(data)?;
        Ok(evaluate_full_rank(&xu, &xi, &data.train, &data.test, self.hp.top_n))
    }

    /// Top-`n` unseen items for `user` with their scores.
    pub fn recommend(&self, data: &Dataset<T>, user: usize, n: usize) -> Result<Vec<(usize, f64)>> {
        if user >= data.n_users() {
            return Err(Error::Invalid(format!("user {user} outside 0..{}", data.n_users())));
        }
        let (xu, xi) = self.encodings(data)?;
        let scores: Vec<f64> = predict_scores(xu.row(user), &xi).into_iter().map(Real::as_f64).collect();
        let ranked = rank_top_n(&scores, data.train.items_of(user), n);
        Ok(ranked.into_iter().map(|i| (i, scores[i])).collect())
    }

    /// Parameters, optimiser state and epoch counter.
    pub fn checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        ck.push("meta/epoch", Tensor::scalar(T::lit(self.epoch as f64)));
        for (group, store, opt) in [("rec", &self.rec, &self.rec_opt), ("diff", &self.diff, &self.diff_opt)] {
            for (_, name, value) in store.iter() {
                ck.push(name, value.clone());
            }
            ck.push(format!("adam/{group}/step"), Tensor::scalar(T::lit(opt.steps() as f64)));
            let (m, v) = opt.moments();
            for (((_, name, _), m), v) in store.iter().zip(m).zip(v) {
                ck.push(format!("adam/{group}/m/{name}"), m.clone());
                ck.push(format!("adam/{group}/v/{name}"), v.clone());
            }
        }
        ck
    }

    /// Rebuilds a model from a checkpoint taken with the same
    /// hyperparameters and dataset, regenerating `G_k′` exactly as the
    /// last completed epoch produced it.
    pub fn from_checkpoint(
        hp: HyperParams,
        schedule: NoiseSchedule,
        data: &Dataset<T>,
        ck: &Checkpoint<T>,
    ) -> Result<Self> {
        let mut model = Self::new(hp, schedule, data)?;
        model.epoch = ck.require("meta/epoch")?.item().as_f64() as usize;
        for (group, store, opt) in [
            ("rec", &mut model.rec, &mut model.rec_opt),
            ("diff", &mut model.diff, &mut model.diff_opt),
        ] {
            let ids: Vec<ParamId> = store.ids().collect();
            let (mut first, mut second) = (Vec::new(), Vec::new());
            for &id in &ids {
                let name = store.name(id).to_string();
                store.set(id, ck.require(&name)?.clone())?;
                first.push(ck.require(&format!("adam/{group}/m/{name}"))?.clone());
                second.push(ck.require(&format!("adam/{group}/v/{name}"))?.clone());
            }
            let step = ck.require(&format!("adam/{group}/step"))?.item().as_f64() as u64;
            opt.restore(step, first, second)?;
        }
        if model.epoch > 0 {
            model.kg_prime = model.generate_kg_prime(data, model.epoch - 1)?;
        }
        Ok(model)
    }
}
