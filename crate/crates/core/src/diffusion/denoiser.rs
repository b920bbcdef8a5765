use std::f64::consts::LN_10;

use numgrad::{Axis, ParamId, ParamStore, Real, Result, Tape, Tensor, Var};
use rand::Rng;

/// Width of the sinusoidal step embedding appended to every input row.
pub const STEP_EMBED_DIM: usize = 10;

/// Sinusoidal embedding of each step, `[steps, STEP_EMBED_DIM]`: cosines in
/// the first half, sines in the second.
pub fn step_embedding<T: Real>(steps: &[usize]) -> Tensor<T> {
    let half = STEP_EMBED_DIM / 2;
    Tensor::from_fn(steps.len(), STEP_EMBED_DIM, |r, c| {
        let k = c % half;
        let freq = (-4.0 * LN_10 * k as f64 / half as f64).exp();
        let arg = steps[r] as f64 * freq;
        T::lit(if c < half { arg.cos() } else { arg.sin() })
    })
}

/// One-hidden-layer perceptron predicting `χ̂_0` from `[χ_t ‖ emb(t)]`.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    width: usize,
    hidden: usize,
    slope: f64,
}

fn xavier<T: Real, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| T::lit(rng.random_range(-bound..bound)))
}

impl Denoiser {
    /// Registers `diff/*` parameters for rows of `width` entities.
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        width: usize,
        hidden: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let w1 = store.add("diff/w1", xavier(width + STEP_EMBED_DIM, hidden, rng));
        let b1 = store.add("diff/b1", Tensor::zeros(&[1, hidden]));
        let w2 = store.add("diff/w2", xavier(hidden, width, rng));
        let b2 = store.add("diff/b2", Tensor::zeros(&[1, width]));
        Self {
            w1,
            b1,
            w2,
            b2,
            width,
            hidden,
            slope,
        }
    }

    /// Re-binds to parameters already present in `store`.
    pub fn from_store<T: Real>(store: &ParamStore<T>, slope: f64) -> Option<Self> {
        let w1 = store.find("diff/w1")?;
        let w2 = store.find("diff/w2")?;
        Some(Self {
            w1,
            b1: store.find("diff/b1")?,
            w2,
            b2: store.find("diff/b2")?,
            width: store.get(w2).cols(),
            hidden: store.get(w1).cols(),
            slope,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// Differentiable forward pass; `steps[r]` is the step of row `r`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, steps: &[usize]) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        self.forward_with(tape, [w1, b1, w2, b2], x, steps)
    }

    /// Forward pass with caller-placed parameters in [`Denoiser::params`]
    /// order.
    pub fn forward_with<T: Real>(&self, tape: &mut Tape<T>, p: [Var; 4], x: Var, steps: &[usize]) -> Result<Var> {
        let emb = tape.constant(step_embedding(steps));
        let input = tape.concat(&[x, emb], Axis::Cols)?;
        let h = tape.matmul(input, p[0])?;
        let h = tape.add_row(h, p[1])?;
        let h = tape.leaky_relu(h, T::lit(self.slope));
        let out = tape.matmul(h, p[2])?;
        tape.add_row(out, p[3])
    }

    /// Forward pass with every row at step `t`, recording no gradients.
    pub fn predict<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params().map(|id| tape.frozen(store, id));
        let xv = tape.constant(x.clone());
        let out = self.forward_with(&mut tape, p, xv, &vec![t; x.rows()])?;
        Ok(tape.value(out).clone())
    }
}
