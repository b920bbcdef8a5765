//! InfoNCE agreement between two encodings of the same nodes.

use numgrad::{Axis, Real, Result, Tape, Tensor, Var};

pub const COSINE_EPS: f64 = 1e-8;

/// Mean over nodes of `−log( exp(s(a_u, b_u)/τ) / Σ_v exp(s(a_u, b_v)/τ) )`
/// with cosine similarity `s`. Row `u` of `a` and `b` encode the same node.
pub fn infonce<T: Real>(tape: &mut Tape<T>, a: Var, b: Var, tau: f64) -> Result<Var> {
    let n = tape.value(a).rows();
    let an = tape.l2_normalize_rows(a, T::lit(COSINE_EPS))?;
    let bn = tape.l2_normalize_rows(b, T::lit(COSINE_EPS))?;
    let bt = tape.transpose(bn)?;
    let sim = tape.matmul(an, bt)?;
    let logits = tape.scale(sim, T::lit(1.0 / tau));
    let log_p = tape.log_softmax(logits, Axis::Cols)?;
    let eye = tape.constant(Tensor::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() }));
    let diag = tape.mul(log_p, eye)?;
    let total = tape.sum(diag);
    Ok(tape.scale(total, T::lit(-1.0 / n as f64)))
}
