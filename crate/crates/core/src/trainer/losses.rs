use numgrad::{Real, Result, Tape, Var};

/// `−mean log σ(ŷ_ui − ŷ_uj)` over `[batch, 1]` score columns.
pub fn bpr_loss<T: Real>(tape: &mut Tape<T>, pos: Var, neg: Var) -> Result<Var> {
    let diff = tape.sub(pos, neg)?;
    let ls = tape.log_sigmoid(diff);
    let m = tape.mean(ls);
    Ok(tape.scale(m, -T::one()))
}

/// `(1 − λ0)·L_elbo + λ0·L_ckgc`; a missing CKGC term means `λ0 = 0`.
pub fn kgdm_loss<T: Real>(tape: &mut Tape<T>, elbo: Var, ckgc: Option<Var>, lambda0: f64) -> Result<Var> {
    match ckgc {
        None => Ok(elbo),
        Some(c) => {
            let a = tape.scale(elbo, T::lit(1.0 - lambda0));
            let b = tape.scale(c, T::lit(lambda0));
            tape.add(a, b)
        }
    }
}

/// `L_bpr + λ1·L_cl + λ2·‖Θ‖²`; a missing contrastive term is dropped.
pub fn rec_loss<T: Real>(
    tape: &mut Tape<T>,
    bpr: Var,
    cl: Option<Var>,
    l2: Var,
    lambda1: f64,
    lambda2: f64,
) -> Result<Var> {
    let reg = tape.scale(l2, T::lit(lambda2));
    let mut total = tape.add(bpr, reg)?;
    if let Some(cl) = cl {
        let c = tape.scale(cl, T::lit(lambda1));
        total = tape.add(total, c)?;
    }
    Ok(total)
}
