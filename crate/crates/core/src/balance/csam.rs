//! Conditional self-attention over a hidden vector split into tokens.
//!
//! The width-`W` input is zero-padded to `T·d_k` and read as `T` tokens of
//! `d_k` channels. Every token is concatenated with the one-hot condition
//! before the Q/K/V projections, attention runs over the `T` tokens of each
//! sample, and the projected result is added back to the raw input.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract_err, dim_err, Result};

#[derive(Clone, Copy, Debug)]
pub struct CsamVars {
    /// `[d_k + C, d_k]`
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    /// `[d_k, d_k]` and `[d_k]`
    pub w_o: Var,
    pub b_o: Var,
}

pub fn token_count(width: usize, attention_dim: usize) -> usize {
    width.div_ceil(attention_dim)
}

pub(crate) fn check_one_hot(t: &Tensor) -> Result<()> {
    let c = t.last_dim();
    for (i, row) in t.data().chunks(c.max(1)).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(contract_err!("condition row {i} is not one-hot"));
        }
    }
    Ok(())
}

/// `x + narrow(project(softmax(QKᵀ/√d_k)·V))` for `x:[B, W]`, `cond:[B, C]`.
pub fn csam_forward(tape: &mut Tape, x: Var, cond: Var, p: &CsamVars, attention_dim: usize) -> Result<Var> {
    let (xs, cs) = (tape.shape(x).to_vec(), tape.shape(cond).to_vec());
    if xs.len() != 2 || cs.len() != 2 || xs[0] != cs[0] {
        return Err(dim_err!("csam: input {:?} and condition {:?} disagree", xs, cs));
    }
    check_one_hot(tape.value(cond))?;
    let (b, w, c, dk) = (xs[0], xs[1], cs[1], attention_dim);
    let t = token_count(w, dk);
    let padded = if t * dk > w {
        let z = tape.constant(Tensor::zeros(&[b, t * dk - w]));
        tape.concat_last(x, z)?
    } else {
        x
    };
    let tokens = tape.reshape(padded, &[b, t, dk])?;
    let cond_tokens = tape.broadcast_tokens(cond, t)?;
    let h = tape.concat_last(tokens, cond_tokens)?;
    let h = tape.reshape(h, &[b * t, dk + c])?;
    let mut project = |w: Var| -> Result<Var> {
        let y = tape.linear(h, w, None)?;
        tape.reshape(y, &[b, t, dk])
    };
    let (q, k, v) = (project(p.w_q)?, project(p.w_k)?, project(p.w_v)?);
    let kt = tape.transpose_last(k)?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.affine(scores, 1.0 / (dk as f64).sqrt(), 0.0);
    let attn = tape.softmax(scores)?;
    let ctx = tape.bmm(attn, v)?;
    let ctx = tape.reshape(ctx, &[b * t, dk])?;
    let out = tape.linear(ctx, p.w_o, Some(p.b_o))?;
    let out = tape.reshape(out, &[b, t * dk])?;
    let out = tape.narrow_last(out, 0, w)?;
    tape.add(x, out)
}
