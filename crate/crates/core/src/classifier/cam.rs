//! Channel attention: per-channel gates from average- and max-pooled
//! statistics passed through a shared bottleneck MLP.

use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Bound parameters of the shared two-layer MLP (`ch → ch/r → ch`).
#[derive(Clone, Copy, Debug)]
pub struct CamVars {
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

fn mlp(tape: &mut Tape, x: Var, p: &CamVars) -> Result<Var> {
    let h = tape.linear(x, p.fc1_w, Some(p.fc1_b))?;
    let h = tape.relu(h);
    tape.linear(h, p.fc2_w, Some(p.fc2_b))
}

/// Attention weights `a = σ(MLP(avg(x)) + MLP(max(x)))`, shape `[batch, ch]`.
pub fn cam_weights(tape: &mut Tape, featmap: Var, p: &CamVars) -> Result<Var> {
    let avg = tape.mean_last(featmap)?;
    let max = tape.max_last(featmap)?;
    let a = mlp(tape, avg, p)?;
    let m = mlp(tape, max, p)?;
    let s = tape.add(a, m)?;
    Ok(tape.sigmoid(s))
}

/// `a ⊙ x`, broadcasting the per-channel weights over the length axis.
pub fn cam_forward(tape: &mut Tape, featmap: Var, p: &CamVars) -> Result<Var> {
    let a = cam_weights(tape, featmap, p)?;
    tape.scale_rows(featmap, a)
}
