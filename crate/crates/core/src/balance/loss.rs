use crate::autodiff::{Tape, Var};
use crate::error::{contract_err, Result};

pub const PROB_FLOOR: f64 = 1e-12;

fn check_probs(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if let Some(bad) = tape.value(v).data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(contract_err!("{what} contains {bad}, outside [0, 1]"));
    }
    Ok(())
}

/// `−mean(ln D_real) − mean(ln(1 − D_fake))`.
pub fn discriminator_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var> {
    check_probs(tape, d_real, "D_real")?;
    check_probs(tape, d_fake, "D_fake")?;
    let lr = tape.log_floor(d_real, PROB_FLOOR);
    let real = tape.mean(lr)?;
    let one_minus = tape.affine(d_fake, -1.0, 1.0);
    let lf = tape.log_floor(one_minus, PROB_FLOOR);
    let fake = tape.mean(lf)?;
    let s = tape.add(real, fake)?;
    Ok(tape.affine(s, -1.0, 0.0))
}

/// `−mean(ln D_fake)`.
pub fn generator_loss(tape: &mut Tape, d_fake: Var) -> Result<Var> {
    check_probs(tape, d_fake, "D_fake")?;
    let l = tape.log_floor(d_fake, PROB_FLOOR);
    let m = tape.mean(l)?;
    Ok(tape.affine(m, -1.0, 0.0))
}
