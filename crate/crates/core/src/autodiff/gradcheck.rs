use super::{Tape, Tensor, Var};
use crate::error::{contract_err, Error, Result};

const MAX_COORDS: usize = 10_000;
const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub coordinates_checked: usize,
}

/// Compares tape gradients of `f` with central differences.
///
/// `f` receives the parameters bound as trainable leaves and must return a
/// scalar. Above 10⁴ coordinates, an evenly strided subset is checked.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(contract_err!("finite-difference step {eps} outside (0, 1e-2]"));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(contract_err!("grad_check closure must return a scalar, got {:?}", v.shape()));
        }
        let y = v.item();
        if !y.is_finite() {
            return Err(Error::Numeric(format!("closure produced {y}")));
        }
        Ok(y)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec))
        .collect();

    let coords: Vec<(usize, usize)> =
        params.iter().enumerate().flat_map(|(i, p)| (0..p.numel()).map(move |j| (i, j))).collect();
    let stride = coords.len().div_ceil(MAX_COORDS).max(1);

    let mut work = params.to_vec();
    let mut report = GradCheckReport { max_relative_error: 0.0, max_absolute_error: 0.0, coordinates_checked: 0 };
    for &(i, j) in coords.iter().step_by(stride) {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + eps;
        let up = eval(&work)?;
        work[i].data_mut()[j] = orig - eps;
        let down = eval(&work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i][j];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(ABS_FLOOR);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.coordinates_checked += 1;
    }
    Ok(report)
}
