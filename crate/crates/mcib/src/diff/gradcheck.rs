//! Finite-difference validation of analytic gradients.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Compares the tape's analytic gradients against central finite differences
/// for a scalar function built by `build` from the given parameters.
///
/// `build` must be deterministic: any randomness (noise draws, batch order)
/// has to be frozen into the closure. This is checked by evaluating the loss
/// twice and requiring bitwise equality.
pub fn grad_check<F>(params: &[Tensor], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::usage(format!("step must be positive, got {step}")));
    }
    if params.is_empty() {
        return Err(Error::usage("grad_check needs at least one parameter"));
    }

    let base = eval(params, &build)?;
    let again = eval(params, &build)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::usage(
            "function is not deterministic: two evaluations differ; freeze the seed/noise",
        ));
    }

    // Analytic gradients from one reverse pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::usage("grad_check needs a scalar-valued function"));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(&tape, *v)).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        worst_coord: 0,
        coords_checked: 0,
    };

    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for j in 0..param.len() {
            let orig = param.data()[j];
            work[pi].data_mut()[j] = orig + step;
            let f_plus = eval(&work, &build)?;
            work[pi].data_mut()[j] = orig - step;
            let f_minus = eval(&work, &build)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let a = analytic[pi].data()[j];
            let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = pi;
                report.worst_coord = j;
            }
        }
    }
    Ok(report)
}

fn eval<F>(params: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.value(loss).item()
}
