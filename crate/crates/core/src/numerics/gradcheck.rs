//! Central-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// gradients that are zero up to rounding are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// `(parameter index, element index)` of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn evaluate<E>(f: &E, params: &[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)>
where
    E: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let root = f(&mut tape, &vars)?;
    let value = tape.value(root).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {value}")));
    }
    let grads = tape.backward(root)?;
    let analytic = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();
    Ok((value, analytic))
}

fn objective<E>(f: &E, params: &[Tensor<f64>]) -> Result<f64>
where
    E: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let root = f(&mut tape, &vars)?;
    let value = tape.value(root).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {value}")));
    }
    Ok(value)
}

/// Compares reverse-mode gradients of the scalar `f` against
/// `(f(θ+h) − f(θ−h)) / 2h` for every element of every parameter.
///
/// `f` must be deterministic: any dropout inside it needs a freshly seeded
/// generator per call.
pub fn grad_check<E>(f: E, params: &[Tensor<f64>], options: GradCheckOptions) -> Result<GradCheckReport>
where
    E: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let h = options.step;
    let (_, analytic) = evaluate(&f, params)?;
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let original = params[p].data()[i];
            work[p].data_mut()[i] = original + h;
            let plus = objective(&f, &work)?;
            work[p].data_mut()[i] = original - h;
            let minus = objective(&f, &work)?;
            work[p].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let exact = analytic[p].data()[i];
            let abs = (exact - numeric).abs();
            let rel = abs / exact.abs().max(numeric.abs()).max(options.floor);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (p, i);
            }
            report.max_absolute_error = report.max_absolute_error.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}
