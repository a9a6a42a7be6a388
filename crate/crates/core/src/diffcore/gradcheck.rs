use crate::diffcore::{DiffArray, Tape, Var};
use crate::{Error, Result};

/// Compares reverse-mode gradients of a scalar function against central
/// differences for every coordinate of every parameter array.
///
/// Returns `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check_many<F>(f: F, params: &[DiffArray<f64>], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let eval = |arrays: &[DiffArray<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = arrays.iter().map(|a| tape.constant(a.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|a| tape.param(a.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    scalar_of(&tape, loss)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();
    drop(tape);

    let mut worst = 0.0f64;
    let mut work: Vec<DiffArray<f64>> = params.to_vec();
    for (pi, grads) in analytic.iter().enumerate() {
        for (ci, &a) in grads.iter().enumerate() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + step;
            let up = eval(&work)?;
            work[pi].data_mut()[ci] = orig - step;
            let down = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Single-array form of [`grad_check_many`].
pub fn grad_check<F>(f: F, param: &DiffArray<f64>, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|t, v| f(t, v[0]), std::slice::from_ref(param), step)
}

fn scalar_of(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let value = tape.value(v);
    if value.numel() != 1 {
        return Err(Error::contract(format!(
            "gradient check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    let s = value.data()[0];
    if !s.is_finite() {
        return Err(Error::Numeric(format!("function value {s} is not finite")));
    }
    Ok(s)
}
