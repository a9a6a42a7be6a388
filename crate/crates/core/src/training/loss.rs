use crate::diffcore::{DiffArray, Real, Tape, Var};
use crate::pipeline::Normalizer;
use crate::{Error, Result};

/// Maps normalised predictions (innermost axis = feature) back to raw units.
pub fn denormalize_var<T: Real>(tape: &mut Tape<T>, pred: Var, normalizer: &Normalizer) -> Result<Var> {
    let d = normalizer.n_features();
    if tape.shape(pred).last() != Some(&d) {
        return Err(Error::shape(format!(
            "prediction shape {:?} does not end in {d} features",
            tape.shape(pred)
        )));
    }
    let std = tape.constant(DiffArray::from_f64(vec![d], &normalizer.std)?);
    let mean = tape.constant(DiffArray::from_f64(vec![d], &normalizer.mean)?);
    let scaled = tape.mul(pred, std)?;
    tape.add(scaled, mean)
}

/// Mean absolute error over cells with `target >= threshold`; when no cell
/// qualifies, the plain MAE over all cells. `pred` is in raw units.
pub fn masked_mae_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: &[f64], threshold: f64) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    if shape.iter().product::<usize>() != target.len() {
        return Err(Error::shape(format!(
            "prediction shape {shape:?} does not match {} targets",
            target.len()
        )));
    }
    let kept = target.iter().filter(|&&t| t >= threshold).count();
    let (mask, count): (Vec<f64>, usize) = if kept > 0 {
        (
            target.iter().map(|&t| if t >= threshold { 1.0 } else { 0.0 }).collect(),
            kept,
        )
    } else {
        (vec![1.0; target.len()], target.len())
    };
    let t = tape.constant(DiffArray::from_f64(shape.clone(), target)?);
    let m = tape.constant(DiffArray::from_f64(shape, &mask)?);
    let diff = tape.sub(pred, t)?;
    let abs = tape.abs(diff);
    let masked = tape.mul(abs, m)?;
    let total = tape.sum(masked);
    Ok(tape.scale(total, T::lit(1.0 / count as f64)))
}
