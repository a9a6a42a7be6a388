use crate::pipeline::DemandTensor;
use crate::{Error, Result};

pub const DEFAULT_RATIOS: (usize, usize, usize) = (7, 1, 2);

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: DemandTensor,
    pub val: DemandTensor,
    pub test: DemandTensor,
}

/// Contiguous chronological split. Train and validation sizes are floored;
/// the remainder goes to test.
pub fn chronological_split(tensor: &DemandTensor, ratios: (usize, usize, usize)) -> Result<Splits> {
    let total = tensor.steps();
    if total < 10 {
        return Err(Error::contract(format!(
            "series of {total} steps is too short to split (need at least 10)"
        )));
    }
    let denom = ratios.0 + ratios.1 + ratios.2;
    if ratios.0 == 0 || ratios.1 == 0 || ratios.2 == 0 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be positive")));
    }
    let n_train = total * ratios.0 / denom;
    let n_val = total * ratios.1 / denom;
    if n_train == 0 || n_val == 0 || n_train + n_val >= total {
        return Err(Error::contract(format!(
            "series of {total} steps leaves an empty split"
        )));
    }
    Ok(Splits {
        train: tensor.slice_steps(0..n_train)?,
        val: tensor.slice_steps(n_train..n_train + n_val)?,
        test: tensor.slice_steps(n_train + n_val..total)?,
    })
}
