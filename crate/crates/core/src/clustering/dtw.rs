use crate::{Error, Result};

/// Classic dynamic time warping: absolute-difference local cost, steps
/// (i-1, j), (i, j-1), (i-1, j-1), no warping window. Two rolling rows.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Cluster("DTW needs non-empty series".into()));
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut cur = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for (j, &y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = (x - y).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[b.len()])
}
