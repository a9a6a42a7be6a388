use rayon::prelude::*;

use crate::clustering::dtw_distance;
use crate::pipeline::DemandTensor;
use crate::{Error, Result};

/// Symmetric pairwise distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    dist: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(n: usize, dist: Vec<f64>) -> Result<Self> {
        if n == 0 || dist.len() != n * n {
            return Err(Error::shape(format!("{} entries for a {n}x{n} matrix", dist.len())));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::Cluster(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let v = dist[i * n + j];
                if !(v.is_finite() && v >= 0.0) || v != dist[j * n + i] {
                    return Err(Error::Cluster(format!(
                        "entry ({i}, {j}) breaks symmetry or nonnegativity"
                    )));
                }
            }
        }
        Ok(Self { n, dist })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn rows(&self) -> &[f64] {
        &self.dist
    }
}

/// DTW distance between the feature-0 series of every region pair of the
/// training split. The upper triangle is computed in parallel and mirrored.
pub fn similarity_matrix(train: &DemandTensor) -> Result<SimilarityMatrix> {
    let n = train.n_regions();
    let series: Vec<Vec<f64>> = (0..n).map(|r| train.series(r, 0)).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&series[i], &series[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut dist = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        dist[i * n + j] = v;
        dist[j * n + i] = v;
    }
    Ok(SimilarityMatrix { n, dist })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(series: &[&[f64]]) -> DemandTensor {
        let steps = series[0].len();
        let mut values = Vec::new();
        for t in 0..steps {
            for s in series {
                values.push(s[t]);
            }
        }
        DemandTensor::new(
            values,
            steps,
            (0..series.len()).map(|i| format!("r{i}")).collect(),
            1,
            0,
            60,
            0,
        )
        .unwrap()
    }

    #[test]
    fn entries_match_pairwise_dtw() {
        let s: [&[f64]; 3] = [&[1., 5., 2., 0.], &[1., 5., 2., 0.], &[3., 0., 0., 4.]];
        let m = similarity_matrix(&tensor(&s)).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        for i in 0..3 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(m.get(i, j), dtw_distance(s[i], s[j]).unwrap());
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn single_region_is_zero_matrix() {
        let m = similarity_matrix(&tensor(&[&[1., 2., 3.]])).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.rows(), &[0.0]);
    }

    #[test]
    fn from_rows_validates() {
        assert!(SimilarityMatrix::from_rows(2, vec![0., 1., 2., 0.]).is_err());
        assert!(SimilarityMatrix::from_rows(2, vec![1., 1., 1., 0.]).is_err());
        assert!(SimilarityMatrix::from_rows(2, vec![0., 1., 1., 0.]).is_ok());
    }
}
