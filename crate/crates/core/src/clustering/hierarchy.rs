use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{agglomerate, balance, default_threshold, Partition, SimilarityMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLevel {
    pub partition: Partition,
    pub threshold: usize,
}

impl ClusterLevel {
    pub fn n_clusters(&self) -> usize {
        self.partition.n_clusters()
    }

    /// Binary `M x N` cluster map.
    pub fn cluster_map(&self) -> Vec<f64> {
        self.partition.cluster_map()
    }
}

/// Ordered aggregation levels with strictly decreasing cluster counts. An
/// empty hierarchy disables spatial aggregation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterHierarchy {
    pub levels: Vec<ClusterLevel>,
}

impl ClusterHierarchy {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(ClusterLevel::n_clusters).collect()
    }

    pub fn n_regions(&self) -> Option<usize> {
        self.levels.first().map(|l| l.partition.n_regions())
    }

    /// Applies a region permutation: new region `i` is old region `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|l| {
                let assignment = order.iter().map(|&o| l.partition.cluster_of(o)).collect();
                Ok(ClusterLevel {
                    partition: Partition::new(assignment, l.partition.n_clusters())?,
                    threshold: l.threshold,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { levels })
    }
}

/// Builds each level independently: agglomerate to the level's count, then
/// balance with `ceil(threshold_factor * N / M)`.
pub fn build_hierarchy(
    sim: &SimilarityMatrix,
    level_counts: &[usize],
    threshold_factor: f64,
) -> Result<ClusterHierarchy> {
    let n = sim.len();
    for (i, &c) in level_counts.iter().enumerate() {
        if c == 0 || c >= n {
            return Err(Error::Cluster(format!(
                "level {i} asks for {c} clusters; need 1 <= count < {n} regions"
            )));
        }
        if i > 0 && c >= level_counts[i - 1] {
            return Err(Error::Cluster(format!(
                "level counts {level_counts:?} must be strictly decreasing"
            )));
        }
    }
    if !(threshold_factor.is_finite() && threshold_factor >= 1.0) {
        return Err(Error::Config(format!(
            "threshold factor {threshold_factor} must be at least 1"
        )));
    }
    let levels = level_counts
        .iter()
        .map(|&m| {
            let threshold = default_threshold(n, m, threshold_factor);
            let partition = balance(&agglomerate(sim, m)?, sim, threshold)?;
            Ok(ClusterLevel {
                partition,
                threshold,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ClusterHierarchy { levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub clusters: usize,
    pub threshold: usize,
    pub assignment: Vec<usize>,
}

/// JSON document persisted by the `cluster` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyFile {
    pub level_counts: Vec<usize>,
    pub threshold_factor: f64,
    pub n_regions: usize,
    pub levels: Vec<LevelRecord>,
    /// Content hash of the training split the hierarchy was built from.
    pub fingerprint: String,
}

impl HierarchyFile {
    pub fn new(h: &ClusterHierarchy, n_regions: usize, threshold_factor: f64, fingerprint: String) -> Self {
        Self {
            level_counts: h.level_counts(),
            threshold_factor,
            n_regions,
            levels: h
                .levels
                .iter()
                .map(|l| LevelRecord {
                    clusters: l.n_clusters(),
                    threshold: l.threshold,
                    assignment: l.partition.assignment().to_vec(),
                })
                .collect(),
            fingerprint,
        }
    }

    pub fn hierarchy(&self) -> Result<ClusterHierarchy> {
        let levels = self
            .levels
            .iter()
            .map(|r| {
                if r.assignment.len() != self.n_regions {
                    return Err(Error::Cluster(format!(
                        "level assignment covers {} regions, expected {}",
                        r.assignment.len(),
                        self.n_regions
                    )));
                }
                Ok(ClusterLevel {
                    partition: Partition::new(r.assignment.clone(), r.clusters)?,
                    threshold: r.threshold,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ClusterHierarchy { levels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_sim(n: usize, seed: u64) -> SimilarityMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.0..10.0);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        SimilarityMatrix::from_rows(n, d).unwrap()
    }

    #[test]
    fn one_level_with_sixteen_clusters() {
        let sim = random_sim(32, 1);
        let h = build_hierarchy(&sim, &[16], 1.5).unwrap();
        assert_eq!(h.level_counts(), vec![16]);
        let map = h.levels[0].cluster_map();
        for r in 0..32 {
            assert_eq!((0..16).map(|m| map[m * 32 + r]).sum::<f64>(), 1.0);
        }
        assert!(h.levels[0].partition.sizes().iter().all(|&s| s <= 3));
    }

    #[test]
    fn empty_level_list_gives_empty_hierarchy() {
        let h = build_hierarchy(&random_sim(5, 2), &[], 1.5).unwrap();
        assert!(h.levels.is_empty());
    }

    #[test]
    fn invalid_counts_fail() {
        let sim = random_sim(8, 3);
        assert!(build_hierarchy(&sim, &[8], 1.5).is_err());
        assert!(build_hierarchy(&sim, &[4, 4], 1.5).is_err());
        assert!(build_hierarchy(&sim, &[2, 4], 1.5).is_err());
        assert!(build_hierarchy(&sim, &[0], 1.5).is_err());
    }

    #[test]
    fn file_round_trip() {
        let sim = random_sim(12, 4);
        let h = build_hierarchy(&sim, &[6, 3], 1.5).unwrap();
        let f = HierarchyFile::new(&h, 12, 1.5, "abc".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.json");
        f.save(&p).unwrap();
        let back = HierarchyFile::load(&p).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.hierarchy().unwrap(), h);
    }
}
