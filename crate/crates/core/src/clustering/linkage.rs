use crate::clustering::SimilarityMatrix;
use crate::{Error, Result};

/// Assignment of regions to `n_clusters` disjoint, non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        let mut used = vec![false; n_clusters];
        for &c in &assignment {
            if c >= n_clusters {
                return Err(Error::Cluster(format!(
                    "cluster index {c} out of range for {n_clusters} clusters"
                )));
            }
            used[c] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Cluster(format!("cluster {empty} is empty")));
        }
        Ok(Self {
            assignment,
            n_clusters,
        })
    }

    /// Builds a partition from member lists; cluster `m` is `clusters[m]`.
    pub fn from_clusters(clusters: &[Vec<usize>], n_regions: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n_regions];
        for (m, members) in clusters.iter().enumerate() {
            for &r in members {
                if r >= n_regions || assignment[r] != usize::MAX {
                    return Err(Error::Cluster(format!(
                        "region {r} is out of range or assigned twice"
                    )));
                }
                assignment[r] = m;
            }
        }
        if let Some(r) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(Error::Cluster(format!("region {r} is unassigned")));
        }
        Self::new(assignment, clusters.len())
    }

    pub fn n_regions(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, region: usize) -> usize {
        self.assignment[region]
    }

    /// Member lists in ascending region order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (r, &c) in self.assignment.iter().enumerate() {
            out[c].push(r);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_clusters];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }

    /// Binary `M x N` membership matrix, row-major.
    pub fn cluster_map(&self) -> Vec<f64> {
        let n = self.n_regions();
        let mut map = vec![0.0; self.n_clusters * n];
        for (r, &c) in self.assignment.iter().enumerate() {
            map[c * n + r] = 1.0;
        }
        map
    }

    pub(crate) fn move_region(&mut self, region: usize, to: usize) {
        self.assignment[region] = to;
    }
}

/// Average pairwise distance between two disjoint, non-empty clusters.
pub fn cluster_distance(ci: &[usize], cj: &[usize], sim: &SimilarityMatrix) -> Result<f64> {
    if ci.is_empty() || cj.is_empty() {
        return Err(Error::contract("cluster distance needs non-empty clusters"));
    }
    if ci.iter().any(|p| cj.contains(p)) {
        return Err(Error::contract("cluster distance needs disjoint clusters"));
    }
    let total: f64 = ci
        .iter()
        .flat_map(|&p| cj.iter().map(move |&q| sim.get(p, q)))
        .sum();
    Ok(total / (ci.len() * cj.len()) as f64)
}

/// Average-linkage agglomeration from singletons down to `target` clusters.
///
/// Clusters are kept ordered by their smallest member; each round merges the
/// pair `(i, j)`, `i < j`, with the smallest average distance, preferring the
/// lexicographically smallest pair on ties. Cluster indices of the result
/// follow the same ordering.
pub fn agglomerate(sim: &SimilarityMatrix, target: usize) -> Result<Partition> {
    let n = sim.len();
    if target == 0 || target > n {
        return Err(Error::Cluster(format!(
            "target cluster count {target} outside 1..={n}"
        )));
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|r| vec![r]).collect();
    // Cross-pair distance sums between live clusters.
    let mut sums: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sim.get(i, j)).collect())
        .collect();
    while clusters.len() > target {
        let live = clusters.len();
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..live {
            for j in i + 1..live {
                let d = sums[i][j] / (clusters[i].len() * clusters[j].len()) as f64;
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let absorbed = clusters.remove(j);
        clusters[i].extend(absorbed);
        clusters[i].sort_unstable();
        let row_j = sums.remove(j);
        for (k, row) in sums.iter_mut().enumerate() {
            let moved = row.remove(j);
            if k != i {
                row[i] += moved;
            }
        }
        for (k, v) in row_j.into_iter().enumerate() {
            if k == j {
                continue;
            }
            let k = if k > j { k - 1 } else { k };
            if k != i {
                sums[i][k] += v;
            }
        }
    }
    Partition::from_clusters(&clusters, n)
}
