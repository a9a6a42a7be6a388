use crate::clustering::{cluster_distance, Partition, SimilarityMatrix};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD_FACTOR: f64 = 1.5;

/// `ceil(factor * N / M)`, at least 1.
pub fn default_threshold(n_regions: usize, n_clusters: usize, factor: f64) -> usize {
    ((factor * n_regions as f64 / n_clusters as f64).ceil() as usize).max(1)
}

/// Caps cluster sizes at `threshold`.
///
/// While some cluster is oversized (the lowest-indexed one first), its member
/// with the largest average distance to the rest of the cluster moves to the
/// nearest cluster (average linkage) that still has room. Ties resolve to
/// the lowest index. Cluster indices are preserved and no cluster empties.
pub fn balance(partition: &Partition, sim: &SimilarityMatrix, threshold: usize) -> Result<Partition> {
    let n = partition.n_regions();
    let m = partition.n_clusters();
    if threshold == 0 {
        return Err(Error::Cluster("balancing threshold must be at least 1".into()));
    }
    if m * threshold < n {
        return Err(Error::Cluster(format!(
            "cannot fit {n} regions into {m} clusters of at most {threshold}"
        )));
    }
    if sim.len() != n {
        return Err(Error::shape(format!(
            "similarity matrix covers {} regions, partition {n}",
            sim.len()
        )));
    }
    let mut out = partition.clone();
    loop {
        let clusters = out.clusters();
        let Some(src) = clusters.iter().position(|c| c.len() > threshold) else {
            break;
        };
        let members = &clusters[src];
        let mut evict = (f64::NEG_INFINITY, members[0]);
        for &p in members {
            let total: f64 = members.iter().filter(|&&q| q != p).map(|&q| sim.get(p, q)).sum();
            let avg = total / (members.len() - 1) as f64;
            if avg > evict.0 {
                evict = (avg, p);
            }
        }
        let region = evict.1;
        let mut dest = (f64::INFINITY, usize::MAX);
        for (j, c) in clusters.iter().enumerate() {
            if j == src || c.len() >= threshold {
                continue;
            }
            let d = cluster_distance(&[region], c, sim)?;
            if d < dest.0 {
                dest = (d, j);
            }
        }
        // feasibility guarantees some cluster has room
        debug_assert!(dest.1 != usize::MAX);
        out.move_region(region, dest.1);
    }
    Ok(out)
}
