//! Label-homogeneous clustering.
//!
//! A worklist starts with one cluster holding the whole dataset. Clusters
//! whose members share a label are emitted; mixed clusters are split by
//! k-means seeded with the mean of each class present and the pieces go
//! back on the worklist.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{self, Centroid, CentroidQuery};

pub const DEFAULT_MAX_ITERS: usize = 100;

// Members per rayon task in the assignment step.
const ASSIGN_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    members: Vec<usize>,
    centroid: Centroid,
    label: u8,
    degenerate: bool,
}

impl Cluster {
    fn build(dataset: &Dataset, members: Vec<usize>, degenerate: bool) -> Self {
        debug_assert!(!members.is_empty());
        let mut centroid = Centroid::zeros(dataset.dim());
        for &i in &members {
            centroid.add(dataset.row(i));
        }
        let label = if degenerate {
            majority_label(dataset, &members)
        } else {
            dataset.label(members[0])
        };
        Self {
            members,
            centroid,
            label,
            degenerate,
        }
    }

    /// Member rows in ascending order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Exact centroid.
    pub fn centroid(&self) -> &Centroid {
        &self.centroid
    }

    /// Shared label, or the majority label (lowest on ties) of a
    /// terminal-degenerate cluster.
    pub fn label(&self) -> u8 {
        self.label
    }

    /// Mixed labels on identical features; cannot be split further.
    pub fn is_terminal_degenerate(&self) -> bool {
        self.degenerate
    }
}

fn majority_label(dataset: &Dataset, members: &[usize]) -> u8 {
    let mut counts = vec![0usize; dataset.n_classes().max(1)];
    for &i in members {
        counts[dataset.label(i) as usize] += 1;
    }
    let mut best = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = l;
        }
    }
    best as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    clusters: Vec<Cluster>,
    source_hash: String,
    n: usize,
}

impl Partition {
    /// Clusters ordered by smallest member index.
    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    /// Row count of the source dataset.
    pub fn source_len(&self) -> usize {
        self.n
    }

    pub fn degenerate_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.degenerate).count()
    }

    /// Checks that member sets are disjoint, cover `0..n`, and that every
    /// non-degenerate cluster is homogeneous.
    pub fn validate(&self, dataset: &Dataset) -> std::result::Result<(), String> {
        if dataset.source_hash() != self.source_hash {
            return Err("partition belongs to another dataset".into());
        }
        let mut seen = vec![false; dataset.len()];
        for (ci, c) in self.clusters.iter().enumerate() {
            if c.members.is_empty() {
                return Err(format!("cluster {ci} is empty"));
            }
            if c.members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("cluster {ci} members not strictly ascending"));
            }
            for &i in &c.members {
                if i >= seen.len() {
                    return Err(format!("cluster {ci} member {i} out of range"));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("row {i} appears in two clusters"));
                }
            }
            if !c.degenerate && c.members.iter().any(|&i| dataset.label(i) != c.label) {
                return Err(format!("cluster {ci} is not homogeneous"));
            }
            if c.degenerate && !all_identical(dataset, &c.members) {
                return Err(format!("degenerate cluster {ci} has distinct features"));
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(format!("row {i} is not covered"));
        }
        Ok(())
    }

    pub fn to_dump(&self) -> PartitionDump {
        PartitionDump {
            source_hash: self.source_hash.clone(),
            n: self.n,
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterDump {
                    label: c.label,
                    degenerate: c.degenerate,
                    members: c.members.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a partition from its dump, recomputing centroids.
    pub fn from_dump(dump: PartitionDump, dataset: &Dataset) -> Result<Self> {
        if dump.source_hash != dataset.source_hash() {
            return Err(Error::StaleCondensedSet {
                expected: dump.source_hash,
                found: dataset.source_hash().to_string(),
            });
        }
        let clusters = dump
            .clusters
            .into_iter()
            .map(|c| {
                if c.members.is_empty() {
                    return Err(Error::EmptyCluster);
                }
                if c.members.iter().any(|&i| i >= dataset.len()) {
                    return Err(Error::InvalidDataset("partition member out of range".into()));
                }
                Ok(Cluster::build(dataset, c.members, c.degenerate))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Partition {
            clusters,
            source_hash: dump.source_hash,
            n: dataset.len(),
        };
        p.validate(dataset).map_err(Error::InvalidDataset)?;
        Ok(p)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_vec(&self.to_dump()).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let dump: PartitionDump = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_dump(dump, dataset)
    }
}

/// Serialized partition: member lists and labels, no geometry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PartitionDump {
    pub source_hash: String,
    pub n: usize,
    pub clusters: Vec<ClusterDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClusterDump {
    pub label: u8,
    pub degenerate: bool,
    pub members: Vec<usize>,
}

pub fn is_homogeneous(dataset: &Dataset, members: &[usize]) -> Result<bool> {
    let (&first, rest) = members.split_first().ok_or(Error::EmptyCluster)?;
    let l = dataset.label(first);
    Ok(rest.iter().all(|&i| dataset.label(i) == l))
}

fn all_identical(dataset: &Dataset, members: &[usize]) -> bool {
    let first = dataset.row(members[0]);
    members[1..].iter().all(|&i| dataset.row(i) == first)
}

/// One exact mean per label present among `members`, in ascending label order.
pub fn class_centroid_seeds(dataset: &Dataset, members: &[usize]) -> Result<Vec<(u8, Centroid)>> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut by_label: Vec<Option<Centroid>> = vec![None; dataset.n_classes()];
    for &i in members {
        by_label[dataset.label(i) as usize]
            .get_or_insert_with(|| Centroid::zeros(dataset.dim()))
            .add(dataset.row(i));
    }
    Ok(by_label
        .into_iter()
        .enumerate()
        .filter_map(|(l, c)| c.map(|c| (l as u8, c)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub max_iters: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    /// Nonempty groups in seed order; members ascending.
    pub groups: Vec<Vec<usize>>,
    /// Assignment passes performed.
    pub iterations: usize,
    /// Whether the last pass reproduced the previous assignment.
    pub converged: bool,
    /// Within-cluster sum of squared distances after each recentering.
    pub sse: Vec<f64>,
}

/// Lloyd's algorithm from the given seeds. Returns nonempty groups in seed
/// order.
pub fn kmeans(dataset: &Dataset, members: &[usize], seeds: &[Centroid]) -> Result<Vec<Vec<usize>>> {
    kmeans_with(dataset, members, seeds, KMeansParams::default()).map(|o| o.groups)
}

pub fn kmeans_with(
    dataset: &Dataset,
    members: &[usize],
    seeds: &[Centroid],
    params: KMeansParams,
) -> Result<KMeansOutcome> {
    if seeds.len() < 2 {
        return Err(Error::InvalidSeeds(seeds.len()));
    }
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let base_sse: f64 = members
        .iter()
        .map(|&i| metric::sq_norm(dataset.row(i)) as f64)
        .sum();

    // Live centroids, each tagged with its seed index. Assignments hold seed
    // indices so they stay comparable after empty groups are dropped.
    let mut live: Vec<(usize, Centroid)> = seeds.iter().cloned().enumerate().collect();
    let mut assignment: Vec<usize> = Vec::new();
    let mut sse = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iters.max(1) {
        let queries: Vec<CentroidQuery<'_>> = live.iter().map(|(_, c)| CentroidQuery::new(c)).collect();
        let next: Vec<usize> = members
            .par_chunks(ASSIGN_CHUNK)
            .flat_map_iter(|chunk| {
                chunk
                    .iter()
                    .map(|&i| live[metric::nearest_centroid(dataset.row(i), &queries)].0)
                    .collect::<Vec<_>>()
            })
            .collect();
        iterations += 1;
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;

        let mut sums: Vec<Option<Centroid>> = vec![None; seeds.len()];
        for (&i, &g) in members.iter().zip(&assignment) {
            sums[g]
                .get_or_insert_with(|| Centroid::zeros(dataset.dim()))
                .add(dataset.row(i));
        }
        live = sums
            .into_iter()
            .enumerate()
            .filter_map(|(g, c)| c.map(|c| (g, c)))
            .collect();
        let explained: f64 = live
            .iter()
            .map(|(_, c)| c.sq_norm() as f64 / c.count() as f64)
            .sum();
        sse.push(base_sse - explained);
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for (&i, &g) in members.iter().zip(&assignment) {
        groups[g].push(i);
    }
    groups.retain(|g| !g.is_empty());
    Ok(KMeansOutcome {
        groups,
        iterations,
        converged,
        sse,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionParams {
    pub kmeans: KMeansParams,
}

pub fn partition_homogeneous(dataset: &Dataset) -> Result<Partition> {
    partition_homogeneous_with(dataset, PartitionParams::default())
}

pub fn partition_homogeneous_with(dataset: &Dataset, params: PartitionParams) -> Result<Partition> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut clusters = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![(0..dataset.len()).collect()];
    while let Some(members) = stack.pop() {
        if is_homogeneous(dataset, &members)? {
            clusters.push(Cluster::build(dataset, members, false));
            continue;
        }
        if all_identical(dataset, &members) {
            clusters.push(Cluster::build(dataset, members, true));
            continue;
        }
        let seeds: Vec<Centroid> = class_centroid_seeds(dataset, &members)?
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        let groups = kmeans_with(dataset, &members, &seeds, params.kmeans)?.groups;
        if groups.len() >= 2 {
            stack.extend(groups);
        } else {
            // Every class mean coincides, so k-means has nothing to pull
            // apart; fall back to splitting by label.
            stack.extend(split_by_label(dataset, members));
        }
    }
    clusters.sort_by_key(|c| c.members[0]);
    Ok(Partition {
        clusters,
        source_hash: dataset.source_hash().to_string(),
        n: dataset.len(),
    })
}

fn split_by_label(dataset: &Dataset, members: Vec<usize>) -> Vec<Vec<usize>> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for i in members {
        by_label[dataset.label(i) as usize].push(i);
    }
    by_label.retain(|g| !g.is_empty());
    by_label
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    /// Whether `hi` is included (only the last bin).
    pub closed: bool,
    pub clusters: usize,
    pub images: usize,
}

/// Counts clusters by size over bins `[e_k, e_{k+1})`, the last bin closed.
/// Sizes outside the edges are not counted.
pub fn cluster_size_histogram(partition: &Partition, bin_edges: &[usize]) -> Result<Vec<HistogramBin>> {
    size_histogram(partition.clusters().iter().map(Cluster::len), bin_edges)
}

/// [`cluster_size_histogram`] over bare cluster sizes.
pub fn size_histogram(sizes: impl IntoIterator<Item = usize>, bin_edges: &[usize]) -> Result<Vec<HistogramBin>> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBins);
    }
    let last = bin_edges.len() - 2;
    let mut bins: Vec<HistogramBin> = bin_edges
        .windows(2)
        .enumerate()
        .map(|(k, w)| HistogramBin {
            lo: w[0],
            hi: w[1],
            closed: k == last,
            clusters: 0,
            images: 0,
        })
        .collect();
    for size in sizes {
        let k = bins
            .iter()
            .position(|b| size >= b.lo && (size < b.hi || (b.closed && size == b.hi)));
        if let Some(k) = k {
            bins[k].clusters += 1;
            bins[k].images += size;
        }
    }
    Ok(bins)
}
