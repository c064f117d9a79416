//! Selection strategies mapping a homogeneous partition to a condensed set.
//!
//! Every strategy except centroid condensation returns verbatim rows of the
//! source dataset. Within a cluster, every tie is resolved toward the lowest
//! dataset index; member lists are ascending, so that is the lowest position.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Partition};
use crate::condensed::{CondensedSet, SyntheticPoint};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric;

// Absorbs the representation error of (1 - alpha) * size before rounding up,
// so that e.g. (1 - 0.7) * 10 counts as 3 rather than 3.0000000000000004.
const QUOTA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rhc,
    Rhckon,
    Koncw,
    Cwkc,
    Ghcidr,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rhc,
        Method::Rhckon,
        Method::Koncw,
        Method::Cwkc,
        Method::Ghcidr,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rhc => "rhc",
            Method::Rhckon => "rhckon",
            Method::Koncw => "koncw",
            Method::Cwkc => "cwkc",
            Method::Ghcidr => "ghcidr",
            Method::Random => "random",
        }
    }

    pub fn uses_alpha(self) -> bool {
        matches!(self, Method::Koncw | Method::Cwkc | Method::Ghcidr | Method::Random)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub method: Method,
    /// Requested reduction fraction.
    pub alpha: f64,
    /// Farthest members per cluster (RHCKON).
    pub k_farthest: usize,
    /// Sampler seed (random baseline).
    pub seed: u64,
    /// Exact sample size for the random baseline; derived from `alpha` when absent.
    pub count: Option<usize>,
}

impl ReductionConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: 0.5,
            k_farthest: 1,
            seed: 0,
            count: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_k_farthest(mut self, k: usize) -> Self {
        self.k_farthest = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.k_farthest == 0 {
            return Err(Error::InvalidKFarthest);
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn kept_fraction(cluster_size: usize, alpha: f64) -> f64 {
    (1.0 - alpha) * cluster_size as f64
}

fn ceil_kept(kept: f64) -> usize {
    ((kept - QUOTA_EPS).ceil().max(1.0)) as usize
}

/// Items to keep from a cluster: `max(ceil((1 - alpha) * size), 1)`, at most `size`.
pub fn cluster_quota(cluster_size: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if cluster_size == 0 {
        return Err(Error::EmptyCluster);
    }
    Ok(ceil_kept(kept_fraction(cluster_size, alpha)).min(cluster_size))
}

/// Annulus width `max_dist / ((1 - alpha) * size)`.
pub fn compute_beta(max_dist: f64, cluster_size: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if cluster_size == 0 {
        return Err(Error::EmptyCluster);
    }
    if max_dist <= 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(max_dist / kept_fraction(cluster_size, alpha))
}

/// Number of annuli a cluster is cut into: `ceil(max_dist / beta)`.
pub fn annulus_count(cluster_size: usize, alpha: f64) -> usize {
    ceil_kept(kept_fraction(cluster_size, alpha))
}

/// `100 * (1 - condensed / original)`.
pub fn reduction_percent(original_n: usize, condensed_n: usize) -> f64 {
    if original_n == 0 {
        return 0.0;
    }
    100.0 * (1.0 - condensed_n as f64 / original_n as f64)
}

/// Distances of a cluster's members to its centroid.
#[derive(Debug, Clone)]
pub struct ClusterGeometry {
    /// Exact `||n x - S||^2` per member; orders members by distance.
    scaled: Vec<u128>,
    /// Euclidean distance per member.
    pub distances: Vec<f64>,
    /// Position (within the member list) of the member nearest the centroid.
    pub nearest: usize,
    pub max_dist: f64,
}

impl ClusterGeometry {
    pub fn new(dataset: &Dataset, cluster: &Cluster) -> Self {
        let c = cluster.centroid();
        let n = c.count() as f64;
        let scaled: Vec<u128> = cluster
            .members()
            .iter()
            .map(|&i| c.scaled_sq_dist(dataset.row(i)))
            .collect();
        let distances: Vec<f64> = scaled.iter().map(|&q| (q as f64).sqrt() / n).collect();
        let nearest = argmin(&scaled);
        let max_dist = distances.iter().copied().fold(0.0, f64::max);
        Self {
            scaled,
            distances,
            nearest,
            max_dist,
        }
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// Positions other than the nearest, farthest first.
    fn farthest_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).filter(|&p| p != self.nearest).collect();
        order.sort_by(|&a, &b| self.scaled[b].cmp(&self.scaled[a]).then(a.cmp(&b)));
        order
    }
}

fn argmin(v: &[u128]) -> usize {
    let mut best = 0;
    for (p, &q) in v.iter().enumerate() {
        if q < v[best] {
            best = p;
        }
    }
    best
}

/// Nearest member plus up to `k` farthest, as member positions.
fn nearest_and_farthest(geom: &ClusterGeometry, k: usize) -> Vec<usize> {
    let mut picks = vec![geom.nearest];
    picks.extend(geom.farthest_order().into_iter().take(k));
    picks
}

/// RHCKON pick for one cluster (member positions).
pub fn pick_rhckon(geom: &ClusterGeometry, k_farthest: usize) -> Vec<usize> {
    nearest_and_farthest(geom, k_farthest.min(geom.len() - 1))
}

/// KONCW pick for one cluster: nearest plus `quota - 1` farthest.
pub fn pick_koncw(geom: &ClusterGeometry, quota: usize) -> Vec<usize> {
    nearest_and_farthest(geom, quota.saturating_sub(1))
}

/// Greedy k-center pick for one cluster. Starts from the nearest and the
/// farthest member, then repeatedly adds the member whose minimum distance
/// to the chosen set is largest.
pub fn pick_cwkc(dataset: &Dataset, members: &[usize], geom: &ClusterGeometry, quota: usize) -> Vec<usize> {
    let quota = quota.min(members.len());
    let mut chosen = vec![geom.nearest];
    if quota <= 1 {
        return chosen;
    }
    chosen.push(geom.farthest_order()[0]);

    let mut taken = vec![false; members.len()];
    let mut min_dist = vec![u64::MAX; members.len()];
    for &c in &chosen {
        taken[c] = true;
    }
    for &c in &chosen {
        relax(dataset, members, c, &taken, &mut min_dist);
    }
    while chosen.len() < quota {
        let mut best: Option<usize> = None;
        for p in 0..members.len() {
            if !taken[p] && best.is_none_or(|b| min_dist[p] > min_dist[b]) {
                best = Some(p);
            }
        }
        let Some(next) = best else { break };
        taken[next] = true;
        chosen.push(next);
        relax(dataset, members, next, &taken, &mut min_dist);
    }
    chosen
}

fn relax(dataset: &Dataset, members: &[usize], center: usize, taken: &[bool], min_dist: &mut [u64]) {
    let row = dataset.row(members[center]);
    for (p, &i) in members.iter().enumerate() {
        if !taken[p] {
            let d = metric::sq_dist(row, dataset.row(i));
            if d < min_dist[p] {
                min_dist[p] = d;
            }
        }
    }
}

/// Annulus of a distance: `floor(d / beta)`, with the outermost annulus
/// closed at `max_dist`.
pub fn annulus_of(distance: f64, beta: f64, n_annuli: usize) -> usize {
    ((distance / beta).floor() as usize).min(n_annuli - 1)
}

/// GHCIDR pick for one cluster: the member closest to the mid-radius of
/// each nonempty annulus, plus the nearest member, deduplicated.
pub fn pick_ghcidr(geom: &ClusterGeometry, alpha: f64) -> Result<Vec<usize>> {
    let size = geom.len();
    let beta = match compute_beta(geom.max_dist, size, alpha) {
        Ok(b) => b,
        Err(Error::DegenerateGeometry) => return Ok(vec![0]),
        Err(e) => return Err(e),
    };
    let n_annuli = annulus_count(size, alpha);
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n_annuli];
    for (p, &d) in geom.distances.iter().enumerate() {
        let a = annulus_of(d, beta, n_annuli);
        let mid = (a as f64 + 0.5) * beta;
        let gap = (d - mid).abs();
        if best[a].is_none_or(|(g, _)| gap < g) {
            best[a] = Some((gap, p));
        }
    }
    let mut picks: Vec<usize> = best.into_iter().flatten().map(|(_, p)| p).collect();
    if !picks.contains(&geom.nearest) {
        picks.push(geom.nearest);
    }
    Ok(picks)
}

/// Applies `pick` to every cluster in parallel and collects the chosen rows
/// in ascending order.
fn select_subset<F>(dataset: &Dataset, partition: &Partition, config: ReductionConfig, pick: F) -> Result<CondensedSet>
where
    F: Fn(&Cluster, &ClusterGeometry) -> Result<Vec<usize>> + Sync,
{
    check_source(dataset, partition)?;
    let per_cluster: Vec<Vec<usize>> = partition
        .clusters()
        .par_iter()
        .map(|c| {
            let geom = ClusterGeometry::new(dataset, c);
            let picks = pick(c, &geom)?;
            Ok(picks.into_iter().map(|p| c.members()[p]).collect())
        })
        .collect::<Result<_>>()?;
    let mut indices: Vec<usize> = per_cluster.into_iter().flatten().collect();
    indices.sort_unstable();
    indices.dedup();
    Ok(CondensedSet::subset(dataset, indices, config))
}

fn check_source(dataset: &Dataset, partition: &Partition) -> Result<()> {
    if dataset.source_hash() != partition.source_hash() {
        return Err(Error::StaleCondensedSet {
            expected: partition.source_hash().to_string(),
            found: dataset.source_hash().to_string(),
        });
    }
    Ok(())
}

/// One synthetic point per cluster at its exact centroid.
pub fn select_rhc(dataset: &Dataset, partition: &Partition) -> Result<CondensedSet> {
    check_source(dataset, partition)?;
    let points = partition
        .clusters()
        .iter()
        .map(|c| SyntheticPoint {
            features: c.centroid().mean(),
            label: c.label(),
        })
        .collect();
    Ok(CondensedSet::synthetic(dataset, points, ReductionConfig::new(Method::Rhc)))
}

pub fn select_rhckon(dataset: &Dataset, partition: &Partition, k_farthest: usize) -> Result<CondensedSet> {
    if k_farthest == 0 {
        return Err(Error::InvalidKFarthest);
    }
    let config = ReductionConfig::new(Method::Rhckon).with_k_farthest(k_farthest);
    select_subset(dataset, partition, config, |_, g| Ok(pick_rhckon(g, k_farthest)))
}

pub fn select_koncw(dataset: &Dataset, partition: &Partition, alpha: f64) -> Result<CondensedSet> {
    check_alpha(alpha)?;
    let config = ReductionConfig::new(Method::Koncw).with_alpha(alpha);
    select_subset(dataset, partition, config, |c, g| {
        Ok(pick_koncw(g, cluster_quota(c.len(), alpha)?))
    })
}

pub fn select_cwkc(dataset: &Dataset, partition: &Partition, alpha: f64) -> Result<CondensedSet> {
    check_alpha(alpha)?;
    let config = ReductionConfig::new(Method::Cwkc).with_alpha(alpha);
    select_subset(dataset, partition, config, |c, g| {
        Ok(pick_cwkc(dataset, c.members(), g, cluster_quota(c.len(), alpha)?))
    })
}

pub fn select_ghcidr(dataset: &Dataset, partition: &Partition, alpha: f64) -> Result<CondensedSet> {
    check_alpha(alpha)?;
    let config = ReductionConfig::new(Method::Ghcidr).with_alpha(alpha);
    select_subset(dataset, partition, config, |_, g| pick_ghcidr(g, alpha))
}

/// Uniform sample of `target_count` rows without replacement (partial
/// Fisher-Yates over ChaCha8 seeded from `seed`), returned ascending.
pub fn random_indices(n: usize, target_count: usize, seed: u64) -> Result<Vec<usize>> {
    if target_count > n {
        return Err(Error::InvalidCount {
            requested: target_count,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..target_count {
        let j = rng.random_range(i as u64..n as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(target_count);
    pool.sort_unstable();
    Ok(pool)
}

pub fn select_random(dataset: &Dataset, target_count: usize, seed: u64) -> Result<CondensedSet> {
    let indices = random_indices(dataset.len(), target_count, seed)?;
    let config = ReductionConfig::new(Method::Random)
        .with_seed(seed)
        .with_count(target_count);
    Ok(CondensedSet::subset(dataset, indices, config))
}

/// Runs the strategy named by `config`. The partition is ignored by the
/// random baseline.
pub fn reduce(dataset: &Dataset, partition: &Partition, config: &ReductionConfig) -> Result<CondensedSet> {
    config.validate()?;
    let mut set = match config.method {
        Method::Rhc => select_rhc(dataset, partition)?,
        Method::Rhckon => select_rhckon(dataset, partition, config.k_farthest)?,
        Method::Koncw => select_koncw(dataset, partition, config.alpha)?,
        Method::Cwkc => select_cwkc(dataset, partition, config.alpha)?,
        Method::Ghcidr => select_ghcidr(dataset, partition, config.alpha)?,
        Method::Random => {
            let count = match config.count {
                Some(c) => c,
                None => random_count(dataset.len(), config.alpha),
            };
            select_random(dataset, count, config.seed)?
        }
    };
    set.config = config.clone();
    if config.method == Method::Random {
        set.config.count = Some(set.len());
    }
    Ok(set)
}

/// Sample size the random baseline draws at `alpha` when no count is given.
pub fn random_count(n: usize, alpha: f64) -> usize {
    if n == 0 {
        0
    } else {
        ceil_kept(kept_fraction(n, alpha)).min(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub alpha: f64,
    pub reduction_percent: f64,
    pub condensed: CondensedSet,
    /// `(alpha, reduction_percent)` per evaluated run.
    pub trials: Vec<(f64, f64)>,
}

/// Bisects alpha over `[0, 1)` for a target reduction, stopping once within
/// `tolerance` percentage points or after `max_runs` selections. Returns the
/// closest run seen.
pub fn calibrate_alpha(
    dataset: &Dataset,
    partition: &Partition,
    method: Method,
    target_reduction: f64,
    tolerance: f64,
    max_runs: usize,
) -> Result<Calibration> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<Calibration> = None;
    let mut trials = Vec::new();
    for _ in 0..max_runs.max(1) {
        let alpha = 0.5 * (lo + hi);
        let set = reduce(dataset, partition, &ReductionConfig::new(method).with_alpha(alpha))?;
        let red = set.reduction_percent();
        trials.push((alpha, red));
        let improves = best
            .as_ref()
            .is_none_or(|b| (red - target_reduction).abs() < (b.reduction_percent - target_reduction).abs());
        if improves {
            best = Some(Calibration {
                alpha,
                reduction_percent: red,
                condensed: set,
                trials: Vec::new(),
            });
        }
        if (red - target_reduction).abs() <= tolerance {
            break;
        }
        if red < target_reduction {
            lo = alpha;
        } else {
            hi = alpha;
        }
    }
    let mut best = best.expect("at least one run");
    best.trials = trials;
    Ok(best)
}
