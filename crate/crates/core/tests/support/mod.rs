//! Fixtures, byte-level writers and brute-force oracles shared by the
//! integration tests.
#![allow(dead_code)]

use hcondense::select::{annulus_count, ClusterGeometry};
use hcondense::{generate_blobs, Cluster, Dataset, Dims, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Overlapping blobs for even seeds; tiny value ranges with random labels
/// (lots of ties and unsplittable duplicates) for odd seeds.
pub fn fixture(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    if seed.is_multiple_of(2) {
        let classes = rng.random_range(2..=4);
        let per_class = rng.random_range(3..=15);
        let dim = rng.random_range(1..=6);
        let spread = rng.random_range(5.0..60.0);
        generate_blobs(classes, per_class, dim, spread, seed)
    } else {
        let n = rng.random_range(2..=40);
        let dim = rng.random_range(1..=3);
        let features = (0..n * dim).map(|_| rng.random_range(0..4u8)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..3u8)).collect();
        Dataset::new(features, labels, Dims::new(1, dim, 1)).unwrap()
    }
}

pub fn sq_dist(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64).sum()
}

pub fn mean(ds: &Dataset, members: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; ds.dim()];
    for &i in members {
        for (acc, &v) in m.iter_mut().zip(ds.row(i)) {
            *acc += v as f64;
        }
    }
    m.iter_mut().for_each(|v| *v /= members.len() as f64);
    m
}

/// Exact `||n x - S||^2` of row `i` against the sum of `members`.
pub fn scaled_dist(ds: &Dataset, members: &[usize], i: usize) -> u128 {
    let n = members.len() as i128;
    (0..ds.dim())
        .map(|d| {
            let s: i128 = members.iter().map(|&m| ds.row(m)[d] as i128).sum();
            let e = n * ds.row(i)[d] as i128 - s;
            (e * e) as u128
        })
        .sum()
}

/// Checks that the partition covers every row once, each cluster is pure or
/// an unsplittable duplicate set, and centroids are member means.
pub fn check_partition(ds: &Dataset, p: &Partition) -> Result<(), String> {
    let mut seen = vec![false; ds.len()];
    for c in p.clusters() {
        if c.is_empty() {
            return Err("empty cluster".into());
        }
        for &i in c.members() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("row {i} in two clusters"));
            }
        }
        let pure = c.members().iter().all(|&i| ds.label(i) == ds.label(c.members()[0]));
        let same = c.members().iter().all(|&i| ds.row(i) == ds.row(c.members()[0]));
        if c.is_terminal_degenerate() {
            if pure || !same {
                return Err(format!("bad degenerate cluster {:?}", c.members()));
            }
        } else if !pure {
            return Err(format!("mixed cluster {:?}", c.members()));
        }
        if c.centroid().mean() != mean(ds, c.members()) {
            return Err("centroid is not the member mean".into());
        }
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(format!("row {i} not covered"));
    }
    if p.clusters().windows(2).any(|w| w[0].members()[0] >= w[1].members()[0]) {
        return Err("clusters not ordered by first member".into());
    }
    Ok(())
}

/// Textbook greedy k-center: recomputes every min-distance from scratch.
pub fn naive_cwkc(ds: &Dataset, members: &[usize], quota: usize) -> Vec<usize> {
    let d: Vec<u128> = members.iter().map(|&i| scaled_dist(ds, members, i)).collect();
    let mut nearest = 0;
    for p in 0..d.len() {
        if d[p] < d[nearest] {
            nearest = p;
        }
    }
    let mut chosen = vec![nearest];
    let quota = quota.min(members.len());
    if quota <= 1 {
        return chosen;
    }
    let mut far = None;
    for p in 0..d.len() {
        if p != nearest && far.is_none_or(|f: usize| d[p] > d[f]) {
            far = Some(p);
        }
    }
    chosen.push(far.unwrap());
    while chosen.len() < quota {
        let mut best: Option<(u64, usize)> = None;
        for p in 0..members.len() {
            if chosen.contains(&p) {
                continue;
            }
            let m = chosen
                .iter()
                .map(|&c| sq_dist(ds.row(members[p]), ds.row(members[c])))
                .min()
                .unwrap();
            if best.is_none_or(|(b, _)| m > b) {
                best = Some((m, p));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// Checks GHCIDR picks (member positions) against an independent annulus
/// assignment: one pick per nonempty annulus, each nearest its mid-radius,
/// plus the member nearest the centroid.
pub fn check_ghcidr(ds: &Dataset, cluster: &Cluster, alpha: f64, picks: &[usize]) -> Result<(), String> {
    let members = cluster.members();
    let n = members.len() as f64;
    let d: Vec<f64> = members
        .iter()
        .map(|&i| (scaled_dist(ds, members, i) as f64).sqrt() / n)
        .collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    let geom = ClusterGeometry::new(ds, cluster);
    if max == 0.0 {
        return if picks == [0] { Ok(()) } else { Err(format!("degenerate cluster picked {picks:?}")) };
    }
    let kept = annulus_count(members.len(), alpha);
    let beta = max / ((1.0 - alpha) * n);
    let ring = |x: f64| ((x / beta).floor() as usize).min(kept - 1);
    let mut expected: Vec<usize> = Vec::new();
    for a in 0..kept {
        let mid = (a as f64 + 0.5) * beta;
        let best = (0..members.len())
            .filter(|&p| ring(d[p]) == a)
            .min_by(|&x, &y| (d[x] - mid).abs().total_cmp(&(d[y] - mid).abs()).then(x.cmp(&y)));
        if let Some(p) = best {
            expected.push(p);
        }
    }
    if !expected.contains(&geom.nearest) {
        expected.push(geom.nearest);
    }
    let mut got = picks.to_vec();
    got.sort_unstable();
    expected.sort_unstable();
    if got != expected {
        return Err(format!("picked {got:?}, expected {expected:?}"));
    }
    let mut rings: Vec<usize> = picks.iter().filter(|&&p| p != geom.nearest).map(|&p| ring(d[p])).collect();
    let before = rings.len();
    rings.sort_unstable();
    rings.dedup();
    if rings.len() != before {
        return Err("two picks share an annulus".into());
    }
    Ok(())
}

/// Lloyd's algorithm in plain floating point, seeded with the given means.
pub fn naive_lloyd(ds: &Dataset, members: &[usize], seeds: Vec<Vec<f64>>) -> Vec<Vec<usize>> {
    let mut centers = seeds;
    let mut assign: Vec<usize> = Vec::new();
    for _ in 0..100 {
        let next: Vec<usize> = members
            .iter()
            .map(|&i| {
                let x = ds.row(i);
                let dist = |c: &Vec<f64>| -> f64 {
                    c.iter().zip(x).map(|(m, &v)| (v as f64 - m).powi(2)).sum()
                };
                let mut best = 0;
                for j in 1..centers.len() {
                    if dist(&centers[j]) < dist(&centers[best]) {
                        best = j;
                    }
                }
                best
            })
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        for (j, c) in centers.iter_mut().enumerate() {
            let group: Vec<usize> = members.iter().zip(&assign).filter(|(_, &g)| g == j).map(|(&i, _)| i).collect();
            if !group.is_empty() {
                *c = mean(ds, &group);
            } else {
                c.iter_mut().for_each(|v| *v = f64::INFINITY);
            }
        }
    }
    let mut groups = vec![Vec::new(); centers.len()];
    for (&i, &g) in members.iter().zip(&assign) {
        groups[g].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Brute-force k-NN: full stable sort by distance, then a plurality vote
/// with ties to the lowest label.
pub fn naive_knn(train: &Dataset, test: &Dataset, k: usize) -> Vec<u8> {
    (0..test.len())
        .map(|q| {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.sort_by_key(|&t| sq_dist(test.row(q), train.row(t)));
            let mut votes = [0usize; 256];
            for &t in order.iter().take(k) {
                votes[train.label(t) as usize] += 1;
            }
            let top = *votes.iter().max().unwrap();
            votes.iter().position(|&v| v == top).unwrap() as u8
        })
        .collect()
}

/// IDX image and label files built byte by byte.
pub fn idx_bytes(n: usize, rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = vec![0, 0, 8, 3];
    for v in [n, rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = vec![0, 0, 8, 1];
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

/// One CIFAR-10 batch: a label byte followed by 3072 pixel bytes per record.
pub fn cifar_bytes(pixels: &[u8], labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * 3073);
    for (r, &l) in labels.iter().enumerate() {
        out.push(l);
        out.extend_from_slice(&pixels[r * 3072..(r + 1) * 3072]);
    }
    out
}

/// Writes `count` random IDX pairs and CIFAR batches into `dir` and checks
/// that the loaders read them back byte for byte and that the library writer
/// reproduces the IDX files exactly. Returns the number of failures.
pub fn round_trips(dir: &std::path::Path, count: u64) -> Vec<String> {
    let mut failures = Vec::new();
    for seed in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=12usize);
        let rows = rng.random_range(1..=9usize);
        let cols = rng.random_range(1..=9usize);
        let pixels: Vec<u8> = (0..n * rows * cols).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let (img, lab) = idx_bytes(n, rows, cols, &pixels, &labels);
        let ip = dir.join(format!("{seed}-images"));
        let lp = dir.join(format!("{seed}-labels"));
        std::fs::write(&ip, &img).unwrap();
        std::fs::write(&lp, &lab).unwrap();
        match hcondense::load_idx_pair(&ip, &lp) {
            Ok(ds) => {
                if ds.features() != pixels || ds.labels() != labels || ds.dims() != Dims::new(rows, cols, 1) {
                    failures.push(format!("idx {seed}: contents differ"));
                }
                let (ip2, lp2) = (dir.join(format!("{seed}-images2")), dir.join(format!("{seed}-labels2")));
                hcondense::write_idx_pair(&ds, &ip2, &lp2).unwrap();
                if std::fs::read(&ip2).unwrap() != img || std::fs::read(&lp2).unwrap() != lab {
                    failures.push(format!("idx {seed}: rewrite differs"));
                }
            }
            Err(e) => failures.push(format!("idx {seed}: {e}")),
        }

        let batches = rng.random_range(1..=3usize);
        let mut all_px = Vec::new();
        let mut all_lb = Vec::new();
        let mut paths = Vec::new();
        for b in 0..batches {
            let m = rng.random_range(0..=3usize);
            let px: Vec<u8> = (0..m * 3072).map(|_| rng.random()).collect();
            let lb: Vec<u8> = (0..m).map(|_| rng.random_range(0..10)).collect();
            let path = dir.join(format!("{seed}-batch{b}.bin"));
            std::fs::write(&path, cifar_bytes(&px, &lb)).unwrap();
            paths.push(path);
            all_px.extend(px);
            all_lb.extend(lb);
        }
        match hcondense::load_cifar10(&paths) {
            Ok(ds) => {
                if ds.features() != all_px || ds.labels() != all_lb || ds.dims() != Dims::new(32, 32, 3) {
                    failures.push(format!("cifar {seed}: contents differ"));
                }
            }
            Err(e) => failures.push(format!("cifar {seed}: {e}")),
        }
    }
    failures
}

pub const ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.7, 0.9];

pub fn inv_partition(seed: u64) -> Result<(), String> {
    let ds = fixture(seed);
    let p = hcondense::partition_homogeneous(&ds).map_err(|e| e.to_string())?;
    check_partition(&ds, &p)?;
    p.validate(&ds)
}

/// The clustering objective never rises between recenterings.
pub fn inv_lloyd(seed: u64) -> Result<(), String> {
    let ds = fixture(seed);
    let members: Vec<usize> = (0..ds.len()).collect();
    let seeds: Vec<_> = hcondense::class_centroid_seeds(&ds, &members)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(_, c)| c)
        .collect();
    if seeds.len() < 2 {
        return Ok(());
    }
    let out = hcondense::kmeans_with(&ds, &members, &seeds, Default::default()).map_err(|e| e.to_string())?;
    for w in out.sse.windows(2) {
        if w[1] > w[0] + 1e-9 * w[0].abs().max(1.0) {
            return Err(format!("sse rose from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

pub fn inv_cwkc(seed: u64) -> Result<usize, String> {
    let ds = fixture(seed);
    let p = hcondense::partition_homogeneous(&ds).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for c in p.clusters().iter().filter(|c| c.len() <= 12) {
        let geom = ClusterGeometry::new(&ds, c);
        for alpha in ALPHAS {
            let quota = hcondense::cluster_quota(c.len(), alpha).unwrap();
            let got = hcondense::select::pick_cwkc(&ds, c.members(), &geom, quota);
            let want = naive_cwkc(&ds, c.members(), quota);
            if got != want {
                return Err(format!("cluster {:?} alpha {alpha}: {got:?} vs {want:?}", c.members()));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn inv_ghcidr(seed: u64) -> Result<(), String> {
    let ds = fixture(seed);
    let p = hcondense::partition_homogeneous(&ds).map_err(|e| e.to_string())?;
    for c in p.clusters() {
        let geom = ClusterGeometry::new(&ds, c);
        for alpha in ALPHAS {
            let picks = hcondense::select::pick_ghcidr(&geom, alpha).map_err(|e| e.to_string())?;
            check_ghcidr(&ds, c, alpha, &picks).map_err(|e| format!("cluster {:?} alpha {alpha}: {e}", c.members()))?;
        }
    }
    Ok(())
}

fn all_subsets(ds: &Dataset, p: &Partition) -> Vec<(hcondense::Method, f64, Vec<usize>)> {
    use hcondense::{Method, ReductionConfig};
    let mut out = Vec::new();
    for m in [Method::Rhckon, Method::Koncw, Method::Cwkc, Method::Ghcidr, Method::Random] {
        for alpha in ALPHAS {
            let cfg = ReductionConfig::new(m).with_alpha(alpha).with_k_farthest(2).with_seed(7);
            let set = hcondense::reduce(ds, p, &cfg).unwrap();
            out.push((m, alpha, set.indices().unwrap().to_vec()));
        }
    }
    out
}

/// Doubling every feature leaves the partition and every selection unchanged.
pub fn inv_scale(seed: u64) -> Result<(), String> {
    let base = fixture(seed);
    let halved: Vec<u8> = base.features().iter().map(|&v| v / 2).collect();
    let small = Dataset::new(halved.clone(), base.labels().to_vec(), base.dims()).unwrap();
    let doubled = Dataset::new(halved.iter().map(|&v| v * 2).collect(), base.labels().to_vec(), base.dims()).unwrap();
    let pa = hcondense::partition_homogeneous(&small).map_err(|e| e.to_string())?;
    let pb = hcondense::partition_homogeneous(&doubled).map_err(|e| e.to_string())?;
    let ma: Vec<&[usize]> = pa.clusters().iter().map(|c| c.members()).collect();
    let mb: Vec<&[usize]> = pb.clusters().iter().map(|c| c.members()).collect();
    if ma != mb {
        return Err("partitions differ under scaling".into());
    }
    if all_subsets(&small, &pa) != all_subsets(&doubled, &pb) {
        return Err("selections differ under scaling".into());
    }
    Ok(())
}

#[derive(Debug, PartialEq)]
pub struct Run {
    pub clusters: Vec<Vec<usize>>,
    pub rhc: Vec<Vec<f64>>,
    pub subsets: Vec<(hcondense::Method, f64, Vec<usize>)>,
    pub predictions: Vec<u8>,
}

pub fn full_run(ds: &Dataset, test: &Dataset) -> Run {
    let p = hcondense::partition_homogeneous(ds).unwrap();
    let rhc = hcondense::select_rhc(ds, &p).unwrap();
    let predictions = hcondense::knn_classify(&hcondense::TrainView::Points(rhc.points().unwrap()), test, 3).unwrap();
    Run {
        clusters: p.clusters().iter().map(|c| c.members().to_vec()).collect(),
        rhc: rhc.points().unwrap().iter().map(|q| q.features.clone()).collect(),
        subsets: all_subsets(ds, &p),
        predictions,
    }
}

/// Bitwise-equal results under 1, 2 and 8 worker threads.
pub fn inv_threads(seed: u64) -> Result<(), String> {
    let ds = generate_blobs(4, 300, 12, 45.0, seed);
    let test = generate_blobs(4, 40, 12, 45.0, seed + 1000);
    let runs: Vec<Run> = [1, 2, 8]
        .into_iter()
        .map(|t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| full_run(&ds, &test))
        })
        .collect();
    if runs[0] != runs[1] || runs[0] != runs[2] {
        return Err("results depend on thread count".into());
    }
    Ok(())
}
