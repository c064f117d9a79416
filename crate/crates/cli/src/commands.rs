use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hcondense::cluster::PartitionDump;
use hcondense::eval::TSV_HEADER;
use hcondense::{
    evaluate, generate_blobs, partition_homogeneous, random_count, read_condensed, reduce as run_reduce,
    select_random, size_histogram, write_condensed, write_idx_pair, Dataset, EvalReport, HistogramBin, Method,
    Partition, ReductionConfig,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{Source, Split};
use crate::{EvalArgs, ReduceArgs, SourceArgs, StatsArgs, SweepArgs, SynthArgs};

const PARTITION_CACHE: &str = "partitions";
const DEFAULT_EDGES: [usize; 13] = [1, 2, 3, 4, 5, 6, 11, 21, 51, 101, 201, 501, 1001];

fn run_id(prefix: &str, key: &impl Serialize) -> String {
    let json = serde_json::to_vec(key).expect("run keys serialize");
    let digest = hex::encode(Sha256::digest(&json));
    format!("{prefix}-{}", &digest[..12])
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn resolve(args: &SourceArgs) -> Result<Source> {
    Source::resolve(args.dataset, &args.data_dir, args.limit)
}

/// Loads the partition of `ds` from the cache under `out`, computing and
/// caching it on a miss.
pub fn cached_partition(ds: &Dataset, out: &Path) -> Result<Partition> {
    let dir = out.join(PARTITION_CACHE);
    let path = dir.join(format!("{}.json", &ds.source_hash()[..16]));
    if path.is_file() {
        if let Ok(p) = Partition::read_json(&path, ds) {
            return Ok(p);
        }
    }
    let start = Instant::now();
    let p = partition_homogeneous(ds)?;
    eprintln!(
        "partitioned {} rows into {} clusters in {:.1}s",
        ds.len(),
        p.len(),
        start.elapsed().as_secs_f64()
    );
    create_dir(&dir)?;
    p.write_json(&path)?;
    Ok(p)
}

#[derive(Serialize)]
struct PartitionSummary {
    source_hash: String,
    clusters: usize,
    degenerate_clusters: usize,
    largest_cluster: usize,
    histogram: Vec<HistogramBin>,
}

fn default_edges(max_size: usize) -> Vec<usize> {
    let mut edges: Vec<usize> = DEFAULT_EDGES.iter().copied().filter(|&e| e <= max_size).collect();
    if edges.is_empty() {
        edges.push(1);
    }
    edges.push(max_size + 1);
    edges
}

fn summarize(p: &Partition) -> PartitionSummary {
    let largest = p.clusters().iter().map(|c| c.len()).max().unwrap_or(0);
    let histogram = size_histogram(p.clusters().iter().map(|c| c.len()), &default_edges(largest))
        .expect("default edges are increasing");
    PartitionSummary {
        source_hash: p.source_hash().to_string(),
        clusters: p.len(),
        degenerate_clusters: p.degenerate_count(),
        largest_cluster: largest,
        histogram,
    }
}

fn reduction_config(args: &ReduceArgs) -> Result<ReductionConfig> {
    let mut config = ReductionConfig::new(args.method)
        .with_alpha(args.alpha)
        .with_k_farthest(args.k_farthest)
        .with_seed(args.seed);
    if args.method == Method::Random {
        if let Some(count) = args.count {
            if count == 0 {
                return Err(hcondense::Error::InvalidCount {
                    requested: 0,
                    available: 0,
                })
                .context("--count must be at least 1");
            }
            config = config.with_count(count);
        }
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct ReduceKey<'a> {
    source_hash: &'a str,
    config: &'a ReductionConfig,
}

pub fn reduce(args: &ReduceArgs) -> Result<PathBuf> {
    let config = reduction_config(args)?;
    let source = resolve(&args.source)?;
    source.check(Split::Train)?;
    create_dir(&args.out)?;

    let ds = source.train()?;
    let (set, partition) = if config.method == Method::Random {
        let count = config.count.unwrap_or_else(|| random_count(ds.len(), config.alpha));
        let mut set = select_random(&ds, count, config.seed)?;
        set.config = config.clone().with_count(count);
        (set, None)
    } else {
        let p = cached_partition(&ds, &args.out)?;
        (run_reduce(&ds, &p, &config)?, Some(p))
    };
    if let Err(e) = set.validate(&ds) {
        bail!("condensed set failed validation: {e}");
    }

    let dir = args.out.join(run_id(
        config.method.name(),
        &ReduceKey {
            source_hash: ds.source_hash(),
            config: &set.config,
        },
    ));
    let manifest = write_condensed(&set, &ds, &dir)?;
    if let Some(p) = &partition {
        let body = serde_json::to_string_pretty(&summarize(p))?;
        write_file(&dir.join("partition-summary.json"), body + "\n")?;
    }
    println!("condensed\t{}\t{}", set.len(), ds.len());
    println!("reduction_percent\t{:.2}", set.reduction_percent());
    Ok(manifest)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<PathBuf> {
    create_dir(dir)?;
    let json = dir.join("report.json");
    write_file(&json, serde_json::to_string_pretty(report)? + "\n")?;
    write_file(
        &dir.join("report.tsv"),
        format!("{TSV_HEADER}\n{}\n", report.tsv_row()),
    )?;
    Ok(json)
}

pub fn eval(args: &EvalArgs) -> Result<PathBuf> {
    if !args.manifest.is_file() {
        bail!("missing manifest {}", args.manifest.display());
    }
    let source = resolve(&args.source)?;
    source.check(Split::Train)?;
    source.check(Split::Test)?;

    let set = read_condensed(&args.manifest)?;
    let ds = source.train()?;
    let test = source.load(Split::Test, args.test_limit)?;
    let report = evaluate(&set, &ds, &test, args.knn)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let path = write_report(&dir, &report)?;
    println!("{TSV_HEADER}");
    println!("{}", report.tsv_row());
    eprintln!("evaluated in {:.1}s", report.wall_time_secs);
    Ok(path)
}

fn read_dump(path: &Path) -> Result<PartitionDump> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let dump: PartitionDump =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok(dump)
}

#[derive(Serialize)]
struct StatsKey<'a> {
    source_hash: &'a str,
    edges: &'a [usize],
}

pub fn stats(args: &StatsArgs) -> Result<PathBuf> {
    let dump = if let Some(path) = &args.partition {
        read_dump(path)?
    } else if let (Some(kind), Some(dir)) = (args.dataset, &args.data_dir) {
        let source = Source::resolve(kind, dir, args.limit)?;
        source.check(Split::Train)?;
        let ds = source.train()?;
        cached_partition(&ds, &args.out)?.to_dump()
    } else {
        let cache = args.out.join(PARTITION_CACHE);
        let mut found: Vec<PathBuf> = fs::read_dir(&cache)
            .map(|it| {
                it.filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect()
            })
            .unwrap_or_default();
        found.sort();
        match found.as_slice() {
            [one] => read_dump(one)?,
            [] => bail!(
                "no partition found under {}; pass --partition or --dataset",
                args.out.display()
            ),
            _ => bail!(
                "several partitions under {}; pass --partition",
                cache.display()
            ),
        }
    };

    let sizes: Vec<usize> = dump.clusters.iter().map(|c| c.members.len()).collect();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let edges = match &args.bins {
        Some(b) => b.clone(),
        None => default_edges(largest),
    };
    let bins = size_histogram(sizes.iter().copied(), &edges)?;

    let mut csv = String::from("bin_lo,bin_hi,clusters,images\n");
    for b in &bins {
        writeln!(csv, "{},{},{},{}", b.lo, b.hi, b.clusters, b.images).unwrap();
    }
    let dir = args.out.join(run_id(
        "stats",
        &StatsKey {
            source_hash: &dump.source_hash,
            edges: &edges,
        },
    ));
    create_dir(&dir)?;
    let path = dir.join("histogram.csv");
    write_file(&path, csv)?;

    let small: Vec<&usize> = sizes.iter().filter(|&&s| (1..=5).contains(&s)).collect();
    println!("clusters\t{}", sizes.len());
    println!("images\t{}", sizes.iter().sum::<usize>());
    println!("clusters_size_1_to_5\t{}", small.len());
    println!("images_in_size_1_to_5\t{}", small.into_iter().sum::<usize>());
    Ok(path)
}

#[derive(Serialize)]
struct SynthParams {
    classes: usize,
    per_class: usize,
    test_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
}

pub fn synth(args: &SynthArgs) -> Result<PathBuf> {
    if !args.spread.is_finite() || args.spread < 0.0 {
        bail!("--spread must be finite and nonnegative");
    }
    if args.classes > 256 {
        bail!("at most 256 classes fit in byte labels");
    }
    create_dir(&args.out)?;
    // Train and test share centers: draw both from one call and split.
    let all = generate_blobs(
        args.classes,
        args.per_class + args.test_per_class,
        args.dim,
        args.spread,
        args.seed,
    );
    let n_train = args.classes * args.per_class;
    let train_ix: Vec<usize> = (0..n_train).collect();
    let test_ix: Vec<usize> = (n_train..all.len()).collect();
    let train = all.select_rows(&train_ix)?;
    let test = all.select_rows(&test_ix)?;
    write_idx_pair(
        &train,
        args.out.join("train-images-idx3-ubyte"),
        args.out.join("train-labels-idx1-ubyte"),
    )?;
    write_idx_pair(
        &test,
        args.out.join("t10k-images-idx3-ubyte"),
        args.out.join("t10k-labels-idx1-ubyte"),
    )?;
    let params = SynthParams {
        classes: args.classes,
        per_class: args.per_class,
        test_per_class: args.test_per_class,
        dim: args.dim,
        spread: args.spread,
        seed: args.seed,
    };
    write_file(
        &args.out.join("synth.json"),
        serde_json::to_string_pretty(&params)? + "\n",
    )?;
    Ok(args.out.clone())
}

#[derive(Serialize)]
struct SweepKey<'a> {
    source_hash: &'a str,
    methods: &'a [Method],
    alphas: &'a [f64],
    k_farthest: usize,
    knn: usize,
    baseline_seeds: usize,
    seed: u64,
    test_limit: Option<usize>,
}

pub fn sweep(args: &SweepArgs) -> Result<PathBuf> {
    if args.alphas.is_empty() {
        bail!("--alphas needs at least one value");
    }
    let source = resolve(&args.source)?;
    source.check(Split::Train)?;
    source.check(Split::Test)?;
    create_dir(&args.out)?;

    let ds = source.train()?;
    let test = source.load(Split::Test, args.test_limit)?;
    let partition = if args.method.iter().any(|&m| m != Method::Random) {
        Some(cached_partition(&ds, &args.out)?)
    } else {
        None
    };

    let mut table = format!("{TSV_HEADER}\n");
    let mut reports = String::new();
    for &method in &args.method {
        for &alpha in &args.alphas {
            let config = ReductionConfig::new(method)
                .with_alpha(alpha)
                .with_k_farthest(args.k_farthest)
                .with_seed(args.seed);
            let set = match &partition {
                Some(p) => run_reduce(&ds, p, &config)?,
                None => {
                    select_random(&ds, random_count(ds.len(), alpha), args.seed)?
                }
            };
            if let Err(e) = set.validate(&ds) {
                bail!("{method} at alpha {alpha}: condensed set failed validation: {e}");
            }
            let report = evaluate(&set, &ds, &test, args.knn)?;
            writeln!(table, "{}", report.tsv_row()).unwrap();
            reports.push_str(&serde_json::to_string(&report)?);
            reports.push('\n');

            let mut accuracies = Vec::with_capacity(args.baseline_seeds);
            for s in 0..args.baseline_seeds as u64 {
                let baseline = select_random(&ds, set.len(), args.seed.wrapping_add(s))?;
                accuracies.push(evaluate(&baseline, &ds, &test, args.knn)?.accuracy);
            }
            let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
            writeln!(
                table,
                "random\t{alpha:.4}\t{:.2}\t{:.2}",
                set.reduction_percent(),
                100.0 * mean
            )
            .unwrap();
            eprintln!("{}", report.tsv_row());
        }
    }

    let dir = args.out.join(run_id(
        "sweep",
        &SweepKey {
            source_hash: ds.source_hash(),
            methods: &args.method,
            alphas: &args.alphas,
            k_farthest: args.k_farthest,
            knn: args.knn,
            baseline_seeds: args.baseline_seeds,
            seed: args.seed,
            test_limit: args.test_limit,
        },
    ));
    create_dir(&dir)?;
    write_file(&dir.join("reports.jsonl"), reports)?;
    let path = dir.join("table.tsv");
    write_file(&path, &table)?;
    print!("{table}");
    Ok(path)
}
