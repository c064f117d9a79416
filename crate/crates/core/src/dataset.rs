//! Labeled image datasets and the binary formats they are stored in.
//!
//! Features are kept as raw bytes. Nothing downstream normalizes them, so
//! every distance in the crate is computed on the original pixel values.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const CIFAR_RECORD_LEN: usize = 1 + 3072;

const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Image shape as (height, width, channels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable table of byte feature vectors with class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<u8>,
    labels: Vec<u8>,
    dims: Dims,
    n_classes: usize,
    class_names: Option<Vec<String>>,
    hash: OnceLock<String>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.labels == other.labels
            && self.dims == other.dims
            && self.n_classes == other.n_classes
    }
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer. The class count is
    /// one more than the largest label present.
    pub fn new(features: Vec<u8>, labels: Vec<u8>, dims: Dims) -> Result<Self> {
        let n_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        Self::with_classes(features, labels, dims, n_classes)
    }

    pub fn with_classes(
        features: Vec<u8>,
        labels: Vec<u8>,
        dims: Dims,
        n_classes: usize,
    ) -> Result<Self> {
        let dim = dims.len();
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature bytes do not form {} rows of {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            dims,
            n_classes,
            class_names: None,
            hash: OnceLock::new(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened feature length.
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[u8] {
        &self.features
    }

    /// Hex SHA-256 over shape, labels and features.
    pub fn source_hash(&self) -> &str {
        self.hash.get_or_init(|| {
            let mut h = Sha256::new();
            h.update(b"hcondense-dataset-v1");
            for v in [
                self.dims.height,
                self.dims.width,
                self.dims.channels,
                self.len(),
                self.n_classes,
            ] {
                h.update((v as u64).to_le_bytes());
            }
            h.update(&self.labels);
            h.update(&self.features);
            hex::encode(h.finalize())
        })
    }

    /// New dataset holding the given rows in the given order. Keeps the
    /// class count of the parent.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidCount {
                    requested: i + 1,
                    available: self.len(),
                });
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Self::with_classes(features, labels, self.dims, self.n_classes)?;
        out.class_names = self.class_names.clone();
        Ok(out)
    }

    /// The first `n` rows (all rows when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.select_rows(&idx).expect("prefix indices are in range")
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn check_len(path: &Path, found: usize, expected: usize) -> Result<()> {
    if found < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: found as u64,
        });
    }
    if found > expected {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after payload", found - expected),
        ));
    }
    Ok(())
}

/// Reads an IDX image file (magic 2051) and its IDX label file (magic 2049).
pub fn load_idx_pair(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img = read_file(images_path)?;
    let lab = read_file(labels_path)?;

    if img.len() < 16 {
        return Err(Error::TruncatedFile {
            path: images_path.to_path_buf(),
            expected: 16,
            found: img.len() as u64,
        });
    }
    let magic = be_u32(&img, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            images_path,
            format!("bad magic {magic}, expected {IDX_IMAGES_MAGIC}"),
        ));
    }
    let n = be_u32(&img, 4) as usize;
    let rows = be_u32(&img, 8) as usize;
    let cols = be_u32(&img, 12) as usize;

    if lab.len() < 8 {
        return Err(Error::TruncatedFile {
            path: labels_path.to_path_buf(),
            expected: 8,
            found: lab.len() as u64,
        });
    }
    let magic = be_u32(&lab, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("bad magic {magic}, expected {IDX_LABELS_MAGIC}"),
        ));
    }
    let n_labels = be_u32(&lab, 4) as usize;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    check_len(images_path, img.len(), 16 + n * rows * cols)?;
    check_len(labels_path, lab.len(), 8 + n)?;

    let mut img = img;
    img.drain(..16);
    let labels = lab[8..].to_vec();
    Dataset::new(img, labels, Dims::new(rows, cols, 1))
}

/// Writes `dataset` as an IDX image/label pair. Multi-channel data is
/// written with `cols = width * channels`.
pub fn write_idx_pair(
    dataset: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let dims = dataset.dims();
    let mut img = Vec::with_capacity(16 + dataset.features().len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    img.extend_from_slice(&(dims.height as u32).to_be_bytes());
    img.extend_from_slice(&((dims.width * dims.channels) as u32).to_be_bytes());
    img.extend_from_slice(dataset.features());
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;

    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    lab.extend_from_slice(dataset.labels());
    fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
}

/// Reads CIFAR-10 binary batches, concatenating records in file order.
/// Pixels stay in the on-disk planar layout (1024 red, 1024 green, 1024 blue).
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                path,
                format!(
                    "length {} is not a multiple of {CIFAR_RECORD_LEN}",
                    bytes.len()
                ),
            ));
        }
        features.reserve(bytes.len() / CIFAR_RECORD_LEN * 3072);
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
            if rec[0] >= 10 {
                return Err(Error::format(
                    path,
                    format!("record {r} has label byte {}", rec[0]),
                ));
            }
            labels.push(rec[0]);
            features.extend_from_slice(&rec[1..]);
        }
    }
    Ok(
        Dataset::with_classes(features, labels, Dims::new(32, 32, 3), 10)?
            .with_class_names(CIFAR_CLASSES.iter().map(|s| s.to_string()).collect()),
    )
}

/// Gaussian blobs around distinct per-class centers, quantized to bytes.
/// Row `i` belongs to class `i % n_classes`.
///
/// # Panics
///
/// If any count is zero or `spread` is negative or not finite.
pub fn generate_blobs(
    n_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Dataset {
    assert!(n_classes >= 1 && per_class >= 1 && dim >= 1, "counts must be positive");
    assert!(n_classes <= 256, "labels are bytes");
    assert!(spread.is_finite() && spread >= 0.0, "spread must be finite and nonnegative");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<u8>> = Vec::with_capacity(n_classes);
    while centers.len() < n_classes {
        let c: Vec<u8> = (0..dim).map(|_| rng.random_range(16..=239u8)).collect();
        if !centers.contains(&c) {
            centers.push(c);
        }
    }

    let noise = Normal::new(0.0, spread).expect("spread validated above");
    let n = n_classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % n_classes;
        labels.push(class as u8);
        for &c in &centers[class] {
            let v = if spread == 0.0 {
                c as f64
            } else {
                c as f64 + noise.sample(&mut rng)
            };
            features.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Dataset::with_classes(features, labels, Dims::new(1, dim, 1), n_classes)
        .expect("generated buffers are consistent")
}
