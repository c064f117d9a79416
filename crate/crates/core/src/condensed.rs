//! Condensed training sets and their on-disk form.
//!
//! A run directory holds a JSON manifest plus the condensed data re-exported
//! as an IDX pair. Subsets additionally get a plain index file (one row index
//! per line) and synthetic sets keep their exact coordinates in a raw
//! little-endian `f64` file, since the IDX export is rounded to bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, Dims};
use crate::error::{Error, Result};
use crate::select::{reduction_percent, ReductionConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "indices.txt";
pub const IMAGES_FILE: &str = "condensed-images-idx3-ubyte";
pub const LABELS_FILE: &str = "condensed-labels-idx1-ubyte";
pub const CENTROIDS_FILE: &str = "centroids-f64le.bin";

const MANIFEST_FORMAT: &str = "hcondense-manifest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CondensedKind {
    Subset,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPoint {
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Contents {
    /// Original row indices, ascending and unique.
    Subset(Vec<usize>),
    Synthetic(Vec<SyntheticPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedSet {
    pub contents: Contents,
    pub source_hash: String,
    pub source_len: usize,
    pub dims: Dims,
    pub n_classes: usize,
    pub config: ReductionConfig,
}

impl CondensedSet {
    pub fn subset(source: &Dataset, indices: Vec<usize>, config: ReductionConfig) -> Self {
        Self::new(source, Contents::Subset(indices), config)
    }

    pub fn synthetic(source: &Dataset, points: Vec<SyntheticPoint>, config: ReductionConfig) -> Self {
        Self::new(source, Contents::Synthetic(points), config)
    }

    fn new(source: &Dataset, contents: Contents, config: ReductionConfig) -> Self {
        Self {
            contents,
            source_hash: source.source_hash().to_string(),
            source_len: source.len(),
            dims: source.dims(),
            n_classes: source.n_classes(),
            config,
        }
    }

    pub fn kind(&self) -> CondensedKind {
        match self.contents {
            Contents::Subset(_) => CondensedKind::Subset,
            Contents::Synthetic(_) => CondensedKind::Synthetic,
        }
    }

    pub fn len(&self) -> usize {
        match &self.contents {
            Contents::Subset(ix) => ix.len(),
            Contents::Synthetic(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match &self.contents {
            Contents::Subset(ix) => Some(ix),
            Contents::Synthetic(_) => None,
        }
    }

    pub fn points(&self) -> Option<&[SyntheticPoint]> {
        match &self.contents {
            Contents::Synthetic(p) => Some(p),
            Contents::Subset(_) => None,
        }
    }

    pub fn reduction_percent(&self) -> f64 {
        reduction_percent(self.source_len, self.len())
    }

    /// Checks the kind-specific invariants against the source dataset.
    pub fn validate(&self, source: &Dataset) -> std::result::Result<(), String> {
        if self.source_hash != source.source_hash() {
            return Err("condensed set belongs to another dataset".into());
        }
        match &self.contents {
            Contents::Subset(ix) => {
                if ix.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("indices are not strictly ascending".into());
                }
                if ix.last().is_some_and(|&i| i >= source.len()) {
                    return Err("index out of range".into());
                }
            }
            Contents::Synthetic(points) => {
                for p in points {
                    if p.features.len() != source.dim() {
                        return Err("synthetic point has wrong dimension".into());
                    }
                    if p.label as usize >= source.n_classes() {
                        return Err("synthetic point has invalid label".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Materializes the condensed data as bytes. Synthetic coordinates are
    /// rounded half-up.
    pub fn to_dataset(&self, source: &Dataset) -> Result<Dataset> {
        match &self.contents {
            Contents::Subset(ix) => source.select_rows(ix),
            Contents::Synthetic(points) => {
                let features = points
                    .iter()
                    .flat_map(|p| p.features.iter().map(|&v| round_half_up(v)))
                    .collect();
                let labels = points.iter().map(|p| p.label).collect();
                Dataset::with_classes(features, labels, self.dims, self.n_classes)
            }
        }
    }
}

/// Nearest byte, halves rounded up.
pub fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub indices: Option<String>,
    pub images: String,
    pub labels: String,
    pub centroids: Option<String>,
}

/// JSON manifest; field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: CondensedKind,
    pub config: ReductionConfig,
    pub source_hash: String,
    pub source_count: usize,
    pub condensed_count: usize,
    pub reduction_percent: f64,
    pub dims: Dims,
    pub n_classes: usize,
    pub files: ManifestFiles,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the condensed outputs into `out_dir` and returns the manifest path.
pub fn write_condensed(set: &CondensedSet, source: &Dataset, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    if set.source_hash != source.source_hash() {
        return Err(Error::StaleCondensedSet {
            expected: set.source_hash.clone(),
            found: source.source_hash().to_string(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut files = ManifestFiles {
        indices: None,
        images: IMAGES_FILE.into(),
        labels: LABELS_FILE.into(),
        centroids: None,
    };
    match &set.contents {
        Contents::Subset(ix) => {
            let mut body = String::with_capacity(ix.len() * 6);
            for i in ix {
                body.push_str(&i.to_string());
                body.push('\n');
            }
            write(&out_dir.join(INDEX_FILE), body)?;
            files.indices = Some(INDEX_FILE.into());
        }
        Contents::Synthetic(points) => {
            let mut body = Vec::with_capacity(points.len() * set.dims.len() * 8);
            for p in points {
                for v in &p.features {
                    body.extend_from_slice(&v.to_le_bytes());
                }
            }
            write(&out_dir.join(CENTROIDS_FILE), body)?;
            files.centroids = Some(CENTROIDS_FILE.into());
        }
    }
    let data = set.to_dataset(source)?;
    dataset::write_idx_pair(&data, out_dir.join(IMAGES_FILE), out_dir.join(LABELS_FILE))?;

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        kind: set.kind(),
        config: set.config.clone(),
        source_hash: set.source_hash.clone(),
        source_count: set.source_len,
        condensed_count: set.len(),
        reduction_percent: set.reduction_percent(),
        dims: set.dims,
        n_classes: set.n_classes,
        files,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    write(&path, body + "\n")?;
    Ok(path)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::format(path, format!("unknown manifest format {:?}", manifest.format)));
    }
    Ok(manifest)
}

/// Parses an index file: LF-separated decimal row indices.
pub fn read_index_file(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(n, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(path, format!("line {}: {:?} is not an index", n + 1, l)))
        })
        .collect()
}

/// Loads the condensed set described by a manifest written by
/// [`write_condensed`].
pub fn read_condensed(manifest_path: impl AsRef<Path>) -> Result<CondensedSet> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let contents = match manifest.kind {
        CondensedKind::Subset => {
            let name = manifest
                .files
                .indices
                .as_deref()
                .ok_or_else(|| Error::format(manifest_path, "subset manifest without index file"))?;
            Contents::Subset(read_index_file(dir.join(name))?)
        }
        CondensedKind::Synthetic => {
            let name = manifest
                .files
                .centroids
                .as_deref()
                .ok_or_else(|| Error::format(manifest_path, "synthetic manifest without centroid file"))?;
            let cpath = dir.join(name);
            let raw = fs::read(&cpath).map_err(|e| Error::io(&cpath, e))?;
            let d = manifest.dims.len();
            let expected = manifest.condensed_count * d * 8;
            if raw.len() != expected {
                return Err(Error::TruncatedFile {
                    path: cpath,
                    expected: expected as u64,
                    found: raw.len() as u64,
                });
            }
            let lpath = dir.join(&manifest.files.labels);
            let labels = fs::read(&lpath).map_err(|e| Error::io(&lpath, e))?;
            if labels.len() != 8 + manifest.condensed_count {
                return Err(Error::format(&lpath, "label count does not match manifest"));
            }
            let points = raw
                .chunks_exact(d * 8)
                .zip(&labels[8..])
                .map(|(row, &label)| SyntheticPoint {
                    features: row
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                    label,
                })
                .collect();
            Contents::Synthetic(points)
        }
    };
    let set = CondensedSet {
        contents,
        source_hash: manifest.source_hash,
        source_len: manifest.source_count,
        dims: manifest.dims,
        n_classes: manifest.n_classes,
        config: manifest.config,
    };
    if set.len() != manifest.condensed_count {
        return Err(Error::format(manifest_path, "condensed_count does not match data files"));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_idx_pair;
    use crate::select::{Method, ReductionConfig};

    fn source() -> Dataset {
        Dataset::new((0..12).collect(), vec![0, 1, 0, 1], Dims::new(1, 3, 1)).unwrap()
    }

    #[test]
    fn index_file_keeps_given_order() {
        let ds = source();
        let dir = tempfile::tempdir().unwrap();
        let set = CondensedSet::subset(&ds, vec![3, 1, 2], ReductionConfig::new(Method::Koncw));
        let m = write_condensed(&set, &ds, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap(), "3\n1\n2\n");
        let back = load_idx_pair(dir.path().join(IMAGES_FILE), dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(back.features(), &[9, 10, 11, 3, 4, 5, 6, 7, 8]);
        assert_eq!(read_condensed(&m).unwrap(), set);
    }

    #[test]
    fn empty_subset() {
        let ds = source();
        let dir = tempfile::tempdir().unwrap();
        let set = CondensedSet::subset(&ds, vec![], ReductionConfig::new(Method::Random));
        let m = write_condensed(&set, &ds, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap(), "");
        let manifest = read_manifest(&m).unwrap();
        assert_eq!(manifest.condensed_count, 0);
        assert_eq!(manifest.reduction_percent, 100.0);
    }

    #[test]
    fn half_up_rounding() {
        let table = [(127.5, 128), (127.49, 127), (0.5, 1), (0.0, 0), (254.5, 255), (255.0, 255), (1.0 / 3.0, 0), (2.0 / 3.0, 1)];
        for (v, b) in table {
            assert_eq!(round_half_up(v), b, "{v}");
        }
        let ds = source();
        let dir = tempfile::tempdir().unwrap();
        let set = CondensedSet::synthetic(
            &ds,
            vec![SyntheticPoint {
                features: vec![127.5, 0.25, 3.0],
                label: 1,
            }],
            ReductionConfig::new(Method::Rhc),
        );
        let m = write_condensed(&set, &ds, dir.path()).unwrap();
        let back = load_idx_pair(dir.path().join(IMAGES_FILE), dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(back.features(), &[128, 0, 3]);
        assert_eq!(read_condensed(&m).unwrap(), set);
    }

    #[test]
    fn manifest_key_order_is_fixed() {
        let ds = source();
        let dir = tempfile::tempdir().unwrap();
        let set = CondensedSet::subset(&ds, vec![0], ReductionConfig::new(Method::Ghcidr));
        let m = write_condensed(&set, &ds, dir.path()).unwrap();
        let text = fs::read_to_string(m).unwrap();
        let keys = ["\"format\"", "\"kind\"", "\"config\"", "\"source_hash\"", "\"source_count\"", "\"condensed_count\"", "\"reduction_percent\"", "\"dims\"", "\"n_classes\"", "\"files\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stale_source_rejected() {
        let ds = source();
        let other = Dataset::new(vec![1; 3], vec![0], Dims::new(1, 3, 1)).unwrap();
        let set = CondensedSet::subset(&ds, vec![0], ReductionConfig::new(Method::Cwkc));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_condensed(&set, &other, dir.path()),
            Err(Error::StaleCondensedSet { .. })
        ));
    }
}
