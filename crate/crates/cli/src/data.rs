use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use hcondense::{load_cifar10, load_idx_pair, Dataset};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    Fmnist,
    Cifar10,
    /// IDX pair written by `hcondense synth`.
    SynthFile,
}

impl DatasetKind {
    fn subdir(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fmnist => "fmnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::SynthFile => "synth",
        }
    }

    fn files(self, split: Split) -> Vec<&'static str> {
        match (self, split) {
            (DatasetKind::Cifar10, Split::Train) => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            (DatasetKind::Cifar10, Split::Test) => vec!["test_batch.bin"],
            (_, Split::Train) => vec!["train-images-idx3-ubyte", "train-labels-idx1-ubyte"],
            (_, Split::Test) => vec!["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Where a dataset lives and how much of it to use.
#[derive(Debug, Clone)]
pub struct Source {
    pub kind: DatasetKind,
    pub dir: PathBuf,
    pub limit: Option<usize>,
}

impl Source {
    /// Accepts either the directory holding the files or a parent with a
    /// per-dataset subdirectory (`mnist/`, `fmnist/`, `cifar10/`, `synth/`).
    pub fn resolve(kind: DatasetKind, data_dir: &Path, limit: Option<usize>) -> Result<Self> {
        let probe = kind.files(Split::Train)[0];
        let dir = if data_dir.join(probe).is_file() {
            data_dir.to_path_buf()
        } else if data_dir.join(kind.subdir()).join(probe).is_file() {
            data_dir.join(kind.subdir())
        } else {
            bail!(
                "no {} training files under {} (looked for {probe})",
                kind.subdir(),
                data_dir.display()
            );
        };
        Ok(Self { kind, dir, limit })
    }

    pub fn paths(&self, split: Split) -> Vec<PathBuf> {
        self.kind.files(split).into_iter().map(|f| self.dir.join(f)).collect()
    }

    /// Fails unless every file of the split exists.
    pub fn check(&self, split: Split) -> Result<()> {
        for p in self.paths(split) {
            if !p.is_file() {
                bail!("missing dataset file {}", p.display());
            }
        }
        Ok(())
    }

    pub fn load(&self, split: Split, limit: Option<usize>) -> Result<Dataset> {
        let paths = self.paths(split);
        let ds = match self.kind {
            DatasetKind::Cifar10 => load_cifar10(&paths)?,
            _ => load_idx_pair(&paths[0], &paths[1])?,
        };
        Ok(match limit {
            Some(n) => ds.head(n),
            None => ds,
        })
    }

    pub fn train(&self) -> Result<Dataset> {
        self.load(Split::Train, self.limit)
            .with_context(|| format!("loading training data from {}", self.dir.display()))
    }
}
