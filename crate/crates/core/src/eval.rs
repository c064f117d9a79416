//! Nearest-neighbor evaluation of condensed training sets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condensed::{CondensedSet, Contents, SyntheticPoint};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric;

/// Training data for the classifier: source rows, or real-valued points.
#[derive(Debug, Clone, Copy)]
pub enum TrainView<'a> {
    Rows { dataset: &'a Dataset, indices: &'a [usize] },
    All(&'a Dataset),
    Points(&'a [SyntheticPoint]),
}

impl<'a> TrainView<'a> {
    pub fn len(&self) -> usize {
        match self {
            TrainView::Rows { indices, .. } => indices.len(),
            TrainView::All(d) => d.len(),
            TrainView::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, t: usize) -> u8 {
        match self {
            TrainView::Rows { dataset, indices } => dataset.label(indices[t]),
            TrainView::All(d) => d.label(t),
            TrainView::Points(p) => p[t].label,
        }
    }

    fn label_space(&self) -> usize {
        match self {
            TrainView::Rows { dataset, .. } | TrainView::All(dataset) => dataset.n_classes(),
            TrainView::Points(p) => p.iter().map(|x| x.label as usize + 1).max().unwrap_or(0),
        }
    }
}

/// Keeps the `k` smallest `(distance, train index)` pairs, lexicographically.
struct TopK<D> {
    k: usize,
    items: Vec<(D, usize)>,
}

impl<D: PartialOrd + Copy> TopK<D> {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn offer(&mut self, d: D, t: usize) {
        // Candidates arrive in increasing t, so equal distances never displace.
        if self.items.len() == self.k {
            if !(d < self.items[self.k - 1].0) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&(e, _)| !(d < e));
        self.items.insert(pos, (d, t));
    }
}

fn vote(labels: impl Iterator<Item = u8>, n_labels: usize) -> u8 {
    let mut counts = vec![0usize; n_labels.max(1)];
    for l in labels {
        counts[l as usize] += 1;
    }
    let mut best = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = l;
        }
    }
    best as u8
}

fn classify_one(train: &TrainView<'_>, x: &[u8], k: usize, n_labels: usize) -> u8 {
    let n = train.len();
    let neighbors: Vec<usize> = match train {
        TrainView::Rows { dataset, indices } => {
            let mut top = TopK::new(k);
            for (t, &i) in indices.iter().enumerate() {
                top.offer(metric::sq_dist(x, dataset.row(i)), t);
            }
            top.items.into_iter().map(|(_, t)| t).collect()
        }
        TrainView::All(dataset) => {
            let mut top = TopK::new(k);
            for t in 0..n {
                top.offer(metric::sq_dist(x, dataset.row(t)), t);
            }
            top.items.into_iter().map(|(_, t)| t).collect()
        }
        TrainView::Points(points) => {
            let mut top = TopK::new(k);
            for (t, p) in points.iter().enumerate() {
                top.offer(metric::sq_dist_f64(x, &p.features), t);
            }
            top.items.into_iter().map(|(_, t)| t).collect()
        }
    };
    vote(neighbors.into_iter().map(|t| train.label(t)), n_labels)
}

/// k-NN labels for every test row. Distance ties prefer the lower train
/// index; vote ties prefer the lower label.
pub fn knn_classify(train: &TrainView<'_>, test: &Dataset, k: usize) -> Result<Vec<u8>> {
    if train.is_empty() {
        return Err(Error::EmptyTrain);
    }
    if k == 0 {
        return Err(Error::InvalidCount {
            requested: 0,
            available: train.len(),
        });
    }
    let k = k.min(train.len());
    let n_labels = train.label_space();
    Ok((0..test.len())
        .into_par_iter()
        .map(|i| classify_one(train, test.row(i), k, n_labels))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub alpha: f64,
    pub k: usize,
    pub accuracy: f64,
    pub reduction_percent: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub per_class_correct: Vec<usize>,
    pub per_class_total: Vec<usize>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Kept out of written reports so reruns produce identical files.
    #[serde(skip_serializing, default)]
    pub wall_time_secs: f64,
}

pub const TSV_HEADER: &str = "method\talpha\treduction_pct\taccuracy_pct";

impl EvalReport {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.2}\t{:.2}",
            self.method,
            self.alpha,
            self.reduction_percent,
            100.0 * self.accuracy
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_predictions(
        method: String,
        alpha: f64,
        k: usize,
        reduction_percent: f64,
        n_train: usize,
        test: &Dataset,
        predicted: &[u8],
        wall_time_secs: f64,
    ) -> Self {
        let l = test
            .n_classes()
            .max(predicted.iter().map(|&p| p as usize + 1).max().unwrap_or(0));
        let mut confusion = vec![vec![0usize; l]; l];
        for (i, &p) in predicted.iter().enumerate() {
            confusion[test.label(i) as usize][p as usize] += 1;
        }
        let per_class_correct: Vec<usize> = (0..l).map(|c| confusion[c][c]).collect();
        let per_class_total: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        let correct: usize = per_class_correct.iter().sum();
        let accuracy = if test.is_empty() {
            0.0
        } else {
            correct as f64 / test.len() as f64
        };
        Self {
            method,
            alpha,
            k,
            accuracy,
            reduction_percent,
            n_train,
            n_test: test.len(),
            per_class_correct,
            per_class_total,
            confusion,
            wall_time_secs,
        }
    }
}

/// Trains k-NN on the condensed set and scores it on `test`.
pub fn evaluate(condensed: &CondensedSet, source: &Dataset, test: &Dataset, k: usize) -> Result<EvalReport> {
    if condensed.source_hash != source.source_hash() {
        return Err(Error::StaleCondensedSet {
            expected: condensed.source_hash.clone(),
            found: source.source_hash().to_string(),
        });
    }
    if test.dim() != source.dim() {
        return Err(Error::InvalidDataset(format!(
            "test rows have {} features, training rows {}",
            test.dim(),
            source.dim()
        )));
    }
    let start = Instant::now();
    let train = match &condensed.contents {
        Contents::Subset(ix) => TrainView::Rows {
            dataset: source,
            indices: ix,
        },
        Contents::Synthetic(p) => TrainView::Points(p),
    };
    let predicted = knn_classify(&train, test, k)?;
    Ok(EvalReport::from_predictions(
        condensed.config.method.to_string(),
        condensed.config.alpha,
        k,
        condensed.reduction_percent(),
        condensed.len(),
        test,
        &predicted,
        start.elapsed().as_secs_f64(),
    ))
}
