//! Exact integer distance kernels over byte vectors and rational centroids.

use std::cmp::Ordering;

/// Squared Euclidean distance between two byte rows.
#[inline]
pub fn sq_dist(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    // 255^2 * 4096 fits in u32, so accumulate per block and widen.
    let mut total = 0u64;
    for (ca, cb) in a.chunks(4096).zip(b.chunks(4096)) {
        let s: u32 = ca
            .iter()
            .zip(cb)
            .map(|(&x, &y)| {
                let d = x as i32 - y as i32;
                (d * d) as u32
            })
            .sum();
        total += s as u64;
    }
    total
}

#[inline]
pub fn dot(x: &[u8], sum: &[u64]) -> u64 {
    x.iter().zip(sum).map(|(&a, &b)| a as u64 * b).sum()
}

#[inline]
pub fn sq_norm(x: &[u8]) -> u64 {
    x.iter().map(|&a| a as u64 * a as u64).sum()
}

/// Squared distance from a byte row to a real-valued point.
#[inline]
pub fn sq_dist_f64(x: &[u8], p: &[f64]) -> f64 {
    x.iter()
        .zip(p)
        .map(|(&a, &b)| {
            let d = a as f64 - b;
            d * d
        })
        .sum()
}

/// A point with rational coordinates `sum / count`, the exact mean of
/// `count` byte rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Centroid {
    sum: Vec<u64>,
    count: u64,
}

impl Centroid {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: vec![0; dim],
            count: 0,
        }
    }

    pub fn from_point(x: &[u8]) -> Self {
        let mut c = Self::zeros(x.len());
        c.add(x);
        c
    }

    #[inline]
    pub fn add(&mut self, x: &[u8]) {
        for (s, &v) in self.sum.iter_mut().zip(x) {
            *s += v as u64;
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[u64] {
        &self.sum
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    /// Coordinates in double precision.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|&s| s as f64 / n).collect()
    }

    /// `||count * x - sum||^2`, which orders members of one cluster by their
    /// distance to the centroid without any rounding.
    #[inline]
    pub fn scaled_sq_dist(&self, x: &[u8]) -> u128 {
        let n = self.count as i128;
        x.iter()
            .zip(&self.sum)
            .map(|(&v, &s)| {
                let d = n * v as i128 - s as i128;
                (d * d) as u128
            })
            .sum()
    }

    /// Euclidean distance to `x`.
    pub fn dist(&self, x: &[u8]) -> f64 {
        (self.scaled_sq_dist(x) as f64).sqrt() / self.count as f64
    }

    pub fn sq_norm(&self) -> u128 {
        self.sum.iter().map(|&s| s as u128 * s as u128).sum()
    }
}

/// Precomputed form of a centroid for nearest-centroid queries. Exact:
/// `||x - S/n||^2 = ||x||^2 + (||S||^2 - 2n x.S) / n^2`, and only the second
/// term depends on the centroid.
#[derive(Debug, Clone)]
pub(crate) struct CentroidQuery<'a> {
    sum: &'a [u64],
    count: i128,
    count_sq: i128,
    sum_sq_norm: i128,
}

impl<'a> CentroidQuery<'a> {
    pub(crate) fn new(c: &'a Centroid) -> Self {
        debug_assert!(c.count > 0);
        let count = c.count as i128;
        Self {
            sum: &c.sum,
            count,
            count_sq: count * count,
            sum_sq_norm: c.sq_norm() as i128,
        }
    }

    #[inline]
    fn key(&self, x: &[u8]) -> i128 {
        self.sum_sq_norm - 2 * self.count * dot(x, self.sum) as i128
    }
}

/// Index of the centroid nearest to `x`; ties go to the lowest index.
pub(crate) fn nearest_centroid(x: &[u8], queries: &[CentroidQuery<'_>]) -> usize {
    let mut best = 0;
    let mut best_key = queries[0].key(x);
    for (j, q) in queries.iter().enumerate().skip(1) {
        let key = q.key(x);
        // key_j / n_j^2 < key_best / n_best^2
        if (key * queries[best].count_sq).cmp(&(best_key * q.count_sq)) == Ordering::Less {
            best = j;
            best_key = key;
        }
    }
    best
}
