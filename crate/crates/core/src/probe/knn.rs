use std::collections::BinaryHeap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConsistencyResult {
    pub n_neigh: usize,
    /// Mean squared label difference to the nearest neighbours.
    pub value: f64,
}

/// Squared Euclidean distance, accumulated in f64 in coordinate order.
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| {
            let d = p.as_f64() - q.as_f64();
            d * d
        })
        .sum()
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Exact `k` nearest neighbours of every row, excluding the row itself,
/// ordered by (distance, index).
///
/// Rows are sorted on the first coordinate and each query scans outward,
/// stopping once the first-coordinate gap alone exceeds the current k-th
/// distance.
pub fn nearest_neighbors<T: Scalar>(x: ArrayView2<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("n_neigh must be in 1..{n}, got {k}")));
    }
    if x.ncols() == 0 {
        return Err(Error::Empty("features"));
    }
    let rows: Vec<Vec<T>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let key = |i: usize| rows[i][0].as_f64();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut pos = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let offer = |j: usize, heap: &mut BinaryHeap<Candidate>| {
            let c = Candidate(squared_distance(&rows[i], &rows[j]), j);
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(c);
            }
        };
        let worst = |heap: &BinaryHeap<Candidate>| {
            if heap.len() < k {
                f64::INFINITY
            } else {
                heap.peek().expect("heap is full").0
            }
        };
        let (mut lo, mut hi) = (pos[i], pos[i] + 1);
        let (mut down, mut up) = (true, true);
        while down || up {
            if down {
                if lo == 0 {
                    down = false;
                } else {
                    let j = order[lo - 1];
                    let gap = key(i) - key(j);
                    if gap * gap > worst(&heap) {
                        down = false;
                    } else {
                        offer(j, &mut heap);
                        lo -= 1;
                    }
                }
            }
            if up {
                if hi >= n {
                    up = false;
                } else {
                    let j = order[hi];
                    let gap = key(j) - key(i);
                    if gap * gap > worst(&heap) {
                        up = false;
                    } else {
                        offer(j, &mut heap);
                        hi += 1;
                    }
                }
            }
        }
        out.push(heap.into_sorted_vec().into_iter().map(|c| c.1).collect());
    }
    Ok(out)
}

/// Mean over rows of the mean squared label distance to the `n_neigh`
/// nearest neighbours. `labels` has one row per sample.
pub fn knn_consistency<T: Scalar>(
    x: ArrayView2<T>,
    labels: ArrayView2<f64>,
    n_neigh: usize,
) -> Result<KnnConsistencyResult> {
    if labels.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.nrows(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    let neighbours = nearest_neighbors(x, n_neigh)?;
    let n = x.nrows() as f64;
    let value = neighbours
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter()
                .map(|&j| {
                    labels
                        .row(i)
                        .iter()
                        .zip(labels.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n_neigh as f64
        })
        .sum::<f64>()
        / n;
    Ok(KnnConsistencyResult { n_neigh, value })
}
