//! Exact W1 between equal-size uniform point clouds.

use crate::error::{Error, Result};
use crate::pool::euclidean;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)). Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based indexing; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    assignment
}

/// W1 distance between the uniform empirical distributions on `a` and `c`
/// under the Euclidean ground metric.
pub fn batch_wasserstein<A, C>(a: &[A], c: &[C]) -> Result<f64>
where
    A: AsRef<[f64]>,
    C: AsRef<[f64]>,
{
    if a.len() != c.len() {
        return Err(Error::SizeMismatch(a.len(), c.len()));
    }
    if a.is_empty() {
        return Err(Error::SizeMismatch(0, 0));
    }
    let dim = a[0].as_ref().len();
    if let Some(bad) = a.iter().map(|x| x.as_ref().len()).chain(c.iter().map(|x| x.as_ref().len())).find(|&d| d != dim)
    {
        return Err(Error::DimensionMismatch { expected: dim, got: bad });
    }
    let cost: Vec<Vec<f64>> = a.iter().map(|x| c.iter().map(|y| euclidean(x.as_ref(), y.as_ref())).collect()).collect();
    let assignment = min_cost_assignment(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / a.len() as f64)
}
