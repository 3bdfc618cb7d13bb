//! Dense linear assignment via the Hungarian method with row/column
//! potentials, O(n³).

use crate::error::{Error, Result};

/// Optimal one-to-one assignment of rows to columns of a square matrix.
/// Returns `perm` with row `i` assigned to column `perm[i]`.
pub fn solve_assignment(scores: &[Vec<f64>], maximize: bool) -> Result<Vec<usize>> {
    let n = scores.len();
    for (i, row) in scores.iter().enumerate() {
        if row.len() != n {
            return Err(Error::SizeMismatch {
                what: "assignment matrix row",
                left: row.len(),
                right: n,
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("assignment matrix entry ({i}, {j})")));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let cost = |i: usize, j: usize| {
        if maximize {
            -scores[i][j]
        } else {
            scores[i][j]
        }
    };

    // 1-based indices; slot 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Sum of `scores[i][perm[i]]` accumulated in row order.
pub fn assignment_total(scores: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| scores[i][j]).sum()
}
