//! Minimum-cost one-to-one assignment between predictions (rows) and ground
//! truth (columns).
//!
//! The solver is the shortest-augmenting-path form of the Hungarian method,
//! O(n²m) for an n×m matrix with n ≤ m (wider-than-tall matrices are
//! transposed). Among all optimal assignments the lexicographically smallest
//! one (pairs sorted by prediction index) is returned: after the first solve,
//! rows are fixed greedily to the smallest column that still admits an
//! optimal completion. Columns are only tried when their edge is tight under
//! the first solve's dual potentials, since every optimal assignment uses
//! tight edges only.

use super::LossError;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if rows == 0 || cols == 0 {
            return Err(LossError::EmptyMatrix);
        }
        assert_eq!(data.len(), rows * cols, "cost matrix data has wrong length");
        if data.iter().any(|c| !c.is_finite()) {
            return Err(LossError::NonFiniteCost);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, LossError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged cost matrix");
        Self::new(n, m, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(pred_idx, gt_idx)` sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

struct Solution {
    /// row → column
    row_to_col: Vec<Option<usize>>,
    total: f64,
}

/// Solves a dense problem given through `cost(r, c)`; `n <= m` is required.
/// Returns the assignment and the dual potentials `(u, v)`.
fn solve_tall(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based arrays, index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Solves over the given row and column subsets (indices into `cost`).
fn solve_subset(cost: &CostMatrix, rows: &[usize], cols: &[usize]) -> Solution {
    let mut row_to_col = vec![None; rows.len()];
    if rows.is_empty() || cols.is_empty() {
        return Solution { row_to_col, total: 0.0 };
    }
    if rows.len() <= cols.len() {
        let (asg, _, _) = solve_tall(rows.len(), cols.len(), |r, c| cost.get(rows[r], cols[c]));
        for (r, c) in asg.into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
    } else {
        let (asg, _, _) = solve_tall(cols.len(), rows.len(), |c, r| cost.get(rows[r], cols[c]));
        for (c, r) in asg.into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
    }
    let total = row_to_col.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost.get(rows[r], cols[c]))).sum();
    // map back to indices of `cost`
    let row_to_col = row_to_col.into_iter().map(|c| c.map(|c| cols[c])).collect();
    Solution { row_to_col, total }
}

/// Reduced costs of the full problem in the original orientation.
fn reduced_costs(cost: &CostMatrix) -> (Vec<Option<usize>>, Vec<f64>) {
    let (n, m) = (cost.rows, cost.cols);
    let mut reduced = vec![0.0; n * m];
    let mut row_to_col = vec![None; n];
    if n <= m {
        let (asg, u, v) = solve_tall(n, m, |r, c| cost.get(r, c));
        for (r, c) in asg.into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
        for r in 0..n {
            for c in 0..m {
                reduced[r * m + c] = cost.get(r, c) - u[r] - v[c];
            }
        }
    } else {
        let (asg, u, v) = solve_tall(m, n, |c, r| cost.get(r, c));
        for (c, r) in asg.into_iter().enumerate() {
            row_to_col[r] = Some(c);
        }
        for r in 0..n {
            for c in 0..m {
                reduced[r * m + c] = cost.get(r, c) - u[c] - v[r];
            }
        }
    }
    (row_to_col, reduced)
}

pub fn hungarian_match(cost: &CostMatrix) -> Assignment {
    let (n, m) = (cost.rows, cost.cols);
    let (mut current, reduced) = reduced_costs(cost);
    let total_of =
        |asg: &[Option<usize>]| -> f64 { asg.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost.get(r, c))).sum() };
    let optimum = total_of(&current);
    let magnitude = cost.data.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-9 * (1.0 + magnitude) * (n.max(m) as f64);

    let mut col_used = vec![false; m];
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let limit = current[i].unwrap_or(m);
        for j in 0..limit {
            if col_used[j] || reduced[i * m + j] > tol {
                continue;
            }
            let rest_rows: Vec<usize> = (i + 1..n).collect();
            let rest_cols: Vec<usize> = (0..m).filter(|&c| !col_used[c] && c != j).collect();
            let sub = solve_subset(cost, &rest_rows, &rest_cols);
            let needed = n.min(m) - col_used.iter().filter(|&&u| u).count() - 1;
            let matched = sub.row_to_col.iter().filter(|c| c.is_some()).count();
            if matched != needed {
                continue;
            }
            if fixed_cost + cost.get(i, j) + sub.total <= optimum + tol {
                current[i] = Some(j);
                for (k, c) in sub.row_to_col.into_iter().enumerate() {
                    current[i + 1 + k] = c;
                }
                break;
            }
        }
        if let Some(j) = current[i] {
            col_used[j] = true;
            fixed_cost += cost.get(i, j);
        }
    }

    let pairs: Vec<(usize, usize)> = current.iter().enumerate().filter_map(|(r, c)| c.map(|c| (r, c))).collect();
    let total = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Assignment { pairs, total }
}
