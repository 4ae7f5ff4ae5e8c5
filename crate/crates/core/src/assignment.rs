//! Exact linear assignment on dense cost matrices.
//!
//! `solve` is the shortest-augmenting-path form of the Hungarian method with
//! row/column potentials, O(n²m). The gated wrappers turn partial
//! matching problems (some pairs forbidden, rows allowed to stay unmatched)
//! into full rectangular assignments.

/// Minimum-cost assignment of every row of a `rows × cols` matrix
/// (`rows <= cols`) to a distinct column. Returns the column per row.
fn solve_wide(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let rows = cost.len();
    debug_assert!(rows <= cols);
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
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

    let mut assignment = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Minimum-cost assignment on an arbitrary rectangular matrix. Every row is
/// assigned when `rows <= cols`, every column otherwise. Returns
/// `(row, col)` pairs sorted by row.
pub fn solve(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return Vec::new();
    }
    assert!(
        cost.iter().all(|r| r.len() == cols),
        "ragged cost matrix"
    );
    if rows <= cols {
        solve_wide(cost, cols)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        let mut pairs: Vec<(usize, usize)> = solve_wide(&transposed, rows)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Partial matching minimizing `Σ_matched cost + unmatched_cost · #unmatched
/// rows`, where `None` entries are forbidden. Matched costs must not exceed
/// `unmatched_cost` for the reduction to be exact.
///
/// With costs `1 − IoU` and `unmatched_cost = 1` this maximizes total IoU over
/// the admissible pairs.
pub fn min_cost_with_rejection(
    cost: &[Vec<Option<f64>>],
    unmatched_cost: f64,
) -> Vec<(usize, usize)> {
    let dense: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| c.map_or(unmatched_cost, |c| c.min(unmatched_cost)))
                .collect()
        })
        .collect();
    solve(&dense)
        .into_iter()
        .filter(|&(i, j)| cost[i][j].is_some())
        .collect()
}

/// Among admissible pairs (`Some` entries), finds a matching of maximum
/// cardinality and, among those, minimum total cost. Costs must be
/// non-negative.
pub fn max_cardinality_min_cost(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let total: f64 = cost.iter().flatten().flatten().copied().sum();
    // Any single extra pair is worth more than the whole cost budget.
    let bonus = 1.0 + 2.0 * total;
    let dense: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|c| c.map_or(0.0, |c| c - bonus)).collect())
        .collect();
    solve(&dense)
        .into_iter()
        .filter(|&(i, j)| cost[i][j].is_some())
        .collect()
}

/// Maximum-weight partial matching over non-negative weights.
pub fn max_weight(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let dense: Vec<Vec<f64>> = weights
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    solve(&dense)
}
