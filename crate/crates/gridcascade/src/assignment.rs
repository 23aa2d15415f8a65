//! Exact minimum-cost assignment for the cyber-power coupling.

use crate::error::{Error, Result};

/// Solves the square linear assignment problem exactly in O(n^3) (Hungarian
/// algorithm with potentials). Among cost-optimal assignments the
/// lexicographically smallest row-to-column mapping is returned.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|row| row.len() == n), "square cost matrix");

    let (row_of_col, u, v) = solve_lsap(cost);

    // Complementary slackness: optimal assignments use only tight edges
    // (cost == u + v). Pick the lexicographically smallest perfect matching
    // of the tight-edge graph.
    let scale = cost
        .iter()
        .flatten()
        .fold(1.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-9 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost[i][j] - u[i] - v[j] <= eps)
                .collect()
        })
        .collect();

    // Unique tight edge per row means the optimum itself is unique.
    if tight.iter().all(|t| t.len() == 1) {
        let mut result = vec![0; n];
        for (j, &i) in row_of_col.iter().enumerate() {
            result[i] = j;
        }
        return result;
    }

    let mut chosen = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    for row in 0..n {
        let mut fixed = false;
        for &col in &tight[row] {
            if col_used[col] {
                continue;
            }
            col_used[col] = true;
            if rows_can_complete(row + 1, n, &tight, &col_used) {
                chosen[row] = col;
                fixed = true;
                break;
            }
            col_used[col] = false;
        }
        debug_assert!(fixed, "tight graph admits a perfect matching");
        if !fixed {
            // Numerically impossible fallback: keep the solver's matching.
            let mut result = vec![0; n];
            for (j, &i) in row_of_col.iter().enumerate() {
                result[i] = j;
            }
            return result;
        }
    }
    chosen
}

/// Can rows `from..n` all be matched into distinct unused columns of the
/// tight graph? Standard augmenting-path bipartite matching.
fn rows_can_complete(from: usize, n: usize, tight: &[Vec<usize>], col_used: &[bool]) -> bool {
    let mut match_col: Vec<Option<usize>> = vec![None; n];
    for row in from..n {
        let mut visited = vec![false; n];
        if !augment(row, tight, col_used, &mut match_col, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    row: usize,
    tight: &[Vec<usize>],
    col_used: &[bool],
    match_col: &mut Vec<Option<usize>>,
    visited: &mut Vec<bool>,
) -> bool {
    for &col in &tight[row] {
        if col_used[col] || visited[col] {
            continue;
        }
        visited[col] = true;
        if match_col[col].is_none()
            || augment(match_col[col].unwrap(), tight, col_used, match_col, visited)
        {
            match_col[col] = Some(row);
            return true;
        }
    }
    false
}

/// Hungarian algorithm with row/column potentials. Returns, per column, the
/// assigned row, plus the dual potentials certifying optimality.
fn solve_lsap(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    const FREE: usize = usize::MAX;
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![FREE; n + 1]; // column n is the sentinel
    let mut way = vec![n; n + 1];

    for i in 0..n {
        row_of_col[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0][j] - u[i0] - v[j];
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
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == FREE {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }

    row_of_col.truncate(n);
    v.truncate(n);
    (row_of_col, u, v)
}

/// Couples power buses to cyber nodes by minimizing the total Euclidean
/// distance between matched coordinates. `result[p]` is the cyber node
/// assigned to the p-th power bus.
pub fn assign_coupling(cyber: &[(f64, f64)], power: &[(f64, f64)]) -> Result<Vec<usize>> {
    if cyber.len() != power.len() {
        return Err(Error::CoordCountMismatch(cyber.len(), power.len()));
    }
    let cost: Vec<Vec<f64>> = power
        .iter()
        .map(|&(px, py)| {
            cyber
                .iter()
                .map(|&(cx, cy)| (px - cx).hypot(py - cy))
                .collect()
        })
        .collect();
    Ok(min_cost_assignment(&cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i][j])
            .sum()
    }

    /// Lexicographically-first optimal permutation by exhaustive search.
    fn brute_force(cost: &[Vec<f64>]) -> Vec<usize> {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            let mut perms = vec![vec![]];
            for _ in 0..n {
                let mut next = Vec::new();
                for p in perms {
                    for j in 0..n {
                        if !p.contains(&j) {
                            let mut q = p.clone();
                            q.push(j);
                            next.push(q);
                        }
                    }
                }
                perms = next;
            }
            perms
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        for p in permutations(cost.len()) {
            let c = total(cost, &p);
            // strict improvement keeps the lexicographically first optimum
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, p));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn identical_coordinates_match_identically() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let m = assign_coupling(&pts, &pts).unwrap();
        assert_eq!(m, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn forced_cross_pairing_is_taken() {
        let power = vec![(0.0, 0.0), (1.0, 0.0)];
        let cyber = vec![(1.0, 0.0), (0.0, 0.0)];
        let m = assign_coupling(&cyber, &power).unwrap();
        assert_eq!(m, vec![1, 0]);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        assert!(assign_coupling(&[(0.0, 0.0)], &[]).is_err());
    }

    #[test]
    fn all_equal_costs_break_ties_lexicographically() {
        let cost = vec![vec![1.0; 4]; 4];
        assert_eq!(min_cost_assignment(&cost), vec![0, 1, 2, 3]);
    }

    #[test]
    fn structured_tie_breaks_lexicographically() {
        // Rows 0/1 can take columns (0,1) or (1,0) at identical cost.
        let cost = vec![
            vec![1.0, 1.0, 5.0],
            vec![1.0, 1.0, 5.0],
            vec![5.0, 5.0, 1.0],
        ];
        assert_eq!(min_cost_assignment(&cost), vec![0, 1, 2]);
    }

    #[test]
    fn matches_brute_force_on_small_random_instances() {
        // Simple deterministic LCG so the test needs no rng dependency.
        let mut seed = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 2..=6 {
            for _ in 0..20 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| next() * 10.0).collect())
                    .collect();
                let fast = min_cost_assignment(&cost);
                let slow = brute_force(&cost);
                assert!(
                    (total(&cost, &fast) - total(&cost, &slow)).abs() < 1e-9,
                    "cost mismatch for n={n}: {fast:?} vs {slow:?}"
                );
                assert_eq!(fast, slow, "assignment mismatch for n={n}");
            }
        }
    }

    #[test]
    fn never_beats_but_never_loses_to_identity() {
        let power: Vec<(f64, f64)> = (0..8)
            .map(|i| ((i * 7 % 5) as f64, (i * 3 % 4) as f64))
            .collect();
        let cyber: Vec<(f64, f64)> = (0..8)
            .map(|i| ((i * 2 % 7) as f64, (i * 5 % 3) as f64))
            .collect();
        let m = assign_coupling(&cyber, &power).unwrap();
        let dist = |p: (f64, f64), c: (f64, f64)| (p.0 - c.0).hypot(p.1 - c.1);
        let assigned: f64 = m
            .iter()
            .enumerate()
            .map(|(i, &j)| dist(power[i], cyber[j]))
            .sum();
        let identity: f64 = (0..8).map(|i| dist(power[i], cyber[i])).sum();
        assert!(assigned <= identity + 1e-12);
    }
}
