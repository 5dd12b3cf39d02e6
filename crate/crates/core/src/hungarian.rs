//! Dense rectangular assignment by shortest augmenting paths with potentials.

/// Minimum-cost assignment of every row of a `rows × cols` matrix (`rows <= cols`)
/// to a distinct column. `cost` is row-major. Returns the column of each row.
pub fn solve(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "assignment needs rows <= cols");
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    let at = |r: usize, c: usize| cost[(r - 1) * cols + (c - 1)];
    // 1-based: index 0 is the virtual start column.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut col = 0;
        let mut min_slack = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[col] = true;
            let row = owner[col];
            let mut delta = f64::INFINITY;
            let mut next = 0;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let slack = at(row, c) - u[row] - v[c];
                if slack < min_slack[c] {
                    min_slack[c] = slack;
                    way[c] = col;
                }
                if min_slack[c] < delta {
                    delta = min_slack[c];
                    next = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col = next;
            if owner[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            owner[col] = owner[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; rows];
    for c in 1..=cols {
        if owner[c] != 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[f64], cols: usize, a: &[usize]) -> f64 {
        a.iter().enumerate().map(|(r, &c)| cost[r * cols + c]).sum()
    }

    fn brute(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn go(cost: &[f64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>) -> f64 {
            if r == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    best = best.min(cost[r * cols + c] + go(cost, rows, cols, r + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        go(cost, rows, cols, 0, &mut vec![false; cols])
    }

    #[test]
    fn diagonal() {
        let cost = [1.0, 10.0, 10.0, 1.0];
        assert_eq!(solve(&cost, 2, 2), vec![0, 1]);
    }

    #[test]
    fn rectangular_matches_brute_force() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 64) as f64 / 8.0
        };
        for rows in 1..5 {
            for cols in rows..7 {
                let cost: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
                let a = solve(&cost, rows, cols);
                let mut seen = a.clone();
                seen.sort();
                seen.dedup();
                assert_eq!(seen.len(), rows);
                assert_eq!(total(&cost, cols, &a), brute(&cost, rows, cols));
            }
        }
    }
}
