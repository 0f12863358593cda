//! Rectangular linear assignment (Hungarian method with potentials).

/// Solves a rectangular assignment problem where `None` marks a forbidden
/// pair.
///
/// The result maximizes the number of matched allowed pairs and, among those,
/// minimizes the total cost. Entry `r` of the result is the column matched to
/// row `r`.
pub fn solve(costs: &[Vec<Option<f64>>]) -> Vec<Option<usize>> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    debug_assert!(costs.iter().all(|r| r.len() == cols));

    let size = rows.max(cols);
    let span = costs
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    // any forbidden or padding cell outweighs every allowed assignment
    let big = 1.0 + 2.0 * span * size as f64;
    let cell = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            costs[r][c].unwrap_or(big)
        } else {
            big
        }
    };

    let matched = hungarian_square(size, cell);
    (0..rows)
        .map(|r| {
            let c = matched[r];
            (c < cols && costs[r][c].is_some()).then_some(c)
        })
        .collect()
}

/// Minimum-cost perfect matching on a dense `n x n` matrix. Returns the
/// column assigned to each row.
fn hungarian_square(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based arrays; index 0 is the virtual source row/column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
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
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
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

    let mut result = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            result[col_owner[j] - 1] = j - 1;
        }
    }
    result
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_classic() {
        let c = vec![
            vec![Some(4.0), Some(1.0), Some(3.0)],
            vec![Some(2.0), Some(0.0), Some(5.0)],
            vec![Some(3.0), Some(2.0), Some(2.0)],
        ];
        let sol = solve(&c);
        assert_eq!(oracle::score(&c, &sol), (3, 5.0));
    }

    #[test]
    fn forbidden_cells_are_never_used() {
        let c = vec![vec![None, Some(0.9)], vec![None, Some(0.1)]];
        let sol = solve(&c);
        assert_eq!(sol, vec![None, Some(1)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(solve(&[]).is_empty());
        assert_eq!(solve(&[vec![], vec![]]), vec![None, None]);
    }

    #[test]
    fn prefers_more_matches_over_cheaper_ones() {
        // matching row0->col0 alone costs 0 but blocks row1
        let c = vec![vec![Some(0.0), Some(0.9)], vec![Some(0.5), None]];
        let sol = solve(&c);
        assert_eq!(oracle::score(&c, &sol), (2, 1.4));
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            rows in 0usize..5,
            cols in 1usize..5,
            cells in prop::collection::vec(prop::option::weighted(0.7, 0.0f64..1.0), 25),
        ) {
            let c: Vec<Vec<Option<f64>>> =
                (0..rows).map(|r| (0..cols).map(|k| cells[r * 5 + k]).collect()).collect();
            let sol = solve(&c);
            let mut seen = std::collections::HashSet::new();
            prop_assert!(sol.iter().flatten().all(|k| seen.insert(*k)));
            let (n, s) = oracle::score(&c, &sol);
            let (bn, bs) = oracle::best(&c);
            prop_assert_eq!(n, bn);
            prop_assert!((s - bs).abs() < 1e-9, "{} vs {}", s, bs);
        }
    }
}
