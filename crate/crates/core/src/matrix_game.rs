//! Zero-sum matrix games solved as a linear program with a dense tableau
//! simplex method under Bland's rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Matrix;

const PIVOT_EPS: f64 = 1e-12;

/// Minimax solution of a matrix game in which the row player minimizes
/// `x^T Q y` and the column player maximizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// `max_b (x_star^T Q)_b`: the most Player 2 can extract from `x_star`.
    pub max_column_payoff: f64,
    /// `min_a (Q y_star)_a`: the least Player 1 can concede against `y_star`.
    pub min_row_payoff: f64,
}

/// Solves `min_x max_y x^T Q y`.
///
/// The matrix is shifted to be strictly positive and the row player's
/// problem is written as `max 1^T w  s.t.  Q'^T w <= 1, w >= 0`, whose optimum
/// is `1 / v'`. Column strategies come from the duals of the slack columns.
pub fn solve_matrix_game(q: &Matrix, tol: f64) -> Result<MatrixGameSolution> {
    let fail = |reason: &str| Error::LinearProgram { reason: reason.to_string(), matrix: q.to_rows() };
    if q.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite entry"));
    }
    let n_rows = q.rows();
    let n_cols = q.cols();
    let min = q.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // Tableau: one row per column constraint b, plus the objective row.
    // Variables: w_0..w_{n_rows-1}, then slacks s_0..s_{n_cols-1}.
    let n_vars = n_rows + n_cols;
    let width = n_vars + 1;
    let mut tab = vec![0.0; (n_cols + 1) * width];
    for b in 0..n_cols {
        for a in 0..n_rows {
            tab[b * width + a] = q.get(a, b) + shift;
        }
        tab[b * width + n_rows + b] = 1.0;
        tab[b * width + n_vars] = 1.0;
    }
    let obj = n_cols * width;
    for a in 0..n_rows {
        tab[obj + a] = -1.0;
    }
    let mut basis: Vec<usize> = (n_rows..n_vars).collect();

    let max_pivots = 50 * (n_vars + 1) * (n_vars + 1) + 1000;
    let mut pivots = 0;
    while let Some(enter) = (0..n_vars).find(|&j| tab[obj + j] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n_cols {
            let coef = tab[r * width + enter];
            if coef > PIVOT_EPS {
                let ratio = tab[r * width + n_vars] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_EPS || (ratio <= lratio + PIVOT_EPS && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        // The feasible region is bounded because Q' > 0, so this cannot happen
        // short of numerical breakdown.
        let Some((pivot_row, _)) = leave else {
            return Err(fail("unbounded tableau"));
        };
        pivot(&mut tab, width, n_cols + 1, pivot_row, enter);
        basis[pivot_row] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(fail("pivot limit exceeded"));
        }
    }

    let total = tab[obj + n_vars];
    if !(total > 0.0) || !total.is_finite() {
        return Err(fail("degenerate optimum"));
    }
    let mut w = vec![0.0; n_rows];
    for (r, &var) in basis.iter().enumerate() {
        if var < n_rows {
            w[var] = tab[r * width + n_vars];
        }
    }
    let u: Vec<f64> = (0..n_cols).map(|b| tab[obj + n_rows + b]).collect();
    let x_star = normalize(&w).ok_or_else(|| fail("empty primal strategy"))?;
    let y_star = normalize(&u).ok_or_else(|| fail("empty dual strategy"))?;
    let value = 1.0 / total - shift;

    let max_column_payoff = q.tmul_vec(&x_star).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let min_row_payoff = q.mul_vec(&y_star).into_iter().fold(f64::INFINITY, f64::min);
    if max_column_payoff > value + tol || min_row_payoff < value - tol {
        return Err(fail(&format!(
            "certificate check failed: value {value}, max column {max_column_payoff}, min row {min_row_payoff}"
        )));
    }
    Ok(MatrixGameSolution { value, x_star, y_star, max_column_payoff, min_row_payoff })
}

fn pivot(tab: &mut [f64], width: usize, n_rows: usize, pr: usize, pc: usize) {
    let p = tab[pr * width + pc];
    for j in 0..width {
        tab[pr * width + j] /= p;
    }
    tab[pr * width + pc] = 1.0;
    for r in 0..n_rows {
        if r == pr {
            continue;
        }
        let factor = tab[r * width + pc];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            tab[r * width + j] -= factor * tab[pr * width + j];
        }
        tab[r * width + pc] = 0.0;
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    (sum > 0.0).then(|| clipped.iter().map(|x| x / sum).collect())
}

/// `max_b (x^T Q)_b − min_a (Q y)_a`, the per-state duality gap.
pub fn duality_gap(q: &Matrix, x: &[f64], y: &[f64]) -> f64 {
    let best_col = q.tmul_vec(x).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let best_row = q.mul_vec(y).into_iter().fold(f64::INFINITY, f64::min);
    best_col - best_row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn constant_matrix() {
        let sol = solve_matrix_game(&m(&[&[0.3, 0.3], &[0.3, 0.3]]), 1e-9).unwrap();
        assert!((sol.value - 0.3).abs() < 1e-12);
        assert!((sol.x_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((sol.y_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_pennies() {
        let sol = solve_matrix_game(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-9).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-12);
        for p in sol.x_star.iter().chain(&sol.y_star) {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dominated_row() {
        // Rows are (0,0) and (1,1): Player 1 plays row 1 and concedes 0.
        let sol = solve_matrix_game(&m(&[&[0.0, 0.0], &[1.0, 1.0]]), 1e-9).unwrap();
        assert!(sol.value.abs() < 1e-12);
        assert!((sol.x_star[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangular_game() {
        // Column 2 dominates for the maximizer; value is min over rows of column 2.
        let sol = solve_matrix_game(&m(&[&[0.1, 0.9, 0.2], &[0.3, 0.4, 0.1]]), 1e-9).unwrap();
        assert!((sol.value - 0.4).abs() < 1e-12);
        assert!((sol.x_star[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_entry() {
        let sol = solve_matrix_game(&m(&[&[0.7]]), 1e-9).unwrap();
        assert!((sol.value - 0.7).abs() < 1e-14);
        assert_eq!(sol.x_star, vec![1.0]);
        assert_eq!(sol.y_star, vec![1.0]);
    }

    #[test]
    fn non_finite_is_diagnosed() {
        let err = solve_matrix_game(&m(&[&[f64::NAN, 0.0]]), 1e-9).unwrap_err();
        assert!(matches!(err, Error::LinearProgram { .. }));
    }

    #[test]
    fn gap_examples() {
        let q = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(duality_gap(&q, &[1.0, 0.0], &[1.0, 0.0]), 1.0);
        assert_eq!(duality_gap(&q, &[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }
}
