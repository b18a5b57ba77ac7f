//! Euclidean projections onto the probability simplex and onto polytopes
//! carved out of it by half-space constraints.

use crate::error::{Error, Result};
use crate::game::dot;

/// Euclidean projection of `v` onto the probability simplex by
/// sort-and-threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

/// Half-space `normal · u <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    fn violation(&self, u: &[f64]) -> f64 {
        (dot(&self.normal, u) - self.offset).max(0.0)
    }

    fn project(&self, u: &[f64]) -> Vec<f64> {
        let excess = dot(&self.normal, u) - self.offset;
        if excess <= 0.0 {
            return u.to_vec();
        }
        let norm_sq = dot(&self.normal, &self.normal);
        if norm_sq == 0.0 {
            // 0 <= offset fails: the set is empty; leave the point alone and
            // let the infeasibility check report it.
            return u.to_vec();
        }
        let step = excess / norm_sq;
        u.iter().zip(&self.normal).map(|(x, g)| x - step * g).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraOptions {
    pub kkt_tol: f64,
    pub max_cycles: usize,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-9, max_cycles: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeProjection {
    pub point: Vec<f64>,
    /// Max of the constraint violation and the last full-cycle displacement.
    pub kkt_residual: f64,
    pub cycles: usize,
}

/// Projects `z` onto `{u ∈ Δ : g_i · u <= h_i for all i}` with Dykstra's
/// alternating projections. The half-spaces are visited first and the
/// simplex last, so the returned point always lies exactly in the simplex.
pub fn project_simplex_polytope(
    z: &[f64],
    constraints: &[HalfSpace],
    options: DykstraOptions,
) -> Result<PolytopeProjection> {
    let n = z.len();
    if n == 0 {
        return Err(Error::Dimension("cannot project an empty vector".into()));
    }
    if let Some(c) = constraints.iter().find(|c| c.normal.len() != n) {
        return Err(Error::Dimension(format!("constraint of length {} for point of length {n}", c.normal.len())));
    }
    let stop = options.kkt_tol * 1e-3;
    let mut x = z.to_vec();
    let mut increments = vec![vec![0.0; n]; constraints.len() + 1];
    let mut residual = f64::INFINITY;
    for cycle in 1..=options.max_cycles {
        let start = x.clone();
        for (i, set) in constraints.iter().enumerate() {
            let shifted: Vec<f64> = x.iter().zip(&increments[i]).map(|(a, p)| a + p).collect();
            let projected = set.project(&shifted);
            for k in 0..n {
                increments[i][k] = shifted[k] - projected[k];
            }
            x = projected;
        }
        let last = constraints.len();
        let shifted: Vec<f64> = x.iter().zip(&increments[last]).map(|(a, p)| a + p).collect();
        let projected = project_simplex(&shifted);
        for k in 0..n {
            increments[last][k] = shifted[k] - projected[k];
        }
        x = projected;

        let displacement = x.iter().zip(&start).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let infeasibility = constraints.iter().fold(0.0_f64, |m, c| m.max(c.violation(&x)));
        residual = displacement.max(infeasibility);
        if cycle > 1 && residual <= stop {
            return Ok(PolytopeProjection { point: x, kkt_residual: residual, cycles: cycle });
        }
    }
    if residual <= options.kkt_tol {
        return Ok(PolytopeProjection { point: x, kkt_residual: residual, cycles: options.max_cycles });
    }
    Err(Error::Projection(format!(
        "Dykstra iteration stalled at residual {residual:e} after {} cycles (empty polytope?)",
        options.max_cycles
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force minimizer of ‖u − v‖² over a grid on Δ₂.
    fn grid_project_2(v: &[f64], pred: impl Fn(&[f64]) -> bool, steps: usize) -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        for i in 0..=steps {
            let u0 = i as f64 / steps as f64;
            let u = [u0, 1.0 - u0];
            if !pred(&u) {
                continue;
            }
            let d = (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
            if d < best.0 {
                best = (d, u.to_vec());
            }
        }
        best.1
    }

    #[test]
    fn feasible_point_is_unchanged() {
        assert_eq!(project_simplex(&[0.3, 0.7]), vec![0.3, 0.7]);
    }

    #[test]
    fn symmetric_negative_point() {
        assert_eq!(project_simplex(&[-1.0, -1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn corner_projection_matches_grid() {
        let grid = grid_project_2(&[1.2, 0.2], |_| true, 100_000);
        assert_eq!(grid, vec![1.0, 0.0]);
        // 1.2 - 0.2 rounds to just below 1, so the exact projection of the
        // floating-point input keeps ~3e-17 on the second coordinate.
        let p = project_simplex(&[1.2, 0.2]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn uniform_shift_is_preserved() {
        let p = project_simplex(&[0.45, 0.45]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn polytope_projection_matches_grid_on_two_actions() {
        // {u ∈ Δ₂ : u₀ <= 0.3}
        let cons = [HalfSpace { normal: vec![1.0, 0.0], offset: 0.3 }];
        let out = project_simplex_polytope(&[0.9, 0.1], &cons, Default::default()).unwrap();
        let grid = grid_project_2(&[0.9, 0.1], |u| u[0] <= 0.3 + 1e-12, 100_000);
        assert!((out.point[0] - grid[0]).abs() < 2e-5);
        assert!((out.point[0] - 0.3).abs() < 1e-9);
        assert!(out.kkt_residual <= 1e-9);
    }

    #[test]
    fn polytope_projection_pins_thin_set() {
        let delta = 1e-8;
        let cons = [
            HalfSpace { normal: vec![1.0, 0.0], offset: 0.5 + delta },
            HalfSpace { normal: vec![0.0, 1.0], offset: 0.5 + delta },
        ];
        let out = project_simplex_polytope(&[1.0, 0.0], &cons, Default::default()).unwrap();
        assert!((out.point[0] - 0.5).abs() <= 2.0 * delta);
        assert_eq!(out.point.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_polytope_is_an_error() {
        let cons = [
            HalfSpace { normal: vec![1.0, 0.0], offset: 0.2 },
            HalfSpace { normal: vec![0.0, 1.0], offset: 0.2 },
        ];
        let opts = DykstraOptions { max_cycles: 10_000, ..Default::default() };
        assert!(matches!(project_simplex_polytope(&[0.5, 0.5], &cons, opts), Err(Error::Projection(_))));
    }
}
