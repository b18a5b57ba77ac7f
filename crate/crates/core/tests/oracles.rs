//! Library results checked against brute-force or closed-form oracles
//! written from scratch here.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mogda::estimator::hitting_times;
use mogda::game::{best_response, evaluate_policy_pair, BestResponseOptions, JointPolicy, MarkovGame, Player};
use mogda::gamegen::{builtin, random_game};
use mogda::ground_truth::{dist_to_optimal_sets, shapley_solve, ShapleyOptions};
use mogda::projection::{project_simplex_polytope, DykstraOptions, HalfSpace};
use mogda::sampling::sample_simplex;

/// Value iteration for a fixed policy pair, run to machine precision.
fn iterate_values(game: &MarkovGame, policy: &JointPolicy) -> Vec<f64> {
    let n = game.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..5_000 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..game.n_actions_p1() {
                for b in 0..game.n_actions_p2() {
                    let w = policy.x[s][a] * policy.y[s][b];
                    let future: f64 = game.transition_row(s, a, b).iter().zip(&v).map(|(p, x)| p * x).sum();
                    next[s] += w * (game.loss(s, a, b) + game.gamma() * future);
                }
            }
        }
        v = next;
    }
    v
}

fn random_policy(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| sample_simplex(rng, k)).collect()
}

#[test]
fn policy_evaluation_matches_value_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..10 {
        let game = random_game(seed, 4, 3, 2, 0.9, 0.05).unwrap();
        let policy = JointPolicy { x: random_policy(&mut rng, 4, 3), y: random_policy(&mut rng, 4, 2) };
        let exact = evaluate_policy_pair(&game, &policy).unwrap();
        let iterated = iterate_values(&game, &policy);
        for (a, b) in exact.iter().zip(&iterated) {
            assert!((a - b).abs() < 1e-11, "seed {seed}: {a} vs {b}");
        }
    }
}

fn pure_policies(n_states: usize, n_actions: usize) -> Vec<Vec<Vec<f64>>> {
    let total = n_actions.pow(n_states as u32);
    (0..total)
        .map(|mut code| {
            (0..n_states)
                .map(|_| {
                    let mut one_hot = vec![0.0; n_actions];
                    one_hot[code % n_actions] = 1.0;
                    code /= n_actions;
                    one_hot
                })
                .collect()
        })
        .collect()
}

#[test]
fn best_response_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..8 {
        let game = random_game(100 + seed, 3, 3, 2, 0.8, 0.05).unwrap();
        let y = random_policy(&mut rng, 3, 2);
        let br = best_response(&game, &y, Player::Two, BestResponseOptions::default()).unwrap();
        let mut best = vec![f64::INFINITY; 3];
        for x in pure_policies(3, 3) {
            let v = iterate_values(&game, &JointPolicy { x, y: y.clone() });
            for s in 0..3 {
                best[s] = best[s].min(v[s]);
            }
        }
        for (a, b) in br.value.iter().zip(&best) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }

        let x = random_policy(&mut rng, 3, 3);
        let br = best_response(&game, &x, Player::One, BestResponseOptions::default()).unwrap();
        let mut worst = vec![f64::NEG_INFINITY; 3];
        for y in pure_policies(3, 2) {
            let v = iterate_values(&game, &JointPolicy { x: x.clone(), y });
            for s in 0..3 {
                worst[s] = worst[s].max(v[s]);
            }
        }
        for (a, b) in br.value.iter().zip(&worst) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

/// Value of a 2×2 zero-sum game, row player minimizing.
fn val_2x2(m: [[f64; 2]; 2]) -> f64 {
    let pure = (0..2)
        .map(|a| m[a][0].max(m[a][1]))
        .fold(f64::INFINITY, f64::min);
    let lower = (0..2)
        .map(|b| m[0][b].min(m[1][b]))
        .fold(f64::NEG_INFINITY, f64::max);
    if (pure - lower).abs() < 1e-15 {
        return pure;
    }
    let [[a, b], [c, d]] = m;
    (a * d - b * c) / (a + d - b - c)
}

#[test]
fn shapley_matches_closed_form_iteration() {
    for seed in 0..10 {
        let game = random_game(200 + seed, 2, 2, 2, 0.7, 0.1).unwrap();
        let mut v = [0.0; 2];
        for _ in 0..400 {
            let mut next = [0.0; 2];
            for (s, slot) in next.iter_mut().enumerate() {
                let mut m = [[0.0; 2]; 2];
                for (a, row) in m.iter_mut().enumerate() {
                    for (b, cell) in row.iter_mut().enumerate() {
                        let p = game.transition_row(s, a, b);
                        *cell = game.loss(s, a, b) + game.gamma() * (p[0] * v[0] + p[1] * v[1]);
                    }
                }
                *slot = val_2x2(m);
            }
            v = next;
        }
        let truth = shapley_solve(&game, ShapleyOptions::new(1e-10)).unwrap();
        for (a, b) in truth.v_star.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn single_state_value_is_scaled_matrix_value() {
    let mp = shapley_solve(&builtin("mp1", Some(0.9)).unwrap(), ShapleyOptions::new(1e-10)).unwrap();
    assert!((mp.v_star[0] - 0.5 / (1.0 - 0.9)).abs() < 1e-9);
    let c = shapley_solve(&builtin("const", Some(0.5)).unwrap(), ShapleyOptions::new(1e-10)).unwrap();
    assert!((c.v_star[0] - 0.4 / (1.0 - 0.5)).abs() < 1e-9);
}

#[test]
fn distance_in_pennies_has_closed_form() {
    // Matching pennies has the unique equilibrium (1/2, 1/2) for both players.
    let truth = shapley_solve(&builtin("mp1", None).unwrap(), ShapleyOptions::new(1e-10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let p: f64 = rng.random();
        let q: f64 = rng.random();
        let policy = JointPolicy { x: vec![vec![p, 1.0 - p]], y: vec![vec![q, 1.0 - q]] };
        let d = dist_to_optimal_sets(&truth, &policy).unwrap();
        let expected = 2.0 * (p - 0.5).powi(2) + 2.0 * (q - 0.5).powi(2);
        assert!((d.mean - expected).abs() < 1e-8, "{} vs {expected}", d.mean);
    }
}

#[test]
fn dykstra_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 400usize;
    for _ in 0..10 {
        let normal: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let anchor = sample_simplex(&mut rng, 3);
        let offset = normal.iter().zip(&anchor).map(|(a, b)| a * b).sum::<f64>();
        let cut = HalfSpace { normal: normal.clone(), offset };
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..1.5)).collect();
        let proj = project_simplex_polytope(&z, std::slice::from_ref(&cut), DykstraOptions::default()).unwrap();

        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                if normal.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() > offset {
                    continue;
                }
                best = best.min(u.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
            }
        }
        let got = proj.point.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        // The grid only sees points within one grid cell of the true projection.
        assert!(got <= best + 1e-9, "{got} vs {best}");
        assert!(got >= best - 2.0 / n as f64, "{got} vs {best}");
    }
}

#[test]
fn hitting_times_match_survival_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let n = 4;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| sample_simplex(&mut rng, n)).collect();
        let kernel = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let h = hitting_times(&kernel, 0).unwrap();
        // E[T] = Σ_k P(T > k) with the target made absorbing and removed.
        let mut alive = vec![1.0; n - 1];
        let mut expected = vec![0.0; n - 1];
        for _ in 0..20_000 {
            for (e, a) in expected.iter_mut().zip(&alive) {
                *e += a;
            }
            alive = (0..n - 1)
                .map(|i| (0..n - 1).map(|j| rows[i + 1][j + 1] * alive[j]).sum())
                .collect();
        }
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8 * b.max(1.0), "{a} vs {b}");
        }
    }
}
