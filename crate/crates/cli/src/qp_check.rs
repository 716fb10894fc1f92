//! Randomized cross-check of the steering QP. For each problem the solver's
//! answer must satisfy the KKT conditions (non-negative multipliers on the
//! active rows) and must not be beaten by any point of a 1e-3 grid.

use clap::Args;
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cbfrrt::cbf::{ObstacleSource, SafetyConstraint};
use cbfrrt::geometry::ControlInput;
use cbfrrt::qp::{solve_qp, ControlBox, QpProblem};

#[derive(Args)]
pub struct QpCheckArgs {
    #[arg(long, default_value_t = 500)]
    problems: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn random_problem<R: Rng>(rng: &mut R) -> QpProblem {
    let n = rng.random_range(0..=5);
    let rows = (0..n)
        .map(|_| SafetyConstraint {
            a: Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            b: rng.random_range(-1.0..1.0),
            h_value: 0.0,
            source: ObstacleSource::StaticDisc(0),
        })
        .collect();
    QpProblem {
        u_ref: ControlInput::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)),
        weights: [1e5, 1e5],
        rows,
        bounds: ControlBox::symmetric(0.33, 0.3),
    }
}

fn all_rows(p: &QpProblem) -> Vec<(Vector2<f64>, f64)> {
    let b = &p.bounds;
    let mut rows: Vec<(Vector2<f64>, f64)> = p.rows.iter().map(|r| (r.a, r.b)).collect();
    rows.push((Vector2::new(1.0, 0.0), -b.v_min));
    rows.push((Vector2::new(-1.0, 0.0), b.v_max));
    rows.push((Vector2::new(0.0, 1.0), -b.omega_min));
    rows.push((Vector2::new(0.0, -1.0), b.omega_max));
    rows
}

/// Searches for multipliers `lambda >= 0` on the active rows with
/// `2 H (u - r) = sum lambda_i a_i`.
fn kkt_holds(p: &QpProblem, u: Vector2<f64>) -> bool {
    let r = Vector2::new(p.u_ref.v, p.u_ref.omega);
    let g = 2.0 * Vector2::new(p.weights[0] * (u.x - r.x), p.weights[1] * (u.y - r.y));
    let scale = 1.0 + g.norm();
    let active: Vec<Vector2<f64>> = all_rows(p)
        .into_iter()
        .filter(|(a, b)| (a.dot(&u) + b).abs() <= 1e-9 * (1.0 + a.abs().sum() + b.abs()))
        .map(|(a, _)| a)
        .collect();
    if g.norm() <= 1e-6 * scale {
        return true;
    }
    for i in 0..active.len() {
        // one multiplier
        let a = active[i];
        let lam = g.dot(&a) / a.norm_squared();
        if lam >= -1e-6 * scale && (g - a * lam).norm() <= 1e-6 * scale {
            return true;
        }
        for &b in &active[i + 1..] {
            let m = Matrix2::from_columns(&[a, b]);
            if let Some(inv) = m.try_inverse() {
                let lam = inv * g;
                if lam.min() >= -1e-6 * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// Best feasible point of a 1e-3 grid over the box.
pub fn grid_oracle(p: &QpProblem) -> Option<(Vector2<f64>, f64)> {
    let b = &p.bounds;
    let nv = ((b.v_max - b.v_min) / 1e-3).round() as usize;
    let nw = ((b.omega_max - b.omega_min) / 1e-3).round() as usize;
    let mut best: Option<(Vector2<f64>, f64)> = None;
    for i in 0..=nv {
        let v = b.v_min + i as f64 * 1e-3;
        for k in 0..=nw {
            let w = b.omega_min + k as f64 * 1e-3;
            if p.rows.iter().all(|r| r.a.x * v + r.a.y * w + r.b >= 0.0) {
                let j = p.objective(ControlInput::new(v, w));
                if best.is_none_or(|(_, bj)| j < bj) {
                    best = Some((Vector2::new(v, w), j));
                }
            }
        }
    }
    best
}

#[derive(Default)]
struct Tally {
    solved: usize,
    infeasible: usize,
    kkt_fail: usize,
    grid_fail: usize,
    row_violation: usize,
    worst_gap: f64,
}

pub fn run(args: QpCheckArgs) -> Result<u8, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let problems: Vec<QpProblem> = (0..args.problems).map(|_| random_problem(&mut rng)).collect();
    let checks: Vec<(bool, bool, bool, bool, f64)> = problems
        .par_iter()
        .map(|p| {
            let grid = grid_oracle(p);
            match solve_qp(p) {
                Ok(sol) => {
                    let u = Vector2::new(sol.control.v, sol.control.omega);
                    let rows_ok = p.rows.iter().all(|r| r.slack(u.x, u.y) >= -1e-9);
                    let kkt = kkt_holds(p, u);
                    let (grid_ok, gap) = match grid {
                        Some((g, gj)) => ((g - u).norm() <= 1e-3 * std::f64::consts::SQRT_2 + 1e-9 || sol.objective <= gj, sol.objective - gj),
                        None => (true, 0.0),
                    };
                    (true, rows_ok, kkt, grid_ok, gap)
                }
                // the grid may still find points in a sliver the solver missed
                Err(_) => (false, true, true, grid.is_none(), 0.0),
            }
        })
        .collect();
    let mut t = Tally::default();
    for (solved, rows_ok, kkt, grid_ok, gap) in checks {
        if solved {
            t.solved += 1;
        } else {
            t.infeasible += 1;
        }
        t.row_violation += !rows_ok as usize;
        t.kkt_fail += !kkt as usize;
        t.grid_fail += !grid_ok as usize;
        t.worst_gap = t.worst_gap.max(gap);
    }
    println!(
        "problems={} solved={} infeasible={} kkt_fail={} grid_fail={} row_violation={} max_objective_gap={:.3e}",
        args.problems, t.solved, t.infeasible, t.kkt_fail, t.grid_fail, t.row_violation, t.worst_gap
    );
    Ok(if t.kkt_fail + t.grid_fail + t.row_violation == 0 { 0 } else { 1 })
}
