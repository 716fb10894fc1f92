//! Exact solver for the two-variable steering QP
//!
//! ```text
//! minimize   (u - u_ref)^T H (u - u_ref),  H = diag(w_v, w_omega)
//! subject to a_i . u + b_i >= 0            (CBF rows)
//!            u in [v_min, v_max] x [omega_min, omega_max]
//! ```
//!
//! The minimizer of a strictly convex quadratic over a polygon is either the
//! unconstrained point, the projection onto one edge line, or a vertex. All
//! of those candidates are enumerated and the cheapest feasible one wins.

use crate::cbf::SafetyConstraint;
use crate::error::QpError;
use crate::geometry::ControlInput;

/// Rectangular bounds on `[v, omega]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl ControlBox {
    pub fn symmetric(v_max: f64, omega_max: f64) -> Self {
        Self {
            v_min: -v_max,
            v_max,
            omega_min: -omega_max,
            omega_max,
        }
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(
            u.v.clamp(self.v_min, self.v_max),
            u.omega.clamp(self.omega_min, self.omega_max),
        )
    }

    pub fn contains(&self, u: ControlInput) -> bool {
        u.v >= self.v_min && u.v <= self.v_max && u.omega >= self.omega_min && u.omega <= self.omega_max
    }

    fn is_valid(&self) -> bool {
        self.v_min <= self.v_max
            && self.omega_min <= self.omega_max
            && [self.v_min, self.v_max, self.omega_min, self.omega_max]
                .iter()
                .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_ref: ControlInput,
    /// Diagonal of `H`.
    pub weights: [f64; 2],
    pub rows: Vec<SafetyConstraint>,
    pub bounds: ControlBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSolution {
    pub control: ControlInput,
    pub objective: f64,
    /// `H` had a zero entry. The free coordinate was resolved by staying as
    /// close to `u_ref` as the constraints allow.
    pub degenerate: bool,
}

/// Half-plane `a . u + b >= 0` in the 2-D control space.
#[derive(Debug, Clone, Copy)]
struct Halfspace {
    a: [f64; 2],
    b: f64,
}

impl Halfspace {
    #[inline]
    fn slack(&self, u: [f64; 2]) -> f64 {
        self.a[0] * u[0] + self.a[1] * u[1] + self.b
    }

    #[inline]
    fn tolerance(&self) -> f64 {
        1e-12 * (1.0 + self.a[0].abs() + self.a[1].abs() + self.b.abs())
    }
}

impl QpProblem {
    pub fn objective(&self, u: ControlInput) -> f64 {
        let dv = u.v - self.u_ref.v;
        let dw = u.omega - self.u_ref.omega;
        self.weights[0] * dv * dv + self.weights[1] * dw * dw
    }

    fn halfspaces(&self) -> Vec<Halfspace> {
        let b = &self.bounds;
        let mut hs: Vec<Halfspace> = self
            .rows
            .iter()
            .map(|r| Halfspace { a: [r.a.x, r.a.y], b: r.b })
            .collect();
        hs.push(Halfspace { a: [1.0, 0.0], b: -b.v_min });
        hs.push(Halfspace { a: [-1.0, 0.0], b: b.v_max });
        hs.push(Halfspace { a: [0.0, 1.0], b: -b.omega_min });
        hs.push(Halfspace { a: [0.0, -1.0], b: b.omega_max });
        hs
    }
}

fn feasible(hs: &[Halfspace], u: [f64; 2]) -> bool {
    hs.iter().all(|h| h.slack(u) >= -h.tolerance())
}

/// Intersection of the boundary lines of two halfspaces, if they are not parallel.
fn vertex(p: &Halfspace, q: &Halfspace) -> Option<[f64; 2]> {
    let det = p.a[0] * q.a[1] - p.a[1] * q.a[0];
    let scale = (p.a[0].abs() + p.a[1].abs()) * (q.a[0].abs() + q.a[1].abs());
    if det.abs() <= 1e-14 * scale || scale == 0.0 {
        return None;
    }
    // axis-aligned lines (the box edges) are solved exactly
    for (s, t) in [(p, q), (q, p)] {
        if s.a[1] == 0.0 {
            let v = -s.b / s.a[0];
            return Some([v, if t.a[0] == 0.0 { -t.b / t.a[1] } else { -(t.b + t.a[0] * v) / t.a[1] }]);
        }
        if s.a[0] == 0.0 {
            let w = -s.b / s.a[1];
            return Some([if t.a[1] == 0.0 { -t.b / t.a[0] } else { -(t.b + t.a[1] * w) / t.a[0] }, w]);
        }
    }
    // a_p . u = -b_p, a_q . u = -b_q
    let v = (-p.b * q.a[1] + q.b * p.a[1]) / det;
    let w = (-q.b * p.a[0] + p.b * q.a[0]) / det;
    Some([v, w])
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let [wv, ww] = problem.weights;
    if !(wv >= 0.0 && ww >= 0.0) || !wv.is_finite() || !ww.is_finite() {
        return Err(QpError::InvalidProblem("weights must be finite and non-negative"));
    }
    if !problem.bounds.is_valid() {
        return Err(QpError::InvalidProblem("control box is empty"));
    }
    if problem.rows.iter().any(|r| !(r.a.x.is_finite() && r.a.y.is_finite() && r.b.is_finite())) {
        return Err(QpError::InvalidProblem("constraint row is not finite"));
    }
    let hs = problem.halfspaces();
    if wv > 0.0 && ww > 0.0 {
        strictly_convex(problem, &hs)
    } else if wv == 0.0 && ww == 0.0 {
        let relaxed = QpProblem { weights: [1.0, 1.0], ..problem.clone() };
        let mut sol = strictly_convex(&relaxed, &hs)?;
        sol.objective = 0.0;
        sol.degenerate = true;
        Ok(sol)
    } else {
        single_weight(problem, &hs)
    }
}

fn strictly_convex(problem: &QpProblem, hs: &[Halfspace]) -> Result<QpSolution, QpError> {
    let r = [problem.u_ref.v, problem.u_ref.omega];
    let w = problem.weights;
    let cost = |u: [f64; 2]| {
        let d0 = u[0] - r[0];
        let d1 = u[1] - r[1];
        w[0] * d0 * d0 + w[1] * d1 * d1
    };

    if feasible(hs, r) {
        return Ok(QpSolution {
            control: ControlInput::new(r[0], r[1]),
            objective: 0.0,
            degenerate: false,
        });
    }

    let mut best: Option<([f64; 2], f64)> = None;
    let consider = |u: [f64; 2], best: &mut Option<([f64; 2], f64)>| {
        let j = cost(u);
        if best.is_some_and(|(_, bj)| j >= bj) {
            return;
        }
        if feasible(hs, u) {
            *best = Some((u, j));
        }
    };

    // one active constraint: H-weighted projection onto its line
    for h in hs {
        let hinv_a = [h.a[0] / w[0], h.a[1] / w[1]];
        let denom = h.a[0] * hinv_a[0] + h.a[1] * hinv_a[1];
        if denom <= 0.0 {
            continue;
        }
        let u = if h.a[1] == 0.0 {
            [-h.b / h.a[0], r[1]]
        } else if h.a[0] == 0.0 {
            [r[0], -h.b / h.a[1]]
        } else {
            let lambda = h.slack(r) / denom;
            [r[0] - lambda * hinv_a[0], r[1] - lambda * hinv_a[1]]
        };
        consider(u, &mut best);
    }
    // two active constraints: vertices
    for i in 0..hs.len() {
        for j in (i + 1)..hs.len() {
            if let Some(u) = vertex(&hs[i], &hs[j]) {
                consider(u, &mut best);
            }
        }
    }

    match best {
        Some((u, j)) => Ok(QpSolution {
            control: ControlInput::new(u[0], u[1]),
            objective: j,
            degenerate: false,
        }),
        None => Err(QpError::Infeasible),
    }
}

/// Exactly one diagonal entry of `H` is zero: minimize over the weighted
/// coordinate first, then pick the free coordinate closest to `u_ref`
/// within the slice of the polygon.
fn single_weight(problem: &QpProblem, hs: &[Halfspace]) -> Result<QpSolution, QpError> {
    let (primary, free) = if problem.weights[0] > 0.0 { (0, 1) } else { (1, 0) };
    let r = [problem.u_ref.v, problem.u_ref.omega];

    // the box makes the polygon bounded, so its extent along `primary`
    // is attained at vertices
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..hs.len() {
        for j in (i + 1)..hs.len() {
            if let Some(u) = vertex(&hs[i], &hs[j]) {
                if feasible(hs, u) {
                    lo = lo.min(u[primary]);
                    hi = hi.max(u[primary]);
                }
            }
        }
    }
    if lo > hi {
        return Err(QpError::Infeasible);
    }
    let p_star = r[primary].clamp(lo, hi);

    let mut f_lo = f64::NEG_INFINITY;
    let mut f_hi = f64::INFINITY;
    for h in hs {
        let coeff = h.a[free];
        let rest = h.a[primary] * p_star + h.b;
        if coeff.abs() <= 1e-15 {
            continue;
        }
        let bound = -rest / coeff;
        if coeff > 0.0 {
            f_lo = f_lo.max(bound);
        } else {
            f_hi = f_hi.min(bound);
        }
    }
    let f_star = if f_lo <= f_hi { r[free].clamp(f_lo, f_hi) } else { 0.5 * (f_lo + f_hi) };

    let mut u = [0.0; 2];
    u[primary] = p_star;
    u[free] = f_star;
    let control = ControlInput::new(u[0], u[1]);
    Ok(QpSolution {
        control,
        objective: problem.objective(control),
        degenerate: true,
    })
}
