// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact scalar fused lasso
//!
//! ```text
//! minimize  sum_i (x_i - y_i)^2 + lambda * sum_i |x_i - x_{i+1}|
//! ```
//!
//! and its boundary-anchored variant with the extra terms
//! `lambda * (|x_1 - a| + |x_m - b|)`.
//!
//! The solver runs a forward pass over the derivatives of the partial value
//! functions, which are increasing piecewise-linear functions stored as a
//! deque of knots, and then backtracks by clipping. All indices are 0-based.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Relative tolerance below which neighbouring estimates count as fused.
pub const FUSION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct FusedSolution {
    pub xhat: Vec<f64>,
    pub lambda: f64,
    /// Objective value at `xhat` (including anchor terms when present).
    pub objective: f64,
    pub kkt_residual: f64,
    /// 0-based `i` such that `xhat[i]` and `xhat[i + 1]` differ beyond the
    /// fusion tolerance.
    pub jump_set: Vec<usize>,
}

/// Per-segment problem with optional boundary anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredProblem {
    pub y: Vec<f64>,
    /// Left anchor `a`; `None` drops the `|x_1 - a|` term.
    pub a: Option<f64>,
    /// Right anchor `b`; `None` drops the `|x_m - b|` term.
    pub b: Option<f64>,
    pub lambda: f64,
}

impl AnchoredProblem {
    pub fn new(y: Vec<f64>, a: f64, b: f64, lambda: f64) -> Self {
        Self {
            y,
            a: Some(a),
            b: Some(b),
            lambda,
        }
    }
}

fn validate(y: &[f64], lambda: f64) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty data".into()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite data at index {i}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

/// Fused lasso objective `sum (x - y)^2 + lambda * TV(x)`.
pub fn objective(y: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let fit: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let tv: f64 = x.windows(2).map(|w| (w[0] - w[1]).abs()).sum();
    fit + lambda * tv
}

fn anchored_objective(prob: &AnchoredProblem, x: &[f64]) -> f64 {
    let mut value = objective(&prob.y, prob.lambda, x);
    if let Some(a) = prob.a {
        value += prob.lambda * (x[0] - a).abs();
    }
    if let Some(b) = prob.b {
        value += prob.lambda * (x[x.len() - 1] - b).abs();
    }
    value
}

pub fn jump_set(x: &[f64]) -> Vec<usize> {
    let tol = fusion_tolerance(x);
    x.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] - w[1]).abs() > tol)
        .map(|(i, _)| i)
        .collect()
}

fn fusion_tolerance(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    FUSION_TOL * (1.0 + scale)
}

/// Knot of a piecewise-linear derivative: to the right of `pos` the slope
/// grows by `dslope` and the intercept by `dintercept`.
#[derive(Clone, Copy, Debug)]
struct Knot {
    pos: f64,
    dslope: f64,
    dintercept: f64,
}

/// Increasing piecewise-linear function `f(x) = slope * x + intercept` per
/// piece, with the leftmost and rightmost pieces cached.
#[derive(Debug)]
struct Derivative {
    knots: VecDeque<Knot>,
    left: (f64, f64),
    right: (f64, f64),
}

impl Derivative {
    fn new(capacity: usize) -> Self {
        Self {
            knots: VecDeque::with_capacity(capacity),
            left: (0.0, 0.0),
            right: (0.0, 0.0),
        }
    }

    /// Adds `weight * sign(x - at)`.
    fn add_abs(&mut self, at: f64, weight: f64) {
        self.left.1 -= weight;
        self.right.1 += weight;
        let idx = self.knots.partition_point(|k| k.pos < at);
        self.knots.insert(
            idx,
            Knot {
                pos: at,
                dslope: 0.0,
                dintercept: 2.0 * weight,
            },
        );
    }

    /// Adds the derivative of `0.5 * (x - y)^2`.
    fn add_square(&mut self, y: f64) {
        self.left.0 += 1.0;
        self.left.1 -= y;
        self.right.0 += 1.0;
        self.right.1 -= y;
    }

    /// Smallest `x` with `f(x+) >= level`, without modifying the function.
    fn crossing(&self, level: f64) -> f64 {
        let (mut a, mut b) = self.left;
        for k in &self.knots {
            if a * k.pos + b >= level {
                break;
            }
            a += k.dslope;
            b += k.dintercept;
            if a * k.pos + b >= level {
                return k.pos;
            }
        }
        (level - b) / a
    }

    /// Replaces `f` by `max(f, -mu)` and returns the crossing point.
    fn clip_below(&mut self, mu: f64) -> f64 {
        let (mut a, mut b) = self.left;
        let mut at = None;
        while let Some(k) = self.knots.front().copied() {
            if a * k.pos + b >= -mu {
                break;
            }
            self.knots.pop_front();
            a += k.dslope;
            b += k.dintercept;
            if a * k.pos + b >= -mu {
                at = Some(k.pos);
                break;
            }
        }
        let t = at.unwrap_or((-mu - b) / a);
        self.knots.push_front(Knot {
            pos: t,
            dslope: a,
            dintercept: b + mu,
        });
        self.left = (0.0, -mu);
        t
    }

    /// Replaces `f` by `min(f, mu)` and returns the crossing point.
    fn clip_above(&mut self, mu: f64) -> f64 {
        let (mut a, mut b) = self.right;
        let mut at = None;
        while let Some(k) = self.knots.back().copied() {
            if a * k.pos + b <= mu {
                break;
            }
            self.knots.pop_back();
            a -= k.dslope;
            b -= k.dintercept;
            if a * k.pos + b <= mu {
                at = Some(k.pos);
                break;
            }
        }
        let t = at.unwrap_or((mu - b) / a);
        self.knots.push_back(Knot {
            pos: t,
            dslope: -a,
            dintercept: mu - b,
        });
        self.right = (0.0, mu);
        t
    }
}

// Rounding can leave lo a hair above hi; f64::clamp would panic on that.
fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Forward/backward pass for the half-scaled problem
/// `0.5 * sum (x - y)^2 + mu * (TV(x) + |x_1 - a| + |x_m - b|)`.
fn dp_solve(y: &[f64], mu: f64, a: Option<f64>, b: Option<f64>) -> Vec<f64> {
    let m = y.len();
    if mu == 0.0 {
        return y.to_vec();
    }
    let mut f = Derivative::new(2 * m + 2);
    if let Some(a) = a {
        f.add_abs(a, mu);
    }
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    for i in 0..m - 1 {
        f.add_square(y[i]);
        lo[i] = f.clip_below(mu);
        hi[i] = f.clip_above(mu);
    }
    f.add_square(y[m - 1]);
    let mut x = vec![0.0; m];
    x[m - 1] = match b {
        // 0 in f(x) + mu * d|x - b|  <=>  x = clip(b, f^{-1}(-mu), f^{-1}(mu))
        Some(b) => clip(b, f.crossing(-mu), f.crossing(mu)),
        None => f.crossing(0.0),
    };
    for i in (0..m - 1).rev() {
        x[i] = clip(x[i + 1], lo[i], hi[i]);
    }
    x
}

/// Exact minimizer of `sum (x_i - y_i)^2 + lambda * sum |x_i - x_{i+1}|`.
pub fn solve_fused_lasso(y: &[f64], lambda: f64) -> Result<FusedSolution> {
    validate(y, lambda)?;
    let xhat = dp_solve(y, lambda / 2.0, None, None);
    let kkt = kkt_residual(y, lambda, &xhat)?;
    Ok(FusedSolution {
        objective: objective(y, lambda, &xhat),
        kkt_residual: kkt,
        jump_set: jump_set(&xhat),
        lambda,
        xhat,
    })
}

/// Exact minimizer of the anchored problem
/// `sum (x_i - y_i)^2 + lambda * (|x_1 - a| + |x_m - b| + sum |x_i - x_{i+1}|)`.
pub fn solve_anchored(prob: &AnchoredProblem) -> Result<FusedSolution> {
    validate(&prob.y, prob.lambda)?;
    for anchor in [prob.a, prob.b].into_iter().flatten() {
        if !anchor.is_finite() {
            return Err(Error::InvalidInput("anchors must be finite".into()));
        }
    }
    let xhat = dp_solve(&prob.y, prob.lambda / 2.0, prob.a, prob.b);
    let kkt = kkt_residual_with_anchors(&prob.y, prob.lambda, &xhat, prob.a, prob.b)?;
    Ok(FusedSolution {
        objective: anchored_objective(prob, &xhat),
        kkt_residual: kkt,
        jump_set: jump_set(&xhat),
        lambda: prob.lambda,
        xhat,
    })
}

/// Smallest sup-norm of `2 (x - y) + lambda * D^T s` over subgradient
/// selections `s`, where `s_i = sign(x_i - x_{i+1})` at jumps and
/// `s_i in [-1, 1]` where the estimate is fused. Zero certifies optimality.
pub fn kkt_residual(y: &[f64], lambda: f64, x: &[f64]) -> Result<f64> {
    kkt_residual_with_anchors(y, lambda, x, None, None)
}

/// Same as [`kkt_residual`] for the anchored objective.
pub fn kkt_residual_with_anchors(
    y: &[f64],
    lambda: f64,
    x: &[f64],
    a: Option<f64>,
    b: Option<f64>,
) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: y has {} entries, x has {}",
            y.len(),
            x.len()
        )));
    }
    let m = x.len();
    let g: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| 2.0 * (xi - yi)).collect();
    if lambda == 0.0 || m == 0 {
        return Ok(g.iter().fold(0.0, |acc, v| acc.max(v.abs())));
    }
    let tol = fusion_tolerance(x);
    let subgrad = |diff: f64| -> (f64, f64) {
        if diff.abs() <= tol {
            (-1.0, 1.0)
        } else {
            let s = diff.signum();
            (s, s)
        }
    };
    // Chain s_0, s_1, ..., s_m with residual r_j = g_j + lambda * (s_j - s_{j-1})
    // (1-based j). s_0 = -sign(x_1 - a) and s_m = sign(x_m - b) carry the
    // anchors; without an anchor they are pinned to zero.
    let mut ranges = Vec::with_capacity(m + 1);
    ranges.push(match a {
        Some(a) => {
            let (l, h) = subgrad(x[0] - a);
            (-h, -l)
        }
        None => (0.0, 0.0),
    });
    for w in x.windows(2) {
        ranges.push(subgrad(w[0] - w[1]));
    }
    ranges.push(match b {
        Some(b) => subgrad(x[m - 1] - b),
        None => (0.0, 0.0),
    });
    let ranges: Vec<(f64, f64)> = ranges
        .into_iter()
        .map(|(l, h)| (lambda * l, lambda * h))
        .collect();

    let feasible = |eps: f64| -> bool {
        // Interval of attainable lambda * s_{j} values consistent with |r| <= eps so far.
        let (mut lo, mut hi) = ranges[0];
        for j in 0..m {
            let (rl, rh) = ranges[j + 1];
            let nlo = (lo - g[j] - eps).max(rl);
            let nhi = (hi - g[j] + eps).min(rh);
            if nlo > nhi {
                return false;
            }
            lo = nlo;
            hi = nhi;
        }
        true
    };

    // Upper bracket: the midpoint selection is always valid.
    let mut hi_eps = {
        let mid: Vec<f64> = ranges.iter().map(|(l, h)| 0.5 * (l + h)).collect();
        (0..m)
            .map(|j| (g[j] + mid[j + 1] - mid[j]).abs())
            .fold(0.0, f64::max)
    };
    if feasible(0.0) {
        return Ok(0.0);
    }
    let mut lo_eps = 0.0;
    while hi_eps - lo_eps > 1e-15 * (1.0 + hi_eps) {
        let mid = 0.5 * (lo_eps + hi_eps);
        if mid <= lo_eps || mid >= hi_eps {
            break;
        }
        if feasible(mid) {
            hi_eps = mid;
        } else {
            lo_eps = mid;
        }
    }
    Ok(hi_eps)
}

/// Largest problem size accepted by [`oracle_fused_lasso`].
pub const ORACLE_MAX_LEN: usize = 64;

/// Independent reference solver working on the dual
///
/// ```text
/// maximize 2 u^T D y - ||D^T u||^2   subject to |u_i| <= lambda / 2
/// ```
///
/// by cyclic coordinate ascent, returning `x = y - D^T u` once the duality gap
/// falls below `tol`. Intended for small test instances only.
pub fn oracle_fused_lasso(y: &[f64], lambda: f64, tol: f64) -> Result<Vec<f64>> {
    validate(y, lambda)?;
    if y.len() > ORACLE_MAX_LEN {
        return Err(Error::InvalidInput(format!(
            "oracle limited to n <= {ORACLE_MAX_LEN}, got {}",
            y.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let n = y.len();
    if n == 1 || lambda == 0.0 {
        return Ok(y.to_vec());
    }
    let half = lambda / 2.0;
    let dy: Vec<f64> = y.windows(2).map(|w| w[0] - w[1]).collect();
    let mut u = vec![0.0; n - 1];
    let primal = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let right = if i < n - 1 { u[i] } else { 0.0 };
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                y[i] - right + left
            })
            .collect()
    };
    let max_sweeps = 10_000_000 / n;
    let mut gap = f64::NAN;
    for sweep in 0..max_sweeps {
        let mut moved = false;
        for i in 0..n - 1 {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 2 < n { u[i + 1] } else { 0.0 };
            let next = (0.5 * (dy[i] + left + right)).clamp(-half, half);
            moved |= next != u[i];
            u[i] = next;
        }
        // A sweep that changes nothing is an exact fixed point of the ascent.
        if !moved {
            return Ok(primal(&u));
        }
        if sweep % 16 == 15 || sweep + 1 == max_sweeps {
            let x = primal(&u);
            // P(x) - dual(u) collapses to sum lambda|Dx_i| - 2 u_i Dx_i, each term >= 0.
            gap = x
                .windows(2)
                .zip(&u)
                .map(|(w, ui)| {
                    let d = w[0] - w[1];
                    lambda * d.abs() - 2.0 * ui * d
                })
                .sum::<f64>();
            if gap <= tol {
                return Ok(x);
            }
        }
    }
    Err(Error::NotConverged {
        iterations: max_sweeps,
        gap,
    })
}
