// SPDX-License-Identifier: MIT OR Apache-2.0

//! Group fused lasso for vector-valued series:
//!
//! ```text
//! minimize  sum_i ||y_i - x_i||^2 + lambda * sum_i ||x_i - x_{i+1}||
//! ```
//!
//! Solved on the dual, where each difference `i` carries a vector `u_i` in the
//! Euclidean ball of radius `lambda / 2` and the primal is recovered as
//! `x = y - D^T u`. Every iteration is a cyclic block-coordinate sweep (each
//! block is a closed-form ball projection), followed by two steps that never
//! increase the dual objective:
//!
//! * an exact solve on each maximal run of strictly interior blocks, taken as
//!   far along the segment towards the run optimum as the balls allow;
//! * a polish that collapses the current fused segments into a weighted
//!   problem, solves it recursively and lifts the result back, accepted only
//!   when it lowers the dual objective.
//!
//! Termination is certified by the duality gap.

use crate::error::{Error, Result};
use crate::signal::{dist, norm, Series};
use crate::solver1d;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative tolerance below which neighbouring rows count as fused.
pub const FUSION_TOL: f64 = 1e-8;

/// Blocks whose norm is within this relative distance of the radius are
/// treated as saturated.
const SATURATION_TOL: f64 = 1e-10;

const MAX_POLISH_DEPTH: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSolution {
    /// Row `i` is the estimate for observation `i` (0-based).
    pub xhat: Series,
    pub lambda: f64,
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Dual objective (minimization form) after each iteration.
    pub dual_trace: Vec<f64>,
    /// 0-based `i` with `||xhat_i - xhat_{i+1}||` above the fusion tolerance.
    pub jump_set: Vec<usize>,
}

/// `sum ||y_i - x_i||^2 + lambda * sum ||x_i - x_{i+1}||`.
pub fn group_objective(y: &Series, x: &Series, lambda: f64) -> Result<f64> {
    check_shapes(y, x)?;
    let fit: f64 = y
        .rows()
        .zip(x.rows())
        .map(|(a, b)| dist(a, b).powi(2))
        .sum();
    let tv: f64 = (1..x.len()).map(|i| dist(x.row(i - 1), x.row(i))).sum();
    Ok(fit + lambda * tv)
}

fn check_shapes(y: &Series, x: &Series) -> Result<()> {
    if y.len() != x.len() || y.dim() != x.dim() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {}x{} vs {}x{}",
            y.len(),
            y.dim(),
            x.len(),
            x.dim()
        )));
    }
    Ok(())
}

pub fn group_jump_set(x: &Series) -> Vec<usize> {
    let tol = FUSION_TOL * (1.0 + x.max_row_norm());
    (1..x.len())
        .filter(|&i| dist(x.row(i - 1), x.row(i)) > tol)
        .map(|i| i - 1)
        .collect()
}

/// Solves with the default tolerance and a budget of `50 n` sweeps.
pub fn solve_group_fused_lasso_default(y: &Series, lambda: f64) -> Result<GroupSolution> {
    solve_group_fused_lasso(y, lambda, DEFAULT_TOL, 50 * y.len().max(1))
}

/// Minimizes the group fused lasso objective until the duality gap is at most
/// `tol * (1 + |objective|)`. Fails with [`Error::NotConverged`] when
/// `max_iter` sweeps are not enough.
pub fn solve_group_fused_lasso(
    y: &Series,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GroupSolution> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty data".into()));
    }
    if !y.all_finite() {
        return Err(Error::InvalidInput("data must be finite".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let n = y.len();
    let p = y.dim();
    if lambda == 0.0 || n == 1 {
        return Ok(GroupSolution {
            objective: group_objective(y, y, lambda)?,
            xhat: y.clone(),
            lambda,
            duality_gap: 0.0,
            iterations: 0,
            dual_trace: Vec::new(),
            jump_set: group_jump_set(y),
        });
    }
    let mass = vec![1.0; n];
    let problem = Weighted {
        z: y.as_slice(),
        mass: &mass,
        p,
        lambda,
    };
    let out = problem.solve(tol, max_iter, 0)?;
    let xhat = Series::from_flat(p, out.levels)?;
    Ok(GroupSolution {
        objective: group_objective(y, &xhat, lambda)?,
        jump_set: group_jump_set(&xhat),
        xhat,
        lambda,
        duality_gap: out.gap,
        iterations: out.iterations,
        dual_trace: out.trace,
    })
}

struct Solved {
    levels: Vec<f64>,
    gap: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// `min sum_i m_i ||c_i - z_i||^2 + lambda * sum_i ||c_i - c_{i+1}||` with
/// positive masses `m_i`; the top-level problem has unit masses.
struct Weighted<'a> {
    z: &'a [f64],
    mass: &'a [f64],
    p: usize,
    lambda: f64,
}

impl Weighted<'_> {
    fn len(&self) -> usize {
        self.mass.len()
    }

    fn radius(&self) -> f64 {
        0.5 * self.lambda
    }

    fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.p..(i + 1) * self.p]
    }

    fn solve(&self, tol: f64, max_iter: usize, depth: usize) -> Result<Solved> {
        let n = self.len();
        let p = self.p;
        let mut v = vec![0.0; (n - 1) * p];
        let mut trace = Vec::new();
        let mut gap = f64::INFINITY;
        for iter in 1..=max_iter {
            self.sweep(&mut v);
            self.run_step(&mut v);
            let mut f = self.dual_value(&v);
            let levels = self.primal(&v);
            gap = self.gap(&levels, &v);
            if gap <= tol * (1.0 + self.objective(&levels).abs()) {
                trace.push(f);
                return Ok(Solved {
                    levels,
                    gap,
                    iterations: iter,
                    trace,
                });
            }
            if depth < MAX_POLISH_DEPTH {
                if let Some(polished) = self.polish(&v, tol, max_iter, depth) {
                    let levels = self.primal(&polished);
                    let pgap = self.gap(&levels, &polished);
                    let pf = self.dual_value(&polished);
                    if pf <= f {
                        v = polished;
                        f = pf;
                        if pgap <= tol * (1.0 + self.objective(&levels).abs()) {
                            trace.push(f);
                            return Ok(Solved {
                                levels,
                                gap: pgap,
                                iterations: iter,
                                trace,
                            });
                        }
                        gap = pgap;
                    }
                }
            }
            trace.push(f);
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            gap,
        })
    }

    fn block(v: &[f64], i: usize, p: usize) -> &[f64] {
        &v[i * p..(i + 1) * p]
    }

    /// Dual block `i`, with the zero blocks at `-1` and `n - 1` implied.
    fn dual_at(&self, v: &[f64], i: isize, out: &mut [f64]) {
        let n = self.len() as isize;
        if i < 0 || i >= n - 1 {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            out.copy_from_slice(Self::block(v, i as usize, self.p));
        }
    }

    /// `c_i = z_i - (v_i - v_{i-1}) / m_i`.
    fn primal(&self, v: &[f64]) -> Vec<f64> {
        let (n, p) = (self.len(), self.p);
        let mut c = self.z.to_vec();
        for i in 0..n - 1 {
            for q in 0..p {
                let vi = v[i * p + q];
                c[i * p + q] -= vi / self.mass[i];
                c[(i + 1) * p + q] += vi / self.mass[i + 1];
            }
        }
        c
    }

    fn objective(&self, c: &[f64]) -> f64 {
        let (n, p) = (self.len(), self.p);
        let mut value = 0.0;
        for i in 0..n {
            let ci = &c[i * p..(i + 1) * p];
            value += self.mass[i] * dist(ci, self.z(i)).powi(2);
            if i + 1 < n {
                value += self.lambda * dist(ci, &c[(i + 1) * p..(i + 2) * p]);
            }
        }
        value
    }

    /// `sum_i (1/m_i) ||v_i - v_{i-1}||^2 - 2 sum_i <v_i, z_i - z_{i+1}>`.
    fn dual_value(&self, v: &[f64]) -> f64 {
        let (n, p) = (self.len(), self.p);
        let mut prev = vec![0.0; p];
        let mut cur = vec![0.0; p];
        let mut value = 0.0;
        for i in 0..n {
            self.dual_at(v, i as isize, &mut cur);
            let sq: f64 = cur.iter().zip(&prev).map(|(a, b)| (a - b) * (a - b)).sum();
            value += sq / self.mass[i];
            if i + 1 < n {
                let lin: f64 = (0..p).map(|q| cur[q] * (self.z(i)[q] - self.z(i + 1)[q])).sum();
                value -= 2.0 * lin;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        value
    }

    /// Primal minus dual objective, written as a sum of nonnegative terms
    /// `lambda ||c_i - c_{i+1}|| - 2 <v_i, c_i - c_{i+1}>`.
    fn gap(&self, c: &[f64], v: &[f64]) -> f64 {
        let (n, p) = (self.len(), self.p);
        (0..n - 1)
            .map(|i| {
                let a = &c[i * p..(i + 1) * p];
                let b = &c[(i + 1) * p..(i + 2) * p];
                let inner: f64 = (0..p).map(|q| v[i * p + q] * (a[q] - b[q])).sum();
                self.lambda * dist(a, b) - 2.0 * inner
            })
            .sum()
    }

    fn project(block: &mut [f64], radius: f64) {
        let nb = norm(block);
        if nb > radius {
            let s = radius / nb;
            block.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn sweep(&self, v: &mut [f64]) {
        let (n, p) = (self.len(), self.p);
        let r = self.radius();
        let mut left = vec![0.0; p];
        let mut right = vec![0.0; p];
        for i in 0..n - 1 {
            self.dual_at(v, i as isize - 1, &mut left);
            self.dual_at(v, i as isize + 1, &mut right);
            let (ml, mr) = (1.0 / self.mass[i], 1.0 / self.mass[i + 1]);
            let w = ml + mr;
            let block = &mut v[i * p..(i + 1) * p];
            for q in 0..p {
                block[q] = (left[q] * ml + right[q] * mr + self.z(i)[q] - self.z(i + 1)[q]) / w;
            }
            Self::project(block, r);
        }
    }

    fn interior(&self, v: &[f64], i: usize) -> bool {
        norm(Self::block(v, i, self.p)) < self.radius() * (1.0 - SATURATION_TOL)
    }

    fn run_step(&self, v: &mut [f64]) {
        let m = self.len() - 1;
        let mut i = 0;
        while i < m {
            if !self.interior(v, i) {
                i += 1;
                continue;
            }
            let start = i;
            while i < m && self.interior(v, i) {
                i += 1;
            }
            self.solve_run(v, start, i);
        }
    }

    /// Moves blocks `lo..hi` towards the minimizer of the dual restricted to
    /// them (a tridiagonal system), stopping at the first ball boundary.
    fn solve_run(&self, v: &mut [f64], lo: usize, hi: usize) {
        let p = self.p;
        let len = hi - lo;
        let mut left = vec![0.0; p];
        let mut right = vec![0.0; p];
        self.dual_at(v, lo as isize - 1, &mut left);
        self.dual_at(v, hi as isize, &mut right);

        // Rows: -v_{i-1}/m_i + (1/m_i + 1/m_{i+1}) v_i - v_{i+1}/m_{i+1} = z_i - z_{i+1}.
        let diag: Vec<f64> = (lo..hi)
            .map(|i| 1.0 / self.mass[i] + 1.0 / self.mass[i + 1])
            .collect();
        let off: Vec<f64> = (lo..hi).map(|i| -1.0 / self.mass[i + 1]).collect();
        let mut target = vec![0.0; len * p];
        for q in 0..p {
            let mut rhs: Vec<f64> = (lo..hi)
                .map(|i| self.z(i)[q] - self.z(i + 1)[q])
                .collect();
            rhs[0] += left[q] / self.mass[lo];
            rhs[len - 1] += right[q] / self.mass[hi];
            let sol = thomas(&diag, &off, &rhs);
            for (k, s) in sol.into_iter().enumerate() {
                target[k * p + q] = s;
            }
        }

        let r = self.radius();
        let mut step = 1.0f64;
        let mut blocking = None;
        for k in 0..len {
            let cur = Self::block(v, lo + k, p);
            let dir: Vec<f64> = (0..p).map(|q| target[k * p + q] - cur[q]).collect();
            let a: f64 = dir.iter().map(|d| d * d).sum();
            if a == 0.0 {
                continue;
            }
            let b: f64 = cur.iter().zip(&dir).map(|(c, d)| c * d).sum();
            let c: f64 = cur.iter().map(|c| c * c).sum::<f64>() - r * r;
            let t = (-b + (b * b - a * c).max(0.0).sqrt()) / a;
            if t < step {
                step = t.max(0.0);
                blocking = Some(lo + k);
            }
        }
        for k in 0..len {
            let block = &mut v[(lo + k) * p..(lo + k + 1) * p];
            for q in 0..p {
                block[q] += step * (target[k * p + q] - block[q]);
            }
        }
        if let Some(b) = blocking {
            let block = &mut v[b * p..(b + 1) * p];
            let nb = norm(block);
            if nb > 0.0 {
                block.iter_mut().for_each(|x| *x *= r / nb);
            }
        }
    }

    /// Solves the problem restricted to the fused segments implied by the
    /// saturated blocks of `v` and lifts the dual back to full length.
    fn polish(&self, v: &[f64], tol: f64, max_iter: usize, depth: usize) -> Option<Vec<f64>> {
        let (n, p) = (self.len(), self.p);
        let saturated: Vec<usize> = (0..n - 1).filter(|&i| !self.interior(v, i)).collect();
        let segments = saturated.len() + 1;
        if segments >= n {
            return None;
        }
        let mut seg_of = vec![0usize; n];
        let mut k = 0;
        for i in 0..n {
            seg_of[i] = k;
            if saturated.binary_search(&i).is_ok() {
                k += 1;
            }
        }
        let mut mass = vec![0.0; segments];
        let mut zbar = vec![0.0; segments * p];
        for i in 0..n {
            let s = seg_of[i];
            mass[s] += self.mass[i];
            for q in 0..p {
                zbar[s * p + q] += self.mass[i] * self.z(i)[q];
            }
        }
        for s in 0..segments {
            for q in 0..p {
                zbar[s * p + q] /= mass[s];
            }
        }
        let levels = if segments == 1 {
            zbar
        } else {
            let reduced = Weighted {
                z: &zbar,
                mass: &mass,
                p,
                lambda: self.lambda,
            };
            reduced
                .solve(0.1 * tol, max_iter.max(50 * segments), depth + 1)
                .ok()?
                .levels
        };
        // v_i = v_{i-1} + m_i (z_i - c_i)
        let r = self.radius();
        let mut lifted = vec![0.0; (n - 1) * p];
        let mut acc = vec![0.0; p];
        for i in 0..n - 1 {
            let s = seg_of[i];
            for q in 0..p {
                acc[q] += self.mass[i] * (self.z(i)[q] - levels[s * p + q]);
            }
            let block = &mut lifted[i * p..(i + 1) * p];
            block.copy_from_slice(&acc);
            Self::project(block, r);
        }
        Some(lifted)
    }
}

/// Solves a symmetric tridiagonal system with diagonal `diag` and
/// off-diagonal `off` (`off[k]` couples unknowns `k` and `k + 1`).
fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for k in 1..n {
        denom = diag[k] - off[k - 1] * c[k - 1];
        c[k] = if k + 1 < n { off[k] / denom } else { 0.0 };
        d[k] = (rhs[k] - off[k - 1] * d[k - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}

/// Optimality residual `max_i ||2 (x_i - y_i) + 2 (u_i - u_{i-1})||` for a
/// dual selection with `u_i = (lambda/2) (x_i - x_{i+1}) / ||x_i - x_{i+1}||`
/// at jumps and `||u_i|| <= lambda/2` where fused.
///
/// For `p == 1` this is the exact minimum over selections (it defers to
/// [`solver1d::kkt_residual`]). For `p > 1` the free blocks are chosen
/// greedily (forward and backward, best of both), which gives an upper bound
/// on the minimum that is zero at the optimum.
pub fn group_kkt_residual(y: &Series, lambda: f64, x: &Series) -> Result<f64> {
    check_shapes(y, x)?;
    if x.dim() == 1 {
        return solver1d::kkt_residual(y.as_slice(), lambda, x.as_slice());
    }
    let forward = greedy_residual(y, lambda, x, false);
    let backward = greedy_residual(y, lambda, x, true);
    Ok(forward.min(backward))
}

fn greedy_residual(y: &Series, lambda: f64, x: &Series, reverse: bool) -> f64 {
    let (n, p) = (x.len(), x.dim());
    let r = 0.5 * lambda;
    let tol = FUSION_TOL * (1.0 + x.max_row_norm());
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    // Walking in `order`, the residual of row j is g_j + 2 (u_out - u_in) with
    // u_in the already-fixed incoming block; the outgoing block is chosen to
    // cancel it as far as its constraint allows.
    let mut u_in = vec![0.0; p];
    let mut worst = 0.0f64;
    for (step, &j) in order.iter().enumerate() {
        let g: Vec<f64> = (0..p).map(|q| 2.0 * (x.row(j)[q] - y.row(j)[q])).collect();
        let last = step + 1 == n;
        let mut u_out = vec![0.0; p];
        if !last {
            let next = order[step + 1];
            // Dual block between j and next, oriented as x_j - x_next.
            let d: Vec<f64> = (0..p).map(|q| x.row(j)[q] - x.row(next)[q]).collect();
            let dn = norm(&d);
            if dn > tol {
                u_out = d.iter().map(|v| r * v / dn).collect();
            } else {
                u_out = (0..p).map(|q| u_in[q] - 0.5 * g[q]).collect();
                Weighted::project(&mut u_out, r);
            }
        }
        let res: Vec<f64> = (0..p).map(|q| g[q] + 2.0 * (u_out[q] - u_in[q])).collect();
        worst = worst.max(norm(&res));
        u_in = u_out;
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Series, b: &Series, tol: f64) -> bool {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_lambda_returns_data() {
        let y = Series::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let sol = solve_group_fused_lasso_default(&y, 0.0).unwrap();
        assert_eq!(sol.xhat, y);
        assert_eq!(sol.duality_gap, 0.0);
    }

    #[test]
    fn constant_rows_are_fixed_points() {
        let y = Series::from_rows(&[[1.5, -2.0, 0.25]; 7]).unwrap();
        for lambda in [0.1, 1.0, 100.0] {
            let sol = solve_group_fused_lasso_default(&y, lambda).unwrap();
            assert!(close(&sol.xhat, &y, 1e-10));
        }
    }

    #[test]
    fn objective_examples() {
        let y = Series::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let zero = Series::zeros(2, 2);
        assert_eq!(group_objective(&y, &zero, 1.0).unwrap(), 2.0);
        assert_eq!(group_objective(&y, &zero, 0.0).unwrap(), 2.0);
        let tv = 2f64.sqrt();
        assert!((group_objective(&y, &y, 3.0).unwrap() - 3.0 * tv).abs() < 1e-15);
        assert!(group_objective(&y, &Series::zeros(3, 2), 1.0).is_err());
    }

    #[test]
    fn two_rows_fuse_to_mean() {
        // Same as the scalar [1, 3] example rotated into the plane.
        let y = Series::from_rows(&[[0.6, 0.8], [1.8, 2.4]]).unwrap();
        let sol = solve_group_fused_lasso(&y, 2.0, 1e-12, 1000).unwrap();
        let expect = Series::from_rows(&[[1.2, 1.6], [1.2, 1.6]]).unwrap();
        assert!(close(&sol.xhat, &expect, 1e-9), "{:?}", sol.xhat);
    }

    #[test]
    fn kkt_residual_small_at_solution() {
        let y = Series::from_rows(&[
            [0.0, 0.1],
            [0.2, -0.1],
            [2.0, 1.0],
            [2.1, 0.9],
            [1.9, 1.2],
            [-1.0, 0.0],
        ])
        .unwrap();
        let sol = solve_group_fused_lasso(&y, 0.7, 1e-12, 10_000).unwrap();
        assert!(group_kkt_residual(&y, 0.7, &sol.xhat).unwrap() <= 1e-5);
        assert_eq!(group_kkt_residual(&y, 0.0, &y).unwrap(), 0.0);
        let off = Series::zeros(6, 2);
        assert!(group_kkt_residual(&y, 0.7, &off).unwrap() > 0.1);
    }

    #[test]
    fn reports_non_convergence() {
        let y = Series::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 1.0], [-3.0, 2.0]]).unwrap();
        let err = solve_group_fused_lasso(&y, 1.0, 1e-300, 1).unwrap_err();
        assert!(err.is_solver_failure());
    }

    #[test]
    fn thomas_solves_laplacian() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1, 0, 1] => x = [1, 1, 1]
        let x = thomas(&[2.0, 2.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0, 1.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
