// SPDX-License-Identifier: MIT OR Apache-2.0

//! Screening change-point detectors, the naive jump baseline and the
//! Hausdorff set distance. Indices are 1-based throughout this module.

use crate::bounds::{
    compute_my_group, compute_my_scalar, detection_params_group, detection_params_scalar,
    group_c_from_signal,
};
use crate::error::{Error, Result};
use crate::signal::{dist, NoiseFamily, PiecewiseSignal, Series};
use crate::solver1d::solve_fused_lasso;
use crate::solvernd::solve_group_fused_lasso_default;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    /// Detected indices, 1-based, ascending.
    pub shat: Vec<usize>,
    pub offset_used: usize,
    pub threshold_used: f64,
    pub dh_to_truth: Option<f64>,
    /// Set by [`detect_pipeline`].
    pub lambda: Option<f64>,
    /// Set by [`detect_pipeline`].
    pub dh_guarantee: Option<f64>,
}

/// `max(d(A, B), d(B, A))` with `d(A, B) = max_{b in B} min_{a in A} |a - b|`.
pub fn hausdorff_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed(a, b).max(directed(b, a)) as f64)
}

fn directed(a: &[usize], b: &[usize]) -> usize {
    b.iter()
        .map(|&x| a.iter().map(|&y| x.abs_diff(y)).min().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

fn check_screen(n: usize, offset: usize, threshold: f64) -> Result<()> {
    if offset < 1 || 2 * offset > n.saturating_sub(1) {
        return Err(Error::InvalidInput(format!(
            "offset {offset} outside 1..={} for n = {n}",
            n.saturating_sub(1) / 2
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
    }
    Ok(())
}

fn screen_by(
    n: usize,
    offset: usize,
    threshold: f64,
    diff: impl Fn(usize, usize) -> f64,
) -> Result<DetectionResult> {
    check_screen(n, offset, threshold)?;
    // 1-based i runs over [1 + offset, n - offset].
    let shat = (1 + offset..=n - offset)
        .filter(|&i| diff(i - 1 - offset, i - 1 + offset) > threshold)
        .collect();
    Ok(DetectionResult {
        shat,
        offset_used: offset,
        threshold_used: threshold,
        dh_to_truth: None,
        lambda: None,
        dh_guarantee: None,
    })
}

/// `{ i : |xhat_{i-offset} - xhat_{i+offset}| > threshold }`.
pub fn screen_scalar(xhat: &[f64], offset: usize, threshold: f64) -> Result<DetectionResult> {
    screen_by(xhat.len(), offset, threshold, |a, b| (xhat[a] - xhat[b]).abs())
}

/// `{ i : ||Xhat_{i-offset} - Xhat_{i+offset}|| > threshold }`.
pub fn screen_group(xhat: &Series, offset: usize, threshold: f64) -> Result<DetectionResult> {
    screen_by(xhat.len(), offset, threshold, |a, b| dist(xhat.row(a), xhat.row(b)))
}

/// `{ i : |xhat_i - xhat_{i+1}| > tol }`, 1-based.
pub fn naive_jump_set(xhat: &[f64], tol: f64) -> Result<Vec<usize>> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tol must be nonnegative, got {tol}")));
    }
    Ok(xhat
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] - w[1]).abs() > tol)
        .map(|(i, _)| i + 1)
        .collect())
}

/// Merges runs of consecutive indices and reports the midpoint of each run
/// (lower midpoint for even runs).
pub fn cluster_midpoints(shat: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < shat.len() {
        let mut j = i;
        while j + 1 < shat.len() && shat[j + 1] == shat[j] + 1 {
            j += 1;
        }
        out.push((shat[i] + shat[j]) / 2);
        i = j + 1;
    }
    out
}

/// Offset actually used by the pipeline: nearest integer, at least 1.
pub fn round_offset(offset: f64) -> usize {
    (offset.round() as usize).max(1)
}

/// Solves at the detector's `lambda` and screens, given the minimum jump
/// `h_n` and minimum spacing `w_n` of the unknown signal.
///
/// Scalar input (`group == false`) must have one column. In the group case
/// `C` is read off through `H_n = 96 C M_y / W_n^(2/3)`.
pub fn detect_with_stats(
    y: &Series,
    sigma: f64,
    t: f64,
    family: NoiseFamily,
    group: bool,
    h_n: f64,
    w_n: usize,
) -> Result<DetectionResult> {
    let n = y.len();
    if group {
        let my = compute_my_group(sigma, n, t, y.dim())?;
        let c = group_c_from_signal(h_n, w_n, my)?;
        let params = detection_params_group(w_n, my, c)?;
        let sol = solve_group_fused_lasso_default(y, params.lambda)?;
        let mut r = screen_group(&sol.xhat, round_offset(params.offset), h_n / 2.0)?;
        r.lambda = Some(params.lambda);
        r.dh_guarantee = Some(params.dh_guarantee);
        Ok(r)
    } else {
        if y.dim() != 1 {
            return Err(Error::InvalidInput(format!(
                "scalar detection needs one column, got {}",
                y.dim()
            )));
        }
        let my = compute_my_scalar(sigma, n, t, family)?;
        let params = detection_params_scalar(h_n, w_n, my)?;
        let sol = solve_fused_lasso(y.as_slice(), params.lambda)?;
        let mut r = screen_scalar(&sol.xhat, round_offset(params.offset), params.threshold)?;
        r.lambda = Some(params.lambda);
        r.dh_guarantee = Some(params.dh_guarantee);
        Ok(r)
    }
}

/// [`detect_with_stats`] with the statistics of `truth`, scored against its
/// detectable set. `dh_to_truth` is `None` when nothing is detected.
pub fn detect_pipeline(
    y: &Series,
    sigma: f64,
    t: f64,
    family: NoiseFamily,
    group: bool,
    truth: &PiecewiseSignal,
) -> Result<DetectionResult> {
    if y.len() != truth.len() || y.dim() != truth.dim() {
        return Err(Error::InvalidInput(format!(
            "observation is {}x{} but truth is {}x{}",
            y.len(),
            y.dim(),
            truth.len(),
            truth.dim()
        )));
    }
    let detectable = truth.detectable_set();
    if detectable.is_empty() {
        return Err(Error::Precondition(
            "truth has a single segment: nothing to detect".into(),
        ));
    }
    let stats = truth.stats();
    let mut result = detect_with_stats(y, sigma, t, family, group, stats.h_n, stats.w_n)?;
    result.dh_to_truth = if result.shat.is_empty() {
        None
    } else {
        Some(hausdorff_distance(&result.shat, &detectable)?)
    };
    Ok(result)
}
