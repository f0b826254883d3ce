// SPDX-License-Identifier: MIT OR Apache-2.0
#![forbid(unsafe_code)]

//! Browser bindings: simulate a noisy piecewise signal, then denoise it with
//! error bounds, screen it for change points, or run the group solver.

use fused_cpd::bounds::{bound_profile_scalar, compute_my_scalar};
use fused_cpd::detect::detect_with_stats;
use fused_cpd::harness::{parse_changepoints, parse_levels};
use fused_cpd::signal::{sample_observation, NoiseFamily, NoiseSpec, PiecewiseSignal, Series};
use fused_cpd::solver1d::solve_fused_lasso;
use fused_cpd::solvernd::solve_group_fused_lasso_default;
use fused_cpd::Result;
use wasm_bindgen::prelude::*;

fn js(err: fused_cpd::Error) -> JsError {
    JsError::new(&err.to_string())
}

fn signal(n: usize, cps: &str, levels: &str) -> Result<PiecewiseSignal> {
    PiecewiseSignal::new(n, &parse_changepoints(cps)?, parse_levels(levels)?)
}

/// Row-major truth followed by a row-major noisy draw, each `n * p` long.
pub fn simulate_impl(n: usize, cps: &str, levels: &str, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let sig = signal(n, cps, levels)?;
    let obs = sample_observation(&sig, &NoiseSpec::gaussian(sigma, seed)?);
    let mut out = sig.materialize().into_vec();
    out.extend_from_slice(obs.y.as_slice());
    Ok(out)
}

/// Fit at `lambda = M_y sqrt(n)` followed by the per-index bound: `2 n` values.
pub fn denoise_with_bounds_impl(
    y: &[f64],
    cps: &str,
    levels: &str,
    sigma: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let n = y.len();
    let sig = signal(n, cps, levels)?;
    let my = compute_my_scalar(sigma, n, t, NoiseFamily::Gaussian)?;
    let lambda = my * (n as f64).sqrt();
    let mut out = solve_fused_lasso(y, lambda)?.xhat;
    out.extend(bound_profile_scalar(&sig.stats(), sigma, t, lambda, NoiseFamily::Gaussian)?.per_index);
    Ok(out)
}

/// Detected 1-based indices from the scalar screening detector.
pub fn detect_impl(y: &[f64], sigma: f64, t: f64, min_jump: f64, min_spacing: usize) -> Result<Vec<u32>> {
    let r = detect_with_stats(
        &Series::scalar(y.to_vec()),
        sigma,
        t,
        NoiseFamily::Gaussian,
        false,
        min_jump,
        min_spacing,
    )?;
    Ok(r.shat.into_iter().map(|i| i as u32).collect())
}

/// Group fused lasso on a row-major `n x p` matrix.
pub fn group_denoise_impl(y: &[f64], p: usize, lambda: f64) -> Result<Vec<f64>> {
    let y = Series::from_flat(p, y.to_vec())?;
    Ok(solve_group_fused_lasso_default(&y, lambda)?.xhat.into_vec())
}

#[wasm_bindgen]
pub fn simulate(n: usize, cps: &str, levels: &str, sigma: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    simulate_impl(n, cps, levels, sigma, seed as u64).map_err(js)
}

#[wasm_bindgen]
pub fn denoise_with_bounds(y: Vec<f64>, cps: &str, levels: &str, sigma: f64, t: f64) -> std::result::Result<Vec<f64>, JsError> {
    denoise_with_bounds_impl(&y, cps, levels, sigma, t).map_err(js)
}

#[wasm_bindgen]
pub fn detect(y: Vec<f64>, sigma: f64, t: f64, min_jump: f64, min_spacing: usize) -> std::result::Result<Vec<u32>, JsError> {
    detect_impl(&y, sigma, t, min_jump, min_spacing).map_err(js)
}

#[wasm_bindgen]
pub fn group_denoise(y: Vec<f64>, p: usize, lambda: f64) -> std::result::Result<Vec<f64>, JsError> {
    group_denoise_impl(&y, p, lambda).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_layout() {
        let v = simulate_impl(6, "1,4", "0 1,2 3", 0.0, 1).unwrap();
        assert_eq!(v.len(), 24);
        assert_eq!(&v[..12], &v[12..]);
        assert_eq!(&v[6..8], &[2.0, 3.0]);
    }

    #[test]
    fn denoise_and_detect() {
        let v = simulate_impl(400, "1,201", "0,4", 0.5, 3).unwrap();
        let y = &v[400..];
        let fit = denoise_with_bounds_impl(y, "1,201", "0,4", 0.5, 10.0).unwrap();
        assert_eq!(fit.len(), 800);
        assert!((0..400).all(|i| (fit[i] - v[i]).abs() <= fit[400 + i]));
        let found = detect_impl(y, 0.5, 10.0, 4.0, 200).unwrap();
        assert!(!found.is_empty());
        assert!(found.iter().all(|&i| i.abs_diff(201) <= 40));
        assert!(detect_impl(y, 0.5, 10.0, 0.01, 200).is_err());
    }

    #[test]
    fn group_round_trip() {
        let v = simulate_impl(40, "1,21", "0 0,1 -1", 0.0, 0).unwrap();
        let x = group_denoise_impl(&v[80..], 2, 1e-9).unwrap();
        assert!(x.iter().zip(&v[..80]).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(group_denoise_impl(&[1.0, 2.0, 3.0], 2, 1.0).is_err());
    }
}
