// SPDX-License-Identifier: MIT OR Apache-2.0

//! High-probability error bounds for the scalar and group fused lasso, and
//! the parameters of the screening detectors built on them.
//!
//! Every bound holds on the event that all normalized noise partial sums are
//! at most `M_y`, which has probability at least `1 - 1/t^2`. Logarithms are
//! natural throughout. Hypotheses are enforced as errors: a bound evaluated
//! outside its regime is meaningless.

use std::fmt;

use crate::error::{Error, Result};
use crate::signal::{NoiseFamily, SignalStats};

/// Constant `C` in the sub-exponential envelope `C * sigma * (ln n + ln t)`.
/// Only the order is known; the constant is our choice.
pub const SUB_EXPONENTIAL_CONSTANT: f64 = 2.0;

/// Lower edge of the admissible group `lambda` window, in units of `M_y`.
pub const GROUP_LAMBDA_FLOOR: f64 = 625.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Scalar,
    Group,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Scalar => "scalar",
            Regime::Group => "group",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundProfile {
    pub my: f64,
    /// Bound on `|xhat_i - x_i|` (scalar) or `||xhat_i - x_i||` (group), 0-based.
    pub per_index: Vec<f64>,
    /// Scalar: bound on `(1/n) sum (xhat_i - x_i)^2`.
    /// Group: bound on the unnormalized `sum ||xhat_i - x_i||^2`.
    pub sos_bound: f64,
    pub confidence: f64,
    pub t: f64,
    pub lambda: f64,
    pub regime: Regime,
}

fn check_common(sigma: f64, n: usize, t: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("t must exceed 1, got {t}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Scalar envelope `M_y` for the given noise family.
pub fn compute_my_scalar(sigma: f64, n: usize, t: f64, family: NoiseFamily) -> Result<f64> {
    compute_my_scalar_with(sigma, n, t, family, SUB_EXPONENTIAL_CONSTANT)
}

/// As [`compute_my_scalar`] with an explicit sub-exponential constant.
pub fn compute_my_scalar_with(
    sigma: f64,
    n: usize,
    t: f64,
    family: NoiseFamily,
    sub_exponential_constant: f64,
) -> Result<f64> {
    check_common(sigma, n, t)?;
    let log_term = (n as f64).ln() + t.ln();
    Ok(match family {
        NoiseFamily::Gaussian => 2.0 * sigma * log_term.sqrt(),
        // Uniform on [-s*sqrt(3), s*sqrt(3)] is sub-Gaussian with parameter s*sqrt(3).
        NoiseFamily::SubGaussianBounded => 2.0 * sigma * 3f64.sqrt() * log_term.sqrt(),
        NoiseFamily::SubExponential => sub_exponential_constant * sigma * log_term,
    })
}

/// Group envelope `sigma * max(sqrt(8 (ln n + ln t) + p), 2 sqrt(p))`.
pub fn compute_my_group(sigma: f64, n: usize, t: f64, p: usize) -> Result<f64> {
    check_common(sigma, n, t)?;
    if p == 0 {
        return Err(Error::InvalidInput("dimension p must be positive".into()));
    }
    let p = p as f64;
    let log_term = (n as f64).ln() + t.ln();
    Ok(sigma * (8.0 * log_term + p).sqrt().max(2.0 * p.sqrt()))
}

/// Scalar per-index bound for one index with segment length `m` and boundary
/// distance `d`.
pub fn scalar_bound_at(m: usize, d: usize, lambda: f64, my: f64) -> f64 {
    let m = m as f64;
    (my / (d as f64).sqrt())
        .max(my * my / (4.0 * lambda))
        .max(2.0 * lambda / m + 2.0 * my / m.sqrt())
}

/// `max(M_y/sqrt(d_i), M_y^2/(4 lambda), 2 lambda/m_k + 2 M_y/sqrt(m_k))` per index.
pub fn elementwise_bound_scalar(stats: &SignalStats, lambda: f64, my: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    Ok(stats
        .d
        .iter()
        .zip(&stats.k_of)
        .map(|(&d, &k)| scalar_bound_at(stats.segment_lengths[k], d, lambda, my))
        .collect())
}

/// Bound on the mean squared error `(1/n) sum (xhat_i - x_i)^2`.
pub fn sos_bound_scalar(stats: &SignalStats, lambda: f64, my: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let n = stats.len() as f64;
    let k = stats.num_segments() as f64;
    let inv_sum: f64 = stats.segment_lengths.iter().map(|&m| 1.0 / m as f64).sum();
    let log_sum: f64 = stats.segment_lengths.iter().map(|&m| (m as f64).ln()).sum();
    let my2 = my * my;
    Ok(my2 * my2 / (16.0 * lambda * lambda)
        + 8.0 * lambda * lambda / n * inv_sum
        + 2.0 / n * my2 * (4.0 + k + log_sum))
}

/// Checks `625 M_y <= lambda < min_k (7 m_k - sqrt(m_k)) M_y`.
pub fn check_group_window(stats: &SignalStats, lambda: f64, my: f64) -> Result<()> {
    check_lambda(lambda)?;
    let lower = GROUP_LAMBDA_FLOOR * my;
    let upper = group_window_upper(stats.w_n, my);
    if lambda < lower || lambda >= upper {
        return Err(Error::Precondition(format!(
            "group bound needs {lower} <= lambda < {upper}, got lambda = {lambda}"
        )));
    }
    Ok(())
}

/// `(7 m - sqrt(m)) M_y`, increasing in `m`, so the minimum over segments is at `W_n`.
fn group_window_upper(w_n: usize, my: f64) -> f64 {
    let m = w_n as f64;
    (7.0 * m - m.sqrt()) * my
}

/// Group per-index bound for one index with segment length `m` and boundary
/// distance `d`; the caller is responsible for the lambda window.
pub fn group_bound_at(m: usize, d: usize, lambda: f64, my: f64) -> f64 {
    let m = m as f64;
    let d = d as f64;
    (4.0 * (my * (m / 2.0).sqrt() + lambda) / m)
        .max(50.0 * my / m.sqrt())
        .max(25.0 * 5f64.sqrt() * my / d.sqrt())
        .max(125.0 * (my.powi(3) / lambda).sqrt())
}

/// Group per-index bound on `||xhat_i - x_i||`.
pub fn elementwise_bound_group(stats: &SignalStats, lambda: f64, my: f64) -> Result<Vec<f64>> {
    check_group_window(stats, lambda, my)?;
    Ok(stats
        .d
        .iter()
        .zip(&stats.k_of)
        .map(|(&d, &k)| group_bound_at(stats.segment_lengths[k], d, lambda, my))
        .collect())
}

/// Bound on the unnormalized `sum ||xhat_i - x_i||^2`.
pub fn sos_bound_group(stats: &SignalStats, lambda: f64, my: f64) -> Result<f64> {
    check_group_window(stats, lambda, my)?;
    let n = stats.len() as f64;
    let k = stats.num_segments() as f64;
    let log_sum: f64 = stats.segment_lengths.iter().map(|&m| (m as f64).ln()).sum();
    let my2 = my * my;
    Ok(6250.0 * my2 * log_sum
        + 6000.0 * k * my2
        + 32.0 * lambda * lambda * k / stats.m_h
        + 125.0 * 125.0 * my2 * my2 * my2 * n / lambda)
}

pub fn bound_profile_scalar(
    stats: &SignalStats,
    sigma: f64,
    t: f64,
    lambda: f64,
    family: NoiseFamily,
) -> Result<BoundProfile> {
    let my = compute_my_scalar(sigma, stats.len(), t, family)?;
    Ok(BoundProfile {
        per_index: elementwise_bound_scalar(stats, lambda, my)?,
        sos_bound: sos_bound_scalar(stats, lambda, my)?,
        my,
        confidence: 1.0 - 1.0 / (t * t),
        t,
        lambda,
        regime: Regime::Scalar,
    })
}

pub fn bound_profile_group(
    stats: &SignalStats,
    sigma: f64,
    t: f64,
    lambda: f64,
    p: usize,
) -> Result<BoundProfile> {
    let my = compute_my_group(sigma, stats.len(), t, p)?;
    Ok(BoundProfile {
        per_index: elementwise_bound_group(stats, lambda, my)?,
        sos_bound: sos_bound_group(stats, lambda, my)?,
        my,
        confidence: 1.0 - 1.0 / (t * t),
        t,
        lambda,
        regime: Regime::Group,
    })
}

/// Tuning of the scalar screening detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarDetectionParams {
    /// `C = H_n sqrt(W_n) / (8 M_y)`, always above 2.
    pub c: f64,
    pub lambda: f64,
    /// Real-valued index shift `W_n / (4 C^2)`.
    pub offset: f64,
    pub threshold: f64,
    /// `W_n / (2 C^2) = 32 M_y^2 / H_n^2`.
    pub dh_guarantee: f64,
}

pub fn detection_params_scalar(h_n: f64, w_n: usize, my: f64) -> Result<ScalarDetectionParams> {
    if !h_n.is_finite() {
        return Err(Error::Precondition(
            "no change points: minimum jump is undefined for a single segment".into(),
        ));
    }
    let w = w_n as f64;
    let strength = h_n * w.sqrt();
    if !(my > 0.0) || strength <= 16.0 * my {
        return Err(Error::Precondition(format!(
            "signal too weak for the scalar screening regime: H_n sqrt(W_n) = {strength} must exceed 16 M_y = {}",
            16.0 * my
        )));
    }
    let c = strength / (8.0 * my);
    Ok(ScalarDetectionParams {
        c,
        lambda: (c - 1.0) * my * w.sqrt(),
        offset: w / (4.0 * c * c),
        threshold: h_n / 2.0,
        dh_guarantee: w / (2.0 * c * c),
    })
}

/// Tuning of the group screening detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupDetectionParams {
    pub c: f64,
    /// Jump size `96 C M_y / W_n^(2/3)` the detector is calibrated for.
    pub h_n: f64,
    pub lambda: f64,
    /// Real-valued index shift `5 W_n^(1/3) / (24 C)`.
    pub offset: f64,
    pub threshold: f64,
    /// `5 W_n^(1/3) / (12 C)`.
    pub dh_guarantee: f64,
    /// Whether `lambda` falls inside the window required by the group bound.
    pub lambda_admissible: bool,
}

pub fn detection_params_group(w_n: usize, my: f64, c: f64) -> Result<GroupDetectionParams> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::Precondition(format!(
            "group screening needs C > 1, got {c}"
        )));
    }
    if w_n == 0 {
        return Err(Error::InvalidInput("W_n must be positive".into()));
    }
    let w = w_n as f64;
    let h_n = 96.0 * c * my / w.powf(2.0 / 3.0);
    let lambda = (6.0 * c - 2.0) * my * w.powf(2.0 / 3.0);
    let lambda_admissible = lambda >= GROUP_LAMBDA_FLOOR * my && lambda < group_window_upper(w_n, my);
    Ok(GroupDetectionParams {
        c,
        h_n,
        lambda,
        offset: 5.0 / (24.0 * c) * w.cbrt(),
        threshold: h_n / 2.0,
        dh_guarantee: 5.0 / (12.0 * c) * w.cbrt(),
        lambda_admissible,
    })
}

/// `C` such that a signal with minimum jump `h_n` and spacing `w_n` sits
/// exactly on the group detector's calibration curve.
pub fn group_c_from_signal(h_n: f64, w_n: usize, my: f64) -> Result<f64> {
    if !h_n.is_finite() {
        return Err(Error::Precondition(
            "no change points: minimum jump is undefined for a single segment".into(),
        ));
    }
    if !(my > 0.0) {
        return Err(Error::Precondition("M_y must be positive".into()));
    }
    Ok(h_n * (w_n as f64).powf(2.0 / 3.0) / (96.0 * my))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::PiecewiseSignal;

    fn stats(n: usize, cps: &[usize]) -> SignalStats {
        let levels: Vec<f64> = (0..cps.len()).map(|k| k as f64).collect();
        PiecewiseSignal::scalar(n, cps, &levels).unwrap().stats()
    }

    #[test]
    fn scalar_envelope_values() {
        let my = compute_my_scalar(1.0, 100, 10.0, NoiseFamily::Gaussian).unwrap();
        assert!((my - 5.256521769756932).abs() < 1e-12);
        let my2 = compute_my_scalar(2.0, 100, 10.0, NoiseFamily::Gaussian).unwrap();
        assert_eq!(my2, 2.0 * my);
        let mut prev = 0.0;
        for t in [1.5, 10.0, 1e3, 1e9] {
            let v = compute_my_scalar(1.0, 100, t, NoiseFamily::Gaussian).unwrap();
            assert!(v > prev);
            prev = v;
        }
        let sg = compute_my_scalar(1.0, 100, 10.0, NoiseFamily::SubGaussianBounded).unwrap();
        assert!((sg - 3f64.sqrt() * my).abs() < 1e-12);
        let se = compute_my_scalar(1.0, 100, 10.0, NoiseFamily::SubExponential).unwrap();
        assert!((se - 2.0 * 1000f64.ln()).abs() < 1e-12);
        assert!(compute_my_scalar(1.0, 100, 1.0, NoiseFamily::Gaussian).is_err());
        assert!(compute_my_scalar(-1.0, 100, 2.0, NoiseFamily::Gaussian).is_err());
    }

    #[test]
    fn group_envelope_values() {
        let my = compute_my_group(1.0, 100, 10.0, 1).unwrap();
        assert!((my - 7.500802772494228).abs() < 1e-12);
        assert_eq!(compute_my_group(3.0, 100, 10.0, 1).unwrap(), 3.0 * my);
        // n = 2, t = e: L = ln 2 + 1. The 2 sqrt(p) branch wins once p >= 8L/3.
        let l = 2f64.ln() + 1.0;
        let crossover = 8.0 * l / 3.0;
        let e = std::f64::consts::E;
        let below = crossover.floor() as usize;
        let above = crossover.ceil() as usize;
        let v_below = compute_my_group(1.0, 2, e, below).unwrap();
        assert!((v_below - (8.0 * l + below as f64).sqrt()).abs() < 1e-12);
        let v_above = compute_my_group(1.0, 2, e, above).unwrap();
        assert!((v_above - 2.0 * (above as f64).sqrt()).abs() < 1e-12);
        assert!(compute_my_group(1.0, 100, 10.0, 0).is_err());
    }

    #[test]
    fn scalar_elementwise_examples() {
        let st = stats(16, &[1]);
        let lambda = 4.0;
        let b = elementwise_bound_scalar(&st, lambda, 1.0).unwrap();
        for (i, v) in b.iter().enumerate() {
            let d = st.d[i] as f64;
            let expect = (1.0 / d.sqrt()).max(1.0 / 16.0).max(2.0 * 4.0 / 16.0 + 2.0 / 4.0);
            assert_eq!(*v, expect);
        }
        // zero noise: only the lambda term survives
        let st = stats(10, &[1, 5]);
        let b = elementwise_bound_scalar(&st, 3.0, 0.0).unwrap();
        for (i, v) in b.iter().enumerate() {
            assert_eq!(*v, 6.0 / st.segment_lengths[st.k_of[i]] as f64);
        }
        assert!(elementwise_bound_scalar(&st, 0.0, 1.0).is_err());
        let big = elementwise_bound_scalar(&st, 1e12, 1.0).unwrap();
        assert!(big.iter().all(|v| *v > 1e10));
    }

    #[test]
    fn scalar_elementwise_symmetric_and_monotone_in_d() {
        let st = stats(40, &[1, 11, 30]);
        let b = elementwise_bound_scalar(&st, 5.0, 2.0).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                if st.k_of[i] == st.k_of[j] {
                    if st.d[i] == st.d[j] {
                        assert_eq!(b[i], b[j]);
                    } else if st.d[i] < st.d[j] {
                        assert!(b[i] >= b[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_sos_examples() {
        // K = 1, m = n
        let n = 64;
        let st = stats(n, &[1]);
        let (my, lambda) = (1.3f64, 2.1f64);
        let nf = n as f64;
        let expect = my.powi(4) / (16.0 * lambda * lambda)
            + 8.0 * lambda * lambda / (nf * nf)
            + 2.0 * my * my / nf * (5.0 + nf.ln());
        assert!((sos_bound_scalar(&st, lambda, my).unwrap() - expect).abs() < 1e-12);
        // zero noise
        let st = stats(100, &[1, 51]);
        assert!((sos_bound_scalar(&st, 2.0, 0.0).unwrap() - 8.0 * 4.0 / 100.0 * 0.04).abs() < 1e-15);
        // n = 100, K = 2, m = [50, 50], My = 5.2565, lambda = My sqrt(n); terms
        // evaluated by hand: 0.017269245156, 8.84185352, 7.639386867608.
        let v = sos_bound_scalar(&st, 52.565, 5.2565).unwrap();
        assert!((v - 16.498509632764478).abs() < 1e-9, "{v}");
    }

    #[test]
    fn group_window_is_enforced() {
        let st = stats(2000, &[1, 1001]);
        let my = 1.0;
        assert!(elementwise_bound_group(&st, 625.0, my).is_ok());
        assert!(matches!(
            elementwise_bound_group(&st, 624.999, my),
            Err(Error::Precondition(_))
        ));
        let upper = 7.0 * 1000.0 - 1000f64.sqrt();
        assert!(elementwise_bound_group(&st, upper, my).is_err());
        assert!(elementwise_bound_group(&st, upper - 1e-6, my).is_ok());
        assert!(sos_bound_group(&st, 600.0, my).is_err());
    }

    #[test]
    fn group_pointwise_dominant_term() {
        // m = d = 1e6, My = 1, lambda = 625: terms 0.00533, 0.05, 0.0559, 5.
        assert_eq!(group_bound_at(1_000_000, 1_000_000, 625.0, 1.0), 5.0);
    }

    #[test]
    fn group_pointwise_term_scaling() {
        let (m, d, lambda, my, alpha) = (400usize, 7usize, 900.0f64, 1.2f64, 3.0f64);
        let terms = |lambda: f64, my: f64| {
            let mf = m as f64;
            [
                4.0 * (my * (mf / 2.0).sqrt() + lambda) / mf,
                50.0 * my / mf.sqrt(),
                25.0 * 5f64.sqrt() * my / (d as f64).sqrt(),
                125.0 * (my.powi(3) / lambda).sqrt(),
            ]
        };
        let base = terms(lambda, my);
        let scaled = terms(alpha * lambda, alpha * my);
        for k in 0..4 {
            assert!((scaled[k] - alpha * base[k]).abs() < 1e-9 * scaled[k]);
        }
        let expect = base.iter().copied().fold(0.0, f64::max);
        assert_eq!(group_bound_at(m, d, lambda, my), expect);
    }

    #[test]
    fn group_sos_examples() {
        let st = stats(2000, &[1]);
        let (lambda, my) = (1000.0f64, 1.2f64);
        let expect = 6250.0 * my * my * 2000f64.ln()
            + 6000.0 * my * my
            + 32.0 * lambda * lambda / 2000.0
            + 125.0f64.powi(2) * my.powi(6) * 2000.0 / lambda;
        assert!((sos_bound_group(&st, lambda, my).unwrap() - expect).abs() < 1e-6);

        let st = stats(2000, &[1, 801]);
        let my = 1.0;
        let at = |lambda: f64| {
            let parts = [
                6250.0 * (800f64.ln() + 1200f64.ln()),
                12000.0,
                32.0 * lambda * lambda * 2.0 / st.m_h,
                125.0f64.powi(2) * 2000.0 / lambda,
            ];
            (parts, sos_bound_group(&st, lambda, my).unwrap())
        };
        let (p1, v1) = at(700.0);
        let (p2, v2) = at(1400.0);
        assert!((p2[2] - 4.0 * p1[2]).abs() < 1e-6);
        assert!((p2[3] - 0.5 * p1[3]).abs() < 1e-9);
        assert!((v1 - p1.iter().sum::<f64>()).abs() < 1e-6);
        assert!((v2 - p2.iter().sum::<f64>()).abs() < 1e-6);
    }

    #[test]
    fn scalar_detection_params() {
        let my = 1.7;
        let w = 400;
        let h_boundary = 16.0 * my / 20.0;
        assert!(matches!(
            detection_params_scalar(h_boundary, w, my),
            Err(Error::Precondition(_))
        ));
        let h = 24.0 * my / 20.0;
        let p = detection_params_scalar(h, w, my).unwrap();
        assert!((p.c - 3.0).abs() < 1e-12);
        assert!((p.dh_guarantee - 400.0 / 18.0).abs() < 1e-9);
        assert!((p.lambda - 2.0 * my * 20.0).abs() < 1e-9);
        assert!(detection_params_scalar(f64::INFINITY, w, my).is_err());
    }

    #[test]
    fn scalar_detection_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let my = rng.gen_range(0.1..10.0);
            let w = rng.gen_range(1..5000);
            let h = 16.0 * my / (w as f64).sqrt() * rng.gen_range(1.01..10.0);
            let p = detection_params_scalar(h, w, my).unwrap();
            let rhs = 32.0 * my * my / (h * h);
            assert!((p.dh_guarantee - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn group_detection_params() {
        let p = detection_params_group(1000, 1.0, 2.0).unwrap();
        assert!((p.h_n - 1.92).abs() < 1e-12);
        assert!((p.offset - 5.0 / 48.0 * 10.0).abs() < 1e-12);
        assert_eq!(p.dh_guarantee, 2.0 * p.offset);
        assert!((p.lambda - 1000.0).abs() < 1e-9);
        assert!(p.lambda_admissible);
        assert!(!detection_params_group(8, 1.0, 1.5).unwrap().lambda_admissible);
        assert!(detection_params_group(1000, 1.0, 1.0).is_err());
    }
}
