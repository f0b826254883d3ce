// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p fused-cpd --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::Instant;

use fused_cpd::bounds::{compute_my_group, compute_my_scalar, detection_params_group};
use fused_cpd::detect::{hausdorff_distance, screen_scalar};
use fused_cpd::harness::{
    run_experiment, write_records_to, ExperimentConfig, LambdaRule, Mode, SignalSource,
};
use fused_cpd::signal::{NoiseFamily, PiecewiseSignal, Series};
use fused_cpd::solver1d::{kkt_residual, oracle_fused_lasso, solve_fused_lasso};
use fused_cpd::solvernd::solve_group_fused_lasso;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail for reasons recorded in the decisions ledger. The suite
/// still runs and reports them; it only refuses to pass silently if one of
/// them starts passing or another one fails.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
    secs: f64,
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn config(signal: PiecewiseSignal, sigma: f64, t: f64, lambda: Option<LambdaRule>, n_trials: u64, mode: Mode, group: bool) -> ExperimentConfig {
    ExperimentConfig {
        signal: SignalSource::Inline(signal),
        sigma,
        family: NoiseFamily::Gaussian,
        t,
        lambda,
        n_trials,
        base_seed: 20_240_601,
        mode,
        group,
    }
}

fn c1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_err, mut worst_kkt) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(1..=12);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let lambda = [0.1, 0.5, 1.0, 5.0][rng.gen_range(0..4)];
        let sol = solve_fused_lasso(&y, lambda).unwrap();
        let oracle = oracle_fused_lasso(&y, lambda, 1e-13).unwrap();
        worst_err = worst_err.max(sup(&sol.xhat, &oracle));
        worst_kkt = worst_kkt.max(sol.kkt_residual);
    }
    (
        worst_err <= 1e-6 && worst_kkt <= 1e-7,
        format!("200 instances, max |exact - oracle| = {worst_err:.2e}, max KKT = {worst_kkt:.2e}"),
    )
}

fn c2() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ok = true;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..60);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        ok &= solve_fused_lasso(&y, 0.0).unwrap().xhat == y;
        let mean = y.iter().sum::<f64>() / n as f64;
        let (mut acc, mut peak) = (0.0f64, 0.0f64);
        for v in &y {
            acc += v - mean;
            peak = peak.max(acc.abs());
        }
        let lambda = 2.0 * peak + 1.0;
        let x = solve_fused_lasso(&y, lambda).unwrap().xhat;
        worst = worst.max(x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max));
        ok &= kkt_residual(&y, lambda, &vec![mean; n]).unwrap() <= 1e-9;
    }
    ok &= worst <= 1e-9;
    (ok, format!("lambda = 0 returns y exactly; saturated solutions within {worst:.1e} of the KKT-certified mean"))
}

fn c3() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_gap) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(2..80);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lambda = rng.gen_range(0.05..5.0);
        let s = solve_fused_lasso(&y, lambda).unwrap();
        let g = solve_group_fused_lasso(&Series::scalar(y.clone()), lambda, 1e-10, 50 * n).unwrap();
        worst = worst.max(sup(&s.xhat, g.xhat.as_slice()));
        worst_gap = worst_gap.max(g.duality_gap);
    }
    (
        worst <= 1e-6 && worst_gap <= 1e-8,
        format!("50 instances, max row difference {worst:.2e}, max duality gap {worst_gap:.2e}"),
    )
}

fn c4() -> (bool, String) {
    let sig = PiecewiseSignal::scalar(500, &[1], &[0.0]).unwrap();
    let cfg = config(sig, 1.0, 10.0, None, 1000, Mode::PartialSumEvent, false);
    let out = run_experiment(&cfg, workers()).unwrap();
    let c = out.summary.primary();
    (
        c.fraction >= 0.98,
        format!("P(max partial sum <= M_y = {:.3}) = {}/{} = {:.3}", out.summary.my, c.successes, c.trials, c.fraction),
    )
}

fn two_level(n: usize, h: f64) -> PiecewiseSignal {
    PiecewiseSignal::scalar(n, &[1, n / 2 + 1], &[0.0, h]).unwrap()
}

fn c5_c6() -> ((bool, String), (bool, String)) {
    let cfg = config(two_level(500, 2.0), 1.0, 10.0, Some(LambdaRule::MySqrtN), 500, Mode::Elementwise, false);
    let out = run_experiment(&cfg, workers()).unwrap();
    let elem = &out.summary.coverages[0];
    let sos = &out.summary.coverages[1];
    (
        (
            elem.fraction >= 0.97,
            format!("elementwise coverage {}/{} = {:.3}, lambda = {:.2}", elem.successes, elem.trials, elem.fraction, out.summary.lambda.unwrap()),
        ),
        (sos.fraction >= 0.97, format!("mean squared error coverage {}/{} = {:.3}", sos.successes, sos.trials, sos.fraction)),
    )
}

fn c7() -> (bool, String) {
    let n = 2000;
    let my = compute_my_scalar(1.0, n, 10.0, NoiseFamily::Gaussian).unwrap();
    let sig0 = PiecewiseSignal::scalar(n, &[1, 667, 1334], &[0.0, 1.0, 0.0]).unwrap();
    let w = sig0.stats().w_n;
    let h = 24.0 * my / (w as f64).sqrt();
    let sig = PiecewiseSignal::scalar(n, &[1, 667, 1334], &[0.0, h, 0.0]).unwrap();
    let cfg = config(sig, 1.0, 10.0, Some(LambdaRule::Detection), 200, Mode::Detection, false);
    let out = run_experiment(&cfg, workers()).unwrap();
    let dh = &out.summary.coverages[0];
    let nonempty = &out.summary.coverages[1];
    let worst = out.records.iter().filter_map(|r| r.dh).fold(0.0, f64::max);
    (
        dh.fraction >= 0.97 && nonempty.successes == nonempty.trials,
        format!(
            "W_n = {w}, d_H <= W_n/18 = {:.2} in {}/{} = {:.3}, nonempty {}/{}, worst d_H = {worst}",
            w as f64 / 18.0, dh.successes, dh.trials, dh.fraction, nonempty.successes, nonempty.trials
        ),
    )
}

fn c8() -> (bool, String) {
    let n = 2000;
    let p = 3;
    let my = compute_my_group(1.0, n, 10.0, p).unwrap();
    let levels = Series::from_rows(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]).unwrap();
    let sig = PiecewiseSignal::new(n, &[1, 1001], levels).unwrap();
    let upper = sig.stats().segment_lengths.iter().map(|&m| 7.0 * m as f64 - (m as f64).sqrt()).fold(f64::INFINITY, f64::min) * my;
    let cfg = config(sig, 1.0, 10.0, Some(LambdaRule::WindowLower), 200, Mode::Elementwise, true);
    let out = run_experiment(&cfg, workers()).unwrap();
    let elem = &out.summary.coverages[0];
    let sos = &out.summary.coverages[1];
    (
        625.0 * my < upper && elem.fraction >= 0.97 && sos.fraction >= 0.97,
        format!(
            "lambda = 625 M_y = {:.1} < {upper:.1}; elementwise {}/{}, sum of squares {}/{}",
            625.0 * my, elem.successes, elem.trials, sos.successes, sos.trials
        ),
    )
}

fn c9() -> (bool, String) {
    let n = 2000;
    let p = 3;
    let c = 2.0;
    let my = compute_my_group(1.0, n, 10.0, p).unwrap();
    let params = detection_params_group(1000, my, c).unwrap();
    let levels = Series::from_rows(&[[0.0, 0.0, 0.0], [params.h_n, 0.0, 0.0]]).unwrap();
    let sig = PiecewiseSignal::new(n, &[1, 1001], levels).unwrap();
    let cfg = config(sig, 1.0, 10.0, Some(LambdaRule::Detection), 200, Mode::Detection, true);
    let out = run_experiment(&cfg, workers()).unwrap();
    let dh = &out.summary.coverages[0];
    let nonempty = &out.summary.coverages[1];
    // Noiseless fit of two equal segments shrinks the jump by lambda / W_n.
    let fitted_jump = params.h_n - params.lambda / 1000.0;
    (
        dh.fraction >= 0.97,
        format!(
            "C = 2, W_n = 1000, d_H <= {:.3} in {}/{}, nonempty {}/{}; noiseless fitted jump {:.3} vs threshold H_n/2 = {:.3}",
            params.dh_guarantee, dh.successes, dh.trials, nonempty.successes, nonempty.trials, fitted_jump, params.threshold
        ),
    )
}

fn c10() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = true;
    for _ in 0..100 {
        let k = rng.gen_range(2..=6);
        let lengths: Vec<usize> = (0..k).map(|_| rng.gen_range(4..60)).collect();
        let n: usize = lengths.iter().sum();
        let mut cps = vec![1];
        for m in &lengths[..k - 1] {
            cps.push(cps.last().unwrap() + m);
        }
        let mut levels = vec![rng.gen_range(-3.0..3.0)];
        for _ in 1..k {
            let step = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            levels.push(levels.last().unwrap() + step);
        }
        let sig = PiecewiseSignal::scalar(n, &cps, &levels).unwrap();
        let stats = sig.stats();
        let delta = rng.gen_range(1..=stats.w_n / 2);
        let x = sig.materialize();
        let r = screen_scalar(x.as_slice(), delta, stats.h_n / 2.0).unwrap();
        let truth = sig.detectable_set();
        let within = |a: &[usize], b: &[usize]| {
            b.iter().all(|&v| a.iter().any(|&u| u.abs_diff(v) <= 2 * delta))
        };
        ok &= !r.shat.is_empty() && within(&r.shat, &truth) && within(&truth, &r.shat);
        ok &= hausdorff_distance(&r.shat, &truth).unwrap() <= 2.0 * delta as f64;
    }
    (ok, "100 random noiseless signals, offset <= W_n/2: every change point within 2 offset of a detection and vice versa".into())
}

fn c11() -> (bool, String) {
    let cfg = config(two_level(300, 1.5), 1.0, 5.0, Some(LambdaRule::MySqrtN), 40, Mode::Elementwise, false);
    let bytes = |w: usize| {
        let out = run_experiment(&cfg, w).unwrap();
        let mut buf = Vec::new();
        write_records_to(&mut buf, &out.records, Path::new("mem")).unwrap();
        buf
    };
    let a = bytes(1);
    let b = bytes(1);
    let c = bytes(4);
    (a == b && a == c, format!("{} bytes, identical across reruns and 1 vs 4 workers", a.len()))
}

#[test]
fn acceptance() {
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut record = |id: u32, start: Instant, (pass, detail): (bool, String)| {
        outcomes.push(Outcome { id, pass, detail, secs: start.elapsed().as_secs_f64() });
    };
    record(1, Instant::now(), c1());
    record(2, Instant::now(), c2());
    record(3, Instant::now(), c3());
    record(4, Instant::now(), c4());
    let start = Instant::now();
    let (r5, r6) = c5_c6();
    record(5, start, r5);
    record(6, start, r6);
    record(7, Instant::now(), c7());
    record(8, Instant::now(), c8());
    record(9, Instant::now(), c9());
    record(10, Instant::now(), c10());
    record(11, Instant::now(), c11());

    println!();
    for o in &outcomes {
        let tag = match (o.pass, KNOWN_FAILURES.contains(&o.id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {tag}: {} [{:.1}s]", o.id, o.detail, o.secs);
    }
    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| o.pass == KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}
