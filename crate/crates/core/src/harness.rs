// SPDX-License-Identifier: MIT OR Apache-2.0

//! Configuration-driven Monte Carlo runner checking bound coverage, detection
//! accuracy and the partial-sum event over many independent noise draws.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use statrs::function::beta::beta_reg;

use crate::bounds::{
    compute_my_group, compute_my_scalar, detection_params_group, detection_params_scalar,
    elementwise_bound_group, elementwise_bound_scalar, group_c_from_signal, sos_bound_group,
    sos_bound_scalar, GROUP_LAMBDA_FLOOR,
};
use crate::detect::detect_pipeline;
use crate::error::{Error, Result};
use crate::io::{csv_error, read_signal};
use crate::signal::{
    dist, generate_noise, max_partial_sum_stat, sample_observation_on_stream, NoiseFamily,
    NoiseSpec, PiecewiseSignal, Series, SignalStats,
};
use crate::solver1d::solve_fused_lasso;
use crate::solvernd::solve_group_fused_lasso_default;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    Value(f64),
    /// `M_y * sqrt(n)`.
    MySqrtN,
    /// The value prescribed by the screening detector.
    Detection,
    /// `625 M_y`, the lower edge of the group window.
    WindowLower,
}

impl FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "my_sqrt_n" => Ok(LambdaRule::MySqrtN),
            "detection" => Ok(LambdaRule::Detection),
            "window_lower" => Ok(LambdaRule::WindowLower),
            other => other.parse::<f64>().map(LambdaRule::Value).map_err(|_| {
                Error::InvalidInput(format!(
                    "lambda must be a number, my_sqrt_n, detection or window_lower; got '{other}'"
                ))
            }),
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::Value(v) => write!(f, "{v:?}"),
            LambdaRule::MySqrtN => f.write_str("my_sqrt_n"),
            LambdaRule::Detection => f.write_str("detection"),
            LambdaRule::WindowLower => f.write_str("window_lower"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Elementwise,
    Sos,
    Detection,
    PartialSumEvent,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elementwise" => Ok(Mode::Elementwise),
            "sos" => Ok(Mode::Sos),
            "detection" => Ok(Mode::Detection),
            "partial_sum_event" => Ok(Mode::PartialSumEvent),
            other => Err(Error::InvalidInput(format!(
                "mode must be elementwise, sos, detection or partial_sum_event; got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Elementwise => "elementwise",
            Mode::Sos => "sos",
            Mode::Detection => "detection",
            Mode::PartialSumEvent => "partial_sum_event",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalSource {
    Inline(PiecewiseSignal),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub signal: SignalSource,
    pub sigma: f64,
    pub family: NoiseFamily,
    pub t: f64,
    /// Optional only in `partial_sum_event` mode, where no estimator is fit.
    pub lambda: Option<LambdaRule>,
    pub n_trials: u64,
    pub base_seed: u64,
    pub mode: Mode,
    pub group: bool,
}

const KEYS: &[&str] = &[
    "n", "changepoints", "levels", "signal_file", "sigma", "family", "t", "lambda", "n_trials",
    "base_seed", "mode", "group", "p",
];

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), path)
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative
    /// `signal_file` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, label: &Path) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(label, k + 1, "expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::parse(label, k + 1, format!("unknown key `{key}`")));
            }
            if map.insert(key.to_string(), (k + 1, value.trim().to_string())).is_some() {
                return Err(Error::parse(label, k + 1, format!("duplicate key `{key}`")));
            }
        }
        let get = |key: &str| map.get(key).map(|(l, v)| (*l, v.as_str()));
        fn num<T: FromStr>(label: &Path, key: &str, entry: Option<(usize, &str)>) -> Result<Option<T>> {
            match entry {
                None => Ok(None),
                Some((line, v)) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::parse(label, line, format!("bad value for `{key}`: '{v}'"))),
            }
        }
        let require = |key: &str| {
            Error::InvalidInput(format!("{}: missing required key `{key}`", label.display()))
        };

        let group = match get("group") {
            None | Some((_, "false")) => false,
            Some((_, "true")) => true,
            Some((line, v)) => {
                return Err(Error::parse(label, line, format!("group must be true or false, got '{v}'")))
            }
        };
        let p: Option<usize> = num(label, "p", get("p"))?;

        let signal = match (get("signal_file"), get("n")) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "give either signal_file or an inline signal (n, changepoints, levels), not both".into(),
                ))
            }
            (Some((_, f)), None) => SignalSource::File(base_dir.join(f)),
            (None, Some(_)) => {
                let n: usize = num(label, "n", get("n"))?.unwrap_or(0);
                let (cl, cps_text) = get("changepoints").ok_or_else(|| require("changepoints"))?;
                let cps = parse_changepoints(cps_text).map_err(|e| Error::parse(label, cl, e.to_string()))?;
                let (ll, lv_text) = get("levels").ok_or_else(|| require("levels"))?;
                let levels = parse_levels(lv_text).map_err(|e| Error::parse(label, ll, e.to_string()))?;
                SignalSource::Inline(PiecewiseSignal::new(n, &cps, levels)?)
            }
            (None, None) => return Err(require("signal_file or n")),
        };
        if let (SignalSource::Inline(sig), Some(p)) = (&signal, p) {
            if sig.dim() != p {
                return Err(Error::InvalidInput(format!(
                    "p = {p} but levels have {} components",
                    sig.dim()
                )));
            }
        }

        let family = match get("family") {
            None => NoiseFamily::Gaussian,
            Some((line, v)) => v.parse().map_err(|e: Error| Error::parse(label, line, e.to_string()))?,
        };
        let lambda = match get("lambda") {
            None => None,
            Some((line, v)) => {
                Some(v.parse().map_err(|e: Error| Error::parse(label, line, e.to_string()))?)
            }
        };
        let mode = match get("mode") {
            None => return Err(require("mode")),
            Some((line, v)) => v.parse().map_err(|e: Error| Error::parse(label, line, e.to_string()))?,
        };
        let cfg = ExperimentConfig {
            signal,
            sigma: num(label, "sigma", get("sigma"))?.ok_or_else(|| require("sigma"))?,
            family,
            t: num(label, "t", get("t"))?.ok_or_else(|| require("t"))?,
            lambda,
            n_trials: num(label, "n_trials", get("n_trials"))?.ok_or_else(|| require("n_trials"))?,
            base_seed: num(label, "base_seed", get("base_seed"))?.unwrap_or(0),
            mode,
            group,
        };
        cfg.validate_shape()?;
        Ok(cfg)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(Error::InvalidInput("n_trials must be at least 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.t > 1.0) {
            return Err(Error::InvalidInput(format!("t must exceed 1, got {}", self.t)));
        }
        match (self.mode, self.lambda) {
            (Mode::PartialSumEvent, _) => {}
            (_, None) => return Err(Error::InvalidInput("missing required key `lambda`".into())),
            (Mode::Detection, Some(LambdaRule::Detection)) => {}
            (Mode::Detection, Some(rule)) => {
                return Err(Error::InvalidInput(format!(
                    "detection mode fixes lambda itself; set lambda = detection, not {rule}"
                )))
            }
            (_, Some(LambdaRule::Detection)) => {
                return Err(Error::InvalidInput("lambda = detection needs mode = detection".into()))
            }
            (_, Some(LambdaRule::WindowLower)) if !self.group => {
                return Err(Error::InvalidInput("lambda = window_lower needs group = true".into()))
            }
            (_, Some(LambdaRule::Value(v))) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::InvalidInput(format!("lambda must be positive, got {v}")))
            }
            _ => {}
        }
        if self.group && self.family != NoiseFamily::Gaussian && self.mode != Mode::PartialSumEvent {
            return Err(Error::InvalidInput(
                "group bounds are stated for Gaussian noise only".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve_signal(&self) -> Result<PiecewiseSignal> {
        let sig = match &self.signal {
            SignalSource::Inline(s) => s.clone(),
            SignalSource::File(path) => read_signal(path)?,
        };
        if !self.group && sig.dim() != 1 {
            return Err(Error::InvalidInput(format!(
                "signal has {} components; set group = true",
                sig.dim()
            )));
        }
        Ok(sig)
    }
}

/// `"1, 31, 70"` -> `[1, 31, 70]`.
pub fn parse_changepoints(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidInput(format!("change points must be comma-separated integers, got '{text}'")))
}

/// Segments separated by commas, components by whitespace: `"0 0, 1 2"`.
pub fn parse_levels(text: &str) -> Result<Series> {
    let rows = text
        .split(',')
        .map(|seg| seg.split_whitespace().map(str::parse::<f64>).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidInput(format!("levels must be numbers, got '{text}'")))?;
    Series::from_rows(&rows)
}

/// One Monte Carlo trial. Fields not produced by the run's mode are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub max_abs_error: Option<f64>,
    pub elementwise_ok: Option<bool>,
    pub sos_value: Option<f64>,
    pub sos_ok: Option<bool>,
    pub dh: Option<f64>,
    pub dh_ok: Option<bool>,
    pub n_detected: Option<usize>,
    pub partial_sum_stat: Option<f64>,
    pub event_ok: Option<bool>,
    /// KKT residual (scalar) or duality gap (group).
    pub solver_diag: Option<f64>,
}

impl TrialRecord {
    fn empty(trial_index: u64, seed: u64) -> Self {
        Self {
            trial_index,
            seed,
            max_abs_error: None,
            elementwise_ok: None,
            sos_value: None,
            sos_ok: None,
            dh: None,
            dh_ok: None,
            n_detected: None,
            partial_sum_stat: None,
            event_ok: None,
            solver_diag: None,
        }
    }

    /// The flag the run's mode is judged by.
    pub fn primary_flag(&self, mode: Mode) -> Option<bool> {
        match mode {
            Mode::Elementwise => self.elementwise_ok,
            Mode::Sos => self.sos_ok,
            Mode::Detection => self.dh_ok,
            Mode::PartialSumEvent => self.event_ok,
        }
    }
}

/// Everything fixed across trials, computed and checked before any trial runs.
#[derive(Clone, Debug)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub signal: PiecewiseSignal,
    pub truth: Series,
    pub stats: SignalStats,
    pub my: f64,
    pub lambda: Option<f64>,
    pub per_index: Option<Vec<f64>>,
    pub sos_bound: Option<f64>,
    pub dh_guarantee: Option<f64>,
}

pub fn plan(config: &ExperimentConfig) -> Result<Plan> {
    config.validate_shape()?;
    let signal = config.resolve_signal()?;
    let stats = signal.stats();
    let n = signal.len();
    let my = if config.group {
        compute_my_group(config.sigma, n, config.t, signal.dim())?
    } else {
        compute_my_scalar(config.sigma, n, config.t, config.family)?
    };
    let mut out = Plan {
        config: config.clone(),
        truth: signal.materialize(),
        signal,
        stats,
        my,
        lambda: None,
        per_index: None,
        sos_bound: None,
        dh_guarantee: None,
    };
    match config.mode {
        Mode::PartialSumEvent => {}
        Mode::Detection => {
            if out.signal.num_segments() < 2 {
                return Err(Error::Precondition("detection needs at least two segments".into()));
            }
            let (lambda, guarantee) = if config.group {
                let c = group_c_from_signal(out.stats.h_n, out.stats.w_n, my)?;
                let p = detection_params_group(out.stats.w_n, my, c)?;
                (p.lambda, p.dh_guarantee)
            } else {
                let p = detection_params_scalar(out.stats.h_n, out.stats.w_n, my)?;
                (p.lambda, p.dh_guarantee)
            };
            out.lambda = Some(lambda);
            out.dh_guarantee = Some(guarantee);
        }
        Mode::Elementwise | Mode::Sos => {
            let lambda = match config.lambda.expect("validated") {
                LambdaRule::Value(v) => v,
                LambdaRule::MySqrtN => my * (n as f64).sqrt(),
                LambdaRule::WindowLower => GROUP_LAMBDA_FLOOR * my,
                LambdaRule::Detection => unreachable!("validated"),
            };
            if config.group {
                out.per_index = Some(elementwise_bound_group(&out.stats, lambda, my)?);
                out.sos_bound = Some(sos_bound_group(&out.stats, lambda, my)?);
            } else {
                out.per_index = Some(elementwise_bound_scalar(&out.stats, lambda, my)?);
                out.sos_bound = Some(sos_bound_scalar(&out.stats, lambda, my)?);
            }
            out.lambda = Some(lambda);
        }
    }
    Ok(out)
}

/// Runs a single trial; deterministic in `(plan, trial_index)`.
pub fn run_trial(plan: &Plan, trial_index: u64) -> Result<TrialRecord> {
    let cfg = &plan.config;
    let seed = cfg.base_seed ^ trial_index;
    let spec = NoiseSpec::new(cfg.sigma, cfg.family, seed)?;
    let mut rec = TrialRecord::empty(trial_index, seed);
    match cfg.mode {
        Mode::PartialSumEvent => {
            let eps = generate_noise(&spec, trial_index, plan.signal.len(), plan.signal.dim());
            let stat = max_partial_sum_stat(&eps)?;
            rec.partial_sum_stat = Some(stat);
            rec.event_ok = Some(stat <= plan.my);
        }
        Mode::Detection => {
            let obs = sample_observation_on_stream(&plan.signal, &spec, trial_index);
            let r = detect_pipeline(&obs.y, cfg.sigma, cfg.t, cfg.family, cfg.group, &plan.signal)?;
            let guarantee = plan.dh_guarantee.expect("planned");
            rec.n_detected = Some(r.shat.len());
            rec.dh = r.dh_to_truth;
            rec.dh_ok = Some(r.dh_to_truth.is_some_and(|d| d <= guarantee));
        }
        Mode::Elementwise | Mode::Sos => {
            let obs = sample_observation_on_stream(&plan.signal, &spec, trial_index);
            let lambda = plan.lambda.expect("planned");
            let (xhat, diag) = if cfg.group {
                let sol = solve_group_fused_lasso_default(&obs.y, lambda)?;
                (sol.xhat, sol.duality_gap)
            } else {
                let sol = solve_fused_lasso(obs.y.as_slice(), lambda)?;
                (Series::scalar(sol.xhat), sol.kkt_residual)
            };
            let per_index = plan.per_index.as_ref().expect("planned");
            let mut max_err = 0.0f64;
            let mut sum_sq = 0.0;
            let mut all_ok = true;
            for (i, bound) in per_index.iter().enumerate() {
                let e = dist(xhat.row(i), plan.truth.row(i));
                max_err = max_err.max(e);
                sum_sq += e * e;
                all_ok &= e <= *bound;
            }
            // The scalar bound is on the mean, the group bound on the sum.
            let sos = if cfg.group { sum_sq } else { sum_sq / plan.signal.len() as f64 };
            rec.max_abs_error = Some(max_err);
            rec.elementwise_ok = Some(all_ok);
            rec.sos_value = Some(sos);
            rec.sos_ok = Some(sos <= plan.sos_bound.expect("planned"));
            rec.solver_diag = Some(diag);
        }
    }
    Ok(rec)
}

/// Coverage of one flag with a 95% Clopper-Pearson interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    pub name: &'static str,
    pub successes: u64,
    pub trials: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Coverage {
    pub fn new(name: &'static str, successes: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = clopper_pearson(successes, trials, 0.05);
        Self {
            name,
            successes,
            trials,
            fraction: if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 },
            ci_low,
            ci_high,
        }
    }
}

/// Exact binomial interval at level `1 - alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let low = if k == 0.0 { 0.0 } else { beta_quantile(k, n - k + 1.0, alpha / 2.0) };
    let high = if k == n { 1.0 } else { beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0) };
    (low, high)
}

fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `1 - 1/t^2 - 3 sqrt(q (1 - q) / N)` with `q = 1/t^2`.
pub fn coverage_floor(t: f64, n_trials: u64) -> f64 {
    let q = 1.0 / (t * t);
    1.0 - q - 3.0 * (q * (1.0 - q) / n_trials as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mode: Mode,
    pub n_trials: u64,
    pub my: f64,
    pub lambda: Option<f64>,
    /// Theoretical probability `1 - 1/t^2`.
    pub target: f64,
    /// Coverage the primary flag must reach to pass.
    pub floor: f64,
    pub coverages: Vec<Coverage>,
    pub max_solver_diag: Option<f64>,
}

impl Summary {
    pub fn primary(&self) -> &Coverage {
        &self.coverages[0]
    }

    pub fn passes(&self) -> bool {
        self.primary().fraction >= self.floor
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode,{}", self.mode)?;
        writeln!(f, "n_trials,{}", self.n_trials)?;
        writeln!(f, "my,{:?}", self.my)?;
        if let Some(l) = self.lambda {
            writeln!(f, "lambda,{l:?}")?;
        }
        writeln!(f, "target,{:?}", self.target)?;
        writeln!(f, "floor,{:?}", self.floor)?;
        for c in &self.coverages {
            writeln!(
                f,
                "coverage_{},{}/{},{:?},[{:.4},{:.4}]",
                c.name, c.successes, c.trials, c.fraction, c.ci_low, c.ci_high
            )?;
        }
        if let Some(d) = self.max_solver_diag {
            writeln!(f, "max_solver_diag,{d:?}")?;
        }
        write!(f, "pass,{}", self.passes())
    }
}

pub fn summarize(plan: &Plan, records: &[TrialRecord]) -> Summary {
    let mode = plan.config.mode;
    let count = |get: fn(&TrialRecord) -> Option<bool>| {
        records.iter().filter(|r| get(r) == Some(true)).count() as u64
    };
    let n = records.len() as u64;
    let mut coverages = Vec::new();
    let primary = Coverage::new(
        match mode {
            Mode::Elementwise => "elementwise",
            Mode::Sos => "sos",
            Mode::Detection => "dh",
            Mode::PartialSumEvent => "event",
        },
        records.iter().filter(|r| r.primary_flag(mode) == Some(true)).count() as u64,
        n,
    );
    coverages.push(primary);
    match mode {
        Mode::Elementwise => coverages.push(Coverage::new("sos", count(|r| r.sos_ok), n)),
        Mode::Sos => coverages.push(Coverage::new("elementwise", count(|r| r.elementwise_ok), n)),
        Mode::Detection => coverages.push(Coverage::new(
            "nonempty",
            records.iter().filter(|r| r.n_detected.is_some_and(|k| k > 0)).count() as u64,
            n,
        )),
        Mode::PartialSumEvent => {}
    }
    let max_solver_diag = records
        .iter()
        .filter_map(|r| r.solver_diag)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Summary {
        mode,
        n_trials: n,
        my: plan.my,
        lambda: plan.lambda,
        target: 1.0 - 1.0 / (plan.config.t * plan.config.t),
        floor: coverage_floor(plan.config.t, n),
        coverages,
        max_solver_diag,
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

/// Runs every trial on `workers` threads. Results are ordered by trial index
/// and do not depend on the number of workers.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let plan = plan(config)?;
    let records = run_trials(&plan, workers)?;
    let summary = summarize(&plan, &records);
    Ok(ExperimentOutput { records, summary })
}

pub fn run_trials(plan: &Plan, workers: usize) -> Result<Vec<TrialRecord>> {
    let n = plan.config.n_trials;
    let workers = workers.clamp(1, n.min(usize::MAX as u64) as usize);
    let next = AtomicU64::new(0);
    let mut results: Vec<(u64, Result<TrialRecord>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        out.push((i, run_trial(plan, i)));
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("trial worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    results
        .into_iter()
        .map(|(i, r)| r.map_err(|e| Error::Trial { trial: i, source: Box::new(e) }))
        .collect()
}

const RECORD_HEADER: [&str; 12] = [
    "trial_index",
    "seed",
    "max_abs_error",
    "elementwise_ok",
    "sos_value",
    "sos_ok",
    "dh",
    "dh_ok",
    "n_detected",
    "partial_sum_stat",
    "event_ok",
    "solver_diag",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_records_to<W: Write>(writer: W, records: &[TrialRecord], label: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER).map_err(|e| csv_error(label, e))?;
    for r in records {
        w.write_record([
            r.trial_index.to_string(),
            r.seed.to_string(),
            opt_f(r.max_abs_error),
            opt(r.elementwise_ok),
            opt_f(r.sos_value),
            opt(r.sos_ok),
            opt_f(r.dh),
            opt(r.dh_ok),
            opt(r.n_detected),
            opt_f(r.partial_sum_stat),
            opt(r.event_ok),
            opt_f(r.solver_diag),
        ])
        .map_err(|e| csv_error(label, e))?;
    }
    w.flush().map_err(|e| Error::io(label, e))
}

pub fn read_records_from<R: Read>(reader: R, label: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::ReaderBuilder::new().from_reader(reader);
    let headers = r.headers().map_err(|e| csv_error(label, e))?.clone();
    if headers.iter().ne(RECORD_HEADER) {
        return Err(Error::parse(label, 1, "unexpected header for trial records"));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(label, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let field = |j: usize| &rec[j];
        fn parse<T: FromStr>(label: &Path, line: usize, name: &str, s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::parse(label, line, format!("bad {name} '{s}'")))
        }
        let p = |j: usize| RECORD_HEADER[j];
        let required = |v: Option<u64>, j: usize| {
            v.ok_or_else(|| Error::parse(label, line, format!("missing {}", p(j))))
        };
        out.push(TrialRecord {
            trial_index: required(parse(label, line, p(0), field(0))?, 0)?,
            seed: required(parse(label, line, p(1), field(1))?, 1)?,
            max_abs_error: parse(label, line, p(2), field(2))?,
            elementwise_ok: parse(label, line, p(3), field(3))?,
            sos_value: parse(label, line, p(4), field(4))?,
            sos_ok: parse(label, line, p(5), field(5))?,
            dh: parse(label, line, p(6), field(6))?,
            dh_ok: parse(label, line, p(7), field(7))?,
            n_detected: parse(label, line, p(8), field(8))?,
            partial_sum_stat: parse(label, line, p(9), field(9))?,
            event_ok: parse(label, line, p(10), field(10))?,
            solver_diag: parse(label, line, p(11), field(11))?,
        });
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records_to(file, records, path)
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_from(file, path)
}
