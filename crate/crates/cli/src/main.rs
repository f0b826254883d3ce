// SPDX-License-Identifier: MIT OR Apache-2.0
#![forbid(unsafe_code)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fused_cpd::bounds::{
    bound_profile_group, bound_profile_scalar, compute_my_group, compute_my_scalar,
    GROUP_LAMBDA_FLOOR,
};
use fused_cpd::detect::{detect_pipeline, detect_with_stats, DetectionResult};
use fused_cpd::harness::{
    parse_changepoints, parse_levels, run_experiment, write_records, ExperimentConfig, LambdaRule,
};
use fused_cpd::io::{read_series, read_signal, write_series, write_signal};
use fused_cpd::signal::{sample_observation, NoiseFamily, NoiseSpec, PiecewiseSignal, Series};
use fused_cpd::solver1d::{solve_anchored, solve_fused_lasso, AnchoredProblem};
use fused_cpd::solvernd::solve_group_fused_lasso;
use fused_cpd::{Error, Result};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_COVERAGE: u8 = 4;

#[derive(Parser)]
#[command(name = "cpd", version, about = "Fused lasso denoising and change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a config file.
    Run(RunArgs),
    /// Write a piecewise-constant signal and its change-point sidecar.
    GenSignal(GenSignalArgs),
    /// Scalar fused lasso, optionally anchored at both ends.
    Denoise(DenoiseArgs),
    /// Group fused lasso on a multi-column series.
    Gdenoise(GdenoiseArgs),
    /// Per-index and sum-of-squares error bounds for a signal.
    Bounds(BoundsArgs),
    /// Screening change-point detection.
    Detect(DetectArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Exit with status 4 when coverage falls below the floor.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct GenSignalArgs {
    #[arg(long)]
    n: usize,
    /// 1-based segment starts, e.g. `1,251`.
    #[arg(long)]
    cps: String,
    /// Segment levels separated by commas, components by spaces, e.g. `0,2` or `0 0,1 2`.
    #[arg(long, allow_hyphen_values = true)]
    levels: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write a noisy observation here.
    #[arg(long, requires = "sigma")]
    noisy_out: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    family: NoiseFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, allow_hyphen_values = true, requires = "anchor_right")]
    anchor_left: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "anchor_left")]
    anchor_right: Option<f64>,
}

#[derive(Args)]
struct GdenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Defaults to 50 n sweeps.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    t: f64,
    /// A number, `my_sqrt_n`, or (group only) `window_lower`.
    #[arg(long)]
    lambda: LambdaRule,
    #[arg(long)]
    group: bool,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value = "gaussian")]
    family: NoiseFamily,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    group: bool,
    #[arg(long, default_value = "gaussian")]
    family: NoiseFamily,
    /// Ground-truth signal; supplies H_n and W_n and enables d_H.
    #[arg(long, conflicts_with_all = ["min_jump", "min_spacing"])]
    truth: Option<PathBuf>,
    #[arg(long, requires = "min_spacing")]
    min_jump: Option<f64>,
    #[arg(long, requires = "min_jump")]
    min_spacing: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io { path: path.into(), source: e })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.into(), source: e }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let out = run_experiment(&cfg, args.workers)?;
    write_records(&args.out, &out.records)?;
    println!("{}", out.summary);
    if args.assert && !out.summary.passes() {
        eprintln!(
            "coverage {:.4} below floor {:.4}",
            out.summary.primary().fraction,
            out.summary.floor
        );
        return Ok(ExitCode::from(EXIT_COVERAGE));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_signal(args: GenSignalArgs) -> Result<ExitCode> {
    let cps = parse_changepoints(&args.cps)?;
    let sig = PiecewiseSignal::new(args.n, &cps, parse_levels(&args.levels)?)?;
    write_signal(&args.out, &sig)?;
    if let (Some(path), Some(sigma)) = (&args.noisy_out, args.sigma) {
        let obs = sample_observation(&sig, &NoiseSpec::new(sigma, args.family, args.seed)?);
        write_series(path, &obs.y)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn denoise(args: DenoiseArgs) -> Result<ExitCode> {
    let y = read_series(&args.input)?;
    if y.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "denoise expects one column, {} has {}; use gdenoise",
            args.input.display(),
            y.dim()
        )));
    }
    let sol = match (args.anchor_left, args.anchor_right) {
        (Some(a), Some(b)) => {
            solve_anchored(&AnchoredProblem::new(y.into_vec(), a, b, args.lambda))?
        }
        _ => solve_fused_lasso(y.as_slice(), args.lambda)?,
    };
    write_series(&args.output, &Series::scalar(sol.xhat))?;
    eprintln!("objective {:?} kkt_residual {:e}", sol.objective, sol.kkt_residual);
    Ok(ExitCode::SUCCESS)
}

fn gdenoise(args: GdenoiseArgs) -> Result<ExitCode> {
    let y = read_series(&args.input)?;
    let max_iter = args.max_iter.unwrap_or(50 * y.len());
    let sol = solve_group_fused_lasso(&y, args.lambda, args.tol, max_iter)?;
    write_series(&args.output, &sol.xhat)?;
    eprintln!(
        "objective {:?} duality_gap {:e} sweeps {}",
        sol.objective, sol.duality_gap, sol.iterations
    );
    Ok(ExitCode::SUCCESS)
}

fn bounds(args: BoundsArgs) -> Result<ExitCode> {
    let sig = read_signal(&args.signal)?;
    if let Some(p) = args.p {
        if p != sig.dim() {
            return Err(Error::InvalidInput(format!(
                "--p {p} but the signal has {} columns",
                sig.dim()
            )));
        }
    }
    if !args.group && sig.dim() != 1 {
        return Err(Error::InvalidInput("multi-column signal needs --group".into()));
    }
    let n = sig.len();
    let my = if args.group {
        compute_my_group(args.sigma, n, args.t, sig.dim())?
    } else {
        compute_my_scalar(args.sigma, n, args.t, args.family)?
    };
    let lambda = match args.lambda {
        LambdaRule::Value(v) => v,
        LambdaRule::MySqrtN => my * (n as f64).sqrt(),
        LambdaRule::WindowLower if args.group => GROUP_LAMBDA_FLOOR * my,
        other => {
            return Err(Error::InvalidInput(format!("lambda rule {other} is not available here")))
        }
    };
    let stats = sig.stats();
    let profile = if args.group {
        bound_profile_group(&stats, args.sigma, args.t, lambda, sig.dim())?
    } else {
        bound_profile_scalar(&stats, args.sigma, args.t, lambda, args.family)?
    };
    let mut w = create(&args.output)?;
    let e = io_err(&args.output);
    writeln!(w, "key,index,value").map_err(&e)?;
    for (i, b) in profile.per_index.iter().enumerate() {
        writeln!(w, "per_index,{},{b:?}", i + 1).map_err(&e)?;
    }
    writeln!(w, "my,,{:?}", profile.my).map_err(&e)?;
    writeln!(w, "lambda,,{:?}", profile.lambda).map_err(&e)?;
    writeln!(w, "sos_bound,,{:?}", profile.sos_bound).map_err(&e)?;
    writeln!(w, "confidence,,{:?}", profile.confidence).map_err(&e)?;
    writeln!(w, "regime,,{}", profile.regime).map_err(&e)?;
    w.flush().map_err(&e)?;
    Ok(ExitCode::SUCCESS)
}

fn write_detection(path: &Path, r: &DetectionResult) -> Result<()> {
    let mut w = create(path)?;
    let e = io_err(path);
    writeln!(w, "field,value").map_err(&e)?;
    if let Some(l) = r.lambda {
        writeln!(w, "lambda,{l:?}").map_err(&e)?;
    }
    writeln!(w, "offset,{}", r.offset_used).map_err(&e)?;
    writeln!(w, "threshold,{:?}", r.threshold_used).map_err(&e)?;
    if let Some(g) = r.dh_guarantee {
        writeln!(w, "dh_guarantee,{g:?}").map_err(&e)?;
    }
    if let Some(d) = r.dh_to_truth {
        writeln!(w, "dh,{d:?}").map_err(&e)?;
    }
    writeln!(w, "n_detected,{}", r.shat.len()).map_err(&e)?;
    for i in &r.shat {
        writeln!(w, "detected,{i}").map_err(&e)?;
    }
    w.flush().map_err(&e)
}

fn detect(args: DetectArgs) -> Result<ExitCode> {
    let y = read_series(&args.input)?;
    let result = match (&args.truth, args.min_jump, args.min_spacing) {
        (Some(path), _, _) => {
            let truth = read_signal(path)?;
            detect_pipeline(&y, args.sigma, args.t, args.family, args.group, &truth)?
        }
        (None, Some(h), Some(w)) => {
            detect_with_stats(&y, args.sigma, args.t, args.family, args.group, h, w)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "give --truth, or both --min-jump and --min-spacing".into(),
            ))
        }
    };
    write_detection(&args.output, &result)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::GenSignal(a) => gen_signal(a),
        Command::Denoise(a) => denoise(a),
        Command::Gdenoise(a) => gdenoise(a),
        Command::Bounds(a) => bounds(a),
        Command::Detect(a) => detect(a),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_solver_failure() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
