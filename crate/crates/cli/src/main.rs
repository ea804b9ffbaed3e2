//! Command-line front end: generate synthetic systems, run the reduction,
//! re-verify certificates, and report H2 errors.
//!
//! Exit codes: 0 converged/verified, 2 iteration budget exhausted, 3 cycle
//! detected, 4 input error, 5 internal/verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use h2mor::diagnostics;
use h2mor::interpolation;
use h2mor::io as hio;
use h2mor::irka::{self, AlphaSchedule, IrkaConfig, RunStatus, StopRule, UpdateMode};
use h2mor::linalg::{self, CVec};
use h2mor::lti::{self, SpectrumSpec};
use h2mor::shifts::{matching_assignment, ShiftSet};
use h2mor::Error;
use num_complex::Complex64;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "h2mor", version, about = "H2-optimal model reduction of SISO LTI systems")]
struct Cli {
    /// Emit errors as machine-readable JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a system given as Matrix Market files.
    Reduce(ReduceArgs),
    /// Generate a synthetic stable test system as a Matrix Market triple.
    Gen(GenArgs),
    /// Recompute and verify the certificate bounds stored in a report.
    Diagnose(DiagnoseArgs),
    /// H2 error of the realified reduced model in a report.
    H2err(H2errArgs),
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    c: PathBuf,
    /// Reduced order.
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Mode::Vanilla)]
    mode: Mode,
    /// Blend coefficient in [0,1], or "backoff" for the adaptive halving
    /// schedule. Only used with --mode blended.
    #[arg(long, default_value = "1.0")]
    alpha: String,
    #[arg(long, value_enum, default_value_t = Stop::Matching)]
    stop: Stop,
    /// "logspace", "random", or a path to a JSON shift file.
    #[arg(long, default_value = "logspace")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output path (deterministic JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration history CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Vanilla,
    Blended,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stop {
    Matching,
    Hausdorff,
    Certificate,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Cdlike)]
    preset: Preset,
    /// Files are written as {prefix}_A.mtx, {prefix}_b.mtx, {prefix}_c.mtx.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Cdlike,
    Diagonal,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct H2errArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    c: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

const EXIT_OK: u8 = 0;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_CYCLE: u8 = 3;
const EXIT_INPUT: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    let code = match cli.command {
        Command::Reduce(args) => cmd_reduce(args, json_errors),
        Command::Gen(args) => cmd_gen(args, json_errors),
        Command::Diagnose(args) => cmd_diagnose(args, json_errors),
        Command::H2err(args) => cmd_h2err(args, json_errors),
    };
    ExitCode::from(code)
}

fn report_error(kind: &str, message: &str, json: bool) {
    if json {
        eprintln!(
            "{}",
            serde_json::json!({"error": {"kind": kind, "message": message}})
        );
    } else {
        eprintln!("error ({kind}): {message}");
    }
}

fn input_error(e: &Error, json: bool) -> u8 {
    report_error("input", &e.to_string(), json);
    EXIT_INPUT
}

fn cmd_reduce(args: ReduceArgs, json: bool) -> u8 {
    let t0 = Instant::now();
    let sys = match hio::load_system(&args.a, &args.b, &args.c) {
        Ok(s) => s,
        Err(e) => return input_error(&e, json),
    };
    if args.r == 0 || args.r > sys.order() {
        report_error(
            "input",
            &format!("reduced order {} not in 1..={}", args.r, sys.order()),
            json,
        );
        return EXIT_INPUT;
    }

    let update_mode = match args.mode {
        Mode::Vanilla => UpdateMode::Vanilla,
        Mode::Blended => match args.alpha.as_str() {
            "backoff" => UpdateMode::Blended(AlphaSchedule::Backoff),
            s => match s.parse::<f64>() {
                Ok(a) if (0.0..=1.0).contains(&a) => UpdateMode::Blended(AlphaSchedule::Fixed(a)),
                _ => {
                    report_error("input", &format!("bad --alpha value: {s}"), json);
                    return EXIT_INPUT;
                }
            },
        },
    };
    let stop_rule = match args.stop {
        Stop::Matching => StopRule::Matching,
        Stop::Hausdorff => StopRule::HausdorffThenMatching,
        Stop::Certificate => StopRule::Certificate,
    };
    let mut config = IrkaConfig::new(args.r);
    config.tol = args.tol;
    config.max_iter = args.max_iter;
    config.update_mode = update_mode;
    config.stop_rule = stop_rule;
    config.seed = args.seed;
    if let Err(e) = config.validate() {
        return input_error(&e, json);
    }

    let init = match args.init.as_str() {
        "logspace" => None,
        "random" => match irka::default_init(&sys, args.r, args.seed, true) {
            Ok(s) => Some(s),
            Err(e) => return input_error(&e, json),
        },
        path => match hio::read_shift_json(Path::new(path)) {
            Ok(s) => {
                if s.len() != args.r {
                    report_error(
                        "input",
                        &format!("init file has {} shifts, expected {}", s.len(), args.r),
                        json,
                    );
                    return EXIT_INPUT;
                }
                Some(s)
            }
            Err(e) => return input_error(&e, json),
        },
    };

    let outcome = irka::run_irka(&sys, &config, init);
    let report = hio::run_report(&config, &outcome);
    let text = serde_json::to_string_pretty(&report).expect("report serialization");
    if let Err(e) = std::fs::write(&args.out, text) {
        report_error("io", &e.to_string(), json);
        return EXIT_INTERNAL;
    }
    if let Some(csv) = &args.csv {
        if let Err(e) = hio::write_history_csv(&outcome.history, csv) {
            report_error("io", &e.to_string(), json);
            return EXIT_INTERNAL;
        }
    }
    // timings stay out of the deterministic report
    eprintln!(
        "reduce: status {:?}, {} iterations, {} ms",
        outcome.status,
        outcome.history.len(),
        t0.elapsed().as_millis()
    );
    match outcome.status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::MaxIter => EXIT_MAX_ITER,
        RunStatus::Cycle(_) => EXIT_CYCLE,
        RunStatus::Failed(msg) => {
            report_error("run", &msg, json);
            EXIT_INTERNAL
        }
    }
}

fn cmd_gen(args: GenArgs, json: bool) -> u8 {
    if args.n == 0 {
        report_error("input", "n must be at least 1", json);
        return EXIT_INPUT;
    }
    let spec = match args.preset {
        Preset::Cdlike => SpectrumSpec::CdLike,
        Preset::Diagonal => SpectrumSpec::Diagonal { lo: -50.0, hi: -0.5 },
    };
    let sys = match lti::synth_random_stable(args.n, args.seed, spec) {
        Ok(s) => s,
        Err(e) => return input_error(&e, json),
    };
    let n = sys.order();
    let b = sys.b().clone().into_shape_with_order((n, 1)).expect("column");
    let c = sys.c().clone().into_shape_with_order((n, 1)).expect("column");
    let pa = PathBuf::from(format!("{}_A.mtx", args.out_prefix));
    let pb = PathBuf::from(format!("{}_b.mtx", args.out_prefix));
    let pc = PathBuf::from(format!("{}_c.mtx", args.out_prefix));
    for (p, m) in [(&pa, sys.a().clone()), (&pb, b), (&pc, c)] {
        if let Err(e) = hio::write_matrix_market(p, &m) {
            report_error("io", &e.to_string(), json);
            return EXIT_INTERNAL;
        }
    }
    eprintln!(
        "gen: wrote {}, {}, {}",
        pa.display(),
        pb.display(),
        pc.display()
    );
    EXIT_OK
}

fn shift_set_from_value(v: &Value) -> Option<ShiftSet> {
    let arr = v.as_array()?;
    let mut vals = Vec::with_capacity(arr.len());
    for p in arr {
        let pair = p.as_array()?;
        if pair.len() != 2 {
            return None;
        }
        vals.push(Complex64::new(
            hio::parse_jnum(&pair[0])?,
            hio::parse_jnum(&pair[1])?,
        ));
    }
    ShiftSet::pair_values(&vals).ok()
}

fn cvec_from_value(v: &Value) -> Option<CVec> {
    let arr = v.as_array()?;
    let mut out = CVec::zeros(arr.len());
    for (i, p) in arr.iter().enumerate() {
        let pair = p.as_array()?;
        if pair.len() != 2 {
            return None;
        }
        out[i] = Complex64::new(hio::parse_jnum(&pair[0])?, hio::parse_jnum(&pair[1])?);
    }
    Some(out)
}

fn cmd_diagnose(args: DiagnoseArgs, json: bool) -> u8 {
    let text = match std::fs::read_to_string(&args.report) {
        Ok(t) => t,
        Err(e) => {
            report_error("input", &e.to_string(), json);
            return EXIT_INPUT;
        }
    };
    let report: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            report_error("input", &format!("bad report json: {e}"), json);
            return EXIT_INPUT;
        }
    };
    let model = &report["final"]["model"];
    let cert = &report["final"]["certificate"];
    if model.is_null() || cert.is_null() {
        report_error("input", "report lacks final model or certificate", json);
        return EXIT_INPUT;
    }
    let (Some(sigma), Some(mu), Some(q)) = (
        shift_set_from_value(&model["sigma"]),
        shift_set_from_value(&model["mu"]),
        cvec_from_value(&model["q"]),
    ) else {
        report_error("input", "malformed final model in report", json);
        return EXIT_INPUT;
    };

    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        println!("{}: {}", name, if pass { "ok" } else { "FAIL" });
        ok &= pass;
    };

    // recompute the condensed epsilon quantities
    let eq = match diagnostics::epsilon_quantities(&sigma, &mu) {
        Ok(eq) => eq,
        Err(e) => {
            report_error("internal", &e.to_string(), json);
            return EXIT_INTERNAL;
        }
    };
    let stored_eps = hio::parse_jnum(&cert["eps"]).unwrap_or(f64::NAN);
    let stored_eps_b = hio::parse_jnum(&cert["eps_bullet"]).unwrap_or(f64::NAN);
    check("eps matches recomputation", close(eq.eps, stored_eps, 1e-10));
    check(
        "eps_bullet matches recomputation",
        close(eq.eps_bullet, stored_eps_b, 1e-10),
    );
    let valid = cert["valid"].as_bool().unwrap_or(false);
    check(
        "validity gate eps_bullet < 1/2",
        valid == (eq.eps_bullet < 0.5),
    );

    // ideal feedback places the mirrored shifts
    let q_bullet = match irka::feedback_vector(&sigma) {
        Ok(qb) => qb,
        Err(e) => {
            report_error("internal", &e.to_string(), json);
            return EXIT_INTERNAL;
        }
    };
    match interpolation::companion_eig(&sigma, &q_bullet) {
        Ok((mu_b, _)) => {
            let minus: Vec<Complex64> = sigma.values().iter().map(|z| -z).collect();
            let (defect, _) =
                matching_assignment(&mu_b.values(), &minus).unwrap_or((f64::INFINITY, vec![]));
            check(
                "feedback places mirrored shifts",
                defect <= 1e-10 * sigma.max_modulus(),
            );
        }
        Err(e) => {
            report_error("internal", &e.to_string(), json);
            return EXIT_INTERNAL;
        }
    }
    // norm bounds on dq
    let dq = &q - &q_bullet;
    let dq_norm = linalg::norm2_vec(&dq);
    let slack = 1.0 + 1e-8;
    if eq.eps < 1.0 {
        check(
            "||dq|| <= eps ||q||",
            dq_norm <= eq.eps * linalg::norm2_vec(&q) * slack,
        );
    }
    if eq.eps_bullet < 1.0 {
        check(
            "||dq|| <= eps_bullet ||q_bullet||",
            dq_norm <= eq.eps_bullet * linalg::norm2_vec(&q_bullet) * slack,
        );
    }

    if ok {
        println!("certificate verified");
        EXIT_OK
    } else {
        report_error("verify", "certificate checks failed", json);
        EXIT_INTERNAL
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() && b.is_infinite() {
        return a.signum() == b.signum();
    }
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn cmd_h2err(args: H2errArgs, json: bool) -> u8 {
    let sys = match hio::load_system(&args.a, &args.b, &args.c) {
        Ok(s) => s,
        Err(e) => return input_error(&e, json),
    };
    let text = match std::fs::read_to_string(&args.report) {
        Ok(t) => t,
        Err(e) => {
            report_error("input", &e.to_string(), json);
            return EXIT_INPUT;
        }
    };
    let report: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => {
            report_error("input", &format!("bad report json: {e}"), json);
            return EXIT_INPUT;
        }
    };
    let reduced = match hio::realified_from_report(&report) {
        Ok(r) => r,
        Err(e) => return input_error(&e, json),
    };
    let norm = match sys.h2_norm() {
        Ok(x) => x,
        Err(e) => return input_error(&e, json),
    };
    match lti::h2_error(&sys, &reduced) {
        Ok(err) => {
            println!("h2_error_absolute: {err}");
            println!("h2_error_relative: {}", err / norm);
            EXIT_OK
        }
        Err(e) => {
            report_error("run", &e.to_string(), json);
            EXIT_INTERNAL
        }
    }
}
