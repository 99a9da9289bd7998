use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use harq_core::asy::bler_asymptotic;
use harq_core::env::{serve, EnvFile};
use harq_core::gpopt::{evaluate_policy, solve_gp_with, Backend, GpOptions};
use harq_core::ltat::{OptConstraints, PowerPolicy};
use harq_core::mc::{estimate_bler, simulate_episodes, ErrorModel};
use harq_core::model::{db_to_linear, linear_to_db, SystemConfig};
use harq_core::quad::{
    bler_gl_dp, bler_gl_naive, bler_trapezoid, complexity_report, gl_rule, QuadOutcome, TrapezoidConfig,
};
use harq_core::asy::asymptotic_coeffs;
use harq_core::Error;
use serde::Serialize;

use crate::{BlerArgs, Figure, GpArgs, LinkArgs, Method, MethodParams, SimulateArgs, SweepArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Infeasible(_) => 3,
            Error::Budget { .. } => 4,
            Error::Protocol(_) => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::runtime(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::runtime(format!("csv: {e}"))
    }
}

type CliResult = Result<(), CliError>;

const DEFAULT_N: usize = 20;
const DEFAULT_K: usize = 3000;
const DEFAULT_EPS_U: f64 = 1e-5;
const DEFAULT_SAMPLES: u64 = 1_000_000;
const DEFAULT_SEED: u64 = 1;

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Mc => "mc",
        Method::McApprox => "mc-approx",
        Method::Trap => "trap",
        Method::Gl => "gl",
        Method::GlDp => "gl-dp",
        Method::Asy => "asy",
    }
}

fn writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

#[derive(Serialize)]
struct BlerRow {
    snr_db: f64,
    m: usize,
    method: &'static str,
    bler: f64,
    stderr: Option<f64>,
    q_evals: Option<u64>,
    wall_ms: f64,
    l: f64,
    r: f64,
    lambda: f64,
    params: String,
}

/// One evaluated point: `(m, bler, stderr, q_evals)`.
type Point = (usize, f64, Option<f64>, Option<u64>);

struct Evaluation {
    points: Vec<Point>,
    params: String,
    wall_ms: f64,
}

fn link_config(link: &LinkArgs, rate: f64, blocklength: f64, snr_db: f64) -> Result<SystemConfig, CliError> {
    Ok(SystemConfig::new(link.m, blocklength, rate, link.lambda)?.with_snr_db(&[snr_db])?)
}

fn quad_once(method: Method, cfg: &SystemConfig, p: &MethodParams) -> Result<QuadOutcome, CliError> {
    Ok(match method {
        Method::Trap => {
            let tc = TrapezoidConfig::from_truncation(p.eps_u.unwrap_or(DEFAULT_EPS_U), p.k.unwrap_or(DEFAULT_K), cfg)?;
            bler_trapezoid(cfg, &tc)?
        }
        Method::Gl => bler_gl_naive(cfg, &gl_rule(p.n.unwrap_or(DEFAULT_N))?)?,
        Method::GlDp => bler_gl_dp(cfg, &gl_rule(p.n.unwrap_or(DEFAULT_N))?)?,
        _ => unreachable!("not a quadrature method"),
    })
}

/// Evaluates `method` on `cfg`, for `m = M` only or for every `m <= M`.
fn evaluate(method: Method, cfg: &SystemConfig, p: &MethodParams, all_rounds: bool) -> Result<Evaluation, CliError> {
    let big_m = cfg.max_rounds;
    let wanted: Vec<usize> = if all_rounds { (1..=big_m).collect() } else { vec![big_m] };
    let start = Instant::now();
    let (points, params) = match method {
        Method::Mc | Method::McApprox => {
            let model = if method == Method::Mc { ErrorModel::Exact } else { ErrorModel::Approx };
            let samples = p.samples.unwrap_or(DEFAULT_SAMPLES);
            let seed = p.seed.unwrap_or(DEFAULT_SEED);
            let c = estimate_bler(cfg, samples, model, seed)?;
            let se = c.std_errors.expect("sampled curve");
            (
                wanted.iter().map(|&m| (m, c.values[m - 1], Some(se[m - 1]), None)).collect(),
                format!("samples={samples};seed={seed}"),
            )
        }
        Method::Asy => {
            let c = bler_asymptotic(cfg)?;
            (wanted.iter().map(|&m| (m, c.values[m - 1], None, None)).collect(), String::new())
        }
        Method::Trap | Method::Gl | Method::GlDp => {
            let mut points = Vec::new();
            for &m in &wanted {
                let out = quad_once(method, &cfg.truncated(m)?, p)?;
                points.push((m, out.value, None, Some(out.counter.q_evals)));
            }
            let params = if method == Method::Trap {
                let tc = TrapezoidConfig::from_truncation(p.eps_u.unwrap_or(DEFAULT_EPS_U), p.k.unwrap_or(DEFAULT_K), cfg)?;
                format!("k={};eps_u={};u={}", tc.intervals, tc.trunc_error.unwrap_or(f64::NAN), tc.upper)
            } else {
                format!("n={}", p.n.unwrap_or(DEFAULT_N))
            };
            (points, params)
        }
    };
    Ok(Evaluation { points, params, wall_ms: (start.elapsed().as_secs_f64() * 1e6).round() / 1e3 })
}

fn check_params(method: Method, p: &MethodParams) -> CliResult {
    let gl = matches!(method, Method::Gl | Method::GlDp);
    let trap = method == Method::Trap;
    let mc = matches!(method, Method::Mc | Method::McApprox);
    let misuse = [
        ("--n", p.n.is_some() && !gl),
        ("--k", p.k.is_some() && !trap),
        ("--eps-u", p.eps_u.is_some() && !trap),
        ("--samples", p.samples.is_some() && !mc),
        ("--seed", p.seed.is_some() && !mc),
    ];
    if let Some((flag, _)) = misuse.iter().find(|(_, bad)| *bad) {
        return Err(CliError::usage(format!("{flag} does not apply to --method {}", method_name(method))));
    }
    Ok(())
}

fn push_rows(
    out: &mut csv::Writer<Box<dyn Write>>,
    method: Method,
    cfg: &SystemConfig,
    snr_db: f64,
    eval: &Evaluation,
    no_timing: bool,
) -> CliResult {
    for &(m, bler, stderr, q_evals) in &eval.points {
        out.serialize(BlerRow {
            snr_db,
            m,
            method: method_name(method),
            bler,
            stderr,
            q_evals,
            wall_ms: if no_timing { 0.0 } else { eval.wall_ms },
            l: cfg.blocklength,
            r: cfg.rate,
            lambda: cfg.gain_mean,
            params: eval.params.clone(),
        })?;
    }
    Ok(())
}

pub fn bler(args: &BlerArgs) -> CliResult {
    check_params(args.method, &args.params)?;
    let mut out = writer(args.output.as_deref())?;
    for &snr in &args.snr_db {
        let cfg = link_config(&args.link, args.link.r, args.link.l, snr)?;
        let eval = evaluate(args.method, &cfg, &args.params, false)?;
        push_rows(&mut out, args.method, &cfg, snr, &eval, args.no_timing)?;
    }
    out.flush()?;
    Ok(())
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

pub fn sweep(args: &SweepArgs) -> CliResult {
    let mut out = writer(args.output.as_deref())?;
    let snrs = args.snr_db.clone().unwrap_or_else(|| match args.figure {
        Figure::BlerVsSnr => steps(0.0, 30.0, 2.5),
        Figure::BlerVsM => vec![5.0, 10.0, 15.0],
        Figure::BlerVsL => vec![10.0, 15.0, 20.0],
    });
    if args.l_values.is_some() && args.figure != Figure::BlerVsL {
        return Err(CliError::usage("--l-values applies to --figure bler-vs-l only"));
    }
    match args.figure {
        Figure::BlerVsSnr | Figure::BlerVsM => {
            for &snr in &snrs {
                let cfg = link_config(&args.link, args.link.r, args.link.l, snr)?;
                for &method in &args.methods {
                    let eval = evaluate(method, &cfg, &args.params, true)?;
                    push_rows(&mut out, method, &cfg, snr, &eval, args.no_timing)?;
                }
            }
        }
        Figure::BlerVsL => {
            let ls = args.l_values.clone().unwrap_or_else(|| steps(100.0, 400.0, 25.0));
            for &l in &ls {
                for &snr in &snrs {
                    let cfg = SystemConfig::from_info_bits(args.link.m, l, args.info_bits, args.link.lambda)?
                        .with_snr_db(&[snr])?;
                    for &method in &args.methods {
                        let eval = evaluate(method, &cfg, &args.params, false)?;
                        push_rows(&mut out, method, &cfg, snr, &eval, args.no_timing)?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn gl_nodes(n: usize) -> CliResult {
    let rule = gl_rule(n)?;
    let mut out = writer(None)?;
    out.write_record(["i", "node", "weight"])?;
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        out.write_record([(i + 1).to_string(), x.to_string(), w.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn complexity(ms: &[u32], ns: &[u32]) -> CliResult {
    let mut out = writer(None)?;
    out.write_record(["m", "n", "naive", "dp", "ratio"])?;
    for &m in ms {
        for &n in ns {
            if m == 0 || n == 0 {
                return Err(CliError::usage("--m and --n must be positive"));
            }
            let r = complexity_report(m, n);
            let show = |v: Option<u128>| v.map_or_else(String::new, |v| v.to_string());
            out.write_record([m.to_string(), n.to_string(), show(r.naive), show(r.dp), r.ratio.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GpRow {
    pbar_db: f64,
    m: usize,
    bler_max: f64,
    status: &'static str,
    powers_db: String,
    objective: Option<f64>,
    ltat_model: Option<f64>,
    ltat_gl_dp: Option<f64>,
    avg_power_gl_dp: Option<f64>,
    bler_gl_dp: Option<f64>,
    power_slack: Option<f64>,
    bler_slack: Option<f64>,
    kkt_residual: Option<f64>,
    note: String,
}

pub fn optimize_gp(args: &GpArgs) -> CliResult {
    let base = SystemConfig::new(args.link.m, args.link.l, args.link.r, args.link.lambda)?;
    let coeffs = asymptotic_coeffs(&base)?;
    let mut out = writer(args.output.as_deref())?;
    let mut solved = 0;
    for &pbar_db in &args.pbar_db {
        let cons = OptConstraints::new(db_to_linear(pbar_db), args.bler_max)?;
        let empty = |note: String| GpRow {
            pbar_db,
            m: base.max_rounds,
            bler_max: args.bler_max,
            status: "infeasible",
            powers_db: String::new(),
            objective: None,
            ltat_model: None,
            ltat_gl_dp: None,
            avg_power_gl_dp: None,
            bler_gl_dp: None,
            power_slack: None,
            bler_slack: None,
            kkt_residual: None,
            note,
        };
        let row = match solve_gp_with(&coeffs, &cons, base.noise_power, &GpOptions::default()) {
            Err(Error::Infeasible(inf)) => empty(inf.to_string()),
            Err(e) => return Err(e.into()),
            Ok(s) => {
                solved += 1;
                let eval = evaluate_policy(&s.policy, &base, &cons, Backend::GlDp { order: args.n })?;
                GpRow {
                    status: "ok",
                    powers_db: s.policy.powers.iter().map(|p| linear_to_db(*p).to_string()).collect::<Vec<_>>().join(";"),
                    objective: Some(s.objective),
                    ltat_model: Some(base.rate * (1.0 - s.bler) / (1.0 + s.objective)),
                    ltat_gl_dp: Some(eval.report.ltat),
                    avg_power_gl_dp: Some(eval.report.avg_power),
                    bler_gl_dp: Some(eval.report.bler_final),
                    power_slack: Some(s.power_slack),
                    bler_slack: Some(s.bler_slack),
                    kkt_residual: Some(s.kkt_residual),
                    ..empty(String::new())
                }
            }
        };
        out.serialize(row)?;
    }
    out.flush()?;
    if solved == 0 {
        return Err(CliError { code: 3, message: "no power budget admits a feasible allocation".into() });
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> CliResult {
    let policy = PowerPolicy::new(args.policy.clone())?;
    let cfg = SystemConfig::new(policy.len(), args.l, args.r, args.lambda)?;
    let report = simulate_episodes(&cfg, &policy, args.slots, args.seed)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

pub fn env_server(config: &Path) -> CliResult {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::usage(format!("{}: {e}", config.display())))?;
    let mut env = EnvFile::from_json(&text)?.build()?;
    serve(&mut env, io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}
