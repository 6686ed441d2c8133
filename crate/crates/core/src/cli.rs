//! Command-line surface of the `perfgen` binary.
//!
//! Exit codes: 0 on success, 1 on runtime failure (with a JSON error object
//! on stderr), 2 on usage errors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{
    cumulative_bound, excess_risk_bound, gen_gap_bound_rq1, gen_gap_i, gen_gap_ii,
    in_sample_shift_bound, perf_excess_risk_bound, radius_r, wald_upper, BoundReport,
    ComplexityForm,
};
use crate::error::{Error, Result};
use crate::logistic::{erm_fit, FitConfig};
use crate::model::{ConstantsProfile, DomainBox, EmpiricalDistribution};
use crate::rerm::run_rerm;
use crate::sweep::{run_sweep, write_csv, write_svg, SweepConfig};
use crate::synthetic::{gen_synthetic, SyntheticConfig};
use crate::transition::TransitionMap;
use crate::validate::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(
    name = "perfgen",
    version,
    about = "Performative prediction simulations and generalization bounds"
)]
struct Cli {
    /// RNG seed (overrides any seed in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Confidence parameter δ (overrides the profile).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Output path; stdout when absent (a directory for gen-data).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit regularized logistic regression to a CSV sample.
    Fit(FitArgs),
    /// Run repeated empirical risk minimization under a label-flip map.
    Rerm(RermArgs),
    /// Evaluate a bound.
    Bound(BoundArgs),
    /// ξ-sweep of the generalization-gap bound.
    Sweep(SweepArgs),
    /// Run a Monte Carlo validation suite.
    Validate(ValidateArgs),
    /// Write a synthetic population and sample.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV with header `y,x1,...,xk[,w]`.
    #[arg(long)]
    data: PathBuf,
    /// Domain box JSON; the unit box `{0,1} × [0,1]^k` by default.
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    reg_lambda: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct RermArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 1.0)]
    effectiveness: f64,
    #[arg(long, default_value_t = 2)]
    rounds: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Variant {
    Rq1,
    Rq1Corollary,
    Rq2,
    #[value(name = "gen-gap-1")]
    GenGap1,
    #[value(name = "gen-gap-2")]
    GenGap2,
    Cumulative,
    InSampleShift,
    Radius,
    Wald,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Form {
    Theorem,
    CaseStudy,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Rounds T.
    #[arg(long, default_value_t = 2)]
    t: usize,
    /// Last round T̃ of the cumulative bound.
    #[arg(long)]
    t_tilde: Option<usize>,
    /// Radius R of the gen-gap bounds; derived from (m, n) when absent.
    #[arg(long)]
    r: Option<f64>,
    /// Entropy-integral value (𝔠_∞ for gen-gap, 𝔠_{L2} otherwise).
    #[arg(long)]
    complexity: Option<f64>,
    /// Growth constant of gen-gap-2; the profile's `b_const` when absent.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, value_enum, default_value_t = Form::Theorem)]
    form: Form,
    /// Constants profile JSON (falls back to --config).
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Also write an SVG plot here.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Compute the realized gap on synthetic data.
    #[arg(long)]
    realized: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, value_parser = parse_suite)]
    suite: Suite,
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    Suite::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    pop_n: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ScalarJson {
    variant: &'static str,
    value: f64,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = ErrorJson {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&msg).unwrap_or_else(|_| e.to_string())
            );
            1
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.cmd {
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Rerm(a) => cmd_rerm(cli, a),
        Command::Bound(a) => cmd_bound(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Validate(a) => cmd_validate(cli, a),
        Command::GenData(a) => cmd_gen_data(cli, a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn output(cli: &Cli) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    let mut w = output(cli)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_data(a: &DataArgs) -> Result<EmpiricalDistribution> {
    let domain = match &a.domain {
        Some(p) => DomainBox::read_json(open(p)?)?,
        None => {
            let mut r = csv::Reader::from_reader(open(&a.data)?);
            let header = r.headers()?;
            let k = header.iter().filter(|h| h.starts_with('x')).count();
            if k == 0 {
                return Err(Error::InvalidArgument("CSV has no feature columns".into()));
            }
            DomainBox::unit(k)
        }
    };
    EmpiricalDistribution::read_csv(&domain, open(&a.data)?)
}

fn fit_config(cli: &Cli, a: &DataArgs) -> Result<FitConfig> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_reader(open(p)?)?,
        None => FitConfig::default(),
    };
    if let Some(v) = a.reg_lambda {
        cfg.reg_lambda = v;
    }
    if let Some(v) = a.grad_tol {
        cfg.grad_tol = v;
    }
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if a.no_intercept {
        cfg.fit_intercept = false;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<i32> {
    let dist = read_data(&a.data)?;
    let cfg = fit_config(cli, &a.data)?;
    let fit = erm_fit(&dist, &cfg)?;
    emit_json(cli, &fit.report(&cfg))?;
    Ok(0)
}

fn cmd_rerm(cli: &Cli, a: &RermArgs) -> Result<i32> {
    let dist = read_data(&a.data)?;
    let cfg = fit_config(cli, &a.data)?;
    let map = TransitionMap::TopXiLabelFlip {
        xi: a.xi,
        effectiveness: a.effectiveness,
        seed: cli.seed.unwrap_or(0),
    };
    map.validate()?;
    let trace = run_rerm(&dist, &map, a.rounds, &cfg)?;
    let mut w = output(cli)?;
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(0)
}

fn load_profile(cli: &Cli, a: &BoundArgs) -> Result<ConstantsProfile> {
    let path = a
        .profile
        .as_ref()
        .or(cli.config.as_ref())
        .ok_or_else(|| Error::InvalidArgument("this variant needs --profile".into()))?;
    let mut p = ConstantsProfile::read_json(open(path)?)?;
    if let Some(d) = cli.delta {
        p = p.with_delta(d);
        p.validate()?;
    }
    Ok(p)
}

fn need(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "missing {what}: pass --complexity or set it in the profile"
        ))
    })
}

fn cmd_bound(cli: &Cli, a: &BoundArgs) -> Result<i32> {
    let scalar = |variant: &'static str, value: f64| -> Result<i32> {
        match a.format {
            Format::Json => emit_json(cli, &ScalarJson { variant, value })?,
            Format::Csv => {
                let mut w = output(cli)?;
                writeln!(w, "variant,value\n{variant},{value}")?;
                w.flush()?;
            }
        }
        Ok(0)
    };
    if a.variant == Variant::Wald {
        let delta = match cli.delta {
            Some(d) => d,
            None => load_profile(cli, a)?.delta,
        };
        return scalar("wald", wald_upper(a.m, a.n, delta)?);
    }
    let p = load_profile(cli, a)?;
    let report: BoundReport = match a.variant {
        Variant::InSampleShift => {
            return scalar(
                "in_sample_shift",
                in_sample_shift_bound(p.eps_sens, a.t, a.m, a.n, p.p, p.d_z, p.l_a_tilde)?,
            )
        }
        Variant::Radius => {
            return scalar(
                "radius",
                radius_r(a.m, a.n, p.delta, p.p, p.d_z, p.l_a_tilde)?,
            )
        }
        Variant::Wald => unreachable!(),
        Variant::Rq1Corollary => gen_gap_bound_rq1(&p, a.t, a.m, a.n)?,
        Variant::Rq1 => excess_risk_bound(
            &p,
            a.t,
            a.m,
            a.n,
            need(a.complexity.or(p.complexity_l2), "complexity")?,
        )?,
        Variant::Rq2 => perf_excess_risk_bound(
            &p,
            a.t,
            a.m,
            a.n,
            need(a.complexity.or(p.complexity_l2), "complexity")?,
        )?,
        Variant::Cumulative => {
            let t_tilde = a.t_tilde.unwrap_or(a.t);
            cumulative_bound(
                &p,
                a.t,
                t_tilde,
                a.m,
                a.n,
                need(a.complexity.or(p.complexity_l2), "complexity")?,
            )?
        }
        Variant::GenGap1 | Variant::GenGap2 => {
            let r = match a.r {
                Some(r) => r,
                None => radius_r(a.m, a.n, p.delta, p.p, p.d_z, p.l_a_tilde)?,
            };
            let c = need(a.complexity.or(p.complexity_inf), "complexity")?;
            if a.variant == Variant::GenGap1 {
                let form = match a.form {
                    Form::Theorem => ComplexityForm::Theorem,
                    Form::CaseStudy => ComplexityForm::CaseStudy,
                };
                gen_gap_i(&p, a.n, r, c, form)?
            } else {
                gen_gap_ii(&p, a.n, r, c, a.b.unwrap_or(p.b_const))?
            }
        }
    };
    match a.format {
        Format::Json => emit_json(cli, &report)?,
        Format::Csv => {
            let mut w = output(cli)?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(0)
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<i32> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sweep needs --config".into()))?;
    let mut cfg = SweepConfig::read_json(open(path)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.delta {
        cfg.delta = d;
    }
    if a.realized {
        cfg.realized = true;
    }
    cfg.validate()?;
    let out = run_sweep(&cfg)?;
    for f in &out.failures {
        eprintln!("{}", serde_json::to_string(f)?);
    }
    let mut w = output(cli)?;
    write_csv(&out.rows, &mut w)?;
    w.flush()?;
    if let Some(svg) = &a.svg {
        write_svg(&out.rows, BufWriter::new(File::create(svg)?))?;
    }
    Ok(0)
}

fn cmd_validate(cli: &Cli, a: &ValidateArgs) -> Result<i32> {
    let report = run_suite(a.suite, cli.seed.unwrap_or(0))?;
    emit_json(cli, &report)?;
    Ok(if report.passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct GenDataSummary {
    population: PathBuf,
    sample: PathBuf,
    pop_n: usize,
    n: usize,
    prevalence: f64,
}

fn cmd_gen_data(cli: &Cli, a: &GenDataArgs) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_reader(open(p)?)?,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = a.pop_n {
        cfg.pop_n = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.features {
        cfg.n_features = v;
    }
    let (pop, sample) = gen_synthetic(&cfg, cli.seed.unwrap_or(0))?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let (pp, sp) = (dir.join("population.csv"), dir.join("sample.csv"));
    pop.write_csv(BufWriter::new(File::create(&pp)?))?;
    sample.write_csv(BufWriter::new(File::create(&sp)?))?;
    let prevalence = (0..pop.len()).map(|i| pop.label(i)).sum::<f64>() / pop.len() as f64;
    let summary = GenDataSummary {
        population: pp,
        sample: sp,
        pop_n: cfg.pop_n,
        n: cfg.n,
        prevalence,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}
