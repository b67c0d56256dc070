//! `evglm`: Fisher information queries, link tables, regularity checks,
//! time-series simulation and model fitting.
//!
//! Exit codes: 0 success or all checks pass, 1 a check failed or the fit did
//! not converge, 2 usage, parse or input errors.

mod data;
mod schema;
mod specfile;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evglm::diagnostics::{
    check_cond_ii, check_cond_iii, check_feller, check_info_cont_det, check_lindeberg, check_remainder_rate,
};
use evglm::glm::PastFamily;
use evglm::link::{emit_link_table, write_link_table_csv};
use evglm::ts::{simulate_with_summary, TsSummary};
use evglm::{
    default_start, fisher_scoring_fit, CheckConfig, ConditionId, ConditionReport, ErrorFamily, FitConfig, ScalarLink,
    TsConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::specfile::{Carrier, ModelSpecFile};

#[derive(Parser)]
#[command(name = "evglm", version, about = "GLMs with extreme-value error families")]
struct Cli {
    /// Print the JSON schema of a command's output and exit.
    #[arg(long, value_name = "NAME", value_enum)]
    json_schema: Option<schema::SchemaName>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form Fisher information of an error family.
    Info(InfoArgs),
    /// Tabulate a scalar link and its derivative as CSV.
    LinkTable(LinkTableArgs),
    /// Run regularity checks on a model spec file.
    Check(CheckArgs),
    /// Simulate the extreme-value time series.
    Simulate(SimulateArgs),
    /// Fit a model spec to a data CSV by Fisher scoring.
    Fit(FitArgs),
    /// Validate a spec file and print it in canonical form.
    SpecFmt {
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gevd,
    Gpd,
    Poisson,
    Binomial,
    GaussLoc,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct InfoArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1)]
    m: u32,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sd: f64,
}

#[derive(Args)]
struct LinkTableArgs {
    #[arg(long)]
    link: ScalarLink,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Comma-separated subset of remainder, cond_ii, cond_iii, lindeberg,
    /// feller, info_cont_det. Defaults to every condition the carrier supports.
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<ConditionId>,
    /// Full checker configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    t_grid: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "gevd")]
    family: PastFamilyArg,
    #[arg(long = "T", default_value_t = 1000)]
    length: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    beta_sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    beta_xi: Vec<f64>,
    #[arg(long, default_value = "log")]
    scale_link: ScalarLink,
    #[arg(long, default_value = "shape_gevd_shifted")]
    shape_link: ScalarLink,
    /// Starting values x₋₁, x₋₂, …
    #[arg(long, value_delimiter = ',')]
    start: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    x_min: f64,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Quantile defining exceedances for the cluster summary.
    #[arg(long, default_value_t = 0.95)]
    cluster_u: f64,
    #[arg(long)]
    no_negative_xi_warning: bool,
    /// CSV destination; without it the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PastFamilyArg {
    Gevd,
    Gpd,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    start: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    body: serde_json::Value,
}

impl Failure {
    fn usage(kind: &str, message: impl ToString) -> Self {
        Self { code: 2, body: json!({ "error": kind, "message": message.to_string() }) }
    }

    fn lib(e: evglm::Error) -> Self {
        use evglm::Error::*;
        let code = match e {
            Singularity { .. } | SingularMatrix { .. } | NoConvergence(_) | AtStep { .. } | AtRegressor { .. } => 1,
            _ => 2,
        };
        Self { code, body: json!({ "error": error_kind(&e), "message": e.to_string() }) }
    }
}

fn error_kind(e: &evglm::Error) -> &'static str {
    use evglm::Error::*;
    match e {
        DimensionMismatch { .. } => "dimension_mismatch",
        InvalidPartition(_) => "invalid_partition",
        Domain { .. } => "domain",
        Singularity { .. } => "singularity",
        OutsideSupport { .. } => "outside_support",
        InvalidProbability(_) => "invalid_probability",
        NanInput(_) => "nan_input",
        SingularMatrix { .. } => "singular_matrix",
        NoConvergence(_) => "no_convergence",
        InvalidConfig(_) => "invalid_config",
        Io(_) => "io",
        AtRegressor { .. } => "at_regressor",
        AtStep { .. } => "at_step",
    }
}

impl From<evglm::Error> for Failure {
    fn from(e: evglm::Error) -> Self {
        Failure::lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage("io", e)
    }
}

type Outcome = Result<u8, Failure>;

fn print_json<T: Serialize>(value: &T) -> io::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

fn read_spec(path: &PathBuf) -> Result<ModelSpecFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage("io", format!("{}: {e}", path.display())))?;
    ModelSpecFile::parse(&text).map_err(|e| Failure {
        code: 2,
        body: json!({ "error": "parse", "file": path.display().to_string(), "line": e.line, "message": e.to_string() }),
    })
}

#[derive(Serialize)]
struct InfoOutput {
    family: &'static str,
    theta: Vec<f64>,
    fisher: Vec<Vec<f64>>,
}

fn cmd_info(a: InfoArgs) -> Outcome {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::usage("usage", format!("--{name} is required")));
    let (family, theta) = match a.family {
        FamilyArg::Gevd => (ErrorFamily::Gevd, vec![need(a.sigma, "sigma")?, need(a.xi, "xi")?]),
        FamilyArg::Gpd => (ErrorFamily::Gpd, vec![need(a.sigma, "sigma")?, need(a.xi, "xi")?]),
        FamilyArg::Poisson => (ErrorFamily::Poisson, vec![need(a.lambda, "lambda")?]),
        FamilyArg::Binomial => (ErrorFamily::Binomial { m: a.m }, vec![need(a.p, "p")?]),
        FamilyArg::GaussLoc => (ErrorFamily::GaussLoc { sd: a.sd }, vec![need(a.mu, "mu")?]),
    };
    let fisher = family.fisher_info_at(&theta)?;
    print_json(&InfoOutput { family: family.name(), theta, fisher: fisher.to_rows() })?;
    Ok(0)
}

fn cmd_link_table(a: LinkTableArgs) -> Outcome {
    if a.points < 2 || a.from.partial_cmp(&a.to) != Some(std::cmp::Ordering::Less) {
        return Err(Failure::usage("usage", "need --points ≥ 2 and --to > --from"));
    }
    let grid: Vec<f64> =
        (0..a.points).map(|i| a.from + (a.to - a.from) * i as f64 / (a.points - 1) as f64).collect();
    let rows = emit_link_table(a.link, &grid)?;
    match a.out {
        Some(path) => write_link_table_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_link_table_csv(&rows, io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_check(a: CheckArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<CheckConfig>(&text)
                .map_err(|e| Failure::usage("parse", format!("{}: {e}", path.display())))?
        }
        None => CheckConfig::default(),
    };
    if let Some(n) = &spec.n_ladder {
        cfg.n_ladder = n.clone();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.b {
        cfg.b = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.n_draws {
        cfg.n_draws = v;
    }
    if let Some(v) = a.t_grid {
        cfg.t_grid = v;
    }
    cfg.validate()?;
    let glm = spec.glm();
    let carrier = spec
        .carrier
        .as_ref()
        .ok_or_else(|| Failure::usage("usage", "the spec file has no carrier (regressors, points or design)"))?;
    let conditions = if a.conditions.is_empty() {
        match carrier {
            Carrier::Sampler(_) => vec![ConditionId::Remainder, ConditionId::CondIi, ConditionId::CondIii],
            Carrier::Design(_) => {
                vec![ConditionId::Remainder, ConditionId::Feller, ConditionId::Lindeberg, ConditionId::InfoContDet]
            }
        }
    } else {
        a.conditions.clone()
    };
    let mut reports: Vec<ConditionReport> = Vec::with_capacity(conditions.len());
    for c in conditions {
        let report = match (c, carrier) {
            (ConditionId::Remainder, _) => {
                // the remainder is a family property; evaluate it at the ϑ of
                // the first regressor the carrier produces
                let x: Vec<f64> = match carrier {
                    Carrier::Sampler(s) => s.draw(&mut evglm::mc::stream_rng(cfg.seed, u64::MAX)),
                    Carrier::Design(d) => d.design::<f64>(cfg.n_ladder[0])?.rows()[0].clone(),
                };
                let theta = glm.theta_at(&spec.beta, &x)?;
                let mut r = check_remainder_rate(glm.family(), &theta, &cfg)?;
                r.assumptions.push(format!("evaluated at theta = {:?} from x = {x:?}", theta.to_f64()));
                r
            }
            (ConditionId::CondIi, Carrier::Sampler(s)) => check_cond_ii(&glm, &spec.beta, s, &cfg)?,
            (ConditionId::CondIii, Carrier::Sampler(s)) => check_cond_iii(&glm, &spec.beta, s, &cfg)?,
            (ConditionId::Feller, Carrier::Design(d)) => check_feller(&glm, &spec.beta, d, &cfg)?,
            (ConditionId::Lindeberg, Carrier::Design(d)) => check_lindeberg(&glm, &spec.beta, d, &cfg)?,
            (ConditionId::InfoContDet, Carrier::Design(d)) => check_info_cont_det(&glm, &spec.beta, d, &cfg)?,
            (c, _) => {
                return Err(Failure::usage(
                    "usage",
                    format!("condition {} does not apply to this carrier", c.name()),
                ))
            }
        };
        reports.push(report);
    }
    print_json(&reports)?;
    Ok(if reports.iter().all(ConditionReport::passed) { 0 } else { 1 })
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    csv: Option<String>,
    config: &'a TsConfig,
    summary: TsSummary,
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let cfg = TsConfig {
        family: match a.family {
            PastFamilyArg::Gevd => PastFamily::Gevd,
            PastFamilyArg::Gpd => PastFamily::Gpd,
        },
        beta_sigma: a.beta_sigma,
        beta_xi: a.beta_xi,
        scale_link: a.scale_link,
        shape_link: a.shape_link,
        start: a.start,
        length: a.length,
        x_min: a.x_min,
        seed: a.seed,
        burn_in: a.burn_in,
        warn_negative_xi: !a.no_negative_xi_warning,
    };
    let (series, summary) = simulate_with_summary(&cfg, a.cluster_u)?;
    let output = SimulateOutput { csv: a.out.as_ref().map(|p| p.display().to_string()), config: &cfg, summary };
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            series.write_csv(&mut w)?;
            w.flush()?;
            print_json(&output)?;
        }
        None => {
            series.write_csv(BufWriter::new(io::stdout().lock()))?;
            let mut err = io::stderr().lock();
            serde_json::to_writer_pretty(&mut err, &output).map_err(io::Error::from)?;
            writeln!(err)?;
        }
    }
    Ok(0)
}

fn cmd_fit(a: FitArgs) -> Outcome {
    let spec = read_spec(&a.spec)?;
    let glm = spec.glm();
    let (xs, ys) = data::read_data(&a.data, glm.p()).map_err(|e| Failure::usage("data", e))?;
    let start = if a.start.is_empty() {
        default_start(&glm, &xs, &ys)?
    } else if a.start.len() == glm.p() {
        a.start
    } else {
        return Err(Failure::usage("usage", format!("--start needs {} values", glm.p())));
    };
    let cfg = FitConfig { tol_score: a.tol, max_iter: a.max_iter, ..FitConfig::default() };
    let fit = fisher_scoring_fit(&glm, &xs, &ys, &start, &cfg)?;
    print_json(&fit)?;
    Ok(if fit.converged { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    evglm::mc::init_threads_from_env();
    if let Some(name) = cli.json_schema {
        print!("{}", schema::text(name));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Info(a) => cmd_info(a),
        Command::LinkTable(a) => cmd_link_table(a),
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::SpecFmt { spec } => read_spec(&spec).map(|s| {
            print!("{}", s.to_text());
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f.body).unwrap_or_else(|_| f.body.to_string()));
            ExitCode::from(f.code)
        }
    }
}
