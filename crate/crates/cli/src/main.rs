//! `dpq`: bounds, scheme evaluation, sweeps and self-tests.
//!
//! Exit codes: 0 success, 2 usage error, 3 bound check failed, 4 numerical
//! or I/O failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod parse;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpq_core::bounds::{discrete_dp_rdf_at, independent_cost, CostTable, RdPoint};
use dpq_core::harness::{
    compare_to_bound, evaluate, gaussian_curve, rd_sweep, self_test, write_comments,
    write_curve_csv, write_reports_csv, BoundCurve, CurveRow,
};
use dpq_core::prob::Family;
use dpq_core::schemes::DpqScheme;
use dpq_core::Error;

use config::{Format, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dpq",
    version,
    about = "Distribution-preserving quantization toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` file; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Source law, e.g. `gaussian:var=1`, `laplace:scale=1`, `pmf:0.5,0.5`.
    #[arg(long, global = true)]
    source: Option<String>,

    /// Distortion measure for pmf sources: hamming, squared or absolute.
    #[arg(long, global = true)]
    cost: Option<String>,

    /// Distortion grid, `lo:hi:count` or a comma-separated list.
    #[arg(long, global = true)]
    dgrid: Option<String>,

    /// Rate units for bound curves.
    #[arg(long, global = true, value_parser = ["nats", "bits"])]
    units: Option<String>,

    /// Scheme: simple, resample:step=D, transform, awgn:eta2=V.
    #[arg(long, global = true)]
    scheme: Option<String>,

    /// Lattice for the transform scheme: cube:step=D[,dim=k] or hex:scale=S.
    #[arg(long, global = true)]
    lattice: Option<String>,

    /// Number of source blocks.
    #[arg(short = 'n', long = "n", global = true)]
    n: Option<usize>,

    /// Seed (default: $DPQ_SEED, then 1).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (default: stdout).
    #[arg(long, short = 'o', global = true)]
    output: Option<std::path::PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,

    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// DP-RDF, RDF, SLB and sandwich bounds over a distortion grid.
    Bounds,
    /// Evaluate one scheme.
    Eval {
        /// Exit with status 3 if the measured point lies below the DP-RDF.
        #[arg(long)]
        check_bound: bool,
    },
    /// Evaluate a scheme over a grid of its parameter.
    Sweep {
        /// Parameter grid: step (resample), lattice size (transform) or η²
        /// (awgn); `lo:hi:count` or a comma-separated list.
        #[arg(long)]
        grid: Option<String>,
        /// Exit with status 3 if any point lies below the DP-RDF.
        #[arg(long)]
        check_bound: bool,
    },
    /// Quick built-in consistency checks.
    Selftest,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Bound(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Bound(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<parse::ParseError> for Failure {
    fn from(e: parse::ParseError) -> Self {
        Self::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::Unsupported { .. }
            | Error::DimensionMismatch { .. } => Self::Usage(e.to_string()),
            Error::SampleTooSmall { .. } | Error::InfeasibleDistortion { .. } => {
                Self::Usage(e.to_string())
            }
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Numerical(format!("I/O error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) => format!("usage error: {m}"),
                Failure::Bound(m) => format!("bound check failed: {m}"),
                Failure::Numerical(m) => format!("error: {m}"),
            };
            eprintln!("dpq: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(&cli)?;
    let mut out: Box<dyn Write> = match &cfg.output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let result = match &cli.command {
        Command::Bounds => cmd_bounds(&cfg, &mut out),
        Command::Eval { check_bound } => cmd_eval(&cfg, *check_bound, &mut out),
        Command::Sweep { check_bound, .. } => cmd_sweep(&cfg, *check_bound, &mut out),
        Command::Selftest => cmd_selftest(&cfg, &mut out),
    };
    out.flush()?;
    result
}

fn cmd_bounds(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let model = cfg.source()?;
    write_comments(out, &cfg.echo())?;
    let rows: Vec<CurveRow> = match model.family() {
        Family::Gaussian { variance, .. } => {
            let grid = match &cfg.dgrid {
                Some(g) => parse::parse_grid(g)?,
                None => parse::parse_grid(&format!("{}:{}:200", 0.01 * variance, 2.0 * variance))?,
            };
            gaussian_curve(&model, &grid)?
        }
        Family::DiscretePmf { probs } => {
            let cost = parse::parse_cost(cfg.cost.as_deref().unwrap_or("hamming"), probs.len())?;
            let points = match &cfg.dgrid {
                Some(g) => parse::parse_grid(g)?
                    .into_iter()
                    .map(|d| discrete_dp_rdf_at(probs, &cost, d))
                    .collect::<Result<Vec<_>, _>>()?,
                None => default_discrete_curve(probs, &cost)?,
            };
            let mut rows: Vec<CurveRow> = points
                .into_iter()
                .map(|p| CurveRow {
                    distortion: p.distortion,
                    dp_rdf: p.rate.max(0.0),
                    source: model.label(),
                    rdf: None,
                    slb: None,
                    sandwich_lower: None,
                    sandwich_upper: None,
                })
                .collect();
            rows.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
            rows
        }
        _ => {
            return Err(Failure::Usage(format!(
                "bounds need a Gaussian or pmf source, got {}",
                model.label()
            )))
        }
    };
    write_curve_csv(out, &rows, cfg.units)?;
    Ok(())
}

/// `D_max·k/100` for `k = 1..=100`, where `D_max` is the cost of the
/// independent coupling; levels below the smallest achievable distortion are
/// skipped.
fn default_discrete_curve(probs: &[f64], cost: &CostTable) -> Result<Vec<RdPoint>, Failure> {
    let d_max = independent_cost(probs, cost);
    let mut points = Vec::new();
    for k in 1..=100 {
        match discrete_dp_rdf_at(probs, cost, d_max * k as f64 / 100.0) {
            Ok(p) => points.push(p),
            Err(Error::InfeasibleDistortion { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(points)
}

fn build_scheme(cfg: &RunConfig, param: Option<f64>) -> Result<DpqScheme, Failure> {
    let kind = parse::parse_scheme(&cfg.scheme()?, cfg.lattice.as_deref(), param)?;
    Ok(DpqScheme::new(kind, cfg.source()?, cfg.seed)?)
}

fn check_verdicts(
    reports: &[dpq_core::harness::EvalReport],
    bound: &BoundCurve,
) -> Result<(), Failure> {
    for r in reports {
        let v = compare_to_bound(r, bound)?;
        if !v.above_bound {
            return Err(Failure::Bound(format!(
                "{} {}: rate {} < DP-RDF {} at mse {} (margin {}, se {})",
                r.scheme, r.param, r.rate_nats, v.bound_nats, r.mse, v.margin_nats, v.se_nats
            )));
        }
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, check_bound: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let scheme = build_scheme(cfg, None)?;
    let bound = BoundCurve::for_source(scheme.source()).ok();
    if check_bound && bound.is_none() {
        return Err(Failure::Usage(format!(
            "no DP-RDF available for source {}",
            scheme.source().label()
        )));
    }
    let report = evaluate(&scheme, cfg.n, cfg.seed, cfg.workers)?;
    match cfg.format {
        Format::Csv => {
            write_comments(out, &cfg.echo())?;
            write_reports_csv(out, std::slice::from_ref(&report), bound.as_ref())?;
        }
        Format::Json => {
            let verdict = bound
                .as_ref()
                .map(|b| compare_to_bound(&report, b))
                .transpose()?;
            let doc = serde_json::json!({ "config": cfg.echo_map(), "report": report, "verdict": verdict });
            serde_json::to_writer_pretty(&mut *out, &doc)
                .map_err(|e| Failure::Numerical(e.to_string()))?;
            writeln!(out)?;
        }
    }
    if check_bound {
        check_verdicts(
            std::slice::from_ref(&report),
            bound.as_ref().expect("checked above"),
        )?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, check_bound: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let grid = match &cfg.grid {
        Some(g) => parse::parse_grid(g)?,
        None => return Err(Failure::Usage("sweep needs --grid".into())),
    };
    let schemes = grid
        .iter()
        .map(|&p| build_scheme(cfg, Some(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let bound = BoundCurve::for_source(schemes[0].source()).ok();
    if check_bound && bound.is_none() {
        return Err(Failure::Usage(format!(
            "no DP-RDF available for source {}",
            schemes[0].source().label()
        )));
    }
    let outcome = rd_sweep(&schemes, cfg.n, cfg.seed, cfg.workers)?;
    // whatever was measured is written even if a later point failed
    match cfg.format {
        Format::Csv => {
            write_comments(out, &cfg.echo())?;
            write_reports_csv(out, &outcome.reports, bound.as_ref())?;
        }
        Format::Json => {
            let doc = serde_json::json!({ "config": cfg.echo_map(), "reports": outcome.reports });
            serde_json::to_writer_pretty(&mut *out, &doc)
                .map_err(|e| Failure::Numerical(e.to_string()))?;
            writeln!(out)?;
        }
    }
    if let Some((i, e)) = outcome.failure {
        let mut f = Failure::from(e);
        if let Failure::Usage(m) | Failure::Numerical(m) = &mut f {
            *m = format!("grid point {} ({}): {m}", i, grid[i]);
        }
        return Err(f);
    }
    if check_bound {
        check_verdicts(&outcome.reports, bound.as_ref().expect("checked above"))?;
    }
    Ok(())
}

fn cmd_selftest(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let items = self_test(cfg.seed, cfg.workers);
    let mut failed = 0;
    for it in &items {
        writeln!(
            out,
            "{} {} ({})",
            if it.pass { "PASS" } else { "FAIL" },
            it.name,
            it.detail
        )?;
        failed += usize::from(!it.pass);
    }
    if failed > 0 {
        return Err(Failure::Numerical(format!(
            "{failed} of {} self-tests failed",
            items.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn error_classes() {
        assert_eq!(Failure::from(Error::InvalidParameter("x".into())).code(), 2);
        assert_eq!(
            Failure::from(Error::NoConvergence {
                iterations: 1,
                residual: 1.0
            })
            .code(),
            4
        );
    }
}
