//! `eot` command-line front end.
//!
//! Every subcommand prints a human table (6 significant digits) on stdout and
//! optionally writes a machine-readable CSV (17 significant digits) to `--out`.
//! Exit codes: 0 success, 2 usage, 3 not converged, 4 IO or format error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eot_core::harness::{
    self, format_sig, load_config, with_threads, CoverageResult, ExperimentConfig, ExperimentKind, ExperimentOutput,
    OutputFormat, RateResult,
};
use eot_core::inference::{ci_one_sample, ci_two_sample, sinkhorn_divergence};
use eot_core::measures::load_measure;
use eot_core::sinkhorn::{self, entropic_cost};
use eot_core::{DiscreteMeasure, Error, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "eot", version, about = "Entropic optimal transport: solve, estimate, infer, simulate")]
struct Cli {
    /// Worker threads; 1 runs serially. Defaults to all cores.
    #[arg(long, global = true, env = "EOT_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the dual potentials; `--out` receives them.
    Solve(PairArgs),
    /// Entropic transport cost.
    Cost(PairArgs),
    /// Sinkhorn divergence and its three transport costs.
    Divergence(PairArgs),
    /// Confidence interval for the population cost.
    Ci(CiArgs),
    /// Interval coverage experiment from a config file.
    Coverage(ExperimentArgs),
    /// Convergence-rate experiment from a config file.
    Rate(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig::new(self.eps).with_tol(self.tol).with_max_iter(self.max_iter)
    }
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Measure file for P (`w,x1,...,xd`).
    #[arg(long = "p")]
    p: PathBuf,
    /// Measure file for Q.
    #[arg(long = "q")]
    q: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SampleMode {
    /// Q is the population; only P is sampled.
    One,
    /// Both files are samples.
    Two,
}

#[derive(Debug, Args)]
struct CiArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = SampleMode::Two)]
    sample: SampleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Plot,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Overrides the config's eps list with a single value.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let threads = cli.threads.map(|t| t as usize);
    let outcome = with_threads(threads, || execute(&cli.command)).and_then(|r| r);
    match outcome {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_IO,
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged(_) | Error::NotOptimal { .. } => EXIT_NOT_CONVERGED,
        Error::Io { .. }
        | Error::MalformedFile { .. }
        | Error::NonSimplexWeights { .. }
        | Error::EmptySupport
        | Error::DimensionMismatch { .. }
        | Error::InvalidConfig { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn sig6(x: f64) -> String {
    format_sig(x, 6)
}

fn sig17(x: f64) -> String {
    format_sig(x, 17)
}

/// Two-column human table.
fn table(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}

fn write_out(path: &Option<PathBuf>, contents: &str) -> eot_core::Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| Error::Io { path: p.clone(), source: e }),
        None => Ok(()),
    }
}

fn load_pair(args: &PairArgs) -> eot_core::Result<(DiscreteMeasure, DiscreteMeasure)> {
    let p = load_measure(&args.p)?;
    let q = load_measure(&args.q)?;
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    Ok((p, q))
}

fn execute(command: &Command) -> eot_core::Result<String> {
    match command {
        Command::Solve(args) => solve(args),
        Command::Cost(args) => cost(args),
        Command::Divergence(args) => divergence(args),
        Command::Ci(args) => ci(args),
        Command::Coverage(args) => experiment(args, Some(ExperimentKind::Coverage)),
        Command::Rate(args) => experiment(args, None),
    }
}

fn solve(args: &PairArgs) -> eot_core::Result<String> {
    let (p, q) = load_pair(args)?;
    let cfg = args.solver.config();
    let (pair, report) = sinkhorn::solve(&p, &q, &cfg)?;
    let value = sinkhorn::cost(&p, &q, &pair, cfg.tol)?;
    let mut csv = String::from("side,index,potential\n");
    for (side, values) in [("f", &pair.f), ("g", &pair.g)] {
        for (i, v) in values.iter().enumerate() {
            csv.push_str(&format!("{side},{i},{}\n", sig17(*v)));
        }
    }
    write_out(&args.out, &csv)?;
    Ok(table(&[
        ("cost", sig6(value)),
        ("eps", sig6(cfg.eps)),
        ("iterations", report.iterations.to_string()),
        ("residual", sig6(report.final_residual)),
        ("atoms", format!("{} x {}", p.len(), q.len())),
    ]))
}

fn cost(args: &PairArgs) -> eot_core::Result<String> {
    let (p, q) = load_pair(args)?;
    let cfg = args.solver.config();
    let (value, _) = entropic_cost(&p, &q, &cfg)?;
    write_out(&args.out, &format!("eps,cost\n{},{}\n", sig17(cfg.eps), sig17(value)))?;
    Ok(table(&[("cost", sig6(value)), ("eps", sig6(cfg.eps))]))
}

fn divergence(args: &PairArgs) -> eot_core::Result<String> {
    let (p, q) = load_pair(args)?;
    let cfg = args.solver.config();
    let d = sinkhorn_divergence(&p, &q, &cfg)?;
    let (pq, pp, qq) = d.parts;
    write_out(
        &args.out,
        &format!(
            "eps,divergence,cost_pq,cost_pp,cost_qq\n{},{},{},{},{}\n",
            sig17(d.eps),
            sig17(d.value),
            sig17(pq),
            sig17(pp),
            sig17(qq)
        ),
    )?;
    Ok(table(&[
        ("divergence", sig6(d.value)),
        ("cost(P,Q)", sig6(pq)),
        ("cost(P,P)", sig6(pp)),
        ("cost(Q,Q)", sig6(qq)),
        ("eps", sig6(d.eps)),
    ]))
}

fn ci(args: &CiArgs) -> eot_core::Result<String> {
    let (p, q) = load_pair(&args.pair)?;
    let cfg = args.pair.solver.config();
    let interval = match args.sample {
        SampleMode::One => ci_one_sample(&p, &q, &cfg, args.alpha)?,
        SampleMode::Two => ci_two_sample(&p, &q, &cfg, args.alpha)?,
    };
    let v = interval.variance;
    write_out(
        &args.pair.out,
        &format!(
            "center,half_width,lower,upper,level,variance,n,m\n{},{},{},{},{},{},{},{}\n",
            sig17(interval.center),
            sig17(interval.half_width),
            sig17(interval.lower()),
            sig17(interval.upper()),
            sig17(interval.level),
            sig17(v.value),
            v.n,
            v.m
        ),
    )?;
    Ok(table(&[
        ("center", sig6(interval.center)),
        ("half-width", sig6(interval.half_width)),
        ("lower", sig6(interval.lower())),
        ("upper", sig6(interval.upper())),
        ("level", sig6(interval.level)),
        ("variance", sig6(v.value)),
    ]))
}

fn experiment_config(args: &ExperimentArgs) -> eot_core::Result<ExperimentConfig> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(eps) = args.eps {
        cfg.eps_list = vec![eps];
    }
    if let Some(tol) = args.tol {
        cfg.solver = cfg.solver.with_tol(tol);
    }
    if let Some(max_iter) = args.max_iter {
        cfg.solver = cfg.solver.with_max_iter(max_iter);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(args: &ExperimentArgs, expect: Option<ExperimentKind>) -> eot_core::Result<String> {
    let cfg = experiment_config(args)?;
    match (expect, cfg.kind) {
        (Some(ExperimentKind::Coverage), ExperimentKind::Coverage) => {}
        (None, kind) if kind != ExperimentKind::Coverage => {}
        (_, kind) => {
            return Err(Error::InvalidArgument(format!("config kind {kind:?} does not match this subcommand")))
        }
    }
    let result = harness::run_experiment(&cfg)?;
    let format = match args.format {
        FormatArg::Csv => OutputFormat::CsvTable,
        FormatArg::Plot => OutputFormat::PlotData,
    };
    if let Some(path) = &args.out {
        harness::emit(&result, path, format)?;
    }
    Ok(match &result {
        ExperimentOutput::Coverage(c) => coverage_table(c),
        ExperimentOutput::Rate(r) => rate_table(r),
    })
}

fn coverage_table(c: &CoverageResult) -> String {
    let mut s = format!(
        "{:>3} {:>8} {:>6} {:>10} {:>10} {:>10} {:>8}\n",
        "d", "eps", "n", "coverage", "truth", "half-width", "excluded"
    );
    for cell in &c.cells {
        s.push_str(&format!(
            "{:>3} {:>8} {:>6} {:>10} {:>10} {:>10} {:>8}\n",
            cell.d,
            sig6(cell.eps),
            cell.n,
            sig6(cell.coverage),
            sig6(cell.truth),
            sig6(cell.mean_half_width),
            cell.excluded
        ));
    }
    s
}

fn rate_table(r: &RateResult) -> String {
    let mut s = String::new();
    for c in &r.curves {
        s.push_str(&format!("{} (d={}, eps={})\n", c.label, c.d, sig6(c.eps)));
        s.push_str(&format!("{:>8} {:>12} {:>12} {:>8}\n", "n", "mean", "sd", "excluded"));
        for p in &c.points {
            s.push_str(&format!("{:>8} {:>12} {:>12} {:>8}\n", p.n, sig6(p.mean), sig6(p.sd), p.excluded));
        }
        match c.fit {
            Some(f) => s.push_str(&format!("slope {} (se {})\n\n", sig6(f.slope), sig6(f.slope_se))),
            None => s.push_str("slope n/a\n\n"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_keys() {
        assert_eq!(table(&[("a", "1".into()), ("long", "2".into())]), "a     1\nlong  2\n");
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::EmptySupport), EXIT_IO);
        assert_eq!(exit_code(&Error::InvalidConfig { line: 3, reason: "x".into() }), EXIT_IO);
        assert_eq!(exit_code(&Error::NotOptimal { residual: 1.0, limit: 0.1 }), EXIT_NOT_CONVERGED);
        assert_eq!(exit_code(&Error::NonPositiveEps(0.0)), EXIT_USAGE);
        assert_eq!(exit_code(&Error::OutOfRange { name: "alpha", value: 2.0 }), EXIT_USAGE);
    }

    #[test]
    fn parser_accepts_spec_flags() {
        let cli = Cli::try_parse_from([
            "eot",
            "rate",
            "--config",
            "c.txt",
            "--format",
            "plot",
            "--seed",
            "4",
            "--threads",
            "2",
        ])
        .unwrap();
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Rate(a) => assert_eq!((a.format, a.seed), (FormatArg::Plot, Some(4))),
            other => panic!("{other:?}"),
        }
    }
}
