//! Command-line front end for the step-size controller workbench.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rk_stepsize::control::{ControllerKind, ParamSet, ParamTriple};
use rk_stepsize::problems::{self, C5Data, Registry, ALL_IDS};
use rk_stepsize::tuner::{tune, TuneSpec};
use rk_stepsize::workbench::{
    compare, curves_to_csv, default_targets, parse_log_range, sweep_suite, ControllerSpec,
};
use rk_stepsize::{global_error, integrate, Error, IntegrationLimits};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rk-stepsize", version, about = "Embedded Runge-Kutta step-size controller workbench")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// C5 planetary data file (checksum expected in FILE.sha256).
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "allow_unverified_c5")]
    c5_data: Option<PathBuf>,

    /// Serve C5 from the bundled, unverified data file.
    #[arg(long, global = true)]
    allow_unverified_c5: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the problems and the two groups.
    List,
    /// Integrate one problem at one tolerance.
    Integrate(IntegrateArgs),
    /// Sweep tolerances and write a work-precision CSV.
    Wp(WpArgs),
    /// Compare two controllers at fixed global errors.
    Compare(CompareArgs),
    /// Tune sigma, lambda1 and lambda2.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ControllerArgs {
    /// Controller: new or standard.
    #[arg(long, default_value = "new")]
    controller: String,
    /// Named parameter set: new-opt, std-opt or std-rec.
    #[arg(long, conflicts_with_all = ["sigma", "lambda1", "lambda2"])]
    params: Option<String>,
    #[arg(long, requires_all = ["lambda1", "lambda2"])]
    sigma: Option<f64>,
    #[arg(long, requires_all = ["sigma", "lambda2"])]
    lambda1: Option<f64>,
    #[arg(long, requires_all = ["sigma", "lambda1"])]
    lambda2: Option<f64>,
}

impl ControllerArgs {
    fn spec(&self) -> Result<ControllerSpec, Error> {
        let kind: ControllerKind = self.controller.parse()?;
        if let (Some(s), Some(l1), Some(l2)) = (self.sigma, self.lambda1, self.lambda2) {
            let triple = ParamTriple::new(s, l1, l2);
            triple.validate()?;
            return Ok(ControllerSpec::explicit(kind, triple));
        }
        let set = match &self.params {
            Some(id) => id.parse()?,
            None => match kind {
                ControllerKind::New => ParamSet::NewOptimized,
                ControllerKind::Standard => ParamSet::StandardRecommended,
            },
        };
        Ok(ControllerSpec::named(kind, set))
    }
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    #[arg(long)]
    problem: String,
    #[command(flatten)]
    controller: ControllerArgs,
    #[arg(long)]
    tau: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, Args)]
struct WpArgs {
    /// Problem id, comma list, or group1/group2/all.
    #[arg(long)]
    problem: String,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Tolerance grid, e.g. 1e-2..1e-12:21.
    #[arg(long, default_value = "1e-2..1e-12:21")]
    taus: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Problem suite: group1, group2, all, or a comma list.
    #[arg(long, default_value = "group2")]
    suite: String,
    /// Controller a, e.g. new:new-opt or standard:1.2/0.5/2.
    #[arg(long, default_value = "new:new-opt")]
    a: String,
    #[arg(long, default_value = "standard:std-rec")]
    b: String,
    #[arg(long, default_value = "1e-3..1e-8")]
    targets: String,
    #[arg(long, default_value = "1e-2..1e-12:21")]
    taus: String,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long, default_value = "new")]
    controller: String,
    #[arg(long, default_value = "group1")]
    suite: String,
    /// Starting point: a parameter set id or sigma/lambda1/lambda2.
    #[arg(long, default_value = "std-rec")]
    start: String,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, default_value = "1e-4..1e-7")]
    targets: String,
    #[arg(long, default_value = "1e-2..1e-12:21")]
    taus: String,
    /// Write the evaluation trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::UnknownProblem { .. }
            | Error::Parse(_)
            | Error::InvalidParams(_)
            | Error::Unsupported { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

/// Runs the CLI with `argv` (including the program name). Returns the exit code.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };

    let result = (|| -> CliResult {
        let registry = registry(&cli)?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.jobs {
            if n == 0 {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
        let (mut obuf, mut ebuf) = (Vec::new(), Vec::new());
        let result = pool.install(|| dispatch(&cli.command, &registry, &mut obuf, &mut ebuf));
        out.write_all(&obuf)?;
        err.write_all(&ebuf)?;
        result
    })();

    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn registry(cli: &Cli) -> Result<Registry, Failure> {
    if let Some(path) = &cli.c5_data {
        return Ok(Registry::with_c5(C5Data::from_file(path)?));
    }
    if cli.allow_unverified_c5 {
        return Ok(Registry::with_c5(C5Data::bundled()?));
    }
    Ok(Registry::new())
}

fn dispatch(command: &Command, registry: &Registry, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match command {
        Command::List => list(registry, out),
        Command::Integrate(args) => run_integrate(args, registry, out),
        Command::Wp(args) => run_wp(args, registry, out, err),
        Command::Compare(args) => run_compare(args, registry, out, err),
        Command::Tune(args) => run_tune(args, registry, out, err),
    }
}

fn write_output(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn suite(registry: &Registry, spec: &str, err: &mut dyn Write) -> Result<Vec<String>, Failure> {
    let (kept, dropped) = registry.resolve_suite(spec)?;
    if !dropped.is_empty() {
        writeln!(
            err,
            "note: {} excluded (no verified data file); suite has {} problems",
            dropped.join(", "),
            kept.len()
        )?;
    }
    if kept.is_empty() {
        return Err(Failure::Usage("problem suite is empty".into()));
    }
    Ok(kept)
}

fn list(registry: &Registry, out: &mut dyn Write) -> CliResult {
    let groups = problems::groups();
    writeln!(out, "{:<4} {:>4}  {:<5}  reference", "id", "dim", "group")?;
    for id in ALL_IDS {
        let group = if groups.group1.contains(&id) { "I" } else { "II" };
        let (dim, reference) = match registry.get::<f64>(id) {
            Ok(p) => (
                p.dim.to_string(),
                if p.has_exact() { "closed form" } else { "integrated" },
            ),
            Err(_) => ("30".to_string(), "unavailable (unverified data)"),
        };
        writeln!(out, "{id:<4} {dim:>4}  {group:<5}  {reference}")?;
    }
    writeln!(out, "group I:  {}", groups.group1.join(" "))?;
    writeln!(out, "group II: {}", groups.group2.join(" "))?;
    Ok(())
}

fn run_integrate(args: &IntegrateArgs, registry: &Registry, out: &mut dyn Write) -> CliResult {
    let spec = args.controller.spec()?;
    let problem = registry.get::<f64>(&args.problem)?;
    let params = spec.at_tau(args.tau)?;
    let stats = integrate(&problem, &params, &IntegrationLimits::default())?;
    let gerr = global_error(&problem, &stats)?;
    let label = spec.label();
    match args.format {
        Format::Table => {
            writeln!(out, "problem       {}", problem.id)?;
            writeln!(out, "controller    {label}")?;
            writeln!(out, "tau           {:e}", args.tau)?;
            writeln!(out, "n_fevals      {}", stats.n_fevals)?;
            writeln!(out, "n_accepted    {}", stats.n_accepted)?;
            writeln!(out, "n_rejected    {}", stats.n_rejected)?;
            writeln!(out, "t_final       {}", stats.t_final)?;
            writeln!(out, "global_error  {gerr:e}")?;
        }
        Format::Csv => {
            writeln!(out, "problem,controller,tau,global_error,n_fevals,n_accepted,n_rejected")?;
            writeln!(
                out,
                "{},{label},{:e},{gerr:e},{},{},{}",
                problem.id, args.tau, stats.n_fevals, stats.n_accepted, stats.n_rejected
            )?;
        }
        Format::Json => {
            let value = serde_json::json!({
                "problem": problem.id,
                "controller": label,
                "tau": args.tau,
                "n_fevals": stats.n_fevals,
                "n_accepted": stats.n_accepted,
                "n_rejected": stats.n_rejected,
                "t_final": stats.t_final,
                "y_final": stats.y_final,
                "global_error": gerr,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&value).expect("json"))?;
        }
    }
    Ok(())
}

fn run_wp(args: &WpArgs, registry: &Registry, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let spec = args.controller.spec()?;
    let ids = suite(registry, &args.problem, err)?;
    let grid = parse_log_range(&args.taus)?;
    let curves = sweep_suite(registry, &ids, &spec, &grid)?;
    for (id, curve) in ids.iter().zip(&curves) {
        match curve {
            None => writeln!(err, "note: {id}: no successful run")?,
            Some(c) => {
                for gap in &c.gaps {
                    writeln!(err, "note: {id} tau={:e}: {}", gap.tau, gap.reason)?;
                }
            }
        }
    }
    write_output(&args.output, &curves_to_csv(curves.iter().flatten()), out)
}

fn run_compare(args: &CompareArgs, registry: &Registry, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let a: ControllerSpec = args.a.parse()?;
    let b: ControllerSpec = args.b.parse()?;
    let ids = suite(registry, &args.suite, err)?;
    let targets = parse_log_range(&args.targets)?;
    let grid = parse_log_range(&args.taus)?;
    let table = compare(registry, &ids, &a, &b, &targets, &grid)?;
    let text = match args.format {
        Format::Table => table.to_text(),
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json() + "\n",
    };
    write_output(&args.output, &text, out)
}

fn run_tune(args: &TuneArgs, registry: &Registry, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let kind: ControllerKind = args.controller.parse()?;
    let ids = suite(registry, &args.suite, err)?;
    let mut spec = TuneSpec::new(kind, ids);
    spec.start = match args.start.parse::<ParamSet>() {
        Ok(set) => set.triple(),
        Err(_) => {
            let parsed: ControllerSpec = format!("{kind}:{}", args.start).parse()?;
            parsed.params
        }
    };
    spec.budget = args.budget;
    spec.targets = parse_log_range(&args.targets)?;
    spec.tau_grid = parse_log_range(&args.taus)?;
    if spec.targets.is_empty() {
        spec.targets = default_targets();
    }
    let result = tune(registry, &spec)?;
    if let Some(path) = &args.trace {
        write_output(&Some(path.clone()), &result.trace_csv(), out)?;
    }
    let best = result.best_params;
    match args.format {
        Format::Json => {
            let value = serde_json::json!({
                "controller": kind.id(),
                "suite": spec.suite,
                "targets": spec.targets,
                "best": best,
                "best_objective": result.best_objective,
                "evaluations": result.trace.len(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&value).expect("json"))?;
        }
        Format::Csv => out.write_all(result.trace_csv().as_bytes())?,
        Format::Table => {
            writeln!(out, "controller      {kind}")?;
            writeln!(out, "suite           {}", spec.suite.join(" "))?;
            writeln!(out, "evaluations     {}", result.trace.len())?;
            writeln!(out, "start objective {}", result.trace[0].objective)?;
            writeln!(out, "best objective  {}", result.best_objective)?;
            writeln!(
                out,
                "best params     sigma={:.4} lambda1={:.4} lambda2={:.4}",
                best.sigma, best.lambda1, best.lambda2
            )?;
        }
    }
    Ok(())
}
