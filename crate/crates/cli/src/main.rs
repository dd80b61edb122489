//! `vsplit`: boundedness criteria, operator norms and orthogonal-polynomial
//! diagnostics for degenerate Volterra operators, driven by JSON configs.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use thiserror::Error;
use volterra_split::numerics::ParseError;

use config::{Command, Format, RunConfig};
use run::Status;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}", parse_diagnostic(.field, .text, .err))]
    Parse { field: String, text: String, err: ParseError },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(String),
}

fn parse_diagnostic(field: &str, text: &str, err: &ParseError) -> String {
    let mut s = format!("weight `{field}`: {err}");
    if let Some(offset) = err.offset() {
        let col = text.get(..offset).map_or(offset, |p| p.chars().count());
        s.push_str(&format!("\n  {text}\n  {}^", " ".repeat(col)));
    }
    s
}

#[derive(Parser)]
#[command(name = "vsplit", version, about = "Splitting criteria and numerics for degenerate Volterra operators")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Doubling constant and weak doubling check of a weight `--w`.
    CheckDoubling(Overrides),
    /// Single-supremum criterion for the Hardy operator.
    Hardy(Overrides),
    /// Per-term criteria `S_k` for a degenerate kernel.
    SplitCriteria(Overrides),
    /// Two-condition and simple criteria for the Riemann-Liouville operator.
    RlCriteria(Overrides),
    /// Norm of the discretized operator and of each term.
    OpNorm(Overrides),
    /// Norm ladder next to the criteria.
    SplitExperiment(Overrides),
    /// Orthogonal polynomial of a weight and its root spacing along a ladder.
    Orthopoly(Overrides),
    /// Normalized Gram determinant of `x^k u^{-1}`.
    Gram(Overrides),
    /// Split witness: the test function orthogonal to `t, ..., t^n`.
    Witness(Overrides),
    /// Constrained minimum of `a/alpha1 + (1-a)/alpha2`.
    Lemma35(Overrides),
    /// Pointwise multiplier conditions between weighted Sobolev spaces.
    Multiplier(Overrides),
    /// Riemann-Liouville operator bounded while its rank-one terms are not.
    Counterexample(Overrides),
    /// Run a config file, or re-run the config embedded in a report.
    Run {
        file: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON config; flags below take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    phi: Option<String>,
    /// Kernel coefficient `a_k`; repeat in order `a_0, a_1, ...`.
    #[arg(long = "kernel")]
    kernel: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Matrix size of a discretization.
    #[arg(long)]
    points: Option<usize>,
    /// Ladder `2^lo..=2^hi`, given as `lo:hi`.
    #[arg(long, value_parser = parse_ladder)]
    ladder: Option<(i32, i32)>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Any config field by dotted path, e.g. `numerics.criteria.grid.points_per_decade=24`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

fn parse_ladder(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty ladder {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn read(path: &PathBuf) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    config::load(&text, &path.display().to_string())
}

fn build_config(command: Option<Command>, base: Option<&PathBuf>, o: &Overrides) -> Result<RunConfig, CliError> {
    let mut v = match (base, &o.config) {
        (Some(_), Some(_)) => return Err(CliError::Config("give the config either positionally or with --config".into())),
        (Some(p), None) | (None, Some(p)) => read(p)?,
        (None, None) => Value::Object(Default::default()),
    };
    if let Some(c) = command {
        // a subcommand fixes the command even when the file names another
        config::set_path(&mut v, "command", serde_json::to_value(c).unwrap())?;
    }
    let mut set = |path: &str, value: Value| config::set_path(&mut v, path, value);
    for (name, val) in [("u", &o.u), ("v", &o.v), ("w", &o.w), ("phi", &o.phi)] {
        if let Some(s) = val {
            set(&format!("inputs.{name}"), Value::from(s.clone()))?;
        }
    }
    if !o.kernel.is_empty() {
        set("inputs.kernel", Value::from(o.kernel.clone()))?;
    }
    for (name, val) in [("alpha", o.alpha), ("delta", o.delta), ("r", o.r), ("beta", o.beta), ("gamma", o.gamma), ("a", o.a)] {
        if let Some(x) = val {
            set(&format!("inputs.{name}"), Value::from(x))?;
        }
    }
    for (name, val) in [("n", o.n), ("l", o.l), ("m", o.m)] {
        if let Some(x) = val {
            set(&format!("inputs.{name}"), Value::from(x))?;
        }
    }
    if let Some(p) = o.points {
        set("numerics.points", Value::from(p))?;
    }
    if let Some((lo, hi)) = o.ladder {
        set("numerics.ladder", serde_json::json!({ "min_log2": lo, "max_log2": hi }))?;
    }
    if let Some(p) = &o.output {
        set("output.path", Value::from(p.display().to_string()))?;
    }
    if let Some(f) = o.format {
        set("output.format", serde_json::to_value(f).unwrap())?;
    }
    for a in &o.set {
        let (path, value) = config::parse_assignment(a)?;
        set(&path, value)?;
    }
    config::from_value(v)
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which here means inconclusive
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (command, base, overrides) = match cli.command {
        Cmd::CheckDoubling(o) => (Some(Command::CheckDoubling), None, o),
        Cmd::Hardy(o) => (Some(Command::Hardy), None, o),
        Cmd::SplitCriteria(o) => (Some(Command::SplitCriteria), None, o),
        Cmd::RlCriteria(o) => (Some(Command::RlCriteria), None, o),
        Cmd::OpNorm(o) => (Some(Command::OpNorm), None, o),
        Cmd::SplitExperiment(o) => (Some(Command::SplitExperiment), None, o),
        Cmd::Orthopoly(o) => (Some(Command::Orthopoly), None, o),
        Cmd::Gram(o) => (Some(Command::Gram), None, o),
        Cmd::Witness(o) => (Some(Command::Witness), None, o),
        Cmd::Lemma35(o) => (Some(Command::Lemma35), None, o),
        Cmd::Multiplier(o) => (Some(Command::Multiplier), None, o),
        Cmd::Counterexample(o) => (Some(Command::Counterexample), None, o),
        Cmd::Run { file, overrides } => (None, Some(file), overrides),
    };
    match go(command, base.as_ref(), &overrides) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn go(command: Option<Command>, base: Option<&PathBuf>, o: &Overrides) -> Result<Status, CliError> {
    let cfg = build_config(command, base, o)?;
    let outcome = run::execute(cfg)?;
    let text = outcome.render()?;
    match &outcome.report.config.output.path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            eprintln!("{}: {:?}, report written to {}", outcome.report.command.name(), outcome.report.status, p.display());
        }
        None => print!("{text}"),
    }
    Ok(outcome.report.status)
}
