//! `phs`: load port-Hamiltonian model files, run checks, simulations and
//! synthesis routines, and print JSON reports.
//!
//! Exit status is 0 when every check passes, 1 when a check or a domain
//! routine fails, and 2 for usage and parse errors.

mod commands;
mod schema;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phs_core::simulate::Method;
use phs_core::Check;
use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Schema(String),
    /// A model file failed its structural checks on load.
    Invalid {
        path: String,
        checks: Vec<Check>,
    },
    Domain(phs_core::Error),
}

impl From<phs_core::Error> for CliError {
    fn from(e: phs_core::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<phs_core::ExprError> for CliError {
    fn from(e: phs_core::ExprError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// What a subcommand reports on success.
pub struct Outcome {
    pub checks: Vec<Check>,
    pub result: Value,
}

#[derive(Parser, Debug)]
#[command(
    name = "phs",
    version,
    about = "Port-Hamiltonian modeling, audits and synthesis"
)]
struct Cli {
    /// Seed for randomized sample points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ComposeKind {
    Negative,
    Jint,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum IohFeedbackKind {
    Positive,
    Static,
    GeneralP,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Structural checks on a model file.
    Validate { model: PathBuf },
    /// Integrates a model and writes a CSV trajectory.
    Simulate {
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value = "midpoint")]
        method: Method,
        /// Input expression over `t`, one per port.
        #[arg(long = "u", allow_hyphen_values = true)]
        u: Vec<String>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy-balance audit of a CSV trajectory against its model.
    Audit {
        traj: PathBuf,
        model: PathBuf,
        /// Integrator that produced the file.
        #[arg(long, default_value = "midpoint")]
        method: Method,
    },
    /// Steady state for a constant input and the shifted system about it.
    Steady {
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x_guess: Option<String>,
    },
    /// Linear Casimir basis, optionally verifying a candidate.
    Casimir {
        model: PathBuf,
        /// Candidate Casimir expression over the state names.
        #[arg(long)]
        verify: Option<String>,
    },
    /// Interconnects a plant and a controller.
    Compose {
        #[arg(value_enum)]
        kind: ComposeKind,
        plant: PathBuf,
        controller: PathBuf,
        /// Interconnection matrix for `jint`, row-major JSON.
        #[arg(long, allow_hyphen_values = true)]
        jint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Control by interconnection: Casimir search, state-feedback reduction and damping.
    SynthCi {
        plant: PathBuf,
        controller: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        /// Damping gain `c` in `v = -c Gᵀ∇V`.
        #[arg(long)]
        damping: Option<f64>,
        /// `Φ(z0)` in `V = Φ(H_s)`.
        #[arg(long, default_value = "z0")]
        phi: String,
        /// Target equilibrium; the minimizer of a quadratic `H_s` by default.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<String>,
        /// Initial state for a closed-loop convergence run.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Linear IDA-PBC for an assigned `J_d`, `R_d` and `H_s = ½xᵀQ_s x + b_sᵀx`.
    SynthIda {
        plant: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        jd: String,
        #[arg(long, allow_hyphen_values = true)]
        rd: String,
        #[arg(long, allow_hyphen_values = true)]
        qs: String,
        #[arg(long, allow_hyphen_values = true)]
        bs: Option<String>,
    },
    /// Converts between input-output Hamiltonian and extended port-Hamiltonian form.
    IohConvert {
        model: PathBuf,
        /// Output functions over the state, one per port (PHS to IOH).
        #[arg(long = "c", allow_hyphen_values = true)]
        c: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feedback interconnection of input-output Hamiltonian systems.
    IohFeedback {
        #[arg(value_enum)]
        kind: IohFeedbackKind,
        a: PathBuf,
        b: Option<PathBuf>,
        /// Interaction energy over `y1..`.
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// dc loop-gain stability of the positive-feedback loop of two linear IOH systems.
    Dcgain { a: PathBuf, b: PathBuf },
    /// Builds the port-Hamiltonian model of a mass-spring-damper graph.
    NetMsd {
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Simulate { .. } => "simulate",
            Command::Audit { .. } => "audit",
            Command::Steady { .. } => "steady",
            Command::Casimir { .. } => "casimir",
            Command::Compose { .. } => "compose",
            Command::SynthCi { .. } => "synth-ci",
            Command::SynthIda { .. } => "synth-ida",
            Command::IohConvert { .. } => "ioh-convert",
            Command::IohFeedback { .. } => "ioh-feedback",
            Command::Dcgain { .. } => "dcgain",
            Command::NetMsd { .. } => "net-msd",
        }
    }
}

fn envelope(command: &str, seed: u64, checks: &[Check], extra: Value) -> Value {
    let mut v = json!({
        "tool": "phs",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "passed": phs_core::report::all_passed(checks),
        "checks": checks,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

fn print_json(v: &Value) {
    let text = serde_json::to_string_pretty(v).expect("reports are serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    match commands::run(cli.command, cli.seed) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(out)) => {
            let passed = phs_core::report::all_passed(&out.checks);
            print_json(&envelope(
                name,
                cli.seed,
                &out.checks,
                json!({ "result": out.result }),
            ));
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(CliError::Usage(msg)) | Err(CliError::Schema(msg)) => {
            eprintln!("phs {name}: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Invalid { path, checks }) => {
            eprintln!("phs {name}: {path} failed validation");
            print_json(&envelope(name, cli.seed, &checks, json!({ "model": path })));
            ExitCode::from(1)
        }
        Err(CliError::Domain(e)) => {
            eprintln!("phs {name}: {e}");
            let checks = [Check::failed(name, e.to_string())];
            print_json(&envelope(
                name,
                cli.seed,
                &checks,
                json!({ "error": e.to_string() }),
            ));
            ExitCode::from(1)
        }
    }
}
