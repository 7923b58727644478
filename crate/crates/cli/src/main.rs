//! Command-line front end: compile gates to pulse sequences, run seeded
//! simulations, benchmark, reconstruct states and processes, and work with
//! the Stark-shift model. Every command is deterministic under a fixed
//! seed and writes its output files atomically.

mod commands;
mod output;
mod parsing;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quditsim_core::Error;

/// Version stamped into every JSON document this binary writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "quditsim",
    version,
    about = "Compiler and simulator for trapped-ion qudit processors",
    long_about = "Compiler and simulator for trapped-ion qudit processors.\n\
        \n\
        Exit codes:\n\
        0  success\n\
        2  command-line usage error\n\
        3  invalid input (bad gate, dimension, target, circuit or model file)\n\
        4  file I/O failure\n\
        5  solver failure (no convergence, infeasible compensation, degenerate fit)\n\
        \n\
        Domain errors print a single-line JSON object on stderr:\n\
        {\"error\":{\"code\":3,\"class\":\"validation\",\"message\":\"...\"}}"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every random choice the command makes
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for output files (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a gate or unitary into native pulses
    Decompose {
        /// Library gate name; a trailing digit is read as the dimension
        /// (H3 = H at d=3). CEX and CINC synthesize entangling sequences.
        #[arg(long, conflicts_with_all = ["identity", "unitary"])]
        gate: Option<String>,
        /// Compile the identity (yields an empty circuit)
        #[arg(long)]
        identity: bool,
        /// JSON file holding a unitary as {"re": [[..]], "im": [[..]]}
        #[arg(long, conflicts_with = "identity")]
        unitary: Option<PathBuf>,
        /// Qudit dimension (2..=7); optional when the gate name carries it
        #[arg(long)]
        dim: Option<usize>,
        /// Numeric gate parameters, comma separated (CEX: control,t1,t2)
        #[arg(long, value_delimiter = ',')]
        params: Vec<f64>,
        /// Level-coupling layout for single-qudit compilation
        #[arg(long, default_value = "full", value_parser = ["full", "ladder", "star"])]
        graph: String,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a circuit file and sample measurement shots
    Run {
        /// Circuit text file (.qc)
        #[arg(long)]
        circuit: PathBuf,
        /// Initial level per site, comma separated ("2,0")
        #[arg(long)]
        input: String,
        /// Number of measurement shots
        #[arg(long)]
        shots: usize,
        /// Noise model: a JSON file, or inline "p=2e-4[,pms=1e-2]";
        /// omit for pure-state evolution
        #[arg(long)]
        noise: Option<String>,
        /// Readout model: a JSON file, or "default" for the illustrative
        /// shelving cascade; omit for ideal projective readout
        #[arg(long)]
        readout: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Randomized benchmarking over the single-qudit Clifford group
    Rb {
        /// Qudit dimension (prime: 2, 3, 5, 7)
        #[arg(long)]
        dim: usize,
        /// Sequence lengths, comma separated ("1,5,10,20,40")
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        /// Random sequences drawn per length (minimum 20)
        #[arg(long, default_value_t = 20)]
        sequences: usize,
        /// Shots per sequence (0 = exact survival probabilities)
        #[arg(long)]
        shots: u64,
        /// Noise model: a JSON file, or inline "p=2e-4[,pms=1e-2]"
        #[arg(long)]
        noise: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Quantum state and process tomography on simulated counts
    Tomo {
        #[command(subcommand)]
        what: TomoCommand,
    },
    /// AC-Stark shift sweeps and multi-tone compensation
    Stark {
        #[command(subcommand)]
        what: StarkCommand,
    },
}

#[derive(Subcommand)]
enum TomoCommand {
    /// Reconstruct a pure target state from simulated counts
    State {
        /// Ket expression, e.g. "(|0>+|1>+|2>)/sqrt(3)" or "|0>-i|2>";
        /// the parsed vector is normalized
        #[arg(long)]
        target: String,
        /// Qudit dimension; defaults to the highest ket index + 1
        #[arg(long)]
        dim: Option<usize>,
        /// Shots per measurement setting
        #[arg(long)]
        shots: u64,
        /// Bootstrap resamples for the fidelity interval
        #[arg(long, default_value_t = 100)]
        resamples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct a library gate's channel from simulated counts
    Process {
        /// Library gate name (single-qudit), e.g. T3 or H
        #[arg(long)]
        gate: String,
        /// Qudit dimension; optional when the gate name carries it
        #[arg(long)]
        dim: Option<usize>,
        /// Shots per (input state, measurement setting) pair
        #[arg(long)]
        shots: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum StarkCommand {
    /// Tabulate the pairwise shift of one tone against its detuning
    Sweep {
        /// Level pair, comma separated ("0,1")
        #[arg(long)]
        pair: String,
        /// Lowest detuning in Hz
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        /// Highest detuning in Hz
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        /// Number of evenly spaced samples
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Stark model JSON file; omit for the illustrative model
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve tone weights that null all but one pairwise shift
    Compensate {
        /// Occupied levels, comma separated ("0,1,2")
        #[arg(long)]
        occupied: String,
        /// Tone detunings in Hz, comma separated (one fewer than levels)
        #[arg(long, allow_hyphen_values = true)]
        detunings: String,
        /// Pair receiving the target shift ("0,1")
        #[arg(long, default_value = "0,1")]
        target_pair: String,
        /// Differential shift on the target pair, Hz
        #[arg(long, default_value_t = 1.0e3, allow_negative_numbers = true)]
        target_shift: f64,
        /// Stark model JSON file; omit for the illustrative model
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Exit class of a domain error; usage errors exit 2 through clap.
fn error_exit(err: &Error) -> (u8, &'static str) {
    match err {
        Error::Io(_) => (4, "io"),
        Error::NoConvergence(_)
        | Error::FitFailed(_)
        | Error::SingularSystem
        | Error::NegativeIntensity(_)
        | Error::ResonanceHit { .. } => (5, "solver"),
        _ => (3, "validation"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose {
            gate,
            identity,
            unitary,
            dim,
            params,
            graph,
            common,
        } => commands::decompose(gate, identity, unitary, dim, &params, &graph, &common),
        Command::Run {
            circuit,
            input,
            shots,
            noise,
            readout,
            common,
        } => commands::run(&circuit, &input, shots, noise.as_deref(), readout.as_deref(), &common),
        Command::Rb {
            dim,
            lengths,
            sequences,
            shots,
            noise,
            common,
        } => commands::rb(dim, lengths, sequences, shots, noise.as_deref(), &common),
        Command::Tomo { what } => match what {
            TomoCommand::State {
                target,
                dim,
                shots,
                resamples,
                common,
            } => commands::tomo_state(&target, dim, shots, resamples, &common),
            TomoCommand::Process {
                gate,
                dim,
                shots,
                common,
            } => commands::tomo_process(&gate, dim, shots, &common),
        },
        Command::Stark { what } => match what {
            StarkCommand::Sweep {
                pair,
                from,
                to,
                steps,
                model,
                common,
            } => commands::stark_sweep(&pair, from, to, steps, model.as_deref(), &common),
            StarkCommand::Compensate {
                occupied,
                detunings,
                target_pair,
                target_shift,
                model,
                common,
            } => commands::stark_compensate(
                &occupied,
                &detunings,
                &target_pair,
                target_shift,
                model.as_deref(),
                &common,
            ),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, class) = error_exit(&err);
            let doc = serde_json::json!({
                "error": { "code": code, "class": class, "message": err.to_string() }
            });
            eprintln!("{doc}");
            ExitCode::from(code)
        }
    }
}
