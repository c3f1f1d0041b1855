//! Batch runner around the simulation library: one subcommand executes an
//! experiment recipe into an output directory, the other trains the per-AP
//! power predictor. Failures print a one-line JSON object to stderr; the
//! exit code separates infeasible power-control targets (1) from all other
//! errors (2).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfsim_core::harness::{
    run_experiment, DlPowerEngine, DropKind, EngineSelection, ExperimentId, ExperimentSpec,
    UlPowerEngine, UlRateEngine,
};
use cfsim_core::mlp::{build_dataset, train_lm};
use cfsim_core::netgen::NetworkConfig;
use cfsim_core::rng::{derive_seed, stream};
use cfsim_core::{Error, Result};

#[derive(Parser)]
#[command(name = "cfsim", version, about = "Cell-free massive MIMO experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rates.csv, cdf.csv, ee.json, trace.json
    Run(RunArgs),
    /// Solve downlink optima on fresh networks and fit the power predictor
    TrainNn(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Network configuration JSON file
    #[arg(long)]
    config: PathBuf,

    /// Experiment id: ul-rate-cdf, ul-maxmin, ul-target-ee, dl-maxmin,
    /// dl-nn, dl-scalable, theorem1-probe, if-properties
    #[arg(long, value_parser = ExperimentId::from_str_arg)]
    experiment: ExperimentId,

    /// Output directory for the artifact files
    #[arg(long)]
    out: PathBuf,

    /// Master seed override; defaults to the seed in the config file
    #[arg(long)]
    seed: Option<u64>,

    /// Network drops per experiment
    #[arg(long, default_value_t = 50)]
    realizations: usize,

    /// Small-scale draws per drop (probe experiments: trials or points)
    #[arg(long, default_value_t = 200)]
    draws: usize,

    /// Uplink rate engine: exact-mc, rm-ap1, rm-ap2
    #[arg(long = "ul-rate", default_value = "exact-mc", value_parser = parse_arg::<UlRateEngine>)]
    ul_rate: UlRateEngine,

    /// Uplink power control: maxmin-exact, maxmin-rm, target-exact,
    /// target-rm, full-power
    #[arg(long = "ul-pc", default_value = "maxmin-rm", value_parser = parse_arg::<UlPowerEngine>)]
    ul_pc: UlPowerEngine,

    /// Per-device rate target in bits/s/Hz (SINR target is 2^r - 1)
    #[arg(long = "target-rate", default_value_t = 0.1)]
    target_rate: f64,

    /// Sacrifice rule when the target is infeasible: below-target,
    /// largest-power
    #[arg(long, default_value = "below-target", value_parser = parse_arg::<DropKind>)]
    drop: DropKind,

    /// Devices sacrificed under largest-power
    #[arg(long = "n-drop", default_value_t = 1)]
    n_drop: usize,

    /// Rate weight handed to sacrificed devices
    #[arg(long = "up", default_value_t = 0.0)]
    up: f64,

    /// Downlink row engine: maxmin-opt, fixed-p-nn, uniform-nn, uniform-full
    #[arg(long = "dl-pc", default_value = "uniform-nn", value_parser = parse_arg::<DlPowerEngine>)]
    dl_pc: DlPowerEngine,

    /// Bisection termination on the SINR target
    #[arg(long = "rel-tol", default_value_t = 1e-3)]
    rel_tol: f64,

    /// Cone-feasibility replay tolerance
    #[arg(long = "feas-tol", default_value_t = 1e-6)]
    feas_tol: f64,

    /// Trained model JSON for dl-nn / dl-scalable
    #[arg(long = "nn-model")]
    nn_model: Option<PathBuf>,

    /// Fixed-point tolerance for iterative engines
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,

    /// Iteration cap for fixed-point engines
    #[arg(long = "max-iter", default_value_t = 2000)]
    max_iter: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Network configuration JSON file
    #[arg(long)]
    config: PathBuf,

    /// Where to write the trained model JSON
    #[arg(long)]
    out: PathBuf,

    /// Network drops solved for supervision (samples = drops x M)
    #[arg(long, default_value_t = 320)]
    realizations: usize,

    /// Strongest large-scale coefficients fed per AP
    #[arg(long, default_value_t = 4)]
    khat: usize,

    /// Master seed override; defaults to the seed in the config file
    #[arg(long)]
    seed: Option<u64>,

    /// Optimizer epoch cap
    #[arg(long, default_value_t = 400)]
    epochs: usize,

    /// Initial damping for the normal equations
    #[arg(long, default_value_t = 1e-2)]
    lambda0: f64,
}

/// Adapter from library `FromStr` (error type not `Clone`) to clap.
fn parse_arg<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

trait FromStrArg: Sized {
    fn from_str_arg(s: &str) -> std::result::Result<Self, String>;
}

impl FromStrArg for ExperimentId {
    fn from_str_arg(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
}

fn load_config(path: &PathBuf) -> Result<NetworkConfig> {
    let text = fs::read_to_string(path)?;
    let config: NetworkConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let spec = ExperimentSpec {
        experiment: args.experiment,
        config,
        engines: EngineSelection {
            ul_rate: args.ul_rate,
            ul_power: args.ul_pc,
            target_rate: args.target_rate,
            drop: args.drop,
            n_drop: args.n_drop,
            u_p: args.up,
            dl_power: args.dl_pc,
            rel_tol: args.rel_tol,
            feas_tol: args.feas_tol,
            nn_model: args.nn_model,
            khat: 0, // unused by run; training owns this knob
            eps: args.eps,
            max_iter: args.max_iter,
        },
        n_realizations: args.realizations,
        n_small_scale_draws: args.draws,
        out_dir: args.out,
        seed: args.seed,
    };
    let bundle = run_experiment(&spec)?;
    println!(
        "{}",
        serde_json::json!({
            "experiment": spec.experiment,
            "out_dir": spec.out_dir,
            "rows": bundle.rows.len(),
            "ee": bundle.ee,
        })
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let dataset = build_dataset(&config, args.realizations, args.khat, seed)?;
    let outcome = train_lm(
        &dataset,
        derive_seed(seed, stream::TRAINING, u64::MAX),
        args.epochs,
        args.lambda0,
    )?;
    fs::write(&args.out, format!("{}\n", outcome.model.to_json()?))?;
    println!(
        "{}",
        serde_json::json!({
            "model": args.out,
            "samples": dataset.len(),
            "epochs": outcome.epochs,
            "train_rmse": outcome.train_rmse,
            "validation_rmse": outcome.validation_rmse,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::TrainNn(args) => train(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string(), "kind": err.kind() })
            );
            if matches!(err, Error::Infeasible(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
