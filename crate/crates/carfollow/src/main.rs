//! Thin command-line front end; all work happens in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carfollow::cli;
use carfollow::kernels::KernelChoice;

#[derive(Parser)]
#[command(name = "carfollow", version, about = "Stochastic car-following models: train, simulate, evaluate")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataFlags {
    /// Trajectory CSV (pair_id,t,lead_pos,lead_vel,foll_pos,foll_vel,foll_acc,lead_length).
    #[arg(long)]
    data: PathBuf,
    /// Resample to this sampling interval, seconds.
    #[arg(long, default_value_t = 0.2)]
    target_dt: f64,
    /// Drop pairs with duration <= this, seconds.
    #[arg(long, default_value_t = 30.0)]
    min_duration: f64,
    /// Test pairs must be longer than this, seconds.
    #[arg(long, default_value_t = 50.0)]
    test_min_duration: f64,
    /// Number of test pairs drawn from the long ones.
    #[arg(long, default_value_t = 30)]
    n_test: usize,
    /// Train fraction of the non-test pairs.
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
}

impl DataFlags {
    fn into_args(self) -> cli::DataArgs {
        cli::DataArgs {
            data: self.data,
            target_dt: self.target_dt,
            min_duration: self.min_duration,
            test_min_duration: self.test_min_duration,
            n_test: self.n_test,
            train_frac: self.train_frac,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and a trajectory CSV.
    Train {
        /// Flat key=value config; `kernel` is required.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataFlags,
        /// Output directory (default: $CARFOLLOW_OUT_DIR or `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a stochastic rollout ensemble for one car-following pair.
    Simulate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        target_dt: f64,
        #[arg(long)]
        pair: String,
        /// Forecast start time, seconds.
        #[arg(long)]
        t_start: f64,
        /// Forecast horizon, seconds.
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Conditioning window length in steps (default: from checkpoint).
        #[arg(long)]
        t_ctx: Option<usize>,
        /// Override the checkpoint's kernel (gibbs|matern52|se|white).
        #[arg(long, value_parser = parse_kernel)]
        kernel: Option<KernelChoice>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a multi-vehicle platoon responding to a trapezoidal
    /// lead-speed maneuver.
    Platoon {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of vehicles including the scripted leader.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 15.0)]
        base_speed: f64,
        /// Speed amplitude of the trapezoid, m/s.
        #[arg(long, default_value_t = 5.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 20.0)]
        ramp: f64,
        #[arg(long, default_value_t = 40.0)]
        hold: f64,
        #[arg(long, default_value_t = 20.0)]
        gap: f64,
        #[arg(long, default_value_t = 4.5)]
        vehicle_length: f64,
        #[arg(long, default_value_t = 30.0)]
        warmup: f64,
        /// Total simulated time, seconds.
        #[arg(long, default_value_t = 1000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.2)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        t_ctx: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one or more checkpoints over the test split (RMSE/CRPS/ES).
    Evaluate {
        /// Checkpoint path; repeat to compare kernels side by side.
        #[arg(long, required = true)]
        ckpt: Vec<PathBuf>,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Spacing of forecast start times, seconds.
        #[arg(long, default_value_t = 5.0)]
        start_stride: f64,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[arg(long)]
        t_ctx: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the learned lengthscale against the covariates, one row per
    /// train-split step.
    ExportInterp {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kernel(s: &str) -> Result<KernelChoice, String> {
    KernelChoice::parse(s).map_err(|e| e.to_string())
}

fn run(command: Command) -> carfollow::Result<()> {
    match command {
        Command::Train { config, data, out } => cli::cmd_train(&cli::TrainArgs {
            config,
            data: data.into_args(),
            out: cli::resolve_out_dir(out),
        }),
        Command::Simulate {
            ckpt,
            data,
            target_dt,
            pair,
            t_start,
            horizon,
            rounds,
            seed,
            t_ctx,
            kernel,
            out,
        } => cli::cmd_simulate(&cli::SimulateArgs {
            ckpt,
            data,
            target_dt,
            pair,
            t_start,
            horizon,
            rounds,
            seed,
            t_ctx,
            kernel,
            out: cli::resolve_out_dir(out),
        }),
        Command::Platoon {
            ckpt,
            n,
            base_speed,
            amplitude,
            ramp,
            hold,
            gap,
            vehicle_length,
            warmup,
            horizon,
            dt,
            seed,
            t_ctx,
            out,
        } => cli::cmd_platoon(&cli::PlatoonArgs {
            ckpt,
            n_vehicles: n,
            base_speed,
            amplitude,
            ramp_secs: ramp,
            hold_secs: hold,
            initial_gap: gap,
            vehicle_length,
            warmup_secs: warmup,
            horizon,
            dt,
            seed,
            t_ctx,
            out: cli::resolve_out_dir(out),
        }),
        Command::Evaluate { ckpt, data, seed, horizon, start_stride, rounds, t_ctx, out } => {
            cli::cmd_evaluate(&cli::EvaluateArgs {
                ckpts: ckpt,
                data: data.into_args(),
                seed,
                horizon,
                start_stride,
                rounds,
                t_ctx,
                out: cli::resolve_out_dir(out),
            })
        }
        Command::ExportInterp { ckpt, data, seed, out } => {
            cli::cmd_export_interp(&cli::ExportInterpArgs {
                ckpt,
                data: data.into_args(),
                seed,
                out: cli::resolve_out_dir(out),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("carfollow: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("carfollow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
