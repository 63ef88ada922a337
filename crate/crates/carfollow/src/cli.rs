//! Command implementations behind the thin `carfollow` binary: data
//! pipeline wiring, run manifests, and the CSV emitters for every output
//! the tool produces. All figures are made externally from these CSVs.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::data::{filter_and_split, load_trajectories, resample, DatasetSplit, FileFormat};
use crate::error::{Error, Result};
use crate::kernels::{build_kernel_matrix, KernelChoice};
use crate::meanmodel::{forward, load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::metrics::{evaluate_testset, EvalProtocol, ModelEntry, ScoreTable};
use crate::sim::{simulate_ensemble, simulate_platoon, LeadProfile, PlatoonConfig, SimOptions};
use crate::train::{parse_config, train};

/// Environment variable consulted when no output directory is given.
pub const OUT_DIR_ENV: &str = "CARFOLLOW_OUT_DIR";

pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Everything needed to reproduce a run byte-identically under one
/// numeric profile: command, full config snapshot, seeds, and paths.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub code_version: String,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}_manifest.json", self.command));
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(&path, json)?;
        Ok(path)
    }
}

/// Shared ingestion flags: CSV path, resampling rate, and the pair
/// filtering / splitting protocol.
#[derive(Debug, Clone)]
pub struct DataArgs {
    pub data: PathBuf,
    pub target_dt: f64,
    pub min_duration: f64,
    pub test_min_duration: f64,
    pub n_test: usize,
    pub train_frac: f64,
}

impl DataArgs {
    pub fn load_split(&self, seed: u64) -> Result<DatasetSplit> {
        let raw = load_trajectories(&self.data, FileFormat::GenericCsv)?;
        let mut resampled = Vec::with_capacity(raw.len());
        for t in raw {
            resampled.push(resample(&t, self.target_dt)?);
        }
        filter_and_split(
            &resampled,
            self.min_duration,
            self.test_min_duration,
            self.n_test,
            self.train_frac,
            seed,
        )
    }

    fn describe(&self, config: &mut BTreeMap<String, String>) {
        config.insert("data.target_dt".into(), self.target_dt.to_string());
        config.insert("data.min_duration".into(), self.min_duration.to_string());
        config.insert("data.test_min_duration".into(), self.test_min_duration.to_string());
        config.insert("data.n_test".into(), self.n_test.to_string());
        config.insert("data.train_frac".into(), self.train_frac.to_string());
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(content.as_bytes())?;
    f.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// train

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub data: DataArgs,
    pub out: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let cfg_text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let cfg = parse_config(&cfg_text)?;
    let split = args.data.load_split(cfg.seed)?;
    let (params, mut report) = train(&split, &cfg)?;

    create_out_dir(&args.out)?;
    let ckpt_path = args.out.join("model.ckpt");
    save_checkpoint(&ckpt_path, &params, &CheckpointMeta { kernel: cfg.kernel, t_ctx: cfg.t_ctx })?;
    report.checkpoint_path = Some(ckpt_path.display().to_string());

    let losses_path = args.out.join("losses.csv");
    let mut csv = String::from("epoch,train_nll,val_nll\n");
    for (e, (tr, va)) in report.train_nll.iter().zip(&report.val_nll).enumerate() {
        csv.push_str(&format!("{e},{tr},{va}\n"));
    }
    write_file(&losses_path, &csv)?;

    let mut manifest = RunManifest::new("train");
    for (k, v) in cfg.to_key_values() {
        manifest.config.insert(k, v);
    }
    args.data.describe(&mut manifest.config);
    manifest.config.insert("best_epoch".into(), report.best_epoch.to_string());
    manifest.seeds = vec![cfg.seed];
    manifest.inputs = vec![args.config.display().to_string(), args.data.data.display().to_string()];
    manifest.outputs = vec![ckpt_path.display().to_string(), losses_path.display().to_string()];
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// simulate

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub target_dt: f64,
    pub pair: String,
    pub t_start: f64,
    pub horizon: f64,
    pub rounds: usize,
    pub seed: u64,
    pub t_ctx: Option<usize>,
    pub kernel: Option<KernelChoice>,
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    if args.rounds == 0 {
        return Err(Error::Argument("rounds must be >= 1".into()));
    }
    let (params, meta) = load_checkpoint(&args.ckpt)?;
    let kernel = args.kernel.unwrap_or(meta.kernel);
    let t_ctx = args.t_ctx.unwrap_or(meta.t_ctx);

    let raw = load_trajectories(&args.data, FileFormat::GenericCsv)?;
    let traj = raw
        .iter()
        .find(|t| t.pair_id == args.pair)
        .ok_or_else(|| Error::Argument(format!("unknown pair_id `{}`", args.pair)))?;
    let traj = resample(traj, args.target_dt)?;

    let ens = simulate_ensemble(
        &params,
        &traj,
        args.t_start,
        args.horizon,
        args.rounds,
        kernel,
        t_ctx,
        args.seed,
        SimOptions::default(),
    )?;

    create_out_dir(&args.out)?;
    let ensemble_path = args.out.join("ensemble.csv");
    let mut csv = String::from("round,t,a,v,p,s,dv,ell,sigma,collided\n");
    for (ri, r) in ens.rollouts.iter().enumerate() {
        for k in 0..r.len() {
            csv.push_str(&format!(
                "{ri},{},{},{},{},{},{},{},{},{}\n",
                r.times[k],
                r.a_sim[k],
                r.v_sim[k],
                r.p_sim[k],
                r.s_sim[k],
                r.dv_sim[k],
                r.ell_trace[k],
                r.sigma_trace[k],
                u8::from(r.collided[k]),
            ));
        }
    }
    write_file(&ensemble_path, &csv)?;

    let traces_path = args.out.join("traces.csv");
    let mut csv = String::from("round,t,ell,sigma\n");
    for (ri, r) in ens.rollouts.iter().enumerate() {
        for k in 0..r.len() {
            csv.push_str(&format!("{ri},{},{},{}\n", r.times[k], r.ell_trace[k], r.sigma_trace[k]));
        }
    }
    write_file(&traces_path, &csv)?;

    // Kernel heatmap data: K over the first 10 s of round 0's forecast,
    // built from its simulated per-step scales.
    let r0 = &ens.rollouts[0];
    let win = ((10.0 / traj.dt).round() as usize).min(r0.len());
    let spec = kernel.spec_from_heads(&r0.ell_trace[..win], &r0.sigma_trace[..win]);
    let k = build_kernel_matrix(&r0.times[..win], &spec)?;
    let gram_path = args.out.join("gram.csv");
    let mut csv = String::new();
    for i in 0..win {
        for j in 0..win {
            if j > 0 {
                csv.push(',');
            }
            csv.push_str(&k[(i, j)].to_string());
        }
        csv.push('\n');
    }
    write_file(&gram_path, &csv)?;

    let mut manifest = RunManifest::new("simulate");
    manifest.config.insert("pair".into(), args.pair.clone());
    manifest.config.insert("t_start".into(), args.t_start.to_string());
    manifest.config.insert("horizon".into(), args.horizon.to_string());
    manifest.config.insert("rounds".into(), args.rounds.to_string());
    manifest.config.insert("kernel".into(), kernel.name().to_string());
    manifest.config.insert("T_ctx".into(), t_ctx.to_string());
    manifest.config.insert("target_dt".into(), args.target_dt.to_string());
    manifest.seeds = vec![args.seed];
    manifest.inputs = vec![args.ckpt.display().to_string(), args.data.display().to_string()];
    manifest.outputs = vec![
        ensemble_path.display().to_string(),
        traces_path.display().to_string(),
        gram_path.display().to_string(),
    ];
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// platoon

#[derive(Debug, Clone)]
pub struct PlatoonArgs {
    pub ckpt: PathBuf,
    pub n_vehicles: usize,
    pub base_speed: f64,
    pub amplitude: f64,
    pub ramp_secs: f64,
    pub hold_secs: f64,
    pub initial_gap: f64,
    pub vehicle_length: f64,
    pub warmup_secs: f64,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub t_ctx: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_platoon(args: &PlatoonArgs) -> Result<()> {
    let started = Instant::now();
    let (params, meta) = load_checkpoint(&args.ckpt)?;
    let t_ctx = args.t_ctx.unwrap_or(meta.t_ctx);
    let cfg = PlatoonConfig {
        n_vehicles: args.n_vehicles,
        lead_profile: LeadProfile {
            base_speed: args.base_speed,
            amplitude: args.amplitude,
            ramp_secs: args.ramp_secs,
            hold_secs: args.hold_secs,
        },
        initial_gap: args.initial_gap,
        vehicle_length: args.vehicle_length,
        warmup_secs: args.warmup_secs,
        horizon_secs: args.horizon,
        dt: args.dt,
        seed: args.seed,
    };
    let res = simulate_platoon(&params, &cfg, meta.kernel, t_ctx, SimOptions::default())?;

    create_out_dir(&args.out)?;
    let platoon_path = args.out.join("platoon.csv");
    let mut csv = String::from("vehicle,t,a,v,p,s\n");
    for (vi, veh) in res.vehicles.iter().enumerate() {
        for k in 0..veh.len() {
            csv.push_str(&format!(
                "{vi},{},{},{},{},{}\n",
                veh.times[k], veh.a_sim[k], veh.v_sim[k], veh.p_sim[k], veh.s_sim[k]
            ));
        }
    }
    write_file(&platoon_path, &csv)?;

    let timespace_path = args.out.join("timespace.csv");
    let mut csv = String::from("t,vehicle,p,v\n");
    for k in 0..res.times.len() {
        for (vi, veh) in res.vehicles.iter().enumerate() {
            csv.push_str(&format!("{},{vi},{},{}\n", res.times[k], veh.p_sim[k], veh.v_sim[k]));
        }
    }
    write_file(&timespace_path, &csv)?;

    let mut manifest = RunManifest::new("platoon");
    manifest.config.insert("n_vehicles".into(), args.n_vehicles.to_string());
    manifest.config.insert("base_speed".into(), args.base_speed.to_string());
    manifest.config.insert("amplitude".into(), args.amplitude.to_string());
    manifest.config.insert("ramp_secs".into(), args.ramp_secs.to_string());
    manifest.config.insert("hold_secs".into(), args.hold_secs.to_string());
    manifest.config.insert("initial_gap".into(), args.initial_gap.to_string());
    manifest.config.insert("vehicle_length".into(), args.vehicle_length.to_string());
    manifest.config.insert("warmup_secs".into(), args.warmup_secs.to_string());
    manifest.config.insert("horizon".into(), args.horizon.to_string());
    manifest.config.insert("dt".into(), args.dt.to_string());
    manifest.config.insert("T_ctx".into(), t_ctx.to_string());
    manifest.config.insert("kernel".into(), meta.kernel.name().to_string());
    manifest.seeds = vec![args.seed];
    manifest.inputs = vec![args.ckpt.display().to_string()];
    manifest.outputs = vec![platoon_path.display().to_string(), timespace_path.display().to_string()];
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub ckpts: Vec<PathBuf>,
    pub data: DataArgs,
    pub seed: u64,
    pub horizon: f64,
    pub start_stride: f64,
    pub rounds: usize,
    pub t_ctx: Option<usize>,
    pub out: PathBuf,
}

pub fn score_table_csv(table: &ScoreTable) -> String {
    let mut csv = String::from("model,kernel,state,metric,mean,count\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model, r.kernel, r.state, r.metric, r.mean, r.count
        ));
    }
    csv
}

pub fn raw_scores_csv(table: &ScoreTable) -> String {
    let mut csv = String::from("model,kernel,pair,t_start,state,metric,value\n");
    for r in &table.raw {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model, r.kernel, r.pair, r.t_start, r.state, r.metric, r.value
        ));
    }
    csv
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    if args.ckpts.is_empty() {
        return Err(Error::Argument("at least one --ckpt is required".into()));
    }
    let mut models = Vec::new();
    let mut t_ctx = args.t_ctx;
    for path in &args.ckpts {
        let (params, meta) = load_checkpoint(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| meta.kernel.name().to_string());
        t_ctx = t_ctx.or(Some(meta.t_ctx));
        models.push(ModelEntry { label, kernel: meta.kernel, params });
    }
    let t_ctx = t_ctx.unwrap_or(50);
    let split = args.data.load_split(args.seed)?;
    let protocol = EvalProtocol {
        horizon_secs: args.horizon,
        start_stride_secs: args.start_stride,
        rounds: args.rounds,
    };
    let table = evaluate_testset(&models, &split, &protocol, t_ctx, args.seed, SimOptions::default())?;

    create_out_dir(&args.out)?;
    let scores_path = args.out.join("scores.csv");
    write_file(&scores_path, &score_table_csv(&table))?;
    let raw_path = args.out.join("raw_scores.csv");
    write_file(&raw_path, &raw_scores_csv(&table))?;

    let mut manifest = RunManifest::new("evaluate");
    manifest.config.insert("horizon".into(), args.horizon.to_string());
    manifest.config.insert("start_stride".into(), args.start_stride.to_string());
    manifest.config.insert("rounds".into(), args.rounds.to_string());
    manifest.config.insert("T_ctx".into(), t_ctx.to_string());
    args.data.describe(&mut manifest.config);
    manifest.seeds = vec![args.seed];
    manifest.inputs = args.ckpts.iter().map(|p| p.display().to_string()).collect();
    manifest.inputs.push(args.data.data.display().to_string());
    manifest.outputs = vec![scores_path.display().to_string(), raw_path.display().to_string()];
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// export-interp

#[derive(Debug, Clone)]
pub struct ExportInterpArgs {
    pub ckpt: PathBuf,
    pub data: DataArgs,
    pub seed: u64,
    pub out: PathBuf,
}

/// Run the trained model over the train split (dropout off) and emit one
/// row per step: learned lengthscale next to the raw covariates.
pub fn cmd_export_interp(args: &ExportInterpArgs) -> Result<()> {
    let started = Instant::now();
    let (params, _meta) = load_checkpoint(&args.ckpt)?;
    let split = args.data.load_split(args.seed)?;

    create_out_dir(&args.out)?;
    let interp_path = args.out.join("interp.csv");
    let mut csv = String::from("ell,s,dv,v,a\n");
    for traj in &split.train {
        let windows = crate::data::make_windows(traj, traj.len(), traj.len())?;
        let window = &windows[0];
        let out = forward(&params, window, None)?;
        for k in 0..window.len() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                out.ell_nn[k],
                window.inputs[k][0],
                window.inputs[k][1],
                window.inputs[k][2],
                window.targets[k]
            ));
        }
    }
    write_file(&interp_path, &csv)?;

    let mut manifest = RunManifest::new("export-interp");
    args.data.describe(&mut manifest.config);
    manifest.seeds = vec![args.seed];
    manifest.inputs = vec![args.ckpt.display().to_string(), args.data.data.display().to_string()];
    manifest.outputs = vec![interp_path.display().to_string()];
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_pairs, SyntheticSpec};
    use tempfile::tempdir;

    fn write_synthetic_csv(dir: &Path, n_pairs: usize, steps: usize) -> PathBuf {
        let spec = SyntheticSpec {
            n_pairs,
            steps,
            residual: crate::synthetic::ResidualSpec::None,
            noise_std: 0.05,
            ..SyntheticSpec::default()
        };
        let pairs = generate_pairs(&spec).unwrap();
        let path = dir.join("trajs.csv");
        crate::data::write_trajectories(&path, &pairs).unwrap();
        path
    }

    fn demo_data_args(data: PathBuf) -> DataArgs {
        DataArgs {
            data,
            target_dt: 0.2,
            min_duration: 30.0,
            test_min_duration: 50.0,
            n_test: 2,
            train_frac: 0.7,
        }
    }

    #[test]
    fn train_simulate_evaluate_pipeline_end_to_end() {
        let dir = tempdir().unwrap();
        // 400 steps at 0.2 s = 79.8 s duration: all pairs pass both filters.
        let data = write_synthetic_csv(dir.path(), 8, 400);
        let config = dir.path().join("cfg.txt");
        std::fs::write(
            &config,
            "kernel = gibbs\nH = 4\nT_block = 20\nsegments_per_step = 8\nepochs = 2\nT_ctx = 15\nseed = 1\n",
        )
        .unwrap();
        let out = dir.path().join("run1");
        cmd_train(&TrainArgs { config, data: demo_data_args(data.clone()), out: out.clone() })
            .unwrap();
        assert!(out.join("model.ckpt").exists());
        assert!(out.join("losses.csv").exists());
        assert!(out.join("train_manifest.json").exists());
        let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
        assert!(losses.starts_with("epoch,train_nll,val_nll"));
        assert_eq!(losses.lines().count(), 3); // header + 2 epochs

        // Simulate an ensemble on one of the generated pairs.
        let sim_out = dir.path().join("sim1");
        cmd_simulate(&SimulateArgs {
            ckpt: out.join("model.ckpt"),
            data: data.clone(),
            target_dt: 0.2,
            pair: "synth000".into(),
            t_start: 20.0,
            horizon: 10.0,
            rounds: 5,
            seed: 3,
            t_ctx: None,
            kernel: None,
            out: sim_out.clone(),
        })
        .unwrap();
        let ens = std::fs::read_to_string(sim_out.join("ensemble.csv")).unwrap();
        assert!(ens.starts_with("round,t,a,v,p,s,dv,ell,sigma,collided"));
        assert_eq!(ens.lines().count(), 1 + 5 * 50);
        assert!(sim_out.join("gram.csv").exists());
        assert!(sim_out.join("traces.csv").exists());

        // Unknown pair is a usage error (exit 2).
        let err = cmd_simulate(&SimulateArgs {
            ckpt: out.join("model.ckpt"),
            data: data.clone(),
            target_dt: 0.2,
            pair: "nope".into(),
            t_start: 20.0,
            horizon: 10.0,
            rounds: 5,
            seed: 3,
            t_ctx: None,
            kernel: None,
            out: sim_out.clone(),
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Evaluate with the single checkpoint.
        let eval_out = dir.path().join("eval1");
        cmd_evaluate(&EvaluateArgs {
            ckpts: vec![out.join("model.ckpt")],
            data: demo_data_args(data.clone()),
            seed: 1,
            horizon: 10.0,
            start_stride: 20.0,
            rounds: 4,
            t_ctx: None,
            out: eval_out.clone(),
        })
        .unwrap();
        let scores = std::fs::read_to_string(eval_out.join("scores.csv")).unwrap();
        assert!(scores.starts_with("model,kernel,state,metric,mean,count"));
        assert!(scores.contains(",gibbs,a,crps,"));
        assert!(scores.contains("collision_rate"));

        // Interp export: row count equals total train-pair steps.
        let interp_out = dir.path().join("interp1");
        cmd_export_interp(&ExportInterpArgs {
            ckpt: out.join("model.ckpt"),
            data: demo_data_args(data),
            seed: 1,
            out: interp_out.clone(),
        })
        .unwrap();
        let interp = std::fs::read_to_string(interp_out.join("interp.csv")).unwrap();
        let n_train_pairs = 4; // 8 pairs - 2 test, of the rest 70% -> 4 train
        assert_eq!(interp.lines().count(), 1 + n_train_pairs * 400);
        // All lengthscales positive.
        for line in interp.lines().skip(1) {
            let ell: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert!(ell > 0.0);
        }
    }

    #[test]
    fn gram_csv_is_symmetric_on_reread() {
        let dir = tempdir().unwrap();
        let data = write_synthetic_csv(dir.path(), 3, 300);
        let config = dir.path().join("cfg.txt");
        std::fs::write(
            &config,
            "kernel = gibbs\nH = 4\nT_block = 20\nsegments_per_step = 4\nepochs = 1\nT_ctx = 10\nseed = 2\n",
        )
        .unwrap();
        let out = dir.path().join("run");
        cmd_train(&TrainArgs {
            config,
            data: DataArgs {
                data: data.clone(),
                target_dt: 0.2,
                min_duration: 10.0,
                test_min_duration: 20.0,
                n_test: 1,
                train_frac: 0.7,
            },
            out: out.clone(),
        })
        .unwrap();
        let sim_out = dir.path().join("sim");
        cmd_simulate(&SimulateArgs {
            ckpt: out.join("model.ckpt"),
            data,
            target_dt: 0.2,
            pair: "synth001".into(),
            t_start: 10.0,
            horizon: 12.0,
            rounds: 2,
            seed: 9,
            t_ctx: None,
            kernel: None,
            out: sim_out.clone(),
        })
        .unwrap();
        let text = std::fs::read_to_string(sim_out.join("gram.csv")).unwrap();
        let rows: Vec<Vec<f64>> =
            text.lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        let n = rows.len();
        assert_eq!(n, 50); // 10 s window at 5 Hz
        for i in 0..n {
            assert_eq!(rows[i].len(), n);
            for j in 0..n {
                assert!((rows[i][j] - rows[j][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn platoon_command_writes_tables_and_manifest() {
        let dir = tempdir().unwrap();
        let data = write_synthetic_csv(dir.path(), 3, 300);
        let config = dir.path().join("cfg.txt");
        std::fs::write(
            &config,
            "kernel = se\nH = 4\nT_block = 20\nsegments_per_step = 4\nepochs = 1\nT_ctx = 10\nseed = 4\n",
        )
        .unwrap();
        let out = dir.path().join("run");
        cmd_train(&TrainArgs {
            config,
            data: DataArgs {
                data,
                target_dt: 0.2,
                min_duration: 10.0,
                test_min_duration: 20.0,
                n_test: 1,
                train_frac: 0.7,
            },
            out: out.clone(),
        })
        .unwrap();
        let platoon_out = dir.path().join("platoon");
        cmd_platoon(&PlatoonArgs {
            ckpt: out.join("model.ckpt"),
            n_vehicles: 2,
            base_speed: 15.0,
            amplitude: 3.0,
            ramp_secs: 10.0,
            hold_secs: 10.0,
            initial_gap: 20.0,
            vehicle_length: 4.5,
            warmup_secs: 10.0,
            horizon: 60.0,
            dt: 0.2,
            seed: 5,
            t_ctx: None,
            out: platoon_out.clone(),
        })
        .unwrap();
        assert!(platoon_out.join("platoon.csv").exists());
        assert!(platoon_out.join("timespace.csv").exists());
        let manifest = std::fs::read_to_string(platoon_out.join("platoon_manifest.json")).unwrap();
        assert!(manifest.contains("\"amplitude\": \"3\""));
        assert!(manifest.contains("platoon.csv"));
    }
}
