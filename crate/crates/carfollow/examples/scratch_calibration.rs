//! Temporary calibration harness (deleted before release).

use carfollow::kernels::KernelChoice;
use carfollow::metrics::{evaluate_testset, EvalProtocol, ModelEntry};
use carfollow::sim::SimOptions;
use carfollow::synthetic::{generate_pairs, index_split, ResidualSpec, SyntheticSpec};
use carfollow::train::{train, TrainConfig};

fn env_usize(k: &str, d: usize) -> usize {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}
fn env_f64(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> carfollow::Result<()> {
    let mode = std::env::var("MODE").unwrap_or_else(|_| "order".into());
    if mode == "recover" {
        // Criterion-4 style: SE data, recover (ell, sigma).
        let spec = SyntheticSpec {
            n_pairs: env_usize("PAIRS", 40),
            steps: env_usize("STEPS", 400),
            seed: 42,
            residual: ResidualSpec::Se { lengthscale: 1.0, sigma: 0.5 },
            noise_std: 0.05,
            ..SyntheticSpec::default()
        };
        let pairs = generate_pairs(&spec)?;
        let n = pairs.len();
        let split = index_split(pairs, n * 7 / 10, n - n * 7 / 10, 42);
        let cfg = TrainConfig {
            kernel: KernelChoice::Se,
            hidden: env_usize("H", 16),
            t_block: 50,
            segments_per_step: env_usize("SEG", 64),
            epochs: env_usize("EPOCHS", 60),
            seed: 42,
            t_ctx: 50,
            dropout: env_f64("DROPOUT", 0.1),
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let (params, report) = train(&split, &cfg)?;
        // Mean ell/sigma over train pairs.
        let mut ell_sum = 0.0;
        let mut sig_sum = 0.0;
        let mut count = 0.0;
        for traj in &split.train {
            let w = &carfollow::data::make_windows(traj, traj.len(), traj.len())?[0];
            let h = carfollow::meanmodel::forward(&params, w, None)?;
            ell_sum += h.ell_nn.iter().sum::<f64>();
            sig_sum += h.sigma_nn.iter().sum::<f64>();
            count += h.ell_nn.len() as f64;
        }
        println!(
            "epochs_run={} best={} wall={:.1}s mean_ell={:.3} (target 1.0) mean_sigma={:.3} (target 0.5) sigma0={:.3} (target 0.05) val={:.4}",
            report.train_nll.len(),
            report.best_epoch,
            t0.elapsed().as_secs_f64(),
            ell_sum / count,
            sig_sum / count,
            params.sigma0(),
            report.val_nll[report.best_epoch],
        );
        return Ok(());
    }

    if mode == "calib" {
        // Dispersion check: ensemble z-scores per state at mid/end horizon.
        let spec = SyntheticSpec {
            n_pairs: 12,
            steps: 400,
            seed: 5,
            residual: ResidualSpec::GapRegimes {
                ell_tight: env_f64("ELL_T", 0.3),
                ell_wide: env_f64("ELL_W", 2.0),
                sigma_tight: env_f64("SIG_T", 0.6),
                sigma_wide: env_f64("SIG_W", 0.25),
                gap_threshold: env_f64("THRESH", 24.0),
            },
            noise_std: 0.05,
            ..SyntheticSpec::default()
        };
        let pairs = generate_pairs(&spec)?;
        let split = index_split(pairs, 6, 2, 5);
        for kernel in [KernelChoice::Gibbs, KernelChoice::White] {
            let cfg = TrainConfig {
                kernel,
                hidden: env_usize("H", 12),
                t_block: 50,
                segments_per_step: 64,
                epochs: env_usize("EPOCHS", 60),
                seed: 5,
                t_ctx: 50,
                ..TrainConfig::default()
            };
            let (params, _) = train(&split, &cfg)?;
            let mut z2 = [[0.0f64; 2]; 2]; // [state][step]
            let mut spread = [[0.0f64; 2]; 2];
            let mut err = [[0.0f64; 2]; 2];
            let mut cells = 0.0;
            for traj in &split.test {
                for t_start in [12.0, 25.0, 40.0, 55.0] {
                    let ens = carfollow::sim::simulate_ensemble(
                        &params, traj, t_start, 10.0, 128, kernel, 50, 7, SimOptions::default(),
                    )?;
                    for (si, get) in [
                        (0usize, Box::new(|r: &carfollow::sim::Rollout, k: usize| r.a_sim[k])
                            as Box<dyn Fn(&carfollow::sim::Rollout, usize) -> f64>),
                        (1usize, Box::new(|r: &carfollow::sim::Rollout, k: usize| r.v_sim[k])),
                    ] {
                        for (ki, k) in [25usize, 49].iter().enumerate() {
                            let vals: Vec<f64> = ens.rollouts.iter().map(|r| get(r, *k)).collect();
                            let m = vals.iter().sum::<f64>() / vals.len() as f64;
                            let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                                / vals.len() as f64)
                                .sqrt();
                            let truth = if si == 0 { ens.truth.a[*k] } else { ens.truth.v[*k] };
                            let z = (truth - m) / sd.max(1e-9);
                            z2[si][ki] += z * z;
                            spread[si][ki] += sd;
                            err[si][ki] += (truth - m).abs();
                        }
                    }
                    cells += 1.0;
                }
            }
            println!("{}:", kernel.name());
            for (si, name) in ["a", "v"].iter().enumerate() {
                for (ki, k) in [25, 49].iter().enumerate() {
                    println!(
                        "  {name}@step{k}: rms_z={:.2} mean_spread={:.3} mean_abs_err={:.3}",
                        (z2[si][ki] / cells).sqrt(),
                        spread[si][ki] / cells,
                        err[si][ki] / cells
                    );
                }
            }
        }
        return Ok(());
    }

    if mode == "platoon" {
        let spec = SyntheticSpec {
            n_pairs: env_usize("PAIRS", 48),
            steps: 400,
            seed: 5,
            residual: ResidualSpec::GapRegimes {
                ell_tight: 0.3,
                ell_wide: 1.2,
                sigma_tight: 0.35,
                sigma_wide: 0.15,
                gap_threshold: 24.0,
            },
            noise_std: 0.05,
            ..SyntheticSpec::default()
        };
        let pairs = generate_pairs(&spec)?;
        let n = pairs.len();
        let rest = n - 6;
        let split = index_split(pairs, rest * 7 / 10, rest - rest * 7 / 10, 5);
        let cfg = TrainConfig {
            kernel: KernelChoice::Gibbs,
            hidden: env_usize("H", 24),
            t_block: 50,
            segments_per_step: 64,
            epochs: env_usize("EPOCHS", 250),
            seed: 5,
            t_ctx: 50,
            dropout: 0.0,
            ..TrainConfig::default()
        };
        let (params, _) = train(&split, &cfg)?;
        let pcfg = carfollow::sim::PlatoonConfig {
            n_vehicles: 10,
            lead_profile: carfollow::sim::LeadProfile {
                base_speed: 15.0,
                amplitude: 5.0,
                ramp_secs: 20.0,
                hold_secs: 40.0,
            },
            initial_gap: env_f64("GAP", 26.0),
            vehicle_length: 4.5,
            warmup_secs: 30.0,
            horizon_secs: env_f64("HORIZON", 250.0),
            dt: 0.2,
            seed: env_usize("PSEED", 11) as u64,
        };
        let res = carfollow::sim::simulate_platoon(
            &params,
            &pcfg,
            KernelChoice::Gibbs,
            50,
            SimOptions::default(),
        )?;
        let warm = (pcfg.warmup_secs / pcfg.dt).round() as usize;
        for (i, veh) in res.vehicles.iter().enumerate() {
            let v = &veh.v_sim[warm..];
            let vmax = v.iter().cloned().fold(f64::MIN, f64::max);
            let vmin = v.iter().cloned().fold(f64::MAX, f64::min);
            println!(
                "vehicle {i:>2}: osc {:.2} m/s ({:.2}x), collided: {}",
                vmax - vmin,
                (vmax - vmin) / 5.0,
                veh.any_collision()
            );
        }
        return Ok(());
    }

    // Criterion-5 style: regime data, 4-kernel ordering.
    let base_seed = env_usize("SEED", 5) as u64;
    let spec = SyntheticSpec {
        n_pairs: env_usize("PAIRS", 24),
        steps: env_usize("STEPS", 400),
        seed: base_seed,
        residual: ResidualSpec::GapRegimes {
            ell_tight: env_f64("ELL_T", 0.3),
            ell_wide: env_f64("ELL_W", 2.0),
            sigma_tight: env_f64("SIG_T", 0.6),
            sigma_wide: env_f64("SIG_W", 0.25),
            gap_threshold: env_f64("THRESH", 24.0),
        },
        noise_std: 0.05,
        ..SyntheticSpec::default()
    };
    let pairs = generate_pairs(&spec)?;
    let n = pairs.len();
    let n_test = env_usize("NTEST", 4);
    let rest = n - n_test;
    let split = index_split(pairs, rest * 7 / 10, rest - rest * 7 / 10, base_seed);
    let t0 = std::time::Instant::now();
    let mut models = Vec::new();
    for kernel in
        [KernelChoice::Gibbs, KernelChoice::Matern52, KernelChoice::Se, KernelChoice::White]
    {
        let cfg = TrainConfig {
            kernel,
            hidden: env_usize("H", 12),
            t_block: 50,
            segments_per_step: env_usize("SEG", 64),
            epochs: env_usize("EPOCHS", 60),
            seed: base_seed,
            t_ctx: 50,
            dropout: env_f64("DROPOUT", 0.1),
            ..TrainConfig::default()
        };
        let (params, report) = train(&split, &cfg)?;
        println!(
            "{}: epochs_run={} best_val={:.4}",
            kernel.name(),
            report.train_nll.len(),
            report.val_nll[report.best_epoch]
        );
        models.push(ModelEntry { label: kernel.name().into(), kernel, params });
    }
    println!("training wall: {:.1}s", t0.elapsed().as_secs_f64());
    let t1 = std::time::Instant::now();
    let protocol = EvalProtocol {
        horizon_secs: 10.0,
        start_stride_secs: env_f64("STRIDE", 5.0),
        rounds: env_usize("ROUNDS", 128),
    };
    let table = evaluate_testset(&models, &split, &protocol, 50, 99, SimOptions::default())?;
    println!("eval wall: {:.1}s", t1.elapsed().as_secs_f64());
    println!("{:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "model", "crps(a)", "es(a)", "rmse(a)", "crps(v)", "crps(s)");
    for m in &models {
        println!(
            "{:>10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            m.label,
            table.mean_of(&m.label, "a", "crps").unwrap(),
            table.mean_of(&m.label, "a", "es").unwrap(),
            table.mean_of(&m.label, "a", "rmse").unwrap(),
            table.mean_of(&m.label, "v", "crps").unwrap(),
            table.mean_of(&m.label, "s", "crps").unwrap(),
        );
    }
    Ok(())
}
