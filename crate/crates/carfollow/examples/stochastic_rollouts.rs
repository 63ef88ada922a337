//! Train a small model and run a stochastic rollout ensemble on a held-out
//! pair: the follower is simulated forward while the leader is replayed,
//! sampling accelerations from the GP predictive conditional each step.
//!
//! ```text
//! cargo run --release --example stochastic_rollouts
//! ```

use carfollow::kernels::KernelChoice;
use carfollow::metrics::{crps_samples, rmse};
use carfollow::sim::{simulate_ensemble, SimOptions};
use carfollow::synthetic::{generate_pairs, index_split, ResidualSpec, SyntheticSpec};
use carfollow::train::{train, TrainConfig};

fn main() -> carfollow::Result<()> {
    let spec = SyntheticSpec {
        n_pairs: 10,
        steps: 350,
        seed: 21,
        residual: ResidualSpec::Se { lengthscale: 0.8, sigma: 0.4 },
        ..SyntheticSpec::default()
    };
    let pairs = generate_pairs(&spec)?;
    let split = index_split(pairs, 7, 2, spec.seed);
    let cfg = TrainConfig {
        kernel: KernelChoice::Gibbs,
        hidden: 8,
        t_block: 25,
        segments_per_step: 32,
        epochs: 15,
        seed: 21,
        t_ctx: 25,
        ..TrainConfig::default()
    };
    println!("training ({} epochs)...", cfg.epochs);
    let (params, report) = train(&split, &cfg)?;
    println!("final val NLL/step: {:.4}", report.val_nll.last().unwrap());

    let test_pair = &split.test[0];
    let (t_start, horizon, rounds) = (20.0, 10.0, 100);
    let ens = simulate_ensemble(
        &params,
        test_pair,
        t_start,
        horizon,
        rounds,
        cfg.kernel,
        cfg.t_ctx,
        500,
        SimOptions::default(),
    )?;
    println!(
        "\n{} rollouts of {} steps on held-out pair {} starting at t = {t_start} s",
        rounds,
        ens.rollouts[0].len(),
        test_pair.pair_id
    );

    // Pointwise ensemble band vs truth at a few steps.
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "t", "truth_v", "mean_v", "p10_v", "p90_v");
    for k in [0, 12, 25, 37, 49] {
        let mut vs: Vec<f64> = ens.rollouts.iter().map(|r| r.v_sim[k]).collect();
        vs.sort_by(f64::total_cmp);
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        println!(
            "{:>6.1} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            ens.truth.times[k],
            ens.truth.v[k],
            mean,
            vs[rounds / 10],
            vs[rounds - rounds / 10 - 1],
        );
    }

    let n = ens.truth.times.len();
    let mean_a: Vec<f64> = (0..n)
        .map(|k| ens.rollouts.iter().map(|r| r.a_sim[k]).sum::<f64>() / rounds as f64)
        .collect();
    let mut crps_a = 0.0;
    for k in 0..n {
        let samples: Vec<f64> = ens.rollouts.iter().map(|r| r.a_sim[k]).collect();
        crps_a += crps_samples(&samples, ens.truth.a[k])? / n as f64;
    }
    println!("\nRMSE(a) of the ensemble mean: {:.4} m/s^2", rmse(&ens.truth.a, &mean_a)?);
    println!("CRPS(a) averaged over steps:  {crps_a:.4} m/s^2");
    let collisions = ens.rollouts.iter().filter(|r| r.any_collision()).count();
    println!("collided rollouts: {collisions}/{rounds}");
    Ok(())
}
