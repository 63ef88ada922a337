//! Synthetic car-following pairs with known ground-truth structure, used
//! by the runnable examples and the acceptance fixtures.
//!
//! A follower tracks a varied-speed leader through a fixed linear rule
//! (constant time-gap policy); on top of the rule a temporally correlated
//! residual is drawn from a known kernel, plus i.i.d. observation noise.
//! Recovery of the residual's lengthscale/std and the kernel-comparison
//! orderings are then checkable against these known generators.

use nalgebra::DVector;

use crate::data::{DatasetSplit, Trajectory};
use crate::error::{Error, Result};
use crate::kernels::{build_gram, KernelSpec, NonstationaryParams, StationaryParams};
use crate::meanmodel::sigmoid;
use crate::rng::{derive_seed, rng_from_seed, standard_normal};

/// Linear constant-time-gap car-following rule:
/// a = k_gap (s - (min_gap + time_gap v)) + k_dv dv.
#[derive(Debug, Clone, Copy)]
pub struct LinearRule {
    pub k_gap: f64,
    pub k_dv: f64,
    pub time_gap: f64,
    pub min_gap: f64,
}

impl Default for LinearRule {
    fn default() -> Self {
        LinearRule { k_gap: 0.1, k_dv: 0.5, time_gap: 1.2, min_gap: 8.0 }
    }
}

impl LinearRule {
    pub fn acc(&self, s: f64, dv: f64, v: f64) -> f64 {
        self.k_gap * (s - (self.min_gap + self.time_gap * v)) + self.k_dv * dv
    }

    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        self.min_gap + self.time_gap * v
    }
}

/// Residual process added on top of the linear rule.
#[derive(Debug, Clone, Copy)]
pub enum ResidualSpec {
    /// No correlated residual (only i.i.d. noise).
    None,
    /// Stationary SE residual with known lengthscale and marginal std.
    Se { lengthscale: f64, sigma: f64 },
    /// Regime-switching Gibbs residual: tight gaps get one
    /// (lengthscale, std) pair, wide gaps another, blended smoothly
    /// around `gap_threshold`.
    GapRegimes {
        ell_tight: f64,
        ell_wide: f64,
        sigma_tight: f64,
        sigma_wide: f64,
        gap_threshold: f64,
    },
}

/// Generator configuration.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_pairs: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub rule: LinearRule,
    pub residual: ResidualSpec,
    /// Std of the i.i.d. observation noise on acceleration, m/s^2.
    pub noise_std: f64,
    /// Range of leader target speeds, m/s.
    pub speed_range: (f64, f64),
    pub pair_prefix: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_pairs: 20,
            steps: 400,
            dt: 0.2,
            seed: 0,
            rule: LinearRule::default(),
            residual: ResidualSpec::Se { lengthscale: 1.0, sigma: 0.5 },
            noise_std: 0.05,
            speed_range: (10.0, 20.0),
            pair_prefix: "synth".into(),
        }
    }
}

const LEAD_LENGTH: f64 = 4.5;

/// Leader speed series: piecewise targets with linear ramps.
fn lead_speed_series(spec: &SyntheticSpec, rng: &mut crate::rng::SimRng) -> Vec<f64> {
    use rand::Rng;
    let (lo, hi) = spec.speed_range;
    let mut v = Vec::with_capacity(spec.steps);
    let mut current = rng.gen_range(lo..hi);
    let mut target = rng.gen_range(lo..hi);
    let mut ramp_rate = 0.5; // m/s^2 toward the target
    while v.len() < spec.steps {
        let hold_steps = rng.gen_range((10.0 / spec.dt) as usize..(25.0 / spec.dt) as usize);
        for _ in 0..hold_steps {
            if v.len() >= spec.steps {
                break;
            }
            let diff = target - current;
            let step = (ramp_rate * spec.dt).min(diff.abs()) * diff.signum();
            current = (current + step).max(0.5);
            v.push(current);
        }
        target = rng.gen_range(lo..hi);
        ramp_rate = rng.gen_range(0.3..0.8);
    }
    v
}

fn regime_params(gap: f64, residual: &ResidualSpec) -> (f64, f64) {
    match residual {
        ResidualSpec::GapRegimes { ell_tight, ell_wide, sigma_tight, sigma_wide, gap_threshold } => {
            let w = sigmoid((gap - gap_threshold) / 2.0);
            (
                ell_tight + w * (ell_wide - ell_tight),
                sigma_tight + w * (sigma_wide - sigma_tight),
            )
        }
        _ => unreachable!("regime params only apply to GapRegimes"),
    }
}

/// Roll the follower forward under the rule plus a fixed residual series.
/// Returns (foll_pos, foll_vel, realized_acc, gap_series) or None if a gap
/// collapses.
fn roll_follower(
    spec: &SyntheticSpec,
    lead_pos: &[f64],
    lead_vel: &[f64],
    residual: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = spec.steps;
    let dt = spec.dt;
    let mut pos = vec![0.0; n];
    let mut vel = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut gaps = vec![0.0; n];
    vel[0] = lead_vel[0];
    pos[0] = lead_pos[0] - LEAD_LENGTH - spec.rule.equilibrium_gap(vel[0]);
    for k in 0..n {
        let gap = lead_pos[k] - pos[k] - LEAD_LENGTH;
        if gap <= 0.5 {
            return None;
        }
        gaps[k] = gap;
        let dv = lead_vel[k] - vel[k];
        let a_raw = spec.rule.acc(gap, dv, vel[k]) + residual[k];
        let a = if vel[k] + a_raw * dt < 0.0 { -vel[k] / dt } else { a_raw };
        acc[k] = a;
        if k + 1 < n {
            vel[k + 1] = vel[k] + a * dt;
            pos[k + 1] = pos[k] + 0.5 * (vel[k] + vel[k + 1]) * dt;
        }
    }
    Some((pos, vel, acc, gaps))
}

/// Generate `n_pairs` synthetic trajectories. Deterministic in the spec.
pub fn generate_pairs(spec: &SyntheticSpec) -> Result<Vec<Trajectory>> {
    if spec.steps < 2 || spec.n_pairs == 0 {
        return Err(Error::Argument("synthetic spec needs steps >= 2 and n_pairs >= 1".into()));
    }
    let times: Vec<f64> = (0..spec.steps).map(|i| i as f64 * spec.dt).collect();
    let mut out = Vec::with_capacity(spec.n_pairs);
    for pair in 0..spec.n_pairs {
        let mut traj = None;
        for attempt in 0..20u64 {
            let mut rng =
                rng_from_seed(derive_seed(spec.seed, "synth-pair", &[pair as u64, attempt]));
            let lead_vel = lead_speed_series(spec, &mut rng);
            let mut lead_pos = vec![60.0; spec.steps];
            for i in 1..spec.steps {
                lead_pos[i] = lead_pos[i - 1] + 0.5 * (lead_vel[i - 1] + lead_vel[i]) * spec.dt;
            }

            // Correlated residual over the whole grid.
            let delta: Vec<f64> = match spec.residual {
                ResidualSpec::None => vec![0.0; spec.steps],
                ResidualSpec::Se { lengthscale, sigma } => {
                    let gram = build_gram(
                        &times,
                        &KernelSpec::Se(StationaryParams { lengthscale, marginal_std: sigma }),
                        0.0,
                    )?;
                    let z = DVector::from_fn(spec.steps, |_, _| standard_normal(&mut rng));
                    (&gram.chol * z).iter().copied().collect()
                }
                ResidualSpec::GapRegimes { .. } => {
                    // Regimes follow the driving context: take the gap series
                    // of the deterministic (residual-free) rollout, map it to
                    // per-step kernel params, and sample from that Gibbs prior.
                    let zeros = vec![0.0; spec.steps];
                    let (_, _, _, gaps) = roll_follower(spec, &lead_pos, &lead_vel, &zeros)
                        .ok_or_else(|| {
                            Error::Data(format!("synthetic pair {pair}: mean rollout collapsed"))
                        })?;
                    let mut ells = Vec::with_capacity(spec.steps);
                    let mut sigmas = Vec::with_capacity(spec.steps);
                    for &g in &gaps {
                        let (l, s) = regime_params(g, &spec.residual);
                        ells.push(l);
                        sigmas.push(s);
                    }
                    let gram = build_gram(
                        &times,
                        &KernelSpec::Gibbs(NonstationaryParams {
                            lengthscales: ells,
                            marginal_stds: sigmas,
                        }),
                        0.0,
                    )?;
                    let z = DVector::from_fn(spec.steps, |_, _| standard_normal(&mut rng));
                    (&gram.chol * z).iter().copied().collect()
                }
            };
            let noisy: Vec<f64> =
                delta.iter().map(|d| d + spec.noise_std * standard_normal(&mut rng)).collect();

            if let Some((foll_pos, foll_vel, foll_acc, _)) =
                roll_follower(spec, &lead_pos, &lead_vel, &noisy)
            {
                let t = Trajectory {
                    pair_id: format!("{}{pair:03}", spec.pair_prefix),
                    dt: spec.dt,
                    t_first: 0.0,
                    lead_length: LEAD_LENGTH,
                    lead_pos,
                    lead_vel,
                    foll_pos,
                    foll_vel,
                    foll_acc,
                };
                t.validate()?;
                traj = Some(t);
                break;
            }
        }
        out.push(traj.ok_or_else(|| {
            Error::Data(format!("synthetic pair {pair}: no stable rollout in 20 attempts"))
        })?);
    }
    Ok(out)
}

/// Partition pairs by index: first `n_train` train, next `n_val`
/// validation, remainder test.
pub fn index_split(pairs: Vec<Trajectory>, n_train: usize, n_val: usize, seed: u64) -> DatasetSplit {
    let n_train = n_train.min(pairs.len());
    let n_val = n_val.min(pairs.len() - n_train);
    let mut pairs = pairs;
    let test = pairs.split_off(n_train + n_val);
    let val = pairs.split_off(n_train);
    DatasetSplit { train: pairs, val, test, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_pairs_are_valid_and_deterministic() {
        let spec = SyntheticSpec { n_pairs: 3, steps: 200, ..SyntheticSpec::default() };
        let a = generate_pairs(&spec).unwrap();
        let b = generate_pairs(&spec).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
            x.validate().unwrap();
            assert_eq!(x.len(), 200);
        }
    }

    #[test]
    fn regime_residuals_track_gap() {
        let spec = SyntheticSpec {
            n_pairs: 2,
            steps: 250,
            residual: ResidualSpec::GapRegimes {
                ell_tight: 0.3,
                ell_wide: 2.0,
                sigma_tight: 0.6,
                sigma_wide: 0.25,
                gap_threshold: 22.0,
            },
            ..SyntheticSpec::default()
        };
        let pairs = generate_pairs(&spec).unwrap();
        for p in &pairs {
            p.validate().unwrap();
        }
    }

    #[test]
    fn index_split_partitions() {
        let spec = SyntheticSpec { n_pairs: 10, steps: 120, ..SyntheticSpec::default() };
        let pairs = generate_pairs(&spec).unwrap();
        let split = index_split(pairs, 6, 2, 9);
        assert_eq!(split.train.len(), 6);
        assert_eq!(split.val.len(), 2);
        assert_eq!(split.test.len(), 2);
    }

    #[test]
    fn residual_free_pairs_follow_the_rule() {
        let spec = SyntheticSpec {
            n_pairs: 1,
            steps: 300,
            residual: ResidualSpec::None,
            noise_std: 0.0,
            ..SyntheticSpec::default()
        };
        let p = &generate_pairs(&spec).unwrap()[0];
        for k in 0..(p.len() - 1) {
            let expect = spec.rule.acc(p.gap(k), p.rel_speed(k), p.foll_vel[k]);
            // Realized acceleration equals the rule except at speed clamps.
            assert!((p.foll_acc[k] - expect).abs() < 1e-9 || p.foll_vel[k + 1] == 0.0);
        }
    }
}
