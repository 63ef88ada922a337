//! Stochastic rollout engine: single rolling-prediction rounds,
//! multi-round ensembles per test pair, and the multi-vehicle platoon
//! scenario.
//!
//! Per step the follower's covariates are built from its simulated state
//! and the replayed (or simulated, in a platoon) leader; the recurrent
//! state advances; the GP residual is conditioned on the sliding window of
//! previously sampled residuals; an acceleration is drawn and integrated:
//! v' = v + a dt, p' = p + (v + v') dt / 2. Those two identities hold
//! bitwise on every rollout by construction.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Trajectory;
use crate::error::{Error, Result};
use crate::gp::{predict_next, PredictiveGaussian};
use crate::kernels::KernelChoice;
use crate::meanmodel::{step, HeadOutputs, LstmState, ModelParams, StepHeads};
use crate::rng::{derive_seed, rng_from_seed, standard_normal, SimRng};

/// Knobs for degenerate / diagnostic rollouts.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Skip GP conditioning and sampling entirely: a = a_nn each step.
    pub mean_only: bool,
    /// Add sigma_0^2 to the predictive variance before sampling, so draws
    /// realize the observation process. On by default.
    pub include_obs_noise: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { mean_only: false, include_obs_noise: true }
    }
}

/// One simulated follower trajectory plus its interpretability traces.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub pair_id: String,
    pub seed: u64,
    /// Step times; state columns are the values at these times.
    pub times: Vec<f64>,
    /// Realized accelerations (post speed-clamp), m/s^2.
    pub a_sim: Vec<f64>,
    pub v_sim: Vec<f64>,
    pub p_sim: Vec<f64>,
    /// Raw bumper gap (can go nonpositive in collided rollouts), m.
    pub s_sim: Vec<f64>,
    pub dv_sim: Vec<f64>,
    /// Per-step head outputs along the simulated covariates.
    pub a_nn_trace: Vec<f64>,
    pub ell_trace: Vec<f64>,
    pub sigma_trace: Vec<f64>,
    /// Per-step predictive mean / std actually sampled from.
    pub mu_trace: Vec<f64>,
    pub sd_trace: Vec<f64>,
    /// Gap <= 0 at this step (input gap floored, rollout continues).
    pub collided: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn any_collision(&self) -> bool {
        self.collided.iter().any(|&c| c)
    }
}

/// Ground-truth slices aligned with an ensemble's rollout steps.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub dv: Vec<f64>,
}

/// All rollouts of one (pair, start) cell plus the aligned truth.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub rollouts: Vec<Rollout>,
    pub truth: GroundTruth,
    pub t_start: f64,
}

/// Sliding-window GP conditioning state along one rollout.
pub(crate) struct RollingGp {
    kernel: KernelChoice,
    t_ctx: usize,
    sigma0_sq: f64,
    include_obs_noise: bool,
    times: Vec<f64>,
    residuals: Vec<f64>,
    a_nns: Vec<f64>,
    ells: Vec<f64>,
    sigmas: Vec<f64>,
}

impl RollingGp {
    pub(crate) fn new(
        kernel: KernelChoice,
        t_ctx: usize,
        sigma0_sq: f64,
        include_obs_noise: bool,
    ) -> Self {
        RollingGp {
            kernel,
            t_ctx,
            sigma0_sq,
            include_obs_noise,
            times: Vec::new(),
            residuals: Vec::new(),
            a_nns: Vec::new(),
            ells: Vec::new(),
            sigmas: Vec::new(),
        }
    }

    /// Predictive distribution at `t` given the windowed residual history.
    pub(crate) fn predict(&self, t: f64, heads: StepHeads) -> Result<PredictiveGaussian> {
        let w = self.times.len().min(self.t_ctx);
        let lo = self.times.len() - w;
        let mut a_nn = self.a_nns[lo..].to_vec();
        let mut ell = self.ells[lo..].to_vec();
        let mut sigma = self.sigmas[lo..].to_vec();
        a_nn.push(heads.a_nn);
        ell.push(heads.ell);
        sigma.push(heads.sigma);
        let head_block = HeadOutputs {
            a_nn,
            ell_nn: ell,
            sigma_nn: sigma,
            hidden_states: DMatrix::zeros(0, 0),
        };
        predict_next(
            &self.residuals[lo..],
            &self.times[lo..],
            t,
            &head_block,
            self.kernel,
            self.sigma0_sq,
            self.include_obs_noise,
        )
    }

    /// Record the realized acceleration at `t`; the sampled trajectory is
    /// treated as observed for later conditioning.
    pub(crate) fn push(&mut self, t: f64, heads: StepHeads, realized_a: f64) {
        self.times.push(t);
        self.residuals.push(realized_a - heads.a_nn);
        self.a_nns.push(heads.a_nn);
        self.ells.push(heads.ell);
        self.sigmas.push(heads.sigma);
    }
}

/// One stochastic rollout of the follower against the recorded leader.
///
/// The trajectory must cover `[t_start - T_ctx dt, t_end]`: the recurrent
/// state is warm-started on the true covariates over the pre-window, the
/// follower state is initialized from the truth at `t_start`, and the
/// leader is replayed from the recording while the follower is simulated.
#[allow(clippy::too_many_arguments)]
pub fn simulate_round(
    params: &ModelParams,
    traj: &Trajectory,
    t_start: f64,
    t_end: f64,
    kernel: KernelChoice,
    t_ctx: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<Rollout> {
    let dt = traj.dt;
    let i_start_f = (t_start - traj.t_first) / dt;
    let i_start = i_start_f.round() as i64;
    if (i_start_f - i_start as f64).abs() > 1e-6 {
        return Err(Error::Argument(format!(
            "t_start {t_start} does not fall on the sampling grid (dt = {dt})"
        )));
    }
    let n_steps_f = (t_end - t_start) / dt;
    let n_steps = n_steps_f.round() as i64;
    if n_steps < 1 || (n_steps_f - n_steps as f64).abs() > 1e-6 {
        return Err(Error::Argument(format!(
            "horizon must be a positive multiple of dt, got t_start {t_start}, t_end {t_end}"
        )));
    }
    if i_start < t_ctx as i64 {
        return Err(Error::Argument(format!(
            "t_start {t_start} leaves only {i_start} steps of history, need T_ctx = {t_ctx}"
        )));
    }
    if i_start + n_steps > traj.len() as i64 - 1 {
        return Err(Error::Argument(format!(
            "horizon extends to t_end {t_end}, beyond the recorded data for pair {}",
            traj.pair_id
        )));
    }
    let i_start = i_start as usize;
    let n = n_steps as usize;

    let mut rng = rng_from_seed(seed);
    let sigma0 = params.sigma0();
    let mut gp = RollingGp::new(kernel, t_ctx, sigma0 * sigma0, opts.include_obs_noise);

    // Warm-start the recurrent state over the pre-window (true covariates)
    // and seed the conditioning set with the observed residuals there; the
    // rolling loop then appends sampled residuals as the window slides.
    let mut state = LstmState::zeros(params.hidden);
    for i in (i_start - t_ctx)..i_start {
        let x = [traj.gap(i), traj.rel_speed(i), traj.foll_vel[i]];
        let (next, heads) = step(params, &state, &x);
        gp.push(traj.time(i), heads, traj.foll_acc[i]);
        state = next;
    }

    let mut out = Rollout {
        pair_id: traj.pair_id.clone(),
        seed,
        times: (0..n).map(|k| traj.time(i_start + k)).collect(),
        a_sim: vec![0.0; n],
        v_sim: vec![0.0; n],
        p_sim: vec![0.0; n],
        s_sim: vec![0.0; n],
        dv_sim: vec![0.0; n],
        a_nn_trace: vec![0.0; n],
        ell_trace: vec![0.0; n],
        sigma_trace: vec![0.0; n],
        mu_trace: vec![0.0; n],
        sd_trace: vec![0.0; n],
        collided: vec![false; n],
    };
    out.v_sim[0] = traj.foll_vel[i_start];
    out.p_sim[0] = traj.foll_pos[i_start];

    for k in 0..n {
        let i = i_start + k;
        let t_k = out.times[k];
        let v_k = out.v_sim[k];
        let p_k = out.p_sim[k];
        let raw_gap = traj.lead_pos[i] - p_k - traj.lead_length;
        let collided = raw_gap <= 0.0;
        let s_model = raw_gap.max(0.01);
        let v_model = v_k.max(0.0);
        let dv = traj.lead_vel[i] - v_k;

        let (next_state, heads) = step(params, &state, &[s_model, dv, v_model]);
        state = next_state;

        let (mu, var) = if opts.mean_only {
            (heads.a_nn, 0.0)
        } else {
            let pred = gp.predict(t_k, heads)?;
            (pred.mean, pred.var)
        };
        let a_raw = if opts.mean_only { mu } else { mu + var.sqrt() * standard_normal(&mut rng) };

        // Speed floor: when the draw would push the speed below zero the
        // realized acceleration is (v' - v)/dt with v' = 0 up to rounding.
        let a_k = if v_k + a_raw * dt < 0.0 { -v_k / dt } else { a_raw };
        let v_next = v_k + a_k * dt;
        let p_next = p_k + 0.5 * (v_k + v_next) * dt;

        out.a_sim[k] = a_k;
        out.s_sim[k] = raw_gap;
        out.dv_sim[k] = dv;
        out.a_nn_trace[k] = heads.a_nn;
        out.ell_trace[k] = heads.ell;
        out.sigma_trace[k] = heads.sigma;
        out.mu_trace[k] = mu;
        out.sd_trace[k] = var.sqrt();
        out.collided[k] = collided;
        if !opts.mean_only {
            gp.push(t_k, heads, a_k);
        }
        if k + 1 < n {
            out.v_sim[k + 1] = v_next;
            out.p_sim[k + 1] = p_next;
        }
    }
    Ok(out)
}

/// `rounds` independent rollouts with seeds `seed`, `seed + 1`, ...,
/// computed in parallel and merged by round index.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    params: &ModelParams,
    traj: &Trajectory,
    t_start: f64,
    horizon: f64,
    rounds: usize,
    kernel: KernelChoice,
    t_ctx: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<EnsembleResult> {
    if rounds == 0 {
        return Err(Error::Argument("rounds must be >= 1".into()));
    }
    let t_end = t_start + horizon;
    let rollouts: Vec<Result<Rollout>> = (0..rounds)
        .into_par_iter()
        .map(|i| simulate_round(params, traj, t_start, t_end, kernel, t_ctx, seed + i as u64, opts))
        .collect();
    let mut all = Vec::with_capacity(rounds);
    for r in rollouts {
        all.push(r?);
    }
    let n = all[0].len();
    let i_start = ((t_start - traj.t_first) / traj.dt).round() as usize;
    let truth = GroundTruth {
        times: (0..n).map(|k| traj.time(i_start + k)).collect(),
        a: (0..n).map(|k| traj.foll_acc[i_start + k]).collect(),
        v: (0..n).map(|k| traj.foll_vel[i_start + k]).collect(),
        s: (0..n).map(|k| traj.gap(i_start + k)).collect(),
        dv: (0..n).map(|k| traj.rel_speed(i_start + k)).collect(),
    };
    Ok(EnsembleResult { rollouts: all, truth, t_start })
}

/// Trapezoidal lead-vehicle speed maneuver: ramp up by `amplitude` over
/// `ramp_secs`, hold `hold_secs`, ramp back down.
#[derive(Debug, Clone, Copy)]
pub struct LeadProfile {
    pub base_speed: f64,
    pub amplitude: f64,
    pub ramp_secs: f64,
    pub hold_secs: f64,
}

/// Multi-vehicle platoon scenario.
#[derive(Debug, Clone, Copy)]
pub struct PlatoonConfig {
    pub n_vehicles: usize,
    pub lead_profile: LeadProfile,
    /// Initial bumper-to-bumper gap between consecutive vehicles, m.
    pub initial_gap: f64,
    /// Physical vehicle length, m.
    pub vehicle_length: f64,
    /// Constant-speed equilibrium period before the maneuver, s.
    pub warmup_secs: f64,
    /// Total simulated time, s.
    pub horizon_secs: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        PlatoonConfig {
            n_vehicles: 10,
            lead_profile: LeadProfile {
                base_speed: 15.0,
                amplitude: 5.0,
                ramp_secs: 20.0,
                hold_secs: 40.0,
            },
            initial_gap: 20.0,
            vehicle_length: 4.5,
            warmup_secs: 30.0,
            horizon_secs: 200.0,
            dt: 0.2,
            seed: 0,
        }
    }
}

impl PlatoonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vehicles < 2 {
            return Err(Error::Argument(format!(
                "platoon needs >= 2 vehicles, got {}",
                self.n_vehicles
            )));
        }
        let p = &self.lead_profile;
        if !(p.base_speed >= 0.0 && p.base_speed + p.amplitude >= 0.0) {
            return Err(Error::Argument("lead profile produces negative speeds".into()));
        }
        if self.initial_gap <= 0.0 {
            return Err(Error::Argument(format!(
                "initial gap must be > 0, got {}",
                self.initial_gap
            )));
        }
        if !(self.dt > 0.0 && self.horizon_secs > 0.0 && self.warmup_secs >= 0.0) {
            return Err(Error::Argument("dt and horizon must be positive".into()));
        }
        let maneuver = self.warmup_secs + 2.0 * p.ramp_secs + p.hold_secs;
        if self.horizon_secs < maneuver {
            return Err(Error::Argument(format!(
                "horizon {}s is shorter than warmup + maneuver = {maneuver}s",
                self.horizon_secs
            )));
        }
        Ok(())
    }
}

/// All vehicles of a platoon run; `vehicles[0]` is the scripted leader.
#[derive(Debug, Clone)]
pub struct PlatoonResult {
    pub dt: f64,
    pub times: Vec<f64>,
    pub vehicles: Vec<Rollout>,
}

fn lead_acceleration(t: f64, cfg: &PlatoonConfig) -> f64 {
    let p = &cfg.lead_profile;
    let t0 = cfg.warmup_secs;
    if p.ramp_secs <= 0.0 {
        return 0.0;
    }
    let rate = p.amplitude / p.ramp_secs;
    if t >= t0 && t < t0 + p.ramp_secs {
        rate
    } else if t >= t0 + p.ramp_secs + p.hold_secs && t < t0 + 2.0 * p.ramp_secs + p.hold_secs {
        -rate
    } else {
        0.0
    }
}

/// Simulate the platoon: vehicle 0 follows the trapezoidal profile
/// exactly; vehicle k follows vehicle k-1 with the simulated predecessor
/// as leader. An equilibrium warm-up (constant speed, zero acceleration)
/// precedes the maneuver so hidden states settle; stochastic sampling and
/// residual conditioning begin when the warm-up ends.
pub fn simulate_platoon(
    params: &ModelParams,
    cfg: &PlatoonConfig,
    kernel: KernelChoice,
    t_ctx: usize,
    opts: SimOptions,
) -> Result<PlatoonResult> {
    cfg.validate()?;
    let dt = cfg.dt;
    let n = (cfg.horizon_secs / dt).round() as usize;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let warmup_steps = (cfg.warmup_secs / dt).round() as usize;

    let empty_rollout = |id: String, seed: u64| Rollout {
        pair_id: id,
        seed,
        times: times.clone(),
        a_sim: vec![0.0; n],
        v_sim: vec![0.0; n],
        p_sim: vec![0.0; n],
        s_sim: vec![0.0; n],
        dv_sim: vec![0.0; n],
        a_nn_trace: vec![0.0; n],
        ell_trace: vec![0.0; n],
        sigma_trace: vec![0.0; n],
        mu_trace: vec![0.0; n],
        sd_trace: vec![0.0; n],
        collided: vec![false; n],
    };

    // Scripted leader, integrated with the same update identities.
    let mut lead = empty_rollout("vehicle000".into(), cfg.seed);
    lead.v_sim[0] = cfg.lead_profile.base_speed;
    lead.p_sim[0] = 0.0;
    for k in 0..n {
        let a_k = lead_acceleration(times[k], cfg);
        let v_k = lead.v_sim[k];
        let v_next = v_k + a_k * dt;
        let p_next = lead.p_sim[k] + 0.5 * (v_k + v_next) * dt;
        lead.a_sim[k] = a_k;
        if k + 1 < n {
            lead.v_sim[k + 1] = v_next;
            lead.p_sim[k + 1] = p_next;
        }
    }

    let mut vehicles = vec![lead];
    let sigma0 = params.sigma0();
    for veh in 1..cfg.n_vehicles {
        let seed = derive_seed(cfg.seed, "vehicle", &[veh as u64]);
        let mut rng: SimRng = rng_from_seed(seed);
        let mut out = empty_rollout(format!("vehicle{veh:03}"), seed);
        out.v_sim[0] = cfg.lead_profile.base_speed;
        out.p_sim[0] = -(veh as f64) * (cfg.initial_gap + cfg.vehicle_length);

        let mut state = LstmState::zeros(params.hidden);
        let mut gp = RollingGp::new(kernel, t_ctx, sigma0 * sigma0, opts.include_obs_noise);
        let leader = &vehicles[veh - 1];

        for k in 0..n {
            let v_k = out.v_sim[k];
            let p_k = out.p_sim[k];
            let raw_gap = leader.p_sim[k] - p_k - cfg.vehicle_length;
            let collided = raw_gap <= 0.0;
            let s_model = raw_gap.max(0.01);
            let v_model = v_k.max(0.0);
            let dv = leader.v_sim[k] - v_k;

            let (next_state, heads) = step(params, &state, &[s_model, dv, v_model]);
            state = next_state;

            let in_warmup = k < warmup_steps;
            let (mu, var, a_raw) = if in_warmup {
                // Equilibrium scaffold: hold speed, settle hidden state.
                (0.0, 0.0, 0.0)
            } else if opts.mean_only {
                (heads.a_nn, 0.0, heads.a_nn)
            } else {
                let pred = gp.predict(times[k], heads)?;
                let draw = pred.mean + pred.var.sqrt() * standard_normal(&mut rng);
                (pred.mean, pred.var, draw)
            };
            let a_k = if v_k + a_raw * dt < 0.0 { -v_k / dt } else { a_raw };
            let v_next = v_k + a_k * dt;
            let p_next = p_k + 0.5 * (v_k + v_next) * dt;

            out.a_sim[k] = a_k;
            out.s_sim[k] = raw_gap;
            out.dv_sim[k] = dv;
            out.a_nn_trace[k] = heads.a_nn;
            out.ell_trace[k] = heads.ell;
            out.sigma_trace[k] = heads.sigma;
            out.mu_trace[k] = mu;
            out.sd_trace[k] = var.sqrt();
            out.collided[k] = collided;
            if !opts.mean_only {
                // Warm-up accelerations count as observed history, so the
                // first sampled steps are conditioned like any later step.
                gp.push(times[k], heads, a_k);
            }
            if k + 1 < n {
                out.v_sim[k + 1] = v_next;
                out.p_sim[k + 1] = p_next;
            }
        }
        vehicles.push(out);
    }
    Ok(PlatoonResult { dt, times, vehicles })
}
