//! Probabilistic evaluation of simulation ensembles: RMSE against the
//! ensemble mean, sample-based CRPS, the Energy Score over horizon
//! vectors, and aggregation into a kernel-comparison score table.

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::kernels::KernelChoice;
use crate::meanmodel::ModelParams;
use crate::rng::derive_seed;
use crate::sim::{simulate_ensemble, EnsembleResult, SimOptions};

/// Root mean square error between two equal-length series.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Argument(format!(
            "rmse: length mismatch {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Argument("rmse: empty input".into()));
    }
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// Empirical CRPS of a sample ensemble against a scalar observation:
/// mean |X_m - obs| - mean |X_m - X_k| / 2.
pub fn crps_samples(samples: &[f64], obs: f64) -> Result<f64> {
    let m = samples.len();
    if m == 0 {
        return Err(Error::Argument("crps: empty sample set".into()));
    }
    let term1: f64 = samples.iter().map(|x| (x - obs).abs()).sum::<f64>() / m as f64;
    let mut pair_sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            pair_sum += (samples[i] - samples[j]).abs();
        }
    }
    Ok(term1 - pair_sum / (2.0 * (m * m) as f64))
}

/// Energy Score of an M x d sample ensemble against a d-dimensional
/// observation (Euclidean norm). Reduces to `crps_samples` at d = 1.
pub fn energy_score(samples: &[Vec<f64>], obs: &[f64]) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::Argument(format!("energy score needs >= 2 samples, got {m}")));
    }
    let d = obs.len();
    if d == 0 {
        return Err(Error::Argument("energy score: empty observation".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::Argument(format!(
                "energy score: sample {i} has dimension {} but the observation has {d}",
                s.len()
            )));
        }
    }
    let norm = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let term1: f64 = samples.iter().map(|s| norm(s, obs)).sum::<f64>() / m as f64;
    let mut pair_sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            pair_sum += norm(&samples[i], &samples[j]);
        }
    }
    Ok(term1 - pair_sum / (2.0 * (m * m) as f64))
}

/// Evaluation protocol: forecast horizon, spacing of start times along each
/// test pair, and rounds per ensemble. Defaults follow the reference
/// setup: 10 s horizon, starts every 5 s, 200 rounds.
#[derive(Debug, Clone, Copy)]
pub struct EvalProtocol {
    pub horizon_secs: f64,
    pub start_stride_secs: f64,
    pub rounds: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol { horizon_secs: 10.0, start_stride_secs: 5.0, rounds: 200 }
    }
}

/// One model entry in a comparison run.
#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub label: String,
    pub kernel: KernelChoice,
    pub params: ModelParams,
}

/// Aggregated mean of one (model, kernel, state, metric) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub model: String,
    pub kernel: String,
    pub state: String,
    pub metric: String,
    pub mean: f64,
    pub count: usize,
}

/// One raw per-evaluation score, kept for histogramming.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScore {
    pub model: String,
    pub kernel: String,
    pub pair: String,
    pub t_start: f64,
    pub state: String,
    pub metric: String,
    pub value: f64,
}

/// All scores of a comparison run.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub raw: Vec<RawScore>,
}

impl ScoreTable {
    pub fn mean_of(&self, model: &str, state: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.state == state && r.metric == metric)
            .map(|r| r.mean)
    }
}

const STATES: [&str; 3] = ["a", "v", "s"];

fn state_series<'a>(ens: &'a EnsembleResult, state: &str) -> (Vec<&'a [f64]>, &'a [f64]) {
    match state {
        "a" => (ens.rollouts.iter().map(|r| r.a_sim.as_slice()).collect(), ens.truth.a.as_slice()),
        "v" => (ens.rollouts.iter().map(|r| r.v_sim.as_slice()).collect(), ens.truth.v.as_slice()),
        "s" => (ens.rollouts.iter().map(|r| r.s_sim.as_slice()).collect(), ens.truth.s.as_slice()),
        other => unreachable!("unknown state {other}"),
    }
}

/// Scores of one ensemble: per-state (RMSE of the pointwise ensemble mean,
/// CRPS averaged over time steps, ES over the horizon vector).
pub fn score_ensemble(ens: &EnsembleResult) -> Result<Vec<(String, String, f64)>> {
    let n = ens.truth.times.len();
    let m = ens.rollouts.len();
    let mut out = Vec::new();
    for state in STATES {
        let (series, truth) = state_series(ens, state);
        let ens_mean: Vec<f64> =
            (0..n).map(|t| series.iter().map(|s| s[t]).sum::<f64>() / m as f64).collect();
        out.push((state.to_string(), "rmse".to_string(), rmse(truth, &ens_mean)?));

        let mut crps_sum = 0.0;
        for t in 0..n {
            let samples: Vec<f64> = series.iter().map(|s| s[t]).collect();
            crps_sum += crps_samples(&samples, truth[t])?;
        }
        out.push((state.to_string(), "crps".to_string(), crps_sum / n as f64));

        let sample_vecs: Vec<Vec<f64>> = series.iter().map(|s| s.to_vec()).collect();
        out.push((state.to_string(), "es".to_string(), energy_score(&sample_vecs, truth)?));
    }
    let collided = ens.rollouts.iter().filter(|r| r.any_collision()).count();
    out.push(("all".to_string(), "collision_rate".to_string(), collided as f64 / m as f64));
    Ok(out)
}

/// Valid forecast start times for one trajectory under the protocol.
pub fn valid_starts(
    traj: &crate::data::Trajectory,
    protocol: &EvalProtocol,
    t_ctx: usize,
) -> Vec<f64> {
    let dt = traj.dt;
    let stride_steps = (protocol.start_stride_secs / dt).round().max(1.0) as usize;
    let horizon_steps = (protocol.horizon_secs / dt).round() as usize;
    let mut starts = Vec::new();
    let mut i = t_ctx;
    while i + horizon_steps <= traj.len().saturating_sub(1) {
        starts.push(traj.time(i));
        i += stride_steps;
    }
    starts
}

/// Run the full evaluation protocol: for every test pair, every valid
/// start, and every model, simulate an ensemble and score it; aggregate
/// cell means. Deterministic in (models, split, protocol, seed).
pub fn evaluate_testset(
    models: &[ModelEntry],
    split: &DatasetSplit,
    protocol: &EvalProtocol,
    t_ctx: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<ScoreTable> {
    if split.test.is_empty() {
        return Err(Error::Argument("test split is empty".into()));
    }
    if models.is_empty() {
        return Err(Error::Argument("no models to evaluate".into()));
    }
    let mut table = ScoreTable::default();
    let mut any_cell = false;
    for (mi, entry) in models.iter().enumerate() {
        let mut sums: std::collections::BTreeMap<(String, String), (f64, usize)> =
            std::collections::BTreeMap::new();
        for traj in &split.test {
            let starts = valid_starts(traj, protocol, t_ctx);
            for (si, &t_start) in starts.iter().enumerate() {
                let cell_seed =
                    derive_seed(seed, "eval", &[mi as u64, si as u64]).wrapping_add(fnv(&traj.pair_id));
                let ens = simulate_ensemble(
                    &entry.params,
                    traj,
                    t_start,
                    protocol.horizon_secs,
                    protocol.rounds,
                    entry.kernel,
                    t_ctx,
                    cell_seed,
                    opts,
                )?;
                for (state, metric, value) in score_ensemble(&ens)? {
                    table.raw.push(RawScore {
                        model: entry.label.clone(),
                        kernel: entry.kernel.name().to_string(),
                        pair: traj.pair_id.clone(),
                        t_start,
                        state: state.clone(),
                        metric: metric.clone(),
                        value,
                    });
                    let e = sums.entry((state, metric)).or_insert((0.0, 0));
                    e.0 += value;
                    e.1 += 1;
                }
                any_cell = true;
            }
        }
        for ((state, metric), (sum, count)) in sums {
            table.rows.push(ScoreRow {
                model: entry.label.clone(),
                kernel: entry.kernel.name().to_string(),
                state,
                metric,
                mean: sum / count as f64,
                count,
            });
        }
    }
    if !any_cell {
        return Err(Error::Argument(
            "no test pair admits a forecast start under the protocol (too short?)".into(),
        ));
    }
    Ok(table)
}

fn fnv(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
