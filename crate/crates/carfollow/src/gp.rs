//! Gaussian-process machinery over acceleration residuals: the batched
//! negative log-likelihood used as the training objective, exact gradients
//! of that objective with respect to the network heads, the one-step
//! predictive conditional used during rolling simulation, and the joint
//! likelihood over acceleration / speed / position blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{
    build_gram, build_kernel_matrix, gibbs_base, matern52_kernel, se_kernel, GramMatrix,
    KernelChoice, KernelSpec, StationaryParams,
};
use crate::linalg;
use crate::meanmodel::{HeadGrads, HeadOutputs};

/// One-step predictive distribution of acceleration.
#[derive(Debug, Clone, Copy)]
pub struct PredictiveGaussian {
    pub mean: f64,
    pub var: f64,
}

/// Observation-noise variances for the joint (a, v, p) likelihood.
#[derive(Debug, Clone, Copy)]
pub struct JointStateNoise {
    pub sigma_a2: f64,
    pub sigma_v2: f64,
    pub sigma_p2: f64,
}

/// Negative log-likelihood of `targets` under N(means, K + noise_var I),
/// computed via the stored Cholesky factor. The n log(2pi)/2 constant is
/// omitted; it does not affect optimization.
pub fn nll(targets: &[f64], means: &[f64], gram: &GramMatrix) -> Result<f64> {
    let n = gram.n();
    if targets.len() != n || means.len() != n {
        return Err(Error::Argument(format!(
            "nll: lengths {} / {} do not match Gram dimension {n}",
            targets.len(),
            means.len()
        )));
    }
    let r = DVector::from_fn(n, |i, _| targets[i] - means[i]);
    let y = linalg::solve_lower(&gram.chol, &r);
    let half_logdet: f64 = (0..n).map(|i| gram.chol[(i, i)].ln()).sum();
    Ok(half_logdet + 0.5 * y.dot(&y))
}

/// Accumulate d(NLL)/d(lengthscale head) and d(NLL)/d(std head) given
/// `g_k = dNLL/dK` for the kernel built from these heads.
///
/// Stationary kernels pass through the batch-mean reduction: every step
/// receives an equal 1/n share of the gradient w.r.t. the averaged
/// parameter.
fn kernel_head_grads(
    g_k: &DMatrix<f64>,
    times: &[f64],
    choice: KernelChoice,
    ell: &[f64],
    sigma: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = times.len();
    let mut d_ell = vec![0.0; n];
    let mut d_sigma = vec![0.0; n];
    match choice {
        KernelChoice::Gibbs => {
            for k in 0..n {
                let (lk, sk) = (ell[k], sigma[k]);
                let mut de = 0.0;
                let mut ds = 0.0;
                for j in 0..n {
                    let (lj, sj) = (ell[j], sigma[j]);
                    let base = gibbs_base(times[k], times[j], lk, lj);
                    let a = g_k[(k, j)];
                    ds += 2.0 * a * sj * base;
                    let s = lk * lk + lj * lj;
                    let d = times[k] - times[j];
                    let dbase_dlk = base * (0.5 / lk - lk / s + 2.0 * lk * d * d / (s * s));
                    de += 2.0 * a * sk * sj * dbase_dlk;
                }
                d_ell[k] = de;
                d_sigma[k] = ds;
            }
        }
        KernelChoice::Se => {
            let lbar = mean(ell);
            let sbar = mean(sigma);
            let p = StationaryParams { lengthscale: lbar, marginal_std: sbar };
            let mut g_l = 0.0;
            let mut g_s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let kij = se_kernel(times[i], times[j], &p);
                    let d = times[i] - times[j];
                    g_l += g_k[(i, j)] * kij * d * d / (lbar * lbar * lbar);
                    g_s += g_k[(i, j)] * 2.0 * kij / sbar;
                }
            }
            d_ell.fill(g_l / n as f64);
            d_sigma.fill(g_s / n as f64);
        }
        KernelChoice::Matern52 => {
            let lbar = mean(ell);
            let sbar = mean(sigma);
            let sqrt5 = 5.0_f64.sqrt();
            let s2 = sbar * sbar;
            let mut g_l = 0.0;
            let mut g_s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let d = (times[i] - times[j]).abs();
                    let u = d / lbar;
                    let e = (-sqrt5 * u).exp();
                    let kij = s2 * (1.0 + sqrt5 * u + 5.0 * u * u / 3.0) * e;
                    // dK/dl = (5 d^2 / (3 l^3)) sigma^2 (1 + sqrt5 d/l) e^{-sqrt5 d/l}
                    let dk_dl = (5.0 * d * d / (3.0 * lbar * lbar * lbar)) * s2 * (1.0 + sqrt5 * u) * e;
                    g_l += g_k[(i, j)] * dk_dl;
                    g_s += g_k[(i, j)] * 2.0 * kij / sbar;
                }
            }
            d_ell.fill(g_l / n as f64);
            d_sigma.fill(g_s / n as f64);
        }
        KernelChoice::White => {
            // K = mean(sigma)^2 I: independent of the lengthscale head.
            let sbar = mean(sigma);
            let mut g_s = 0.0;
            for i in 0..n {
                g_s += g_k[(i, i)] * 2.0 * sbar;
            }
            d_sigma.fill(g_s / n as f64);
        }
    }
    (d_ell, d_sigma)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// NLL of one block together with its exact gradients w.r.t. the per-step
/// head outputs (a_nn, ell_nn, sigma_nn) and the noise std sigma_0.
///
/// dNLL/da_nn = -(K + s0^2 I)^{-1} r and dNLL/dK = (Sinv - alpha alpha^T)/2
/// with alpha = Sinv r, chained through the kernel parameterization.
pub fn nll_gradient_wrt_heads(
    targets: &[f64],
    heads: &HeadOutputs,
    times: &[f64],
    choice: KernelChoice,
    sigma0: f64,
) -> Result<(f64, HeadGrads)> {
    let n = times.len();
    if heads.len() != n || targets.len() != n {
        return Err(Error::Argument(format!(
            "nll gradient: heads cover {} steps, targets {}, times {n}",
            heads.len(),
            targets.len()
        )));
    }
    let spec = choice.spec_from_heads(&heads.ell_nn, &heads.sigma_nn);
    let gram = build_gram(times, &spec, sigma0 * sigma0)?;
    let loss = nll(targets, &heads.a_nn, &gram)?;

    let r = DVector::from_fn(n, |i, _| targets[i] - heads.a_nn[i]);
    let alpha = linalg::spd_solve(&gram.chol, &r);
    let sinv = linalg::inverse_from_cholesky(&gram.chol);
    let mut g_k = sinv;
    for i in 0..n {
        for j in 0..n {
            g_k[(i, j)] = 0.5 * (g_k[(i, j)] - alpha[i] * alpha[j]);
        }
    }

    let d_a: Vec<f64> = (0..n).map(|i| -alpha[i]).collect();
    let d_sigma0 = 2.0 * sigma0 * (0..n).map(|i| g_k[(i, i)]).sum::<f64>();
    let (d_ell, d_sigma) = kernel_head_grads(&g_k, times, choice, &heads.ell_nn, &heads.sigma_nn);
    Ok((loss, HeadGrads { d_a, d_ell, d_sigma, d_sigma0 }))
}

fn cross_covariance(
    next_time: f64,
    history_times: &[f64],
    choice: KernelChoice,
    ell: &[f64],
    sigma: &[f64],
) -> (Vec<f64>, f64) {
    let t = history_times.len();
    match choice {
        KernelChoice::Gibbs => {
            let (l_star, s_star) = (ell[t], sigma[t]);
            let k_star: Vec<f64> = (0..t)
                .map(|j| s_star * sigma[j] * gibbs_base(next_time, history_times[j], l_star, ell[j]))
                .collect();
            (k_star, s_star * s_star)
        }
        KernelChoice::Se => {
            let p = StationaryParams { lengthscale: mean(ell), marginal_std: mean(sigma) };
            let k_star: Vec<f64> =
                (0..t).map(|j| se_kernel(next_time, history_times[j], &p)).collect();
            (k_star, p.marginal_std * p.marginal_std)
        }
        KernelChoice::Matern52 => {
            let p = StationaryParams { lengthscale: mean(ell), marginal_std: mean(sigma) };
            let k_star: Vec<f64> =
                (0..t).map(|j| matern52_kernel(next_time, history_times[j], &p)).collect();
            (k_star, p.marginal_std * p.marginal_std)
        }
        KernelChoice::White => {
            let sbar = mean(sigma);
            (vec![0.0; t], sbar * sbar)
        }
    }
}

/// One-step GP predictive conditional.
///
/// `heads` must cover the T history steps plus the next step (length
/// T + 1); `history_residuals` are observed-minus-mean accelerations for
/// the history. With `include_obs_noise`, sigma_0^2 is added to the
/// posterior variance so that draws realize the observation process; turn
/// it off to get the bare posterior variance.
pub fn predict_next(
    history_residuals: &[f64],
    history_times: &[f64],
    next_time: f64,
    heads: &HeadOutputs,
    choice: KernelChoice,
    sigma0_sq: f64,
    include_obs_noise: bool,
) -> Result<PredictiveGaussian> {
    let t = history_residuals.len();
    if history_times.len() != t {
        return Err(Error::Argument(format!(
            "predict_next: {} residuals vs {} times",
            t,
            history_times.len()
        )));
    }
    if heads.len() != t + 1 {
        return Err(Error::Argument(format!(
            "predict_next: heads cover {} steps, expected history + next = {}",
            heads.len(),
            t + 1
        )));
    }
    let mean_next = heads.a_nn[t];
    let (k_star, k_star_star) =
        cross_covariance(next_time, history_times, choice, &heads.ell_nn, &heads.sigma_nn);
    let noise = if include_obs_noise { sigma0_sq } else { 0.0 };
    if t == 0 {
        return Ok(PredictiveGaussian { mean: mean_next, var: k_star_star + noise });
    }

    let hist_spec = choice.spec_from_heads(&heads.ell_nn, &heads.sigma_nn);
    let hist_spec = match hist_spec {
        KernelSpec::Gibbs(mut p) => {
            p.lengthscales.truncate(t);
            p.marginal_stds.truncate(t);
            KernelSpec::Gibbs(p)
        }
        other => other,
    };
    let gram = build_gram(history_times, &hist_spec, sigma0_sq)?;
    let r = DVector::from_column_slice(history_residuals);
    let alpha = linalg::spd_solve(&gram.chol, &r);
    let ks = DVector::from_column_slice(&k_star);
    let mean = mean_next + ks.dot(&alpha);
    let w = linalg::spd_solve(&gram.chol, &ks);
    let mut var_post = k_star_star - ks.dot(&w);
    if var_post < 0.0 {
        // Numerically tiny negatives from the solve; the posterior is PSD.
        var_post = 0.0;
    }
    Ok(PredictiveGaussian { mean, var: var_post + noise })
}

/// Mean speed/position trajectories implied by the mean accelerations via
/// the kinematic updates, anchored at the first observed state of the block.
pub fn integrate_mean_states(a_nn: &[f64], v0: f64, p0: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = a_nn.len();
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    v[0] = v0;
    p[0] = p0;
    for t in 1..n {
        v[t] = v[t - 1] + a_nn[t - 1] * dt;
        p[t] = p[t - 1] + 0.5 * (v[t - 1] + v[t]) * dt;
    }
    (v, p)
}

/// Joint (a, v, p) NLL of one block with exact gradients w.r.t. the head
/// outputs, the counterpart of [`nll_gradient_wrt_heads`] for the
/// multi-state objective. The three observation noises share the learned
/// sigma_0^2. Mean speed/position come from `integrate_mean_states`, and
/// the gradient chains back through that integration.
pub fn joint_nll_gradient_wrt_heads(
    obs: &StateBlock,
    heads: &HeadOutputs,
    times: &[f64],
    choice: KernelChoice,
    sigma0: f64,
    dt: f64,
) -> Result<(f64, HeadGrads)> {
    let n = times.len();
    if heads.len() != n || obs.len() != n {
        return Err(Error::Argument(format!(
            "joint nll gradient: heads cover {} steps, obs {}, times {n}",
            heads.len(),
            obs.len()
        )));
    }
    let spec = choice.spec_from_heads(&heads.ell_nn, &heads.sigma_nn);
    let gram = build_kernel_matrix(times, &spec)?;
    let s0sq = sigma0 * sigma0;
    let noise = JointStateNoise { sigma_a2: s0sq, sigma_v2: s0sq, sigma_p2: s0sq };
    let sigma = joint_covariance(&gram, &noise, dt);
    let chol = linalg::cholesky_lower(&sigma).ok_or_else(|| {
        Error::Numerical(format!("joint covariance ({0}x{0}) is not positive definite", 3 * n))
    })?;

    let (v_nn, p_nn) = integrate_mean_states(&heads.a_nn, obs.vel[0], obs.pos[0], dt);
    let mut r = DVector::<f64>::zeros(3 * n);
    for i in 0..n {
        r[i] = obs.acc[i] - heads.a_nn[i];
        r[n + i] = obs.vel[i] - v_nn[i];
        r[2 * n + i] = obs.pos[i] - p_nn[i];
    }
    let y = linalg::solve_lower(&chol, &r);
    let logdet = linalg::log_det_from_cholesky(&chol);
    let n3 = 3.0 * n as f64;
    let loss = 0.5 * (n3 * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&y));

    let alpha = linalg::solve_lower_transpose(&chol, &y);
    let sinv = linalg::inverse_from_cholesky(&chol);
    // dNLL/dSigma, then contract the Kronecker blocks down to dNLL/dK.
    let c = kinematic_loading(dt);
    let mut g_k = DMatrix::<f64>::zeros(n, n);
    let mut trace_a = 0.0;
    for i in 0..3 * n {
        trace_a += 0.5 * (sinv[(i, i)] - alpha[i] * alpha[i]);
    }
    for p in 0..n {
        for q in 0..n {
            let mut acc = 0.0;
            for b in 0..3 {
                for cc in 0..3 {
                    let (i, j) = (b * n + p, cc * n + q);
                    acc += c[b] * c[cc] * 0.5 * (sinv[(i, j)] - alpha[i] * alpha[j]);
                }
            }
            g_k[(p, q)] = acc;
        }
    }
    let (d_ell, d_sigma) = kernel_head_grads(&g_k, times, choice, &heads.ell_nn, &heads.sigma_nn);
    let d_sigma0 = 2.0 * sigma0 * trace_a;

    // dNLL/d(means) = -alpha, chained through the kinematic integration
    // back onto the acceleration head (v_nn[0], p_nn[0] are observed).
    let mut d_a: Vec<f64> = (0..n).map(|i| -alpha[i]).collect();
    let mut d_v: Vec<f64> = (0..n).map(|i| -alpha[n + i]).collect();
    let mut d_p: Vec<f64> = (0..n).map(|i| -alpha[2 * n + i]).collect();
    for t in (1..n).rev() {
        d_p[t - 1] += d_p[t];
        d_v[t - 1] += 0.5 * dt * d_p[t];
        d_v[t] += 0.5 * dt * d_p[t];
        d_v[t - 1] += d_v[t];
        d_a[t - 1] += dt * d_v[t];
    }
    Ok((loss, HeadGrads { d_a, d_ell, d_sigma, d_sigma0 }))
}

/// Stacked observations or means over one block, in (a, v, p) order.
#[derive(Debug, Clone)]
pub struct StateBlock {
    pub acc: Vec<f64>,
    pub vel: Vec<f64>,
    pub pos: Vec<f64>,
}

impl StateBlock {
    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }
}

/// Kinematic loading vector C = [1, dt, dt^2/2].
pub fn kinematic_loading(dt: f64) -> [f64; 3] {
    [1.0, dt, dt * dt / 2.0]
}

/// Assemble the joint covariance C C^T (x) K + Sigma_obs (x) I_n.
pub(crate) fn joint_covariance(
    k: &DMatrix<f64>,
    noise: &JointStateNoise,
    dt: f64,
) -> DMatrix<f64> {
    let n = k.nrows();
    let c = kinematic_loading(dt);
    let obs = [noise.sigma_a2, noise.sigma_v2, noise.sigma_p2];
    let mut sigma = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for b in 0..3 {
        for cidx in 0..3 {
            let scale = c[b] * c[cidx];
            for i in 0..n {
                for j in 0..n {
                    sigma[(b * n + i, cidx * n + j)] = scale * k[(i, j)];
                }
            }
        }
        for i in 0..n {
            sigma[(b * n + i, b * n + i)] += obs[b];
        }
    }
    sigma
}

/// Full negative log-likelihood (constant included) of the stacked
/// (a, v, p) block under the Kronecker-structured covariance
/// Sigma = C C^T (x) K + Sigma_obs (x) I_n. Dense Cholesky; block sizes
/// here are at most a few hundred. Singular covariance is an error.
pub fn joint_state_nll(
    obs: &StateBlock,
    means: &StateBlock,
    gram: &GramMatrix,
    noise: &JointStateNoise,
    dt: f64,
) -> Result<f64> {
    let n = gram.n();
    for (name, len) in [
        ("obs acc", obs.acc.len()),
        ("obs vel", obs.vel.len()),
        ("obs pos", obs.pos.len()),
        ("mean acc", means.acc.len()),
        ("mean vel", means.vel.len()),
        ("mean pos", means.pos.len()),
    ] {
        if len != n {
            return Err(Error::Argument(format!(
                "joint_state_nll: {name} has length {len} but the Gram block has {n}"
            )));
        }
    }
    let sigma = joint_covariance(&gram.k, noise, dt);
    let chol = linalg::cholesky_lower(&sigma).ok_or_else(|| {
        Error::Numerical(format!("joint covariance ({}x{}) is not positive definite", 3 * n, 3 * n))
    })?;
    let mut r = DVector::<f64>::zeros(3 * n);
    for i in 0..n {
        r[i] = obs.acc[i] - means.acc[i];
        r[n + i] = obs.vel[i] - means.vel[i];
        r[2 * n + i] = obs.pos[i] - means.pos[i];
    }
    let y = linalg::solve_lower(&chol, &r);
    let logdet = linalg::log_det_from_cholesky(&chol);
    let n3 = 3.0 * n as f64;
    Ok(0.5 * (n3 * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&y)))
}
