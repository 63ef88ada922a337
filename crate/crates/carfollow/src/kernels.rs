//! Covariance structures for the temporally correlated acceleration residual.
//!
//! Four kernels share one code path: squared-exponential and Matern(5/2)
//! (stationary), the Gibbs kernel with per-step lengthscale and marginal
//! std (nonstationary), and a white-noise kernel that drops temporal
//! correlation entirely. `build_gram` assembles the block covariance
//! K + noise_var * I and its Cholesky factor with an escalating-jitter
//! retry ladder.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Lengthscale (seconds) and marginal standard deviation (m/s^2) of a
/// stationary kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryParams {
    pub lengthscale: f64,
    pub marginal_std: f64,
}

impl StationaryParams {
    pub fn new(lengthscale: f64, marginal_std: f64) -> Result<Self> {
        let p = StationaryParams { lengthscale, marginal_std };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(Error::Argument(format!(
                "stationary lengthscale must be positive and finite, got {}",
                self.lengthscale
            )));
        }
        if !(self.marginal_std.is_finite() && self.marginal_std > 0.0) {
            return Err(Error::Argument(format!(
                "stationary marginal std must be positive and finite, got {}",
                self.marginal_std
            )));
        }
        Ok(())
    }
}

/// Per-step lengthscales and marginal stds for the Gibbs kernel, one entry
/// per time step of the block.
#[derive(Debug, Clone, PartialEq)]
pub struct NonstationaryParams {
    pub lengthscales: Vec<f64>,
    pub marginal_stds: Vec<f64>,
}

impl NonstationaryParams {
    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.len() != self.marginal_stds.len() {
            return Err(Error::Argument(format!(
                "nonstationary params length mismatch: {} lengthscales vs {} stds",
                self.lengthscales.len(),
                self.marginal_stds.len()
            )));
        }
        for (i, &l) in self.lengthscales.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Argument(format!("lengthscale[{i}] must be positive, got {l}")));
            }
        }
        for (i, &s) in self.marginal_stds.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Argument(format!("marginal std[{i}] must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Which covariance family a model uses. Carries no parameters; pair it
/// with head outputs (or fixed params) to get a [`KernelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Gibbs,
    Matern52,
    Se,
    White,
}

impl KernelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(KernelChoice::Gibbs),
            "matern52" => Ok(KernelChoice::Matern52),
            "se" => Ok(KernelChoice::Se),
            "white" => Ok(KernelChoice::White),
            other => Err(Error::Config(format!(
                "unknown kernel `{other}` (expected gibbs|matern52|se|white)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelChoice::Gibbs => "gibbs",
            KernelChoice::Matern52 => "matern52",
            KernelChoice::Se => "se",
            KernelChoice::White => "white",
        }
    }

    /// Concrete kernel parameters from per-step head outputs.
    ///
    /// Stationary kernels (and white noise) use the batch-averaged
    /// lengthscale/std; the Gibbs kernel keeps the full sequences.
    pub fn spec_from_heads(&self, ell: &[f64], sigma: &[f64]) -> KernelSpec {
        match self {
            KernelChoice::Gibbs => KernelSpec::Gibbs(NonstationaryParams {
                lengthscales: ell.to_vec(),
                marginal_stds: sigma.to_vec(),
            }),
            KernelChoice::Se => KernelSpec::Se(StationaryParams {
                lengthscale: mean(ell),
                marginal_std: mean(sigma),
            }),
            KernelChoice::Matern52 => KernelSpec::Matern52(StationaryParams {
                lengthscale: mean(ell),
                marginal_std: mean(sigma),
            }),
            KernelChoice::White => {
                let s = mean(sigma);
                KernelSpec::WhiteNoise { variance: s * s }
            }
        }
    }
}

impl std::fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// A fully parameterized covariance structure over a block of times.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    Se(StationaryParams),
    Matern52(StationaryParams),
    Gibbs(NonstationaryParams),
    WhiteNoise { variance: f64 },
}

/// Squared-exponential covariance: sigma^2 exp(-d^2 / (2 l^2)).
pub fn se_kernel(t: f64, t2: f64, params: &StationaryParams) -> f64 {
    let d = t - t2;
    let l = params.lengthscale;
    let s2 = params.marginal_std * params.marginal_std;
    s2 * (-(d * d) / (2.0 * l * l)).exp()
}

/// Matern(5/2) covariance:
/// sigma^2 (1 + sqrt5 d/l + 5 d^2/(3 l^2)) exp(-sqrt5 d/l).
pub fn matern52_kernel(t: f64, t2: f64, params: &StationaryParams) -> f64 {
    let d = (t - t2).abs();
    let l = params.lengthscale;
    let s2 = params.marginal_std * params.marginal_std;
    let sqrt5 = 5.0_f64.sqrt();
    let u = sqrt5 * d / l;
    s2 * (1.0 + u + 5.0 * d * d / (3.0 * l * l)) * (-u).exp()
}

/// Unit-variance Gibbs factor: the prefactor-times-exponential part of the
/// kernel before marginal-std modulation.
pub fn gibbs_base(t: f64, t2: f64, ell_t: f64, ell_t2: f64) -> f64 {
    let d = t - t2;
    let s = ell_t * ell_t + ell_t2 * ell_t2;
    (2.0 * ell_t * ell_t2 / s).sqrt() * (-(d * d) / s).exp()
}

/// Gibbs covariance with input-dependent lengthscale and marginal std:
/// sigma(t) sigma(t') sqrt(2 l(t) l(t') / (l(t)^2 + l(t')^2))
///   exp(-(t - t')^2 / (l(t)^2 + l(t')^2)).
pub fn gibbs_kernel(t: f64, t2: f64, ell_t: f64, ell_t2: f64, sigma_t: f64, sigma_t2: f64) -> f64 {
    sigma_t * sigma_t2 * gibbs_base(t, t2, ell_t, ell_t2)
}

/// Jitter ladder, as multiples of the mean total diagonal.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// A positive-semidefinite covariance block together with its factored
/// total covariance K + noise_var I (+ jitter I).
#[derive(Debug, Clone)]
pub struct GramMatrix {
    /// The kernel matrix K (no observation noise).
    pub k: DMatrix<f64>,
    /// Homoskedastic observation-noise variance added on the diagonal.
    pub noise_var: f64,
    /// Lower-triangular Cholesky factor of K + noise_var I + jitter I.
    pub chol: DMatrix<f64>,
    /// Absolute jitter actually added to achieve the factorization.
    pub jitter: f64,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// The factored total covariance, reassembled.
    pub fn total(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = self.k.clone();
        for i in 0..n {
            m[(i, i)] += self.noise_var + self.jitter;
        }
        m
    }
}

/// Evaluate one kernel entry of `spec` at (times[i], times[j]).
fn eval_entry(spec: &KernelSpec, times: &[f64], i: usize, j: usize) -> f64 {
    match spec {
        KernelSpec::Se(p) => se_kernel(times[i], times[j], p),
        KernelSpec::Matern52(p) => matern52_kernel(times[i], times[j], p),
        KernelSpec::Gibbs(p) => gibbs_kernel(
            times[i],
            times[j],
            p.lengthscales[i],
            p.lengthscales[j],
            p.marginal_stds[i],
            p.marginal_stds[j],
        ),
        KernelSpec::WhiteNoise { variance } => {
            if i == j {
                *variance
            } else {
                0.0
            }
        }
    }
}

/// Assemble the bare kernel matrix K for `spec` on `times` (upper triangle
/// mirrored, so K = K^T exactly). Validates times and parameters.
pub fn build_kernel_matrix(times: &[f64], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let n = times.len();
    if n == 0 {
        return Err(Error::Argument("build_gram needs at least one time".into()));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Argument(format!(
                "times must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    match spec {
        KernelSpec::Se(p) | KernelSpec::Matern52(p) => p.validate()?,
        KernelSpec::Gibbs(p) => {
            p.validate()?;
            if p.lengthscales.len() != n {
                return Err(Error::Argument(format!(
                    "Gibbs params have {} entries but the block has {} times",
                    p.lengthscales.len(),
                    n
                )));
            }
        }
        KernelSpec::WhiteNoise { variance } => {
            if !(variance.is_finite() && *variance >= 0.0) {
                return Err(Error::Argument(format!(
                    "white-noise variance must be >= 0, got {variance}"
                )));
            }
        }
    }

    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = eval_entry(spec, times, i, j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Build the Gram matrix for `spec` on `times` and factor the total
/// covariance K + noise_var I, escalating jitter until Cholesky succeeds.
pub fn build_gram(times: &[f64], spec: &KernelSpec, noise_var: f64) -> Result<GramMatrix> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::Argument(format!("noise_var must be >= 0, got {noise_var}")));
    }
    let k = build_kernel_matrix(times, spec)?;
    let n = k.nrows();

    let scale = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64 + noise_var;
    let mut last_jitter = 0.0;
    for &factor in JITTER_LADDER.iter() {
        let jitter = factor * scale;
        last_jitter = jitter;
        let mut total = k.clone();
        for i in 0..n {
            total[(i, i)] += noise_var + jitter;
        }
        if let Some(chol) = linalg::cholesky_lower(&total) {
            return Ok(GramMatrix { k, noise_var, chol, jitter });
        }
    }
    Err(Error::Numerical(format!(
        "Cholesky failed for a {n}x{n} Gram matrix even with jitter {last_jitter:.3e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SPEC_P: StationaryParams = StationaryParams { lengthscale: 1.0, marginal_std: 1.0 };

    #[test]
    fn se_at_zero_distance_is_marginal_variance() {
        let p = StationaryParams { lengthscale: 0.7, marginal_std: 2.0 };
        assert_eq!(se_kernel(3.0, 3.0, &p), 4.0);
    }

    #[test]
    fn se_at_one_lengthscale() {
        // exp(-1/2) with sigma = 1, d = l.
        let v = se_kernel(0.0, 1.0, &SPEC_P);
        assert_relative_eq!(v, (-0.5_f64).exp(), max_relative = 1e-15);
        assert!((v - 0.60653066).abs() < 1e-8);
    }

    #[test]
    fn se_decays_monotonically_to_zero() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = se_kernel(0.0, i as f64 * 0.5, &SPEC_P);
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn matern_at_zero_distance_is_marginal_variance() {
        let p = StationaryParams { lengthscale: 0.3, marginal_std: 1.5 };
        assert_eq!(matern52_kernel(2.0, 2.0, &p), 2.25);
    }

    #[test]
    fn matern_at_one_lengthscale() {
        // (1 + sqrt5 + 5/3) exp(-sqrt5), evaluated directly from the formula.
        let sqrt5 = 5.0_f64.sqrt();
        let direct = (1.0 + sqrt5 + 5.0 / 3.0) * (-sqrt5).exp();
        let v = matern52_kernel(0.0, 1.0, &SPEC_P);
        assert_relative_eq!(v, direct, max_relative = 1e-15);
        assert!((v - 0.52399411).abs() < 1e-8);
    }

    #[test]
    fn matern_vs_se_at_half_lengthscale_computed_not_assumed() {
        // No hard-coded sign claim: evaluate both and record the comparison.
        let se = se_kernel(0.0, 0.5, &SPEC_P);
        let ma = matern52_kernel(0.0, 0.5, &SPEC_P);
        assert_ne!(se, ma);
        // At short range the Matern(5/2) is rougher, hence decays faster.
        assert!(ma < se);
    }

    #[test]
    fn gibbs_equal_scales_reduces_to_se() {
        // Term-by-term: prefactor sqrt(2 l^2 / 2 l^2) = 1, exponent
        // -(d^2)/(2 l^2); matches the SE kernel evaluated directly.
        for &(l, s, d) in &[(0.5, 1.0, 0.3), (2.0, 0.4, 1.7), (1.0, 2.0, 0.0)] {
            let g = gibbs_kernel(0.0, d, l, l, s, s);
            let se = se_kernel(0.0, d, &StationaryParams { lengthscale: l, marginal_std: s });
            assert_relative_eq!(g, se, max_relative = 1e-14);
        }
    }

    #[test]
    fn gibbs_prefactor_only_at_equal_times() {
        let (l1, l2, s1, s2) = (0.4_f64, 1.3_f64, 0.7_f64, 1.1_f64);
        let expect = s1 * s2 * (2.0 * l1 * l2 / (l1 * l1 + l2 * l2)).sqrt();
        assert_relative_eq!(gibbs_kernel(5.0, 5.0, l1, l2, s1, s2), expect, max_relative = 1e-15);
        assert_eq!(gibbs_kernel(5.0, 5.0, 1.0, 1.0, 2.0, 2.0), 4.0);
    }

    #[test]
    fn gibbs_zero_std_gives_zero() {
        assert_eq!(gibbs_kernel(0.0, 1.0, 1.0, 1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn gram_single_time() {
        let g = build_gram(&[0.0], &KernelSpec::Se(SPEC_P), 0.3).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.k[(0, 0)], 1.0);
        assert_relative_eq!(g.total()[(0, 0)], 1.3, max_relative = 1e-15);
    }

    #[test]
    fn gram_white_noise_is_diagonal() {
        let times: Vec<f64> = (0..4).map(|i| i as f64 * 0.2).collect();
        let g = build_gram(&times, &KernelSpec::WhiteNoise { variance: 0.25 }, 0.01).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.25 } else { 0.0 };
                assert_eq!(g.k[(i, j)], expect);
            }
        }
    }

    #[test]
    fn gram_gibbs_diagonal_is_sigma_squared_exactly() {
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let p = NonstationaryParams {
            lengthscales: vec![0.3, 0.5, 0.9, 1.4, 0.7],
            marginal_stds: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        };
        let g = build_gram(&times, &KernelSpec::Gibbs(p.clone()), 0.0).unwrap();
        for i in 0..5 {
            assert_eq!(g.k[(i, i)], p.marginal_stds[i] * p.marginal_stds[i]);
        }
    }

    #[test]
    fn gram_is_exactly_symmetric_and_factor_reconstructs() {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
        let g = build_gram(&times, &KernelSpec::Matern52(SPEC_P), 0.01).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(g.k[(i, j)], g.k[(j, i)]);
            }
        }
        let rebuilt = &g.chol * g.chol.transpose();
        let err = (&rebuilt - g.total()).norm() / g.total().norm();
        assert!(err < 1e-8, "relative Frobenius error {err}");
    }

    #[test]
    fn gram_stationary_entries_shift_invariant_on_uniform_grid() {
        let times: Vec<f64> = (0..12).map(|i| i as f64 * 0.2).collect();
        for spec in [KernelSpec::Se(SPEC_P), KernelSpec::Matern52(SPEC_P)] {
            let g = build_gram(&times, &spec, 0.0).unwrap();
            for i in 0..11 {
                for j in 0..11 {
                    assert!((g.k[(i, j)] - g.k[(i + 1, j + 1)]).abs() < 1e-12);
                }
            }
            // Monotone decay away from the diagonal.
            for i in 0..12 {
                for j in i..11 {
                    assert!(g.k[(i, j + 1)] <= g.k[(i, j)] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn gram_rejects_bad_inputs() {
        assert!(build_gram(&[], &KernelSpec::Se(SPEC_P), 0.0).is_err());
        assert!(build_gram(&[0.0, 0.0], &KernelSpec::Se(SPEC_P), 0.0).is_err());
        assert!(build_gram(&[1.0, 0.5], &KernelSpec::Se(SPEC_P), 0.0).is_err());
        let bad = KernelSpec::Gibbs(NonstationaryParams {
            lengthscales: vec![1.0],
            marginal_stds: vec![1.0],
        });
        assert!(build_gram(&[0.0, 0.2], &bad, 0.0).is_err());
        let neg = KernelSpec::Se(StationaryParams { lengthscale: -1.0, marginal_std: 1.0 });
        assert!(build_gram(&[0.0, 0.2], &neg, 0.0).is_err());
    }

    #[test]
    fn kernel_choice_round_trips_names() {
        for c in [KernelChoice::Gibbs, KernelChoice::Matern52, KernelChoice::Se, KernelChoice::White] {
            assert_eq!(KernelChoice::parse(c.name()).unwrap(), c);
        }
        assert!(KernelChoice::parse("rbf").is_err());
    }

    proptest! {
        // Standing property: constant-parameter Gibbs equals SE elementwise.
        #[test]
        fn prop_gibbs_constant_scales_equals_se(
            l in 0.05f64..5.0,
            s in 0.05f64..3.0,
            n in 2usize..24,
        ) {
            let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.2).collect();
            let gibbs = KernelSpec::Gibbs(NonstationaryParams {
                lengthscales: vec![l; n],
                marginal_stds: vec![s; n],
            });
            let se = KernelSpec::Se(StationaryParams { lengthscale: l, marginal_std: s });
            let kg = build_gram(&times, &gibbs, 0.0).unwrap();
            let ks = build_gram(&times, &se, 0.0).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((kg.k[(i, j)] - ks.k[(i, j)]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn prop_total_diagonal_dominates_kernel_diagonal(
            l in 0.1f64..3.0,
            s in 0.1f64..2.0,
            noise in 0.0f64..1.0,
        ) {
            let times: Vec<f64> = (0..8).map(|i| i as f64 * 0.2).collect();
            let g = build_gram(&times, &KernelSpec::Se(StationaryParams { lengthscale: l, marginal_std: s }), noise).unwrap();
            let total = g.total();
            for i in 0..8 {
                prop_assert!(total[(i, i)] >= g.k[(i, i)]);
            }
        }
    }
}
