//! Numerical embodiment of the maximization-bias formula.
//!
//! The centerpiece: for Gaussian features and a selection of the top-α items
//! by `β̂ᵀx`, the gap between average predicted and average actual
//! probability on the selection equals `∫ h′(t) dt` from
//! `β̂ᵀΣβ*/√(β̂ᵀΣβ̂)` to `√(β̂ᵀΣβ̂)` (up to an O(1/N) remainder), where
//! `h′(t) = E[φ′(β̂ᵀμ + tZ)·Z | Z ≥ q_{1−α}]`. Everything here exists to
//! compute that integral by quadrature and to confront it with independent
//! Monte-Carlo estimates.

pub mod quad;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, Covariance, GaussianConfig};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::linear_model::{fit_logistic, FitOptions};
use crate::link::LinkFunction;
use crate::rng::SeedStream;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

// Acklam's rational approximation for the inverse normal CDF, |ε| < 1.2e-9
// before polishing. Coefficients as published.
#[allow(clippy::excessive_precision)]
const QA: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QB: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QC: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QD: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Inverse standard normal CDF: rational approximation plus one Newton
/// polish step against the erfc-based CDF; absolute error well under 1e-9.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid_input(format!("quantile needs p in (0, 1), got {p}")));
    }
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    };
    Ok(x - (normal_cdf(x) - p) / normal_pdf(x))
}

/// `q_{1−α}(Z)`: the upper-α-tail cutoff, `P(Z ≥ q) = α`. Computed as
/// `−Φ⁻¹(α)` so small α keeps full precision.
pub fn upper_quantile(alpha: f64) -> Result<f64> {
    Ok(-normal_quantile(alpha)?)
}

/// `E[Z | Z ≥ q_{1−α}] = pdf(q_{1−α})/α`, the inverse Mills ratio of the
/// upper tail.
pub fn truncated_mean(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid_input(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(normal_pdf(upper_quantile(alpha)?) / alpha)
}

/// `h′(t) = (1/α) ∫_q^∞ φ′(mu_proj + t·z)·z·pdf(z) dz` by adaptive
/// quadrature on `[q, max(q,0)+12]`; the discarded tail is provably below
/// 1e-12.
pub fn h_prime(t: f64, mu_proj: f64, alpha: f64, link: LinkFunction) -> Result<f64> {
    if !t.is_finite() || !mu_proj.is_finite() {
        return Err(Error::invalid_input("h_prime needs finite t and mu_proj"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid_input(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let q = upper_quantile(alpha)?;
    let cut = q.max(0.0) + 12.0;
    let sup_phi_prime = match link {
        LinkFunction::Logistic => 0.25,
        LinkFunction::Identity => 1.0,
    };
    // |∫_cut^∞ φ′ z pdf| ≤ sup(φ′)·pdf(cut) for cut ≥ 0
    let tail_bound = sup_phi_prime * normal_pdf(cut);
    if tail_bound >= 1e-12 {
        return Err(Error::invalid_input(format!(
            "tail bound {tail_bound:.3e} exceeds budget at cut {cut}"
        )));
    }
    let integrand = |z: f64| link.phi_derivative(mu_proj + t * z) * z * normal_pdf(z);
    Ok(quad::integrate(&integrand, q, cut, 1e-10) / alpha)
}

/// The ingredients of one bias evaluation: a (possibly fitted) `β̂`, the
/// ground truth `β*`, the test feature law, the selection fraction, and the
/// link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasSetting {
    pub beta_hat: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Covariance,
    pub alpha: f64,
    pub link: LinkFunction,
}

impl BiasSetting {
    pub fn validate(&self) -> Result<()> {
        let d = self.beta_hat.len();
        if d == 0 || self.beta_star.len() != d || self.mu.len() != d {
            return Err(Error::invalid_input(
                "beta_hat, beta_star, and mu must share a positive dimension",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::invalid_input(format!(
                "alpha must be in (0, 0.5], got {}",
                self.alpha
            )));
        }
        self.sigma.cholesky_factor(d)?;
        if self.sigma_hat_sq()? <= 0.0 {
            return Err(Error::invalid_input(
                "beta_hat'·Σ·beta_hat must be positive",
            ));
        }
        Ok(())
    }

    /// `β̂ᵀΣβ̂`
    pub fn sigma_hat_sq(&self) -> Result<f64> {
        self.sigma.quadratic_form(&self.beta_hat, &self.beta_hat)
    }

    /// `β̂ᵀΣβ*`
    pub fn sigma_cross(&self) -> Result<f64> {
        self.sigma.quadratic_form(&self.beta_hat, &self.beta_star)
    }

    /// Upper integration limit `√(β̂ᵀΣβ̂)`.
    pub fn upper_limit(&self) -> Result<f64> {
        Ok(self.sigma_hat_sq()?.sqrt())
    }

    /// Lower integration limit `β̂ᵀΣβ*/√(β̂ᵀΣβ̂)`.
    pub fn lower_limit(&self) -> Result<f64> {
        Ok(self.sigma_cross()? / self.upper_limit()?)
    }

    /// `β̂ᵀμ`, the projection entering h′.
    pub fn mu_proj(&self) -> f64 {
        self.beta_hat.iter().zip(&self.mu).map(|(b, m)| b * m).sum()
    }
}

/// Leading term of the maximization bias: signed `∫_{lower}^{upper} h′(t)dt`.
pub fn bias_leading_term(setting: &BiasSetting) -> Result<f64> {
    shrunk_bias(setting, 1.0)
}

/// Bias of the λ-shrunk predictor: the upper limit becomes `λ·√(β̂ᵀΣβ̂)`.
pub fn shrunk_bias(setting: &BiasSetting, lambda: f64) -> Result<f64> {
    setting.validate()?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid_input(format!("lambda must be in [0, 1], got {lambda}")));
    }
    let lower = setting.lower_limit()?;
    let upper = lambda * setting.upper_limit()?;
    let mu_proj = setting.mu_proj();
    let alpha = setting.alpha;
    let link = setting.link;
    // outer quadrature over t; each evaluation is itself a quadrature
    let f = |t: f64| h_prime(t, mu_proj, alpha, link).expect("validated inputs");
    Ok(quad::integrate(&f, lower, upper, 1e-8))
}

/// Solve `shrunk_bias(setting, λ) = 0` on `[0, 1]` by bisection.
/// With h′ > 0 on the integration range the root is
/// `β̂ᵀΣβ*/β̂ᵀΣβ̂` exactly.
pub fn shrink_root(setting: &BiasSetting) -> Result<f64> {
    setting.validate()?;
    let f = |lambda: f64| shrunk_bias(setting, lambda);
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::degenerate(format!(
            "no sign change on [0, 1]: f(0) = {f_lo:.3e}, f(1) = {f_hi:.3e}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub reps: usize,
}

impl McEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        McEstimate { mean, std_err: (var / n).sqrt(), reps: samples.len() }
    }
}

/// Brute-force oracle for the bias with β̂ held fixed: draw test items,
/// select the top α by `β̂ᵀx`, and average
/// `φ(λβ̂ᵀx + (1−λ)β̂ᵀμ) − φ(β*ᵀx)` on the selection.
pub fn mc_shrunk_bias(
    setting: &BiasSetting,
    lambda: f64,
    n_items: usize,
    n_reps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<McEstimate> {
    setting.validate()?;
    if n_items < 100 {
        return Err(Error::invalid_input(format!("need at least 100 items, got {n_items}")));
    }
    if n_reps < 2 {
        return Err(Error::invalid_input(format!("need at least 2 reps, got {n_reps}")));
    }
    let d = setting.beta_hat.len();
    let chol = setting.sigma.cholesky_factor(d)?;
    // x = mu + L z, so β'x = β'mu + (L'β)'z: two dot products per item
    let project = |beta: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|k| (k..d).map(|i| beta[i] * chol[[i, k]]).sum())
            .collect()
    };
    let w_hat = project(&setting.beta_hat);
    let w_star = project(&setting.beta_star);
    let m_hat = setting.mu_proj();
    let m_star: f64 = setting.beta_star.iter().zip(&setting.mu).map(|(b, m)| b * m).sum();
    let k = ((setting.alpha * n_items as f64).floor() as usize).max(1);

    let mut samples = Vec::with_capacity(n_reps);
    let mut z = vec![0.0f64; d];
    let mut scores: Vec<(f64, f64)> = Vec::with_capacity(n_items);
    for _ in 0..n_reps {
        scores.clear();
        for _ in 0..n_items {
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(rng);
            }
            let s_hat = m_hat + w_hat.iter().zip(&z).map(|(w, z)| w * z).sum::<f64>();
            let s_star = m_star + w_star.iter().zip(&z).map(|(w, z)| w * z).sum::<f64>();
            scores.push((s_hat, s_star));
        }
        scores
            .select_nth_unstable_by(k - 1, |a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut gap = 0.0;
        for (s_hat, s_star) in &scores[..k] {
            let adjusted = lambda * s_hat + (1.0 - lambda) * m_hat;
            gap += setting.link.phi(adjusted) - setting.link.phi(*s_star);
        }
        samples.push(gap / k as f64);
    }
    Ok(McEstimate::from_samples(&samples))
}

/// The λ = 1 case: estimated minus actual average probability on the
/// selection set.
pub fn mc_selection_bias(
    setting: &BiasSetting,
    n_items: usize,
    n_reps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<McEstimate> {
    mc_shrunk_bias(setting, 1.0, n_items, n_reps, rng)
}

/// Quadrature-vs-Monte-Carlo agreement for one setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub formula: f64,
    pub mc: McEstimate,
    pub tolerance: f64,
    pub pass: bool,
}

/// `|bias_leading_term − MC| ≤ 3·SE + extra_allowance`.
pub fn check_consistency(
    setting: &BiasSetting,
    n_items: usize,
    n_reps: usize,
    extra_allowance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ConsistencyCheck> {
    let formula = bias_leading_term(setting)?;
    let mc = mc_selection_bias(setting, n_items, n_reps, rng)?;
    let tolerance = 3.0 * mc.std_err + extra_allowance;
    Ok(ConsistencyCheck { formula, mc, tolerance, pass: (formula - mc.mean).abs() <= tolerance })
}

/// A random setting in the near-MLE regime the bias formula targets:
/// `β̂ = β* + small noise`, small mean shifts, so the formula's dropped
/// remainder stays within the check's allowance.
pub fn random_bias_setting(rng: &mut ChaCha8Rng, link: LinkFunction) -> BiasSetting {
    use rand::Rng as _;
    let d = rng.random_range(2..=5);
    let beta_star: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let beta_hat: Vec<f64> = beta_star
        .iter()
        .map(|b| {
            let z: f64 = StandardNormal.sample(rng);
            b + 0.02 * z
        })
        .collect();
    let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-0.015..0.015)).collect();
    let vars: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.3)).collect();
    let alpha = rng.random_range(0.02..0.3);
    BiasSetting { beta_hat, beta_star, mu, sigma: Covariance::Diagonal(vars), alpha, link }
}

/// Training law plus an explicit test-feature law, for the checks that mix
/// refitting with test-distribution geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionSetting {
    pub train: GaussianConfig,
    pub test_mu: Vec<f64>,
    pub test_sigma: Covariance,
    #[serde(default)]
    pub fit: FitOptions,
}

/// Both sides of `E[β̂ᵀΣβ̂] = E[β̂ᵀΣβ*] + E_X[Var(β̂ᵀX − β̂ᵀμ | X)]`,
/// estimated over refits, with a batch-means standard error on the gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub lhs: f64,
    pub signal_term: f64,
    pub variance_term: f64,
    pub rhs: f64,
    pub diff: f64,
    pub diff_se: f64,
    pub refits: usize,
    pub batches: usize,
    pub pass: bool,
}

/// Refit the logistic MLE on fresh training draws and test the variance
/// decomposition: the conditional variance is taken over refits at a fixed
/// grid of test-distribution feature points.
pub fn check_decomposition(
    setting: &DecompositionSetting,
    n_refits: usize,
    grid_size: usize,
    n_batches: usize,
    seed: SeedStream,
) -> Result<DecompositionReport> {
    if n_refits < 100 {
        return Err(Error::invalid_input(format!("need at least 100 refits, got {n_refits}")));
    }
    if n_batches < 2 || n_refits / n_batches < 2 {
        return Err(Error::invalid_input("need at least 2 batches of at least 2 refits"));
    }
    setting.train.validate()?;
    let d = setting.train.dim();
    if setting.test_mu.len() != d {
        return Err(Error::invalid_input("test_mu dimension mismatch"));
    }

    // fixed X grid from the test law
    let grid = {
        let chol = setting.test_sigma.cholesky_factor(d)?;
        let mut rng = seed.child(0).rng();
        let mut grid = Array2::<f64>::zeros((grid_size, d));
        let mut z = vec![0.0f64; d];
        for g in 0..grid_size {
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(&mut rng);
            }
            for i in 0..d {
                let mut x = setting.test_mu[i];
                for k in 0..=i {
                    x += chol[[i, k]] * z[k];
                }
                grid[[g, i]] = x;
            }
        }
        grid
    };

    let betas: Vec<Vec<f64>> = (0..n_refits)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = seed.child(1 + r as u64).rng();
            let data = generate_synthetic(&setting.train, &mut rng)?;
            Ok(fit_logistic(&data, &setting.fit)?.beta)
        })
        .collect::<Result<Vec<_>>>()?;

    let sigma = &setting.test_sigma;
    let beta_star = &setting.train.beta_star;
    let mut batch_lhs = Vec::with_capacity(n_batches);
    let mut batch_signal = Vec::with_capacity(n_batches);
    let mut batch_var = Vec::with_capacity(n_batches);
    let mut batch_diff = Vec::with_capacity(n_batches);
    for chunk in betas.chunks(n_refits.div_ceil(n_batches)) {
        let m = chunk.len() as f64;
        let lhs = chunk
            .iter()
            .map(|b| sigma.quadratic_form(b, b))
            .sum::<Result<f64>>()?
            / m;
        let signal = chunk
            .iter()
            .map(|b| sigma.quadratic_form(b, beta_star))
            .sum::<Result<f64>>()?
            / m;
        // per grid point: sample variance over refits of β̂ᵀ(x − μ)
        let mut var_sum = 0.0;
        let mut projections = vec![0.0f64; chunk.len()];
        for g in 0..grid_size {
            for (r, beta) in chunk.iter().enumerate() {
                let mut p = 0.0;
                for i in 0..d {
                    p += beta[i] * (grid[[g, i]] - setting.test_mu[i]);
                }
                projections[r] = p;
            }
            let mean = projections.iter().sum::<f64>() / m;
            let var =
                projections.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (m - 1.0);
            var_sum += var;
        }
        let variance_term = var_sum / grid_size as f64;
        batch_lhs.push(lhs);
        batch_signal.push(signal);
        batch_var.push(variance_term);
        batch_diff.push(lhs - signal - variance_term);
    }
    let k = batch_diff.len() as f64;
    let diff = batch_diff.iter().sum::<f64>() / k;
    let diff_var =
        batch_diff.iter().map(|x| (x - diff) * (x - diff)).sum::<f64>() / (k - 1.0);
    let diff_se = (diff_var / k).sqrt();
    let lhs = batch_lhs.iter().sum::<f64>() / k;
    let signal_term = batch_signal.iter().sum::<f64>() / k;
    let variance_term = batch_var.iter().sum::<f64>() / k;
    Ok(DecompositionReport {
        lhs,
        signal_term,
        variance_term,
        rhs: signal_term + variance_term,
        diff,
        diff_se,
        refits: n_refits,
        batches: batch_diff.len(),
        pass: diff.abs() <= 3.0 * diff_se,
    })
}

/// Linear-Gaussian variant with a closed form: OLS refits on
/// `X ~ N(0, I)`, `y = β*ᵀx + σ·ε`, where the right side is analytically
/// `β*ᵀΣβ* + tr(Σ)·σ²/N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearDecompositionReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub analytic_rhs: f64,
    pub diff: f64,
    pub pass: bool,
}

pub fn check_decomposition_linear(
    beta_star: &[f64],
    n_train: usize,
    noise_sd: f64,
    test_sigma: &Covariance,
    n_refits: usize,
    seed: SeedStream,
) -> Result<LinearDecompositionReport> {
    let d = beta_star.len();
    if d == 0 || n_train <= d + 1 {
        return Err(Error::invalid_input("need n_train > d + 1"));
    }
    if n_refits < 10 {
        return Err(Error::invalid_input("need at least 10 refits"));
    }
    let samples: Vec<f64> = (0..n_refits)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = seed.child(r as u64).rng();
            let mut xtx = Array2::<f64>::zeros((d, d));
            let mut xty = ndarray::Array1::<f64>::zeros(d);
            let mut row = vec![0.0f64; d];
            for _ in 0..n_train {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let noise: f64 = StandardNormal.sample(&mut rng);
                let y: f64 =
                    beta_star.iter().zip(&row).map(|(b, x)| b * x).sum::<f64>() + noise_sd * noise;
                for a in 0..d {
                    xty[a] += row[a] * y;
                    for b in a..d {
                        xtx[[a, b]] += row[a] * row[b];
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    xtx[[a, b]] = xtx[[b, a]];
                }
            }
            let beta_hat = solve_spd(&xtx, &xty)?;
            test_sigma.quadratic_form(beta_hat.as_slice().unwrap(), beta_hat.as_slice().unwrap())
        })
        .collect::<Result<Vec<_>>>()?;
    let est = McEstimate::from_samples(&samples);
    let sigma_mat = test_sigma.to_matrix(d)?;
    let trace: f64 = sigma_mat.diag().sum();
    let analytic = test_sigma.quadratic_form(beta_star, beta_star)?
        + trace * noise_sd * noise_sd / n_train as f64;
    let diff = est.mean - analytic;
    Ok(LinearDecompositionReport {
        lhs: est.mean,
        lhs_se: est.std_err,
        analytic_rhs: analytic,
        diff,
        pass: diff.abs() <= 3.0 * est.std_err + 1e-12,
    })
}

/// Hypothesis region for the h′ bounds: `t ∈ [t_l, t_r]`, deterministic
/// `β̂ᵀμ ∈ [mu_l, mu_r]`, and derivative bounds `c0 ≤ φ′ ≤ c_upper` on the
/// induced window, with mass constant `c1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundConfig {
    pub c0: f64,
    pub c_upper: f64,
    pub c1: f64,
    pub t_l: f64,
    pub t_r: f64,
    pub mu_l: f64,
    pub mu_r: f64,
}

impl BoundConfig {
    /// Derive the derivative bounds from the link over the hypothesis window
    /// `[mu_l + t_l·q, mu_r + 2·t_r·q]`; `c1 = 1` because μ-projection is
    /// treated as deterministic inside `[mu_l, mu_r]`.
    // negated comparisons trap NaN config values
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn derived(
        link: LinkFunction,
        alpha: f64,
        t_l: f64,
        t_r: f64,
        mu_l: f64,
        mu_r: f64,
    ) -> Result<Self> {
        if !(t_l < t_r) || t_l <= 0.0 {
            return Err(Error::invalid_input(format!(
                "need 0 < t_l < t_r, got [{t_l}, {t_r}]"
            )));
        }
        if !(mu_l <= mu_r) {
            return Err(Error::invalid_input(format!("need mu_l <= mu_r, got [{mu_l}, {mu_r}]")));
        }
        let q = upper_quantile(alpha)?;
        let window_lo = mu_l + t_l * q;
        let window_hi = mu_r + 2.0 * t_r * q;
        if window_lo > window_hi {
            return Err(Error::invalid_input(
                "hypothesis window is empty: mu_l + t_l·q > mu_r + 2·t_r·q",
            ));
        }
        let (c0, c_upper) = match link {
            LinkFunction::Identity => (1.0, 1.0),
            LinkFunction::Logistic => {
                // φ′ is unimodal with max 0.25 at 0; minimum over an interval
                // sits at the endpoint farther from 0
                let lo = link.phi_derivative(window_lo);
                let hi = link.phi_derivative(window_hi);
                (lo.min(hi), 0.25)
            }
        };
        Ok(BoundConfig { c0, c_upper, c1: 1.0, t_l, t_r, mu_l, mu_r })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.t_l < self.t_r) {
            return Err(Error::invalid_input("need t_l < t_r"));
        }
        if self.c0 > self.c_upper {
            return Err(Error::invalid_input("need c0 <= C"));
        }
        if !(self.c0 > 0.0 && self.c1 > 0.0) {
            return Err(Error::invalid_input("bounds need positive c0 and c1"));
        }
        Ok(())
    }
}

/// Grid evaluation of the h′ sandwich bounds
/// `(c0·c1/2)·E[Z|Z≥q] ≤ h′(t) ≤ C·E[Z|Z≥q]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPrimeBoundsReport {
    pub q: f64,
    pub tail_mean: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub grid_points: usize,
    /// smallest `h′ − lower_bound` seen (negative means violation)
    pub min_lower_margin: f64,
    /// smallest `upper_bound − h′` seen
    pub min_upper_margin: f64,
    pub pass: bool,
}

pub fn check_hprime_bounds(
    cfg: &BoundConfig,
    alpha: f64,
    link: LinkFunction,
    grid_points: usize,
) -> Result<HPrimeBoundsReport> {
    cfg.validate()?;
    if !(alpha > 0.0 && alpha <= 0.2) {
        return Err(Error::invalid_input(format!(
            "the bounds require alpha <= 0.2, got {alpha}"
        )));
    }
    if grid_points < 2 {
        return Err(Error::invalid_input("need at least 2 grid points"));
    }
    let q = upper_quantile(alpha)?;
    let tail_mean = truncated_mean(alpha)?;
    let lower_bound = 0.5 * cfg.c0 * cfg.c1 * tail_mean;
    let upper_bound = cfg.c_upper * tail_mean;
    let mut min_lower = f64::INFINITY;
    let mut min_upper = f64::INFINITY;
    for gi in 0..grid_points {
        let t = cfg.t_l + (cfg.t_r - cfg.t_l) * gi as f64 / (grid_points - 1) as f64;
        for mu in [cfg.mu_l, 0.5 * (cfg.mu_l + cfg.mu_r), cfg.mu_r] {
            let h = h_prime(t, mu, alpha, link)?;
            min_lower = min_lower.min(h - lower_bound);
            min_upper = min_upper.min(upper_bound - h);
        }
    }
    Ok(HPrimeBoundsReport {
        q,
        tail_mean,
        lower_bound,
        upper_bound,
        grid_points,
        min_lower_margin: min_lower,
        min_upper_margin: min_upper,
        pass: min_lower >= -1e-12 && min_upper >= -1e-12,
    })
}

/// Refit-averaged formula-vs-oracle consistency: average both the formula and the
/// Monte-Carlo oracle over fresh `β̂` fits, then compare the mean gap
/// against `3·SE + allowance` (the allowance budgets the O(1/N) remainder).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefitConsistencyReport {
    pub formula_mean: f64,
    pub mc_mean: f64,
    pub diff: f64,
    pub diff_se: f64,
    pub allowance: f64,
    pub refits: usize,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_consistency_refit_averaged(
    setting: &DecompositionSetting,
    alpha: f64,
    link: LinkFunction,
    n_refits: usize,
    n_items: usize,
    n_reps: usize,
    allowance: f64,
    seed: SeedStream,
) -> Result<RefitConsistencyReport> {
    if n_refits < 10 {
        return Err(Error::invalid_input("need at least 10 refits"));
    }
    setting.train.validate()?;
    let rows: Vec<(f64, f64)> = (0..n_refits)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let child = seed.child(r as u64);
            let mut rng = child.rng();
            let data = generate_synthetic(&setting.train, &mut rng)?;
            let beta_hat = fit_logistic(&data, &setting.fit)?.beta;
            let bias = BiasSetting {
                beta_hat,
                beta_star: setting.train.beta_star.clone(),
                mu: setting.test_mu.clone(),
                sigma: setting.test_sigma.clone(),
                alpha,
                link,
            };
            let formula = bias_leading_term(&bias)?;
            let mut mc_rng = child.child(1).rng();
            let mc = mc_selection_bias(&bias, n_items, n_reps, &mut mc_rng)?;
            Ok((formula, mc.mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = rows.iter().map(|(f, m)| f - m).collect();
    let est = McEstimate::from_samples(&diffs);
    let formula_mean = rows.iter().map(|r| r.0).sum::<f64>() / n_refits as f64;
    let mc_mean = rows.iter().map(|r| r.1).sum::<f64>() / n_refits as f64;
    Ok(RefitConsistencyReport {
        formula_mean,
        mc_mean,
        diff: est.mean,
        diff_se: est.std_err,
        allowance,
        refits: n_refits,
        pass: est.mean.abs() <= 3.0 * est.std_err + allowance,
    })
}
