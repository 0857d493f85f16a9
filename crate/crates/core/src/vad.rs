//! Variance-adjusting debiasing.
//!
//! Selection by the maximum of noisy scores overestimates the selected
//! items' outcomes. The fix stays entirely in score space: estimate the
//! fraction of the score variance that is real signal,
//! `λ = 1 − (conditional prediction variance) / (total score variance)`, on
//! an unlabeled sample from the test distribution, then shrink every logit
//! toward the mean by λ and re-apply the link. The transform is strictly
//! increasing for λ > 0, so rankings (and every top-α selection set) are
//! unchanged.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{LinkFunction, Probability};

/// Intermediate variance estimates kept for inspection; `raw_lambda` is the
/// pre-clamp value, which can leave `[0, 1]` through estimation noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VadDiagnostics {
    pub sigma_f_sq: f64,
    pub sigma_yhat_sq: f64,
    pub raw_lambda: f64,
}

/// The entire serving-time state of VAD: shrink factor, reference mean of
/// the deployment member's logits, and the link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VadParams {
    pub lambda: f64,
    pub y_bar: f64,
    pub link: LinkFunction,
    /// Flattened on disk: `{lambda, raw_lambda, y_bar, sigma_f_sq, sigma_yhat_sq, link}`.
    #[serde(flatten)]
    pub diagnostics: VadDiagnostics,
}

/// How ensemble members scatter, which decides the normalization of the
/// conditional-variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberScatter {
    /// Members are exchangeable draws of the same randomness (reseeded
    /// retrains, externally produced score columns). The plain S-member
    /// sample variance is unbiased.
    #[default]
    Exchangeable,
    /// Members 2…S are bootstrap refits scattering around member 1 with the
    /// same variance that member 1 has around the truth. The sample
    /// variance then carries expectation `(1 − 1/S)·Var`, so it is scaled
    /// by `S/(S−1)`; at S = 2 this is the classical bootstrap variance
    /// estimate `(l_2 − l_1)²` around the point estimate.
    AroundMember1,
}

/// Estimate λ from member logits on the unlabeled reference set, with the
/// exchangeable-members normalization.
///
/// `logit_columns` is n × S with column 0 the deployment member. Per row,
/// the conditional variance is the S-member sample variance of the centered
/// logits `d_j = l_j(x) − mean(l_j)`; the total variance is the population
/// variance of column 0.
pub fn compute_lambda(logit_columns: &Array2<f64>, link: LinkFunction) -> Result<VadParams> {
    compute_lambda_with(logit_columns, link, MemberScatter::Exchangeable)
}

/// [`compute_lambda`] with an explicit member-scatter model.
pub fn compute_lambda_with(
    logit_columns: &Array2<f64>,
    link: LinkFunction,
    scatter: MemberScatter,
) -> Result<VadParams> {
    let n = logit_columns.nrows();
    let s = logit_columns.ncols();
    if s < 2 {
        return Err(Error::invalid_input(format!(
            "need at least two score columns for a conditional-variance estimate, got {s}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid_input(format!(
            "need at least two rows to estimate variances, got {n}"
        )));
    }
    if let Some(bad) = logit_columns.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid_input(format!("non-finite logit {bad}")));
    }

    let nf = n as f64;
    let col_means: Vec<f64> = (0..s).map(|j| logit_columns.column(j).sum() / nf).collect();

    // population (1/n) variance of the deployment member
    let mut sigma_yhat_sq = 0.0;
    for v in logit_columns.column(0) {
        let d = v - col_means[0];
        sigma_yhat_sq += d * d;
    }
    sigma_yhat_sq /= nf;
    if sigma_yhat_sq <= 0.0 {
        return Err(Error::degenerate(
            "deployment member scores are constant on the reference set".to_string(),
        ));
    }

    // expected conditional variance: mean over rows of the between-member
    // sample variance (1/(S−1)) of the centered logits
    let sf = s as f64;
    let mut sigma_f_sq = 0.0;
    let mut centered = vec![0.0f64; s];
    for i in 0..n {
        let mut row_mean = 0.0;
        for j in 0..s {
            let d = logit_columns[[i, j]] - col_means[j];
            centered[j] = d;
            row_mean += d;
        }
        row_mean /= sf;
        let mut var = 0.0;
        for d in &centered {
            let c = d - row_mean;
            var += c * c;
        }
        sigma_f_sq += var / (sf - 1.0);
    }
    sigma_f_sq /= nf;
    if scatter == MemberScatter::AroundMember1 {
        sigma_f_sq *= sf / (sf - 1.0);
    }

    let raw_lambda = 1.0 - sigma_f_sq / sigma_yhat_sq;
    Ok(VadParams {
        lambda: raw_lambda.clamp(0.0, 1.0),
        y_bar: col_means[0],
        link,
        diagnostics: VadDiagnostics { sigma_f_sq, sigma_yhat_sq, raw_lambda },
    })
}

impl VadParams {
    /// The debiased predictor: `φ(λ·l + (1−λ)·y_bar)` pointwise.
    pub fn transform(&self, logits_member1: &[f64]) -> Vec<Probability> {
        logits_member1
            .iter()
            .map(|l| {
                let t = self.lambda * l + (1.0 - self.lambda) * self.y_bar;
                let pair = self.link.phi_pair(t);
                Probability::from_parts(pair.0, pair.1)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// The VAD+ shrink ratio `λ_val-test / λ_val-train`, clamped into `[0, 1]`.
///
/// Both inputs must come from the same ensemble's raw (pre-calibration)
/// logits on the respective unlabeled sets. Baseline calibrators already
/// absorb the training-distribution part of the bias, so only the ratio is
/// applied on top of them.
pub fn vad_plus_ratio(val_test: &VadParams, val_train: &VadParams) -> Result<f64> {
    if val_train.lambda <= 0.0 {
        return Err(Error::degenerate(
            "lambda on val-train is zero; baseline calibration cannot be adjusted".to_string(),
        ));
    }
    Ok((val_test.lambda / val_train.lambda).clamp(0.0, 1.0))
}

/// Serving-time state for adjusting an already-calibrated predictor:
/// `φ(ratio·φ⁻¹(f_cal(x)) + (1−ratio)·center)` where `center` is the mean
/// calibrated logit on the unlabeled val-test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VadPlusParams {
    pub ratio: f64,
    pub raw_ratio: f64,
    pub center: f64,
    pub link: LinkFunction,
}

impl VadPlusParams {
    /// Build from the two λ estimates and the calibrated predictions on the
    /// unlabeled val-test set (used only for the centering constant).
    pub fn from_lambdas(
        val_test: &VadParams,
        val_train: &VadParams,
        calibrated_val_test: &[Probability],
        link: LinkFunction,
    ) -> Result<Self> {
        if calibrated_val_test.is_empty() {
            return Err(Error::invalid_input(
                "need calibrated val-test predictions for the centering constant".to_string(),
            ));
        }
        let ratio = vad_plus_ratio(val_test, val_train)?;
        let center = calibrated_val_test
            .iter()
            .map(|p| link.phi_inverse_pair((p.value(), p.complement())))
            .sum::<f64>()
            / calibrated_val_test.len() as f64;
        Ok(Self {
            ratio,
            raw_ratio: val_test.lambda / val_train.lambda,
            center,
            link,
        })
    }

    pub fn transform(&self, calibrated: &[Probability]) -> Vec<Probability> {
        calibrated
            .iter()
            .map(|p| {
                let l = self.link.phi_inverse_pair((p.value(), p.complement()));
                let t = self.ratio * l + (1.0 - self.ratio) * self.center;
                let pair = self.link.phi_pair(t);
                Probability::from_parts(pair.0, pair.1)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Covariance, GaussianConfig};
    use crate::linear_model::{build_ensemble, EnsembleMode, FitOptions};
    use crate::metrics::select_top_alpha;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng as _;

    #[test]
    fn identical_columns_give_lambda_one() {
        let cols = array![[0.3, 0.3], [1.5, 1.5], [-0.7, -0.7]];
        let params = compute_lambda(&cols, LinkFunction::Logistic).unwrap();
        assert_abs_diff_eq!(params.diagnostics.sigma_f_sq, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(params.lambda, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_worked_two_by_two() {
        // l1 = (0, 2), l2 = (1, 1): means (1, 1); total variance 1;
        // per-row conditional variance 0.5 each; lambda = 0.5
        let cols = array![[0.0, 1.0], [2.0, 1.0]];
        let params = compute_lambda(&cols, LinkFunction::Logistic).unwrap();
        assert_abs_diff_eq!(params.y_bar, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(params.diagnostics.sigma_yhat_sq, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(params.diagnostics.sigma_f_sq, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(params.lambda, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_scatter_rescales_conditional_variance() {
        let cols = array![[0.0, 1.0], [2.0, 1.0]];
        let plain = compute_lambda(&cols, LinkFunction::Logistic).unwrap();
        let boot =
            compute_lambda_with(&cols, LinkFunction::Logistic, MemberScatter::AroundMember1)
                .unwrap();
        // S = 2: the bootstrap normalization doubles the sample variance
        assert_abs_diff_eq!(
            boot.diagnostics.sigma_f_sq,
            2.0 * plain.diagnostics.sigma_f_sq,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(boot.lambda, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_raw_lambda_clamps_to_zero() {
        // member 2 wildly disagrees: conditional variance above total
        let cols = array![[0.0, 10.0], [0.1, -10.0], [-0.1, 7.0], [0.05, -6.0]];
        let params = compute_lambda(&cols, LinkFunction::Logistic).unwrap();
        assert!(params.diagnostics.raw_lambda < 0.0);
        assert_eq!(params.lambda, 0.0);
    }

    #[test]
    fn constant_member_one_is_degenerate() {
        let cols = array![[1.0, 0.5], [1.0, 0.7]];
        assert!(matches!(
            compute_lambda(&cols, LinkFunction::Logistic),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn single_column_rejected() {
        let cols = Array2::from_shape_vec((3, 1), vec![0.1, 0.2, 0.3]).unwrap();
        assert!(compute_lambda(&cols, LinkFunction::Logistic).is_err());
    }

    #[test]
    fn transform_limits() {
        let mk = |lambda: f64| VadParams {
            lambda,
            y_bar: 0.0,
            link: LinkFunction::Logistic,
            diagnostics: VadDiagnostics { sigma_f_sq: 0.0, sigma_yhat_sq: 1.0, raw_lambda: lambda },
        };
        let logits = vec![-1.0, 0.0, 2.0];
        // lambda = 1: the original predictor
        for (p, l) in mk(1.0).transform(&logits).iter().zip(&logits) {
            assert_abs_diff_eq!(p.value(), LinkFunction::Logistic.phi(*l), epsilon = 1e-15);
        }
        // lambda = 0: constant output phi(y_bar)
        for p in mk(0.0).transform(&logits) {
            assert_abs_diff_eq!(p.value(), 0.5, epsilon = 1e-15);
        }
        // lambda = 0.5, y_bar = 0, l = 2 -> phi(1)
        let p = mk(0.5).transform(&[2.0]);
        assert_abs_diff_eq!(p[0].value(), LinkFunction::Logistic.phi(1.0), epsilon = 1e-15);
    }

    #[test]
    fn shrinkage_bound_holds_pointwise() {
        let params = VadParams {
            lambda: 0.7,
            y_bar: -0.4,
            link: LinkFunction::Logistic,
            diagnostics: VadDiagnostics { sigma_f_sq: 0.3, sigma_yhat_sq: 1.0, raw_lambda: 0.7 },
        };
        let mut rng = SeedStream::new(2).rng();
        for _ in 0..1000 {
            let l: f64 = rng.random_range(-5.0..5.0);
            let out = params.transform(&[l])[0];
            let back = LinkFunction::Logistic.phi_inverse_pair((out.value(), out.complement()));
            assert!(
                (back - params.y_bar).abs() <= (l - params.y_bar).abs() + 1e-9,
                "logit {l} moved away from the mean"
            );
        }
    }

    #[test]
    fn rank_invariance_of_selection_sets() {
        let mut rng = SeedStream::new(3).rng();
        for trial in 0..50 {
            let n = 200;
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let params = VadParams {
                lambda: rng.random_range(0.05..1.0),
                y_bar: rng.random_range(-1.0..1.0),
                link: LinkFunction::Logistic,
                diagnostics: VadDiagnostics { sigma_f_sq: 0.0, sigma_yhat_sq: 1.0, raw_lambda: 0.0 },
            };
            let base: Vec<f64> = logits.iter().map(|l| LinkFunction::Logistic.phi(*l)).collect();
            let debiased: Vec<f64> =
                params.transform(&logits).iter().map(|p| p.value()).collect();
            for alpha in [0.01, 0.05, 0.1, 0.25, 0.5] {
                let a = select_top_alpha(&base, alpha).unwrap();
                let b = select_top_alpha(&debiased, alpha).unwrap();
                assert_eq!(a.indices(), b.indices(), "trial {trial} alpha {alpha}");
            }
        }
    }

    #[test]
    fn lambda_approaches_one_with_large_training_sets() {
        let cfg = GaussianConfig {
            mu: vec![0.05; 20],
            sigma: Covariance::ScaledIdentity(0.01),
            beta_star: vec![1.0; 20],
            n: 100_000,
        };
        let train = generate_synthetic(&cfg, &mut SeedStream::new(60).rng()).unwrap();
        let val = generate_synthetic(
            &GaussianConfig { mu: vec![-0.05; 20], n: 20_000, ..cfg.clone() },
            &mut SeedStream::new(61).rng(),
        )
        .unwrap();
        let ensemble = build_ensemble(
            &train,
            2,
            EnsembleMode::Bootstrap,
            &FitOptions::default(),
            LinkFunction::Logistic,
            SeedStream::new(62),
        )
        .unwrap();
        let cols = ensemble.logit_columns(val.features()).unwrap();
        let params = compute_lambda(&cols, LinkFunction::Logistic).unwrap();
        assert!(params.lambda > 0.9, "lambda = {} at n = 1e5", params.lambda);
    }

    #[test]
    fn vad_plus_ratio_rules() {
        let mk = |lambda: f64| VadParams {
            lambda,
            y_bar: 0.0,
            link: LinkFunction::Logistic,
            diagnostics: VadDiagnostics { sigma_f_sq: 0.0, sigma_yhat_sq: 1.0, raw_lambda: lambda },
        };
        assert_abs_diff_eq!(vad_plus_ratio(&mk(0.8), &mk(0.8)).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vad_plus_ratio(&mk(0.45), &mk(0.9)).unwrap(), 0.5, epsilon = 1e-15);
        // clamped from 1.055…
        assert_abs_diff_eq!(vad_plus_ratio(&mk(0.95), &mk(0.9)).unwrap(), 1.0, epsilon = 1e-15);
        assert!(vad_plus_ratio(&mk(0.5), &mk(0.0)).is_err());
    }

    #[test]
    fn vad_plus_identity_ratio_leaves_baseline_unchanged() {
        let mk = |lambda: f64| VadParams {
            lambda,
            y_bar: 0.0,
            link: LinkFunction::Logistic,
            diagnostics: VadDiagnostics { sigma_f_sq: 0.0, sigma_yhat_sq: 1.0, raw_lambda: lambda },
        };
        let calibrated: Vec<Probability> =
            [0.2, 0.4, 0.7].iter().map(|p| Probability::new(*p).unwrap()).collect();
        let params = VadPlusParams::from_lambdas(
            &mk(0.8),
            &mk(0.8),
            &calibrated,
            LinkFunction::Logistic,
        )
        .unwrap();
        let out = params.transform(&calibrated);
        for (a, b) in out.iter().zip(&calibrated) {
            assert_abs_diff_eq!(a.value(), b.value(), epsilon = 1e-12);
        }
        // raw ratio preserved in diagnostics even when clamped
        let clamped = VadPlusParams::from_lambdas(
            &mk(0.95),
            &mk(0.9),
            &calibrated,
            LinkFunction::Logistic,
        )
        .unwrap();
        assert!(clamped.raw_ratio > 1.0);
        assert_eq!(clamped.ratio, 1.0);
    }

    #[test]
    fn params_json_round_trip_keeps_contract_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vad.json");
        let params = VadParams {
            lambda: 0.62,
            y_bar: -0.91,
            link: LinkFunction::Logistic,
            diagnostics: VadDiagnostics {
                sigma_f_sq: 0.11,
                sigma_yhat_sq: 0.29,
                raw_lambda: 0.6206896551,
            },
        };
        params.save(&path).unwrap();
        let raw = fs::read_to_string(&path).unwrap();
        for key in ["lambda", "raw_lambda", "y_bar", "sigma_f_sq", "sigma_yhat_sq", "link"] {
            assert!(raw.contains(key), "missing {key} in serialized params");
        }
        let back = VadParams::load(&path).unwrap();
        assert_abs_diff_eq!(back.lambda, params.lambda, epsilon = 0.0);
        assert_abs_diff_eq!(back.diagnostics.raw_lambda, params.diagnostics.raw_lambda, epsilon = 0.0);
    }
}
