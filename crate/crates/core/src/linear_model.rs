//! Maximum-likelihood logistic regression and S-member scorer ensembles.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::link::{LinkFunction, Probability};
use crate::rng::SeedStream;

/// Options for the Newton/IRLS fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Ridge stabilizer: the objective is log-lik − (ridge/2)·‖β‖². Guards
    /// the Newton steps against perfect separation; at 1e-8 the optimum is
    /// indistinguishable from the plain MLE at experiment noise levels.
    pub ridge: f64,
    pub fit_intercept: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, ridge: 1e-8, fit_intercept: false }
    }
}

/// A fitted linear scorer: logits are `intercept + beta · x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub fit_intercept: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    /// Logits for every row of `x`.
    pub fn score_matrix(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.beta.len() {
            return Err(Error::invalid_input(format!(
                "feature dim {} does not match model dim {}",
                x.ncols(),
                self.beta.len()
            )));
        }
        let beta = Array1::from_vec(self.beta.clone());
        let mut logits = x.dot(&beta).to_vec();
        if self.intercept != 0.0 {
            for l in &mut logits {
                *l += self.intercept;
            }
        }
        Ok(logits)
    }

    /// Logit for a single row.
    pub fn score_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::invalid_input(format!(
                "feature dim {} does not match model dim {}",
                x.len(),
                self.beta.len()
            )));
        }
        Ok(self.intercept + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    /// `phi(score)` for every row.
    pub fn predict(&self, x: &Array2<f64>, link: LinkFunction) -> Result<Vec<Probability>> {
        Ok(self
            .score_matrix(x)?
            .into_iter()
            .map(|l| {
                let pair = link.phi_pair(l);
                Probability::from_parts(pair.0, pair.1)
            })
            .collect())
    }
}

/// Penalized Bernoulli log-likelihood at `beta` (logits pre-computed).
fn penalized_loglik(logits: &[f64], labels: &[u8], beta: &Array1<f64>, ridge: f64) -> f64 {
    let mut ll = 0.0;
    for (l, y) in logits.iter().zip(labels) {
        let (p, q) = LinkFunction::Logistic.phi_pair(*l);
        ll += if *y == 1 { p.ln() } else { q.ln() };
    }
    ll - 0.5 * ridge * beta.dot(beta)
}

struct Design {
    x: Array2<f64>,
    y: Vec<u8>,
}

impl Design {
    fn build(data: &LabeledDataset, fit_intercept: bool) -> Self {
        let n = data.n();
        let d = data.dim();
        let x = if fit_intercept {
            let mut x = Array2::<f64>::ones((n, d + 1));
            x.slice_mut(ndarray::s![.., ..d]).assign(data.features());
            x
        } else {
            data.features().clone()
        };
        Design { x, y: data.labels().to_vec() }
    }
}

/// Newton/IRLS fit of the ridge-stabilized logistic MLE.
///
/// Stops when the largest applied coefficient update drops below `tol`;
/// step-halving keeps the penalized log-likelihood non-decreasing. If the
/// iteration budget runs out the model is returned with `converged = false`.
pub fn fit_logistic(data: &LabeledDataset, opts: &FitOptions) -> Result<LinearModel> {
    let positives = data.labels().iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == data.n() {
        return Err(Error::degenerate(format!(
            "labels contain a single class ({positives} of {} positive)",
            data.n()
        )));
    }
    let design = Design::build(data, opts.fit_intercept);
    let p_dim = design.x.ncols();
    let mut beta = Array1::<f64>::zeros(p_dim);
    let mut logits = design.x.dot(&beta).to_vec();
    let mut ll = penalized_loglik(&logits, &design.y, &beta, opts.ridge);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        // gradient = Xᵀ(y − p) − ridge·β ; hessian = −(XᵀWX + ridge·I)
        let mut grad = Array1::<f64>::zeros(p_dim);
        let mut hess = Array2::<f64>::zeros((p_dim, p_dim));
        for (i, l) in logits.iter().enumerate() {
            let (p, q) = LinkFunction::Logistic.phi_pair(*l);
            let resid = design.y[i] as f64 - p;
            let w = p * q;
            let row = design.x.row(i);
            for a in 0..p_dim {
                grad[a] += row[a] * resid;
                for b in a..p_dim {
                    hess[[a, b]] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p_dim {
            grad[a] -= opts.ridge * beta[a];
            hess[[a, a]] += opts.ridge;
            for b in 0..a {
                hess[[a, b]] = hess[[b, a]];
            }
        }
        let delta = solve_spd(&hess, &grad)?;

        // step-halving line search: accept the first step that does not
        // decrease the penalized log-likelihood
        let mut step = 1.0;
        let (new_beta, new_ll) = loop {
            let cand = &beta + &(&delta * step);
            let cand_logits = design.x.dot(&cand).to_vec();
            let cand_ll = penalized_loglik(&cand_logits, &design.y, &cand, opts.ridge);
            if cand_ll >= ll - 1e-12 || step < 1e-6 {
                logits = cand_logits;
                break (cand, cand_ll);
            }
            step *= 0.5;
        };
        debug_assert!(new_ll >= ll - 1e-9, "IRLS step decreased the objective");
        let max_update = delta.iter().fold(0.0f64, |m, v| m.max((v * step).abs()));
        beta = new_beta;
        ll = new_ll;
        if max_update < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic fit did not converge in {} iterations", opts.max_iter);
    }
    let (coef, intercept) = if opts.fit_intercept {
        let d = p_dim - 1;
        (beta.slice(ndarray::s![..d]).to_vec(), beta[d])
    } else {
        (beta.to_vec(), 0.0)
    };
    Ok(LinearModel {
        beta: coef,
        intercept,
        fit_intercept: opts.fit_intercept,
        converged,
        iterations,
    })
}

/// Gradient of the penalized log-likelihood at an arbitrary `beta`
/// (no intercept handling; used by tests to check optimality).
pub fn penalized_gradient(data: &LabeledDataset, beta: &[f64], ridge: f64) -> Vec<f64> {
    let x = data.features();
    let bv = Array1::from_vec(beta.to_vec());
    let logits = x.dot(&bv);
    let mut grad = vec![0.0; beta.len()];
    for i in 0..data.n() {
        let p = LinkFunction::Logistic.phi(logits[i]);
        let resid = data.labels()[i] as f64 - p;
        for (a, g) in grad.iter_mut().enumerate() {
            *g += x[[i, a]] * resid;
        }
    }
    for (g, b) in grad.iter_mut().zip(beta) {
        *g -= ridge * b;
    }
    grad
}

/// Penalized log-likelihood at an arbitrary `beta` (no intercept).
pub fn penalized_objective(data: &LabeledDataset, beta: &[f64], ridge: f64) -> f64 {
    let bv = Array1::from_vec(beta.to_vec());
    let logits = data.features().dot(&bv).to_vec();
    penalized_loglik(&logits, data.labels(), &bv, ridge)
}

/// `n` rows drawn i.i.d. uniformly with replacement.
pub fn bootstrap_resample(data: &LabeledDataset, rng: &mut ChaCha8Rng) -> LabeledDataset {
    let n = data.n();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.take_rows(&rows)
}

/// How members 2…S obtain their training variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Refit on bootstrap resamples. The right choice for models without
    /// intrinsic randomness, such as the logistic MLE here.
    Bootstrap,
    /// Refit on a reshuffled copy of the same rows. Meant for models whose
    /// training is itself random (SGD order, random init); for the convex
    /// logistic MLE every reseeded member converges to the member-1 optimum,
    /// so the between-member variance is ~0.
    Reseed,
}

/// `S` fitted scorers sharing one link; member 0 is the deployment model,
/// always fit on the full original data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerEnsemble {
    pub members: Vec<LinearModel>,
    pub link: LinkFunction,
}

impl ScorerEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &LinearModel {
        &self.members[i]
    }

    /// n × S matrix of member logits on `x`.
    pub fn logit_columns(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let n = x.nrows();
        let mut cols = Array2::<f64>::zeros((n, self.members.len()));
        for (j, m) in self.members.iter().enumerate() {
            let logits = m.score_matrix(x)?;
            for (i, l) in logits.into_iter().enumerate() {
                cols[[i, j]] = l;
            }
        }
        Ok(cols)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Fit member 1 on the full data and members 2…S on bootstrap resamples
/// (or reshuffles in `Reseed` mode), each from its own child seed.
pub fn build_ensemble(
    data: &LabeledDataset,
    s: usize,
    mode: EnsembleMode,
    opts: &FitOptions,
    link: LinkFunction,
    seed: SeedStream,
) -> Result<ScorerEnsemble> {
    if s < 2 {
        return Err(Error::invalid_input(format!(
            "ensemble needs S >= 2 members for a conditional-variance estimate, got {s}"
        )));
    }
    let mut members = Vec::with_capacity(s);
    members.push(fit_logistic(data, opts)?);
    for i in 1..s {
        let mut rng = seed.child(i as u64).rng();
        let resampled = match mode {
            EnsembleMode::Bootstrap => bootstrap_resample(data, &mut rng),
            EnsembleMode::Reseed => {
                let mut order: Vec<usize> = (0..data.n()).collect();
                for k in (1..order.len()).rev() {
                    let j = rng.random_range(0..=k);
                    order.swap(k, j);
                }
                data.take_rows(&order)
            }
        };
        members.push(fit_logistic(&resampled, opts)?);
    }
    Ok(ScorerEnsemble { members, link })
}

/// Serialized model with provenance, matching the on-disk JSON contract
/// `{beta, intercept, link, meta{seed, mode}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub link: LinkFunction,
    pub meta: SavedModelMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SavedModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

impl SavedModel {
    pub fn from_model(model: &LinearModel, link: LinkFunction, meta: SavedModelMeta) -> Self {
        Self { beta: model.beta.clone(), intercept: model.intercept, link, meta }
    }

    pub fn into_model(self) -> LinearModel {
        LinearModel {
            fit_intercept: self.intercept != 0.0,
            beta: self.beta,
            intercept: self.intercept,
            converged: true,
            iterations: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Covariance, GaussianConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dataset_1d(xs: &[f64], ys: &[u8]) -> LabeledDataset {
        let features = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        LabeledDataset::new(features, ys.to_vec()).unwrap()
    }

    /// Grid-search likelihood maximizer: the independent oracle for 1-d fits.
    fn grid_mle_1d(data: &LabeledDataset, ridge: f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut b = -6.0;
        while b <= 6.0 {
            let ll = penalized_objective(data, &[b], ridge);
            if ll > best.0 {
                best = (ll, b);
            }
            b += 1e-3;
        }
        best.1
    }

    #[test]
    fn noisy_separable_1d_matches_grid_oracle() {
        // (x=−1, y=0), (x=1, y=1) duplicated 50x with 10% label noise
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..50 {
            xs.push(-1.0);
            ys.push(u8::from(i % 10 == 0));
            xs.push(1.0);
            ys.push(u8::from(i % 10 != 0));
        }
        let data = dataset_1d(&xs, &ys);
        let model = fit_logistic(&data, &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert!(model.beta[0] > 0.0);
        let oracle = grid_mle_1d(&data, 1e-8);
        assert!((model.beta[0] - oracle).abs() < 2e-3, "{} vs {oracle}", model.beta[0]);
    }

    #[test]
    fn sign_flip_symmetry() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rng = SeedStream::new(3).rng();
        for _ in 0..100 {
            let x: f64 = rng.random_range(-2.0..2.0);
            let y = u8::from(rng.random::<f64>() < LinkFunction::Logistic.phi(1.5 * x));
            // balanced mirror pair keeps the data exactly antisymmetric
            xs.push(x);
            ys.push(y);
            xs.push(-x);
            ys.push(1 - y);
        }
        let data = dataset_1d(&xs, &ys);
        let model = fit_logistic(&data, &FitOptions::default()).unwrap();
        assert!(model.beta[0].is_finite());
        let flipped = dataset_1d(&xs.iter().map(|x| -x).collect::<Vec<_>>(), &ys);
        let model_f = fit_logistic(&flipped, &FitOptions::default()).unwrap();
        assert_abs_diff_eq!(model.beta[0], -model_f.beta[0], epsilon = 1e-6);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = dataset_1d(&[0.0, 1.0, 2.0], &[1, 1, 1]);
        assert!(matches!(
            fit_logistic(&data, &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn mle_recovers_generator_beta() {
        // paper config; the generator's beta_star is the consistency oracle
        let cfg = GaussianConfig {
            mu: vec![0.05; 20],
            sigma: Covariance::ScaledIdentity(0.01),
            beta_star: vec![1.0; 20],
            n: 3000,
        };
        let reps = 100;
        let mut sums = [0.0; 20];
        let mut sq = [0.0; 20];
        let root = SeedStream::new(77);
        for r in 0..reps {
            let data = generate_synthetic(&cfg, &mut root.child(r).rng()).unwrap();
            let model = fit_logistic(&data, &FitOptions::default()).unwrap();
            assert!(model.converged);
            for (j, b) in model.beta.iter().enumerate() {
                sums[j] += b;
                sq[j] += b * b;
            }
        }
        for j in 0..20 {
            let mean = sums[j] / reps as f64;
            let var = (sq[j] - sums[j] * sums[j] / reps as f64) / (reps as f64 - 1.0);
            let se = (var / reps as f64).sqrt();
            assert!(
                (mean - 1.0).abs() < 3.0 * se,
                "coordinate {j}: mean {mean}, se {se}"
            );
        }
    }

    #[test]
    fn gradient_is_zero_at_optimum_and_matches_finite_differences() {
        let cfg = GaussianConfig {
            mu: vec![0.0; 4],
            sigma: Covariance::ScaledIdentity(0.5),
            beta_star: vec![0.7, -0.3, 0.1, 0.0],
            n: 800,
        };
        let data = generate_synthetic(&cfg, &mut SeedStream::new(10).rng()).unwrap();
        let model = fit_logistic(&data, &FitOptions::default()).unwrap();
        let grad = penalized_gradient(&data, &model.beta, 1e-8);
        let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(sup <= 1e-6, "gradient at optimum {sup}");

        // analytic vs central finite differences at 5 random points
        let mut rng = SeedStream::new(14).rng();
        let h = 1e-5;
        for _ in 0..5 {
            let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = penalized_gradient(&data, &beta, 1e-8);
            for j in 0..4 {
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd = (penalized_objective(&data, &up, 1e-8)
                    - penalized_objective(&data, &dn, 1e-8))
                    / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(1e-8);
                assert!(rel <= 1e-4, "coordinate {j}: analytic {} fd {fd}", grad[j]);
            }
        }
    }

    #[test]
    fn bootstrap_single_row_is_identity() {
        let data = dataset_1d(&[1.5], &[1]);
        let out = bootstrap_resample(&data, &mut SeedStream::new(1).rng());
        assert_eq!(out.n(), 1);
        assert_eq!(out.features()[[0, 0]], 1.5);
    }

    #[test]
    fn bootstrap_distinct_fraction() {
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let data = dataset_1d(&xs, &ys);
        let out = bootstrap_resample(&data, &mut SeedStream::new(5).rng());
        let mut ids: Vec<u64> = out.ids().to_vec();
        ids.sort_unstable();
        ids.dedup();
        let frac = ids.len() as f64 / n as f64;
        assert!(
            (frac - (1.0 - (-1.0f64).exp())).abs() < 0.02,
            "distinct fraction {frac}"
        );
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let data = dataset_1d(&[1.0, 2.0, 3.0, 4.0], &[0, 1, 0, 1]);
        let a = bootstrap_resample(&data, &mut SeedStream::new(9).rng());
        let b = bootstrap_resample(&data, &mut SeedStream::new(9).rng());
        assert_eq!(a.ids(), b.ids());
    }

    #[test]
    fn ensemble_requires_two_members() {
        let data = dataset_1d(&[-1.0, 1.0, -2.0, 2.0], &[0, 1, 0, 1]);
        assert!(build_ensemble(
            &data,
            1,
            EnsembleMode::Bootstrap,
            &FitOptions::default(),
            LinkFunction::Logistic,
            SeedStream::new(0),
        )
        .is_err());
    }

    #[test]
    fn ensemble_is_deterministic_and_correlated() {
        let cfg = GaussianConfig {
            mu: vec![0.05; 20],
            sigma: Covariance::ScaledIdentity(0.01),
            beta_star: vec![1.0; 20],
            n: 3000,
        };
        let data = generate_synthetic(&cfg, &mut SeedStream::new(31).rng()).unwrap();
        let mk = || {
            build_ensemble(
                &data,
                2,
                EnsembleMode::Bootstrap,
                &FitOptions::default(),
                LinkFunction::Logistic,
                SeedStream::new(55),
            )
            .unwrap()
        };
        let e1 = mk();
        let e2 = mk();
        assert_eq!(e1.member(1).beta, e2.member(1).beta);

        // member scores correlate strongly on held-out X
        let holdout = generate_synthetic(
            &GaussianConfig { mu: vec![-0.05; 20], n: 2000, ..cfg },
            &mut SeedStream::new(32).rng(),
        )
        .unwrap();
        let cols = e1.logit_columns(holdout.features()).unwrap();
        let a = cols.column(0);
        let b = cols.column(1);
        let n = a.len() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..a.len() {
            cov += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
        }
        let corr = cov / (va.sqrt() * vb.sqrt());
        assert!(corr > 0.9, "member correlation {corr}");
    }

    #[test]
    fn reseed_members_match_full_fit() {
        let data = dataset_1d(&[-2.0, -1.0, 1.0, 2.0, -1.5, 1.5], &[0, 0, 1, 1, 0, 1]);
        let e = build_ensemble(
            &data,
            2,
            EnsembleMode::Reseed,
            &FitOptions::default(),
            LinkFunction::Logistic,
            SeedStream::new(8),
        )
        .unwrap();
        assert_abs_diff_eq!(e.member(0).beta[0], e.member(1).beta[0], epsilon = 1e-6);
    }

    #[test]
    fn score_and_predict_examples() {
        let model = LinearModel {
            beta: vec![0.0, 0.0],
            intercept: 0.0,
            fit_intercept: false,
            converged: true,
            iterations: 0,
        };
        let x = array![[1.0, 2.0], [-3.0, 4.0]];
        let logits = model.score_matrix(&x).unwrap();
        assert_eq!(logits, vec![0.0, 0.0]);
        let preds = model.predict(&x, LinkFunction::Logistic).unwrap();
        assert!(preds.iter().all(|p| (p.value() - 0.5).abs() < 1e-15));

        let e1 = LinearModel {
            beta: vec![1.0, 0.0],
            intercept: 0.0,
            fit_intercept: false,
            converged: true,
            iterations: 0,
        };
        assert_eq!(e1.score_row(&[2.0, 99.0]).unwrap(), 2.0);
        assert!(e1.score_row(&[2.0]).is_err());
    }

    #[test]
    fn predict_is_phi_of_score_pointwise() {
        let model = LinearModel {
            beta: vec![0.4, -1.2, 0.3],
            intercept: 0.1,
            fit_intercept: true,
            converged: true,
            iterations: 0,
        };
        let mut rng = SeedStream::new(17).rng();
        let mut rows = Vec::new();
        for _ in 0..1000 {
            rows.extend((0..3).map(|_| rng.random_range(-3.0..3.0)));
        }
        let x = Array2::from_shape_vec((1000, 3), rows).unwrap();
        let logits = model.score_matrix(&x).unwrap();
        let preds = model.predict(&x, LinkFunction::Logistic).unwrap();
        for (l, p) in logits.iter().zip(&preds) {
            assert_abs_diff_eq!(LinkFunction::Logistic.phi(*l), p.value(), epsilon = 1e-15);
        }
        // strictly increasing composition preserves the ranking
        let mut by_logit: Vec<usize> = (0..1000).collect();
        by_logit.sort_by(|a, b| logits[*a].partial_cmp(&logits[*b]).unwrap());
        let mut by_pred: Vec<usize> = (0..1000).collect();
        by_pred.sort_by(|a, b| preds[*a].partial_cmp(&preds[*b]).unwrap());
        assert_eq!(by_logit, by_pred);
    }

    #[test]
    fn saved_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = LinearModel {
            beta: vec![0.25, -1.5],
            intercept: 0.0,
            fit_intercept: false,
            converged: true,
            iterations: 7,
        };
        let saved = SavedModel::from_model(
            &model,
            LinkFunction::Logistic,
            SavedModelMeta { seed: Some(42), mode: Some("bootstrap".into()) },
        );
        saved.save(&path).unwrap();
        let back = SavedModel::load(&path).unwrap();
        assert_eq!(back.beta, model.beta);
        assert_eq!(back.meta.seed, Some(42));
        assert_eq!(back.link, LinkFunction::Logistic);
    }
}
