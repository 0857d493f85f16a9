//! Top-α selection and evaluation metrics on the selection set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::Probability;

/// The indices of the top-α fraction, ordered by descending prediction with
/// ties broken by ascending original index.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSet {
    indices: Vec<usize>,
    alpha: f64,
}

impl SelectionSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The selected entries of `values`, in selection order.
    pub fn gather<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| values[i]).collect()
    }
}

/// Rank by prediction and keep the top `floor(alpha·N)` items (at least 1).
pub fn select_top_alpha(preds: &[f64], alpha: f64) -> Result<SelectionSet> {
    if preds.is_empty() {
        return Err(Error::invalid_input("cannot select from empty predictions"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid_input(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if let Some(bad) = preds.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid_input(format!("non-finite prediction {bad}")));
    }
    let k = ((alpha * preds.len() as f64).floor() as usize).max(1);
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b].partial_cmp(&preds[a]).unwrap().then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(SelectionSet { indices: order, alpha })
}

/// `Σ preds / Σ labels − 1`; undefined when the selection holds no positives.
pub fn calibration_error(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::invalid_input("preds and labels must be equal-length and non-empty"));
    }
    let label_sum: f64 = labels.iter().map(|&y| y as f64).sum();
    if label_sum == 0.0 {
        return Err(Error::degenerate(
            "no positive labels in the selection set; calibration error undefined".to_string(),
        ));
    }
    let pred_sum: f64 = preds.iter().sum();
    Ok(pred_sum / label_sum - 1.0)
}

/// Per-bin record of the equi-width partition used by ECE/MCE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinDetail {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub pred_mean: f64,
    pub label_mean: f64,
}

impl BinDetail {
    pub fn gap(&self) -> f64 {
        (self.label_mean - self.pred_mean).abs()
    }
}

/// `M` bins equi-spaced along the value-sorted items (equal-frequency),
/// with boundaries that never split tied prediction values. Fewer than `M`
/// bins come back when ties force merges or `M` exceeds the item count.
pub fn bin_details(preds: &[f64], labels: &[u8], bins: usize) -> Result<Vec<BinDetail>> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::invalid_input("preds and labels must be equal-length and non-empty"));
    }
    if bins == 0 {
        return Err(Error::invalid_input("bin count must be at least 1"));
    }
    let (order, starts) = crate::calibrators::equal_frequency_groups(preds, bins);
    let mut out = Vec::with_capacity(starts.len());
    for (g, &start) in starts.iter().enumerate() {
        let end = starts.get(g + 1).copied().unwrap_or(order.len());
        let members = &order[start..end];
        let count = members.len();
        let pred_sum: f64 = members.iter().map(|&i| preds[i]).sum();
        let label_sum: f64 = members.iter().map(|&i| labels[i] as f64).sum();
        out.push(BinDetail {
            lo: preds[members[0]],
            hi: preds[members[count - 1]],
            count,
            pred_mean: pred_sum / count as f64,
            label_mean: label_sum / count as f64,
        });
    }
    Ok(out)
}

/// Expected calibration error: bin-weighted mean absolute gap.
pub fn ece(preds: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    let details = bin_details(preds, labels, bins)?;
    let n = preds.len() as f64;
    Ok(details.iter().map(|b| b.count as f64 / n * b.gap()).sum())
}

/// Maximum calibration error: the largest per-bin gap over non-empty bins.
pub fn mce(preds: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    let details = bin_details(preds, labels, bins)?;
    Ok(details.iter().map(BinDetail::gap).fold(0.0, f64::max))
}

/// Mean negative Bernoulli log-likelihood; finite by construction since
/// probabilities are clamped.
pub fn log_loss(preds: &[Probability], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::invalid_input("preds and labels must be equal-length and non-empty"));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, &y)| if y == 1 { -p.ln_value() } else { -p.ln_complement() })
        .sum();
    Ok(total / preds.len() as f64)
}

/// `LL_treatment / LL_baseline − 1`; negative means the treatment improved.
pub fn log_loss_reduction(ll_treatment: f64, ll_baseline: f64) -> f64 {
    ll_treatment / ll_baseline - 1.0
}

/// All selection-set metrics for one (method, α) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when the selection set holds no positives.
    pub calibration_error: Option<f64>,
    pub ece: f64,
    pub mce: f64,
    pub log_loss: f64,
    pub bins: usize,
    pub bin_details: Vec<BinDetail>,
}

/// Evaluate a prediction vector on its own top-α selection set.
pub fn evaluate_selection(
    preds: &[Probability],
    labels: &[u8],
    selection: &SelectionSet,
    bins: usize,
) -> Result<MetricsReport> {
    let sel_preds: Vec<f64> = selection.indices().iter().map(|&i| preds[i].value()).collect();
    let sel_probs: Vec<Probability> = selection.gather(preds);
    let sel_labels: Vec<u8> = selection.gather(labels);
    let calibration = match calibration_error(&sel_preds, &sel_labels) {
        Ok(v) => Some(v),
        Err(Error::DegenerateData(_)) => None,
        Err(e) => return Err(e),
    };
    let details = bin_details(&sel_preds, &sel_labels, bins)?;
    let n = sel_preds.len() as f64;
    let ece_v = details.iter().map(|b| b.count as f64 / n * b.gap()).sum();
    let mce_v = details.iter().map(BinDetail::gap).fold(0.0, f64::max);
    Ok(MetricsReport {
        calibration_error: calibration,
        ece: ece_v,
        mce: mce_v,
        log_loss: log_loss(&sel_probs, &sel_labels)?,
        bins,
        bin_details: details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{LinkFunction, PROB_EPS};
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    #[test]
    fn select_examples() {
        let s = select_top_alpha(&[0.9, 0.1, 0.5, 0.7], 0.5).unwrap();
        assert_eq!(s.indices(), &[0, 3]);

        let s = select_top_alpha(&[0.4; 8], 0.25).unwrap();
        assert_eq!(s.indices(), &[0, 1]);

        let s = select_top_alpha(&[0.2, 0.9, 0.5], 1.0).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.indices(), &[1, 2, 0]);
    }

    #[test]
    fn select_minimum_one() {
        let s = select_top_alpha(&[0.2, 0.9, 0.5], 0.01).unwrap();
        assert_eq!(s.indices(), &[1]);
    }

    #[test]
    fn select_rejects_bad_alpha() {
        assert!(select_top_alpha(&[0.5], 0.0).is_err());
        assert!(select_top_alpha(&[0.5], 1.5).is_err());
        assert!(select_top_alpha(&[], 0.5).is_err());
    }

    #[test]
    fn selection_invariant_under_increasing_transforms() {
        let mut rng = SeedStream::new(7).rng();
        for _ in 0..100 {
            let preds: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
            let mapped: Vec<f64> = preds.iter().map(|p| (3.0 * p - 1.0).tanh()).collect();
            for alpha in [0.05, 0.2, 0.7, 1.0] {
                let a = select_top_alpha(&preds, alpha).unwrap();
                let b = select_top_alpha(&mapped, alpha).unwrap();
                assert_eq!(a.indices(), b.indices());
            }
        }
    }

    #[test]
    fn calibration_error_examples() {
        assert_abs_diff_eq!(
            calibration_error(&[0.5, 0.5], &[1, 0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            calibration_error(&[0.6, 0.6], &[1, 0]).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        assert!(matches!(
            calibration_error(&[0.6, 0.6], &[0, 0]),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn calibration_error_zero_for_permuted_predictions() {
        // preds are a permutation of the label values: sums match exactly
        let labels = [1u8, 0, 1, 1, 0];
        let preds = [0.0f64, 1.0, 1.0, 0.0, 1.0];
        assert_abs_diff_eq!(calibration_error(&preds, &labels).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ece_mce_examples() {
        // per-bin prediction means equal per-bin label means exactly
        let preds = [0.5, 0.5, 1.0, 1.0];
        let labels = [0u8, 1, 1, 1];
        assert_abs_diff_eq!(ece(&preds, &labels, 2).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mce(&preds, &labels, 2).unwrap(), 0.0, epsilon = 1e-15);

        // single bin: |0.5 − 0.6| = 0.1
        assert_abs_diff_eq!(ece(&[0.6, 0.6], &[1, 0], 1).unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(mce(&[0.6, 0.6], &[1, 0], 1).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn ece_never_exceeds_mce() {
        let mut rng = SeedStream::new(8).rng();
        for _ in 0..1000 {
            let n = rng.random_range(2..50);
            let preds: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
            let m = rng.random_range(1..12);
            let e = ece(&preds, &labels, m).unwrap();
            let x = mce(&preds, &labels, m).unwrap();
            assert!(e <= x + 1e-12, "ece {e} > mce {x}");
        }
    }

    #[test]
    fn ece_mce_permutation_invariant() {
        let preds = [0.1, 0.9, 0.4, 0.6, 0.2];
        let labels = [0u8, 1, 1, 0, 0];
        let perm = [3usize, 0, 4, 1, 2];
        let p2: Vec<f64> = perm.iter().map(|&i| preds[i]).collect();
        let l2: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        assert_abs_diff_eq!(
            ece(&preds, &labels, 3).unwrap(),
            ece(&p2, &l2, 3).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mce(&preds, &labels, 3).unwrap(),
            mce(&p2, &l2, 3).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn log_loss_examples() {
        let half = Probability::new(0.5).unwrap();
        assert_abs_diff_eq!(
            log_loss(&[half], &[1]).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-15
        );
        let one = Probability::clamped(1.0);
        assert_abs_diff_eq!(log_loss(&[one], &[1]).unwrap(), PROB_EPS, epsilon = 1e-15);
        assert_abs_diff_eq!(log_loss_reduction(0.3, 0.3), 0.0, epsilon = 1e-15);
        assert!(log_loss_reduction(0.29, 0.3) < 0.0);
    }

    #[test]
    fn evaluate_selection_composes() {
        let logits: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let preds: Vec<Probability> = logits
            .iter()
            .map(|l| Probability::clamped(LinkFunction::Logistic.phi(*l)))
            .collect();
        let labels = vec![0u8, 0, 1, 0, 1, 1];
        let values: Vec<f64> = preds.iter().map(|p| p.value()).collect();
        let sel = select_top_alpha(&values, 0.5).unwrap();
        assert_eq!(sel.indices(), &[5, 4, 3]);
        let report = evaluate_selection(&preds, &labels, &sel, 2).unwrap();
        let expect_ce = (values[5] + values[4] + values[3]) / 2.0 - 1.0;
        assert_abs_diff_eq!(report.calibration_error.unwrap(), expect_ce, epsilon = 1e-12);
        assert!(report.ece <= report.mce);
        assert!(report.log_loss >= 0.0);
    }

    #[test]
    fn evaluate_selection_reports_missing_ce() {
        let preds: Vec<Probability> =
            [0.9, 0.8, 0.1].iter().map(|p| Probability::new(*p).unwrap()).collect();
        let labels = vec![0u8, 0, 1];
        let values: Vec<f64> = preds.iter().map(|p| p.value()).collect();
        let sel = select_top_alpha(&values, 0.5).unwrap();
        let report = evaluate_selection(&preds, &labels, &sel, 2).unwrap();
        assert!(report.calibration_error.is_none());
    }
}
