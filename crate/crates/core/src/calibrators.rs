//! Post-hoc calibrators fit on the labeled validation-train split: Platt
//! scaling, histogram binning, isotonic regression, and scaling-binning.
//!
//! Platt and scaling-binning consume logits; histogram and isotonic consume
//! scores in probability space. All of them produce probabilities.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{LinkFunction, Probability};

/// `sigmoid(a·l + b)` on logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub fn apply_one(&self, logit: f64) -> f64 {
        LinkFunction::Logistic.phi(self.a * logit + self.b)
    }
}

/// Equal-frequency bins with per-bin empirical positive rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramCalibrator {
    /// `outputs.len() + 1` ascending reals; `edges[0]`/`edges[last]` are the
    /// fit-set extremes, interior edges are left-closed bin boundaries.
    pub edges: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl HistogramCalibrator {
    fn bin_index(&self, score: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|e| *e <= score)
    }

    pub fn apply_one(&self, score: f64) -> f64 {
        self.outputs[self.bin_index(score)]
    }
}

/// Right-continuous non-decreasing step function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicCalibrator {
    pub fn apply_one(&self, score: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|b| *b <= score);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }
}

/// Platt scaling followed by equal-frequency binning of the scaled outputs;
/// each bin outputs the mean scaled value (not the label rate).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingBinningCalibrator {
    pub platt: PlattCalibrator,
    pub edges: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl ScalingBinningCalibrator {
    pub fn apply_one(&self, logit: f64) -> f64 {
        let scaled = self.platt.apply_one(logit);
        let interior = &self.edges[1..self.edges.len() - 1];
        self.outputs[interior.partition_point(|e| *e <= scaled)]
    }
}

/// Any fitted calibrator, tagged for JSON save/load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Calibrator {
    Platt(PlattCalibrator),
    Histogram(HistogramCalibrator),
    Isotonic(IsotonicCalibrator),
    ScalingBinning(ScalingBinningCalibrator),
}

impl Calibrator {
    pub fn apply_one(&self, score: f64) -> f64 {
        match self {
            Calibrator::Platt(c) => c.apply_one(score),
            Calibrator::Histogram(c) => c.apply_one(score),
            Calibrator::Isotonic(c) => c.apply_one(score),
            Calibrator::ScalingBinning(c) => c.apply_one(score),
        }
    }

    /// Calibrated probabilities for a batch of scores (logits for Platt and
    /// scaling-binning, probability-space scores otherwise).
    pub fn apply(&self, scores: &[f64]) -> Vec<Probability> {
        scores.iter().map(|s| Probability::clamped(self.apply_one(*s))).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid_input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid_input("cannot fit a calibrator on empty data"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid_input(format!("non-finite score {bad}")));
    }
    Ok(())
}

/// Maximize the Bernoulli likelihood of `sigmoid(a·l + b)` against
/// Platt-smoothed targets `t₊ = (N₊+1)/(N₊+2)`, `t₋ = 1/(N₋+2)` by Newton
/// iterations (tol 1e-8, max 100).
pub fn fit_platt(logits: &[f64], labels: &[u8]) -> Result<PlattCalibrator> {
    check_lengths(logits, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::degenerate(format!(
            "Platt scaling needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let t_pos = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let t_neg = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> =
        labels.iter().map(|&y| if y == 1 { t_pos } else { t_neg }).collect();
    let mean_t = targets.iter().sum::<f64>() / targets.len() as f64;
    let b_flat = (mean_t / (1.0 - mean_t)).ln();

    let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        // slope unidentifiable on constant logits
        return Ok(PlattCalibrator { a: 0.0, b: b_flat });
    }

    let loglik = |a: f64, b: f64| -> f64 {
        logits
            .iter()
            .zip(&targets)
            .map(|(l, t)| {
                let (p, q) = LinkFunction::Logistic.phi_pair(a * l + b);
                t * p.ln() + (1.0 - t) * q.ln()
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = b_flat;
    let mut ll = loglik(a, b);
    for _ in 0..100 {
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = 0.0;
        let mut hab = 0.0;
        let mut hbb = 0.0;
        for (l, t) in logits.iter().zip(&targets) {
            let (p, q) = LinkFunction::Logistic.phi_pair(a * l + b);
            let r = t - p;
            let w = p * q;
            ga += r * l;
            gb += r;
            haa += w * l * l;
            hab += w * l;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        loop {
            let cand = loglik(a + step * da, b + step * db);
            if cand >= ll - 1e-12 || step < 1e-6 {
                a += step * da;
                b += step * db;
                ll = cand;
                break;
            }
            step *= 0.5;
        }
        if (step * da).abs().max((step * db).abs()) < 1e-8 {
            break;
        }
    }
    Ok(PlattCalibrator { a, b })
}

/// Stable sort order plus equal-frequency group boundaries; boundaries that
/// would split tied scores are dropped (the groups merge). Shared with the
/// metric binning, which uses the same idiom.
pub(crate) fn equal_frequency_groups(scores: &[f64], bins: usize) -> (Vec<usize>, Vec<usize>) {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut starts = vec![0usize];
    for k in 1..bins {
        let pos = k * n / bins;
        if pos == 0 || pos >= n || pos == *starts.last().unwrap() {
            continue;
        }
        if scores[order[pos - 1]] == scores[order[pos]] {
            continue; // never split a tie
        }
        starts.push(pos);
    }
    (order, starts)
}

fn edges_from_groups(sorted_scores: &[f64], starts: &[usize]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(starts.len() + 1);
    edges.push(sorted_scores[0]);
    for &s in &starts[1..] {
        edges.push(sorted_scores[s]);
    }
    edges.push(sorted_scores[sorted_scores.len() - 1]);
    edges
}

/// Equal-frequency (quantile) bins; each bin outputs its empirical positive
/// rate.
pub fn fit_histogram(scores: &[f64], labels: &[u8], bins: usize) -> Result<HistogramCalibrator> {
    check_lengths(scores, labels)?;
    if bins == 0 {
        return Err(Error::invalid_input("bin count must be positive"));
    }
    if scores.len() < bins {
        return Err(Error::invalid_input(format!(
            "{} samples cannot fill {bins} bins; use a smaller bin count",
            scores.len()
        )));
    }
    let (order, starts) = equal_frequency_groups(scores, bins);
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let mut outputs = Vec::with_capacity(starts.len());
    for (g, &start) in starts.iter().enumerate() {
        let end = starts.get(g + 1).copied().unwrap_or(order.len());
        let pos: u64 = order[start..end].iter().map(|&i| labels[i] as u64).sum();
        outputs.push(pos as f64 / (end - start) as f64);
    }
    Ok(HistogramCalibrator { edges: edges_from_groups(&sorted, &starts), outputs })
}

/// Pool-adjacent-violators on weighted values: the least-squares monotone
/// (non-decreasing) fit.
pub(crate) fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    #[derive(Clone, Copy)]
    struct Block {
        sum: f64,
        weight: f64,
        len: usize,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(values.len());
    for (v, w) in values.iter().zip(weights) {
        blocks.push(Block { sum: v * w, weight: *w, len: 1 });
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.sum / prev.weight <= last.sum / last.weight {
                break;
            }
            blocks.pop();
            let merged = Block {
                sum: prev.sum + last.sum,
                weight: prev.weight + last.weight,
                len: prev.len + last.len,
            };
            blocks.pop();
            blocks.push(merged);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for b in blocks {
        let mean = b.sum / b.weight;
        out.extend(std::iter::repeat_n(mean, b.len));
    }
    out
}

/// Isotonic least-squares regression of labels on scores; ties in scores are
/// pre-pooled by averaging before PAVA runs.
pub fn fit_isotonic(scores: &[f64], labels: &[u8]) -> Result<IsotonicCalibrator> {
    check_lengths(scores, labels)?;
    let (order, _) = equal_frequency_groups(scores, 1);
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let mut sum = 0.0;
        while j < order.len() && scores[order[j]] == s {
            sum += labels[order[j]] as f64;
            j += 1;
        }
        breakpoints.push(s);
        values.push(sum / (j - i) as f64);
        weights.push((j - i) as f64);
        i = j;
    }
    let fitted = pava(&values, &weights);
    Ok(IsotonicCalibrator { breakpoints, values: fitted })
}

/// Platt fit, then equal-frequency bins over the Platt outputs, each bin
/// outputting the mean Platt output inside it.
pub fn fit_scaling_binning(
    logits: &[f64],
    labels: &[u8],
    bins: usize,
) -> Result<ScalingBinningCalibrator> {
    check_lengths(logits, labels)?;
    if bins == 0 {
        return Err(Error::invalid_input("bin count must be positive"));
    }
    if logits.len() < bins {
        return Err(Error::invalid_input(format!(
            "{} samples cannot fill {bins} bins; use a smaller bin count",
            logits.len()
        )));
    }
    let platt = fit_platt(logits, labels)?;
    let scaled: Vec<f64> = logits.iter().map(|l| platt.apply_one(*l)).collect();
    let (order, starts) = equal_frequency_groups(&scaled, bins);
    let sorted: Vec<f64> = order.iter().map(|&i| scaled[i]).collect();
    let mut outputs = Vec::with_capacity(starts.len());
    for (g, &start) in starts.iter().enumerate() {
        let end = starts.get(g + 1).copied().unwrap_or(order.len());
        let sum: f64 = sorted[start..end].iter().sum();
        outputs.push(sum / (end - start) as f64);
    }
    Ok(ScalingBinningCalibrator { platt, edges: edges_from_groups(&sorted, &starts), outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    #[test]
    fn platt_antisymmetric_data_has_zero_offset() {
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..50 {
            logits.push(-1.0);
            labels.push(0u8);
            logits.push(1.0);
            labels.push(1u8);
        }
        let cal = fit_platt(&logits, &labels).unwrap();
        assert!(cal.b.abs() < 1e-8, "b = {}", cal.b);
        assert!(cal.a > 0.0);
    }

    #[test]
    fn platt_self_consistency_on_calibrated_sample() {
        let n = 100_000;
        let mut rng = SeedStream::new(40).rng();
        let mut logits = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let l: f64 = rng.random_range(-4.0..4.0);
            logits.push(l);
            labels.push(u8::from(rng.random::<f64>() < LinkFunction::Logistic.phi(l)));
        }
        let cal = fit_platt(&logits, &labels).unwrap();
        assert!((cal.a - 1.0).abs() < 0.1, "a = {}", cal.a);
        assert!(cal.b.abs() < 0.05, "b = {}", cal.b);
    }

    #[test]
    fn platt_constant_logits_policy_matches_grid_oracle() {
        let logits = vec![0.7; 40];
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let cal = fit_platt(&logits, &labels).unwrap();
        assert_eq!(cal.a, 0.0);

        // direct likelihood maximization over b alone
        let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let (t_pos, t_neg) = ((n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0));
        let ll = |b: f64| -> f64 {
            labels
                .iter()
                .map(|&y| {
                    let t = if y == 1 { t_pos } else { t_neg };
                    let (p, q) = LinkFunction::Logistic.phi_pair(b);
                    t * p.ln() + (1.0 - t) * q.ln()
                })
                .sum()
        };
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut b = -6.0;
        while b <= 6.0 {
            if ll(b) > best.0 {
                best = (ll(b), b);
            }
            b += 1e-4;
        }
        assert!((cal.b - best.1).abs() < 1e-3, "{} vs {}", cal.b, best.1);
    }

    #[test]
    fn platt_single_class_errors() {
        assert!(fit_platt(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn platt_positive_slope_on_correlated_data() {
        let n = 10_000;
        let mut rng = SeedStream::new(41).rng();
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let l: f64 = rng.random_range(-2.0..2.0);
            logits.push(l);
            labels.push(u8::from(rng.random::<f64>() < LinkFunction::Logistic.phi(0.5 * l)));
        }
        let cal = fit_platt(&logits, &labels).unwrap();
        assert!(cal.a > 0.0);
        // a > 0 preserves strict ranking
        assert!(cal.apply_one(-1.0) < cal.apply_one(0.0));
        assert!(cal.apply_one(0.0) < cal.apply_one(2.0));
    }

    #[test]
    fn histogram_hand_example() {
        let cal = fit_histogram(&[0.1, 0.2, 0.8, 0.9], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cal.outputs, vec![0.5, 1.0]);
        assert_eq!(cal.edges, vec![0.1, 0.8, 0.9]);
        assert_abs_diff_eq!(cal.apply_one(0.15), 0.5, epsilon = 0.0);
        assert_abs_diff_eq!(cal.apply_one(0.8), 1.0, epsilon = 0.0);
    }

    #[test]
    fn histogram_all_zero_labels() {
        let cal = fit_histogram(&[0.1, 0.4, 0.6, 0.9], &[0, 0, 0, 0], 2).unwrap();
        assert!(cal.outputs.iter().all(|o| *o == 0.0));
    }

    #[test]
    fn histogram_single_bin_is_global_rate() {
        let cal = fit_histogram(&[0.1, 0.4, 0.6, 0.9], &[0, 1, 1, 1], 1).unwrap();
        assert_eq!(cal.outputs, vec![0.75]);
    }

    #[test]
    fn histogram_too_few_samples_errors() {
        assert!(fit_histogram(&[0.5, 0.6], &[0, 1], 3).is_err());
    }

    #[test]
    fn histogram_clamps_out_of_range() {
        let cal = fit_histogram(&[0.2, 0.4, 0.6, 0.8], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(cal.apply_one(-5.0), cal.outputs[0]);
        assert_eq!(cal.apply_one(5.0), *cal.outputs.last().unwrap());
    }

    #[test]
    fn histogram_fit_set_bin_means_are_exact() {
        let mut rng = SeedStream::new(42).rng();
        let n = 500;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = scores
            .iter()
            .map(|s| u8::from(rng.random::<f64>() < *s))
            .collect();
        let cal = fit_histogram(&scores, &labels, 10).unwrap();
        // group rows by assigned bin; prediction equals label mean per bin
        let mut pred_sum = vec![0.0; cal.outputs.len()];
        let mut label_sum = vec![0.0; cal.outputs.len()];
        let mut count = vec![0usize; cal.outputs.len()];
        for (s, y) in scores.iter().zip(&labels) {
            let b = cal.bin_index(*s);
            pred_sum[b] += cal.apply_one(*s);
            label_sum[b] += *y as f64;
            count[b] += 1;
        }
        for b in 0..cal.outputs.len() {
            assert!(count[b] > 0);
            assert_abs_diff_eq!(
                pred_sum[b] / count[b] as f64,
                label_sum[b] / count[b] as f64,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn histogram_ties_never_split() {
        let scores = vec![0.3, 0.3, 0.3, 0.3, 0.9, 0.9];
        let labels = vec![0, 0, 1, 1, 1, 1];
        let cal = fit_histogram(&scores, &labels, 3).unwrap();
        // the four tied 0.3 scores must share one bin
        assert_eq!(cal.apply_one(0.3), 0.5);
        assert_eq!(cal.apply_one(0.9), 1.0);
    }

    #[test]
    fn isotonic_monotone_labels_are_fixed_point() {
        let cal = fit_isotonic(&[0.1, 0.2, 0.7, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(cal.values, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn isotonic_two_point_violation_pools() {
        let cal = fit_isotonic(&[1.0, 2.0], &[1, 0]).unwrap();
        assert_eq!(cal.values, vec![0.5, 0.5]);
    }

    #[test]
    fn isotonic_values_non_decreasing_and_step_lookup() {
        let mut rng = SeedStream::new(43).rng();
        let scores: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..200).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
        let cal = fit_isotonic(&scores, &labels).unwrap();
        for w in cal.values.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        assert_eq!(cal.apply_one(-1.0), cal.values[0]);
        assert_eq!(cal.apply_one(2.0), *cal.values.last().unwrap());
    }

    /// Exhaustive monotone least-squares oracle over contiguous partitions.
    fn brute_force_isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
        let n = values.len();
        assert!(n <= 12);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << (n - 1)) {
            // bit k set: cut between k and k+1
            let mut fit = Vec::with_capacity(n);
            let mut block_means = Vec::new();
            let mut start = 0;
            for k in 0..n {
                if k + 1 == n || mask & (1 << k) != 0 {
                    let w: f64 = weights[start..=k].iter().sum();
                    let s: f64 = values[start..=k]
                        .iter()
                        .zip(&weights[start..=k])
                        .map(|(v, w)| v * w)
                        .sum();
                    let mean = s / w;
                    block_means.push(mean);
                    for _ in start..=k {
                        fit.push(mean);
                    }
                    start = k + 1;
                }
            }
            if block_means.windows(2).any(|w| w[0] > w[1] + 1e-15) {
                continue;
            }
            let sse: f64 = fit
                .iter()
                .zip(values)
                .zip(weights)
                .map(|((f, v), w)| w * (f - v) * (f - v))
                .sum();
            if best.as_ref().is_none_or(|(b, _)| sse < *b) {
                best = Some((sse, fit));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn pava_matches_brute_force_oracle() {
        let mut rng = SeedStream::new(44).rng();
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let got = pava(&values, &weights);
            let want = brute_force_isotonic(&values, &weights);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-9, "{values:?} {weights:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn scaling_binning_singleton_bins_equal_platt() {
        let logits = vec![-2.0, -0.5, 0.3, 1.7];
        let labels = vec![0, 0, 1, 1];
        let cal = fit_scaling_binning(&logits, &labels, 4).unwrap();
        for l in &logits {
            assert_abs_diff_eq!(cal.apply_one(*l), cal.platt.apply_one(*l), epsilon = 1e-12);
        }
    }

    #[test]
    fn scaling_binning_one_bin_is_mean_platt() {
        let logits = vec![-2.0, -0.5, 0.3, 1.7];
        let labels = vec![0, 0, 1, 1];
        let cal = fit_scaling_binning(&logits, &labels, 1).unwrap();
        let mean: f64 =
            logits.iter().map(|l| cal.platt.apply_one(*l)).sum::<f64>() / logits.len() as f64;
        assert_abs_diff_eq!(cal.apply_one(0.0), mean, epsilon = 1e-12);
    }

    #[test]
    fn scaling_binning_two_bins_hand_means() {
        let logits = vec![-2.0, -0.5, 0.3, 1.7];
        let labels = vec![0, 0, 1, 1];
        let cal = fit_scaling_binning(&logits, &labels, 2).unwrap();
        let scaled: Vec<f64> = logits.iter().map(|l| cal.platt.apply_one(*l)).collect();
        let lo = (scaled[0] + scaled[1]) / 2.0;
        let hi = (scaled[2] + scaled[3]) / 2.0;
        assert_abs_diff_eq!(cal.apply_one(-2.0), lo, epsilon = 1e-12);
        assert_abs_diff_eq!(cal.apply_one(1.7), hi, epsilon = 1e-12);
    }

    #[test]
    fn monotone_calibrators_preserve_weak_ordering() {
        let mut rng = SeedStream::new(45).rng();
        let logits: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = logits
            .iter()
            .map(|l| u8::from(rng.random::<f64>() < LinkFunction::Logistic.phi(*l)))
            .collect();
        let probs: Vec<f64> = logits.iter().map(|l| LinkFunction::Logistic.phi(*l)).collect();
        let cals = [
            Calibrator::Platt(fit_platt(&logits, &labels).unwrap()),
            Calibrator::Isotonic(fit_isotonic(&probs, &labels).unwrap()),
            Calibrator::ScalingBinning(fit_scaling_binning(&logits, &labels, 10).unwrap()),
        ];
        for (k, cal) in cals.iter().enumerate() {
            let scores: &[f64] = if k == 1 { &probs } else { &logits };
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
            let outs: Vec<f64> = idx.iter().map(|&i| cal.apply_one(scores[i])).collect();
            for w in outs.windows(2) {
                assert!(w[0] <= w[1] + 1e-12, "calibrator {k} broke ordering");
            }
        }
    }

    #[test]
    fn calibrator_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        let cal = Calibrator::Histogram(
            fit_histogram(&[0.1, 0.2, 0.8, 0.9], &[0, 1, 1, 1], 2).unwrap(),
        );
        cal.save(&path).unwrap();
        let back = Calibrator::load(&path).unwrap();
        match (cal, back) {
            (Calibrator::Histogram(a), Calibrator::Histogram(b)) => {
                assert_eq!(a.edges, b.edges);
                assert_eq!(a.outputs, b.outputs);
            }
            _ => panic!("kind tag lost in round trip"),
        }
        let raw = fs::read_to_string(dir.path().join("cal.json")).unwrap();
        assert!(raw.contains("\"kind\""));
    }
}
