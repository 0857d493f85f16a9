//! Link functions and the clamped probability type.
//!
//! A link φ maps score (logit) space to probability space. Exactly two links
//! are supported: the logistic sigmoid and the identity. Probabilities are
//! stored together with their complement so that φ⁻¹ and log loss keep full
//! relative precision on both tails; a plain `f64` probability loses the
//! upper tail to rounding once 1 − p approaches machine epsilon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 − PROB_EPS]` at construction
/// so logits and log losses stay finite.
pub const PROB_EPS: f64 = 1e-12;

/// A probability in the clamped range, carrying its complement.
///
/// `value + complement == 1` up to rounding; each side is accurate in
/// relative terms, so `ln_value`/`ln_complement` and the logistic inverse
/// stay precise arbitrarily close to the boundary.
#[derive(Debug, Clone, Copy)]
pub struct Probability {
    value: f64,
    complement: f64,
}

impl Probability {
    /// Validating constructor: `value` must be a finite number in `[0, 1]`.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid_input(format!(
                "probability must be in [0, 1], got {value}"
            )));
        }
        Ok(Self::from_parts(value, 1.0 - value))
    }

    /// Clamp an arbitrary finite real into the probability range.
    pub fn clamped(value: f64) -> Self {
        Self::from_parts(value, 1.0 - value)
    }

    /// Build from independently computed tails (both must be non-negative
    /// and sum to 1 up to rounding). Clamps each side to `PROB_EPS`.
    // the negated comparisons also trap NaN into the clamp
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub(crate) fn from_parts(value: f64, complement: f64) -> Self {
        debug_assert!(
            (value + complement - 1.0).abs() <= 1e-9,
            "tails must sum to 1: {value} + {complement}"
        );
        if !(value >= PROB_EPS) {
            return Self { value: PROB_EPS, complement: 1.0 - PROB_EPS };
        }
        if !(complement >= PROB_EPS) {
            return Self { value: 1.0 - PROB_EPS, complement: PROB_EPS };
        }
        Self { value, complement }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// `1 − value`, tracked separately to avoid cancellation.
    pub fn complement(self) -> f64 {
        self.complement
    }

    /// `ln(value)` with full precision near 1.
    pub fn ln_value(self) -> f64 {
        if self.value > 0.5 {
            (-self.complement).ln_1p()
        } else {
            self.value.ln()
        }
    }

    /// `ln(1 − value)` with full precision near 0.
    pub fn ln_complement(self) -> f64 {
        if self.complement > 0.5 {
            (-self.value).ln_1p()
        } else {
            self.complement.ln()
        }
    }
}

impl PartialEq for Probability {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for Probability {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl Serialize for Probability {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.value.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Probability::new(value).map_err(serde::de::Error::custom)
    }
}

/// The link function φ with its inverse and derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    /// φ(t) = 1 / (1 + e^{−t})
    Logistic,
    /// φ(t) = t
    Identity,
}

impl LinkFunction {
    /// φ(t) as a raw `f64`.
    pub fn phi(self, t: f64) -> f64 {
        self.phi_pair(t).0
    }

    /// (φ(t), 1 − φ(t)) with each tail computed without cancellation.
    pub fn phi_pair(self, t: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logistic => {
                if t >= 0.0 {
                    let e = (-t).exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                } else {
                    let e = t.exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                }
            }
            LinkFunction::Identity => (t, 1.0 - t),
        }
    }

    /// φ⁻¹(p) from a raw probability value.
    pub fn phi_inverse(self, p: f64) -> f64 {
        match self {
            LinkFunction::Logistic => (p / (1.0 - p)).ln(),
            LinkFunction::Identity => p,
        }
    }

    /// φ⁻¹ from a tail pair; for the logistic link this is the precision-
    /// preserving form `ln(p) − ln(1 − p)` on separately tracked tails.
    pub fn phi_inverse_pair(self, pair: (f64, f64)) -> f64 {
        match self {
            LinkFunction::Logistic => pair.0.ln() - pair.1.ln(),
            LinkFunction::Identity => pair.0,
        }
    }

    /// φ′(t).
    pub fn phi_derivative(self, t: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let (p, q) = self.phi_pair(t);
                p * q
            }
            LinkFunction::Identity => 1.0,
        }
    }
}

/// Evaluate φ(t), clamped into the probability range.
pub fn phi_eval(link: LinkFunction, t: f64) -> Result<Probability> {
    if !t.is_finite() {
        return Err(Error::invalid_input(format!("score must be finite, got {t}")));
    }
    let (value, complement) = link.phi_pair(t);
    Ok(Probability::from_parts(value, complement))
}

/// Evaluate φ⁻¹(p). `phi_eval(link, phi_inverse_eval(link, p)) == p` up to
/// rounding wherever the clamp does not bind.
pub fn phi_inverse_eval(link: LinkFunction, p: Probability) -> f64 {
    link.phi_inverse_pair((p.value(), p.complement()))
}
