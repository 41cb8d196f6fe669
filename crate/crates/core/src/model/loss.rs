use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::scalar::Scalar;

/// Clamp a probability to the floor. Written with an explicit comparison
/// rather than `Float::max` so that NaN passes through and surfaces as a
/// non-finite loss instead of being silently replaced by the floor.
fn floored<F: Scalar>(p: F) -> F {
    if p < F::prob_floor() {
        F::prob_floor()
    } else {
        p
    }
}

/// Cross entropy of a hard label: `-ln p[label]`, with the probability
/// floored at `Scalar::prob_floor()` before the log so that a saturated
/// softmax cannot produce infinities.
pub fn ce_loss<F: Scalar>(pred: &Prediction<F>, label: usize) -> F {
    assert!(label < pred.class_count(), "label out of range");
    -floored(pred.prob(label)).ln()
}

/// `KL(soft || pred)`: how far the prediction is from a target
/// distribution, as used for interpolated virtual examples. Terms with a
/// zero target weight contribute nothing; predicted probabilities are
/// floored like in [`ce_loss`].
pub fn kl_loss<F: Scalar>(pred: &Prediction<F>, soft_label: &[F]) -> F {
    assert_eq!(
        soft_label.len(),
        pred.class_count(),
        "soft label width must match class count"
    );
    let mut total = F::zero();
    for (&s, &p) in soft_label.iter().zip(&pred.probs) {
        if s > F::zero() {
            total = total + s * (s.ln() - floored(p).ln());
        }
    }
    total
}

/// Loss components of one batch under sum reduction. `total` is always the
/// plain sum of the two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport<F> {
    pub ce: F,
    pub kl: F,
    pub total: F,
}

impl<F: Scalar> LossReport<F> {
    pub fn new(ce: F, kl: F) -> Self {
        LossReport {
            ce,
            kl,
            total: ce + kl,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ce.is_finite() && self.kl.is_finite() && self.total.is_finite()
    }
}
