//! Accuracy and ROC AUC.

use benet_core::Label;

use crate::error::{HarnessError, Result};

/// Fraction of samples whose hard decision `score > threshold` matches the
/// label. A score equal to the threshold counts as real.
pub fn accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> Result<f64> {
    check_aligned(scores, labels)?;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s > threshold) == l.is_fake())
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

fn check_aligned(scores: &[f64], labels: &[Label]) -> Result<()> {
    if scores.is_empty() {
        return Err(HarnessError::Invalid("metric over an empty set".into()));
    }
    if scores.len() != labels.len() {
        return Err(HarnessError::Invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mann–Whitney estimate of ROC AUC: over all (fake, real) pairs, a higher
/// fake score counts 1 and a tie ½.
///
/// Computed from midranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_aligned(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(HarnessError::Invalid("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|l| l.is_fake()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(HarnessError::Invalid("AUC needs both real and fake samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Sum of doubled midranks of the positives keeps everything integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled midrank = i + j + 2
        let mid2 = (i + j + 2) as u128;
        for &k in &order[i..=j] {
            if labels[k].is_fake() {
                rank_sum2 += mid2;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // 2·U = rank_sum2 − p(p+1)
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Hard-decision counts with fake as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_fake: usize,
    pub false_fake: usize,
    pub true_real: usize,
    pub false_real: usize,
}

impl Confusion {
    pub fn from_decisions(predicted: &[Label], labels: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (Label::Fake, Label::Fake) => c.true_fake += 1,
                (Label::Fake, Label::Real) => c.false_fake += 1,
                (Label::Real, Label::Real) => c.true_real += 1,
                (Label::Real, Label::Fake) => c.false_real += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.true_fake + self.false_fake + self.true_real + self.false_real
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_fake + self.true_real) as f64 / self.total().max(1) as f64
    }

    /// Fraction of fakes labelled fake; 0 when there are no fakes.
    pub fn fake_recall(&self) -> f64 {
        let fakes = self.true_fake + self.false_real;
        if fakes == 0 {
            0.0
        } else {
            self.true_fake as f64 / fakes as f64
        }
    }
}
