//! Group-fairness disparities between a group and its complement.
//!
//! Every measure is the absolute difference of a rate computed on the group
//! and on everyone else. A rate with an empty denominator makes its measure
//! undefined (`None`) rather than zero.

use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::NumericError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn true_positive_rate(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts inside a group and inside its complement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub group: Confusion,
    pub complement: Confusion,
}

impl GroupConfusion {
    pub fn group_size(&self) -> usize {
        self.group.total()
    }

    pub fn complement_size(&self) -> usize {
        self.complement.total()
    }

    /// Either side is empty.
    pub fn is_degenerate(&self) -> bool {
        self.group_size() == 0 || self.complement_size() == 0
    }
}

/// Counts by group membership, label and prediction. Predictions and labels
/// are `+1` for the positive class; membership is any nonzero indicator.
pub fn group_confusion(
    predictions: &[f64],
    labels: &[f64],
    group: &[f64],
) -> Result<GroupConfusion, NumericError> {
    for other in [labels.len(), group.len()] {
        if other != predictions.len() {
            return Err(NumericError::LengthMismatch {
                left: predictions.len(),
                right: other,
            });
        }
    }
    let mut gc = GroupConfusion::default();
    for ((&p, &y), &g) in predictions.iter().zip(labels).zip(group) {
        let side = if g != 0.0 { &mut gc.group } else { &mut gc.complement };
        side.record(p > 0.0, y > 0.0);
    }
    Ok(gc)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessMeasures {
    /// Predictive equality: false-positive-rate gap.
    pub f_pe: Option<f64>,
    /// Equal opportunity: true-positive-rate gap.
    pub f_ep: Option<f64>,
    /// Equalized odds: `f_ep + f_pe`.
    pub f_eo: Option<f64>,
    /// Overall accuracy equality: accuracy gap.
    pub f_oae: Option<f64>,
}

/// Names in report order, matching [`FairnessMeasures::values`].
pub const MEASURE_NAMES: [&str; 4] = ["f_pe", "f_ep", "f_eo", "f_oae"];

impl FairnessMeasures {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.f_pe, self.f_ep, self.f_eo, self.f_oae]
    }
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

pub fn fairness_measures(gc: &GroupConfusion) -> FairnessMeasures {
    let (g, c) = (&gc.group, &gc.complement);
    let f_pe = gap(g.false_positive_rate(), c.false_positive_rate());
    let f_ep = gap(g.true_positive_rate(), c.true_positive_rate());
    FairnessMeasures {
        f_pe,
        f_ep,
        f_eo: f_ep.zip(f_pe).map(|(a, b)| a + b),
        f_oae: gap(g.accuracy(), c.accuracy()),
    }
}

/// Measures for the rows flagged by one subfeature column against all other rows.
pub fn one_vs_all_measures(
    predictions: &[f64],
    labels: &[f64],
    encoded: &EncodedDataset,
    subfeature: usize,
) -> Result<FairnessMeasures, NumericError> {
    let gc = group_confusion(predictions, labels, encoded.column(subfeature))?;
    Ok(fairness_measures(&gc))
}
