//! Synthetic datasets with planted, tunable dependence between group
//! indicators and the label.
//!
//! Each planted indicator starts as a copy of the label indicator and each
//! row is flipped independently. With no group fraction the flip probability
//! is `p` for every row. With a group fraction `f`, positives and negatives
//! flip at different rates so that the overall flip rate is still `p` and
//! the indicator is 1 on a share `f` of rows in expectation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, ColumnSpec, Dataset, Schema};
use crate::error::DataError;
use crate::seed;

pub const LABEL: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    /// Probability that a row's indicator disagrees with its label.
    pub p: f64,
    /// Expected share of rows with indicator 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_fraction: Option<f64>,
}

impl Planted {
    pub fn symmetric(p: f64) -> Self {
        Self {
            p,
            group_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Fair coin indicators.
    Binary,
    /// Uniform values on `[0, 1)`.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub planted: Vec<Planted>,
    pub noise: usize,
    pub noise_kind: NoiseKind,
    /// Probability of the positive label.
    pub positive_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n: usize, planted: &[f64], noise: usize, seed: u64) -> Self {
        Self {
            n,
            planted: planted.iter().map(|&p| Planted::symmetric(p)).collect(),
            noise,
            noise_kind: NoiseKind::Binary,
            positive_rate: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Invalid(msg));
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.planted.is_empty() && self.noise == 0 {
            return bad("synthetic dataset needs at least one column".into());
        }
        let pi = self.positive_rate;
        if !(pi > 0.0 && pi < 1.0) {
            return bad(format!("positive rate must lie in (0, 1), got {pi}"));
        }
        for (i, planted) in self.planted.iter().enumerate() {
            if !(0.0..=0.5).contains(&planted.p) {
                return bad(format!("planted_{i}: p must lie in [0, 0.5], got {}", planted.p));
            }
            if let Some(f) = planted.group_fraction {
                let (p0, p1) = flip_rates(planted.p, f, pi);
                if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&p1) {
                    return bad(format!(
                        "planted_{i}: group fraction {f} is unreachable with p = {} and positive rate {pi}",
                        planted.p
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Flip probabilities `(negatives, positives)` giving overall rate `p` and indicator share `f`.
fn flip_rates(p: f64, f: f64, pi: f64) -> (f64, f64) {
    let p0 = (p + f - pi) / (2.0 * (1.0 - pi));
    let p1 = (p - f + pi) / (2.0 * pi);
    (p0, p1)
}

/// What was planted and what the sample realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub name: String,
    pub p: f64,
    pub group_fraction: Option<f64>,
    /// Share of rows whose indicator disagrees with the label.
    pub observed_flip_rate: f64,
    pub observed_group_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub csv: String,
    pub schema: Schema,
    pub truth: Vec<PlantedTruth>,
}

impl Synthetic {
    pub fn dataset(&self) -> Result<Dataset, DataError> {
        load_dataset(self.csv.as_bytes(), &self.schema)
    }
}

pub fn planted_name(i: usize) -> String {
    format!("planted_{i}")
}

pub fn noise_name(i: usize) -> String {
    format!("noise_{i}")
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic, DataError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let n = spec.n;
    // at least one row per class so the labels always load
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(spec.positive_rate)).collect();
    if labels.iter().all(|&y| y) {
        labels[0] = false;
    } else if labels.iter().all(|&y| !y) {
        labels[0] = true;
    }

    let mut planted = Vec::with_capacity(spec.planted.len());
    let mut truth = Vec::with_capacity(spec.planted.len());
    for (i, spec_i) in spec.planted.iter().enumerate() {
        let (p0, p1) = match spec_i.group_fraction {
            Some(f) => flip_rates(spec_i.p, f, spec.positive_rate),
            None => (spec_i.p, spec_i.p),
        };
        let column: Vec<bool> = labels
            .iter()
            .map(|&y| y ^ rng.gen_bool(if y { p1 } else { p0 }))
            .collect();
        let flips = column.iter().zip(&labels).filter(|(a, b)| a != b).count();
        let ones = column.iter().filter(|&&b| b).count();
        truth.push(PlantedTruth {
            name: planted_name(i),
            p: spec_i.p,
            group_fraction: spec_i.group_fraction,
            observed_flip_rate: flips as f64 / n as f64,
            observed_group_fraction: ones as f64 / n as f64,
        });
        planted.push(column);
    }
    let noise: Vec<Vec<String>> = (0..spec.noise)
        .map(|_| {
            (0..n)
                .map(|_| match spec.noise_kind {
                    NoiseKind::Binary => u8::from(rng.gen_bool(0.5)).to_string(),
                    NoiseKind::Numeric => format!("{:.6}", rng.gen::<f64>()),
                })
                .collect()
        })
        .collect();

    let mut columns = Vec::new();
    let mut header = Vec::new();
    for i in 0..spec.planted.len() {
        header.push(planted_name(i));
        columns.push(ColumnSpec::binary(&planted_name(i), Some(["0", "1"])));
    }
    for i in 0..spec.noise {
        header.push(noise_name(i));
        columns.push(match spec.noise_kind {
            NoiseKind::Binary => ColumnSpec::binary(&noise_name(i), Some(["0", "1"])),
            NoiseKind::Numeric => ColumnSpec::numeric(&noise_name(i)),
        });
    }
    header.push(LABEL.to_string());
    let mut schema = Schema::new(columns, LABEL, "1");
    schema.label.negative = Some("0".into());

    let mut csv = header.join(",");
    csv.push('\n');
    for r in 0..n {
        let mut cells: Vec<&str> = planted.iter().map(|c| if c[r] { "1" } else { "0" }).collect();
        cells.extend(noise.iter().map(|c| c[r].as_str()));
        cells.push(if labels[r] { "1" } else { "0" });
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    Ok(Synthetic { csv, schema, truth })
}

/// A family of datasets sweeping the strength of one planted indicator.
///
/// Every dataset holds the swept indicator (`planted_0`), a fixed-strength
/// background indicator (`planted_1`) that gives the classifier a second
/// signal, and binary noise. Members sharing a seed share their labels and
/// noise columns, so strengths are compared on common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub n: usize,
    /// Corruption probabilities of the swept indicator.
    pub strengths: Vec<f64>,
    pub background: f64,
    pub positive_rate: f64,
    pub noise: usize,
    pub seeds: Vec<u64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            n: 1000,
            strengths: vec![0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            background: 0.25,
            positive_rate: 0.25,
            noise: 3,
            seeds: (0..10).collect(),
        }
    }
}

impl Sweep {
    /// `(seed, strength, spec)` for every member, seeds outermost.
    pub fn specs(&self) -> Vec<(u64, f64, SynthSpec)> {
        self.seeds
            .iter()
            .flat_map(|&seed| {
                self.strengths.iter().map(move |&p| {
                    let spec = SynthSpec {
                        planted: vec![Planted::symmetric(p), Planted::symmetric(self.background)],
                        positive_rate: self.positive_rate,
                        ..SynthSpec::new(self.n, &[], self.noise, seed)
                    };
                    (seed, p, spec)
                })
            })
            .collect()
    }
}
