//! Sensitive-feature detection: score every feature against the label,
//! threshold at the median score and keep the candidates at or above it.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedDataset, FeatureKind};
use crate::dependence::{DependenceConfig, LabelOperator};
use crate::error::DetectError;
use crate::seed;
use crate::stats::median;

pub const DEFAULT_MAX_N: usize = 2000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    /// Median of all feature scores.
    Median,
    Fixed(f64),
}

impl std::str::FromStr for Threshold {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Threshold::Median);
        }
        s.parse::<f64>()
            .ok()
            .filter(|t| t.is_finite())
            .map(Threshold::Fixed)
            .ok_or_else(|| format!("threshold must be `median` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub dependence: DependenceConfig,
    pub threshold: Threshold,
    /// Row cap applied by label-stratified subsampling; `None` uses every row.
    pub max_n: Option<usize>,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            dependence: DependenceConfig::default(),
            threshold: Threshold::Median,
            max_n: Some(DEFAULT_MAX_N),
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubfeatureScore {
    pub name: String,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub kind: FeatureKind,
    pub candidate: bool,
    pub subfeatures: Vec<SubfeatureScore>,
    /// Largest subfeature score.
    pub d: f64,
    /// Subfeature attaining `d`; the first one on ties.
    pub argmax: String,
}

impl FeatureScore {
    fn from_subfeatures(
        feature: String,
        kind: FeatureKind,
        candidate: bool,
        subfeatures: Vec<SubfeatureScore>,
    ) -> Self {
        let mut best = 0;
        for (k, s) in subfeatures.iter().enumerate() {
            if s.d > subfeatures[best].d {
                best = k;
            }
        }
        Self {
            feature,
            kind,
            candidate,
            d: subfeatures[best].d,
            argmax: subfeatures[best].name.clone(),
            subfeatures,
        }
    }

    /// Score of the named subfeature, if it belongs to this feature.
    pub fn subfeature(&self, name: &str) -> Option<f64> {
        self.subfeatures.iter().find(|s| s.name == name).map(|s| s.d)
    }
}

/// Effective settings of a detection run, echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub kernel: crate::kernels::KernelKind,
    pub epsilon: f64,
    pub threshold: Threshold,
    pub max_n: Option<usize>,
    pub seed: u64,
    pub subsample_seed: u64,
    pub rows_available: usize,
    pub rows_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub config: RunEcho,
    pub scores: Vec<FeatureScore>,
    pub threshold: f64,
    pub sensitive_features: Vec<String>,
    pub sensitive_groups: Vec<String>,
}

impl DependenceReport {
    pub fn score(&self, feature: &str) -> Option<&FeatureScore> {
        self.scores.iter().find(|s| s.feature == feature)
    }

    /// Score of a subfeature looked up across all features.
    pub fn subfeature_score(&self, name: &str) -> Option<f64> {
        self.scores.iter().find_map(|s| s.subfeature(name))
    }

    pub fn is_sensitive(&self, feature: &str) -> bool {
        self.sensitive_features.iter().any(|f| f == feature)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table: one line per subfeature, features marked when sensitive.
    pub fn to_table(&self) -> String {
        let width = self
            .scores
            .iter()
            .flat_map(|s| s.subfeatures.iter().map(|x| x.name.len()))
            .chain(std::iter::once(10))
            .max()
            .unwrap_or(10);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>9}  {:>9}\n",
            "subfeature", "nocco", "candidate", "sensitive"
        );
        for s in &self.scores {
            let sensitive = self.is_sensitive(&s.feature);
            for sub in &s.subfeatures {
                let mark = if sub.name == s.argmax { "*" } else { " " };
                out.push_str(&format!(
                    "{:<width$}  {:>12.6}{mark} {:>9}  {:>9}\n",
                    sub.name,
                    sub.d,
                    if s.candidate { "yes" } else { "no" },
                    if sensitive && sub.name == s.argmax { "yes" } else { "" },
                ));
            }
        }
        out.push_str(&format!("threshold t = {:.6}\n", self.threshold));
        out.push_str(&format!(
            "sensitive features: {}\n",
            if self.sensitive_features.is_empty() {
                "(none)".to_string()
            } else {
                self.sensitive_features.join(", ")
            }
        ));
        out
    }
}

/// NOCCO of every subfeature column against the labels, grouped by feature.
pub fn score_features(
    encoded: &EncodedDataset,
    config: &DependenceConfig,
) -> Result<Vec<FeatureScore>, DetectError> {
    if encoded.n() < 2 {
        return Err(DetectError::Invalid(format!(
            "need at least 2 rows, got {}",
            encoded.n()
        )));
    }
    let label = LabelOperator::new(encoded.labels(), config).map_err(DetectError::Label)?;
    let subs = encoded.subfeatures();
    let values: Vec<f64> = (0..encoded.width())
        .into_par_iter()
        .map(|k| {
            label
                .nocco(encoded.column(k))
                .map(|d| d.max(0.0))
                .map_err(|source| DetectError::Column {
                    column: subs[k].name.clone(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(encoded
        .features()
        .iter()
        .map(|f| {
            let subfeatures = f
                .columns
                .iter()
                .map(|&c| SubfeatureScore {
                    name: subs[c].name.clone(),
                    d: values[c],
                })
                .collect();
            FeatureScore::from_subfeatures(f.name.clone(), f.kind.clone(), f.candidate, subfeatures)
        })
        .collect())
}

/// Outcome of thresholding a set of feature scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub threshold: f64,
    pub sensitive_features: Vec<String>,
    pub sensitive_groups: Vec<String>,
}

/// Candidates with `d >= t`, where `t` is the median over all features or a fixed value.
pub fn detect(scores: &[FeatureScore], threshold: Threshold) -> Detection {
    let t = match threshold {
        Threshold::Median => {
            let d: Vec<f64> = scores.iter().map(|s| s.d).collect();
            median(&d).unwrap_or(f64::INFINITY)
        }
        Threshold::Fixed(t) => t,
    };
    let picked: Vec<&FeatureScore> = scores
        .iter()
        .filter(|s| s.candidate && s.d >= t)
        .collect();
    Detection {
        threshold: t,
        sensitive_features: picked.iter().map(|s| s.feature.clone()).collect(),
        sensitive_groups: picked.iter().map(|s| s.argmax.clone()).collect(),
    }
}

/// Row indices of a label-stratified sample of `max_n` rows, in ascending order.
/// Every row when `n <= max_n`.
pub fn subsample_rows(labels: &[f64], max_n: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if n <= max_n {
        return (0..n).collect();
    }
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
    // largest remainder apportionment
    let exact = max_n as f64 * pos.len() as f64 / n as f64;
    let mut take_pos = exact.floor() as usize;
    if exact - exact.floor() >= 0.5 && take_pos < pos.len() {
        take_pos += 1;
    }
    let take_pos = take_pos.min(pos.len()).max(max_n.saturating_sub(neg.len()));
    let take_neg = max_n - take_pos;
    let mut rng = seed::rng(seed);
    let mut rows: Vec<usize> = sample(&mut rng, pos.len(), take_pos)
        .into_iter()
        .map(|i| pos[i])
        .chain(
            sample(&mut rng, neg.len(), take_neg)
                .into_iter()
                .map(|i| neg[i]),
        )
        .collect();
    rows.sort_unstable();
    rows
}

pub fn subsample(encoded: &EncodedDataset, max_n: usize, seed: u64) -> EncodedDataset {
    if encoded.n() <= max_n {
        return encoded.clone();
    }
    encoded.select_rows(&subsample_rows(encoded.labels(), max_n, seed))
}

/// Rows a run with `config` analyses: the subsample when a cap applies, else everything.
pub fn sample_for(encoded: &EncodedDataset, config: &DetectorConfig) -> EncodedDataset {
    match config.max_n {
        Some(cap) => subsample(encoded, cap, seed::derive(config.seed, "subsample")),
        None => encoded.clone(),
    }
}

/// Full pipeline: optional subsample, scoring and thresholding.
pub fn audit(encoded: &EncodedDataset, config: &DetectorConfig) -> Result<DependenceReport, DetectError> {
    config
        .dependence
        .validate()
        .map_err(|e| DetectError::Invalid(e.to_string()))?;
    if let Some(cap) = config.max_n {
        if cap < 2 {
            return Err(DetectError::Invalid(format!("max_n must be at least 2, got {cap}")));
        }
    }
    let subsample_seed = seed::derive(config.seed, "subsample");
    let data = sample_for(encoded, config);
    let scores = score_features(&data, &config.dependence)?;
    let detection = detect(&scores, config.threshold);
    Ok(DependenceReport {
        config: RunEcho {
            kernel: config.dependence.kernel,
            epsilon: config.dependence.epsilon,
            threshold: config.threshold,
            max_n: config.max_n,
            seed: config.seed,
            subsample_seed,
            rows_available: encoded.n(),
            rows_used: data.n(),
        },
        scores,
        threshold: detection.threshold,
        sensitive_features: detection.sensitive_features,
        sensitive_groups: detection.sensitive_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, load_dataset, ColumnSpec, Schema};

    fn score(name: &str, d: f64, candidate: bool) -> FeatureScore {
        FeatureScore::from_subfeatures(
            name.into(),
            FeatureKind::Binary,
            candidate,
            vec![SubfeatureScore {
                name: format!("{name}_1"),
                d,
            }],
        )
    }

    #[test]
    fn median_rule_on_three_scores() {
        let s = vec![score("a", 0.1, true), score("b", 0.2, true), score("c", 0.9, true)];
        let det = detect(&s, Threshold::Median);
        assert_eq!(det.threshold, 0.2);
        assert_eq!(det.sensitive_features, ["b", "c"]);
        assert_eq!(det.sensitive_groups, ["b_1", "c_1"]);
    }

    #[test]
    fn identical_scores_select_every_candidate() {
        let s = vec![score("a", 0.3, true), score("b", 0.3, false), score("c", 0.3, true)];
        assert_eq!(detect(&s, Threshold::Median).sensitive_features, ["a", "c"]);
    }

    #[test]
    fn fixed_threshold() {
        let s = vec![score("a", 0.49, true), score("b", 0.5, true), score("c", 0.9, false)];
        let det = detect(&s, Threshold::Fixed(0.5));
        assert_eq!(det.sensitive_features, ["b"]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let f = FeatureScore::from_subfeatures(
            "age".into(),
            FeatureKind::Categorical,
            true,
            vec![
                SubfeatureScore { name: "age_<30".into(), d: 0.2 },
                SubfeatureScore { name: "age_30-60".into(), d: 0.4 },
                SubfeatureScore { name: "age_>60".into(), d: 0.4 },
            ],
        );
        assert_eq!(f.argmax, "age_30-60");
        assert_eq!(f.d, 0.4);
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("median".parse::<Threshold>(), Ok(Threshold::Median));
        assert_eq!("0.5".parse::<Threshold>(), Ok(Threshold::Fixed(0.5)));
        assert!("high".parse::<Threshold>().is_err());
    }

    fn toy() -> EncodedDataset {
        let mut csv = String::from("copy,flat,age,y\n");
        for i in 0..40 {
            let y = if i % 3 == 0 { 1 } else { 0 };
            let age = ["<30", "30-60", ">60"][(i * 7) % 3];
            csv.push_str(&format!("{y},k,{age},{y}\n"));
        }
        csv.push_str("0,j,<30,0\n");
        let schema = Schema::new(
            vec![
                ColumnSpec::binary("copy", None),
                ColumnSpec::categorical("flat", &["j", "k", "z"]),
                ColumnSpec::categorical("age", &["<30", "30-60", ">60"]),
            ],
            "y",
            "1",
        );
        encode(&load_dataset(csv.as_bytes(), &schema).unwrap())
    }

    #[test]
    fn label_copy_scores_highest_and_constant_scores_zero() {
        let enc = toy();
        let cfg = DetectorConfig {
            max_n: None,
            ..Default::default()
        };
        let report = audit(&enc, &cfg).unwrap();
        let best = report
            .scores
            .iter()
            .max_by(|a, b| a.d.total_cmp(&b.d))
            .unwrap();
        assert_eq!(best.feature, "copy");
        assert_eq!(report.subfeature_score("flat_z"), Some(0.0));
        assert!(report.scores.iter().all(|s| s.d >= 0.0));
        let json = report.to_json();
        let back: DependenceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn feature_order_does_not_change_selection() {
        let s = vec![score("a", 0.1, true), score("b", 0.5, true), score("c", 0.7, true), score("d", 0.2, true)];
        let mut r = s.clone();
        r.reverse();
        let mut f1 = detect(&s, Threshold::Median).sensitive_features;
        let mut f2 = detect(&r, Threshold::Median).sensitive_features;
        f1.sort();
        f2.sort();
        assert_eq!(f1, f2);
    }

    #[test]
    fn subsampling_is_stratified_and_deterministic() {
        let labels: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = subsample_rows(&labels, 500, 7);
        assert_eq!(a, subsample_rows(&labels, 500, 7));
        assert_ne!(a, subsample_rows(&labels, 500, 8));
        assert_eq!(a.len(), 500);
        let pos = a.iter().filter(|&&i| labels[i] > 0.0).count();
        assert!((pos as i64 - 250).abs() <= 1);
        assert_eq!(subsample_rows(&labels[..100], 200, 7), (0..100).collect::<Vec<_>>());

        let skewed: Vec<f64> = (0..997).map(|i| if i % 10 == 0 { 1.0 } else { -1.0 }).collect();
        let b = subsample_rows(&skewed, 333, 1);
        let pos = b.iter().filter(|&&i| skewed[i] > 0.0).count() as f64;
        let expected = 333.0 * 100.0 / 997.0;
        assert!((pos - expected).abs() <= 1.0);
    }

    #[test]
    fn planted_corruption_orders_scores() {
        use crate::synth::{generate, planted_name, SynthSpec};
        for seed in 0..10 {
            let s = generate(&SynthSpec::new(500, &[0.0, 0.1, 0.25, 0.5], 0, seed)).unwrap();
            let report = audit(&encode(&s.dataset().unwrap()), &DetectorConfig::default()).unwrap();
            let d: Vec<f64> = (0..4).map(|i| report.score(&planted_name(i)).unwrap().d).collect();
            assert!(d.windows(2).all(|w| w[0] > w[1]), "seed {seed}: {d:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn median_split_selects_half(mut d in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            d.sort_by(f64::total_cmp);
            d.dedup();
            let scores: Vec<FeatureScore> = d.iter().enumerate().map(|(i, &v)| score(&format!("f{i}"), v, true)).collect();
            let det = detect(&scores, Threshold::Median);
            proptest::prop_assert_eq!(det.sensitive_features.len(), d.len().div_ceil(2));
            let mut reversed = scores.clone();
            reversed.reverse();
            let mut a = det.sensitive_groups;
            let mut b = detect(&reversed, Threshold::Median).sensitive_groups;
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
