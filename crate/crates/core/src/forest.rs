//! Random forest of CART trees grown on Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::seed;

/// How many features each split inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitFeatures {
    /// `floor(sqrt(m))`, at least 1.
    Sqrt,
    All,
    Fixed(usize),
}

impl SplitFeatures {
    fn count(self, m: usize) -> usize {
        let k = match self {
            SplitFeatures::Sqrt => (m as f64).sqrt().floor() as usize,
            SplitFeatures::All => m,
            SplitFeatures::Fixed(k) => k,
        };
        k.clamp(1, m.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub split_features: SplitFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            split_features: SplitFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        positive_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Fraction of positive training rows in the leaf reached by `row`.
    pub fn positive_fraction(&self, columns: &[&[f64]], row: usize) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { positive_fraction } => return *positive_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if columns[*feature][row] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

struct Grower<'a, R> {
    columns: &'a [&'a [f64]],
    positive: &'a [bool],
    max_depth: Option<usize>,
    per_split: usize,
    rng: R,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
    order: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_weighted(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    total as f64 * 2.0 * p * (1.0 - p)
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&r| self.positive[r]).count();
        let leaf = Node::Leaf {
            positive_fraction: pos as f64 / rows.len() as f64,
        };
        self.nodes.push(leaf.clone());
        if pos == 0 || pos == rows.len() || self.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(best) = self.best_split(rows, pos) else {
            return id;
        };
        let column = self.columns[best.feature];
        let mut mid = 0;
        for i in 0..rows.len() {
            if column[rows[i]] <= best.threshold {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Best Gini split over a random subset of features, searching further
    /// features only while none has yielded a valid split.
    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<BestSplit> {
        let total = rows.len();
        self.order.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        let order = std::mem::take(&mut self.order);
        for (inspected, &f) in order.iter().enumerate() {
            if inspected >= self.per_split && best.is_some() {
                break;
            }
            let column = self.columns[f];
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (column[r], self.positive[r])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..total - 1 {
                left_pos += usize::from(self.scratch[i].1);
                let (a, b) = (self.scratch[i].0, self.scratch[i + 1].0);
                if a == b {
                    continue;
                }
                let n_left = i + 1;
                let impurity = gini_weighted(left_pos, n_left)
                    + gini_weighted(pos - left_pos, total - n_left);
                if best.as_ref().map_or(true, |s| impurity < s.impurity) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(BestSplit {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        impurity,
                    });
                }
            }
        }
        self.order = order;
        best
    }
}

fn grow_tree(
    columns: &[&[f64]],
    positive: &[bool],
    rows: &[usize],
    config: &ForestConfig,
    tree_seed: u64,
) -> Tree {
    let mut rng = seed::rng(tree_seed);
    let mut sample: Vec<usize> = if config.bootstrap {
        (0..rows.len())
            .map(|_| rows[rng.gen_range(0..rows.len())])
            .collect()
    } else {
        rows.to_vec()
    };
    let mut grower = Grower {
        columns,
        positive,
        max_depth: config.max_depth,
        per_split: config.split_features.count(columns.len()),
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
        order: (0..columns.len()).collect(),
    };
    grower.grow(&mut sample, 0);
    Tree {
        nodes: grower.nodes,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Fits on `rows` of column-major `columns` with `+1 / -1` labels.
    pub fn fit(
        columns: &[&[f64]],
        labels: &[f64],
        rows: &[usize],
        config: &ForestConfig,
    ) -> Result<Self, ValidationError> {
        if config.trees == 0 {
            return Err(ValidationError::Invalid("forest needs at least one tree".into()));
        }
        if columns.is_empty() {
            return Err(ValidationError::Invalid("no feature columns to train on".into()));
        }
        let positive: Vec<bool> = labels.iter().map(|&y| y > 0.0).collect();
        let pos = rows.iter().filter(|&&r| positive[r]).count();
        if rows.is_empty() || pos == 0 || pos == rows.len() {
            return Err(ValidationError::SingleClassTraining);
        }
        let trees = (0..config.trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = seed::derive(config.seed, &format!("tree{t}"));
                grow_tree(columns, &positive, rows, config, tree_seed)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Majority vote of the trees; ties go to the higher mean leaf fraction, then to `-1`.
    pub fn predict_row(&self, columns: &[&[f64]], row: usize) -> f64 {
        let mut votes = 0isize;
        let mut mean = 0.0;
        for t in &self.trees {
            let p = t.positive_fraction(columns, row);
            mean += p;
            votes += match p.partial_cmp(&0.5) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
        mean /= self.trees.len() as f64;
        if votes > 0 || (votes == 0 && mean > 0.5) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn predict(&self, columns: &[&[f64]], rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.predict_row(columns, r)).collect()
    }
}
