//! Isolation forest outlier scoring.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MeasurementField, MeasurementRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful binary-search-tree lookup among
/// `n` points; normalizes isolation depths.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

#[derive(Debug, Clone)]
enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone)]
struct IsolationTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> IsolationTree<T> {
    fn build(points: &[Vec<T>], mut idx: Vec<usize>, depth_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.grow(points, &mut idx, 0, depth_limit, rng);
        tree
    }

    fn grow(
        &mut self,
        points: &[Vec<T>],
        idx: &mut [usize],
        depth: usize,
        depth_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        if depth >= depth_limit || idx.len() <= 1 {
            self.nodes.push(Node::Leaf { size: idx.len() });
            return id;
        }
        let dims = points[idx[0]].len();
        let mut candidates = Vec::with_capacity(dims);
        let mut ranges = Vec::with_capacity(dims);
        for f in 0..dims {
            let (lo, hi) = idx.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                let v = points[i][f];
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                candidates.push(f);
                ranges.push((lo, hi));
            }
        }
        if candidates.is_empty() {
            self.nodes.push(Node::Leaf { size: idx.len() });
            return id;
        }
        let pick = rng.random_range(0..candidates.len());
        let feature = candidates[pick];
        let (lo, hi) = ranges[pick];
        let u: f64 = rng.random();
        let mut threshold = lo + (hi - lo) * T::lit(u);
        if threshold <= lo {
            threshold = lo + (hi - lo) * T::lit(0.5);
        }
        // partition in place: values < threshold to the front
        let mut split = 0;
        for k in 0..idx.len() {
            if points[idx[k]][feature] < threshold {
                idx.swap(split, k);
                split += 1;
            }
        }
        self.nodes.push(Node::Leaf { size: 0 });
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.grow(points, left_idx, depth + 1, depth_limit, rng);
        let right = self.grow(points, right_idx, depth + 1, depth_limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, point: &[T]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Leaf { size } => return depth as f64 + average_path_length(*size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[*feature] < *threshold { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }
}

/// Ensemble of isolation trees fitted on random subsamples.
#[derive(Debug, Clone)]
pub struct IsolationForest<T> {
    trees: Vec<IsolationTree<T>>,
    subsample: usize,
}

impl<T: Real> IsolationForest<T> {
    /// Grows `trees` trees, each on `subsample` points drawn without
    /// replacement (clamped to the number of points).
    ///
    /// Tree `t` draws from ChaCha stream `t` of `seed`, so the forest does
    /// not depend on how many threads build it.
    pub fn fit(points: &[Vec<T>], trees: usize, subsample: usize, seed: u64) -> Result<Self> {
        if trees == 0 {
            return Err(Error::invalid("trees", "need at least one tree"));
        }
        if subsample < 2 {
            return Err(Error::invalid("subsample", "need at least two points per tree"));
        }
        let psi = subsample.min(points.len());
        let depth_limit = (psi.max(2) as f64).log2().ceil() as usize;
        let trees = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let idx = if psi == points.len() {
                    (0..psi).collect()
                } else {
                    sample(&mut rng, points.len(), psi).into_vec()
                };
                IsolationTree::build(points, idx, depth_limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            subsample: psi,
        })
    }

    /// Anomaly score in (0, 1]; values near 1 are isolated quickly.
    pub fn score(&self, point: &[T]) -> f64 {
        let c = average_path_length(self.subsample);
        if c == 0.0 {
            return 0.5;
        }
        let mean: f64 =
            self.trees.iter().map(|t| t.path_length(point)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / c)
    }

    pub fn scores(&self, points: &[Vec<T>]) -> Vec<f64> {
        points.par_iter().map(|p| self.score(p)).collect()
    }
}

/// Marks exactly `⌊contamination · n⌋` entries with the highest scores;
/// equal scores are taken in index order.
pub fn flag_top_scores(scores: &[f64], contamination: f64) -> Result<Vec<bool>> {
    if !(0.0..0.5).contains(&contamination) {
        return Err(Error::invalid(
            "contamination",
            format!("{contamination} is outside [0, 0.5)"),
        ));
    }
    let k = (contamination * scores.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![false; scores.len()];
    for &i in &order[..k] {
        flags[i] = true;
    }
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub features: Vec<MeasurementField>,
    pub contamination: f64,
    pub trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            features: MeasurementField::ALL.to_vec(),
            contamination: 0.01,
            trees: 100,
            subsample: 256,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutlierSplit {
    pub kept: Vec<MeasurementRecord>,
    pub flagged: Vec<MeasurementRecord>,
    /// Anomaly score of every input record, in input order.
    pub scores: Vec<f64>,
}

/// Scores records with an isolation forest over `config.features` and
/// splits off the top `⌊contamination · n⌋`.
pub fn isolation_forest_outliers(
    records: &[MeasurementRecord],
    config: &ForestConfig,
) -> Result<OutlierSplit> {
    if !(0.0..0.5).contains(&config.contamination) {
        return Err(Error::invalid(
            "contamination",
            format!("{} is outside [0, 0.5)", config.contamination),
        ));
    }
    if config.features.is_empty() {
        return Err(Error::invalid("features", "feature set is empty"));
    }
    if records.is_empty() {
        return Ok(OutlierSplit::default());
    }
    let points: Vec<Vec<f64>> = records
        .iter()
        .map(|r| config.features.iter().map(|f| f.value(r)).collect())
        .collect();
    let forest = IsolationForest::fit(&points, config.trees, config.subsample, config.seed)?;
    let scores = forest.scores(&points);
    let flags = flag_top_scores(&scores, config.contamination)?;
    let mut split = OutlierSplit {
        scores,
        ..OutlierSplit::default()
    };
    for (r, flagged) in records.iter().zip(flags) {
        if flagged {
            split.flagged.push(r.clone());
        } else {
            split.kept.push(r.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cluster_with_far_point(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut pts: Vec<Vec<f64>> = (0..99)
            .map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        pts.insert(37, vec![100.0, 100.0]);
        pts
    }

    /// Brute-force oracle: index of the point whose nearest neighbour is farthest.
    fn most_isolated(points: &[Vec<f64>]) -> usize {
        let nn = |i: usize| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| {
                    q.iter()
                        .zip(&points[i])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        };
        (0..points.len())
            .max_by(|&a, &b| nn(a).total_cmp(&nn(b)))
            .unwrap()
    }

    #[test]
    fn path_length_constant() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // c(256) ≈ 10.2448
        assert!((average_path_length(256) - 10.244_770_920_657_007).abs() < 1e-9);
    }

    #[test]
    fn identical_points_nothing_flagged() {
        let pts = vec![vec![1.0, 2.0]; 100];
        let forest = IsolationForest::fit(&pts, 50, 64, 1).unwrap();
        let scores = forest.scores(&pts);
        let flags = flag_top_scores(&scores, 0.0).unwrap();
        assert!(flags.iter().all(|f| !f));
        assert!(scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn far_point_is_flagged() {
        for seed in 0..5 {
            let pts = cluster_with_far_point(seed);
            let oracle = most_isolated(&pts);
            assert_eq!(oracle, 37);
            let forest = IsolationForest::fit(&pts, 100, 256, seed).unwrap();
            let flags = flag_top_scores(&forest.scores(&pts), 0.01).unwrap();
            let flagged: Vec<usize> = (0..pts.len()).filter(|&i| flags[i]).collect();
            assert_eq!(flagged, vec![oracle]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let pts = cluster_with_far_point(9);
        let a = IsolationForest::fit(&pts, 30, 32, 7).unwrap().scores(&pts);
        let b = IsolationForest::fit(&pts, 30, 32, 7).unwrap().scores(&pts);
        assert_eq!(a, b);
        let c = IsolationForest::fit(&pts, 30, 32, 8).unwrap().scores(&pts);
        assert_ne!(a, c);
    }

    #[test]
    fn thread_count_does_not_change_scores() {
        let pts = cluster_with_far_point(3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| IsolationForest::fit(&pts, 40, 50, 11).unwrap().scores(&pts))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn contamination_validated() {
        assert!(flag_top_scores(&[0.1, 0.2], 0.5).is_err());
        assert!(flag_top_scores(&[0.1, 0.2], -0.1).is_err());
        assert!(IsolationForest::<f64>::fit(&[vec![0.0]], 0, 4, 0).is_err());
        assert!(IsolationForest::<f64>::fit(&[vec![0.0]], 1, 1, 0).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        let flags = flag_top_scores(&[0.7, 0.9, 0.9, 0.9, 0.1], 0.45).unwrap();
        assert_eq!(flags, vec![false, true, true, false, false]);
    }
}
