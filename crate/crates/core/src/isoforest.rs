//! Isolation Forest and Extended Isolation Forest.
//!
//! Both variants share the scoring phase; they only differ in how a node is
//! split. IF cuts along a uniformly chosen coordinate at a uniform point of
//! the node's range, EIF cuts with a hyperplane whose normal is i.i.d.
//! Gaussian and which passes through a uniform point of the node's bounding box.
//!
//! Every tree draws from its own [`RngStream`] derived from `(seed, tree index)`,
//! so trees can be built in parallel and still match a sequential build.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrng::RngStream;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_PSI: usize = 256;

/// Attempts at drawing an oblique split that leaves both children non-empty.
const MAX_OBLIQUE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Axis-aligned splits.
    If,
    /// Random-hyperplane splits.
    Eif,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::If => "if",
            Algorithm::Eif => "eif",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "if" => Ok(Algorithm::If),
            "eif" => Ok(Algorithm::Eif),
            other => Err(Error::invalid(format!("unknown algorithm {other:?}; expected if or eif"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Left iff `x[dim] < value`.
    Axis { dim: usize, value: f64 },
    /// Left iff `(x - offset_point) . normal <= 0`.
    Oblique { normal: Vec<f64>, offset_point: Vec<f64> },
}

impl SplitRule {
    pub fn goes_left(&self, x: &[f64]) -> bool {
        match self {
            SplitRule::Axis { dim, value } => x[*dim] < *value,
            SplitRule::Oblique { normal, offset_point } => {
                let dot: f64 = x
                    .iter()
                    .zip(offset_point)
                    .zip(normal)
                    .map(|((xi, pi), ni)| (xi - pi) * ni)
                    .sum();
                dot <= 0.0
            }
        }
    }

    fn check_dims(&self, d: usize) -> Result<()> {
        let ok = match self {
            SplitRule::Axis { dim, .. } => *dim < d,
            SplitRule::Oblique { normal, offset_point } => normal.len() == d && offset_point.len() == d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("split rule does not match a {d}-dimensional point")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    External {
        size: usize,
        depth: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::External { depth, .. } => *depth,
            TreeNode::Internal { left, right, .. } => left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::External { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// Average path length of an unsuccessful BST search among `n` points.
pub fn avg_path_c(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// Edges from the root to the external node reached by `x`, plus `c(size)`
/// of that node.
pub fn path_length(tree: &TreeNode, x: &[f64]) -> Result<f64> {
    let mut node = tree;
    let mut edges = 0usize;
    loop {
        match node {
            TreeNode::External { size, .. } => return Ok(edges as f64 + avg_path_c(*size)),
            TreeNode::Internal { rule, left, right } => {
                rule.check_dims(x.len())?;
                node = if rule.goes_left(x) { left } else { right };
                edges += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub algo: Algorithm,
    pub trees: usize,
    pub psi: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            algo: Algorithm::If,
            trees: DEFAULT_TREES,
            psi: DEFAULT_PSI,
        }
    }
}

impl ForestParams {
    pub fn new(algo: Algorithm) -> Self {
        Self {
            algo,
            ..Self::default()
        }
    }
}

/// Per-row outlier scores in `(0, 1]`, row-aligned with the scored matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        Self(scores)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Row indices ordered by decreasing score, ties broken by lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        order
    }

    pub fn argmax(&self) -> Option<usize> {
        self.ranking().first().copied()
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<TreeNode>,
    psi: usize,
    max_depth: usize,
    algo: Algorithm,
    dims: usize,
}

impl Forest {
    pub fn fit(data: &Matrix, params: &ForestParams, seed: u64) -> Result<Self> {
        let (n, d) = (data.rows(), data.cols());
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("cannot fit a forest on a {n}x{d} matrix")));
        }
        if params.trees == 0 || params.psi == 0 {
            return Err(Error::invalid("tree count and subsample size must be positive"));
        }
        let psi = params.psi.min(n);
        let max_depth = ceil_log2(psi);
        let builder = TreeBuilder {
            data,
            algo: params.algo,
            max_depth,
        };

        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut stream = RngStream::derive(seed, t as u64);
                let sample = subsample(n, psi, &mut stream);
                builder.build(sample, 0, &mut stream)
            })
            .collect();

        Ok(Self {
            trees,
            psi,
            max_depth,
            algo: params.algo,
            dims: d,
        })
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    /// Effective subsample size, `min(psi, N)`.
    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn algo(&self) -> Algorithm {
        self.algo
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Mean path length of `x` over all trees.
    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims {
            return Err(Error::shape(format!("point has {} components, forest expects {}", x.len(), self.dims)));
        }
        let mut total = 0.0;
        for tree in &self.trees {
            total += path_length(tree, x)?;
        }
        Ok(total / self.trees.len() as f64)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(score_from_path(self.mean_path_length(x)?, self.psi))
    }

    pub fn score_all(&self, data: &Matrix) -> Result<ScoreVector> {
        if data.cols() != self.dims {
            return Err(Error::shape(format!(
                "data has {} columns, forest expects {}",
                data.cols(),
                self.dims
            )));
        }
        let scores = (0..data.rows())
            .into_par_iter()
            .map(|i| self.score(data.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreVector(scores))
    }
}

/// `2^(-E[h] / c(psi))`.
pub fn score_from_path(mean_path: f64, psi: usize) -> f64 {
    let c = avg_path_c(psi);
    if c == 0.0 {
        // psi = 1: every path is 0 = c(1), the formula's fixed point
        return 0.5;
    }
    2f64.powf(-mean_path / c)
}

fn ceil_log2(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

/// First `k` entries of a partial Fisher-Yates shuffle of `0..n`.
fn subsample(n: usize, k: usize, stream: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = i + stream.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

struct TreeBuilder<'a> {
    data: &'a Matrix,
    algo: Algorithm,
    max_depth: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, rows: Vec<usize>, depth: usize, stream: &mut RngStream) -> TreeNode {
        let leaf = TreeNode::External {
            size: rows.len(),
            depth,
        };
        if rows.len() <= 1 || depth >= self.max_depth {
            return leaf;
        }
        let (lo, hi) = self.bounds(&rows);
        let rule = match self.algo {
            Algorithm::If => self.axis_rule(&lo, &hi, stream),
            Algorithm::Eif => self.oblique_rule(&rows, &lo, &hi, stream),
        };
        let Some(rule) = rule else {
            return leaf;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| rule.goes_left(self.data.row(r)));
        debug_assert!(!left.is_empty() && !right.is_empty());
        TreeNode::Internal {
            rule,
            left: Box::new(self.build(left, depth + 1, stream)),
            right: Box::new(self.build(right, depth + 1, stream)),
        }
    }

    fn bounds(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let d = self.data.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &r in rows {
            for (j, &v) in self.data.row(r).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        (lo, hi)
    }

    /// Uniform dimension among those with a non-zero range, then a cut
    /// strictly inside that range. `None` when all points coincide.
    fn axis_rule(&self, lo: &[f64], hi: &[f64], stream: &mut RngStream) -> Option<SplitRule> {
        let splittable: Vec<usize> = (0..lo.len()).filter(|&j| hi[j] > lo[j]).collect();
        if splittable.is_empty() {
            return None;
        }
        let dim = splittable[stream.below(splittable.len() as u64) as usize];
        let (a, b) = (lo[dim], hi[dim]);
        loop {
            let value = a + (b - a) * stream.uniform_open();
            // rounding can land on an endpoint when the range is a few ulps wide
            if value > a && value < b {
                return Some(SplitRule::Axis { dim, value });
            }
            if b.next_down() <= a {
                return None;
            }
        }
    }

    /// Gaussian normal through a uniform point of the bounding box, redrawn
    /// until both sides receive at least one point.
    fn oblique_rule(&self, rows: &[usize], lo: &[f64], hi: &[f64], stream: &mut RngStream) -> Option<SplitRule> {
        if lo.iter().zip(hi).all(|(a, b)| a == b) {
            return None;
        }
        for _ in 0..MAX_OBLIQUE_ATTEMPTS {
            let normal: Vec<f64> = (0..lo.len()).map(|_| stream.standard_normal()).collect();
            let offset_point: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| a + (b - a) * stream.uniform01()).collect();
            if normal.iter().all(|&c| c == 0.0) {
                continue;
            }
            let rule = SplitRule::Oblique { normal, offset_point };
            let left = rows.iter().filter(|&&r| rule.goes_left(self.data.row(r))).count();
            if left > 0 && left < rows.len() {
                return Some(rule);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cluster_with_outlier(seed: u64) -> Matrix {
        let mut s = RngStream::new(seed);
        let sd = 0.1f64.sqrt();
        let mut rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![s.gaussian(0.0, sd).unwrap(), s.gaussian(0.0, sd).unwrap()])
            .collect();
        rows.push(vec![10.0, 10.0]);
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn c_values() {
        assert_eq!(avg_path_c(0), 0.0);
        assert_eq!(avg_path_c(1), 0.0);
        assert_eq!(avg_path_c(2), 1.0);
        let expected = 2.0 * (255f64.ln() + 0.5772156649015329) - 2.0 * 255.0 / 256.0;
        assert!((avg_path_c(256) - expected).abs() < 1e-12);
    }

    #[test]
    fn max_depth_is_ceil_log2() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(214), 8);
        assert_eq!(ceil_log2(256), 8);
        assert_eq!(ceil_log2(257), 9);
    }

    #[test]
    fn single_row_gives_single_leaves() {
        let data = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        for algo in [Algorithm::If, Algorithm::Eif] {
            let f = Forest::fit(&data, &ForestParams::new(algo), 1).unwrap();
            assert_eq!(f.trees().len(), 100);
            for t in f.trees() {
                assert_eq!(t, &TreeNode::External { size: 1, depth: 0 });
            }
        }
    }

    #[test]
    fn identical_rows_are_not_split() {
        let data = Matrix::from_rows(&vec![vec![3.0, -1.0, 0.5]; 100]).unwrap();
        for algo in [Algorithm::If, Algorithm::Eif] {
            let f = Forest::fit(&data, &ForestParams::new(algo), 9).unwrap();
            for t in f.trees() {
                assert_eq!(t, &TreeNode::External { size: 100, depth: 0 });
            }
            let scores = f.score_all(&data).unwrap();
            assert!(scores.as_slice().iter().all(|&s| s == scores.as_slice()[0]));
        }
    }

    #[test]
    fn depth_is_bounded() {
        let mut s = RngStream::new(4);
        let data = Matrix::new(500, 3, (0..1500).map(|_| s.standard_normal()).collect()).unwrap();
        for algo in [Algorithm::If, Algorithm::Eif] {
            let f = Forest::fit(&data, &ForestParams::new(algo), 2).unwrap();
            assert_eq!(f.psi(), 256);
            assert_eq!(f.max_depth(), 8);
            assert!(f.trees().iter().all(|t| t.depth() <= 8));
        }
    }

    #[test]
    fn empty_data_rejected() {
        assert!(matches!(
            Forest::fit(&Matrix::zeros(0, 3), &ForestParams::default(), 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn path_length_examples() {
        let single = TreeNode::External { size: 5, depth: 0 };
        assert_eq!(path_length(&single, &[0.0]).unwrap(), avg_path_c(5));

        let stump = TreeNode::Internal {
            rule: SplitRule::Axis { dim: 0, value: 0.0 },
            left: Box::new(TreeNode::External { size: 1, depth: 1 }),
            right: Box::new(TreeNode::External { size: 1, depth: 1 }),
        };
        for x in [-3.0, 0.0, 7.0] {
            assert_eq!(path_length(&stump, &[x]).unwrap(), 1.0);
        }

        // root: x0 < 1 ? A : B
        // A:    x1 < 0 ? leaf(1) : C
        // C:    oblique through origin with normal (1, 1) -> left iff x0 + x1 <= 0 ? leaf(3) : leaf(2)
        // B:    leaf(4)
        let tree = TreeNode::Internal {
            rule: SplitRule::Axis { dim: 0, value: 1.0 },
            left: Box::new(TreeNode::Internal {
                rule: SplitRule::Axis { dim: 1, value: 0.0 },
                left: Box::new(TreeNode::External { size: 1, depth: 2 }),
                right: Box::new(TreeNode::Internal {
                    rule: SplitRule::Oblique {
                        normal: vec![1.0, 1.0],
                        offset_point: vec![0.0, 0.0],
                    },
                    left: Box::new(TreeNode::External { size: 3, depth: 3 }),
                    right: Box::new(TreeNode::External { size: 2, depth: 3 }),
                }),
            }),
            right: Box::new(TreeNode::External { size: 4, depth: 1 }),
        };
        // (-2, 1): root left, x1 >= 0 -> C, sum = -1 <= 0 -> leaf(3): 3 edges + c(3)
        assert!((path_length(&tree, &[-2.0, 1.0]).unwrap() - (3.0 + avg_path_c(3))).abs() < 1e-15);
        // (0.5, 2): root left, C, sum 2.5 > 0 -> leaf(2): 3 + 1
        assert_eq!(path_length(&tree, &[0.5, 2.0]).unwrap(), 4.0);
        // (0, -1): root left, x1 < 0 -> leaf(1): 2 + 0
        assert_eq!(path_length(&tree, &[0.0, -1.0]).unwrap(), 2.0);
        // (5, 5): root right -> leaf(4): 1 + c(4)
        assert_eq!(path_length(&tree, &[5.0, 5.0]).unwrap(), 1.0 + avg_path_c(4));

        assert!(matches!(path_length(&tree, &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn score_fixed_point() {
        assert_eq!(score_from_path(avg_path_c(256), 256), 0.5);
        assert_eq!(score_from_path(0.0, 256), 1.0);
    }

    #[test]
    fn far_point_scores_highest() {
        for algo in [Algorithm::If, Algorithm::Eif] {
            for seed in 0..10 {
                let data = cluster_with_outlier(seed);
                let f = Forest::fit(&data, &ForestParams::new(algo), seed).unwrap();
                let scores = f.score_all(&data).unwrap();
                let best = scores.argmax().unwrap();
                assert_eq!(best, 100, "{algo} seed {seed}");
                let top = scores.as_slice()[100];
                assert!(scores.as_slice()[..100].iter().all(|&s| s < top));
            }
        }
    }

    #[test]
    fn scoring_is_reproducible() {
        let data = cluster_with_outlier(3);
        for algo in [Algorithm::If, Algorithm::Eif] {
            let a = Forest::fit(&data, &ForestParams::new(algo), 17).unwrap().score_all(&data).unwrap();
            let b = Forest::fit(&data, &ForestParams::new(algo), 17).unwrap().score_all(&data).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let data = cluster_with_outlier(8);
        let params = ForestParams::new(Algorithm::Eif);
        let forest = Forest::fit(&data, &params, 5).unwrap();
        let psi = forest.psi();
        let builder = TreeBuilder {
            data: &data,
            algo: params.algo,
            max_depth: forest.max_depth(),
        };
        for (t, tree) in forest.trees().iter().enumerate() {
            let mut stream = RngStream::derive(5, t as u64);
            let sample = subsample(data.rows(), psi, &mut stream);
            assert_eq!(&builder.build(sample, 0, &mut stream), tree);
        }
    }

    #[test]
    fn shape_mismatch_on_scoring() {
        let data = cluster_with_outlier(1);
        let f = Forest::fit(&data, &ForestParams::default(), 1).unwrap();
        assert!(matches!(f.score_all(&Matrix::zeros(3, 5)), Err(Error::Shape(_))));
    }

    /// Routes every training row down `node` and checks that each axis cut
    /// lies strictly inside the range of the rows reaching it.
    fn check_axis_cuts(node: &TreeNode, data: &Matrix, rows: &[usize]) {
        if let TreeNode::Internal { rule, left, right } = node {
            let SplitRule::Axis { dim, value } = rule else {
                panic!("IF produced an oblique rule");
            };
            let vals: Vec<f64> = rows.iter().map(|&r| data.row(r)[*dim]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo < *value && *value < hi);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| rule.goes_left(data.row(i)));
            check_axis_cuts(left, data, &l);
            check_axis_cuts(right, data, &r);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scores_in_unit_interval_and_monotone(seed in any::<u64>(), n in 2usize..80, algo_eif in any::<bool>()) {
            let mut s = RngStream::new(seed);
            let data = Matrix::new(n, 3, (0..n * 3).map(|_| s.standard_normal()).collect()).unwrap();
            let algo = if algo_eif { Algorithm::Eif } else { Algorithm::If };
            let f = Forest::fit(&data, &ForestParams { algo, trees: 20, psi: 256 }, seed).unwrap();
            let mut pairs = Vec::new();
            for i in 0..n {
                let h = f.mean_path_length(data.row(i)).unwrap();
                let sc = f.score(data.row(i)).unwrap();
                prop_assert!(sc > 0.0 && sc <= 1.0);
                pairs.push((h, sc));
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }

        #[test]
        fn axis_cuts_strictly_inside_range(seed in any::<u64>(), n in 2usize..120) {
            let mut s = RngStream::new(seed);
            // coarse values so ties and constant columns show up
            let data = Matrix::new(n, 4, (0..n * 4).map(|_| (s.below(5) as f64) * 0.5).collect()).unwrap();
            let f = Forest::fit(&data, &ForestParams { algo: Algorithm::If, trees: 10, psi: n }, seed).unwrap();
            let all: Vec<usize> = (0..n).collect();
            for t in f.trees() {
                check_axis_cuts(t, &data, &all);
            }
        }
    }
}
