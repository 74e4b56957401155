//! Gradient-boosted regression trees under squared loss.
//!
//! Trees are grown level by level with an exact greedy split search over
//! presorted columns. Each column keeps only the rows above its minimum in
//! sorted order; the minimum block is implied, which keeps the many sparse
//! claim-derived columns cheap to scan.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::FeatureMatrix;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "chronocost-gbdt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 200,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 5,
            seed: 0,
            subsample: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn check(&self, width: usize) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::ModelFormat("empty tree".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::ModelFormat(format!("non-finite leaf value in node {i}")))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    // Children always follow their parent, which also rules out cycles.
                    if feature >= width || !threshold.is_finite() || left <= i || right <= i || left >= n || right >= n {
                        return Err(Error::ModelFormat(format!("malformed split in node {i}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub init_value: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: GbdtModel,
}

impl GbdtModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Dimension {
                expected: self.feature_names.len(),
                actual: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut out = self.init_value;
        for tree in &self.trees {
            out += self.learning_rate * tree.predict(row);
        }
        out
    }

    /// Predicts every row, requiring the matrix columns to match by name.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.feature_names() != self.feature_names.as_slice() {
            let first = matrix
                .feature_names()
                .iter()
                .zip(&self.feature_names)
                .position(|(a, b)| a != b)
                .unwrap_or(matrix.n_cols().min(self.feature_names.len()));
            return Err(Error::InvalidInput(format!(
                "matrix columns differ from the model's at position {first} ({} vs {} columns)",
                matrix.n_cols(),
                self.feature_names.len()
            )));
        }
        Ok((0..matrix.n_rows()).map(|i| self.predict_unchecked(matrix.row(i))).collect())
    }

    pub fn save(&self, sink: impl Write) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer_pretty(sink, &file)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to memory");
        out
    }

    pub fn load(source: impl Read) -> Result<GbdtModel> {
        let value: serde_json::Value = serde_json::from_reader(source)?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            other => return Err(Error::ModelFormat(format!("unexpected format tag {other:?}"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            other => {
                return Err(Error::ModelFormat(format!(
                    "unsupported version {other:?}, expected {MODEL_VERSION}"
                )))
            }
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let model = file.model;
        if !model.init_value.is_finite() || !(model.learning_rate > 0.0 && model.learning_rate <= 1.0) {
            return Err(Error::ModelFormat("bad init value or learning rate".into()));
        }
        for tree in &model.trees {
            tree.check(model.feature_names.len())?;
        }
        Ok(model)
    }
}

/// Column-major copy of a row-major matrix with per-column sort orders.
pub struct ColumnIndex {
    n_rows: usize,
    n_cols: usize,
    columns: Vec<f64>,
    column_min: Vec<f64>,
    /// Rows whose value exceeds the column minimum, ascending by (value, row).
    above_min: Vec<Vec<u32>>,
}

impl ColumnIndex {
    pub fn from_rows(values: &[f64], n_rows: usize, n_cols: usize) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Dimension {
                expected: n_rows * n_cols,
                actual: values.len(),
            });
        }
        if n_rows > u32::MAX as usize {
            return Err(Error::InvalidInput("too many rows".into()));
        }
        let mut columns = vec![0.0; n_rows * n_cols];
        for i in 0..n_rows {
            for j in 0..n_cols {
                columns[j * n_rows + i] = values[i * n_cols + j];
            }
        }
        let mut column_min = Vec::with_capacity(n_cols);
        let mut above_min = Vec::with_capacity(n_cols);
        for j in 0..n_cols {
            let col = &columns[j * n_rows..(j + 1) * n_rows];
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let mut rows: Vec<u32> = (0..n_rows as u32).filter(|&r| col[r as usize] > min).collect();
            rows.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            column_min.push(min);
            above_min.push(rows);
        }
        Ok(ColumnIndex {
            n_rows,
            n_cols,
            columns,
            column_min,
            above_min,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col * self.n_rows + row]
    }
}

/// Mean computed around the first element, so equal inputs give that value exactly.
fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        let f = *first.get_or_insert(v);
        sum += v - f;
        n += 1;
    }
    match first {
        Some(f) => f + sum / n as f64,
        None => 0.0,
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

#[derive(Clone, Copy)]
struct NodeStats {
    count: usize,
    sum: f64,
    sum_sq: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct OpenNode {
    slot: usize,
    rows: Vec<u32>,
    stats: NodeStats,
}

/// Per-node scan state while sweeping one column.
#[derive(Clone, Copy)]
struct Sweep {
    above_count: usize,
    above_sum: f64,
    left_count: usize,
    left_sum: f64,
    prev: Option<f64>,
}

/// Fits one least-squares tree to `residuals` over the rows in `rows`.
///
/// Splits maximise the reduction in squared error over midpoints of
/// adjacent distinct values; ties keep the lowest feature index and then
/// the lowest threshold. A node stays a leaf when no split improves the
/// error by more than a relative 1e-12 of its total squared residual.
pub fn fit_tree(index: &ColumnIndex, rows: &[u32], residuals: &[f64], config: &TrainConfig) -> RegressionTree {
    let min_leaf = config.min_samples_leaf.max(1);
    let stats_of = |rows: &[u32]| {
        let mut s = NodeStats {
            count: rows.len(),
            sum: 0.0,
            sum_sq: 0.0,
        };
        for &r in rows {
            let v = residuals[r as usize];
            s.sum += v;
            s.sum_sq += v * v;
        }
        s
    };
    let leaf_value = |rows: &[u32]| shifted_mean(rows.iter().map(|&r| residuals[r as usize]));

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open = vec![OpenNode {
        slot: 0,
        stats: stats_of(rows),
        rows: rows.to_vec(),
    }];
    // Slot in `open` per row for the current level; usize::MAX when closed.
    let mut node_of = vec![usize::MAX; index.n_rows];

    for depth in 0..=config.max_depth {
        let mut splittable = Vec::new();
        for node in open.drain(..) {
            if depth < config.max_depth && node.rows.len() >= 2 * min_leaf {
                splittable.push(node);
            } else {
                nodes[node.slot] = Node::Leaf {
                    value: leaf_value(&node.rows),
                };
            }
        }
        if splittable.is_empty() {
            break;
        }
        for (k, node) in splittable.iter().enumerate() {
            for &r in &node.rows {
                node_of[r as usize] = k;
            }
        }

        let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
        let mut sweeps = vec![
            Sweep {
                above_count: 0,
                above_sum: 0.0,
                left_count: 0,
                left_sum: 0.0,
                prev: None,
            };
            splittable.len()
        ];
        for feature in 0..index.n_cols {
            let order = &index.above_min[feature];
            for s in sweeps.iter_mut() {
                s.above_count = 0;
                s.above_sum = 0.0;
            }
            for &r in order {
                let k = node_of[r as usize];
                if k != usize::MAX {
                    sweeps[k].above_count += 1;
                    sweeps[k].above_sum += residuals[r as usize];
                }
            }
            for (k, s) in sweeps.iter_mut().enumerate() {
                let st = splittable[k].stats;
                s.left_count = st.count - s.above_count;
                s.left_sum = st.sum - s.above_sum;
                s.prev = (s.left_count > 0).then_some(index.column_min[feature]);
            }
            for &r in order {
                let k = node_of[r as usize];
                if k == usize::MAX {
                    continue;
                }
                let v = index.value(r as usize, feature);
                let s = &mut sweeps[k];
                if let Some(prev) = s.prev {
                    let st = splittable[k].stats;
                    let right_count = st.count - s.left_count;
                    if v > prev && s.left_count >= min_leaf && right_count >= min_leaf {
                        let right_sum = st.sum - s.left_sum;
                        let gain = s.left_sum * s.left_sum / s.left_count as f64
                            + right_sum * right_sum / right_count as f64
                            - st.sum * st.sum / st.count as f64;
                        if best[k].is_none_or(|b| gain > b.gain) {
                            best[k] = Some(Candidate {
                                gain,
                                feature,
                                threshold: midpoint(prev, v),
                            });
                        }
                    }
                }
                s.left_count += 1;
                s.left_sum += residuals[r as usize];
                s.prev = Some(v);
            }
        }

        for node in &splittable {
            for &r in &node.rows {
                node_of[r as usize] = usize::MAX;
            }
        }
        for (node, cand) in splittable.into_iter().zip(best) {
            let floor = 1e-12 * node.stats.sum_sq;
            match cand {
                Some(c) if c.gain > floor && c.gain > 0.0 => {
                    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = node
                        .rows
                        .iter()
                        .partition(|&&r| index.value(r as usize, c.feature) <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[node.slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    open.push(OpenNode {
                        slot: left,
                        stats: stats_of(&left_rows),
                        rows: left_rows,
                    });
                    open.push(OpenNode {
                        slot: left + 1,
                        stats: stats_of(&right_rows),
                        rows: right_rows,
                    });
                }
                _ => {
                    nodes[node.slot] = Node::Leaf {
                        value: leaf_value(&node.rows),
                    }
                }
            }
        }
    }
    RegressionTree { nodes }
}

fn check_finite(matrix: &FeatureMatrix) -> Result<()> {
    let w = matrix.n_cols();
    if let Some(at) = matrix.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: at / w,
            column: matrix.feature_names()[at % w].clone(),
        });
    }
    Ok(())
}

/// Per-stage training mean squared error, recorded alongside the model.
pub struct FitTrace {
    pub model: GbdtModel,
    pub train_mse: Vec<f64>,
}

pub fn fit(matrix: &FeatureMatrix, config: &TrainConfig) -> Result<GbdtModel> {
    fit_traced(matrix, config).map(|t| t.model)
}

/// Like [`fit`], also returning the training MSE after stage 0 and after
/// each tree (length `n_trees + 1`).
pub fn fit_traced(matrix: &FeatureMatrix, config: &TrainConfig) -> Result<FitTrace> {
    config.validate()?;
    if matrix.n_rows() == 0 {
        return Err(Error::InvalidInput("cannot train on an empty matrix".into()));
    }
    check_finite(matrix)?;
    let n = matrix.n_rows();
    let index = ColumnIndex::from_rows(matrix.values(), n, matrix.n_cols())?;
    let targets: Vec<f64> = matrix.targets().iter().map(|&t| t as f64).collect();

    let init_value = shifted_mean(targets.iter().copied());
    let mut pred = vec![init_value; n];
    let mut residuals = vec![0.0; n];
    let mse = |pred: &[f64]| targets.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n as f64;
    let mut train_mse = Vec::with_capacity(config.n_trees + 1);
    train_mse.push(mse(&pred));

    let all_rows: Vec<u32> = (0..n as u32).collect();
    let sample_size = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trees = Vec::with_capacity(config.n_trees);

    for stage in 0..config.n_trees {
        for i in 0..n {
            residuals[i] = targets[i] - pred[i];
        }
        let rows = if sample_size < n {
            let mut picked: Vec<u32> = sample(&mut rng, n, sample_size).into_iter().map(|r| r as u32).collect();
            picked.sort_unstable();
            picked
        } else {
            all_rows.clone()
        };
        let tree = fit_tree(&index, &rows, &residuals, config);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += config.learning_rate * tree.predict(matrix.row(i));
        }
        train_mse.push(mse(&pred));
        log::trace!("stage {stage}: {} nodes, mse {}", tree.nodes.len(), train_mse[stage + 1]);
        trees.push(tree);
    }

    Ok(FitTrace {
        model: GbdtModel {
            init_value,
            learning_rate: config.learning_rate,
            feature_names: matrix.feature_names().to_vec(),
            trees,
        },
        train_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]], targets: &[u64]) -> FeatureMatrix {
        let w = rows.first().map_or(0, |r| r.len());
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("m{i}")).collect(),
            (0..w).map(|j| format!("x{j}")).collect(),
            rows.concat(),
            targets.to_vec(),
        )
        .unwrap()
    }

    fn exact(n_trees: usize, depth: usize) -> TrainConfig {
        TrainConfig {
            n_trees,
            learning_rate: 1.0,
            max_depth: depth,
            min_samples_leaf: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn two_row_split() {
        let m = matrix(&[&[0.0], &[1.0]], &[0, 10]);
        let model = fit(&m, &exact(1, 1)).unwrap();
        assert_eq!(
            model.trees[0].nodes[0],
            Node::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(model.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(model.predict(&[1.0]).unwrap(), 10.0);
    }

    #[test]
    fn zero_trees_predict_the_mean() {
        let m = matrix(&[&[0.0], &[1.0], &[5.0]], &[1, 2, 6]);
        let model = fit(&m, &TrainConfig { n_trees: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(model.init_value, 3.0);
        assert_eq!(model.predict(&[100.0]).unwrap(), 3.0);
    }

    #[test]
    fn constant_target_is_exact() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![f64::from(i), f64::from(i % 7)]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = matrix(&refs, &[12345; 30]);
        let model = fit(&m, &TrainConfig { n_trees: 20, ..TrainConfig::default() }).unwrap();
        for tree in &model.trees {
            assert_eq!(tree.nodes, vec![Node::Leaf { value: 0.0 }]);
        }
        for r in &rows {
            assert_eq!(model.predict(r).unwrap(), 12345.0);
        }
    }

    #[test]
    fn fit_tree_examples() {
        let idx = ColumnIndex::from_rows(&[1.0, 2.0, 3.0, 4.0], 4, 1).unwrap();
        let rows = [0, 1, 2, 3];
        let cfg = exact(1, 3);
        let tree = fit_tree(&idx, &rows, &[-5.0, -5.0, 5.0, 5.0], &cfg);
        assert_eq!(
            tree.nodes,
            vec![
                Node::Split {
                    feature: 0,
                    threshold: 2.5,
                    left: 1,
                    right: 2
                },
                Node::Leaf { value: -5.0 },
                Node::Leaf { value: 5.0 },
            ]
        );

        let flat = fit_tree(&idx, &rows, &[3.0; 4], &cfg);
        assert_eq!(flat.nodes, vec![Node::Leaf { value: 3.0 }]);

        let twins = ColumnIndex::from_rows(&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0], 4, 2).unwrap();
        let tree = fit_tree(&twins, &rows, &[-5.0, -5.0, 5.0, 5.0], &cfg);
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let idx = ColumnIndex::from_rows(&[1.0, 2.0, 3.0, 4.0], 4, 1).unwrap();
        let cfg = TrainConfig {
            min_samples_leaf: 3,
            ..exact(1, 3)
        };
        let tree = fit_tree(&idx, &[0, 1, 2, 3], &[-5.0, -5.0, 5.0, 5.0], &cfg);
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn lowest_threshold_wins_ties() {
        // Splitting at 1.5 or 2.5 leaves one odd row out either way; gains match.
        let idx = ColumnIndex::from_rows(&[1.0, 2.0, 3.0], 3, 1).unwrap();
        let tree = fit_tree(&idx, &[0, 1, 2], &[-1.0, 0.0, 1.0], &exact(1, 1));
        assert!(matches!(tree.nodes[0], Node::Split { threshold, .. } if threshold == 1.5));
    }

    #[test]
    fn full_depth_interpolates() {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![f64::from(i * 3 % 16)]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let targets: Vec<u64> = (0..16).map(|i| (i * i * 37 % 101) as u64).collect();
        let m = matrix(&refs, &targets);
        let model = fit(&m, &exact(1, 15)).unwrap();
        for (r, &t) in rows.iter().zip(&targets) {
            assert_eq!(model.predict(r).unwrap(), t as f64);
        }
        assert!(model.trees[0].depth() <= 15);
    }

    #[test]
    fn predict_checks_width() {
        let m = matrix(&[&[0.0], &[1.0]], &[0, 10]);
        let model = fit(&m, &exact(1, 1)).unwrap();
        assert!(matches!(model.predict(&[0.0, 1.0]), Err(Error::Dimension { .. })));
        let empty = GbdtModel {
            init_value: 7.0,
            learning_rate: 0.1,
            feature_names: vec!["a".into()],
            trees: vec![],
        };
        assert_eq!(empty.predict(&[123.0]).unwrap(), 7.0);
    }

    #[test]
    fn rejects_bad_training_input() {
        let empty = FeatureMatrix::new(vec![], vec!["x".into()], vec![], vec![]).unwrap();
        assert!(fit(&empty, &TrainConfig::default()).is_err());
        let m = matrix(&[&[0.0, 1.0], &[1.0, f64::NAN]], &[0, 1]);
        match fit(&m, &TrainConfig::default()) {
            Err(Error::NonFinite { row, column }) => assert_eq!((row, column.as_str()), (1, "x1")),
            other => panic!("{other:?}"),
        }
        let bad = TrainConfig {
            learning_rate: 1.5,
            ..TrainConfig::default()
        };
        assert!(fit(&matrix(&[&[0.0]], &[1]), &bad).is_err());
    }

    #[test]
    fn load_rejects_damage() {
        let m = matrix(&[&[0.0], &[1.0], &[2.0]], &[0, 10, 20]);
        let model = fit(&m, &exact(3, 2)).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(GbdtModel::load(bytes.as_slice()).unwrap(), model);
        assert!(GbdtModel::load(&bytes[..bytes.len() / 2]).is_err());
        let text = String::from_utf8(bytes).unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(GbdtModel::load(bumped.as_bytes()), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn subsampling_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![f64::from(i % 13), f64::from(i % 5)]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let targets: Vec<u64> = (0..60).map(|i| (i * 7 % 23) as u64).collect();
        let m = matrix(&refs, &targets);
        let cfg = TrainConfig {
            n_trees: 10,
            subsample: 0.5,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = fit(&m, &cfg).unwrap();
        assert_eq!(a.to_bytes(), fit(&m, &cfg).unwrap().to_bytes());
        let b = fit(&m, &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, b);
    }
}
