use serde::{Deserialize, Serialize};

/// Tree node; `feature` is a column position in the matrix the tree was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Squared-error reduction achieved by this split.
        gain: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: Node,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            root: Node::Leaf { value },
        }
    }

    /// Leaf value reached by `x`; `x[feature] <= threshold` goes left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Visits every split as `(feature, gain)`.
    pub fn splits(&self, mut visit: impl FnMut(usize, f64)) {
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            if let Node::Split {
                feature,
                gain,
                left,
                right,
                ..
            } = n
            {
                visit(*feature, *gain);
                stack.push(right);
                stack.push(left);
            }
        }
    }
}

/// Between-group sum of squares for splitting `n` rows summing to `total`
/// into a left part of `n_left` rows summing to `sum_left`.
pub(crate) fn split_gain(n_left: usize, sum_left: f64, n: usize, total: f64) -> f64 {
    let n_right = n - n_left;
    let diff = sum_left / n_left as f64 - (total - sum_left) / n_right as f64;
    (n_left * n_right) as f64 / n as f64 * diff * diff
}

/// Midpoint of two consecutive distinct values that still separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Gains this close to the best are ties, resolved by feature id then
/// threshold. The scale is the node's sum of squared residuals, which bounds
/// the rounding error of any gain.
pub(crate) fn tie_tolerance(sum_sq: f64) -> f64 {
    1e-10 * sum_sq
}

/// Column-major training data shared by every tree of one fit.
pub(crate) struct Columns<'a> {
    pub values: &'a [Vec<f64>],
    /// Original feature id of each column.
    pub ids: &'a [usize],
    /// Rows of each column sorted by (value, row).
    pub presorted: Vec<Vec<u32>>,
}

impl<'a> Columns<'a> {
    pub fn new(values: &'a [Vec<f64>], ids: &'a [usize]) -> Self {
        let presorted = values
            .iter()
            .map(|col| {
                let mut order: Vec<u32> = (0..col.len() as u32).collect();
                order.sort_by(|&a, &b| {
                    col[a as usize]
                        .total_cmp(&col[b as usize])
                        .then(a.cmp(&b))
                });
                order
            })
            .collect();
        Columns {
            values,
            ids,
            presorted,
        }
    }
}

pub(crate) struct Grower<'a> {
    pub columns: &'a Columns<'a>,
    pub residuals: &'a [f64],
    pub max_depth: usize,
    pub min_leaf: usize,
}

struct NodeRows {
    /// Ascending row indices.
    rows: Vec<u32>,
    /// The same rows in each column's sort order.
    sorted: Vec<Vec<u32>>,
}

struct Choice {
    column: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    pub fn grow(&self) -> RegressionTree {
        let n = self.residuals.len() as u32;
        let root = NodeRows {
            rows: (0..n).collect(),
            sorted: self.columns.presorted.clone(),
        };
        RegressionTree {
            root: self.node(root, 0),
        }
    }

    fn node(&self, part: NodeRows, depth: usize) -> Node {
        let sum: f64 = part.rows.iter().map(|&i| self.residuals[i as usize]).sum();
        let n = part.rows.len();
        let choice = if depth < self.max_depth && n >= 2 * self.min_leaf {
            self.choose(&part, sum)
        } else {
            None
        };
        let Some(Choice {
            column,
            threshold,
            gain,
        }) = choice
        else {
            return Node::Leaf {
                value: sum / n as f64,
            };
        };
        let col = &self.columns.values[column];
        let goes_left = |i: &u32| col[*i as usize] <= threshold;
        let (rows_l, rows_r): (Vec<u32>, Vec<u32>) = part.rows.iter().partition(|i| goes_left(i));
        let mut sorted_l = Vec::with_capacity(part.sorted.len());
        let mut sorted_r = Vec::with_capacity(part.sorted.len());
        for s in part.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = s.into_iter().partition(|i| goes_left(i));
            sorted_l.push(l);
            sorted_r.push(r);
        }
        let left = self.node(
            NodeRows {
                rows: rows_l,
                sorted: sorted_l,
            },
            depth + 1,
        );
        let right = self.node(
            NodeRows {
                rows: rows_r,
                sorted: sorted_r,
            },
            depth + 1,
        );
        Node::Split {
            feature: column,
            threshold,
            gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Calls `visit(threshold, gain)` for every admissible split of `column`
    /// in ascending threshold order.
    fn scan(&self, sorted: &[u32], column: usize, total: f64, mut visit: impl FnMut(f64, f64)) {
        let col = &self.columns.values[column];
        let n = sorted.len();
        let mut sum_left = 0.0;
        for k in 0..n - 1 {
            let (i, next) = (sorted[k] as usize, sorted[k + 1] as usize);
            sum_left += self.residuals[i];
            let n_left = k + 1;
            if n_left < self.min_leaf || n - n_left < self.min_leaf || col[i] >= col[next] {
                continue;
            }
            visit(midpoint(col[i], col[next]), split_gain(n_left, sum_left, n, total));
        }
    }

    fn choose(&self, part: &NodeRows, total: f64) -> Option<Choice> {
        let sum_sq: f64 = part
            .rows
            .iter()
            .map(|&i| self.residuals[i as usize].powi(2))
            .sum();
        let mut best = f64::NEG_INFINITY;
        for (column, sorted) in part.sorted.iter().enumerate() {
            self.scan(sorted, column, total, |_, g| best = best.max(g));
        }
        let tol = tie_tolerance(sum_sq);
        if !(best > tol) {
            return None;
        }
        let mut by_id: Vec<usize> = (0..part.sorted.len()).collect();
        by_id.sort_by_key(|&c| self.columns.ids[c]);
        for column in by_id {
            let mut hit = None;
            self.scan(&part.sorted[column], column, total, |threshold, gain| {
                if hit.is_none() && gain >= best - tol {
                    hit = Some((threshold, gain));
                }
            });
            if let Some((threshold, gain)) = hit {
                return Some(Choice {
                    column,
                    threshold,
                    gain,
                });
            }
        }
        unreachable!("the best gain came from some column")
    }
}
