//! Method of analogues: nearest reference windows and their successors.
//!
//! Windows are compared by squared Euclidean distance over the flattened
//! `m x n_s` block. Neighbours are ranked by `(distance, position)`, so
//! ties go to the earlier reference position. A k-d tree over all
//! reference windows answers queries; it prunes only on bounds that are
//! exact in floating point, so it returns the same neighbours as a linear
//! scan.

use super::{window_rows, ForecastError, Forecaster};
use crate::attractor::{squared_distance, ReferenceAttractor};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct KdTree {
    /// Window start positions, permuted so each leaf owns a contiguous run.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Points are windows `data[p * n_s .. p * n_s + dim]` for `p < n_points`.
fn coord(data: &[f64], n_s: usize, p: usize, j: usize) -> f64 {
    data[p * n_s + j]
}

impl KdTree {
    fn build(data: &[f64], n_s: usize, dim: usize, n_points: usize) -> Self {
        let mut tree = KdTree {
            order: (0..n_points).collect(),
            nodes: Vec::new(),
        };
        if n_points > 0 {
            tree.build_node(data, n_s, dim, 0, n_points);
        }
        tree
    }

    fn build_node(&mut self, data: &[f64], n_s: usize, dim: usize, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start: lo, end: hi });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        let pts = &mut self.order[lo..hi];
        let mut best = (0, -1.0);
        for j in 0..dim {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &p in pts.iter() {
                let c = coord(data, n_s, p, j);
                min = min.min(c);
                max = max.max(c);
            }
            if max - min > best.1 {
                best = (j, max - min);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let split_dim = best.0;
        let mid = (hi - lo) / 2;
        pts.select_nth_unstable_by(mid, |&a, &b| {
            coord(data, n_s, a, split_dim).total_cmp(&coord(data, n_s, b, split_dim))
        });
        let value = coord(data, n_s, pts[mid], split_dim);
        let left = self.build_node(data, n_s, dim, lo, lo + mid);
        let right = self.build_node(data, n_s, dim, lo + mid, hi);
        self.nodes[id] = Node::Split {
            dim: split_dim,
            value,
            left,
            right,
        };
        id
    }
}

/// Best `k` candidates so far, sorted by `(d2, position)`.
struct Knn {
    k: usize,
    best: Vec<(f64, usize)>,
}

impl Knn {
    fn new(k: usize) -> Self {
        Self {
            k,
            best: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.best.len() < self.k {
            f64::INFINITY
        } else {
            self.best[self.k - 1].0
        }
    }

    fn offer(&mut self, d2: f64, p: usize) {
        let key = (d2, p);
        if self.best.len() == self.k {
            let last = self.best[self.k - 1];
            if (key.0, key.1) >= (last.0, last.1) {
                return;
            }
            self.best.pop();
        }
        let at = self
            .best
            .partition_point(|&(d, q)| d < key.0 || (d == key.0 && q < key.1));
        self.best.insert(at, key);
    }
}

/// Analog forecaster over a reference trajectory with window length `m`
/// and `k` neighbours.
#[derive(Debug, Clone)]
pub struct AnalogForecaster {
    reference: ReferenceAttractor,
    m: usize,
    k: usize,
    tree: KdTree,
}

impl AnalogForecaster {
    pub fn new(reference: ReferenceAttractor, m: usize, k: usize) -> Result<Self, ForecastError> {
        if m == 0 || k == 0 {
            return Err(ForecastError::BadTask(format!("analog needs m >= 1 and k >= 1 (got m={m}, k={k})")));
        }
        let len = reference.len();
        if len < m + 1 {
            return Err(ForecastError::NoCandidates { lead: 1, len, m });
        }
        let n_s = reference.n_s();
        let tree = KdTree::build(reference.states().as_slice(), n_s, m * n_s, len - m + 1);
        Ok(Self {
            reference,
            m,
            k,
            tree,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference(&self) -> &ReferenceAttractor {
        &self.reference
    }

    fn check_window(&self, window: &[f64], n_s: usize) -> Result<(), ForecastError> {
        let rows = window_rows(window, n_s)?;
        if rows != self.m || n_s != self.reference.n_s() {
            return Err(ForecastError::WindowShape {
                got: window.len(),
                rows: self.m,
                n_s: self.reference.n_s(),
            });
        }
        Ok(())
    }

    fn admissible(&self, lead: usize, exclude: Option<usize>) -> impl Fn(usize) -> bool {
        let (m, len) = (self.m, self.reference.len());
        move |p| p + m - 1 + lead < len && exclude.is_none_or(|s| p.abs_diff(s) >= m)
    }

    /// Neighbour positions with squared distances, nearest first.
    pub fn neighbours(
        &self,
        window: &[f64],
        lead: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<(f64, usize)>, ForecastError> {
        self.check_window(window, self.reference.n_s())?;
        let ok = self.admissible(lead, exclude);
        let mut knn = Knn::new(self.k);
        if !self.tree.nodes.is_empty() {
            self.search(0, window, &ok, &mut knn);
        }
        self.finish(knn, lead)
    }

    /// Linear scan with the same ranking as [`Self::neighbours`].
    pub fn neighbours_brute_force(
        &self,
        window: &[f64],
        lead: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<(f64, usize)>, ForecastError> {
        self.check_window(window, self.reference.n_s())?;
        let ok = self.admissible(lead, exclude);
        let mut knn = Knn::new(self.k);
        for p in 0..self.tree.order.len() {
            if ok(p) {
                knn.offer(squared_distance(window, self.window_at(p)), p);
            }
        }
        self.finish(knn, lead)
    }

    fn finish(&self, knn: Knn, lead: usize) -> Result<Vec<(f64, usize)>, ForecastError> {
        if knn.best.is_empty() {
            return Err(ForecastError::NoCandidates {
                lead,
                len: self.reference.len(),
                m: self.m,
            });
        }
        Ok(knn.best)
    }

    fn window_at(&self, p: usize) -> &[f64] {
        self.reference.states().rows(p, p + self.m)
    }

    fn search(&self, node: usize, q: &[f64], ok: &impl Fn(usize) -> bool, knn: &mut Knn) {
        match self.tree.nodes[node] {
            Node::Leaf { start, end } => {
                for &p in &self.tree.order[start..end] {
                    if ok(p) {
                        knn.offer(squared_distance(q, self.window_at(p)), p);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, ok, knn);
                // every point across the plane has a coordinate term at
                // least diff^2, and the summed distance can only be larger
                if diff * diff <= knn.worst() {
                    self.search(far, q, ok, knn);
                }
            }
        }
    }

    /// Mean successor of the nearest windows; positions within `m` of
    /// `exclude` are skipped (for queries taken from the reference itself).
    pub fn predict_excluding(
        &self,
        window: &[f64],
        lead: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<f64>, ForecastError> {
        let nb = self.neighbours(window, lead, exclude)?;
        let states = self.reference.states();
        let succ = |p: usize| states.row(p + self.m - 1 + lead);
        let mut out = succ(nb[0].1).to_vec();
        for &(_, p) in &nb[1..] {
            for (o, v) in out.iter_mut().zip(succ(p)) {
                *o += v;
            }
        }
        if nb.len() > 1 {
            let k = nb.len() as f64;
            out.iter_mut().for_each(|o| *o /= k);
        }
        Ok(out)
    }
}

impl Forecaster for AnalogForecaster {
    fn name(&self) -> &str {
        "analog"
    }

    fn predict(&self, window: &[f64], n_s: usize, lead: usize) -> Result<Vec<f64>, ForecastError> {
        self.check_window(window, n_s)?;
        self.predict_excluding(window, lead, None)
    }
}

pub fn analog_forecast(
    forecaster: &AnalogForecaster,
    window: &[f64],
    n: usize,
) -> Result<Vec<f64>, ForecastError> {
    forecaster.predict_excluding(window, n, None)
}
