//! Inducing-point selection (Lloyd's k-means with k-means++ seeding) and
//! exact nearest-neighbor queries over the selected points (KD-tree).
//!
//! Determinism matters here: neighbor supports feed the sparse-weight
//! optimization, so ties break by point id and k-means is a pure function of
//! `(data, m, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, DenseMatrix};
use crate::scalar::Real;

const LEAF_SIZE: usize = 16;
const MAX_LLOYD_ITERS: usize = 100;

/// Ordered nearest-neighbor query result (nearest first).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList<T> {
    /// Point ids, nearest first; ties broken by smaller id.
    pub indices: Vec<usize>,
    /// Matching Euclidean distances, non-decreasing.
    pub distances: Vec<T>,
}

#[derive(Debug, Clone)]
enum Node<T> {
    Split {
        dim: usize,
        value: T,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

/// Static KD-tree over a point set: median split on the widest-spread
/// dimension, exact search.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<T>,
    dim: usize,
    len: usize,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    root: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate<T> {
    dist_sq: T,
    id: usize,
}

impl<T: Real> Candidate<T> {
    fn worse_than(&self, other: &Self) -> bool {
        match self.dist_sq.partial_cmp(&other.dist_sq).expect("finite distance") {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => self.id > other.id,
        }
    }
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &DenseMatrix<T>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::contract("KD-tree needs at least one point"));
        }
        if !points.is_finite() {
            return Err(Error::contract("KD-tree points must be finite"));
        }
        let mut tree = KdTree {
            points: points.as_slice().to_vec(),
            dim: points.cols(),
            len: points.rows(),
            order: (0..points.rows()).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        let mut order = std::mem::take(&mut tree.order);
        tree.root = tree.build_range(&mut order, 0);
        tree.order = order;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn point(&self, id: usize) -> &[T] {
        &self.points[id * self.dim..(id + 1) * self.dim]
    }

    fn build_range(&mut self, order: &mut [usize], offset: usize) -> usize {
        if order.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: offset,
                end: offset + order.len(),
            });
            return self.nodes.len() - 1;
        }
        // Widest-spread dimension.
        let mut split_dim = 0;
        let mut best_spread = T::neg_infinity();
        for d in 0..self.dim {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for &id in order.iter() {
                let v = self.point(id)[d];
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                split_dim = d;
            }
        }
        let mid = order.len() / 2;
        let key = |id: usize, pts: &[T], dim: usize| pts[id * dim + split_dim];
        {
            let pts = &self.points;
            let dim = self.dim;
            order.select_nth_unstable_by(mid, |&a, &b| {
                key(a, pts, dim)
                    .partial_cmp(&key(b, pts, dim))
                    .expect("finite coordinates")
                    .then(a.cmp(&b))
            });
        }
        let split_value = self.point(order[mid])[split_dim];
        let (left_ids, right_ids) = order.split_at_mut(mid);
        let left = self.build_range(left_ids, offset);
        let right = self.build_range(right_ids, offset + mid);
        self.nodes.push(Node::Split {
            dim: split_dim,
            value: split_value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    /// Exact k-nearest-neighbors of `query`. Requests larger than the point
    /// count return every point. Ties break by smaller id, matching a
    /// linear scan.
    pub fn knn(&self, query: &[T], k: usize) -> Result<NeighborList<T>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "knn query dimension",
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::contract("knn requires k >= 1"));
        }
        let k = k.min(self.len);
        let mut best: Vec<Candidate<T>> = Vec::with_capacity(k + 1);
        self.search(self.root, query, k, &mut best);
        best.sort_by(|a, b| {
            a.dist_sq
                .partial_cmp(&b.dist_sq)
                .expect("finite distance")
                .then(a.id.cmp(&b.id))
        });
        Ok(NeighborList {
            indices: best.iter().map(|c| c.id).collect(),
            distances: best.iter().map(|c| c.dist_sq.sqrt()).collect(),
        })
    }

    fn search(&self, node: usize, query: &[T], k: usize, best: &mut Vec<Candidate<T>>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[*start..*end] {
                    let cand = Candidate {
                        dist_sq: dist_sq(query, self.point(id)),
                        id,
                    };
                    if best.len() < k {
                        best.push(cand);
                        if best.len() == k {
                            // Establish the current worst for pruning.
                            best.sort_by(|a, b| {
                                a.dist_sq
                                    .partial_cmp(&b.dist_sq)
                                    .expect("finite distance")
                                    .then(a.id.cmp(&b.id))
                            });
                        }
                    } else if best[k - 1].worse_than(&cand) {
                        best[k - 1] = cand;
                        let mut i = k - 1;
                        while i > 0 && best[i - 1].worse_than(&best[i]) {
                            best.swap(i - 1, i);
                            i -= 1;
                        }
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let delta = query[*dim] - *value;
                let (near, far) = if delta < T::zero() {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, k, best);
                // Visit the far side unless the splitting plane is strictly
                // farther than the current worst candidate (<= keeps
                // equal-distance smaller ids reachable).
                if best.len() < k || delta * delta <= best[k - 1].dist_sq {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

/// Inducing points plus their KD-tree index. Immutable after construction.
#[derive(Debug, Clone)]
pub struct InducingSet<T> {
    points: DenseMatrix<T>,
    tree: KdTree<T>,
}

impl<T: Real> InducingSet<T> {
    pub fn from_points(points: DenseMatrix<T>) -> Result<Self> {
        let tree = KdTree::build(&points)?;
        Ok(InducingSet { points, tree })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &DenseMatrix<T> {
        &self.points
    }

    pub fn point(&self, id: usize) -> &[T] {
        self.points.row(id)
    }

    /// Exact `b`-nearest inducing points to `query`.
    pub fn knn(&self, query: &[T], b: usize) -> Result<NeighborList<T>> {
        self.tree.knn(query, b)
    }
}

/// Result of [`kmeans_with_trace`]: centroids plus the within-cluster
/// sum-of-squares after each assignment step.
#[derive(Debug, Clone)]
pub struct KmeansTrace<T> {
    pub wcss: Vec<T>,
    pub iterations: usize,
}

/// Select `m` inducing points as k-means centroids of the rows of `x`.
///
/// Lloyd's algorithm with k-means++ seeding, at most 100 iterations,
/// convergence when no centroid moves more than `1e-9 * data spread`.
/// Deterministic for a fixed seed. Empty clusters are re-seeded at the point
/// farthest from its assigned centroid.
pub fn kmeans<T: Real>(x: &DenseMatrix<T>, m: usize, seed: u64) -> Result<InducingSet<T>> {
    kmeans_with_trace(x, m, seed).map(|(set, _)| set)
}

pub fn kmeans_with_trace<T: Real>(
    x: &DenseMatrix<T>,
    m: usize,
    seed: u64,
) -> Result<(InducingSet<T>, KmeansTrace<T>)> {
    let n = x.rows();
    let d = x.cols();
    if m == 0 {
        return Err(Error::contract("kmeans requires m >= 1"));
    }
    if m > n {
        return Err(Error::contract(format!(
            "kmeans requires m <= n (m={m}, n={n})"
        )));
    }
    if !x.is_finite() {
        return Err(Error::contract("kmeans input must be finite"));
    }
    if m == n {
        // Every point is its own centroid; Lloyd's fixed point with WCSS 0.
        let set = InducingSet::from_points(x.clone())?;
        return Ok((
            set,
            KmeansTrace {
                wcss: vec![T::zero()],
                iterations: 0,
            },
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(x, m, &mut rng);
    let move_tol = T::cast(1e-9) * data_spread(x);

    let mut assign = vec![0usize; n];
    let mut wcss_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..MAX_LLOYD_ITERS {
        iterations += 1;
        // Assignment step (ties to the smaller centroid id).
        let mut wcss = T::zero();
        let mut counts = vec![0usize; m];
        for i in 0..n {
            let xi = x.row(i);
            let mut best = T::infinity();
            let mut best_c = 0;
            for (c, cent) in centroids.iter().enumerate() {
                let dsq = dist_sq(xi, cent);
                if dsq < best {
                    best = dsq;
                    best_c = c;
                }
            }
            assign[i] = best_c;
            counts[best_c] += 1;
            wcss += best;
        }

        // Re-seed empty clusters at the point farthest from its assigned
        // centroid. Repair can empty another cluster, so loop until stable.
        let mut repairs = 0;
        while let Some(c) = (0..m).find(|&c| counts[c] == 0) {
            repairs += 1;
            if repairs > m {
                break;
            }
            let mut far_i = 0;
            let mut far_d = T::neg_infinity();
            for i in 0..n {
                let dsq = dist_sq(x.row(i), &centroids[assign[i]]);
                if dsq > far_d {
                    far_d = dsq;
                    far_i = i;
                }
            }
            if far_d <= T::zero() {
                // Only duplicate points remain; the cluster stays empty.
                break;
            }
            counts[assign[far_i]] -= 1;
            wcss -= far_d;
            centroids[c] = x.row(far_i).to_vec();
            assign[far_i] = c;
            counts[c] = 1;
        }
        wcss_trace.push(wcss);

        // Update step: centroid <- mean of its cluster.
        let mut sums = vec![vec![T::zero(); d]; m];
        for i in 0..n {
            let xi = x.row(i);
            let s = &mut sums[assign[i]];
            for (acc, &v) in s.iter_mut().zip(xi) {
                *acc += v;
            }
        }
        let mut max_move = T::zero();
        for c in 0..m {
            if counts[c] == 0 {
                continue;
            }
            let inv = T::one() / T::cast(counts[c] as f64);
            let mut moved = T::zero();
            for (old, acc) in centroids[c].iter_mut().zip(&sums[c]) {
                let new = *acc * inv;
                let delta = (new - *old).abs();
                if delta > moved {
                    moved = delta;
                }
                *old = new;
            }
            if moved > max_move {
                max_move = moved;
            }
        }
        if max_move <= move_tol {
            break;
        }
    }

    let mut pts = DenseMatrix::zeros(m, d);
    for (c, cent) in centroids.iter().enumerate() {
        pts.row_mut(c).copy_from_slice(cent);
    }
    let set = InducingSet::from_points(pts)?;
    Ok((
        set,
        KmeansTrace {
            wcss: wcss_trace,
            iterations,
        },
    ))
}

fn data_spread<T: Real>(x: &DenseMatrix<T>) -> T {
    let mut spread = T::zero();
    for d in 0..x.cols() {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..x.rows() {
            let v = x.get(i, d);
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        if hi - lo > spread {
            spread = hi - lo;
        }
    }
    if spread > T::zero() {
        spread
    } else {
        T::one()
    }
}

/// k-means++ seeding: first centroid uniform, then proportional to the
/// squared distance from the nearest chosen centroid.
fn seed_plus_plus<T: Real>(x: &DenseMatrix<T>, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = x.rows();
    let first = rng.random_range(0..n);
    let mut centroids = vec![x.row(first).to_vec()];
    let mut d2: Vec<T> = (0..n).map(|i| dist_sq(x.row(i), x.row(first))).collect();
    while centroids.len() < m {
        let total: f64 = d2.iter().map(|v| v.as_f64()).sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in d2.iter().enumerate() {
                let wf = w.as_f64();
                if wf <= 0.0 {
                    continue;
                }
                chosen = Some(i);
                r -= wf;
                if r <= 0.0 {
                    break;
                }
            }
            chosen.expect("positive total weight implies a positive entry")
        } else {
            // All mass on already-chosen (duplicate) points: take the first
            // index not yet selected, for determinism.
            (0..n)
                .find(|i| !centroids.iter().any(|c| c.as_slice() == x.row(*i)))
                .unwrap_or(0)
        };
        centroids.push(x.row(next).to_vec());
        for i in 0..n {
            let dn = dist_sq(x.row(i), x.row(next));
            if dn < d2[i] {
                d2[i] = dn;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    fn linear_scan_knn(points: &DenseMatrix<f64>, query: &[f64], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..points.rows())
            .map(|i| (dist_sq(points.row(i), query), i))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.truncate(k.min(points.rows()));
        all.into_iter().map(|(_, i)| i).collect()
    }

    #[test]
    fn knn_on_line() {
        let pts = DenseMatrix::<f64>::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let set = InducingSet::from_points(pts).unwrap();
        let nn = set.knn(&[1.2], 2).unwrap();
        assert_eq!(nn.indices, vec![1, 2]);
        assert!((nn.distances[0] - 0.2).abs() < 1e-12);
        assert!((nn.distances[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn knn_exact_hit() {
        let pts = DenseMatrix::from_vec(3, 1, vec![-1.0, 0.5, 2.0]).unwrap();
        let set = InducingSet::from_points(pts).unwrap();
        let nn = set.knn(&[0.5], 1).unwrap();
        assert_eq!(nn.indices, vec![1]);
        assert_eq!(nn.distances[0], 0.0);
    }

    #[test]
    fn knn_request_larger_than_set_returns_all() {
        let pts = DenseMatrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let set = InducingSet::from_points(pts).unwrap();
        let nn = set.knn(&[0.9], 10).unwrap();
        assert_eq!(nn.indices.len(), 3);
        assert_eq!(nn.indices, vec![1, 0, 2]);
    }

    #[test]
    fn knn_matches_linear_scan_random() {
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(42);
        let pts = DenseMatrix::from_fn(200, 5, |_, _| rng.random_range(-1.0..1.0));
        let tree = KdTree::build(&pts).unwrap();
        for _ in 0..50 {
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(-1.2..1.2)).collect();
            let got = tree.knn(&q, 7).unwrap();
            let want = linear_scan_knn(&pts, &q, 7);
            assert_eq!(got.indices, want);
        }
    }

    #[test]
    fn knn_tie_break_by_smaller_id() {
        // Duplicate points at the same distance: ids 1 and 2 coincide.
        let pts = DenseMatrix::from_vec(4, 1, vec![0.0, 1.0, 1.0, 5.0]).unwrap();
        let tree = KdTree::build(&pts).unwrap();
        let nn = tree.knn(&[1.0], 2).unwrap();
        assert_eq!(nn.indices, vec![1, 2]);
        // Symmetric ties around the query resolve to the smaller id too.
        let pts = DenseMatrix::from_vec(3, 1, vec![-1.0, 1.0, 3.0]).unwrap();
        let tree = KdTree::build(&pts).unwrap();
        let nn = tree.knn(&[0.0], 1).unwrap();
        assert_eq!(nn.indices, vec![0]);
        let nn = tree.knn(&[2.0], 1).unwrap();
        assert_eq!(nn.indices, vec![1]);
    }

    #[test]
    fn kmeans_two_well_separated_clusters() {
        let x = DenseMatrix::from_vec(4, 1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let set = kmeans(&x, 2, 7).unwrap();
        let mut cs: Vec<f64> = (0..2).map(|c| set.point(c)[0]).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((cs[0] - 0.05).abs() < 1e-12, "{cs:?}");
        assert!((cs[1] - 10.05).abs() < 1e-12, "{cs:?}");
    }

    #[test]
    fn kmeans_m_equals_n_returns_points() {
        let x = DenseMatrix::from_vec(3, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 0.5]).unwrap();
        let (set, trace) = kmeans_with_trace(&x, 3, 0).unwrap();
        assert_eq!(set.points().as_slice(), x.as_slice());
        assert_eq!(trace.wcss, vec![0.0]);
    }

    #[test]
    fn kmeans_single_centroid_is_mean() {
        let x = DenseMatrix::<f64>::from_vec(4, 2, vec![0.0, 2.0, 2.0, 0.0, 4.0, 2.0, 2.0, 4.0])
            .unwrap();
        let set = kmeans(&x, 1, 3).unwrap();
        assert!((set.point(0)[0] - 2.0).abs() < 1e-12);
        assert!((set.point(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_global_optimum_on_small_instance_via_brute_force() {
        // Enumerate all 2-partitions of 6 points and compare WCSS.
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(5);
        let x = DenseMatrix::from_fn(6, 1, |i, _| {
            if i < 3 {
                rng.random_range(0.0..0.5)
            } else {
                rng.random_range(8.0..8.5)
            }
        });
        let set = kmeans(&x, 2, 11).unwrap();
        let wcss_of = |mask: u32| -> f64 {
            let mut groups = [Vec::new(), Vec::new()];
            for i in 0..6 {
                groups[((mask >> i) & 1) as usize].push(x.get(i, 0));
            }
            if groups[0].is_empty() || groups[1].is_empty() {
                return f64::INFINITY;
            }
            groups
                .iter()
                .map(|g| {
                    let mean = g.iter().sum::<f64>() / g.len() as f64;
                    g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                })
                .sum()
        };
        let best = (1..63u32).map(wcss_of).fold(f64::INFINITY, f64::min);
        let got: f64 = (0..6)
            .map(|i| {
                let xi = x.row(i);
                (0..2)
                    .map(|c| dist_sq(xi, set.point(c)))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        assert!((got - best).abs() < 1e-9, "kmeans {got} vs brute-force {best}");
    }

    #[test]
    fn kmeans_wcss_non_increasing_and_deterministic() {
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(17);
        let x = DenseMatrix::from_fn(120, 3, |_, _| rng.random_range(-5.0..5.0));
        let (set1, trace) = kmeans_with_trace(&x, 10, 99).unwrap();
        for w in trace.wcss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "wcss increased: {w:?}");
        }
        let (set2, _) = kmeans_with_trace(&x, 10, 99).unwrap();
        assert_eq!(set1.points().as_slice(), set2.points().as_slice());
    }

    #[test]
    fn kmeans_contract_violations() {
        let x = DenseMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(kmeans(&x, 0, 0).is_err());
        assert!(kmeans(&x, 3, 0).is_err());
    }
}
