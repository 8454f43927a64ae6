//! Distance-matrix construction and the parameter-free density clustering
//! that backs the upload filter: cosine similarities, total-sum-of-squares
//! distances between similarity rows, self-tuned radius and density
//! thresholds, and deterministic majority selection.

use crate::mpc::backend::{Backend, SecScalar, SecVec};
use crate::mpc::LABEL_ADJACENCY;
use crate::{Error, Result};

/// Cluster label for points that belong to no cluster.
pub const NOISE: i32 = -1;
const UNVISITED: i32 = -2;

/// What a distance matrix's entries mean.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MatrixKind {
    /// Pairwise cosine similarity with a zeroed diagonal.
    Cosine,
    /// Squared row-difference totals of a cosine matrix.
    Tss,
}

/// Dense symmetric matrix with a zero diagonal.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    pub kind: MatrixKind,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize, kind: MatrixKind) -> Self {
        Self { n, kind, values: vec![0.0; n * n] }
    }

    /// Builds a matrix from explicit rows; intended for tests and tooling.
    pub fn from_rows(rows: &[Vec<f64>], kind: MatrixKind) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n, kind);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch { left: row.len(), right: n });
            }
            m.values[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Self-tuned clustering parameters.
#[derive(Clone, Copy, Debug)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

/// Per-point labels (NOISE or a cluster id) plus the majority index set.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    pub labels: Vec<i32>,
    pub majority: Vec<usize>,
}

/// Plaintext cosine matrix over unit (or zero) vectors: entry (i,j) is the
/// dot product for i != j, and the diagonal is zero.
pub fn cosine_matrix_plain(unit_vectors: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let n = unit_vectors.len();
    let mut m = DistanceMatrix::zeros(n, MatrixKind::Cosine);
    for i in 0..n {
        for j in (i + 1)..n {
            if unit_vectors[j].len() != unit_vectors[i].len() {
                return Err(Error::LengthMismatch {
                    left: unit_vectors[j].len(),
                    right: unit_vectors[i].len(),
                });
            }
            let d: f64 = unit_vectors[i].iter().zip(&unit_vectors[j]).map(|(a, b)| a * b).sum();
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    Ok(m)
}

/// Entry (i,j) = sum over u of (m[i,u] - m[j,u])^2.
pub fn tss_matrix(m: &DistanceMatrix) -> DistanceMatrix {
    let n = m.n();
    let mut out = DistanceMatrix::zeros(n, MatrixKind::Tss);
    for i in 0..n {
        for j in (i + 1)..n {
            let t: f64 =
                (0..n).map(|u| (m.get(i, u) - m.get(j, u)) * (m.get(i, u) - m.get(j, u))).sum();
            out.set(i, j, t);
            out.set(j, i, t);
        }
    }
    out
}

/// Radius = mean over rows of the k-th smallest entry (k = n/2, zero-based,
/// diagonal included); density threshold = n/2 + 1.
pub fn auto_params(m_tss: &DistanceMatrix) -> DbscanParams {
    let n = m_tss.n();
    let k = n / 2;
    let mut eps = 0.0;
    for i in 0..n {
        let mut row = m_tss.row(i).to_vec();
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eps += row[k];
    }
    eps /= n as f64;
    DbscanParams { eps, min_pts: n / 2 + 1 }
}

/// Density clustering over a precomputed adjacency relation. Seeds expand
/// in ascending index order, so a border point in reach of several clusters
/// keeps the id of the first cluster that reaches it.
pub fn cluster_from_adjacency(adjacency: &[Vec<bool>], min_pts: usize) -> Vec<i32> {
    let n = adjacency.len();
    let degree = |p: usize| adjacency[p].iter().filter(|&&b| b).count();
    let mut labels = vec![UNVISITED; n];
    let mut next_id = 0;
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        if degree(p) < min_pts {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = next_id;
        let mut queue: std::collections::VecDeque<usize> =
            (0..n).filter(|&q| q != p && adjacency[p][q]).collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = next_id; // border point claimed by this cluster
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = next_id;
            if degree(q) >= min_pts {
                queue.extend((0..n).filter(|&r| r != q && adjacency[q][r]));
            }
        }
        next_id += 1;
    }
    if 2 * min_pts > n {
        assert_common_neighbor(adjacency, min_pts);
    }
    labels
}

/// With min_pts above n/2 any two core points must share a neighbor; this
/// holds by counting and is asserted on every clustering run.
fn assert_common_neighbor(adjacency: &[Vec<bool>], min_pts: usize) {
    let n = adjacency.len();
    let cores: Vec<usize> =
        (0..n).filter(|&p| adjacency[p].iter().filter(|&&b| b).count() >= min_pts).collect();
    for (a, &p) in cores.iter().enumerate() {
        for &q in &cores[a + 1..] {
            assert!(
                (0..n).any(|u| adjacency[p][u] && adjacency[q][u]),
                "core points {p} and {q} share no neighbor with min_pts {min_pts} of {n}"
            );
        }
    }
}

fn clusters_by_min_member(labels: &[i32]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let ids = labels.iter().copied().filter(|&l| l >= 0).max().map_or(0, |m| m as usize + 1);
    for id in 0..ids {
        groups.push(
            labels
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == id as i32)
                .map(|(i, _)| i)
                .collect(),
        );
    }
    // members are pushed in index order, so group[0] is the minimum
    groups.sort_by_key(|g| g[0]);
    groups
}

fn intra_distance(m: &DistanceMatrix, members: &[usize]) -> f64 {
    let mut total = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            total += m.get(i, j);
        }
    }
    total
}

/// Classical density clustering on a precomputed matrix: neighbors are the
/// points within eps (the point itself included), and the majority is the
/// largest cluster with ties broken by smaller total intra-cluster
/// distance, then by smallest member index.
pub fn cluster(m: &DistanceMatrix, p: &DbscanParams) -> ClusterResult {
    let n = m.n();
    let adjacency: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| m.get(i, j) <= p.eps).collect()).collect();
    let labels = cluster_from_adjacency(&adjacency, p.min_pts);
    let groups = clusters_by_min_member(&labels);
    let mut majority: &[usize] = &[];
    let mut best_intra = f64::INFINITY;
    for g in &groups {
        let better_size = g.len() > majority.len();
        let tied_size = g.len() == majority.len();
        if better_size || (tied_size && intra_distance(m, g) < best_intra) {
            majority = g;
            best_intra = intra_distance(m, g);
        }
    }
    ClusterResult { labels, majority: majority.to_vec() }
}

/// Square matrix of backend scalars with a zero diagonal.
pub struct SecMatrix {
    n: usize,
    entries: Vec<SecScalar>,
}

impl SecMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &SecScalar {
        &self.entries[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: SecScalar) {
        self.entries[i * self.n + j] = v;
    }

    fn zeros(backend: &Backend, n: usize) -> Self {
        Self { n, entries: vec![backend.zero_scalar(); n * n] }
    }
}

/// Cosine matrix under the backend; entries stay backend values and are
/// never opened here.
pub fn cosine_matrix(backend: &mut Backend, unit_vectors: &[SecVec]) -> Result<SecMatrix> {
    let n = unit_vectors.len();
    let mut m = SecMatrix::zeros(backend, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = backend.dot(&unit_vectors[i], &unit_vectors[j])?;
            m.set(i, j, d.clone());
            m.set(j, i, d);
        }
    }
    Ok(m)
}

/// Row-difference totals under the backend, one truncation per entry.
pub fn tss_matrix_sec(backend: &mut Backend, m: &SecMatrix) -> Result<SecMatrix> {
    let n = m.n();
    let mut out = SecMatrix::zeros(backend, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let diffs: Vec<SecScalar> =
                (0..n).map(|u| backend.sub_scalar(m.get(i, u), m.get(j, u))).collect::<Result<_>>()?;
            let t = backend.dot_scalars(&diffs, &diffs)?;
            out.set(i, j, t.clone());
            out.set(j, i, t);
        }
    }
    Ok(out)
}

/// k-th smallest (zero-based) of backend values, found by quickselect whose
/// order tests run through the comparison gate.
pub fn kth_smallest(backend: &mut Backend, values: &[SecScalar], k: usize) -> Result<SecScalar> {
    let mut items: Vec<SecScalar> = values.to_vec();
    let mut k = k;
    loop {
        if items.len() == 1 {
            return Ok(items.pop().expect("nonempty"));
        }
        let pivot = items[items.len() / 2].clone();
        let mut less = Vec::new();
        let mut equal = 0usize;
        let mut greater = Vec::new();
        for it in items {
            if backend.less_than(&it, &pivot, LABEL_ADJACENCY)? {
                less.push(it);
            } else if backend.less_than(&pivot, &it, LABEL_ADJACENCY)? {
                greater.push(it);
            } else {
                equal += 1;
            }
        }
        if k < less.len() {
            items = less;
        } else if k < less.len() + equal {
            return Ok(pivot);
        } else {
            k -= less.len() + equal;
            items = greater;
        }
    }
}

fn majority_sec(
    backend: &mut Backend,
    labels: &[i32],
    tss: &SecMatrix,
) -> Result<Vec<usize>> {
    let groups = clusters_by_min_member(labels);
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let max_size = groups.iter().map(Vec::len).max().expect("nonempty");
    let tied: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() == max_size).collect();
    let mut best = tied[0];
    if tied.len() > 1 {
        let intra = |backend: &mut Backend, members: &[usize]| -> Result<SecScalar> {
            let mut total = backend.zero_scalar();
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    total = backend.add_scalar(&total, tss.get(i, j))?;
                }
            }
            Ok(total)
        };
        let mut best_sum = intra(backend, best)?;
        for g in &tied[1..] {
            let sum = intra(backend, g)?;
            if backend.less_than(&sum, &best_sum, LABEL_ADJACENCY)? {
                best = g;
                best_sum = sum;
            }
        }
    }
    Ok(best.clone())
}

/// Full self-tuned pipeline under a backend: cosine matrix, row-difference
/// totals, radius from shared row medians, adjacency bits through the
/// comparison gate, clustering, majority selection. Returns the majority
/// indices and their count.
pub fn auto_dbscan(backend: &mut Backend, unit_vectors: &[SecVec]) -> Result<(Vec<usize>, usize)> {
    let n = unit_vectors.len();
    if n < 2 {
        return Err(Error::EmptyInput("auto_dbscan needs at least two vectors"));
    }
    let cos = cosine_matrix(backend, unit_vectors)?;
    let tss = tss_matrix_sec(backend, &cos)?;
    let k = n / 2;
    let min_pts = n / 2 + 1;
    // eps = (sum of row k-th smallest) / n; adjacency compares n*d <= sum
    // instead, which needs no division
    let mut median_sum = backend.zero_scalar();
    for i in 0..n {
        let row: Vec<SecScalar> = (0..n).map(|u| tss.get(i, u).clone()).collect();
        let med = kth_smallest(backend, &row, k)?;
        median_sum = backend.add_scalar(&median_sum, &med)?;
    }
    let mut adjacency = vec![vec![false; n]; n];
    for (i, row) in adjacency.iter_mut().enumerate() {
        row[i] = true; // self distance 0 <= eps always
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scaled = backend.scale_int(tss.get(i, j), n as u64);
            // d <= eps  <=>  !(eps < d)  <=>  !(sum < n*d)
            let outside = backend.less_than(&median_sum, &scaled, LABEL_ADJACENCY)?;
            adjacency[i][j] = !outside;
            adjacency[j][i] = !outside;
        }
    }
    let labels = cluster_from_adjacency(&adjacency, min_pts);
    let majority = majority_sec(backend, &labels, &tss)?;
    let count = majority.len();
    Ok((majority, count))
}
