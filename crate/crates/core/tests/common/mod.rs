//! Shared helpers for the integration suites: a definition-based density
//! clustering oracle, the cluster-majority rule restated from scratch, and
//! the lazily computed attack-free baseline run.

use std::sync::OnceLock;

use fedveil::dbscan::{DistanceMatrix, NOISE};
use fedveil::harness::{self, RoundMetrics, Scenario};

/// Union-find keyed so that a set's representative is its smallest member.
struct MinUnion(Vec<usize>);

impl MinUnion {
    fn new(n: usize) -> Self {
        MinUnion((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut cur = i;
        while self.0[cur] != root {
            cur = std::mem::replace(&mut self.0[cur], root);
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Density clustering written straight from the definition, independently
/// of the implementation's seed-expansion mechanics. Neighborhoods are the
/// points within `eps` (self included); a point is core when its
/// neighborhood reaches `min_pts`. Clusters are the connected components
/// of the "two cores within eps of each other" relation, numbered in order
/// of their smallest core index. A non-core point joins the
/// lowest-numbered cluster holding a core within eps of it, else stays
/// noise.
pub fn brute_dbscan(m: &DistanceMatrix, eps: f64, min_pts: usize) -> Vec<i32> {
    let n = m.n();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| m.get(i, j) <= eps).collect())
        .collect();
    let core: Vec<bool> = (0..n).map(|i| neighbors[i].len() >= min_pts).collect();

    let mut sets = MinUnion::new(n);
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                sets.union(i, j);
            }
        }
    }

    let mut roots: Vec<usize> = (0..n)
        .filter(|&i| core[i])
        .map(|i| sets.find(i))
        .collect();
    roots.sort_unstable();
    roots.dedup();

    let mut labels = vec![NOISE; n];
    for i in 0..n {
        if core[i] {
            let root = sets.find(i);
            labels[i] = roots.iter().position(|&r| r == root).unwrap() as i32;
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        if let Some(id) = neighbors[i]
            .iter()
            .filter(|&&j| core[j])
            .map(|&j| labels[j])
            .min()
        {
            labels[i] = id;
        }
    }
    labels
}

/// The majority cluster per the documented tie-break: largest size, then
/// smallest total pairwise intra-cluster distance, then smallest member
/// index. Pair sums run in ascending index order to match the
/// implementation's float summation exactly.
pub fn brute_majority(m: &DistanceMatrix, labels: &[i32]) -> Vec<usize> {
    let ids = labels.iter().copied().max().unwrap_or(NOISE);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for id in 0..=ids.max(0) {
        if ids < 0 {
            break;
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == id).collect();
        if !members.is_empty() {
            groups.push(members);
        }
    }
    groups.sort_by_key(|g| g[0]);

    let intra = |members: &[usize]| -> f64 {
        let mut total = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                total += m.get(i, j);
            }
        }
        total
    };

    let mut best: Vec<usize> = Vec::new();
    let mut best_intra = f64::INFINITY;
    for g in &groups {
        if g.len() > best.len() || (g.len() == best.len() && intra(g) < best_intra) {
            best_intra = intra(g);
            best = g.clone();
        }
    }
    best
}

/// Final-round accuracies of the attack-free default scenario.
pub struct Baseline {
    pub ma_global: f64,
    pub ma_personalized: f64,
}

static BASELINE: OnceLock<Baseline> = OnceLock::new();

/// Runs the default scenario once per process; the comparison criteria all
/// measure against this in-run baseline.
pub fn baseline() -> &'static Baseline {
    BASELINE.get_or_init(|| {
        let result = harness::run_scenario(&Scenario::default()).expect("baseline run");
        let last = result.rows.last().expect("baseline produced no rounds");
        Baseline {
            ma_global: last.ma_global,
            ma_personalized: last.ma_personalized,
        }
    })
}

/// Builds the default scenario with key=value overrides, validated.
pub fn scenario(overrides: &[(&str, &str)]) -> Scenario {
    let mut s = Scenario::default();
    for (key, value) in overrides {
        s.set_key(key, value).expect("override key");
    }
    s.validate().expect("scenario must validate");
    s
}

pub fn final_row(rows: &[RoundMetrics]) -> &RoundMetrics {
    rows.last().expect("run produced no rounds")
}

/// Mean backdoor accuracy over the last `k` rounds.
pub fn mean_ba_last(rows: &[RoundMetrics], k: usize) -> f64 {
    let tail = &rows[rows.len().saturating_sub(k)..];
    tail.iter().map(|r| r.ba).sum::<f64>() / tail.len() as f64
}

/// Mean filter true-positive rate over rounds `from..=to` (1-based).
pub fn mean_tpr(rows: &[RoundMetrics], from: u32, to: u32) -> f64 {
    let picked: Vec<f64> = rows
        .iter()
        .filter(|r| r.round >= from && r.round <= to)
        .map(|r| r.filter_tpr)
        .collect();
    assert!(!picked.is_empty(), "no rounds in {from}..={to}");
    picked.iter().sum::<f64>() / picked.len() as f64
}
