//! Facility location and graph cut objectives with naive, lazy and
//! brute-force maximizers under a cardinality constraint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use itertools::Itertools;

use crate::artifact::{CoresetResult, FeatureMatrix, LabelVector};
use crate::error::{CoresetError, Result};
use crate::metrics::{similarity_matrix, CosineKernel, Similarity, SimilarityKind, DEFAULT_DENSE_CAP};
use crate::selection::{argmax_by, select_in_pools, Selection};

pub const DEFAULT_GC_LAMBDA: f64 = 0.5;
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// `f(S) = Σ_i max_{j∈S} s_ij`
    FacilityLocation,
    /// `f(S) = Σ_{i, j∈S} s_ij − λ Σ_{i∈S, j∈S} s_ij`
    GraphCut { lambda: f64 },
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FacilityLocation => "fl",
            Self::GraphCut { .. } => "gc",
        }
    }
}

#[derive(Clone, Copy)]
pub struct Objective<'a> {
    pub kind: ObjectiveKind,
    pub sim: &'a dyn Similarity,
}

impl<'a> Objective<'a> {
    pub fn new(kind: ObjectiveKind, sim: &'a dyn Similarity) -> Result<Self> {
        if let ObjectiveKind::GraphCut { lambda } = kind {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(CoresetError::arg(format!("graph cut lambda must be >= 0, got {lambda}")));
            }
        }
        Ok(Self { kind, sim })
    }

    pub fn len(&self) -> usize {
        self.sim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluate(&self, set: &[usize]) -> Result<f64> {
        let n = self.len();
        if let Some(&bad) = set.iter().find(|&&j| j >= n) {
            return Err(CoresetError::arg(format!("index {bad} out of range for ground set of {n}")));
        }
        if set.is_empty() {
            return Ok(0.0);
        }
        Ok(match self.kind {
            ObjectiveKind::FacilityLocation => (0..n)
                .map(|i| set.iter().map(|&j| self.sim.sim(i, j)).fold(f64::NEG_INFINITY, f64::max))
                .sum(),
            ObjectiveKind::GraphCut { lambda } => {
                let cut: f64 = (0..n).map(|i| set.iter().map(|&j| self.sim.sim(i, j)).sum::<f64>()).sum();
                let inner: f64 = set.iter().map(|&i| set.iter().map(|&j| self.sim.sim(i, j)).sum::<f64>()).sum();
                cut - lambda * inner
            }
        })
    }
}

/// Incremental marginal-gain bookkeeping for one greedy run.
struct GainState<'a> {
    obj: Objective<'a>,
    /// FL: best similarity of each point to the current set.
    cover: Vec<f64>,
    /// GC: column sums, and similarity of each point to the current set.
    col_sum: Vec<f64>,
    to_set: Vec<f64>,
}

impl<'a> GainState<'a> {
    fn new(obj: Objective<'a>) -> Self {
        let n = obj.len();
        let col_sum = match obj.kind {
            ObjectiveKind::GraphCut { .. } => (0..n).map(|j| (0..n).map(|i| obj.sim.sim(i, j)).sum()).collect(),
            ObjectiveKind::FacilityLocation => Vec::new(),
        };
        Self {
            obj,
            cover: vec![0.0; n],
            col_sum,
            to_set: vec![0.0; n],
        }
    }

    fn gain(&self, x: usize) -> f64 {
        match self.obj.kind {
            ObjectiveKind::FacilityLocation => self
                .cover
                .iter()
                .enumerate()
                .map(|(i, &c)| (self.obj.sim.sim(i, x) - c).max(0.0))
                .sum(),
            ObjectiveKind::GraphCut { lambda } => {
                self.col_sum[x] - lambda * (2.0 * self.to_set[x] + self.obj.sim.sim(x, x))
            }
        }
    }

    fn add(&mut self, x: usize) {
        let sim = self.obj.sim;
        match self.obj.kind {
            ObjectiveKind::FacilityLocation => {
                for (i, c) in self.cover.iter_mut().enumerate() {
                    *c = c.max(sim.sim(i, x));
                }
            }
            ObjectiveKind::GraphCut { .. } => {
                for (i, t) in self.to_set.iter_mut().enumerate() {
                    *t += sim.sim(i, x);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    /// Picks in order.
    pub order: Vec<usize>,
    /// Marginal gain of each pick.
    pub gains: Vec<f64>,
}

impl GreedyOutcome {
    pub fn value(&self) -> f64 {
        self.gains.iter().sum()
    }
}

struct Candidate {
    gain: f64,
    index: usize,
    fresh_at: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Greedy maximization for exactly `k` steps, even through negative gains.
/// Each step takes the largest marginal gain, ties to the lower index.
/// The lazy variant keeps stale gains as upper bounds in a max-heap and
/// produces the same sequence.
pub fn greedy_maximize(obj: Objective<'_>, k: usize, lazy: bool) -> Result<GreedyOutcome> {
    let n = obj.len();
    if k > n {
        return Err(CoresetError::Budget {
            k,
            available: n,
            context: Some(format!("{} greedy", obj.kind.name())),
        });
    }
    let mut state = GainState::new(obj);
    let mut order = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    if lazy {
        let mut heap: BinaryHeap<Candidate> = (0..n)
            .map(|index| Candidate {
                gain: state.gain(index),
                index,
                fresh_at: 0,
            })
            .collect();
        while order.len() < k {
            let top = heap.pop().expect("candidates remain while order.len() < n");
            if top.fresh_at == order.len() {
                state.add(top.index);
                order.push(top.index);
                gains.push(top.gain);
            } else {
                heap.push(Candidate {
                    gain: state.gain(top.index),
                    index: top.index,
                    fresh_at: order.len(),
                });
            }
        }
    } else {
        let mut taken = vec![false; n];
        while order.len() < k {
            let (best, gain) = argmax_by((0..n).filter(|&j| !taken[j]).map(|j| (j, state.gain(j))))
                .map(|j| (j, state.gain(j)))
                .expect("candidates remain while order.len() < n");
            taken[best] = true;
            state.add(best);
            order.push(best);
            gains.push(gain);
        }
    }
    Ok(GreedyOutcome { order, gains })
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at each step.
        acc = match acc.checked_mul((n - i) as u64) {
            Some(v) => v / (i as u64 + 1),
            None => return u64::MAX,
        };
    }
    acc
}

/// Exhaustive optimum over all `k`-subsets in lexicographic order; the
/// first subset attaining the maximum wins.
pub fn brute_force_optimum(obj: Objective<'_>, k: usize) -> Result<(Vec<usize>, f64)> {
    let n = obj.len();
    if k > n {
        return Err(CoresetError::Budget {
            k,
            available: n,
            context: Some("brute force".into()),
        });
    }
    let count = binomial(n, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(CoresetError::arg(format!(
            "C({n}, {k}) = {count} subsets exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for set in (0..n).combinations(k) {
        let value = obj.evaluate(&set)?;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((set, value));
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Lazy greedy over cosine-shifted feature similarities inside each pool.
/// Pools up to [`DEFAULT_DENSE_CAP`] use a dense matrix; larger ones
/// compute similarities on demand.
pub fn submodular_select(
    features: &FeatureMatrix,
    labels: &LabelVector,
    sel: Selection,
    kind: ObjectiveKind,
) -> Result<CoresetResult> {
    let all = features.to_f64();
    let mut value = 0.0;
    let mut result = select_in_pools(kind.name(), labels, sel, |pool, _| {
        let rows = all.select(ndarray::Axis(0), &pool.indices);
        let outcome = if pool.indices.len() <= DEFAULT_DENSE_CAP {
            let sim = similarity_matrix(rows.view(), SimilarityKind::CosineShifted)?;
            greedy_maximize(Objective::new(kind, &sim)?, pool.quota, true)?
        } else {
            let sim = CosineKernel::new(rows.view())?;
            greedy_maximize(Objective::new(kind, &sim)?, pool.quota, true)?
        };
        value += outcome.value();
        Ok(outcome.order.into_iter().map(|j| (pool.indices[j], 1.0)).collect())
    })?;
    result.metadata.insert("objective_value".into(), serde_json::json!(value));
    if let ObjectiveKind::GraphCut { lambda } = kind {
        result.metadata.insert("lambda".into(), serde_json::json!(lambda));
    }
    Ok(result)
}
