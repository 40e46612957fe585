//! Budgets, class-balanced pools and the random baseline.
//!
//! Every method selects inside *pools*: the whole dataset, or one pool per
//! class when selection is balanced. Class `c` receives
//! `k / C + (c < k % C)` samples.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::artifact::{CoresetResult, LabelVector};
use crate::error::{CoresetError, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub k: usize,
    pub balanced: bool,
    pub seed: u64,
}

impl Selection {
    pub fn new(k: usize, balanced: bool, seed: u64) -> Self {
        Self { k, balanced, seed }
    }
}

/// Per-class quotas: `k div C` each, remainder to the lowest classes.
pub fn class_quotas(k: usize, num_classes: usize) -> Vec<usize> {
    let base = k / num_classes;
    let rem = k % num_classes;
    (0..num_classes).map(|c| base + usize::from(c < rem)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    /// Global sample indices, ascending.
    pub indices: Vec<usize>,
    pub quota: usize,
    /// Class of a balanced pool.
    pub class: Option<usize>,
}

pub fn pools(labels: &LabelVector, k: usize, balanced: bool) -> Result<Vec<Pool>> {
    let n = labels.len();
    if k > n {
        return Err(CoresetError::Budget {
            k,
            available: n,
            context: None,
        });
    }
    if !balanced {
        return Ok(vec![Pool {
            indices: (0..n).collect(),
            quota: k,
            class: None,
        }]);
    }
    let quotas = class_quotas(k, labels.num_classes());
    labels
        .indices_by_class()
        .into_iter()
        .zip(quotas)
        .enumerate()
        .map(|(c, (indices, quota))| {
            if quota > indices.len() {
                return Err(CoresetError::Budget {
                    k: quota,
                    available: indices.len(),
                    context: Some(format!("class {c}")),
                });
            }
            Ok(Pool {
                indices,
                quota,
                class: Some(c),
            })
        })
        .collect()
}

/// Runs `pick` on every pool with a shared seeded stream and merges the
/// `(global index, weight)` pairs into one result.
pub fn select_in_pools<F>(
    method: &str,
    labels: &LabelVector,
    sel: Selection,
    mut pick: F,
) -> Result<CoresetResult>
where
    F: FnMut(&Pool, &mut ChaCha8Rng) -> Result<Vec<(usize, f32)>>,
{
    let mut rng = rng::stream(sel.seed, Stream::Selection);
    let mut pairs = Vec::with_capacity(sel.k);
    for pool in pools(labels, sel.k, sel.balanced)? {
        if pool.quota == 0 {
            continue;
        }
        let picked = pick(&pool, &mut rng)?;
        if picked.len() != pool.quota {
            return Err(CoresetError::Numerical(format!(
                "{method}: selected {} samples for a quota of {}",
                picked.len(),
                pool.quota
            )));
        }
        pairs.extend(picked);
    }
    CoresetResult::from_pairs(method, labels.len(), sel.seed, pairs)
}

/// Uniform sampling without replacement.
pub fn random_select(labels: &LabelVector, sel: Selection) -> Result<CoresetResult> {
    select_in_pools("random", labels, sel, |pool, rng| {
        Ok(index::sample(rng, pool.indices.len(), pool.quota)
            .into_iter()
            .map(|i| (pool.indices[i], 1.0))
            .collect())
    })
}

/// Index of the largest value; lowest index on ties. `None` for empty input.
pub(crate) fn argmax_by<I: IntoIterator<Item = (usize, f64)>>(items: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the smallest value; lowest index on ties.
pub(crate) fn argmin_by<I: IntoIterator<Item = (usize, f64)>>(items: I) -> Option<usize> {
    argmax_by(items.into_iter().map(|(i, v)| (i, -v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_assign_remainder_to_low_classes() {
        assert_eq!(class_quotas(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(class_quotas(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(class_quotas(8, 4), vec![2; 4]);
    }

    #[test]
    fn balanced_pools_error_on_short_class() {
        let labels = LabelVector::new(vec![0, 0, 0, 1], 2).unwrap();
        let err = pools(&labels, 4, true).unwrap_err().to_string();
        assert!(err.contains("class 1"), "{err}");
        assert!(pools(&labels, 5, false).is_err());
    }

    #[test]
    fn random_balanced_quota() {
        let labels = LabelVector::new((0..20).map(|i| i % 2).collect(), 2).unwrap();
        let r = random_select(&labels, Selection::new(10, true, 3)).unwrap();
        assert_eq!(r.len(), 10);
        let ones = r.indices.iter().filter(|&&i| labels.get(i) == 1).count();
        assert_eq!(ones, 5);
        assert!(r.weights.iter().all(|&w| w == 1.0));
        assert_eq!(r, random_select(&labels, Selection::new(10, true, 3)).unwrap());
        assert_ne!(r, random_select(&labels, Selection::new(10, true, 4)).unwrap());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax_by([(0, 1.0), (1, 3.0), (2, 3.0)]), Some(1));
        assert_eq!(argmin_by([(4, 1.0), (5, 1.0)]), Some(4));
        assert_eq!(argmax_by(std::iter::empty()), None);
    }
}
