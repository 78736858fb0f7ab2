//! Robust rank aggregation by half-quadratic reweighting.
//!
//! Every input list becomes a row of normalised ranks in `[0, 1]`. The
//! consensus `R*` minimises `sum_m alpha_m * |R_m - R*|^2 + psi(alpha_m)`
//! where `psi` is the conjugate of the Welsch potential. Alternating the two
//! closed-form minimisers gives
//!
//! ```text
//! alpha_m = exp(-|R_m - R*|^2 / sigma^2)      (then normalised to sum 1)
//! R*      = sum_m alpha_m * R_m
//! ```
//!
//! so a list that disagrees with the others is down-weighted exponentially
//! instead of quadratically dragging the consensus.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::types::Ranking;
use crate::{Error, Result};

/// Normalised rank rows over the union of candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    topic_id: String,
    run_tag: String,
    candidate_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl RankMatrix {
    /// Builds a matrix from explicit rows, validating shape and range.
    pub fn from_rows(
        topic_id: impl Into<String>,
        candidate_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if candidate_ids.is_empty() {
            return Err(Error::EmptyUnion);
        }
        if rows.is_empty() {
            return Err(Error::Empty("rank lists"));
        }
        for row in &rows {
            if row.len() != candidate_ids.len() {
                return Err(Error::DimensionMismatch {
                    expected: candidate_ids.len(),
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param("rows", "ranks must lie in [0, 1]"));
            }
        }
        Ok(RankMatrix {
            topic_id: topic_id.into(),
            run_tag: String::new(),
            candidate_ids,
            rows,
        })
    }

    pub fn candidate_ids(&self) -> &[String] {
        &self.candidate_ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn topic_id(&self) -> &str {
        &self.topic_id
    }

    pub fn num_lists(&self) -> usize {
        self.rows.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.candidate_ids.len()
    }
}

/// Per list, position `q` of `n` maps to `q / (n - 1)` (a lone candidate to
/// 0); candidates missing from a list get the worst rank 1.
pub fn normalize_ranks(lists: &[Ranking]) -> Result<RankMatrix> {
    let first = lists.first().ok_or(Error::Empty("rank lists"))?;
    let mut union: BTreeMap<&str, usize> = BTreeMap::new();
    for list in lists {
        for id in list.shot_ids() {
            union.insert(id, 0);
        }
    }
    if union.is_empty() {
        return Err(Error::EmptyUnion);
    }
    for (i, slot) in union.values_mut().enumerate() {
        *slot = i;
    }
    let mut rows = Vec::with_capacity(lists.len());
    for list in lists {
        let mut row = vec![1.0; union.len()];
        let n = list.len();
        for (q, id) in list.shot_ids().enumerate() {
            row[union[id]] = if n > 1 {
                q as f64 / (n - 1) as f64
            } else {
                0.0
            };
        }
        rows.push(row);
    }
    Ok(RankMatrix {
        topic_id: String::from(first.topic_id()),
        run_tag: String::from(first.run_tag()),
        candidate_ids: union.into_keys().map(String::from).collect(),
        rows,
    })
}

/// Welsch scale.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HqSigma {
    /// `sigma^2` is the median squared distance of the lists to the
    /// mean-rank initialisation, floored at `1e-12`.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HqParams {
    pub sigma: HqSigma,
    /// Stop once the largest consensus change drops below this.
    pub epsilon: f64,
    pub max_iters: usize,
}

impl HqParams {
    pub fn validate(&self) -> Result<()> {
        if let HqSigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("sigma_hq", "must be finite and > 0"));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::param("epsilon", "must be > 0"));
        }
        if self.max_iters < 1 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for HqParams {
    fn default() -> Self {
        HqParams {
            sigma: HqSigma::Auto,
            epsilon: 1e-9,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HqOutcome {
    /// Candidates by ascending consensus rank, scored `1 - R*`.
    pub consensus: Ranking,
    /// Normalised list weights, in input order.
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The `sigma^2` actually used.
    pub sigma_sq: f64,
    /// Final consensus ranks aligned with `candidate_ids`.
    pub consensus_ranks: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Raw Welsch weights `exp(-d / sigma^2)`, normalised to sum 1.
fn weights(dists: &[f64], sigma_sq: f64) -> Result<Vec<f64>> {
    let mut alphas: Vec<f64> = dists.iter().map(|d| libm::exp(-d / sigma_sq)).collect();
    let mut total: f64 = alphas.iter().sum();
    if total <= 0.0 {
        // every raw weight underflowed; the normalised weights are the same
        // after shifting by the smallest distance
        let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        alphas = dists
            .iter()
            .map(|d| libm::exp(-(d - min) / sigma_sq))
            .collect();
        total = alphas.iter().sum();
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite("rank aggregation weights"));
    }
    for a in &mut alphas {
        *a /= total;
    }
    Ok(alphas)
}

pub fn hq_aggregate(matrix: &RankMatrix, params: &HqParams) -> Result<HqOutcome> {
    params.validate()?;
    let m = matrix.rows.len();
    let n = matrix.candidate_ids.len();
    if m == 0 {
        return Err(Error::Empty("rank lists"));
    }
    if n == 0 {
        return Err(Error::EmptyUnion);
    }

    let mut consensus = vec![0.0; n];
    for row in &matrix.rows {
        for (c, r) in consensus.iter_mut().zip(row) {
            *c += r;
        }
    }
    for c in &mut consensus {
        *c /= m as f64;
    }

    let sigma_sq = match params.sigma {
        HqSigma::Fixed(s) => s * s,
        HqSigma::Auto => {
            let mut d: Vec<f64> = matrix.rows.iter().map(|r| sq_dist(r, &consensus)).collect();
            median(&mut d).max(1e-12)
        }
    };

    let mut alphas = vec![1.0 / m as f64; m];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        let dists: Vec<f64> = matrix.rows.iter().map(|r| sq_dist(r, &consensus)).collect();
        alphas = weights(&dists, sigma_sq)?;

        let mut next = vec![0.0; n];
        for (row, a) in matrix.rows.iter().zip(&alphas) {
            for (x, r) in next.iter_mut().zip(row) {
                *x += a * r;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rank aggregation"));
        }
        let change = next
            .iter()
            .zip(&consensus)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        consensus = next;
        if change < params.epsilon {
            converged = true;
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        consensus[a]
            .total_cmp(&consensus[b])
            .then_with(|| matrix.candidate_ids[a].cmp(&matrix.candidate_ids[b]))
    });
    let entries = order
        .iter()
        .map(|&i| (matrix.candidate_ids[i].clone(), 1.0 - consensus[i]))
        .collect();
    let consensus_ranking = Ranking::new(matrix.topic_id.clone(), matrix.run_tag.clone(), entries)?;

    Ok(HqOutcome {
        consensus: consensus_ranking,
        alphas,
        iterations,
        converged,
        sigma_sq,
        consensus_ranks: consensus,
    })
}

/// Consensus ordering by plain mean rank, ties by candidate id.
pub fn mean_rank_order(matrix: &RankMatrix) -> Vec<String> {
    let m = matrix.rows.len() as f64;
    let mean: Vec<f64> = (0..matrix.candidate_ids.len())
        .map(|j| matrix.rows.iter().map(|r| r[j]).sum::<f64>() / m)
        .collect();
    let mut order: Vec<usize> = (0..mean.len()).collect();
    order.sort_by(|&a, &b| {
        mean[a]
            .total_cmp(&mean[b])
            .then_with(|| matrix.candidate_ids[a].cmp(&matrix.candidate_ids[b]))
    });
    order
        .into_iter()
        .map(|i| matrix.candidate_ids[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str]) -> Ranking {
        let n = ids.len() as f64;
        Ranking::new(
            "t",
            "x",
            ids.iter()
                .enumerate()
                .map(|(i, s)| ((*s).into(), 1.0 - i as f64 / n))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ranks_are_spread_over_unit_interval() {
        let m = normalize_ranks(&[list(&["a", "b", "c", "d"])]).unwrap();
        assert_eq!(m.rows()[0], [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn missing_candidate_gets_worst_rank() {
        let m = normalize_ranks(&[list(&["a", "b"]), list(&["b"])]).unwrap();
        assert_eq!(m.candidate_ids(), ["a", "b"]);
        assert_eq!(m.rows()[1], [1.0, 0.0]);
    }

    #[test]
    fn identical_lists_identical_rows() {
        let m = normalize_ranks(&[list(&["c", "a", "b"]), list(&["c", "a", "b"])]).unwrap();
        assert_eq!(m.rows()[0], m.rows()[1]);
    }

    #[test]
    fn empty_union_is_an_error() {
        assert_eq!(
            normalize_ranks(&[Ranking::empty("t", "x")]),
            Err(Error::EmptyUnion)
        );
        assert_eq!(normalize_ranks(&[]), Err(Error::Empty("rank lists")));
    }

    #[test]
    fn identical_rows_fixed_point() {
        let l = list(&["b", "a", "c"]);
        let m = normalize_ranks(&[l.clone(), l.clone(), l]).unwrap();
        let out = hq_aggregate(&m, &HqParams::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.consensus_ranks, m.rows()[0]);
        for a in &out.alphas {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_list_keeps_its_order() {
        let m = normalize_ranks(&[list(&["q", "c", "z", "a"])]).unwrap();
        let out = hq_aggregate(&m, &HqParams::default()).unwrap();
        assert_eq!(
            out.consensus.shot_ids().collect::<Vec<_>>(),
            ["q", "c", "z", "a"]
        );
    }

    #[test]
    fn bad_params_rejected() {
        let m = normalize_ranks(&[list(&["a"])]).unwrap();
        let p = HqParams {
            epsilon: 0.0,
            ..HqParams::default()
        };
        assert!(hq_aggregate(&m, &p).is_err());
        let p = HqParams {
            sigma: HqSigma::Fixed(-1.0),
            ..HqParams::default()
        };
        assert!(hq_aggregate(&m, &p).is_err());
    }
}
