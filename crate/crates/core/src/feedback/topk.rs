//! Top-K feedback: labeled positives jump to the head of the list, labeled
//! negatives sink to the tail, everything else keeps its relative order.

use alloc::string::String;
use alloc::vec::Vec;

use super::{LabelSet, Polarity};
use crate::types::Ranking;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopKMode {
    PositiveOnly,
    NegativeOnly,
    Both,
}

impl TopKMode {
    fn uses(self, p: Polarity) -> bool {
        match self {
            TopKMode::Both => true,
            TopKMode::PositiveOnly => p == Polarity::Positive,
            TopKMode::NegativeOnly => p == Polarity::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopKStrategy {
    pub mode: TopKMode,
    /// Shots inspected per round.
    pub k: usize,
}

impl TopKStrategy {
    pub fn new(mode: TopKMode, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::param("k", "must be at least 1"));
        }
        Ok(TopKStrategy { mode, k })
    }
}

/// Rearranges `ranking` by the labels the strategy's mode pays attention to.
///
/// Scores are reassigned as `1 - rank / N`. With no applicable label the
/// ranking is returned unchanged, scores included.
pub fn topk_rearrange(
    ranking: &Ranking,
    labels: &LabelSet,
    strategy: &TopKStrategy,
) -> Result<Ranking> {
    for l in labels.iter() {
        if ranking.position(&l.shot_id).is_none() {
            return Err(Error::UnknownShot(l.shot_id));
        }
    }
    let active = |shot: &str| labels.get(shot).filter(|&p| strategy.mode.uses(p));
    if !ranking.shot_ids().any(|s| active(s).is_some()) {
        return Ok(ranking.clone());
    }

    let mut head = Vec::new();
    let mut middle = Vec::new();
    let mut tail = Vec::new();
    for id in ranking.shot_ids() {
        match active(id) {
            Some(Polarity::Positive) => head.push(id),
            Some(Polarity::Negative) => tail.push(id),
            None => middle.push(id),
        }
    }
    let n = ranking.len() as f64;
    let entries = head
        .into_iter()
        .chain(middle)
        .chain(tail)
        .enumerate()
        .map(|(i, id)| (String::from(id), 1.0 - i as f64 / n))
        .collect();
    Ranking::new(ranking.topic_id(), ranking.run_tag(), entries)
}

/// The first `k` shots of the ranking that carry no label yet.
pub fn topk_candidates(ranking: &Ranking, labels: &LabelSet, k: usize) -> Vec<String> {
    ranking
        .shot_ids()
        .filter(|s| !labels.contains(s))
        .take(k)
        .map(String::from)
        .collect()
}
