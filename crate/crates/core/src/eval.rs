//! trec-style average precision, mAP and rank distances.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::types::{Qrels, Ranking};
use crate::{Error, Result};

pub const DEFAULT_DEPTH: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_topic: BTreeMap<String, f64>,
    pub map: f64,
    pub depth: usize,
}

/// Average precision of the first `depth` entries. The denominator is the
/// number of relevant shots in `qrels`, retrieved or not; unjudged shots
/// count as non-relevant.
pub fn average_precision(ranking: &Ranking, qrels: &Qrels, depth: usize) -> Result<f64> {
    let topic = ranking.topic_id();
    let total = qrels.relevant_count(topic);
    if total == 0 {
        return Err(Error::UndefinedTopic(String::from(topic)));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, shot) in ranking.shot_ids().take(depth).enumerate() {
        if qrels.is_relevant(topic, shot) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Empty("average precision list"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Evaluates every qrels topic with at least one relevant shot. A topic
/// absent from `rankings` scores 0; rankings for unjudged topics are
/// ignored.
pub fn evaluate(rankings: &[Ranking], qrels: &Qrels, depth: usize) -> Result<EvalReport> {
    let by_topic: BTreeMap<&str, &Ranking> = rankings.iter().map(|r| (r.topic_id(), r)).collect();
    let mut per_topic = BTreeMap::new();
    for topic in qrels.topics() {
        if qrels.relevant_count(topic) == 0 {
            continue;
        }
        let ap = match by_topic.get(topic) {
            Some(r) => average_precision(r, qrels, depth)?,
            None => 0.0,
        };
        per_topic.insert(String::from(topic), ap);
    }
    let aps: Vec<f64> = per_topic.values().copied().collect();
    let map = mean_ap(&aps)?;
    Ok(EvalReport {
        per_topic,
        map,
        depth,
    })
}

/// Normalised Kendall tau distance: discordant pairs over `n (n - 1) / 2`.
pub fn kendall_tau<S: AsRef<str>>(order_a: &[S], order_b: &[S]) -> Result<f64> {
    let pos_b: BTreeMap<&str, usize> = order_b
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_ref(), i))
        .collect();
    let set_a: BTreeSet<&str> = order_a.iter().map(AsRef::as_ref).collect();
    if set_a.len() != order_a.len()
        || pos_b.len() != order_b.len()
        || set_a.len() != pos_b.len()
        || set_a.iter().any(|s| !pos_b.contains_key(s))
    {
        return Err(Error::SetMismatch);
    }
    let n = order_a.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut seq: Vec<usize> = order_a.iter().map(|s| pos_b[s.as_ref()]).collect();
    let discordant = count_inversions(&mut seq);
    Ok(discordant as f64 / (n * (n - 1) / 2) as f64)
}

fn count_inversions(seq: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut seq[..mid]) + count_inversions(&mut seq[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            merged.push(seq[i]);
            i += 1;
        } else {
            merged.push(seq[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&seq[i..mid]);
    merged.extend_from_slice(&seq[j..]);
    seq.copy_from_slice(&merged);
    count
}
