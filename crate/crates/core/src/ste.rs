//! Score temporal extension.
//!
//! Actions such as kissing or carrying a bag often last longer than one shot,
//! so a weak shot next to strong ones is likely relevant too. Each shot
//! receives a share of the positive score difference to every neighbour
//! within `p - 1` shots of the same video, weighted by `exp(-m^2 / sigma)`.
//! All neighbour reads use the original scores, so the update is a single
//! parallel pass.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::types::{Ranking, ShotIndexTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SteParams {
    pub theta: f64,
    pub sigma: f64,
    /// Window half-width; offsets `-p < m < p` contribute.
    pub p: u32,
    /// Topics to diffuse; `None` enables every topic.
    pub enabled_topics: Option<BTreeSet<String>>,
}

impl SteParams {
    pub fn new(theta: f64, sigma: f64, p: u32) -> Result<Self> {
        let params = SteParams {
            theta,
            sigma,
            p,
            enabled_topics: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_topics<I, S>(mut self, topics: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.enabled_topics = Some(topics.into_iter().map(Into::into).collect());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::param("theta", "must be finite and >= 0"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and > 0"));
        }
        if self.p < 1 {
            return Err(Error::param("p", "must be at least 1"));
        }
        Ok(())
    }

    pub fn is_enabled(&self, topic_id: &str) -> bool {
        self.enabled_topics
            .as_ref()
            .is_none_or(|t| t.contains(topic_id))
    }
}

impl Default for SteParams {
    fn default() -> Self {
        SteParams {
            theta: 0.5,
            sigma: 2.0,
            p: 3,
            enabled_topics: None,
        }
    }
}

/// Weight of a neighbour `m` shots away.
pub fn distance_weight(m: i64, sigma: f64) -> f64 {
    let m = m as f64;
    libm::exp(-(m * m) / sigma)
}

/// Diffused score of position `k` of one video's ordinal-ordered scores.
pub fn diffuse_at(original: &[f64], k: usize, theta: f64, sigma: f64, p: u32) -> f64 {
    let base = original[k];
    let reach = i64::from(p) - 1;
    let mut acc = 0.0;
    for m in -reach..=reach {
        if m == 0 {
            continue;
        }
        let j = k as i64 + m;
        if j < 0 || j >= original.len() as i64 {
            continue;
        }
        let diff = original[j as usize] - base;
        if diff > 0.0 {
            acc += distance_weight(m, sigma) * diff;
        }
    }
    base + theta * acc
}

/// Diffuses every position of one video's scores.
pub fn diffuse(original: &[f64], theta: f64, sigma: f64, p: u32) -> Vec<f64> {
    (0..original.len())
        .map(|k| diffuse_at(original, k, theta, sigma, p))
        .collect()
}

/// Applies the extension to one topic's ranking.
///
/// Shots missing from the ranking count as 0 and join the output when a
/// neighbour lifts them above 0. Ties keep input order, newly scored shots
/// follow the ranked ones in (video, ordinal) order before the final sort.
pub fn apply_ste(ranking: &Ranking, shots: &ShotIndexTable, params: &SteParams) -> Result<Ranking> {
    params.validate()?;
    if !params.is_enabled(ranking.topic_id()) {
        return Ok(ranking.clone());
    }

    let mut videos: BTreeSet<&str> = BTreeSet::new();
    for shot_id in ranking.shot_ids() {
        let shot = shots
            .get(shot_id)
            .ok_or_else(|| Error::UnknownShot(String::from(shot_id)))?;
        videos.insert(&shot.video_id);
    }
    let original: BTreeMap<&str, f64> = ranking
        .entries()
        .iter()
        .map(|(s, v)| (s.as_str(), *v))
        .collect();

    let mut updated: BTreeMap<&str, f64> = BTreeMap::new();
    let mut newcomers: Vec<(String, f64)> = Vec::new();
    for video in videos {
        let layout: Vec<&str> = shots.video(video).map(|s| s.shot_id.as_str()).collect();
        let mut scores = vec![0.0; layout.len()];
        for (i, id) in layout.iter().enumerate() {
            if let Some(&v) = original.get(id) {
                scores[i] = v;
            }
        }
        let diffused = diffuse(&scores, params.theta, params.sigma, params.p);
        for (id, value) in layout.into_iter().zip(diffused) {
            if !value.is_finite() {
                return Err(Error::NonFinite("temporal extension"));
            }
            if original.contains_key(id) {
                updated.insert(id, value);
            } else if value > 0.0 {
                newcomers.push((String::from(id), value));
            }
        }
    }

    let mut entries: Vec<(String, f64)> = ranking
        .entries()
        .iter()
        .map(|(s, _)| (s.clone(), updated[s.as_str()]))
        .collect();
    entries.extend(newcomers);
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ranking::new(ranking.topic_id(), ranking.run_tag(), entries)
}
