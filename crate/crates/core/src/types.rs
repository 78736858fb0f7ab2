//! Canonical in-memory tables shared by every stage.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::{Error, Result};

/// Keyframe index on the resampled timeline of a video.
pub type Keyframe = u32;

/// Axis-aligned box in pixel coordinates, `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let r = Rect { x1, y1, x2, y2 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.x1 < self.x2 && self.y1 < self.y2 {
            Ok(())
        } else {
            Err(Error::DegenerateBox {
                x1: self.x1,
                y1: self.y1,
                x2: self.x2,
                y2: self.y2,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Area of the overlap with `other`, zero when disjoint or touching.
    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Person,
    Action,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "person",
            EntityKind::Action => "action",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for EntityKind {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        match s {
            "person" => Ok(EntityKind::Person),
            "action" => Ok(EntityKind::Action),
            _ => Err(()),
        }
    }
}

/// One person or action observation on one keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub video_id: String,
    pub shot_id: String,
    pub keyframe: Keyframe,
    pub kind: EntityKind,
    pub entity_id: String,
    pub confidence: f64,
    pub bbox: Option<Rect>,
    /// Set on records produced by gap filling; never serialized.
    pub synthetic: bool,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::ConfidenceRange(self.confidence));
        }
        if let Some(b) = &self.bbox {
            b.validate()?;
        }
        Ok(())
    }

    pub(crate) fn key(&self) -> (&str, &str, Keyframe, EntityKind, &str) {
        (
            &self.video_id,
            &self.shot_id,
            self.keyframe,
            self.kind,
            &self.entity_id,
        )
    }
}

/// Validated collection of detections. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionTable {
    records: Vec<DetectionRecord>,
}

impl DetectionTable {
    /// Checks confidence range, box area and key uniqueness.
    pub fn new(records: Vec<DetectionRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateKey(format!(
                    "{}/{}/{}/{}/{}",
                    r.video_id, r.shot_id, r.keyframe, r.kind, r.entity_id
                )));
            }
        }
        Ok(DetectionTable { records })
    }

    pub fn records(&self) -> &[DetectionRecord] {
        &self.records
    }

    pub fn iter(&self) -> core::slice::Iter<'_, DetectionRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<DetectionRecord> {
        self.records
    }
}

impl<'a> IntoIterator for &'a DetectionTable {
    type Item = &'a DetectionRecord;
    type IntoIter = core::slice::Iter<'a, DetectionRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub video_id: String,
    pub shot_id: String,
    /// Position of the shot inside its video, from 0.
    pub ordinal: u32,
    pub keyframe_start: Keyframe,
    pub keyframe_end: Keyframe,
}

impl Shot {
    pub fn contains(&self, keyframe: Keyframe) -> bool {
        (self.keyframe_start..=self.keyframe_end).contains(&keyframe)
    }
}

/// Shot layout of every video: ordinals and keyframe ranges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShotIndexTable {
    shots: Vec<Shot>,
    by_id: BTreeMap<String, usize>,
    // indices into `shots`, position == ordinal
    by_video: BTreeMap<String, Vec<usize>>,
}

impl ShotIndexTable {
    pub fn new(shots: Vec<Shot>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, s) in shots.iter().enumerate() {
            if s.keyframe_start > s.keyframe_end {
                return Err(Error::InvertedRange {
                    shot_id: s.shot_id.clone(),
                    start: s.keyframe_start,
                    end: s.keyframe_end,
                });
            }
            if by_id.insert(s.shot_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey(s.shot_id.clone()));
            }
            grouped.entry(s.video_id.clone()).or_default().push(i);
        }
        for (video, idx) in grouped.iter_mut() {
            idx.sort_by_key(|&i| shots[i].ordinal);
            for (expected, &i) in idx.iter().enumerate() {
                let found = shots[i].ordinal;
                let expected = expected as u32;
                if found != expected {
                    if expected > 0 && shots[idx[expected as usize - 1]].ordinal == found {
                        return Err(Error::DuplicateKey(format!("{video}/ordinal {found}")));
                    }
                    return Err(Error::OrdinalGap {
                        video_id: video.clone(),
                        expected,
                        found,
                    });
                }
            }
        }
        Ok(ShotIndexTable {
            shots,
            by_id,
            by_video: grouped,
        })
    }

    pub fn get(&self, shot_id: &str) -> Option<&Shot> {
        self.by_id.get(shot_id).map(|&i| &self.shots[i])
    }

    /// Shots of one video in ordinal order.
    pub fn video(&self, video_id: &str) -> impl Iterator<Item = &Shot> + '_ {
        self.by_video
            .get(video_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.shots[i])
    }

    pub fn shot_at(&self, video_id: &str, ordinal: u32) -> Option<&Shot> {
        self.by_video
            .get(video_id)
            .and_then(|v| v.get(ordinal as usize))
            .map(|&i| &self.shots[i])
    }

    pub fn video_len(&self, video_id: &str) -> usize {
        self.by_video.get(video_id).map_or(0, Vec::len)
    }

    pub fn videos(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_video.keys().map(String::as_str)
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Checks that every detection lies inside a known shot of its video.
    pub fn check_detections(&self, table: &DetectionTable) -> Result<()> {
        for r in table {
            let shot = self
                .get(&r.shot_id)
                .ok_or_else(|| Error::UnknownShot(r.shot_id.clone()))?;
            if shot.video_id != r.video_id {
                return Err(Error::VideoMismatch {
                    shot_id: r.shot_id.clone(),
                    expected: shot.video_id.clone(),
                    found: r.video_id.clone(),
                });
            }
            if !shot.contains(r.keyframe) {
                return Err(Error::KeyframeOutOfRange {
                    shot_id: r.shot_id.clone(),
                    keyframe: r.keyframe,
                    start: shot.keyframe_start,
                    end: shot.keyframe_end,
                });
            }
        }
        Ok(())
    }
}

/// A `<person, action>` query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub topic_id: String,
    pub person_id: String,
    pub action_id: String,
}

impl Topic {
    pub fn new(
        topic_id: impl Into<String>,
        person_id: impl Into<String>,
        action_id: impl Into<String>,
    ) -> Result<Self> {
        let t = Topic {
            topic_id: topic_id.into(),
            person_id: person_id.into(),
            action_id: action_id.into(),
        };
        if t.person_id.is_empty() {
            return Err(Error::param("person_id", "empty"));
        }
        if t.action_id.is_empty() {
            return Err(Error::param("action_id", "empty"));
        }
        Ok(t)
    }
}

/// Ranked shot list for one topic: unique shots, finite non-increasing scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    topic_id: String,
    run_tag: String,
    entries: Vec<(String, f64)>,
}

impl Ranking {
    pub fn new(
        topic_id: impl Into<String>,
        run_tag: impl Into<String>,
        entries: Vec<(String, f64)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, (shot, score)) in entries.iter().enumerate() {
            if !score.is_finite() {
                return Err(Error::NonFinite("ranking scores"));
            }
            if !seen.insert(shot.as_str()) {
                return Err(Error::DuplicateKey(shot.clone()));
            }
            if i > 0 && *score > entries[i - 1].1 {
                return Err(Error::NonMonotone(i));
            }
        }
        Ok(Ranking {
            topic_id: topic_id.into(),
            run_tag: run_tag.into(),
            entries,
        })
    }

    /// Sorts by descending score, ties by ascending shot id.
    pub fn from_scores(
        topic_id: impl Into<String>,
        run_tag: impl Into<String>,
        scores: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(String, f64)> = scores.into_iter().collect();
        if entries.iter().any(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFinite("ranking scores"));
        }
        entries.sort_by(|a, b| math::score_order((&a.0, a.1), (&b.0, b.1)));
        Ranking::new(topic_id, run_tag, entries)
    }

    pub fn empty(topic_id: impl Into<String>, run_tag: impl Into<String>) -> Self {
        Ranking {
            topic_id: topic_id.into(),
            run_tag: run_tag.into(),
            entries: Vec::new(),
        }
    }

    pub fn topic_id(&self) -> &str {
        &self.topic_id
    }

    pub fn run_tag(&self) -> &str {
        &self.run_tag
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shot_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(s, _)| s.as_str())
    }

    pub fn position(&self, shot_id: &str) -> Option<usize> {
        self.entries.iter().position(|(s, _)| s == shot_id)
    }

    pub fn score_map(&self) -> BTreeMap<String, f64> {
        self.entries.iter().cloned().collect()
    }

    pub fn with_run_tag(mut self, run_tag: impl Into<String>) -> Self {
        self.run_tag = run_tag.into();
        self
    }

    pub fn truncated(mut self, depth: usize) -> Self {
        self.entries.truncate(depth);
        self
    }

    pub fn into_entries(self) -> Vec<(String, f64)> {
        self.entries
    }
}

/// Unit-norm feature vectors keyed by shot id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a vector, renormalizing it to unit length. The first insert
    /// fixes the dimension.
    pub fn insert(&mut self, shot_id: impl Into<String>, mut vector: Vec<f64>) -> Result<()> {
        let shot_id = shot_id.into();
        if vector.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dim.max(1),
                found: 0,
            });
        }
        if self.dim != 0 && vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.vectors.contains_key(&shot_id) {
            return Err(Error::DuplicateKey(shot_id));
        }
        if !math::normalize(&mut vector) {
            return Err(Error::ZeroVector(shot_id));
        }
        self.dim = vector.len();
        self.vectors.insert(shot_id, vector);
        Ok(())
    }

    /// Vector dimension, 0 while empty.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, shot_id: &str) -> Option<&[f64]> {
        self.vectors.get(shot_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Binary relevance judgments per (topic, shot).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, bool>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        topic_id: impl Into<String>,
        shot_id: impl Into<String>,
        relevant: bool,
    ) -> Result<()> {
        let topic_id = topic_id.into();
        let shot_id = shot_id.into();
        let per_topic = self.judgments.entry(topic_id.clone()).or_default();
        if per_topic.contains_key(&shot_id) {
            return Err(Error::DuplicateKey(format!("{topic_id}/{shot_id}")));
        }
        per_topic.insert(shot_id, relevant);
        Ok(())
    }

    /// `None` when the shot is unjudged for the topic.
    pub fn relevance(&self, topic_id: &str, shot_id: &str) -> Option<bool> {
        self.judgments.get(topic_id)?.get(shot_id).copied()
    }

    pub fn is_relevant(&self, topic_id: &str, shot_id: &str) -> bool {
        self.relevance(topic_id, shot_id).unwrap_or(false)
    }

    pub fn relevant_count(&self, topic_id: &str) -> usize {
        self.judgments
            .get(topic_id)
            .map_or(0, |m| m.values().filter(|&&r| r).count())
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> + '_ {
        self.judgments.keys().map(String::as_str)
    }

    pub fn judgments(&self, topic_id: &str) -> impl Iterator<Item = (&str, bool)> + '_ {
        self.judgments
            .get(topic_id)
            .into_iter()
            .flatten()
            .map(|(k, &v)| (k.as_str(), v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, bool)> + '_ {
        self.judgments
            .iter()
            .flat_map(|(t, m)| m.iter().map(move |(s, &r)| (t.as_str(), s.as_str(), r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn shot(video: &str, id: &str, ordinal: u32) -> Shot {
        Shot {
            video_id: video.into(),
            shot_id: id.into(),
            ordinal,
            keyframe_start: ordinal * 10,
            keyframe_end: ordinal * 10 + 9,
        }
    }

    #[test]
    fn consecutive_ordinals_accepted() {
        let t = ShotIndexTable::new(vec![
            shot("v1", "a", 2),
            shot("v1", "b", 0),
            shot("v1", "c", 1),
        ])
        .unwrap();
        let ids: Vec<_> = t.video("v1").map(|s| s.shot_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn ordinal_gap_rejected() {
        let err = ShotIndexTable::new(vec![shot("v1", "a", 0), shot("v1", "b", 2)]).unwrap_err();
        assert!(matches!(
            err,
            Error::OrdinalGap {
                expected: 1,
                found: 2,
                ..
            }
        ));
    }

    #[test]
    fn duplicate_ordinal_rejected() {
        let err = ShotIndexTable::new(vec![shot("v1", "a", 0), shot("v1", "b", 0)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey(_)));
    }

    #[test]
    fn features_are_unit_normalized() {
        let mut f = FeatureTable::new();
        f.insert("s", vec![3.0, 4.0]).unwrap();
        assert_eq!(f.get("s").unwrap(), &[0.6, 0.8]);
        assert!(matches!(
            f.insert("t", vec![1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(matches!(
            f.insert("s", vec![1.0, 0.0]),
            Err(Error::DuplicateKey(_))
        ));
    }

    #[test]
    fn ranking_rejects_disorder_and_duplicates() {
        let e = Ranking::new("t", "x", vec![("a".into(), 0.1), ("b".into(), 0.2)]).unwrap_err();
        assert_eq!(e, Error::NonMonotone(1));
        let e = Ranking::new("t", "x", vec![("a".into(), 0.2), ("a".into(), 0.1)]).unwrap_err();
        assert!(matches!(e, Error::DuplicateKey(_)));
    }

    #[test]
    fn from_scores_breaks_ties_by_id() {
        let r = Ranking::from_scores(
            "t",
            "x",
            vec![("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.9)],
        )
        .unwrap();
        assert_eq!(r.shot_ids().collect::<Vec<_>>(), ["c", "a", "b"]);
    }

    #[test]
    fn intersection_area() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = Rect::new(5.0, 0.0, 15.0, 10.0).unwrap();
        assert_eq!(a.intersection_area(&b), 50.0);
        let c = Rect::new(10.0, 0.0, 20.0, 10.0).unwrap();
        assert_eq!(a.intersection_area(&c), 0.0);
        assert!(Rect::new(1.0, 1.0, 1.0, 5.0).is_err());
    }
}
