//! Filter fusion of person and action evidence.
//!
//! On a keyframe, a face detection of the topic person gates the action
//! confidence of the topic action: the fused value is the action confidence
//! when the face confidence reaches the threshold `delta`, else zero. With
//! identity verification enabled the result is further weighted by the share
//! of the face box covered by the action box, which suppresses pairings where
//! the action belongs to somebody else in the frame.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::types::{
    DetectionRecord, DetectionTable, EntityKind, FeatureTable, Keyframe, Ranking, Rect,
    ShotIndexTable, Topic,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShotAggregation {
    #[default]
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Face threshold.
    pub delta: f64,
    pub icv_enabled: bool,
    pub shot_aggregation: ShotAggregation,
}

impl FusionParams {
    pub fn new(delta: f64, icv_enabled: bool) -> Result<Self> {
        let p = FusionParams {
            delta,
            icv_enabled,
            shot_aggregation: ShotAggregation::Max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::param("delta", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            delta: 0.5,
            icv_enabled: false,
            shot_aggregation: ShotAggregation::Max,
        }
    }
}

/// Fused score of one shot for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedScore {
    pub topic_id: String,
    pub shot_id: String,
    pub score: f64,
    pub best_keyframe: Option<Keyframe>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FusionWarning {
    UnknownPerson(String),
    UnknownAction(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedTopic {
    pub ranking: Ranking,
    /// Non-zero shot scores in ranking order.
    pub scores: Vec<FusedScore>,
    pub warnings: Vec<FusionWarning>,
}

/// Step indicator: 1 when `x >= delta`.
pub fn threshold_filter(x: f64, delta: f64) -> f64 {
    if x >= delta {
        1.0
    } else {
        0.0
    }
}

/// Fraction of the face box area covered by the action box.
///
/// This is normalised by the face area only, not by the union, so a small
/// face inside a large action box scores 1.
pub fn icv_weight(face: &Rect, action: &Rect) -> Result<f64> {
    face.validate()?;
    let area = face.area();
    if area.is_nan() || area <= 0.0 {
        return Err(Error::DegenerateBox {
            x1: face.x1,
            y1: face.y1,
            x2: face.x2,
            y2: face.y2,
        });
    }
    Ok((face.intersection_area(action) / area).clamp(0.0, 1.0))
}

pub fn fuse_keyframe(
    face: &DetectionRecord,
    action: &DetectionRecord,
    params: &FusionParams,
) -> Result<f64> {
    if face.kind != EntityKind::Person {
        return Err(Error::WrongEntityKind { expected: "person" });
    }
    if action.kind != EntityKind::Action {
        return Err(Error::WrongEntityKind { expected: "action" });
    }
    if face.keyframe != action.keyframe
        || face.shot_id != action.shot_id
        || face.video_id != action.video_id
    {
        return Err(Error::KeyframeMismatch {
            face: face.keyframe,
            action: action.keyframe,
        });
    }
    let gated = threshold_filter(face.confidence, params.delta) * action.confidence;
    let weight = match (params.icv_enabled, &face.bbox, &action.bbox) {
        (true, Some(f), Some(a)) => icv_weight(f, a)?,
        _ => 1.0,
    };
    Ok(weight * gated)
}

/// Keyframe-to-shot pooling: the maximum, 0 for no keyframes.
pub fn shot_score(keyframe_scores: &[f64]) -> f64 {
    keyframe_scores.iter().copied().fold(0.0, f64::max)
}

/// Per gallery shot, the best dot product against any query, clamped to
/// `[0, 1]`. Queries are expected to be unit vectors.
pub fn cosine_scores(
    queries: &[Vec<f64>],
    gallery: &FeatureTable,
) -> Result<BTreeMap<String, f64>> {
    for q in queries {
        if !gallery.is_empty() && q.len() != gallery.dim() {
            return Err(Error::DimensionMismatch {
                expected: gallery.dim(),
                found: q.len(),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (shot, x) in gallery.iter() {
        let best = queries.iter().map(|q| math::dot(q, x)).fold(0.0, f64::max);
        if !best.is_finite() {
            return Err(Error::NonFinite("cosine scoring"));
        }
        out.insert(String::from(shot), best.clamp(0.0, 1.0));
    }
    Ok(out)
}

#[derive(Default)]
struct KeyframeEvidence<'a> {
    faces: Vec<&'a DetectionRecord>,
    actions: Vec<&'a DetectionRecord>,
}

/// Ranks the shots of `topic`: per keyframe the best (face, action) pairing,
/// per shot the pooled keyframe score. Zero-score shots are dropped.
pub fn fuse_topic(
    topic: &Topic,
    detections: &DetectionTable,
    shots: &ShotIndexTable,
    params: &FusionParams,
    run_tag: &str,
) -> Result<FusedTopic> {
    params.validate()?;
    shots.check_detections(detections)?;

    let mut frames: BTreeMap<(&str, Keyframe), KeyframeEvidence<'_>> = BTreeMap::new();
    let (mut saw_person, mut saw_action) = (false, false);
    for r in detections {
        let slot = match r.kind {
            EntityKind::Person if r.entity_id == topic.person_id => {
                saw_person = true;
                &mut frames.entry((&r.shot_id, r.keyframe)).or_default().faces
            }
            EntityKind::Action if r.entity_id == topic.action_id => {
                saw_action = true;
                &mut frames.entry((&r.shot_id, r.keyframe)).or_default().actions
            }
            _ => continue,
        };
        slot.push(r);
    }

    let mut warnings = Vec::new();
    if !saw_person {
        warnings.push(FusionWarning::UnknownPerson(topic.person_id.clone()));
    }
    if !saw_action {
        warnings.push(FusionWarning::UnknownAction(topic.action_id.clone()));
    }

    // shot -> (keyframe scores, keyframes)
    let mut per_shot: BTreeMap<&str, (Vec<f64>, Vec<Keyframe>)> = BTreeMap::new();
    for ((shot, kf), ev) in &frames {
        if ev.faces.is_empty() || ev.actions.is_empty() {
            continue;
        }
        let mut best = 0.0f64;
        for face in &ev.faces {
            for action in &ev.actions {
                best = best.max(fuse_keyframe(face, action, params)?);
            }
        }
        let e = per_shot.entry(shot).or_default();
        e.0.push(best);
        e.1.push(*kf);
    }

    let mut scores = Vec::new();
    for (shot, (values, kfs)) in per_shot {
        let score = match params.shot_aggregation {
            ShotAggregation::Max => shot_score(&values),
        };
        if score > 0.0 {
            let best_keyframe = values.iter().position(|&v| v == score).map(|i| kfs[i]);
            scores.push(FusedScore {
                topic_id: topic.topic_id.clone(),
                shot_id: String::from(shot),
                score,
                best_keyframe,
            });
        }
    }
    scores.sort_by(|a, b| math::score_order((&a.shot_id, a.score), (&b.shot_id, b.score)));
    let ranking = Ranking::new(
        topic.topic_id.clone(),
        run_tag,
        scores
            .iter()
            .map(|s| (s.shot_id.clone(), s.score))
            .collect(),
    )?;
    Ok(FusedTopic {
        ranking,
        scores,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Shot;
    use alloc::vec;

    fn rec(
        kind: EntityKind,
        id: &str,
        shot: &str,
        kf: Keyframe,
        conf: f64,
        b: Option<Rect>,
    ) -> DetectionRecord {
        DetectionRecord {
            video_id: "v".into(),
            shot_id: shot.into(),
            keyframe: kf,
            kind,
            entity_id: id.into(),
            confidence: conf,
            bbox: b,
            synthetic: false,
        }
    }

    fn rect(x1: f64, y1: f64, x2: f64, y2: f64) -> Rect {
        Rect::new(x1, y1, x2, y2).unwrap()
    }

    fn shots(n: u32) -> ShotIndexTable {
        ShotIndexTable::new(
            (0..n)
                .map(|i| Shot {
                    video_id: "v".into(),
                    shot_id: alloc::format!("s{i}"),
                    ordinal: i,
                    keyframe_start: i * 10,
                    keyframe_end: i * 10 + 9,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert_eq!(threshold_filter(0.7, 0.5), 1.0);
        assert_eq!(threshold_filter(0.3, 0.5), 0.0);
        assert_eq!(threshold_filter(0.5, 0.5), 1.0);
    }

    #[test]
    fn icv_weight_cases() {
        let face = rect(0.0, 0.0, 10.0, 10.0);
        assert_eq!(icv_weight(&face, &rect(5.0, 0.0, 15.0, 10.0)).unwrap(), 0.5);
        assert_eq!(icv_weight(&rect(2.0, 2.0, 4.0, 4.0), &face).unwrap(), 1.0);
        assert_eq!(
            icv_weight(&face, &rect(20.0, 20.0, 30.0, 30.0)).unwrap(),
            0.0
        );
        let bad = Rect {
            x1: 1.0,
            y1: 1.0,
            x2: 1.0,
            y2: 4.0,
        };
        assert!(icv_weight(&bad, &face).is_err());
    }

    #[test]
    fn keyframe_fusion() {
        let p = FusionParams::default();
        let face = rec(
            EntityKind::Person,
            "p",
            "s0",
            1,
            0.8,
            Some(rect(0.0, 0.0, 10.0, 10.0)),
        );
        let act = rec(
            EntityKind::Action,
            "a",
            "s0",
            1,
            0.6,
            Some(rect(5.0, 0.0, 15.0, 10.0)),
        );
        assert!((fuse_keyframe(&face, &act, &p).unwrap() - 0.6).abs() < 1e-15);

        let icv = FusionParams {
            icv_enabled: true,
            ..p
        };
        assert!((fuse_keyframe(&face, &act, &icv).unwrap() - 0.3).abs() < 1e-15);

        let weak = rec(EntityKind::Person, "p", "s0", 1, 0.4, None);
        let strong = rec(EntityKind::Action, "a", "s0", 1, 0.9, None);
        assert_eq!(fuse_keyframe(&weak, &strong, &p).unwrap(), 0.0);

        // icv without boxes degrades to plain filter fusion
        let face_nobox = rec(EntityKind::Person, "p", "s0", 1, 0.8, None);
        assert!((fuse_keyframe(&face_nobox, &act, &icv).unwrap() - 0.6).abs() < 1e-15);

        let other_kf = rec(EntityKind::Action, "a", "s0", 2, 0.6, None);
        assert!(matches!(
            fuse_keyframe(&face, &other_kf, &p),
            Err(Error::KeyframeMismatch { face: 1, action: 2 })
        ));
        assert!(fuse_keyframe(&act, &face, &p).is_err());
    }

    #[test]
    fn shot_pooling_is_max() {
        assert_eq!(shot_score(&[0.2, 0.9, 0.4]), 0.9);
        assert_eq!(shot_score(&[]), 0.0);
        assert_eq!(shot_score(&[0.7]), 0.7);
    }

    #[test]
    fn cosine_scoring() {
        let mut g = FeatureTable::new();
        g.insert("x", vec![1.0, 0.0]).unwrap();
        g.insert("y", vec![0.0, 1.0]).unwrap();
        g.insert("z", vec![-1.0, 0.0]).unwrap();
        let s = cosine_scores(&[vec![1.0, 0.0]], &g).unwrap();
        assert_eq!(s["x"], 1.0);
        assert_eq!(s["y"], 0.0);
        assert_eq!(s["z"], 0.0);
        let s = cosine_scores(&[vec![1.0, 0.0], vec![0.0, 1.0]], &g).unwrap();
        assert_eq!(s["y"], 1.0);
        assert!(cosine_scores(&[vec![1.0, 0.0, 0.0]], &g).is_err());
    }

    #[test]
    fn single_shot_topic() {
        let topic = Topic::new("t", "p", "a").unwrap();
        let d = DetectionTable::new(vec![
            rec(EntityKind::Person, "p", "s0", 3, 0.8, None),
            rec(EntityKind::Action, "a", "s0", 3, 0.6, None),
        ])
        .unwrap();
        let out = fuse_topic(&topic, &d, &shots(1), &FusionParams::default(), "run").unwrap();
        assert_eq!(out.ranking.entries(), &[("s0".into(), 0.6)]);
        assert_eq!(out.scores[0].best_keyframe, Some(3));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn faces_below_threshold_give_empty_ranking() {
        let topic = Topic::new("t", "p", "a").unwrap();
        let d = DetectionTable::new(vec![
            rec(EntityKind::Person, "p", "s0", 3, 0.3, None),
            rec(EntityKind::Action, "a", "s0", 3, 0.6, None),
            rec(EntityKind::Person, "p", "s1", 13, 0.1, None),
            rec(EntityKind::Action, "a", "s1", 13, 0.9, None),
        ])
        .unwrap();
        let out = fuse_topic(&topic, &d, &shots(2), &FusionParams::default(), "run").unwrap();
        assert!(out.ranking.is_empty());
    }

    #[test]
    fn only_the_topic_person_gates() {
        let topic = Topic::new("t", "max", "a").unwrap();
        let d = DetectionTable::new(vec![
            rec(EntityKind::Person, "max", "s0", 3, 0.9, None),
            rec(EntityKind::Person, "peggy", "s0", 3, 0.95, None),
            rec(EntityKind::Action, "a", "s0", 3, 0.7, None),
            rec(EntityKind::Person, "peggy", "s1", 12, 0.99, None),
            rec(EntityKind::Action, "a", "s1", 12, 0.9, None),
        ])
        .unwrap();
        let out = fuse_topic(&topic, &d, &shots(2), &FusionParams::default(), "run").unwrap();
        assert_eq!(out.ranking.entries(), &[("s0".into(), 0.7)]);
    }

    #[test]
    fn unknown_ids_warn() {
        let topic = Topic::new("t", "nobody", "nothing").unwrap();
        let d =
            DetectionTable::new(vec![rec(EntityKind::Person, "p", "s0", 3, 0.8, None)]).unwrap();
        let out = fuse_topic(&topic, &d, &shots(1), &FusionParams::default(), "run").unwrap();
        assert!(out.ranking.is_empty());
        assert_eq!(out.warnings.len(), 2);
    }
}
