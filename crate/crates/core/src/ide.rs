//! Inter-frame detection extension.
//!
//! A detector that loses a face or an action for a few keyframes inside a
//! shot leaves a hole in the track. Each hole bounded by two detections of
//! the same track key is filled by linear interpolation: for a missing
//! keyframe `k` with neighbours at `k - m` and `k + n`,
//!
//! ```text
//! conf(k) = n / (m + n) * conf(k - m) + m / (m + n) * conf(k + n)
//! ```
//!
//! and every box coordinate uses the same weights.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::types::{DetectionRecord, DetectionTable, EntityKind, Keyframe, Rect, ShotIndexTable};
use crate::{Error, Result};

/// Identity of a track: one entity inside one shot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackKey {
    pub video_id: String,
    pub shot_id: String,
    pub kind: EntityKind,
    pub entity_id: String,
}

impl TrackKey {
    pub fn of(r: &DetectionRecord) -> Self {
        TrackKey {
            video_id: r.video_id.clone(),
            shot_id: r.shot_id.clone(),
            kind: r.kind,
            entity_id: r.entity_id.clone(),
        }
    }

    fn matches(&self, r: &DetectionRecord) -> bool {
        self.video_id == r.video_id
            && self.shot_id == r.shot_id
            && self.kind == r.kind
            && self.entity_id == r.entity_id
    }
}

/// Run of missing keyframes strictly between two detections of one track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gap {
    pub key: TrackKey,
    pub left_keyframe: Keyframe,
    pub right_keyframe: Keyframe,
}

impl Gap {
    pub fn span(&self) -> Keyframe {
        self.right_keyframe - self.left_keyframe
    }

    /// The keyframes to fill.
    pub fn missing(&self) -> impl Iterator<Item = Keyframe> {
        self.left_keyframe + 1..self.right_keyframe
    }

    /// Distances `(m, n)` from `k` to the left and right detections.
    pub fn offsets(&self, k: Keyframe) -> Option<(u32, u32)> {
        (self.left_keyframe < k && k < self.right_keyframe)
            .then(|| (k - self.left_keyframe, self.right_keyframe - k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdeParams {
    /// Largest `right - left` span that is still filled.
    pub max_gap: u32,
}

impl IdeParams {
    pub fn new(max_gap: u32) -> Result<Self> {
        if max_gap < 2 {
            return Err(Error::param("max_gap", "must be at least 2"));
        }
        Ok(IdeParams { max_gap })
    }
}

impl Default for IdeParams {
    fn default() -> Self {
        IdeParams { max_gap: 10 }
    }
}

type Tracks<'a> = BTreeMap<TrackKey, Vec<&'a DetectionRecord>>;

fn tracks(table: &DetectionTable) -> Tracks<'_> {
    let mut out: Tracks<'_> = BTreeMap::new();
    for r in table {
        out.entry(TrackKey::of(r)).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.keyframe);
    }
    out
}

fn eligible_gaps<'a>(
    table: &'a DetectionTable,
    shots: &ShotIndexTable,
    params: &IdeParams,
) -> Result<Vec<(Gap, &'a DetectionRecord, &'a DetectionRecord)>> {
    if params.max_gap < 2 {
        return Err(Error::param("max_gap", "must be at least 2"));
    }
    shots.check_detections(table)?;
    let mut out = Vec::new();
    for (key, track) in tracks(table) {
        for pair in track.windows(2) {
            let (l, r) = (pair[0], pair[1]);
            let span = r.keyframe - l.keyframe;
            if span >= 2 && span <= params.max_gap {
                out.push((
                    Gap {
                        key: key.clone(),
                        left_keyframe: l.keyframe,
                        right_keyframe: r.keyframe,
                    },
                    l,
                    r,
                ));
            }
        }
    }
    Ok(out)
}

/// Maximal gaps of at most `max_gap` keyframes, ordered by track key then
/// keyframe. Tracks are keyed per shot, so gaps never cross a cut.
pub fn find_gaps(
    table: &DetectionTable,
    shots: &ShotIndexTable,
    params: &IdeParams,
) -> Result<Vec<Gap>> {
    Ok(eligible_gaps(table, shots, params)?
        .into_iter()
        .map(|(g, _, _)| g)
        .collect())
}

fn lerp(left: f64, right: f64, wl: f64, wr: f64) -> f64 {
    (wl * left + wr * right).clamp(left.min(right), left.max(right))
}

/// Synthetic record for keyframe `k` strictly between `left` and `right`.
/// The box is interpolated only when both endpoints carry one.
pub fn interpolate_gap(
    left: &DetectionRecord,
    right: &DetectionRecord,
    k: Keyframe,
) -> Result<DetectionRecord> {
    let key = TrackKey::of(left);
    if !key.matches(right) {
        return Err(Error::TrackMismatch);
    }
    if !(left.keyframe < k && k < right.keyframe) {
        return Err(Error::OutsideGap {
            keyframe: k,
            left: left.keyframe,
            right: right.keyframe,
        });
    }
    let m = f64::from(k - left.keyframe);
    let n = f64::from(right.keyframe - k);
    let wl = n / (m + n);
    let wr = m / (m + n);

    let bbox = match (&left.bbox, &right.bbox) {
        (Some(a), Some(b)) => Some(Rect {
            x1: lerp(a.x1, b.x1, wl, wr),
            y1: lerp(a.y1, b.y1, wl, wr),
            x2: lerp(a.x2, b.x2, wl, wr),
            y2: lerp(a.y2, b.y2, wl, wr),
        }),
        _ => None,
    };

    Ok(DetectionRecord {
        video_id: key.video_id,
        shot_id: key.shot_id,
        keyframe: k,
        kind: key.kind,
        entity_id: key.entity_id,
        confidence: lerp(left.confidence, right.confidence, wl, wr),
        bbox,
        synthetic: true,
    })
}

/// Original records in their original order, followed by one synthetic
/// record per missing keyframe of every eligible gap.
pub fn apply_ide(
    table: &DetectionTable,
    shots: &ShotIndexTable,
    params: &IdeParams,
) -> Result<DetectionTable> {
    let gaps = eligible_gaps(table, shots, params)?;
    let mut records = table.records().to_vec();
    for (gap, l, r) in gaps {
        for k in gap.missing() {
            records.push(interpolate_gap(l, r, k)?);
        }
    }
    DetectionTable::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Shot;
    use alloc::vec;

    fn det(kf: Keyframe, conf: f64, bbox: Option<Rect>) -> DetectionRecord {
        DetectionRecord {
            video_id: "v1".into(),
            shot_id: "s1".into(),
            keyframe: kf,
            kind: EntityKind::Person,
            entity_id: "max".into(),
            confidence: conf,
            bbox,
            synthetic: false,
        }
    }

    fn shots() -> ShotIndexTable {
        ShotIndexTable::new(vec![Shot {
            video_id: "v1".into(),
            shot_id: "s1".into(),
            ordinal: 0,
            keyframe_start: 0,
            keyframe_end: 40,
        }])
        .unwrap()
    }

    #[test]
    fn gap_between_three_and_six() {
        let t = DetectionTable::new(vec![det(3, 0.9, None), det(6, 0.6, None)]).unwrap();
        let gaps = find_gaps(&t, &shots(), &IdeParams::default()).unwrap();
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].missing().collect::<Vec<_>>(), [4, 5]);
        assert_eq!(gaps[0].offsets(4), Some((1, 2)));

        let filled = apply_ide(&t, &shots(), &IdeParams::default()).unwrap();
        let kfs: Vec<_> = filled.iter().map(|r| r.keyframe).collect();
        assert_eq!(kfs, [3, 6, 4, 5]);
        assert!(filled.records()[2].synthetic);
    }

    #[test]
    fn span_over_cap_is_skipped() {
        let t = DetectionTable::new(vec![det(3, 0.9, None), det(20, 0.6, None)]).unwrap();
        assert!(find_gaps(&t, &shots(), &IdeParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn consecutive_keyframes_have_no_gap() {
        let t = DetectionTable::new(vec![det(3, 0.9, None), det(4, 0.6, None)]).unwrap();
        assert!(find_gaps(&t, &shots(), &IdeParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn interpolation_weights() {
        // m = 1, n = 2
        let r = interpolate_gap(&det(4, 0.9, None), &det(7, 0.6, None), 5).unwrap();
        assert!((r.confidence - 0.8).abs() < 1e-12);
        assert!(r.bbox.is_none());

        let r = interpolate_gap(&det(0, 0.4, None), &det(4, 0.8, None), 2).unwrap();
        assert!((r.confidence - 0.6).abs() < 1e-12);
    }

    #[test]
    fn constant_endpoints_give_constant_fill() {
        let b = Rect::new(1.0, 2.0, 30.0, 40.0).unwrap();
        let l = det(2, 0.7, Some(b));
        let r = det(9, 0.7, Some(b));
        for k in 3..9 {
            let x = interpolate_gap(&l, &r, k).unwrap();
            assert_eq!(x.confidence, 0.7);
            assert_eq!(x.bbox, Some(b));
        }
    }

    #[test]
    fn keyframe_outside_gap_is_rejected() {
        let l = det(2, 0.7, None);
        let r = det(5, 0.7, None);
        assert!(matches!(
            interpolate_gap(&l, &r, 2),
            Err(Error::OutsideGap { .. })
        ));
        assert!(matches!(
            interpolate_gap(&l, &r, 6),
            Err(Error::OutsideGap { .. })
        ));
        let mut other = det(5, 0.7, None);
        other.entity_id = "peggy".into();
        assert_eq!(interpolate_gap(&l, &other, 3), Err(Error::TrackMismatch));
    }

    #[test]
    fn single_detection_and_empty_tables_are_unchanged() {
        let empty = DetectionTable::default();
        assert!(apply_ide(&empty, &shots(), &IdeParams::default())
            .unwrap()
            .is_empty());
        let one = DetectionTable::new(vec![det(3, 0.9, None)]).unwrap();
        assert_eq!(
            apply_ide(&one, &shots(), &IdeParams::default()).unwrap(),
            one
        );
    }

    #[test]
    fn detection_outside_shot_is_a_consistency_error() {
        let t = DetectionTable::new(vec![det(3, 0.9, None), det(41, 0.6, None)]).unwrap();
        assert!(matches!(
            find_gaps(&t, &shots(), &IdeParams::default()),
            Err(Error::KeyframeOutOfRange { keyframe: 41, .. })
        ));
    }

    #[test]
    fn max_gap_below_two_rejected() {
        assert!(IdeParams::new(1).is_err());
        assert!(IdeParams::new(2).is_ok());
    }
}
