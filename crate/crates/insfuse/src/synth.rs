//! Seeded synthetic corpora.
//!
//! Relevant shots come in temporal runs per topic. Inside a relevant shot
//! the topic's person and action are detected with high confidence and
//! co-occur, although interior keyframes of a track may be dropped. Other
//! entities appear as low-confidence distractors. Shot features form one
//! cluster per topic plus a background cluster.

use std::fs;
use std::path::Path;

use insfuse_core::{
    DetectionRecord, DetectionTable, EntityKind, FeatureTable, Keyframe, Qrels, Rect, Shot,
    ShotIndexTable, Topic,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub videos: usize,
    pub shots_per_video: usize,
    pub keyframes_per_shot: u32,
    pub persons: usize,
    pub actions: usize,
    pub topics: usize,
    /// Expected fraction of shots relevant to a topic.
    pub relevance_rate: f64,
    /// Largest amount subtracted from a high-band confidence.
    pub detector_noise: f64,
    /// Chance that an interior keyframe of a track is not detected.
    pub dropout_rate: f64,
    /// Chance that the topic person's face in a relevant shot scores low.
    pub miss_rate: f64,
    pub feature_dim: usize,
    /// Norm of the noise added to each feature vector.
    pub feature_noise: f64,
    /// Mean length of a run of consecutive relevant shots.
    pub action_run_length: f64,
    /// Action detector variants; each gets its own detections file.
    pub action_detectors: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 42,
            videos: 4,
            shots_per_video: 40,
            keyframes_per_shot: 6,
            persons: 6,
            actions: 5,
            topics: 4,
            relevance_rate: 0.15,
            detector_noise: 0.15,
            dropout_rate: 0.3,
            miss_rate: 0.3,
            feature_dim: 16,
            feature_noise: 0.8,
            action_run_length: 3.0,
            action_detectors: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("videos", self.videos),
            ("shots_per_video", self.shots_per_video),
            ("keyframes_per_shot", self.keyframes_per_shot as usize),
            ("persons", self.persons),
            ("actions", self.actions),
            ("topics", self.topics),
            ("feature_dim", self.feature_dim),
            ("action_detectors", self.action_detectors),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let rates = [
            ("relevance_rate", self.relevance_rate),
            ("detector_noise", self.detector_noise),
            ("dropout_rate", self.dropout_rate),
            ("miss_rate", self.miss_rate),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Config(
                "feature_noise must be finite and >= 0".into(),
            ));
        }
        if !(self.action_run_length >= 1.0 && self.action_run_length.is_finite()) {
            return Err(Error::Config(
                "action_run_length must be finite and >= 1".into(),
            ));
        }
        if self.topics > self.persons * self.actions {
            return Err(Error::Config(format!(
                "{} topics need more than {} person/action pairs",
                self.topics,
                self.persons * self.actions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub shots: ShotIndexTable,
    pub topics: Vec<Topic>,
    /// One table per action detector.
    pub detections: Vec<DetectionTable>,
    pub features: FeatureTable,
    /// Every (topic, shot) pair is judged.
    pub qrels: Qrels,
}

const FRAME_W: f64 = 640.0;
const FRAME_H: f64 = 360.0;

fn round_to(x: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (x * m).round() / m
}

fn high(rng: &mut ChaCha8Rng, noise: f64) -> f64 {
    (rng.random_range(0.7..=1.0) - noise * rng.random::<f64>()).clamp(0.0, 1.0)
}

fn low(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.0..0.6)
}

struct Track {
    kind: EntityKind,
    entity: String,
    relevant: bool,
    keyframes: Vec<Keyframe>,
    /// The actor's face for a relevant action.
    face: Option<Rect>,
    base: f64,
}

fn random_face(rng: &mut ChaCha8Rng) -> Rect {
    let s = rng.random_range(40.0..80.0);
    let x = rng.random_range(30.0..FRAME_W - s - 30.0);
    let y = rng.random_range(10.0..FRAME_H - s - 150.0);
    Rect {
        x1: x,
        y1: y,
        x2: x + s,
        y2: y + s,
    }
}

fn random_body(rng: &mut ChaCha8Rng) -> Rect {
    let w = rng.random_range(60.0..140.0);
    let h = rng.random_range(80.0..160.0);
    let x = rng.random_range(0.0..FRAME_W - w);
    let y = rng.random_range(0.0..FRAME_H - h);
    Rect {
        x1: x,
        y1: y,
        x2: x + w,
        y2: y + h,
    }
}

/// Body box around a face; covers the face completely.
fn body_around(face: &Rect) -> Rect {
    Rect {
        x1: face.x1 - 30.0,
        y1: face.y1 - 10.0,
        x2: face.x2 + 30.0,
        y2: face.y2 + 150.0,
    }
}

fn jitter(rng: &mut ChaCha8Rng, r: &Rect) -> Rect {
    let dx = rng.random_range(-2.0..=2.0);
    let dy = rng.random_range(-2.0..=2.0);
    Rect {
        x1: round_to(r.x1 + dx, 1),
        y1: round_to(r.y1 + dy, 1),
        x2: round_to(r.x2 + dx, 1),
        y2: round_to(r.y2 + dy, 1),
    }
}

/// Keeps the endpoints of a span and drops interior keyframes at `rate`.
fn thin(rng: &mut ChaCha8Rng, start: Keyframe, end: Keyframe, rate: f64) -> Vec<Keyframe> {
    (start..=end)
        .filter(|&k| k == start || k == end || !rng.random_bool(rate))
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kf = spec.keyframes_per_shot;

    let mut shots = Vec::new();
    for v in 0..spec.videos {
        for o in 0..spec.shots_per_video {
            let start = o as u32 * kf;
            shots.push(Shot {
                video_id: format!("v{:02}", v + 1),
                shot_id: format!("shot{}_{}", v + 1, o + 1),
                ordinal: o as u32,
                keyframe_start: start,
                keyframe_end: start + kf - 1,
            });
        }
    }

    let mut pairs: Vec<(usize, usize)> = (0..spec.persons)
        .flat_map(|p| (0..spec.actions).map(move |a| (p, a)))
        .collect();
    pairs.shuffle(&mut rng);
    let topics: Vec<Topic> = pairs[..spec.topics]
        .iter()
        .enumerate()
        .map(|(t, &(p, a))| Topic {
            topic_id: format!("{}", 9301 + t),
            person_id: format!("p{p}"),
            action_id: format!("a{a}"),
        })
        .collect();

    // relevance runs: a two-state chain whose stationary share of relevant
    // shots is relevance_rate and whose runs have the requested mean length
    let pi = spec.relevance_rate;
    let stay = 1.0 - 1.0 / spec.action_run_length;
    let start_p = if pi >= 1.0 {
        1.0
    } else {
        (pi / (spec.action_run_length * (1.0 - pi))).min(1.0)
    };
    let mut relevant = vec![vec![false; shots.len()]; topics.len()];
    for row in relevant.iter_mut() {
        let mut on = false;
        for (i, s) in shots.iter().enumerate() {
            if s.ordinal == 0 {
                on = false;
            }
            on = if on {
                rng.random_bool(stay)
            } else {
                rng.random_bool(start_p)
            };
            row[i] = on;
        }
    }

    let mut qrels = Qrels::new();
    for (t, topic) in topics.iter().enumerate() {
        for (i, s) in shots.iter().enumerate() {
            qrels.insert(topic.topic_id.clone(), s.shot_id.clone(), relevant[t][i])?;
        }
    }

    // scene layout, shared by every detector
    let mut scenes: Vec<Vec<Track>> = Vec::with_capacity(shots.len());
    for (i, s) in shots.iter().enumerate() {
        let rel_topics: Vec<&Topic> = topics
            .iter()
            .enumerate()
            .filter(|(t, _)| relevant[*t][i])
            .map(|(_, t)| t)
            .collect();
        let mut tracks = Vec::new();
        for p in 0..spec.persons {
            let id = format!("p{p}");
            let rel = rel_topics.iter().any(|t| t.person_id == id);
            if !rel && !rng.random_bool(0.2) {
                continue;
            }
            let len = rng.random_range(kf.min(3)..=kf);
            let a = s.keyframe_start + rng.random_range(0..=kf - len);
            let base = if rel && !rng.random_bool(spec.miss_rate) {
                high(&mut rng, spec.detector_noise)
            } else {
                low(&mut rng)
            };
            tracks.push(Track {
                kind: EntityKind::Person,
                entity: id,
                relevant: rel,
                keyframes: thin(&mut rng, a, a + len - 1, spec.dropout_rate),
                face: Some(random_face(&mut rng)),
                base,
            });
        }
        for a in 0..spec.actions {
            let id = format!("a{a}");
            let actor = rel_topics
                .iter()
                .find(|t| t.action_id == id)
                .and_then(|t| tracks.iter().position(|tr| tr.entity == t.person_id));
            if actor.is_none() && !rng.random_bool(0.2) {
                continue;
            }
            let (start, end, face) = match actor {
                Some(j) => {
                    // a short action inside the actor's track, away from its
                    // endpoints when the track is long enough
                    let ks = &tracks[j].keyframes;
                    let (f, l) = (ks[0], ks[ks.len() - 1]);
                    let (lo, hi) = if l - f >= 2 { (f + 1, l - 1) } else { (f, l) };
                    let st = rng.random_range(lo..=hi);
                    let en = (st + rng.random_range(0..=1)).min(hi);
                    (st, en, tracks[j].face)
                }
                None => {
                    let len = rng.random_range(1..=kf);
                    let st = s.keyframe_start + rng.random_range(0..=kf - len);
                    (st, st + len - 1, None)
                }
            };
            tracks.push(Track {
                kind: EntityKind::Action,
                entity: id,
                relevant: actor.is_some(),
                keyframes: thin(&mut rng, start, end, spec.dropout_rate),
                face,
                base: 0.0,
            });
        }
        scenes.push(tracks);
    }

    let mut detections = Vec::with_capacity(spec.action_detectors);
    for d in 0..spec.action_detectors {
        let mut drng = ChaCha8Rng::seed_from_u64(spec.seed);
        drng.set_stream(d as u64 + 1);
        let mut records = Vec::new();
        for (s, tracks) in shots.iter().zip(&scenes) {
            for tr in tracks {
                let base = match tr.kind {
                    EntityKind::Person => tr.base,
                    EntityKind::Action if tr.relevant => high(&mut drng, spec.detector_noise),
                    EntityKind::Action => low(&mut drng),
                };
                let body = match (&tr.kind, &tr.face) {
                    (EntityKind::Action, None) => Some(random_body(&mut drng)),
                    _ => None,
                };
                for &k in &tr.keyframes {
                    let conf =
                        round_to((base + drng.random_range(-0.05..=0.05)).clamp(0.0, 1.0), 4);
                    let bbox = match (tr.kind, &tr.face, &body) {
                        (EntityKind::Person, Some(f), _) => jitter(&mut drng, f),
                        (EntityKind::Action, Some(f), _) => jitter(&mut drng, &body_around(f)),
                        (_, _, Some(b)) => jitter(&mut drng, b),
                        _ => unreachable!("every track has a box"),
                    };
                    records.push(DetectionRecord {
                        video_id: s.video_id.clone(),
                        shot_id: s.shot_id.clone(),
                        keyframe: k,
                        kind: tr.kind,
                        entity_id: tr.entity.clone(),
                        confidence: conf,
                        bbox: Some(bbox),
                        synthetic: false,
                    });
                }
            }
        }
        detections.push(DetectionTable::new(records)?);
    }

    let dim = spec.feature_dim;
    let unit = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let centres: Vec<Vec<f64>> = (0..topics.len()).map(|_| unit(&mut rng)).collect();
    let background = unit(&mut rng);
    let scale = spec.feature_noise / (dim as f64).sqrt();
    let mut features = FeatureTable::new();
    for (i, s) in shots.iter().enumerate() {
        let mut v = vec![0.0; dim];
        let mut any = false;
        for (t, c) in centres.iter().enumerate() {
            if relevant[t][i] {
                any = true;
                v.iter_mut().zip(c).for_each(|(x, y)| *x += y);
            }
        }
        if !any {
            v.copy_from_slice(&background);
        }
        for x in v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = round_to(*x + scale * z, 6);
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        features.insert(s.shot_id.clone(), v)?;
    }

    Ok(SyntheticData {
        spec: spec.clone(),
        shots: ShotIndexTable::new(shots)?,
        topics,
        detections,
        features,
        qrels,
    })
}

impl SyntheticData {
    /// File name of detector `d`'s detections.
    pub fn detections_file(d: usize) -> String {
        if d == 0 {
            "detections.tsv".into()
        } else {
            format!("detections.{d}.tsv")
        }
    }

    /// Writes `shots.tsv`, `topics.tsv`, `detections*.tsv`, `features.tsv`,
    /// `qrels.txt` and the generating `synth.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| io::write_atomic(&dir.join(name), body.as_bytes());
        put("shots.tsv", io::write_shots(&self.shots))?;
        put("topics.tsv", io::write_topics(&self.topics))?;
        for (d, t) in self.detections.iter().enumerate() {
            put(&Self::detections_file(d), io::write_detections(t))?;
        }
        put("features.tsv", io::write_features(&self.features))?;
        put("qrels.txt", io::write_qrels(&self.qrels))?;
        put(
            "synth.toml",
            toml::to_string(&self.spec).expect("spec serialises"),
        )
    }
}
