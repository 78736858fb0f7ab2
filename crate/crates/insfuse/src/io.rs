//! Text formats.
//!
//! Inputs are tab-separated, one record per line; blank lines are skipped.
//! Run files follow the trec submission layout
//! `topic_id Q0 shot_id rank score run_tag`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use insfuse_core::{
    DetectionRecord, DetectionTable, EntityKind, FeatureTable, Qrels, Ranking, Rect, Shot,
    ShotIndexTable, Topic,
};

use crate::{Error, Result};

/// Box columns hold this when a detection has no box.
pub const NO_BOX: &str = "-";

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn columns(line: usize, text: &str, expected: usize) -> Result<Vec<&str>> {
    let cols: Vec<&str> = text.split('\t').collect();
    if cols.len() != expected {
        return Err(Error::parse(
            line,
            "columns",
            format!(
                "expected {expected} tab-separated fields, found {}",
                cols.len()
            ),
        ));
    }
    Ok(cols)
}

fn text_field(line: usize, field: &'static str, raw: &str) -> Result<String> {
    if raw.is_empty() {
        return Err(Error::parse(line, field, "empty"));
    }
    Ok(raw.to_string())
}

fn number<T: FromStr>(line: usize, field: &'static str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, field, format!("cannot parse {raw:?}")))
}

fn real(line: usize, field: &'static str, raw: &str) -> Result<f64> {
    let x: f64 = number(line, field, raw)?;
    if !x.is_finite() {
        return Err(Error::parse(
            line,
            field,
            format!("non-finite value {raw:?}"),
        ));
    }
    Ok(x)
}

fn invalid(line: usize, source: insfuse_core::Error) -> Error {
    Error::Invalid { line, source }
}

pub fn load_detections(text: &str) -> Result<DetectionTable> {
    const BOX_FIELDS: [&str; 4] = ["x1", "y1", "x2", "y2"];
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (n, l) in lines(text) {
        let c = columns(n, l, 10)?;
        let kind: EntityKind = c[3].parse().map_err(|_| {
            Error::parse(
                n,
                "entity_kind",
                format!("expected person or action, found {:?}", c[3]),
            )
        })?;
        let confidence = real(n, "confidence", c[5])?;
        let sentinels = c[6..].iter().filter(|s| **s == NO_BOX).count();
        let bbox = match sentinels {
            4 => None,
            0 => {
                let mut v = [0.0; 4];
                for (i, raw) in c[6..].iter().enumerate() {
                    v[i] = real(n, BOX_FIELDS[i], raw)?;
                }
                Some(Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| invalid(n, e))?)
            }
            _ => {
                let i = c[6..].iter().position(|s| *s == NO_BOX).unwrap_or(0);
                return Err(Error::parse(
                    n,
                    BOX_FIELDS[i],
                    "box must be all numbers or all \"-\"",
                ));
            }
        };
        let rec = DetectionRecord {
            video_id: text_field(n, "video_id", c[0])?,
            shot_id: text_field(n, "shot_id", c[1])?,
            keyframe: number(n, "keyframe", c[2])?,
            kind,
            entity_id: text_field(n, "entity_id", c[4])?,
            confidence,
            bbox,
            synthetic: false,
        };
        rec.validate().map_err(|e| invalid(n, e))?;
        let key = format!(
            "{}/{}/{}/{}/{}",
            rec.video_id, rec.shot_id, rec.keyframe, rec.kind, rec.entity_id
        );
        if let Some(first) = seen.insert(key.clone(), n) {
            return Err(invalid(
                n,
                insfuse_core::Error::DuplicateKey(format!("{key} (first on line {first})")),
            ));
        }
        records.push(rec);
    }
    Ok(DetectionTable::new(records)?)
}

/// Writes every record, synthetic ones included, in table order.
pub fn write_detections(table: &DetectionTable) -> String {
    let mut out = String::new();
    for r in table {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.video_id, r.shot_id, r.keyframe, r.kind, r.entity_id, r.confidence
        );
        match &r.bbox {
            Some(b) => {
                let _ = writeln!(out, "\t{}\t{}\t{}\t{}", b.x1, b.y1, b.x2, b.y2);
            }
            None => out.push_str("\t-\t-\t-\t-\n"),
        }
    }
    out
}

pub fn load_shots(text: &str) -> Result<ShotIndexTable> {
    let mut shots = Vec::new();
    let mut line_of: Vec<usize> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (n, l) in lines(text) {
        let c = columns(n, l, 5)?;
        let shot = Shot {
            video_id: text_field(n, "video_id", c[0])?,
            shot_id: text_field(n, "shot_id", c[1])?,
            ordinal: number(n, "ordinal", c[2])?,
            keyframe_start: number(n, "kf_start", c[3])?,
            keyframe_end: number(n, "kf_end", c[4])?,
        };
        if shot.keyframe_start > shot.keyframe_end {
            return Err(invalid(
                n,
                insfuse_core::Error::InvertedRange {
                    shot_id: shot.shot_id,
                    start: shot.keyframe_start,
                    end: shot.keyframe_end,
                },
            ));
        }
        if ids.insert(shot.shot_id.clone(), n).is_some() {
            return Err(invalid(n, insfuse_core::Error::DuplicateKey(shot.shot_id)));
        }
        shots.push(shot);
        line_of.push(n);
    }
    let lookup = |video: &str, ordinal: u32| {
        shots
            .iter()
            .zip(&line_of)
            .filter(|(s, _)| s.video_id == video && s.ordinal == ordinal)
            .map(|(_, &n)| n)
            .next_back()
            .unwrap_or(0)
    };
    match ShotIndexTable::new(shots.clone()) {
        Ok(t) => Ok(t),
        Err(e @ insfuse_core::Error::OrdinalGap { .. }) => {
            let insfuse_core::Error::OrdinalGap {
                video_id, found, ..
            } = &e
            else {
                unreachable!()
            };
            Err(invalid(lookup(video_id, *found), e))
        }
        Err(insfuse_core::Error::DuplicateKey(key)) => {
            let line = key
                .rsplit_once("/ordinal ")
                .and_then(|(v, o)| Some(lookup(v, o.parse().ok()?)))
                .unwrap_or(0);
            Err(invalid(line, insfuse_core::Error::DuplicateKey(key)))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn write_shots(table: &ShotIndexTable) -> String {
    let mut out = String::new();
    for s in table.shots() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.video_id, s.shot_id, s.ordinal, s.keyframe_start, s.keyframe_end
        );
    }
    out
}

pub fn load_topics(text: &str) -> Result<Vec<Topic>> {
    let mut topics: Vec<Topic> = Vec::new();
    for (n, l) in lines(text) {
        let c = columns(n, l, 3)?;
        let topic_id = text_field(n, "topic_id", c[0])?;
        if topics.iter().any(|t| t.topic_id == topic_id) {
            return Err(invalid(n, insfuse_core::Error::DuplicateKey(topic_id)));
        }
        let person = text_field(n, "person_id", c[1])?;
        let action = text_field(n, "action_id", c[2])?;
        topics.push(Topic::new(topic_id, person, action).map_err(|e| invalid(n, e))?);
    }
    Ok(topics)
}

pub fn write_topics(topics: &[Topic]) -> String {
    let mut out = String::new();
    for t in topics {
        let _ = writeln!(out, "{}\t{}\t{}", t.topic_id, t.person_id, t.action_id);
    }
    out
}

/// Vectors are renormalised to unit length on load.
pub fn load_features(text: &str) -> Result<FeatureTable> {
    let mut table = FeatureTable::new();
    for (n, l) in lines(text) {
        let mut c = l.split('\t');
        let shot = text_field(n, "shot_id", c.next().unwrap_or(""))?;
        let vector = c
            .map(|raw| real(n, "feature", raw))
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(Error::parse(n, "feature", "no feature values"));
        }
        table.insert(shot, vector).map_err(|e| invalid(n, e))?;
    }
    Ok(table)
}

pub fn write_features(table: &FeatureTable) -> String {
    let mut out = String::new();
    for (shot, v) in table.iter() {
        out.push_str(shot);
        for x in v {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

/// `topic_id iteration shot_id rel`, whitespace separated; the iteration
/// column is ignored and rel must be 0 or 1.
pub fn load_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (n, l) in lines(text) {
        let c: Vec<&str> = l.split_whitespace().collect();
        if c.len() != 4 {
            return Err(Error::parse(
                n,
                "columns",
                format!("expected 4 fields, found {}", c.len()),
            ));
        }
        let rel = match c[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    n,
                    "rel",
                    format!("expected 0 or 1, found {other:?}"),
                ))
            }
        };
        qrels.insert(c[0], c[2], rel).map_err(|e| invalid(n, e))?;
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (topic, shot, rel) in qrels.iter() {
        let _ = writeln!(out, "{topic} 0 {shot} {}", u8::from(rel));
    }
    out
}

/// The first `depth` entries, ranks from 1, scores with six decimals.
pub fn write_run(ranking: &Ranking, depth: usize) -> String {
    let mut out = String::new();
    append_run(&mut out, ranking, depth);
    out
}

/// Concatenates the rankings in order.
pub fn write_runs<'a, I>(rankings: I, depth: usize) -> String
where
    I: IntoIterator<Item = &'a Ranking>,
{
    let mut out = String::new();
    for r in rankings {
        append_run(&mut out, r, depth);
    }
    out
}

fn append_run(out: &mut String, ranking: &Ranking, depth: usize) {
    for (i, (shot, score)) in ranking.entries().iter().take(depth).enumerate() {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {:.6} {}",
            ranking.topic_id(),
            shot,
            i + 1,
            score,
            ranking.run_tag()
        );
    }
}

/// Groups lines by topic in order of first appearance. Within a topic,
/// ranks must count up from 1 and scores must not increase.
pub fn read_run(text: &str) -> Result<Vec<Ranking>> {
    struct Pending {
        topic: String,
        tag: String,
        entries: Vec<(String, f64)>,
        first_line: usize,
    }
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, l) in lines(text) {
        let c: Vec<&str> = l.split_whitespace().collect();
        if c.len() != 6 {
            return Err(Error::parse(
                n,
                "columns",
                format!("expected 6 fields, found {}", c.len()),
            ));
        }
        let rank: usize = number(n, "rank", c[3])?;
        let score = real(n, "score", c[4])?;
        let slot = *index.entry(c[0].to_string()).or_insert_with(|| {
            order.push(Pending {
                topic: c[0].to_string(),
                tag: c[5].to_string(),
                entries: Vec::new(),
                first_line: n,
            });
            order.len() - 1
        });
        let p = &mut order[slot];
        if rank != p.entries.len() + 1 {
            return Err(Error::parse(
                n,
                "rank",
                format!("expected rank {}, found {rank}", p.entries.len() + 1),
            ));
        }
        if p.entries.last().is_some_and(|&(_, prev)| score > prev) {
            return Err(invalid(
                n,
                insfuse_core::Error::NonMonotone(p.entries.len()),
            ));
        }
        p.entries.push((c[2].to_string(), score));
    }
    order
        .into_iter()
        .map(|p| Ranking::new(p.topic, p.tag, p.entries).map_err(|e| invalid(p.first_line, e)))
        .collect()
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
