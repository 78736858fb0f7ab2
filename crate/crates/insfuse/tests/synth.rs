use std::fs;
use std::path::Path;

use insfuse::io;
use insfuse::synth::{generate, SyntheticSpec};
use insfuse_core::ide::{apply_ide, IdeParams};
use tempfile::TempDir;

fn contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let spec = SyntheticSpec {
        seed: 7,
        action_detectors: 2,
        ..SyntheticSpec::default()
    };
    generate(&spec).unwrap().write(a.path()).unwrap();
    generate(&spec).unwrap().write(b.path()).unwrap();
    let files = contents(a.path());
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "detections.1.tsv",
            "detections.tsv",
            "features.tsv",
            "qrels.txt",
            "shots.tsv",
            "synth.toml",
            "topics.tsv"
        ]
    );
    assert_eq!(files, contents(b.path()));
}

#[test]
fn different_seeds_differ() {
    let a = generate(&SyntheticSpec {
        seed: 1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let b = generate(&SyntheticSpec {
        seed: 2,
        ..SyntheticSpec::default()
    })
    .unwrap();
    assert_ne!(a.detections, b.detections);
}

#[test]
fn written_files_load_back() {
    let dir = TempDir::new().unwrap();
    let data = generate(&SyntheticSpec::default()).unwrap();
    data.write(dir.path()).unwrap();
    let read = |n: &str| fs::read_to_string(dir.path().join(n)).unwrap();
    assert_eq!(io::load_shots(&read("shots.tsv")).unwrap(), data.shots);
    assert_eq!(io::load_topics(&read("topics.tsv")).unwrap(), data.topics);
    assert_eq!(
        io::load_detections(&read("detections.tsv")).unwrap(),
        data.detections[0]
    );
    assert_eq!(io::load_qrels(&read("qrels.txt")).unwrap(), data.qrels);
    let spec: SyntheticSpec = toml::from_str(&read("synth.toml")).unwrap();
    assert_eq!(spec, data.spec);
}

#[test]
fn no_dropout_leaves_nothing_to_interpolate() {
    let data = generate(&SyntheticSpec {
        dropout_rate: 0.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let table = &data.detections[0];
    let filled = apply_ide(table, &data.shots, &IdeParams::new(10).unwrap()).unwrap();
    assert_eq!(filled.iter().filter(|r| r.synthetic).count(), 0);
    assert_eq!(&filled, table);
}

#[test]
fn dropout_leaves_gaps_for_ide() {
    let data = generate(&SyntheticSpec::default()).unwrap();
    let filled = apply_ide(
        &data.detections[0],
        &data.shots,
        &IdeParams::new(10).unwrap(),
    )
    .unwrap();
    assert!(filled.iter().any(|r| r.synthetic));
}

#[test]
fn zero_relevance_judges_everything_negative() {
    let data = generate(&SyntheticSpec {
        relevance_rate: 0.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    assert!(data.qrels.iter().count() > 0);
    assert!(data.qrels.iter().all(|(_, _, rel)| !rel));
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        SyntheticSpec {
            videos: 0,
            ..SyntheticSpec::default()
        },
        SyntheticSpec {
            relevance_rate: 1.5,
            ..SyntheticSpec::default()
        },
        SyntheticSpec {
            dropout_rate: -0.1,
            ..SyntheticSpec::default()
        },
    ] {
        assert!(generate(&spec).is_err(), "{spec:?}");
    }
}
