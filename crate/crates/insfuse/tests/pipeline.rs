use std::fs;
use std::path::{Path, PathBuf};

use insfuse::config::PipelineConfig;
use insfuse::io;
use insfuse::pipeline::{execute, run_pipeline, PipelineData};
use insfuse::synth::{generate, SyntheticSpec};
use insfuse::Error;
use insfuse_core::fusion::fuse_topic;
use tempfile::TempDir;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

fn toy_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_file(&toy_dir().join("config.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
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
fn toy_final_run_matches_hand_computation() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.inputs.detections.truncate(1);
    cfg.stages.aggregate = false;
    run_pipeline(&cfg).unwrap();

    // s1: 0.8; s3: 0.4 (box-free action, no ICV); s2 gated by delta.
    // diffusion with theta 0.5, sigma 2:
    //   s2 = 0.5 * e^-0.5 * (0.8 + 0.4)
    //   s3 = 0.4 + 0.5 * e^-2 * (0.8 - 0.4)
    let s2 = 0.5 * (-0.5f64).exp() * 1.2;
    let s3 = 0.4 + 0.5 * (-2.0f64).exp() * 0.4;
    let want =
        format!("9001 Q0 s1 1 0.800000 toy\n9001 Q0 s3 2 {s3:.6} toy\n9001 Q0 s2 3 {s2:.6} toy\n");
    assert_eq!(read(tmp.path(), "final.run"), want);
    assert_eq!(
        read(tmp.path(), "fuse.0.run"),
        "9001 Q0 s1 1 0.800000 toy\n9001 Q0 s3 2 0.400000 toy\n"
    );
}

#[test]
fn fusion_only_output_equals_fuse_topic() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.stages.ste = false;
    cfg.stages.aggregate = false;
    run_pipeline(&cfg).unwrap();

    let data = PipelineData::load(&cfg).unwrap();
    let params = cfg.fusion_params().unwrap();
    for (i, table) in data.detections.iter().enumerate() {
        let rankings: Vec<_> = data
            .topics
            .iter()
            .map(|t| {
                fuse_topic(t, table, &data.shots, &params, "toy")
                    .unwrap()
                    .ranking
            })
            .collect();
        assert_eq!(
            read(tmp.path(), &format!("fuse.{i}.run")),
            io::write_runs(&rankings, 1000)
        );
    }
    assert_eq!(
        read(tmp.path(), "final.run"),
        read(tmp.path(), "fuse.0.run")
    );
    assert!(!tmp.path().join("ste.0.run").exists());
    assert!(!tmp.path().join("aggregate.run").exists());
}

#[test]
fn zero_theta_matches_ste_off() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut on = toy_config(a.path());
    on.ste.theta = 0.0;
    let mut off = toy_config(b.path());
    off.stages.ste = false;
    run_pipeline(&on).unwrap();
    run_pipeline(&off).unwrap();
    assert_eq!(read(a.path(), "final.run"), read(b.path(), "final.run"));
    assert_eq!(read(a.path(), "ste.0.run"), read(b.path(), "fuse.0.run"));
}

#[test]
fn aggregate_writes_every_stage_and_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = toy_config(tmp.path());
    let out = run_pipeline(&cfg).unwrap();
    for name in [
        "config.toml",
        "fuse.0.run",
        "fuse.1.run",
        "ste.0.run",
        "ste.1.run",
        "aggregate.run",
        "final.run",
        "report.json",
    ] {
        assert!(tmp.path().join(name).is_file(), "{name} missing");
    }
    assert_eq!(
        read(tmp.path(), "aggregate.run"),
        read(tmp.path(), "final.run")
    );
    let report: serde_json::Value = serde_json::from_str(&read(tmp.path(), "report.json")).unwrap();
    let diag = &report["aggregate"][0];
    assert_eq!(diag["topic_id"], "9001");
    let alphas: Vec<f64> = diag["alphas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_f64().unwrap())
        .collect();
    assert_eq!(alphas.len(), 2);
    assert!((alphas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(out.final_runs[0].len(), 3);

    let saved = PipelineConfig::from_toml(&read(tmp.path(), "config.toml")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let data = generate(&SyntheticSpec {
        seed: 9,
        ..SyntheticSpec::default()
    })
    .unwrap();
    data.write(tmp.path()).unwrap();
    let run = |out: &str| {
        let mut cfg = PipelineConfig::new(
            vec![tmp.path().join("detections.tsv")],
            tmp.path().join("shots.tsv"),
            tmp.path().join("topics.tsv"),
            tmp.path().join(out),
        );
        cfg.stages.icv = true;
        run_pipeline(&cfg).unwrap();
        dir_contents(&tmp.path().join(out))
    };
    let (a, b) = (run("a"), run("b"));
    let strip = |files: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        files
            .into_iter()
            .filter(|(n, _)| n != "config.toml")
            .collect()
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn bad_knob_is_tagged_with_its_stage() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.ste.sigma = 0.0;
    let data = PipelineData::load(&cfg).unwrap();
    match execute(&cfg, &data).unwrap_err() {
        Error::Stage { stage, topic, .. } => {
            assert_eq!(stage, "ste");
            assert_eq!(topic, None);
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn unknown_shot_is_tagged_with_stage_and_topic() {
    let tmp = TempDir::new().unwrap();
    let dets = tmp.path().join("dets.tsv");
    fs::write(&dets, "v1\tmissing\t1\tperson\tp1\t0.9\t-\t-\t-\t-\n").unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.inputs.detections = vec![dets];
    cfg.stages.aggregate = false;
    let err = run_pipeline(&cfg).unwrap_err();
    let text = err.to_string();
    match err {
        Error::Stage { stage, topic, .. } => {
            assert_eq!(stage, "fuse");
            assert_eq!(topic.as_deref(), Some("9001"));
        }
        e => panic!("unexpected error {e}"),
    }
    assert!(text.contains("topic 9001"), "{text}");
}

#[test]
fn aggregate_needs_two_lists() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.inputs.detections.truncate(1);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("at least 2"), "{err}");
}

#[test]
fn missing_input_is_reported_before_any_output() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = toy_config(&tmp.path().join("out"));
    cfg.inputs.shots = tmp.path().join("nope.tsv");
    assert!(run_pipeline(&cfg).is_err());
    assert!(!tmp.path().join("out").exists());
}
