use insfuse::io;
use insfuse::Error;
use insfuse_core::{DetectionRecord, DetectionTable, EntityKind, Ranking, Rect};
use proptest::prelude::*;

fn ranking_strategy() -> impl Strategy<Value = Ranking> {
    (
        "[a-z0-9]{1,6}",
        prop::collection::btree_map("[a-z][a-z0-9_]{0,8}", 0.0f64..1000.0, 0..40),
    )
        .prop_map(|(topic, scores)| Ranking::from_scores(topic, "tag", scores).unwrap())
}

fn record_strategy() -> impl Strategy<Value = DetectionRecord> {
    (
        "v[0-9]",
        "s[0-9]{1,2}",
        0u32..50,
        prop::bool::ANY,
        "[pa][0-9]",
        0.0f64..=1.0,
        prop::option::of((0.0f64..100.0, 0.0f64..100.0, 0.5f64..50.0, 0.5f64..50.0)),
    )
        .prop_map(
            |(video_id, shot_id, keyframe, person, entity_id, confidence, b)| DetectionRecord {
                video_id,
                shot_id,
                keyframe,
                kind: if person {
                    EntityKind::Person
                } else {
                    EntityKind::Action
                },
                entity_id,
                confidence,
                bbox: b.map(|(x, y, w, h)| Rect::new(x, y, x + w, y + h).unwrap()),
                synthetic: false,
            },
        )
}

proptest! {
    #[test]
    fn run_text_is_a_fixed_point(rankings in prop::collection::vec(ranking_strategy(), 1..4)) {
        let mut seen = std::collections::BTreeSet::new();
        let rankings: Vec<Ranking> = rankings
            .into_iter()
            .filter(|r| !r.is_empty() && seen.insert(r.topic_id().to_string()))
            .collect();
        let text = io::write_runs(&rankings, 1000);
        let back = io::read_run(&text).unwrap();
        prop_assert_eq!(io::write_runs(&back, 1000), text);
        prop_assert_eq!(back.len(), rankings.len());
        for (a, b) in rankings.iter().zip(&back) {
            prop_assert_eq!(a.topic_id(), b.topic_id());
            prop_assert_eq!(a.shot_ids().collect::<Vec<_>>(), b.shot_ids().collect::<Vec<_>>());
            for ((_, x), (_, y)) in a.entries().iter().zip(b.entries()) {
                prop_assert!((x - y).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn depth_truncates_runs(r in ranking_strategy(), depth in 1usize..50) {
        let text = io::write_run(&r, depth);
        prop_assert_eq!(text.lines().count(), r.len().min(depth));
    }

    #[test]
    fn detections_round_trip(records in prop::collection::vec(record_strategy(), 0..30)) {
        let mut seen = std::collections::BTreeSet::new();
        let records: Vec<DetectionRecord> = records
            .into_iter()
            .filter(|r| seen.insert((r.video_id.clone(), r.shot_id.clone(), r.keyframe, r.kind, r.entity_id.clone())))
            .collect();
        let table = DetectionTable::new(records).unwrap();
        let text = io::write_detections(&table);
        let back = io::load_detections(&text).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(io::write_detections(&back), text);
    }
}

#[test]
fn run_errors_name_the_line() {
    let err = io::read_run("1 Q0 a 1 0.5 t\n1 Q0 b x 0.4 t\n").unwrap_err();
    assert!(
        matches!(
            err,
            Error::Parse {
                line: 2,
                field: "rank",
                ..
            }
        ),
        "{err}"
    );
    let err = io::read_run("1 Q0 a 1 0.5 t\n1 Q0 b 2 0.9 t\n").unwrap_err();
    assert!(err.to_string().contains("non-monotone scores"), "{err}");
    assert!(err.to_string().starts_with("line 2"), "{err}");
}

#[test]
fn detection_errors_name_line_and_field() {
    let ok = "v\ts\t1\tperson\tp\t0.5\t-\t-\t-\t-\n";
    let err =
        io::load_detections(&format!("{ok}v\ts\t2\tperson\tp\t1.5\t-\t-\t-\t-\n")).unwrap_err();
    assert!(err.to_string().starts_with("line 2"), "{err}");
    let err =
        io::load_detections(&format!("\n{ok}v\ts\t2\tperson\tp\t0.5\t1\t-\t-\t-\n")).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Parse {
                line: 3,
                field: "y1",
                ..
            }
        ),
        "{err}"
    );
    let err = io::load_detections(&format!("{ok}{ok}")).unwrap_err();
    assert!(matches!(err, Error::Invalid { line: 2, .. }), "{err}");
}
