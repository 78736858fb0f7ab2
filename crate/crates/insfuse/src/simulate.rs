//! Feedback rounds driven by a qrels oracle.

use insfuse_core::eval::average_precision;
use insfuse_core::feedback::{
    apply_label, caaf_init, caaf_ranking, caaf_recommend, caaf_step, oracle_annotate,
    topk_candidates, topk_rearrange, CaafParams, LabelSet, TopKStrategy,
};
use insfuse_core::{FeatureTable, Qrels, Ranking};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    TopK(TopKStrategy),
    Caaf(CaafParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub round: usize,
    pub labels_used: usize,
    /// `None` when the topic has no relevant shot.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub ranking: Ranking,
    /// Round 0 is the input ranking.
    pub curve: Vec<CurvePoint>,
}

/// Runs `rounds` feedback rounds on one topic. Each round the oracle labels
/// the strategy's recommendations: the first `k` unlabeled shots for top-K,
/// a `batch` of confident unlabeled shots for CAAF.
pub fn simulate_topic(
    ranking: &Ranking,
    qrels: &Qrels,
    features: Option<&FeatureTable>,
    strategy: &Strategy,
    rounds: usize,
    depth: usize,
) -> Result<Simulation> {
    let topic = ranking.topic_id().to_string();
    let ap = |r: &Ranking| average_precision(r, qrels, depth).ok();
    let mut curve = vec![CurvePoint {
        round: 0,
        labels_used: 0,
        ap: ap(ranking),
    }];
    let mut labels = LabelSet::new();
    let current = match strategy {
        Strategy::TopK(s) => {
            let mut current = ranking.clone();
            for round in 1..=rounds {
                let pick = topk_candidates(&current, &labels, s.k);
                labels
                    .extend(oracle_annotate(qrels, &topic, pick.iter().map(String::as_str)).iter());
                current = topk_rearrange(ranking, &labels, s)?;
                curve.push(CurvePoint {
                    round,
                    labels_used: labels.len(),
                    ap: ap(&current),
                });
            }
            current
        }
        Strategy::Caaf(p) => {
            let features = features
                .ok_or_else(|| Error::Config("the caaf strategy needs shot features".into()))?;
            let mut state = caaf_init(ranking, features, p)?;
            let mut current = caaf_ranking(&state);
            for round in 1..=rounds {
                let pick = caaf_recommend(&state, p.batch);
                let new = oracle_annotate(qrels, &topic, pick.iter().map(String::as_str));
                for l in new.iter() {
                    state = apply_label(&state, &l)?;
                }
                labels.extend(new.iter());
                state = caaf_step(&state)?;
                current = caaf_ranking(&state);
                curve.push(CurvePoint {
                    round,
                    labels_used: labels.len(),
                    ap: ap(&current),
                });
            }
            current
        }
    };
    Ok(Simulation {
        ranking: current,
        curve,
    })
}

/// `topic round labels_used AP` rows, tab separated, with a header.
pub fn write_curves<'a, I>(sims: I) -> String
where
    I: IntoIterator<Item = &'a Simulation>,
{
    let mut out = String::from("topic\tround\tlabels_used\tAP\n");
    for s in sims {
        for p in &s.curve {
            let ap = p.ap.map_or_else(|| "-".to_string(), |a| format!("{a:.6}"));
            out.push_str(&format!(
                "{}\t{}\t{}\t{ap}\n",
                s.ranking.topic_id(),
                p.round,
                p.labels_used
            ));
        }
    }
    out
}
