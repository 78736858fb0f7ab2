//! IDE, fusion, STE and rank aggregation chained per config.

use std::fs;
use std::num::NonZeroUsize;
use std::thread;

use insfuse_core::aggregate::{hq_aggregate, normalize_ranks, HqParams};
use insfuse_core::fusion::{fuse_topic, FusionWarning};
use insfuse_core::ide::apply_ide;
use insfuse_core::ste::apply_ste;
use insfuse_core::{DetectionTable, Ranking, ShotIndexTable, Topic};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::{io, Error, Result};

/// Everything the pipeline reads, already parsed.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub detections: Vec<DetectionTable>,
    pub shots: ShotIndexTable,
    pub topics: Vec<Topic>,
    /// Extra runs, one list of per-topic rankings per file.
    pub runs: Vec<Vec<Ranking>>,
}

impl PipelineData {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let load =
            |stage, p: &std::path::Path| io::read_file(p).map_err(|e| Error::stage(stage, None, e));
        let shots = io::load_shots(&load("load", &cfg.inputs.shots)?)
            .map_err(|e| Error::stage("load", None, e))?;
        let topics = io::load_topics(&load("load", &cfg.inputs.topics)?)
            .map_err(|e| Error::stage("load", None, e))?;
        let detections = cfg
            .inputs
            .detections
            .iter()
            .map(|p| {
                io::load_detections(&load("load", p)?).map_err(|e| Error::stage("load", None, e))
            })
            .collect::<Result<_>>()?;
        let runs = cfg
            .inputs
            .runs
            .iter()
            .map(|p| io::read_run(&load("load", p)?).map_err(|e| Error::stage("load", None, e)))
            .collect::<Result<_>>()?;
        Ok(PipelineData {
            detections,
            shots,
            topics,
            runs,
        })
    }
}

/// Maps `f` over `items` on scoped threads; results keep input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = thread::available_parallelism().map_or(1, NonZeroUsize::get);
    if threads < 2 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("topic worker panicked"))
            .collect()
    })
}

/// Outputs of one detection file.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutput {
    /// Detections after gap filling, when IDE ran.
    pub ide: Option<DetectionTable>,
    pub fused: Vec<Ranking>,
    pub ste: Option<Vec<Ranking>>,
}

impl VariantOutput {
    /// The last stage's rankings.
    pub fn rankings(&self) -> &[Ranking] {
        self.ste.as_deref().unwrap_or(&self.fused)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateDiagnostics {
    pub topic_id: String,
    /// Source of each aggregated list, aligned with `alphas`.
    pub lists: Vec<String>,
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub topics: usize,
    pub ranked_shots: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StageReport {
    pub stages: Vec<StageSummary>,
    pub synthetic_detections: Vec<usize>,
    pub warnings: Vec<String>,
    pub aggregate: Vec<AggregateDiagnostics>,
}

impl StageReport {
    fn add(&mut self, stage: String, rankings: &[Ranking]) {
        self.stages.push(StageSummary {
            stage,
            topics: rankings.len(),
            ranked_shots: rankings.iter().map(Ranking::len).sum(),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub variants: Vec<VariantOutput>,
    pub aggregated: Option<Vec<Ranking>>,
    /// Aggregated rankings, or the first variant's when aggregation is off.
    pub final_runs: Vec<Ranking>,
    pub report: StageReport,
}

/// Runs the enabled stages in memory. Rankings come out in topic file
/// order and carry the configured run tag.
pub fn execute(cfg: &PipelineConfig, data: &PipelineData) -> Result<PipelineOutput> {
    let fusion = cfg
        .fusion_params()
        .map_err(|e| Error::stage("fuse", None, e))?;
    let ide = cfg.ide_params().map_err(|e| Error::stage("ide", None, e))?;
    let ste = cfg.ste_params().map_err(|e| Error::stage("ste", None, e))?;
    let hq = cfg
        .hq_params()
        .map_err(|e| Error::stage("aggregate", None, e))?;
    let tag = cfg.run_tag.as_str();
    let mut report = StageReport::default();

    let mut variants = Vec::with_capacity(data.detections.len());
    for (i, table) in data.detections.iter().enumerate() {
        let filled = if cfg.stages.ide {
            let t =
                apply_ide(table, &data.shots, &ide).map_err(|e| Error::stage("ide", None, e))?;
            report
                .synthetic_detections
                .push(t.iter().filter(|r| r.synthetic).count());
            Some(t)
        } else {
            None
        };
        let source = filled.as_ref().unwrap_or(table);

        let outs = par_map(&data.topics, |topic| {
            fuse_topic(topic, source, &data.shots, &fusion, tag)
                .map_err(|e| Error::stage("fuse", Some(&topic.topic_id), e))
        });
        let mut fused = Vec::with_capacity(data.topics.len());
        for (topic, out) in data.topics.iter().zip(outs) {
            let out = out?;
            for w in out.warnings {
                let msg = match w {
                    FusionWarning::UnknownPerson(p) => {
                        format!(
                            "detections {i}: topic {}: no detections of person {p}",
                            topic.topic_id
                        )
                    }
                    FusionWarning::UnknownAction(a) => {
                        format!(
                            "detections {i}: topic {}: no detections of action {a}",
                            topic.topic_id
                        )
                    }
                };
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
            fused.push(out.ranking);
        }
        report.add(format!("fuse.{i}"), &fused);

        let diffused = if cfg.stages.ste {
            let r = par_map(&fused, |r| {
                apply_ste(r, &data.shots, &ste)
                    .map_err(|e| Error::stage("ste", Some(r.topic_id()), e))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            report.add(format!("ste.{i}"), &r);
            Some(r)
        } else {
            None
        };
        variants.push(VariantOutput {
            ide: filled,
            fused,
            ste: diffused,
        });
    }

    let aggregated = if cfg.stages.aggregate {
        let per_topic = par_map(&data.topics, |topic| {
            aggregate_topic(&topic.topic_id, &variants, &data.runs, &hq, tag)
        });
        let mut out = Vec::with_capacity(data.topics.len());
        for r in per_topic {
            let (ranking, diag) = r?;
            if let Some(d) = diag {
                if !d.converged {
                    log::warn!(
                        "topic {}: aggregation stopped after {} iterations",
                        d.topic_id,
                        d.iterations
                    );
                }
                report.aggregate.push(d);
            }
            out.push(ranking);
        }
        report.add("aggregate".into(), &out);
        Some(out)
    } else {
        None
    };

    let final_runs = match &aggregated {
        Some(a) => a.clone(),
        None => variants
            .first()
            .map(|v| v.rankings().to_vec())
            .unwrap_or_default(),
    };
    Ok(PipelineOutput {
        variants,
        aggregated,
        final_runs,
        report,
    })
}

/// Consensus of every non-empty list for one topic; no diagnostics when
/// there is nothing to aggregate.
fn aggregate_topic(
    id: &str,
    variants: &[VariantOutput],
    runs: &[Vec<Ranking>],
    hq: &HqParams,
    tag: &str,
) -> Result<(Ranking, Option<AggregateDiagnostics>)> {
    let mut lists = Vec::new();
    let mut names = Vec::new();
    let named = variants
        .iter()
        .enumerate()
        .map(|(i, v)| (format!("detections.{i}"), v.rankings()))
        .chain(
            runs.iter()
                .enumerate()
                .map(|(i, r)| (format!("run.{i}"), r.as_slice())),
        );
    for (name, rankings) in named {
        if let Some(r) = rankings
            .iter()
            .find(|r| r.topic_id() == id && !r.is_empty())
        {
            lists.push(r.clone());
            names.push(name);
        }
    }
    if lists.is_empty() {
        return Ok((Ranking::empty(id, tag), None));
    }
    let matrix = normalize_ranks(&lists).map_err(|e| Error::stage("aggregate", Some(id), e))?;
    let res = hq_aggregate(&matrix, hq).map_err(|e| Error::stage("aggregate", Some(id), e))?;
    let diag = AggregateDiagnostics {
        topic_id: id.to_string(),
        lists: names,
        alphas: res.alphas,
        iterations: res.iterations,
        converged: res.converged,
        sigma_sq: res.sigma_sq,
    };
    Ok((res.consensus.with_run_tag(tag), Some(diag)))
}

/// Loads inputs, runs [`execute`] and writes into `output_dir`:
/// `config.toml`, `ide.N.tsv`, `fuse.N.run`, `ste.N.run`, `aggregate.run`,
/// `final.run` and `report.json`, skipping files of disabled stages.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let data = PipelineData::load(cfg)?;
    let out = execute(cfg, &data)?;
    write_outputs(cfg, &out)?;
    Ok(out)
}

pub fn write_outputs(cfg: &PipelineConfig, out: &PipelineOutput) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: String, body: String| io::write_atomic(&dir.join(name), body.as_bytes());
    put("config.toml".into(), cfg.to_toml())?;
    for (i, v) in out.variants.iter().enumerate() {
        if let Some(t) = &v.ide {
            put(format!("ide.{i}.tsv"), io::write_detections(t))?;
        }
        put(format!("fuse.{i}.run"), io::write_runs(&v.fused, cfg.depth))?;
        if let Some(s) = &v.ste {
            put(format!("ste.{i}.run"), io::write_runs(s, cfg.depth))?;
        }
    }
    if let Some(a) = &out.aggregated {
        put("aggregate.run".into(), io::write_runs(a, cfg.depth))?;
    }
    put(
        "final.run".into(),
        io::write_runs(&out.final_runs, cfg.depth),
    )?;
    let mut report = serde_json::to_string_pretty(&out.report).expect("report serialises");
    report.push('\n');
    put("report.json".into(), report)
}
