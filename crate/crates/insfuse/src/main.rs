use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use insfuse::config::{FeedbackConfig, ModeName, PipelineConfig, Scale};
use insfuse::pipeline::run_pipeline;
use insfuse::session::SessionStore;
use insfuse::simulate::{simulate_topic, write_curves, Strategy};
use insfuse::synth::{generate, SyntheticSpec};
use insfuse::{io, server};
use insfuse_core::aggregate::{hq_aggregate, normalize_ranks, HqParams, HqSigma};
use insfuse_core::eval::{evaluate, DEFAULT_DEPTH};
use insfuse_core::fusion::{fuse_topic, FusionParams};
use insfuse_core::ide::{apply_ide, IdeParams};
use insfuse_core::ste::{apply_ste, SteParams};
use insfuse_core::Ranking;

#[derive(Parser)]
#[command(
    name = "insfuse",
    version,
    about = "Person-action instance search: fusion, re-ranking and feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill short detection gaps by interpolation.
    Ide {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        shots: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_gap: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fuse face and action detections into one run per topic.
    Fuse {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        shots: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Weight by face/action box overlap.
        #[arg(long)]
        icv: bool,
        #[arg(long, default_value = "insfuse")]
        run_tag: String,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        /// Directory for `<topic>.run` files and the merged `all.run`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Diffuse scores from stronger neighbouring shots.
    Ste {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        shots: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 3)]
        p: u32,
        /// Comma-separated topics to diffuse; all when absent.
        #[arg(long, value_delimiter = ',')]
        topics: Option<Vec<String>>,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Robust consensus of several runs.
    Aggregate {
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "auto")]
        sigma_hq: Scale,
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value = "insfuse")]
        run_tag: String,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        /// Print per-topic list weights to stdout.
        #[arg(long)]
        report: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Average precision per topic and mAP.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        #[arg(long)]
        per_topic: bool,
    },
    /// Relevance feedback.
    #[command(subcommand)]
    Feedback(FeedbackCommand),
    /// Run the configured pipeline.
    Run(RunArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Serve feedback sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Topk,
    Caaf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PositiveOnly,
    NegativeOnly,
    Both,
}

#[derive(Subcommand)]
enum FeedbackCommand {
    /// Simulate feedback rounds with qrels as the annotator.
    Simulate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        a_probe: usize,
        #[arg(long, default_value_t = 1000)]
        n_gallery: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "auto")]
        beta: Scale,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Learning curves: topic, round, labels used, AP.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_tag: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    ide: Option<bool>,
    #[arg(long)]
    icv: Option<bool>,
    #[arg(long)]
    ste: Option<bool>,
    #[arg(long)]
    aggregate: Option<bool>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_gap: Option<u32>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    sigma_hq: Option<Scale>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Spec file; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    shots_per_video: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    relevance_rate: Option<f64>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    action_run_length: Option<f64>,
    #[arg(long)]
    action_detectors: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    Ok(io::read_file(path)?)
}

fn runs_of(path: &Path) -> Result<Vec<Ranking>> {
    io::read_run(&read(path)?).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ide {
            detections,
            shots,
            max_gap,
            output,
        } => {
            let shots = io::load_shots(&read(&shots)?).context("shots")?;
            let table = io::load_detections(&read(&detections)?).context("detections")?;
            let out = apply_ide(&table, &shots, &IdeParams::new(max_gap)?).context("stage ide")?;
            io::write_atomic(&output, io::write_detections(&out).as_bytes())?;
        }
        Command::Fuse {
            detections,
            shots,
            topics,
            delta,
            icv,
            run_tag,
            depth,
            output,
        } => {
            let shots = io::load_shots(&read(&shots)?).context("shots")?;
            let topics = io::load_topics(&read(&topics)?).context("topics")?;
            let table = io::load_detections(&read(&detections)?).context("detections")?;
            let params = FusionParams::new(delta, icv)?;
            fs::create_dir_all(&output).with_context(|| output.display().to_string())?;
            let mut all = Vec::new();
            for t in &topics {
                let fused = fuse_topic(t, &table, &shots, &params, &run_tag)
                    .with_context(|| format!("stage fuse, topic {}", t.topic_id))?;
                for w in &fused.warnings {
                    log::warn!("topic {}: {w:?}", t.topic_id);
                }
                let path = output.join(format!("{}.run", t.topic_id));
                io::write_atomic(&path, io::write_run(&fused.ranking, depth).as_bytes())?;
                all.push(fused.ranking);
            }
            io::write_atomic(
                &output.join("all.run"),
                io::write_runs(&all, depth).as_bytes(),
            )?;
        }
        Command::Ste {
            run,
            shots,
            theta,
            sigma,
            p,
            topics,
            depth,
            output,
        } => {
            let shots = io::load_shots(&read(&shots)?).context("shots")?;
            let mut params = SteParams::new(theta, sigma, p)?;
            if let Some(t) = topics {
                params = params.with_topics(t);
            }
            let out = runs_of(&run)?
                .iter()
                .map(|r| {
                    apply_ste(r, &shots, &params)
                        .with_context(|| format!("stage ste, topic {}", r.topic_id()))
                })
                .collect::<Result<Vec<_>>>()?;
            io::write_atomic(&output, io::write_runs(&out, depth).as_bytes())?;
        }
        Command::Aggregate {
            runs,
            sigma_hq,
            epsilon,
            max_iters,
            run_tag,
            depth,
            report,
            output,
        } => {
            let params = HqParams {
                sigma: match sigma_hq {
                    Scale::Auto => HqSigma::Auto,
                    Scale::Fixed(s) => HqSigma::Fixed(s),
                },
                epsilon,
                max_iters,
            };
            params.validate()?;
            let inputs = runs
                .iter()
                .map(|p| runs_of(p))
                .collect::<Result<Vec<_>>>()?;
            let mut topics: Vec<&str> = Vec::new();
            for r in inputs.iter().flatten() {
                if !topics.contains(&r.topic_id()) {
                    topics.push(r.topic_id());
                }
            }
            let mut out = Vec::new();
            for topic in topics {
                let lists: Vec<Ranking> = inputs
                    .iter()
                    .filter_map(|run| run.iter().find(|r| r.topic_id() == topic))
                    .filter(|r| !r.is_empty())
                    .cloned()
                    .collect();
                if lists.is_empty() {
                    continue;
                }
                let res = normalize_ranks(&lists)
                    .and_then(|m| hq_aggregate(&m, &params))
                    .with_context(|| format!("stage aggregate, topic {topic}"))?;
                if report {
                    let alphas: Vec<String> =
                        res.alphas.iter().map(|a| format!("{a:.6}")).collect();
                    println!(
                        "{topic}\titerations={}\tconverged={}\tsigma_sq={:.6e}\talpha={}",
                        res.iterations,
                        res.converged,
                        res.sigma_sq,
                        alphas.join(",")
                    );
                }
                out.push(res.consensus.with_run_tag(run_tag.as_str()));
            }
            io::write_atomic(&output, io::write_runs(&out, depth).as_bytes())?;
        }
        Command::Eval {
            run,
            qrels,
            depth,
            per_topic,
        } => {
            let qrels = io::load_qrels(&read(&qrels)?).context("qrels")?;
            let report = evaluate(&runs_of(&run)?, &qrels, depth)?;
            if per_topic {
                for (t, ap) in &report.per_topic {
                    println!("{t}\t{ap:.6}");
                }
            }
            println!("mAP\t{:.6}", report.map);
        }
        Command::Feedback(FeedbackCommand::Simulate {
            run,
            qrels,
            strategy,
            k,
            mode,
            rounds,
            features,
            batch,
            a_probe,
            n_gallery,
            lambda,
            beta,
            depth,
            output,
            report,
        }) => {
            let qrels = io::load_qrels(&read(&qrels)?).context("qrels")?;
            let cfg = FeedbackConfig {
                k,
                mode: match mode {
                    ModeArg::PositiveOnly => ModeName::PositiveOnly,
                    ModeArg::NegativeOnly => ModeName::NegativeOnly,
                    ModeArg::Both => ModeName::Both,
                },
                rounds,
                batch,
                a_probe,
                n_gallery,
                lambda,
                beta,
                ..FeedbackConfig::default()
            };
            let strategy = match strategy {
                StrategyArg::Topk => Strategy::TopK(cfg.topk()?),
                StrategyArg::Caaf => Strategy::Caaf(cfg.caaf()?),
            };
            let features = match (&strategy, features) {
                (_, Some(p)) => Some(io::load_features(&read(&p)?).context("features")?),
                (Strategy::Caaf(_), None) => bail!("--features is required for --strategy caaf"),
                _ => None,
            };
            let sims = runs_of(&run)?
                .iter()
                .map(|r| {
                    simulate_topic(r, &qrels, features.as_ref(), &strategy, rounds, depth)
                        .with_context(|| format!("stage feedback, topic {}", r.topic_id()))
                })
                .collect::<Result<Vec<_>>>()?;
            let rankings: Vec<&Ranking> = sims.iter().map(|s| &s.ranking).collect();
            io::write_atomic(&output, io::write_runs(rankings, depth).as_bytes())?;
            if let Some(path) = report {
                io::write_atomic(&path, write_curves(&sims).as_bytes())?;
            }
        }
        Command::Run(a) => {
            let mut cfg = PipelineConfig::from_file(&a.config)?;
            let cwd = std::env::current_dir()?;
            if let Some(v) = a.output_dir {
                cfg.output_dir = cwd.join(v);
            }
            if let Some(v) = a.run_tag {
                cfg.run_tag = v;
            }
            if let Some(v) = a.depth {
                cfg.depth = v;
            }
            if let Some(v) = a.ide {
                cfg.stages.ide = v;
            }
            if let Some(v) = a.icv {
                cfg.stages.icv = v;
            }
            if let Some(v) = a.ste {
                cfg.stages.ste = v;
            }
            if let Some(v) = a.aggregate {
                cfg.stages.aggregate = v;
            }
            if let Some(v) = a.delta {
                cfg.fusion.delta = v;
            }
            if let Some(v) = a.max_gap {
                cfg.ide.max_gap = v;
            }
            if let Some(v) = a.theta {
                cfg.ste.theta = v;
            }
            if let Some(v) = a.sigma {
                cfg.ste.sigma = v;
            }
            if let Some(v) = a.p {
                cfg.ste.p = v;
            }
            if let Some(v) = a.sigma_hq {
                cfg.hq.sigma_hq = v;
            }
            let out = run_pipeline(&cfg)?;
            eprintln!(
                "wrote {} topics to {}",
                out.final_runs.len(),
                cfg.output_dir.display()
            );
        }
        Command::Synth(a) => {
            let mut spec = match &a.spec {
                Some(p) => toml::from_str(&read(p)?).with_context(|| p.display().to_string())?,
                None => SyntheticSpec::default(),
            };
            macro_rules! set {
                ($($f:ident),*) => {$(if let Some(v) = a.$f { spec.$f = v; })*};
            }
            set!(
                seed,
                videos,
                shots_per_video,
                topics,
                relevance_rate,
                dropout_rate,
                action_run_length,
                action_detectors
            );
            generate(&spec)?.write(&a.out)?;
        }
        Command::Serve {
            port,
            data,
            assets,
            depth,
        } => {
            let store = Arc::new(SessionStore::new(data, assets).with_export_depth(depth));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, server::router(store)).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
