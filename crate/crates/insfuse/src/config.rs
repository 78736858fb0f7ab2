//! Pipeline configuration, stored as TOML.
//!
//! Every knob has an explicit default so a config file only needs the input
//! paths and an output directory:
//!
//! ```toml
//! output_dir = "out"
//!
//! [inputs]
//! detections = ["detections.tsv"]
//! shots = "shots.tsv"
//! topics = "topics.tsv"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fmt;
use std::path::{Path, PathBuf};

use insfuse_core::aggregate::{HqParams, HqSigma};
use insfuse_core::eval::DEFAULT_DEPTH;
use insfuse_core::feedback::{Beta, CaafParams, TopKMode, TopKStrategy};
use insfuse_core::fusion::FusionParams;
use insfuse_core::ide::IdeParams;
use insfuse_core::ste::SteParams;
use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

/// A positive scale that can also be derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ScaleRepr", into = "ScaleRepr")]
pub enum Scale {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScaleRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<ScaleRepr> for Scale {
    type Error = String;

    fn try_from(r: ScaleRepr) -> Result<Self, String> {
        match r {
            ScaleRepr::Number(x) => Ok(Scale::Fixed(x)),
            ScaleRepr::Name(s) if s == "auto" => Ok(Scale::Auto),
            ScaleRepr::Name(s) => Err(format!("expected \"auto\" or a number, found {s:?}")),
        }
    }
}

impl From<Scale> for ScaleRepr {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Auto => ScaleRepr::Name("auto".into()),
            Scale::Fixed(x) => ScaleRepr::Number(x),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Auto => f.write_str("auto"),
            Scale::Fixed(x) => write!(f, "{x}"),
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Scale::Auto);
        }
        s.parse()
            .map(Scale::Fixed)
            .map_err(|_| format!("expected \"auto\" or a number, found {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// One fusion variant per detection file.
    pub detections: Vec<PathBuf>,
    pub shots: PathBuf,
    pub topics: PathBuf,
    /// Precomputed runs that join the aggregation.
    #[serde(default)]
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub ide: bool,
    pub icv: bool,
    pub ste: bool,
    pub aggregate: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            ide: true,
            icv: false,
            ste: true,
            aggregate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub delta: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { delta: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdeConfig {
    pub max_gap: u32,
}

impl Default for IdeConfig {
    fn default() -> Self {
        IdeConfig { max_gap: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteConfig {
    pub theta: f64,
    pub sigma: f64,
    pub p: u32,
    /// Topics to diffuse; absent means all.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<String>>,
}

impl Default for SteConfig {
    fn default() -> Self {
        SteConfig {
            theta: 0.5,
            sigma: 2.0,
            p: 3,
            topics: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HqConfig {
    pub sigma_hq: Scale,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for HqConfig {
    fn default() -> Self {
        HqConfig {
            sigma_hq: Scale::Auto,
            epsilon: 1e-9,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Topk,
    Caaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    PositiveOnly,
    NegativeOnly,
    #[default]
    Both,
}

impl From<ModeName> for TopKMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::PositiveOnly => TopKMode::PositiveOnly,
            ModeName::NegativeOnly => TopKMode::NegativeOnly,
            ModeName::Both => TopKMode::Both,
        }
    }
}

/// Knobs for simulated or live feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub strategy: StrategyKind,
    pub rounds: usize,
    pub k: usize,
    pub mode: ModeName,
    pub a_probe: usize,
    pub n_gallery: usize,
    pub beta: Scale,
    pub lambda: f64,
    pub batch: usize,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        let c = CaafParams::default();
        FeedbackConfig {
            strategy: StrategyKind::Topk,
            rounds: 5,
            k: 100,
            mode: ModeName::Both,
            a_probe: c.a_probe,
            n_gallery: c.n_gallery,
            beta: Scale::Auto,
            lambda: c.lambda,
            batch: c.batch,
            max_sweeps: c.max_sweeps,
            tol: c.tol,
        }
    }
}

impl FeedbackConfig {
    pub fn topk(&self) -> Result<TopKStrategy> {
        Ok(TopKStrategy::new(self.mode.into(), self.k)?)
    }

    pub fn caaf(&self) -> Result<CaafParams> {
        let p = CaafParams {
            a_probe: self.a_probe,
            n_gallery: self.n_gallery,
            beta: match self.beta {
                Scale::Auto => Beta::Auto,
                Scale::Fixed(b) => Beta::Fixed(b),
            },
            lambda: self.lambda,
            batch: self.batch,
            max_sweeps: self.max_sweeps,
            tol: self.tol,
        };
        p.validate()?;
        Ok(p)
    }
}

fn default_run_tag() -> String {
    "insfuse".into()
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_run_tag")]
    pub run_tag: String,
    pub output_dir: PathBuf,
    /// Run files keep at most this many shots per topic.
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub inputs: Inputs,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub ide: IdeConfig,
    #[serde(default)]
    pub ste: SteConfig,
    #[serde(default)]
    pub hq: HqConfig,
    #[serde(default)]
    pub feedback: FeedbackConfig,
}

impl PipelineConfig {
    /// A config with default knobs for the given inputs.
    pub fn new(
        detections: Vec<PathBuf>,
        shots: PathBuf,
        topics: PathBuf,
        output_dir: PathBuf,
    ) -> Self {
        PipelineConfig {
            run_tag: default_run_tag(),
            output_dir,
            depth: default_depth(),
            inputs: Inputs {
                detections,
                shots,
                topics,
                runs: Vec::new(),
            },
            stages: Stages::default(),
            fusion: FusionConfig::default(),
            ide: IdeConfig::default(),
            ste: SteConfig::default(),
            hq: HqConfig::default(),
            feedback: FeedbackConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses the file and resolves relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&io::read_file(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.inputs.shots);
        fix(&mut self.inputs.topics);
        self.inputs.detections.iter_mut().for_each(fix);
        self.inputs.runs.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks knobs, toggles and that every input exists.
    pub fn validate(&self) -> Result<()> {
        if self.run_tag.is_empty() || self.run_tag.contains(char::is_whitespace) {
            return Err(Error::Config("run_tag must be a non-empty word".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.inputs.detections.is_empty() {
            return Err(Error::Config("inputs.detections lists no files".into()));
        }
        let lists = self.inputs.detections.len() + self.inputs.runs.len();
        if self.stages.aggregate && lists < 2 {
            return Err(Error::Config(format!(
                "aggregate needs at least 2 ranked lists per topic, config provides {lists}"
            )));
        }
        let inputs = &self.inputs;
        for p in inputs
            .detections
            .iter()
            .chain(&inputs.runs)
            .chain([&inputs.shots, &inputs.topics])
        {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "input {} does not exist",
                    p.display()
                )));
            }
        }
        self.fusion_params()?;
        self.ide_params()?;
        self.ste_params()?;
        self.hq_params()?;
        Ok(())
    }

    pub fn fusion_params(&self) -> Result<FusionParams> {
        Ok(FusionParams::new(self.fusion.delta, self.stages.icv)?)
    }

    pub fn ide_params(&self) -> Result<IdeParams> {
        Ok(IdeParams::new(self.ide.max_gap)?)
    }

    pub fn ste_params(&self) -> Result<SteParams> {
        let p = SteParams::new(self.ste.theta, self.ste.sigma, self.ste.p)?;
        Ok(match &self.ste.topics {
            Some(t) => p.with_topics(t.iter().cloned()),
            None => p,
        })
    }

    pub fn hq_params(&self) -> Result<HqParams> {
        let p = HqParams {
            sigma: match self.hq.sigma_hq {
                Scale::Auto => HqSigma::Auto,
                Scale::Fixed(s) => HqSigma::Fixed(s),
            },
            epsilon: self.hq.epsilon,
            max_iters: self.hq.max_iters,
        };
        p.validate()?;
        Ok(p)
    }
}
