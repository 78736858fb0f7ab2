//! Interactive feedback sessions.
//!
//! A [`Session`] is a pure function of its base ranking, strategy, the
//! feature table and its label log: [`Session::replay`] rebuilds any session
//! from those. [`SessionStore`] keeps live sessions for the HTTP server.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use insfuse_core::eval::DEFAULT_DEPTH;
use insfuse_core::feedback::{
    apply_label, caaf_init, caaf_ranking, caaf_recommend, caaf_step, topk_candidates,
    topk_rearrange, CaafState, Label, LabelSet, Polarity,
};
use insfuse_core::{FeatureTable, Ranking};
use serde::{Deserialize, Serialize};

use crate::config::{FeedbackConfig, ModeName, Scale, StrategyKind};
use crate::simulate::Strategy;
use crate::{io, Error};

/// Strategy as sent by clients; omitted CAAF knobs take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategySpec {
    Topk {
        k: usize,
        #[serde(default)]
        mode: ModeName,
    },
    Caaf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_probe: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_gallery: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<Scale>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_sweeps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
}

impl StrategySpec {
    pub fn resolve(&self) -> Result<Strategy, Error> {
        let mut c = FeedbackConfig::default();
        match *self {
            StrategySpec::Topk { k, mode } => {
                c.k = k;
                c.mode = mode;
                Ok(Strategy::TopK(c.topk()?))
            }
            StrategySpec::Caaf {
                a_probe,
                n_gallery,
                beta,
                lambda,
                batch,
                max_sweeps,
                tol,
            } => {
                c.strategy = StrategyKind::Caaf;
                c.a_probe = a_probe.unwrap_or(c.a_probe);
                c.n_gallery = n_gallery.unwrap_or(c.n_gallery);
                c.beta = beta.unwrap_or(c.beta);
                c.lambda = lambda.unwrap_or(c.lambda);
                c.batch = batch.unwrap_or(c.batch);
                c.max_sweeps = max_sweeps.unwrap_or(c.max_sweeps);
                c.tol = tol.unwrap_or(c.tol);
                Ok(Strategy::Caaf(c.caaf()?))
            }
        }
    }

    pub fn is_caaf(&self) -> bool {
        matches!(self, StrategySpec::Caaf { .. })
    }
}

/// One accepted label post. Rejected labels are not recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBatch {
    pub version: u64,
    /// Wall clock when the batch arrived, milliseconds since the epoch.
    pub received_ms: u64,
    /// Time spent re-ranking.
    pub elapsed_ms: f64,
    pub labels: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub shot_id: String,
    pub polarity: String,
}

impl LabelEntry {
    pub fn new(label: &Label) -> Self {
        LabelEntry {
            shot_id: label.shot_id.clone(),
            polarity: label.polarity.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub shot_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostOutcome {
    pub version: u64,
    pub recommendations: Vec<String>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    run: String,
    spec: StrategySpec,
    strategy: Strategy,
    base: Ranking,
    labels: LabelSet,
    ranking: Ranking,
    caaf: Option<CaafState>,
    log: Vec<LabelBatch>,
    version: u64,
}

impl Session {
    /// `run` names the source run; it is only reported back.
    pub fn new(
        id: impl Into<String>,
        run: impl Into<String>,
        base: Ranking,
        spec: StrategySpec,
        features: Option<&FeatureTable>,
    ) -> Result<Self, Error> {
        let strategy = spec.resolve()?;
        let (ranking, caaf) = match &strategy {
            Strategy::TopK(_) => (base.clone(), None),
            Strategy::Caaf(p) => {
                let f = features
                    .ok_or_else(|| Error::Config("the caaf strategy needs shot features".into()))?;
                let state = caaf_init(&base, f, p)?;
                (caaf_ranking(&state), Some(state))
            }
        };
        Ok(Session {
            id: id.into(),
            run: run.into(),
            spec,
            strategy,
            base,
            labels: LabelSet::new(),
            ranking,
            caaf,
            log: Vec::new(),
            version: 0,
        })
    }

    /// Rebuilds a session by feeding `log` through [`Session::apply`].
    pub fn replay(
        id: impl Into<String>,
        run: impl Into<String>,
        base: Ranking,
        spec: StrategySpec,
        features: Option<&FeatureTable>,
        log: &[LabelBatch],
    ) -> Result<Self, Error> {
        let mut s = Session::new(id, run, base, spec, features)?;
        for batch in log {
            let labels = batch
                .labels
                .iter()
                .map(|l| {
                    let polarity = l.polarity.parse().map_err(|_| {
                        Error::Config(format!("label log has polarity {:?}", l.polarity))
                    })?;
                    Ok(Label {
                        shot_id: l.shot_id.clone(),
                        polarity,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            s.apply(&labels)?;
            s.log.push(batch.clone());
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn run(&self) -> &str {
        &self.run
    }

    pub fn topic_id(&self) -> &str {
        self.base.topic_id()
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    pub fn base(&self) -> &Ranking {
        &self.base
    }

    pub fn ranking(&self) -> &Ranking {
        &self.ranking
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn log(&self) -> &[LabelBatch] {
        &self.log
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn caaf_state(&self) -> Option<&CaafState> {
        self.caaf.as_ref()
    }

    pub fn recommendations(&self) -> Vec<String> {
        match (&self.strategy, &self.caaf) {
            (Strategy::Caaf(p), Some(state)) => caaf_recommend(state, p.batch),
            (Strategy::TopK(s), _) => topk_candidates(&self.ranking, &self.labels, s.k),
            (Strategy::Caaf(_), None) => Vec::new(),
        }
    }

    fn accepts(&self, shot_id: &str) -> bool {
        match &self.caaf {
            Some(state) => state.element(shot_id).is_some(),
            None => self.base.position(shot_id).is_some(),
        }
    }

    /// Validates a label post, logs it and re-ranks.
    pub fn post_labels(&mut self, labels: &[LabelEntry]) -> Result<PostOutcome, Error> {
        let received_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let started = Instant::now();
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for l in labels {
            let reject = |reason: &str| Rejection {
                shot_id: l.shot_id.clone(),
                reason: reason.into(),
            };
            let Ok(polarity) = l.polarity.parse::<Polarity>() else {
                rejected.push(reject("invalid_polarity"));
                continue;
            };
            if !self.accepts(&l.shot_id) {
                rejected.push(reject("unknown_shot"));
                continue;
            }
            accepted.push(Label {
                shot_id: l.shot_id.clone(),
                polarity,
            });
        }
        self.apply(&accepted)?;
        self.log.push(LabelBatch {
            version: self.version,
            received_ms,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            labels: accepted.iter().map(LabelEntry::new).collect(),
        });
        Ok(PostOutcome {
            version: self.version,
            recommendations: self.recommendations(),
            rejected,
        })
    }

    /// Applies already validated labels and bumps the version. Labels that
    /// repeat the current polarity of their shot change nothing.
    pub fn apply(&mut self, labels: &[Label]) -> Result<(), Error> {
        let mut fresh = Vec::new();
        for l in labels {
            if self.labels.set(l.clone()) != Some(l.polarity) {
                fresh.push(l.clone());
            }
        }
        self.version += 1;
        if fresh.is_empty() {
            return Ok(());
        }
        match (&self.strategy, &mut self.caaf) {
            (Strategy::TopK(s), _) => {
                self.ranking = topk_rearrange(&self.base, &self.labels, s)?;
            }
            (Strategy::Caaf(_), Some(state)) => {
                let mut next = state.clone();
                for l in &fresh {
                    next = apply_label(&next, l)?;
                }
                next = caaf_step(&next)?;
                self.ranking = caaf_ranking(&next);
                *state = next;
            }
            (Strategy::Caaf(_), None) => unreachable!("caaf sessions keep their state"),
        }
        Ok(())
    }

    pub fn export(&self, depth: usize) -> String {
        io::write_run(&self.ranking, depth)
    }
}

/// Failure answered to a client: a status code, a stable code string and a
/// message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unknown_session(id: &str) -> Self {
        ApiError::new(404, "unknown_session", format!("no session {id}"))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

fn internal(e: Error) -> ApiError {
    ApiError::new(500, "internal", e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Run file name, relative to the data directory.
    pub run: String,
    pub topic_id: String,
    pub strategy: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub recommendations: Vec<String>,
}

#[derive(Debug)]
struct Slot {
    // serialises writers; readers only touch `current`
    writer: Mutex<()>,
    current: RwLock<Arc<Session>>,
}

/// Live sessions over one data directory. Writers to one session are
/// serialised; readers get an immutable snapshot.
#[derive(Debug)]
pub struct SessionStore {
    data_dir: PathBuf,
    assets_dir: Option<PathBuf>,
    export_depth: usize,
    features: Mutex<Option<Arc<FeatureTable>>>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    next_id: AtomicU64,
}

/// Name of the feature file inside the data directory.
pub const FEATURES_FILE: &str = "features.tsv";

impl SessionStore {
    pub fn new(data_dir: impl Into<PathBuf>, assets_dir: Option<PathBuf>) -> Self {
        SessionStore {
            data_dir: data_dir.into(),
            assets_dir,
            export_depth: DEFAULT_DEPTH,
            features: Mutex::new(None),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_export_depth(mut self, depth: usize) -> Self {
        self.export_depth = depth.max(1);
        self
    }

    pub fn export_depth(&self) -> usize {
        self.export_depth
    }

    pub fn assets_dir(&self) -> Option<&Path> {
        self.assets_dir.as_deref()
    }

    /// A file inside the data directory; absolute or escaping names fail.
    fn data_file(&self, name: &str) -> Result<PathBuf, ApiError> {
        let p = Path::new(name);
        if name.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(ApiError::new(
                400,
                "bad_request",
                format!("invalid run name {name:?}"),
            ));
        }
        Ok(self.data_dir.join(p))
    }

    /// The feature table, loaded on first use.
    pub fn features(&self) -> Result<Arc<FeatureTable>, ApiError> {
        let mut slot = self.features.lock().expect("feature lock");
        if let Some(f) = &*slot {
            return Ok(f.clone());
        }
        let path = self.data_dir.join(FEATURES_FILE);
        if !path.is_file() {
            return Err(ApiError::new(
                422,
                "missing_features",
                format!("{} not found", path.display()),
            ));
        }
        let text = io::read_file(&path).map_err(internal)?;
        let table = io::load_features(&text)
            .map_err(|e| ApiError::new(422, "missing_features", e.to_string()))?;
        let table = Arc::new(table);
        *slot = Some(table.clone());
        Ok(table)
    }

    pub fn base_ranking(&self, run: &str, topic_id: &str) -> Result<Ranking, ApiError> {
        let path = self.data_file(run)?;
        if !path.is_file() {
            return Err(ApiError::new(
                404,
                "unknown_run",
                format!("no run file {run}"),
            ));
        }
        let text = io::read_file(&path).map_err(internal)?;
        let runs =
            io::read_run(&text).map_err(|e| ApiError::new(422, "invalid_run", e.to_string()))?;
        runs.into_iter()
            .find(|r| r.topic_id() == topic_id)
            .ok_or_else(|| {
                ApiError::new(
                    404,
                    "unknown_topic",
                    format!("run {run} has no topic {topic_id}"),
                )
            })
    }

    pub fn create(&self, req: CreateRequest) -> Result<CreateResponse, ApiError> {
        let base = self.base_ranking(&req.run, &req.topic_id)?;
        req.strategy
            .resolve()
            .map_err(|e| ApiError::new(422, "invalid_strategy", e.to_string()))?;
        let features = if req.strategy.is_caaf() {
            Some(self.features()?)
        } else {
            None
        };
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Session::new(&id, &req.run, base, req.strategy, features.as_deref())
            .map_err(|e| match e {
                Error::Core(insfuse_core::Error::MissingFeatures(_)) => {
                    ApiError::new(422, "missing_features", e.to_string())
                }
                Error::Core(_) => ApiError::new(422, "invalid_session", e.to_string()),
                e => internal(e),
            })?;
        let recommendations = session.recommendations();
        let slot = Arc::new(Slot {
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(session)),
        });
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id.clone(), slot);
        Ok(CreateResponse {
            session_id: id,
            recommendations,
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    /// The current state of a session.
    pub fn snapshot(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let slot = self.slot(id)?;
        let s = slot.current.read().expect("snapshot lock").clone();
        Ok(s)
    }

    pub fn post_labels(&self, id: &str, labels: &[LabelEntry]) -> Result<PostOutcome, ApiError> {
        let slot = self.slot(id)?;
        let _writer = slot.writer.lock().expect("writer lock");
        let mut next = (**slot.current.read().expect("snapshot lock")).clone();
        let out = next.post_labels(labels).map_err(internal)?;
        *slot.current.write().expect("snapshot lock") = Arc::new(next);
        Ok(out)
    }

    pub fn export(&self, id: &str) -> Result<String, ApiError> {
        Ok(self.snapshot(id)?.export(self.export_depth))
    }

    /// Rebuilds a session from its inputs and log, as a client could.
    pub fn replay(&self, id: &str) -> Result<Session, ApiError> {
        let s = self.snapshot(id)?;
        let base = self.base_ranking(s.run(), s.topic_id())?;
        let features = if s.spec().is_caaf() {
            Some(self.features()?)
        } else {
            None
        };
        Session::replay(
            id,
            s.run(),
            base,
            s.spec().clone(),
            features.as_deref(),
            s.log(),
        )
        .map_err(internal)
    }
}
