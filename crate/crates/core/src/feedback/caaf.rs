//! Confidence-aware active feedback.
//!
//! The session works on the top `n_gallery` shots of a ranking plus one
//! probe element, the renormalised mean feature of the top `a_probe` shots.
//! Every element `i` carries a ranking score `f_i` and a confidence `v_i`.
//! With affinities `W_ij = max(0, cos(x_i, x_j))`, pairwise loss
//! `l_ij = W_ij (f_i - f_j)^2` and `m` elements, the energy is
//!
//! ```text
//! E(f, v) = 1/m^2 * sum_{i != j} (v_i + v_j)(l_ij - beta)
//!         + lambda/m * sum_i (v_i - v0_i)^2
//! ```
//!
//! A step alternates exact coordinate minimisation: Gauss-Seidel sweeps
//! over the free `f_i` (each is set to the `(v_i + v_j) W_ij`-weighted mean
//! of its neighbours), then the closed-form box-constrained minimum over
//! each free `v_i`. Both sub-steps are exact, so `E` never increases.
//!
//! The probe and labeled elements are clamped: `f` is 1 (probe, positive)
//! or 0 (negative) and `v = v0 = 1`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Label, Polarity};
use crate::math;
use crate::types::{FeatureTable, Ranking};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Beta {
    /// Mean pairwise loss at initialisation.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaafParams {
    /// Number of top results averaged into the probe; must exceed 10.
    pub a_probe: usize,
    pub n_gallery: usize,
    pub beta: Beta,
    pub lambda: f64,
    /// Recommendations per round.
    pub batch: usize,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl CaafParams {
    pub fn validate(&self) -> Result<()> {
        if self.a_probe <= 10 {
            return Err(Error::param("a_probe", "must be greater than 10"));
        }
        if self.n_gallery < self.a_probe {
            return Err(Error::param("n_gallery", "must be at least a_probe"));
        }
        if let Beta::Fixed(b) = self.beta {
            if !b.is_finite() {
                return Err(Error::param("beta", "must be finite"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be finite and > 0"));
        }
        if self.batch < 1 {
            return Err(Error::param("batch", "must be at least 1"));
        }
        if self.max_sweeps < 1 {
            return Err(Error::param("max_sweeps", "must be at least 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::param("tol", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for CaafParams {
    fn default() -> Self {
        CaafParams {
            a_probe: 20,
            n_gallery: 1000,
            beta: Beta::Auto,
            lambda: 1.0,
            batch: 5,
            max_sweeps: 50,
            tol: 1e-6,
        }
    }
}

/// Element 0 is the probe, elements `1..` are gallery shots in their
/// original ranking order.
#[derive(Debug, Clone, PartialEq)]
pub struct CaafState {
    topic_id: String,
    run_tag: String,
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    f: Vec<f64>,
    v: Vec<f64>,
    v0: Vec<f64>,
    w: Vec<f64>,
    labels: Vec<Option<Polarity>>,
    beta: f64,
    lambda: f64,
    max_sweeps: usize,
    tol: f64,
    /// Shots ranked below the gallery window, in original order.
    tail: Vec<String>,
}

impl CaafState {
    /// Assembles a state from raw parts; `w` is row-major `m x m`.
    ///
    /// `ids[0]` names the probe. Affinities must be symmetric with a zero
    /// diagonal and lie in `[0, 1]`, confidences in `[0, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        ids: Vec<String>,
        f: Vec<f64>,
        v: Vec<f64>,
        v0: Vec<f64>,
        w: Vec<f64>,
        beta: f64,
        lambda: f64,
    ) -> Result<Self> {
        let m = ids.len();
        if m == 0 {
            return Err(Error::Empty("caaf elements"));
        }
        for (name, len) in [("f", f.len()), ("v", v.len()), ("v0", v0.len())] {
            if len != m {
                return Err(Error::param(name, "length differs from element count"));
            }
        }
        if w.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: w.len(),
            });
        }
        for i in 0..m {
            if w[i * m + i] != 0.0 {
                return Err(Error::param("w", "diagonal must be zero"));
            }
            for j in 0..m {
                let x = w[i * m + j];
                if !(0.0..=1.0).contains(&x) || x != w[j * m + i] {
                    return Err(Error::param(
                        "w",
                        "must be symmetric with entries in [0, 1]",
                    ));
                }
            }
        }
        if v.iter().chain(&v0).any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::param("v", "confidences must lie in [0, 1]"));
        }
        if f.iter().any(|x| !x.is_finite()) || !beta.is_finite() {
            return Err(Error::NonFinite("caaf state"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", "must be finite and > 0"));
        }
        let index = ids
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(CaafState {
            topic_id: String::new(),
            run_tag: String::new(),
            ids,
            index,
            f,
            v,
            v0,
            w,
            labels: vec![None; m],
            beta,
            lambda,
            max_sweeps: 50,
            tol: 1e-6,
            tail: Vec::new(),
        })
    }

    /// Number of elements including the probe.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn topic_id(&self) -> &str {
        &self.topic_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v0(&self) -> &[f64] {
        &self.v0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn affinity(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.ids.len() + j]
    }

    pub fn label(&self, i: usize) -> Option<Polarity> {
        self.labels[i]
    }

    /// Element index of a gallery shot.
    pub fn element(&self, shot_id: &str) -> Option<usize> {
        self.index.get(shot_id).copied()
    }

    pub fn tail(&self) -> &[String] {
        &self.tail
    }

    pub fn set_sweep_limits(&mut self, max_sweeps: usize, tol: f64) {
        self.max_sweeps = max_sweeps.max(1);
        self.tol = tol;
    }

    fn is_free(&self, i: usize) -> bool {
        i != 0 && self.labels[i].is_none()
    }

    fn pair_loss(&self, i: usize, j: usize) -> f64 {
        let d = self.f[i] - self.f[j];
        self.affinity(i, j) * d * d
    }

    fn check_finite(&self) -> Result<()> {
        if self.f.iter().chain(&self.v).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("caaf step"))
        }
    }

    fn f_step(&mut self) {
        let m = self.ids.len();
        for _ in 0..self.max_sweeps {
            let mut largest = 0.0f64;
            for i in 1..m {
                if !self.is_free(i) {
                    continue;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    let weight = (self.v[i] + self.v[j]) * self.affinity(i, j);
                    num += weight * self.f[j];
                    den += weight;
                }
                if den > 0.0 {
                    let next = num / den;
                    largest = largest.max((next - self.f[i]).abs());
                    self.f[i] = next;
                }
            }
            if largest < self.tol {
                break;
            }
        }
    }

    fn v_step(&mut self) {
        let m = self.ids.len();
        let scale = 1.0 / (self.lambda * m as f64);
        for i in 1..m {
            if !self.is_free(i) {
                continue;
            }
            let excess: f64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| self.pair_loss(i, j) - self.beta)
                .sum();
            self.v[i] = (self.v0[i] - scale * excess).clamp(0.0, 1.0);
        }
    }
}

pub fn caaf_init(
    ranking: &Ranking,
    features: &FeatureTable,
    params: &CaafParams,
) -> Result<CaafState> {
    params.validate()?;
    if ranking.is_empty() {
        return Err(Error::Empty("ranking"));
    }
    let g = ranking.len().min(params.n_gallery);
    let gallery = &ranking.entries()[..g];

    let missing: Vec<String> = gallery
        .iter()
        .filter(|(s, _)| features.get(s).is_none())
        .map(|(s, _)| s.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFeatures(missing));
    }
    let vectors: Vec<&[f64]> = gallery
        .iter()
        .filter_map(|(s, _)| features.get(s))
        .collect();
    let dim = features.dim();

    let mut probe = vec![0.0; dim];
    let a = params.a_probe.min(g);
    for x in &vectors[..a] {
        for (p, xi) in probe.iter_mut().zip(x.iter()) {
            *p += xi;
        }
    }
    for p in &mut probe {
        *p /= a as f64;
    }
    if !math::normalize(&mut probe) {
        return Err(Error::ZeroVector(String::from("probe")));
    }

    let m = g + 1;
    let elem = |i: usize| -> &[f64] {
        if i == 0 {
            &probe
        } else {
            vectors[i - 1]
        }
    };
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let c = math::dot(elem(i), elem(j)).clamp(0.0, 1.0);
            w[i * m + j] = c;
            w[j * m + i] = c;
        }
    }

    let (lo, hi) = gallery
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
            (lo.min(*s), hi.max(*s))
        });
    let mut f = Vec::with_capacity(m);
    f.push(1.0);
    for (_, s) in gallery {
        f.push(if hi > lo { (s - lo) / (hi - lo) } else { 0.5 });
    }
    let mut v = vec![0.5; m];
    v[0] = 1.0;

    let mut ids = Vec::with_capacity(m);
    ids.push(String::from("<probe>"));
    ids.extend(gallery.iter().map(|(s, _)| s.clone()));

    let mut state = CaafState::from_parts(ids, f, v.clone(), v, w, 0.0, params.lambda)?;
    state.beta = match params.beta {
        Beta::Fixed(b) => b,
        Beta::Auto if m > 1 => {
            let mut total = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        total += state.pair_loss(i, j);
                    }
                }
            }
            total / (m * (m - 1)) as f64
        }
        Beta::Auto => 0.0,
    };
    state.topic_id = String::from(ranking.topic_id());
    state.run_tag = String::from(ranking.run_tag());
    state.max_sweeps = params.max_sweeps;
    state.tol = params.tol;
    state.tail = ranking.entries()[g..]
        .iter()
        .map(|(s, _)| s.clone())
        .collect();
    Ok(state)
}

pub fn caaf_energy(state: &CaafState) -> f64 {
    let m = state.ids.len();
    let mf = m as f64;
    let mut pairwise = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                pairwise += (state.v[i] + state.v[j]) * (state.pair_loss(i, j) - state.beta);
            }
        }
    }
    let penalty: f64 = state
        .v
        .iter()
        .zip(&state.v0)
        .map(|(v, v0)| (v - v0) * (v - v0))
        .sum();
    pairwise / (mf * mf) + state.lambda / mf * penalty
}

/// One alternating step: f sweeps, then the v update.
pub fn caaf_step(state: &CaafState) -> Result<CaafState> {
    let mut next = state.clone();
    next.f_step();
    next.check_finite()?;
    next.v_step();
    next.check_finite()?;
    Ok(next)
}

/// Up to `batch` unlabeled gallery shots by descending confidence, then
/// descending score, then ascending id.
pub fn caaf_recommend(state: &CaafState, batch: usize) -> Vec<String> {
    let mut free: Vec<usize> = (1..state.ids.len()).filter(|&i| state.is_free(i)).collect();
    free.sort_by(|&a, &b| {
        state.v[b]
            .total_cmp(&state.v[a])
            .then_with(|| state.f[b].total_cmp(&state.f[a]))
            .then_with(|| state.ids[a].cmp(&state.ids[b]))
    });
    free.into_iter()
        .take(batch)
        .map(|i| state.ids[i].clone())
        .collect()
}

pub fn apply_label(state: &CaafState, label: &Label) -> Result<CaafState> {
    let i = state
        .element(&label.shot_id)
        .ok_or_else(|| Error::UnknownShot(label.shot_id.clone()))?;
    let mut next = state.clone();
    next.labels[i] = Some(label.polarity);
    next.v[i] = 1.0;
    next.v0[i] = 1.0;
    next.f[i] = match label.polarity {
        Polarity::Positive => 1.0,
        Polarity::Negative => 0.0,
    };
    Ok(next)
}

/// Gallery by descending `f` (ties keep the original order), then the
/// untouched tail. Scores are `1 - rank / N`.
pub fn caaf_ranking(state: &CaafState) -> Ranking {
    let mut order: Vec<usize> = (1..state.ids.len()).collect();
    order.sort_by(|&a, &b| state.f[b].total_cmp(&state.f[a]).then(a.cmp(&b)));
    let n = (order.len() + state.tail.len()) as f64;
    let entries: Vec<(String, f64)> = order
        .iter()
        .map(|&i| state.ids[i].clone())
        .chain(state.tail.iter().cloned())
        .enumerate()
        .map(|(r, id)| (id, 1.0 - r as f64 / n))
        .collect();
    Ranking::new(state.topic_id.clone(), state.run_tag.clone(), entries)
        .expect("ids are unique and scores strictly decrease")
}
