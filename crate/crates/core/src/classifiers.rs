//! Likelihood-based modulation classifiers.
//!
//! Per-layer classifiers (ZF-ALRT, Subspace-*, LORD-*) fold one observation
//! at a time into a [`HypothesisScore`]; the joint Log-MAP / Max-Log-MAP
//! references enumerate every joint hypothesis and symbol vector and are
//! only usable for small systems.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::Observation;
use crate::constellation::{Constellation, Modulation};
use crate::linalg::CMatrix;
use crate::metric::{
    DistanceModel, Expansion, LordModel, MetricError, SubspaceModel, ZfModel, ZfVariance,
};

/// Largest joint lattice the exhaustive classifiers will enumerate.
pub const JOINT_LATTICE_LIMIT: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("joint enumeration of {size} points exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: usize },
    #[error("hypothesis set is empty")]
    NoHypotheses,
    #[error("`{0}` is a joint classifier and has no per-layer form")]
    NotPerLayer(ClassifierKind),
    #[error("unknown classifier `{0}`")]
    UnknownClassifier(String),
}

impl From<crate::linalg::LinalgError> for ClassifyError {
    fn from(e: crate::linalg::LinalgError) -> Self {
        ClassifyError::Metric(e.into())
    }
}

/// Counts of Euclidean distances, exponentials and logarithms evaluated.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub distances: u64,
    pub exps: u64,
    pub logs: u64,
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.distances += rhs.distances;
        self.exps += rhs.exps;
        self.logs += rhs.logs;
    }
}

impl OpCounter {
    pub fn fits_within(&self, bound: &OpCounter) -> bool {
        self.distances <= bound.distances && self.exps <= bound.exps && self.logs <= bound.logs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    LogMap,
    MaxLogMap,
}

/// `log(sum_k exp(-d_k))`, shifted by the minimum distance.
pub fn log_sum_exp_neg(distances: &[f64], counter: &mut OpCounter) -> f64 {
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if !d_min.is_finite() {
        return -d_min;
    }
    let sum: f64 = distances.iter().map(|d| (d_min - d).exp()).sum();
    counter.exps += distances.len() as u64;
    counter.logs += 1;
    sum.ln() - d_min
}

/// Summary of the candidate distances for one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub d_min: f64,
    pub argmin: usize,
    /// `log sum exp(-d)`; only evaluated for Log-MAP metrics.
    pub logsum: Option<f64>,
}

/// Minimum with the lowest index winning ties.
pub fn argmin(distances: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &d) in distances.iter().enumerate() {
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Scores one hypothesis from its candidate distances. Returns the
/// log-likelihood contribution (prior included) and the distance summary.
pub fn score_hypothesis(
    metric: Metric,
    distances: &[f64],
    counter: &mut OpCounter,
) -> (f64, DistanceResult) {
    let prior = -(distances.len() as f64).ln();
    let (argmin, d_min) = argmin(distances);
    match metric {
        Metric::MaxLogMap => (
            prior - d_min,
            DistanceResult {
                d_min,
                argmin,
                logsum: None,
            },
        ),
        Metric::LogMap => {
            let logsum = log_sum_exp_neg(distances, counter);
            (
                prior + logsum,
                DistanceResult {
                    d_min,
                    argmin,
                    logsum: Some(logsum),
                },
            )
        }
    }
}

/// Accumulated per-hypothesis log-likelihoods for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisScore {
    pub layer: usize,
    pub hypotheses: Vec<Modulation>,
    pub scores: Vec<f64>,
    pub observations: usize,
}

impl HypothesisScore {
    pub fn new(layer: usize, hypotheses: &[Modulation]) -> Self {
        HypothesisScore {
            layer,
            hypotheses: hypotheses.to_vec(),
            scores: vec![0.0; hypotheses.len()],
            observations: 0,
        }
    }

    /// Index of the best score; the lowest index wins ties.
    pub fn winner_index(&self) -> usize {
        let mut best = 0;
        for (j, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = j;
            }
        }
        best
    }

    pub fn winner(&self) -> Modulation {
        self.hypotheses[self.winner_index()]
    }
}

/// Folds observations into a [`HypothesisScore`] through a distance model.
pub struct LayerAccumulator<M> {
    model: M,
    metric: Metric,
    score: HypothesisScore,
    buf: Vec<f64>,
}

impl<M: DistanceModel> LayerAccumulator<M> {
    pub fn new(model: M, metric: Metric, hypotheses: &[Modulation]) -> Result<Self, ClassifyError> {
        if hypotheses.is_empty() {
            return Err(ClassifyError::NoHypotheses);
        }
        let layer = model.layer();
        let largest = hypotheses.iter().map(|m| m.order()).max().unwrap_or(1);
        Ok(LayerAccumulator {
            model,
            metric,
            score: HypothesisScore::new(layer, hypotheses),
            buf: vec![0.0; largest],
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Adds one observation; `observe` sees each hypothesis' distances.
    pub fn push_observing(
        &mut self,
        y: &[Complex64],
        counter: &mut OpCounter,
        mut observe: impl FnMut(usize, &[f64], &DistanceResult),
    ) {
        self.model.prepare(y);
        for (j, mt) in self.score.hypotheses.iter().enumerate() {
            let c = mt.constellation();
            let d = &mut self.buf[..c.len()];
            self.model.distances(c, d, None);
            counter.distances += c.len() as u64;
            let (contrib, summary) = score_hypothesis(self.metric, d, counter);
            self.score.scores[j] += contrib;
            observe(j, d, &summary);
        }
        self.score.observations += 1;
    }

    pub fn push(&mut self, y: &[Complex64], counter: &mut OpCounter) {
        self.push_observing(y, counter, |_, _, _| {});
    }

    pub fn score(&self) -> &HypothesisScore {
        &self.score
    }

    pub fn finish(self) -> HypothesisScore {
        self.score
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    LogMap,
    MaxLogMap,
    ZfAlrt,
    SubspaceLogMap,
    SubspaceMaxLogMap,
    LordLogMap,
    LordMaxLogMap,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 7] = [
        ClassifierKind::LogMap,
        ClassifierKind::MaxLogMap,
        ClassifierKind::ZfAlrt,
        ClassifierKind::SubspaceLogMap,
        ClassifierKind::SubspaceMaxLogMap,
        ClassifierKind::LordLogMap,
        ClassifierKind::LordMaxLogMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::LogMap => "log-map",
            ClassifierKind::MaxLogMap => "max-log-map",
            ClassifierKind::ZfAlrt => "zf-alrt",
            ClassifierKind::SubspaceLogMap => "subspace-log-map",
            ClassifierKind::SubspaceMaxLogMap => "subspace-max-log-map",
            ClassifierKind::LordLogMap => "lord-log-map",
            ClassifierKind::LordMaxLogMap => "lord-max-log-map",
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            ClassifierKind::MaxLogMap
            | ClassifierKind::SubspaceMaxLogMap
            | ClassifierKind::LordMaxLogMap => Metric::MaxLogMap,
            _ => Metric::LogMap,
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, ClassifierKind::LogMap | ClassifierKind::MaxLogMap)
    }

    /// Slicing expansion for subspace / LORD classifiers.
    pub fn expansion(self) -> Option<Expansion> {
        match self {
            ClassifierKind::SubspaceLogMap | ClassifierKind::SubspaceMaxLogMap => {
                Some(Expansion::Subspace)
            }
            ClassifierKind::LordLogMap | ClassifierKind::LordMaxLogMap => Some(Expansion::Lord),
            _ => None,
        }
    }

    /// Upper bound on operations per observation. Joint schemes are measured
    /// per observation; per-layer schemes per observation and layer of
    /// interest, since their `S` logarithms are paid once per layer.
    pub fn complexity_bound(self, antennas: usize, hypotheses: usize, largest: usize) -> OpCounter {
        let (n, s, x) = (antennas as u64, hypotheses as u64, largest as u64);
        let joint = s.pow(n as u32) * x.pow(n as u32);
        match self {
            ClassifierKind::LogMap => OpCounter {
                distances: joint,
                exps: joint,
                logs: s.pow(n as u32),
            },
            ClassifierKind::MaxLogMap => OpCounter {
                distances: joint,
                exps: 0,
                logs: 0,
            },
            ClassifierKind::ZfAlrt
            | ClassifierKind::SubspaceLogMap
            | ClassifierKind::LordLogMap => OpCounter {
                distances: n * s * x,
                exps: n * s * x,
                logs: s,
            },
            ClassifierKind::SubspaceMaxLogMap | ClassifierKind::LordMaxLogMap => OpCounter {
                distances: n * s * x,
                exps: 0,
                logs: 0,
            },
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| ClassifyError::UnknownClassifier(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierOptions {
    /// Constellation assumed on the remaining streams while slicing.
    pub slice_const: Modulation,
    pub zf_variance: ZfVariance,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            slice_const: Modulation::Qam1024,
            zf_variance: ZfVariance::ColumnEnergy,
        }
    }
}

/// What a classifier may see of a frame: the channel, the noise variance
/// and the received vectors.
#[derive(Debug, Clone, Copy)]
pub struct Received<'a> {
    pub h: &'a CMatrix,
    pub sigma2: f64,
    pub observations: &'a [Observation],
}

impl<'a> From<&'a crate::channel::Frame> for Received<'a> {
    fn from(f: &'a crate::channel::Frame) -> Self {
        Received {
            h: &f.channel.h,
            sigma2: f.sigma2,
            observations: &f.observations,
        }
    }
}

fn fold<M: DistanceModel>(
    model: M,
    metric: Metric,
    rx: Received<'_>,
    hypotheses: &[Modulation],
    counter: &mut OpCounter,
) -> Result<HypothesisScore, ClassifyError> {
    let mut acc = LayerAccumulator::new(model, metric, hypotheses)?;
    for o in rx.observations {
        acc.push(&o.y, counter);
    }
    Ok(acc.finish())
}

/// Per-layer classification of `layer` over all observations of `rx`.
pub fn classify_layer(
    kind: ClassifierKind,
    rx: Received<'_>,
    layer: usize,
    hypotheses: &[Modulation],
    opts: &ClassifierOptions,
    counter: &mut OpCounter,
) -> Result<HypothesisScore, ClassifyError> {
    let n = rx.h.cols();
    let slicers: Vec<&'static Constellation> =
        vec![opts.slice_const.constellation(); n.saturating_sub(1)];
    match kind {
        ClassifierKind::LogMap | ClassifierKind::MaxLogMap => Err(ClassifyError::NotPerLayer(kind)),
        ClassifierKind::ZfAlrt => {
            let model = ZfModel::new(rx.h, layer, rx.sigma2, opts.zf_variance)?;
            fold(model, Metric::LogMap, rx, hypotheses, counter)
        }
        ClassifierKind::SubspaceLogMap | ClassifierKind::SubspaceMaxLogMap => {
            let model = SubspaceModel::new(rx.h, layer, slicers, rx.sigma2)?;
            fold(model, kind.metric(), rx, hypotheses, counter)
        }
        ClassifierKind::LordLogMap | ClassifierKind::LordMaxLogMap => {
            let model = LordModel::new(rx.h, layer, slicers, rx.sigma2)?;
            fold(model, kind.metric(), rx, hypotheses, counter)
        }
    }
}

/// Classifies every layer; joint kinds decide all layers at once.
pub fn classify_all_layers(
    kind: ClassifierKind,
    rx: Received<'_>,
    hypotheses: &[Modulation],
    opts: &ClassifierOptions,
    counter: &mut OpCounter,
) -> Result<Vec<Modulation>, ClassifyError> {
    if kind.is_joint() {
        return Ok(classify_joint(kind.metric(), rx, hypotheses, counter)?
            .winner()
            .to_vec());
    }
    (0..rx.h.cols())
        .map(|layer| classify_layer(kind, rx, layer, hypotheses, opts, counter).map(|s| s.winner()))
        .collect()
}

/// Scores of every joint hypothesis (one modulation per layer).
#[derive(Debug, Clone)]
pub struct JointScore {
    pub combinations: Vec<Vec<Modulation>>,
    pub scores: Vec<f64>,
    pub observations: usize,
}

impl JointScore {
    pub fn winner_index(&self) -> usize {
        let mut best = 0;
        for (j, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = j;
            }
        }
        best
    }

    pub fn winner(&self) -> &[Modulation] {
        &self.combinations[self.winner_index()]
    }
}

/// All `S^N` joint hypotheses in lexicographic order of hypothesis index.
pub fn joint_combinations(hypotheses: &[Modulation], layers: usize) -> Vec<Vec<Modulation>> {
    let s = hypotheses.len();
    let total = s.pow(layers as u32);
    (0..total)
        .map(|mut idx| {
            let mut combo = vec![hypotheses[0]; layers];
            for slot in combo.iter_mut().rev() {
                *slot = hypotheses[idx % s];
                idx /= s;
            }
            combo
        })
        .collect()
}

/// Scaled distances `(1/sigma^2) ||y - Hx||^2` over the whole lattice of
/// `modulations`, in odometer order (last layer fastest).
pub fn lattice_distances(
    h: &CMatrix,
    sigma2: f64,
    y: &[Complex64],
    modulations: &[Modulation],
    out: &mut Vec<f64>,
) {
    let n = modulations.len();
    let m = h.rows();
    let sets: Vec<&Constellation> = modulations.iter().map(|mt| mt.constellation()).collect();
    // per layer, per point: column contribution h_n x
    let contrib: Vec<Vec<Vec<Complex64>>> = sets
        .iter()
        .enumerate()
        .map(|(layer, c)| {
            c.points()
                .iter()
                .map(|x| (0..m).map(|r| h[(r, layer)] * x).collect())
                .collect()
        })
        .collect();
    let inv = 1.0 / sigma2;
    out.clear();
    let mut idx = vec![0usize; n];
    let mut residual = vec![Complex64::new(0.0, 0.0); m];
    loop {
        residual.copy_from_slice(y);
        for layer in 0..n {
            for (r, v) in residual.iter_mut().zip(&contrib[layer][idx[layer]]) {
                *r -= v;
            }
        }
        out.push(residual.iter().map(|r| r.norm_sqr()).sum::<f64>() * inv);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Exhaustive joint classifier over `S^N` hypotheses.
pub fn classify_joint(
    metric: Metric,
    rx: Received<'_>,
    hypotheses: &[Modulation],
    counter: &mut OpCounter,
) -> Result<JointScore, ClassifyError> {
    if hypotheses.is_empty() {
        return Err(ClassifyError::NoHypotheses);
    }
    if !(rx.sigma2 > 0.0) {
        return Err(MetricError::NonPositiveVariance(rx.sigma2).into());
    }
    let n = rx.h.cols();
    let largest = hypotheses.iter().map(|m| m.order()).max().unwrap_or(1) as u128;
    let lattice = largest.pow(n as u32);
    if lattice > JOINT_LATTICE_LIMIT as u128 {
        return Err(ClassifyError::TooLarge {
            size: lattice,
            limit: JOINT_LATTICE_LIMIT,
        });
    }
    let combos_len = (hypotheses.len() as u128).pow(n as u32);
    if combos_len > JOINT_LATTICE_LIMIT as u128 {
        return Err(ClassifyError::TooLarge {
            size: combos_len,
            limit: JOINT_LATTICE_LIMIT,
        });
    }
    let combinations = joint_combinations(hypotheses, n);
    let priors: Vec<f64> = combinations
        .iter()
        .map(|c| c.iter().map(|m| -(m.order() as f64).ln()).sum())
        .collect();
    let mut scores = vec![0.0; combinations.len()];
    let mut buf = Vec::new();
    for o in rx.observations {
        for (j, combo) in combinations.iter().enumerate() {
            lattice_distances(rx.h, rx.sigma2, &o.y, combo, &mut buf);
            counter.distances += buf.len() as u64;
            let term = match metric {
                Metric::LogMap => log_sum_exp_neg(&buf, counter),
                Metric::MaxLogMap => -argmin(&buf).1,
            };
            scores[j] += priors[j] + term;
        }
    }
    Ok(JointScore {
        combinations,
        scores,
        observations: rx.observations.len(),
    })
}
