//! Seeded Monte-Carlo sweeps: classification (CCR), detection (SER) and
//! operation counting.
//!
//! Frame `i` at every SNR point is drawn from ChaCha stream `i` of the
//! configured seed, and every classifier sees the same frames. Workers
//! produce per-frame outcomes that are reduced in frame order, so results
//! do not depend on the number of threads.

use mimo_mc::classifiers::{
    classify_all_layers, classify_joint, classify_layer, ClassifierOptions,
};
use mimo_mc::detection::{joint_classify_detect, mt_aware_detect, CacheMode};
use mimo_mc::metric::Expansion;
use mimo_mc::{draw_frame, ClassifierKind, Frame, FrameSpec, Modulation, OpCounter, Received};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DetectorKind, ExperimentConfig};
use crate::report::{binomial_ci95, MetricRow};
use crate::HarnessError;

type FrameResult<O> = Result<(Vec<Modulation>, Vec<O>), HarnessError>;

/// Frames with a numerical failure above this fraction fail the run.
pub const FAILURE_TOLERANCE: f64 = 1e-3;

/// One line of the optional per-frame trace.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TraceRecord {
    pub experiment: &'static str,
    pub snr_db: f64,
    pub frame: u64,
    pub classifier: String,
    pub truth: Vec<String>,
    pub decided: Vec<String>,
    pub correct_layers: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol_errors: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub rows: Vec<MetricRow>,
    /// Frames drawn over the whole sweep.
    pub frames: u64,
    /// Frames on which at least one classifier or detector failed.
    pub failed_frames: u64,
    pub trace: Vec<TraceRecord>,
}

impl RunReport {
    pub fn failure_rate(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.failed_frames as f64 / self.frames as f64
        }
    }

    pub fn numerical_failure(&self) -> bool {
        self.failure_rate() > FAILURE_TOLERANCE
    }

    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// What one classifier or detector did on one frame.
#[derive(Debug, Clone, Default)]
struct Outcome {
    decided: Vec<Modulation>,
    correct: u64,
    layers: u64,
    symbol_errors: u64,
    symbols: u64,
    ops: OpCounter,
    error: Option<String>,
}

#[derive(Debug, Default)]
struct Tally {
    frames: u64,
    correct: u64,
    layers: u64,
    symbol_errors: u64,
    symbols: u64,
    ops: OpCounter,
}

impl Tally {
    fn add(&mut self, o: &Outcome) {
        self.frames += 1;
        self.correct += o.correct;
        self.layers += o.layers;
        self.symbol_errors += o.symbol_errors;
        self.symbols += o.symbols;
        self.ops += o.ops;
    }

    fn row(&self, name: &str, snr_db: f64, with_ser: bool) -> MetricRow {
        let ccr = if self.layers == 0 {
            0.0
        } else {
            self.correct as f64 / self.layers as f64
        };
        let ser = with_ser.then(|| {
            if self.symbols == 0 {
                0.0
            } else {
                self.symbol_errors as f64 / self.symbols as f64
            }
        });
        MetricRow {
            classifier: name.to_string(),
            snr_db,
            ccr,
            ccr_ci95: binomial_ci95(ccr, self.layers),
            ser,
            frames: self.frames,
            layers: self.layers,
            ops: self.ops,
        }
    }
}

fn thread_pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn frame_spec(
    cfg: &ExperimentConfig,
    snr_db: f64,
    pinned: Option<(usize, Modulation)>,
) -> FrameSpec {
    FrameSpec {
        antennas: cfg.antennas,
        observations: cfg.observations,
        hypotheses: cfg.hypotheses.clone(),
        snr_db,
        rho: cfg.rho,
        seed: cfg.seed,
        pinned,
    }
}

fn draw(spec: &FrameSpec, index: u64) -> Result<Frame, HarnessError> {
    Ok(draw_frame(spec, &mut spec.frame_rng(index))?)
}

fn names(mts: &[Modulation]) -> Vec<String> {
    mts.iter().map(|m| m.name().to_string()).collect()
}

/// Runs `per_frame` over every frame of every SNR point and reduces the
/// outcomes in order. `units` names the columns of the outcome vectors.
fn sweep<F>(
    cfg: &ExperimentConfig,
    experiment: &'static str,
    units: &[String],
    pinned: Option<(usize, Modulation)>,
    with_ser: bool,
    per_frame: F,
) -> Result<RunReport, HarnessError>
where
    F: Fn(&Frame) -> Vec<Outcome> + Sync,
{
    let pool = thread_pool(cfg)?;
    let mut report = RunReport::default();
    for &snr_db in &cfg.snr_grid_db {
        let spec = frame_spec(cfg, snr_db, pinned);
        spec.validate()?;
        let outcomes: Vec<FrameResult<Outcome>> = pool.install(|| {
            (0..cfg.frames_per_point as u64)
                .into_par_iter()
                .map(|i| {
                    let frame = draw(&spec, i)?;
                    Ok((frame.modulations.clone(), per_frame(&frame)))
                })
                .collect()
        });
        let mut tallies: Vec<Tally> = units.iter().map(|_| Tally::default()).collect();
        for (i, res) in outcomes.into_iter().enumerate() {
            let (truth, per_unit) = res?;
            report.frames += 1;
            let mut failed = false;
            for ((tally, outcome), name) in tallies.iter_mut().zip(&per_unit).zip(units) {
                match outcome.error {
                    Some(_) => failed = true,
                    None => tally.add(outcome),
                }
                if cfg.trace_path.is_some() {
                    report.trace.push(TraceRecord {
                        experiment,
                        snr_db,
                        frame: i as u64,
                        classifier: name.clone(),
                        truth: names(&truth),
                        decided: names(&outcome.decided),
                        correct_layers: outcome.correct,
                        symbol_errors: with_ser.then_some(outcome.symbol_errors),
                        error: outcome.error.clone(),
                    });
                }
            }
            report.failed_frames += u64::from(failed);
        }
        report.rows.extend(
            tallies
                .iter()
                .zip(units)
                .map(|(t, name)| t.row(name, snr_db, with_ser)),
        );
    }
    Ok(report)
}

fn classify_frame(
    frame: &Frame,
    kind: ClassifierKind,
    hypotheses: &[Modulation],
    opts: &ClassifierOptions,
) -> Outcome {
    let mut ops = OpCounter::default();
    match classify_all_layers(kind, frame.into(), hypotheses, opts, &mut ops) {
        Ok(decided) => {
            let correct = decided
                .iter()
                .zip(&frame.modulations)
                .filter(|(d, t)| d == t)
                .count() as u64;
            Outcome {
                correct,
                layers: decided.len() as u64,
                ops,
                decided,
                ..Default::default()
            }
        }
        Err(e) => Outcome {
            error: Some(e.to_string()),
            ..Default::default()
        },
    }
}

/// Classifies every layer of every frame with each configured classifier
/// and reports the correct classification ratio.
pub fn run_ccr_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let kinds = cfg.ccr_classifiers()?;
    let opts = ClassifierOptions {
        slice_const: cfg.slice_const,
        zf_variance: cfg.zf_variance,
    };
    let units: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
    sweep(cfg, "ccr", &units, None, false, |frame| {
        kinds
            .iter()
            .map(|&k| classify_frame(frame, k, &cfg.hypotheses, &opts))
            .collect()
    })
}

fn detect_frame(frame: &Frame, detector: DetectorKind, cfg: &ExperimentConfig) -> Outcome {
    let layer = cfg.layer;
    let rx: Received<'_> = frame.into();
    let mut ops = OpCounter::default();
    let joint = |hypotheses: &[Modulation], ops: &mut OpCounter| {
        let kind = match detector.expansion() {
            Expansion::Subspace => ClassifierKind::SubspaceLogMap,
            Expansion::Lord => ClassifierKind::LordLogMap,
        };
        joint_classify_detect(
            rx,
            layer,
            hypotheses,
            cfg.slice_const,
            kind,
            CacheMode::BitMinima,
            ops,
        )
        .map(|d| (d.winner, d.decisions))
    };
    let result = match detector {
        DetectorKind::Subspace | DetectorKind::Lord => joint(&[cfg.layer_mt], &mut ops),
        DetectorKind::SubspaceJoint | DetectorKind::LordJoint => joint(&cfg.hypotheses, &mut ops),
        DetectorKind::SubspaceAware | DetectorKind::LordAware => mt_aware_detect(
            rx,
            layer,
            &frame.modulations,
            detector.expansion(),
            &mut ops,
        )
        .map(|d| {
            (
                frame.modulations[layer],
                d.into_iter().map(|x| x.decision).collect(),
            )
        }),
    };
    match result {
        Ok((winner, decisions)) => {
            let symbol_errors = decisions
                .iter()
                .zip(&frame.observations)
                .filter(|(d, o)| **d != o.x[layer])
                .count() as u64;
            Outcome {
                decided: vec![winner],
                correct: u64::from(winner == frame.modulations[layer]),
                layers: 1,
                symbol_errors,
                symbols: decisions.len() as u64,
                ops,
                error: None,
            }
        }
        Err(e) => Outcome {
            error: Some(e.to_string()),
            ..Default::default()
        },
    }
}

/// Fixes the layer of interest to `layer_mt`, lets the other layers hop
/// over the hypothesis set, and reports the hard-decision symbol error
/// rate of each detector on that layer. The `ccr` column is the
/// classification ratio of the layer of interest (1 for detectors told
/// its modulation).
pub fn run_ser_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let detectors = cfg.detectors()?;
    let units: Vec<String> = detectors.iter().map(|d| d.name().to_string()).collect();
    sweep(
        cfg,
        "ser",
        &units,
        Some((cfg.layer, cfg.layer_mt)),
        true,
        |frame| {
            detectors
                .iter()
                .map(|&d| detect_frame(frame, d, cfg))
                .collect()
        },
    )
}

/// Largest per-unit operation count of one classifier next to its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct OpsRow {
    pub classifier: ClassifierKind,
    /// `observation` for joint classifiers, `observation-layer` otherwise.
    pub unit: &'static str,
    pub units: u64,
    pub measured: OpCounter,
    pub bound: OpCounter,
}

impl OpsRow {
    pub fn within_bound(&self) -> bool {
        self.measured.fits_within(&self.bound)
    }
}

fn max_counter(a: OpCounter, b: OpCounter) -> OpCounter {
    OpCounter {
        distances: a.distances.max(b.distances),
        exps: a.exps.max(b.exps),
        logs: a.logs.max(b.logs),
    }
}

/// Measures operations per observation (per observation and layer for
/// per-layer classifiers) at the first SNR point and compares the worst
/// case with the closed-form bound.
pub fn count_ops_report(cfg: &ExperimentConfig) -> Result<Vec<OpsRow>, HarnessError> {
    let kinds = cfg.ccr_classifiers()?;
    let opts = ClassifierOptions {
        slice_const: cfg.slice_const,
        zf_variance: cfg.zf_variance,
    };
    let spec = frame_spec(cfg, cfg.snr_grid_db[0], None);
    spec.validate()?;
    let largest = cfg.hypotheses.iter().map(|m| m.order()).max().unwrap_or(1);
    let pool = thread_pool(cfg)?;
    let per_frame: Vec<Result<Vec<(u64, OpCounter)>, HarnessError>> = pool.install(|| {
        (0..cfg.frames_per_point as u64)
            .into_par_iter()
            .map(|i| {
                let frame = draw(&spec, i)?;
                kinds
                    .iter()
                    .map(|&k| measure_frame(&frame, k, &cfg.hypotheses, &opts))
                    .collect()
            })
            .collect()
    });
    let mut rows: Vec<OpsRow> = kinds
        .iter()
        .map(|&k| OpsRow {
            classifier: k,
            unit: if k.is_joint() {
                "observation"
            } else {
                "observation-layer"
            },
            units: 0,
            measured: OpCounter::default(),
            bound: k.complexity_bound(cfg.antennas, cfg.hypotheses.len(), largest),
        })
        .collect();
    for frame in per_frame {
        for (row, (units, worst)) in rows.iter_mut().zip(frame?) {
            row.units += units;
            row.measured = max_counter(row.measured, worst);
        }
    }
    Ok(rows)
}

fn measure_frame(
    frame: &Frame,
    kind: ClassifierKind,
    hypotheses: &[Modulation],
    opts: &ClassifierOptions,
) -> Result<(u64, OpCounter), HarnessError> {
    let mut worst = OpCounter::default();
    let mut units = 0;
    for t in 0..frame.observations.len() {
        let rx = Received {
            h: &frame.channel.h,
            sigma2: frame.sigma2,
            observations: &frame.observations[t..t + 1],
        };
        if kind.is_joint() {
            let mut c = OpCounter::default();
            classify_joint(kind.metric(), rx, hypotheses, &mut c)
                .map_err(HarnessError::numerical)?;
            worst = max_counter(worst, c);
            units += 1;
        } else {
            for layer in 0..frame.antennas() {
                let mut c = OpCounter::default();
                classify_layer(kind, rx, layer, hypotheses, opts, &mut c)
                    .map_err(HarnessError::numerical)?;
                worst = max_counter(worst, c);
                units += 1;
            }
        }
    }
    Ok((units, worst))
}

/// Renders an ops report as CSV.
pub fn render_ops(rows: &[OpsRow]) -> String {
    let mut out = String::from(
        "classifier,unit,units,dist_ops,exp_ops,log_ops,dist_bound,exp_bound,log_bound,within\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.classifier,
            r.unit,
            r.units,
            r.measured.distances,
            r.measured.exps,
            r.measured.logs,
            r.bound.distances,
            r.bound.exps,
            r.bound.logs,
            r.within_bound()
        ));
    }
    out
}
