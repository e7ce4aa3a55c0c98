//! Soft-output subspace / LORD detection and the per-layer joint
//! classification-and-detection pipeline.
//!
//! The pipeline computes candidate distances once per observation and
//! hypothesis, folds them into the classifier score, and caches them. After
//! the frame, the winning hypothesis' entries are read back to produce bit
//! LLRs and hard decisions without recomputing any distance.

use num_complex::Complex64;
use thiserror::Error;

use crate::classifiers::{
    argmin, score_hypothesis, ClassifierKind, ClassifyError, HypothesisScore, OpCounter, Received,
};
use crate::constellation::{Constellation, Modulation};
use crate::metric::{expansion_model, true_slicers, Expansion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("bit {bit} has no candidate with value {value}")]
    EmptyBitClass { bit: usize, value: u8 },
    #[error("distance count {got} does not match constellation size {expected}")]
    DistanceCount { expected: usize, got: usize },
    #[error("cache miss for hypothesis {hypothesis}, observation {observation}")]
    CacheMiss {
        hypothesis: usize,
        observation: usize,
    },
    #[error("`{0}` cannot drive subspace detection")]
    UnsupportedClassifier(ClassifierKind),
    #[error("expected {expected} per-layer modulation types, got {got}")]
    ModulationCount { expected: usize, got: usize },
}

impl From<crate::metric::MetricError> for DetectionError {
    fn from(e: crate::metric::MetricError) -> Self {
        DetectionError::Classify(e.into())
    }
}

/// Bit LLRs for one symbol of one layer, `u_k - v_k` (negative favours 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LlrVector {
    pub layer: usize,
    pub llrs: Vec<f64>,
}

impl LlrVector {
    /// Multiplies every LLR by `factor`.
    pub fn rescaled(mut self, factor: f64) -> Self {
        for l in &mut self.llrs {
            *l *= factor;
        }
        self
    }

    /// Hard bit decisions from the LLR signs.
    pub fn hard_bits(&self) -> Vec<u8> {
        self.llrs.iter().map(|&l| u8::from(l > 0.0)).collect()
    }
}

/// Per-bit minimum distances over the bit-0 and bit-1 classes.
fn bit_minima(distances: &[f64], c: &Constellation, out: &mut [(f64, f64)]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mut u = f64::INFINITY;
        let mut v = f64::INFINITY;
        for (i, &d) in distances.iter().enumerate() {
            if c.bit(i, k) == 0 {
                u = u.min(d);
            } else {
                v = v.min(d);
            }
        }
        *slot = (u, v);
    }
}

fn llrs_from_minima(minima: &[(f64, f64)], layer: usize) -> Result<LlrVector, DetectionError> {
    let mut llrs = Vec::with_capacity(minima.len());
    for (bit, &(u, v)) in minima.iter().enumerate() {
        if !u.is_finite() {
            return Err(DetectionError::EmptyBitClass { bit, value: 0 });
        }
        if !v.is_finite() {
            return Err(DetectionError::EmptyBitClass { bit, value: 1 });
        }
        llrs.push(u - v);
    }
    Ok(LlrVector { layer, llrs })
}

/// LLRs from one distance per point of `c`, in the units of `distances`.
pub fn subspace_llrs(
    distances: &[f64],
    c: &Constellation,
    layer: usize,
) -> Result<LlrVector, DetectionError> {
    if distances.len() != c.len() {
        return Err(DetectionError::DistanceCount {
            expected: c.len(),
            got: distances.len(),
        });
    }
    let mut minima = vec![(0.0, 0.0); c.bits_per_symbol()];
    bit_minima(distances, c, &mut minima);
    llrs_from_minima(&minima, layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CacheMode {
    /// Every candidate distance and slicer output.
    #[default]
    Full,
    /// Only per-bit minima and the best candidate per observation.
    BitMinima,
}

#[derive(Debug, Clone, Default)]
struct HypothesisEntries {
    order: usize,
    bits: usize,
    distances: Vec<f64>,
    estimates: Vec<Complex64>,
    minima: Vec<(f64, f64)>,
    best: Vec<usize>,
}

/// Distances written while classifying, keyed by (hypothesis, observation).
#[derive(Debug, Clone)]
pub struct DistanceCache {
    mode: CacheMode,
    hypotheses: Vec<Modulation>,
    remaining: usize,
    entries: Vec<HypothesisEntries>,
}

impl DistanceCache {
    pub fn new(
        mode: CacheMode,
        hypotheses: &[Modulation],
        remaining: usize,
        observations: usize,
    ) -> Self {
        let entries = hypotheses
            .iter()
            .map(|m| {
                let (order, bits) = (m.order(), m.bits_per_symbol());
                let mut e = HypothesisEntries {
                    order,
                    bits,
                    ..Default::default()
                };
                e.best.reserve(observations);
                match mode {
                    CacheMode::Full => {
                        e.distances.reserve(observations * order);
                        e.estimates.reserve(observations * order * remaining);
                    }
                    CacheMode::BitMinima => e.minima.reserve(observations * bits),
                }
                e
            })
            .collect();
        DistanceCache {
            mode,
            hypotheses: hypotheses.to_vec(),
            remaining,
            entries,
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    /// Appends the entry for the next observation of hypothesis `j`.
    fn write(&mut self, j: usize, distances: &[f64], estimates: &[Complex64]) {
        let c = self.hypotheses[j].constellation();
        let e = &mut self.entries[j];
        e.best.push(argmin(distances).0);
        match self.mode {
            CacheMode::Full => {
                e.distances.extend_from_slice(distances);
                e.estimates.extend_from_slice(estimates);
            }
            CacheMode::BitMinima => {
                let start = e.minima.len();
                e.minima.resize(start + e.bits, (0.0, 0.0));
                bit_minima(distances, c, &mut e.minima[start..]);
            }
        }
    }

    /// Observations stored for hypothesis `j`.
    pub fn len(&self, j: usize) -> usize {
        self.entries.get(j).map_or(0, |e| e.best.len())
    }

    pub fn contains(&self, j: usize, t: usize) -> bool {
        t < self.len(j)
    }

    fn check(&self, j: usize, t: usize) -> Result<&HypothesisEntries, DetectionError> {
        match self.entries.get(j) {
            Some(e) if t < e.best.len() => Ok(e),
            _ => Err(DetectionError::CacheMiss {
                hypothesis: j,
                observation: t,
            }),
        }
    }

    /// Cached candidate distances (full mode only).
    pub fn distances(&self, j: usize, t: usize) -> Result<&[f64], DetectionError> {
        let e = self.check(j, t)?;
        if self.mode != CacheMode::Full {
            return Err(DetectionError::CacheMiss {
                hypothesis: j,
                observation: t,
            });
        }
        Ok(&e.distances[t * e.order..(t + 1) * e.order])
    }

    /// Cached slicer outputs for candidate `k` (full mode only).
    pub fn estimates(&self, j: usize, t: usize, k: usize) -> Result<&[Complex64], DetectionError> {
        let e = self.check(j, t)?;
        if self.mode != CacheMode::Full || k >= e.order {
            return Err(DetectionError::CacheMiss {
                hypothesis: j,
                observation: t,
            });
        }
        let r = self.remaining;
        let base = (t * e.order + k) * r;
        Ok(&e.estimates[base..base + r])
    }

    /// Hard decision: the candidate with the smallest distance.
    pub fn decision(&self, j: usize, t: usize) -> Result<Complex64, DetectionError> {
        let e = self.check(j, t)?;
        Ok(self.hypotheses[j].constellation().points()[e.best[t]])
    }

    pub fn llrs(&self, j: usize, t: usize, layer: usize) -> Result<LlrVector, DetectionError> {
        let e = self.check(j, t)?;
        match self.mode {
            CacheMode::Full => subspace_llrs(
                &e.distances[t * e.order..(t + 1) * e.order],
                self.hypotheses[j].constellation(),
                layer,
            ),
            CacheMode::BitMinima => {
                llrs_from_minima(&e.minima[t * e.bits..(t + 1) * e.bits], layer)
            }
        }
    }
}

/// Result of the joint pipeline for one layer.
#[derive(Debug, Clone)]
pub struct JointDetection {
    pub layer: usize,
    pub score: HypothesisScore,
    pub winner: Modulation,
    /// Unscaled LLRs (multiply by `1/sigma^2` for true max-log LLRs), one
    /// vector per observation.
    pub llrs: Vec<LlrVector>,
    pub decisions: Vec<Complex64>,
    pub cache: DistanceCache,
    /// (hypothesis, observation) keys read back after the decision.
    pub cache_reads: Vec<(usize, usize)>,
}

/// Runs the per-layer joint classification and detection over a frame:
/// swap, decompose, distances for all hypotheses with the dense slicing
/// assumption, accumulate, decide, then emit LLRs from the cache.
pub fn joint_classify_detect(
    rx: Received<'_>,
    layer: usize,
    hypotheses: &[Modulation],
    slice_const: Modulation,
    kind: ClassifierKind,
    mode: CacheMode,
    counter: &mut OpCounter,
) -> Result<JointDetection, DetectionError> {
    let expansion = kind
        .expansion()
        .ok_or(DetectionError::UnsupportedClassifier(kind))?;
    if hypotheses.is_empty() {
        return Err(ClassifyError::NoHypotheses.into());
    }
    let n = rx.h.cols();
    let slicers = vec![slice_const.constellation(); n.saturating_sub(1)];
    let mut model = expansion_model(expansion, rx.h, layer, slicers, rx.sigma2)?;
    let rem = model.remaining();
    let largest = hypotheses.iter().map(|m| m.order()).max().unwrap_or(1);
    let mut dist = vec![0.0; largest];
    let mut est = vec![Complex64::new(0.0, 0.0); largest * rem];
    let mut cache = DistanceCache::new(mode, hypotheses, rem, rx.observations.len());
    let mut score = HypothesisScore::new(layer, hypotheses);

    for o in rx.observations {
        model.prepare(&o.y);
        for (j, mt) in hypotheses.iter().enumerate() {
            let c = mt.constellation();
            let d = &mut dist[..c.len()];
            let e = &mut est[..c.len() * rem];
            let want_estimates = mode == CacheMode::Full;
            model.distances(c, d, want_estimates.then_some(&mut *e));
            counter.distances += c.len() as u64;
            let (contrib, _) = score_hypothesis(kind.metric(), d, counter);
            score.scores[j] += contrib;
            cache.write(j, d, if want_estimates { e } else { &[] });
        }
        score.observations += 1;
    }

    let w = score.winner_index();
    let t_len = rx.observations.len();
    let mut llrs = Vec::with_capacity(t_len);
    let mut decisions = Vec::with_capacity(t_len);
    let mut cache_reads = Vec::with_capacity(t_len);
    for t in 0..t_len {
        cache_reads.push((w, t));
        decisions.push(cache.decision(w, t)?);
        if hypotheses[w].bits_per_symbol() > 0 {
            llrs.push(cache.llrs(w, t, layer)?.rescaled(rx.sigma2));
        } else {
            llrs.push(LlrVector {
                layer,
                llrs: Vec::new(),
            });
        }
    }
    Ok(JointDetection {
        layer,
        winner: hypotheses[w],
        score,
        llrs,
        decisions,
        cache,
        cache_reads,
    })
}

/// One detected symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub llrs: LlrVector,
    pub decision: Complex64,
}

/// Detection of `layer` with every layer's true modulation known: the
/// candidate set and all slicers use the true constellations.
pub fn mt_aware_detect(
    rx: Received<'_>,
    layer: usize,
    modulations: &[Modulation],
    expansion: Expansion,
    counter: &mut OpCounter,
) -> Result<Vec<Detection>, DetectionError> {
    let n = rx.h.cols();
    if modulations.len() != n {
        return Err(DetectionError::ModulationCount {
            expected: n,
            got: modulations.len(),
        });
    }
    let mut model = expansion_model(
        expansion,
        rx.h,
        layer,
        true_slicers(modulations, layer),
        rx.sigma2,
    )?;
    let c = modulations[layer].constellation();
    let mut dist = vec![0.0; c.len()];
    rx.observations
        .iter()
        .map(|o| {
            model.prepare(&o.y);
            model.distances(c, &mut dist, None);
            counter.distances += c.len() as u64;
            let decision = c.points()[argmin(&dist).0];
            let llrs = if c.bits_per_symbol() > 0 {
                subspace_llrs(&dist, c, layer)?.rescaled(rx.sigma2)
            } else {
                LlrVector {
                    layer,
                    llrs: Vec::new(),
                }
            };
            Ok(Detection { llrs, decision })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_frame, FrameSpec};

    fn spec(hyps: Vec<Modulation>, snr_db: f64, t: usize, seed: u64) -> FrameSpec {
        FrameSpec {
            antennas: 4,
            observations: t,
            hypotheses: hyps,
            snr_db,
            rho: 0.0,
            seed,
            pinned: None,
        }
    }

    #[test]
    fn qpsk_llrs_by_hand() {
        let c = Modulation::Qpsk.constellation();
        let d = [0.0, 5.0, 7.0, 9.0];
        // oracle: enumerate label classes
        let mut want = Vec::new();
        for k in 0..2 {
            let mut u = f64::INFINITY;
            let mut v = f64::INFINITY;
            for (&label, &di) in c.labels().iter().zip(&d) {
                let bit = (label >> (1 - k)) & 1;
                if bit == 0 {
                    u = u.min(di);
                } else {
                    v = v.min(di);
                }
            }
            want.push(u - v);
        }
        let got = subspace_llrs(&d, c, 0).unwrap();
        assert_eq!(got.llrs, want);
        // canonical labels 0b00, 0b01, 0b10, 0b11
        assert_eq!(want, vec![0.0 - 7.0, 0.0 - 5.0]);
    }

    #[test]
    fn all_zero_label_gives_negative_llrs() {
        let c = Modulation::Qam16.constellation();
        let zero = c.labels().iter().position(|&l| l == 0).unwrap();
        let d: Vec<f64> = c
            .points()
            .iter()
            .map(|p| (p - c.points()[zero]).norm_sqr())
            .collect();
        let l = subspace_llrs(&d, c, 0).unwrap();
        assert!(l.llrs.iter().all(|&v| v < 0.0));
        assert_eq!(l.hard_bits(), vec![0; 4]);
    }

    #[test]
    fn llrs_shift_invariant() {
        let c = Modulation::Qam64.constellation();
        let d: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 * 0.25).collect();
        let shifted: Vec<f64> = d.iter().map(|v| v + 3.5).collect();
        let a = subspace_llrs(&d, c, 0).unwrap();
        let b = subspace_llrs(&shifted, c, 0).unwrap();
        for (x, y) in a.llrs.iter().zip(&b.llrs) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            subspace_llrs(&d[..3], c, 0),
            Err(DetectionError::DistanceCount { .. })
        ));
    }

    #[test]
    fn single_observation_single_hypothesis_matches_standalone() {
        let s = spec(vec![Modulation::Qam16], 15.0, 1, 2);
        let f = draw_frame(&s, &mut s.frame_rng(0)).unwrap();
        let mut c = OpCounter::default();
        let out = joint_classify_detect(
            (&f).into(),
            2,
            &[Modulation::Qam16],
            Modulation::Qam1024,
            ClassifierKind::SubspaceLogMap,
            CacheMode::Full,
            &mut c,
        )
        .unwrap();
        let mut model = crate::metric::SubspaceModel::new(
            &f.channel.h,
            2,
            vec![Modulation::Qam1024.constellation(); 3],
            f.sigma2,
        )
        .unwrap();
        use crate::metric::DistanceModel;
        model.prepare(&f.observations[0].y);
        let mut d = vec![0.0; 16];
        model.distances(Modulation::Qam16.constellation(), &mut d, None);
        let standalone = subspace_llrs(&d, Modulation::Qam16.constellation(), 2)
            .unwrap()
            .rescaled(f.sigma2);
        assert_eq!(out.llrs[0], standalone);
        assert_eq!(out.cache.distances(0, 0).unwrap(), &d[..]);
    }

    #[test]
    fn cache_modes_agree_and_reads_are_written() {
        let hyps = Modulation::ALL[..5].to_vec();
        let s = spec(hyps.clone(), 18.0, 30, 4);
        let f = draw_frame(&s, &mut s.frame_rng(3)).unwrap();
        for kind in [
            ClassifierKind::SubspaceMaxLogMap,
            ClassifierKind::LordLogMap,
        ] {
            let mut c = OpCounter::default();
            let full = joint_classify_detect(
                (&f).into(),
                1,
                &hyps,
                Modulation::Qam1024,
                kind,
                CacheMode::Full,
                &mut c,
            )
            .unwrap();
            let lean = joint_classify_detect(
                (&f).into(),
                1,
                &hyps,
                Modulation::Qam1024,
                kind,
                CacheMode::BitMinima,
                &mut c,
            )
            .unwrap();
            assert_eq!(full.winner, lean.winner);
            assert_eq!(full.decisions, lean.decisions);
            assert_eq!(full.llrs, lean.llrs);
            for &(j, t) in &full.cache_reads {
                assert!(full.cache.contains(j, t));
            }
            for j in 0..hyps.len() {
                assert_eq!(full.cache.len(j), 30);
            }
        }
    }

    #[test]
    fn estimates_cached_per_candidate() {
        let s = spec(vec![Modulation::Qpsk], 40.0, 4, 8);
        let f = draw_frame(&s, &mut s.frame_rng(0)).unwrap();
        let mut c = OpCounter::default();
        let out = joint_classify_detect(
            (&f).into(),
            0,
            &[Modulation::Qpsk],
            Modulation::Qpsk,
            ClassifierKind::SubspaceLogMap,
            CacheMode::Full,
            &mut c,
        )
        .unwrap();
        // at 40 dB the true candidate's sliced remaining streams are the truth
        for t in 0..4 {
            let x = &f.observations[t].x;
            let k = Modulation::Qpsk.constellation().index_of(x[0]).unwrap();
            let est = out.cache.estimates(0, t, k).unwrap();
            let expected: Vec<Complex64> = (0..3)
                .map(|i| x[crate::linalg::permuted_index(i, 0, 4)])
                .collect();
            assert_eq!(est, &expected[..]);
        }
        assert!(matches!(
            out.cache.decision(0, 4),
            Err(DetectionError::CacheMiss { .. })
        ));
    }

    #[test]
    fn high_snr_qpsk_decisions() {
        let hyps = Modulation::ALL[..5].to_vec();
        let mut correct = 0;
        let mut total = 0;
        for frame in 0..100 {
            let s = spec(vec![Modulation::Qpsk], 20.0, 100, 77);
            let f = draw_frame(&s, &mut s.frame_rng(frame)).unwrap();
            let mut c = OpCounter::default();
            let out = joint_classify_detect(
                (&f).into(),
                0,
                &hyps,
                Modulation::Qpsk,
                ClassifierKind::SubspaceLogMap,
                CacheMode::BitMinima,
                &mut c,
            )
            .unwrap();
            assert_eq!(out.winner, Modulation::Qpsk, "frame {frame}");
            for (d, o) in out.decisions.iter().zip(&f.observations) {
                total += 1;
                correct += usize::from(*d == o.x[0]);
            }
        }
        assert!(correct as f64 / total as f64 >= 0.99, "{correct}/{total}");
    }

    #[test]
    fn aware_two_layers_subspace_equals_lord() {
        let mut s = spec(vec![Modulation::Qam16, Modulation::Qpsk], 12.0, 20, 5);
        s.antennas = 2;
        let f = draw_frame(&s, &mut s.frame_rng(1)).unwrap();
        let mut c = OpCounter::default();
        for layer in 0..2 {
            let a = mt_aware_detect(
                (&f).into(),
                layer,
                &f.modulations,
                Expansion::Subspace,
                &mut c,
            )
            .unwrap();
            let b = mt_aware_detect((&f).into(), layer, &f.modulations, Expansion::Lord, &mut c)
                .unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.decision, y.decision);
                for (p, q) in x.llrs.llrs.iter().zip(&y.llrs.llrs) {
                    assert!((p - q).abs() < 1e-9 * p.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn aware_matches_joint_when_slicing_with_truth() {
        let s = spec(vec![Modulation::Qam16], 14.0, 10, 6);
        let f = draw_frame(&s, &mut s.frame_rng(2)).unwrap();
        let mut c = OpCounter::default();
        let aware =
            mt_aware_detect((&f).into(), 3, &f.modulations, Expansion::Subspace, &mut c).unwrap();
        let joint = joint_classify_detect(
            (&f).into(),
            3,
            &[Modulation::Qam16],
            Modulation::Qam16,
            ClassifierKind::SubspaceMaxLogMap,
            CacheMode::Full,
            &mut c,
        )
        .unwrap();
        for (a, (l, d)) in aware.iter().zip(joint.llrs.iter().zip(&joint.decisions)) {
            assert_eq!(&a.llrs, l);
            assert_eq!(&a.decision, d);
        }
    }

    #[test]
    fn rejects_non_subspace_kinds() {
        let s = spec(vec![Modulation::Qpsk], 10.0, 2, 1);
        let f = draw_frame(&s, &mut s.frame_rng(0)).unwrap();
        let mut c = OpCounter::default();
        let r = joint_classify_detect(
            (&f).into(),
            0,
            &[Modulation::Qpsk],
            Modulation::Qam1024,
            ClassifierKind::ZfAlrt,
            CacheMode::Full,
            &mut c,
        );
        assert!(matches!(r, Err(DetectionError::UnsupportedClassifier(_))));
    }
}
