//! Per-layer distance models.
//!
//! Each model turns a received vector into scaled squared distances
//! `(1/sigma^2) * ||y~ - R x||^2`, one per candidate symbol of the layer of
//! interest, with the remaining streams resolved by slicing.

use num_complex::Complex64;
use thiserror::Error;

use crate::constellation::{Constellation, Modulation};
use crate::linalg::{
    decompose_for_layer, permuted_index, qr_for_layer, qrd, upper_triangular_inverse, CMatrix,
    LayerQr, LinalgError, PuncturedDecomposition, PIVOT_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("diagonal block entry a[{index}] = {value:.3e} is degenerate")]
    DegenerateA { index: usize, value: f64 },
    #[error("noise variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("expected {expected} slicing constellations, got {got}")]
    SlicerCount { expected: usize, got: usize },
}

/// How the remaining streams are resolved for each candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// Parallel per-element slicing against the punctured, diagonal `A`.
    Subspace,
    /// Successive interference cancellation down the unpunctured QRD (LORD).
    Lord,
}

/// Which post-equalization variance the ZF classifier assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZfVariance {
    /// `sigma^2 / (h_n^* h_n)`.
    #[default]
    ColumnEnergy,
    /// `sigma^2 [(H^* H)^{-1}]_{nn}`.
    PostEqualization,
}

/// Source of per-candidate distances for one layer of interest.
pub trait DistanceModel {
    fn layer(&self) -> usize;

    /// Number of remaining streams resolved per candidate.
    fn remaining(&self) -> usize;

    /// Transforms the received vector; must be called before `distances`.
    fn prepare(&mut self, y: &[Complex64]);

    /// Writes one scaled distance per point of `candidates` into `out`.
    /// When `estimates` is given, the sliced remaining symbols for candidate
    /// `k` land in `estimates[k * remaining .. (k + 1) * remaining]`.
    fn distances(
        &self,
        candidates: &Constellation,
        out: &mut [f64],
        estimates: Option<&mut [Complex64]>,
    );
}

/// Frame-constant terms of the subspace metric. With `g = b / a` and the
/// observation pre-scaled as `z = y1 / a`, the per-row term
/// `|y1 - b x2 - a x1^|^2` becomes `a^2 |z - g x2 - x1^|^2`.
#[derive(Debug, Clone)]
struct SubspaceTerms {
    a2: Vec<f64>,
    inv_a: Vec<f64>,
    g: Vec<Complex64>,
    c: f64,
}

impl SubspaceTerms {
    fn new(d: &PuncturedDecomposition) -> Result<Self, MetricError> {
        let inv_a = checked_inverse_diagonal(&d.a)?;
        Ok(SubspaceTerms {
            a2: d.a.iter().map(|a| a * a).collect(),
            g: d.b.iter().zip(&inv_a).map(|(b, ia)| b * ia).collect(),
            inv_a,
            c: d.c,
        })
    }

    fn scale_observation(&self, y1: &[Complex64], z: &mut [Complex64]) {
        for ((zi, yi), ia) in z.iter_mut().zip(y1).zip(&self.inv_a) {
            *zi = yi * ia;
        }
    }

    /// Unscaled metric for candidate `x2`.
    #[inline]
    fn metric(
        &self,
        z: &[Complex64],
        y2: Complex64,
        x2: Complex64,
        slicers: &[&Constellation],
        mut estimates: Option<&mut [Complex64]>,
    ) -> f64 {
        let mut acc = (y2 - self.c * x2).norm_sqr();
        for i in 0..z.len() {
            let s = z[i] - self.g[i] * x2;
            let (qr, qi) = (slicers[i].slice_axis(s.re), slicers[i].slice_axis(s.im));
            let (er, ei) = (s.re - qr, s.im - qi);
            acc += self.a2[i] * (er * er + ei * ei);
            if let Some(est) = estimates.as_deref_mut() {
                est[i] = Complex64::new(qr, qi);
            }
        }
        acc
    }
}

/// `(1/sigma^2)(|y2 - c x2|^2 + ||y1 - A x1^ - b x2||^2)` with
/// `x1^ = slice((y1 - b x2) / A)` onto `slice_const`.
pub fn subspace_distance(
    y1: &[Complex64],
    y2: Complex64,
    d: &PuncturedDecomposition,
    x2: Complex64,
    slice_const: &Constellation,
    sigma2: f64,
) -> Result<f64, MetricError> {
    if !(sigma2 > 0.0) {
        return Err(MetricError::NonPositiveVariance(sigma2));
    }
    if y1.len() != d.a.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: d.a.len(),
            got: y1.len(),
        }
        .into());
    }
    let terms = SubspaceTerms::new(d)?;
    let mut z = vec![Complex64::new(0.0, 0.0); y1.len()];
    terms.scale_observation(y1, &mut z);
    let slicers = vec![slice_const; y1.len()];
    Ok(terms.metric(&z, y2, x2, &slicers, None) / sigma2)
}

fn checked_inverse_diagonal(a: &[f64]) -> Result<Vec<f64>, MetricError> {
    a.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value < PIVOT_TOLERANCE {
                Err(MetricError::DegenerateA { index, value })
            } else {
                Ok(1.0 / value)
            }
        })
        .collect()
}

/// Slicing constellations for the remaining rows of a layer-permuted
/// system, taken from the true per-layer modulation types.
pub fn true_slicers(modulations: &[Modulation], layer: usize) -> Vec<&'static Constellation> {
    let n = modulations.len();
    (0..n.saturating_sub(1))
        .map(|row| modulations[permuted_index(row, layer, n)].constellation())
        .collect()
}

fn check_sigma2(sigma2: f64) -> Result<f64, MetricError> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(1.0 / sigma2)
    } else {
        Err(MetricError::NonPositiveVariance(sigma2))
    }
}

/// Subspace (punctured-QR) distances for a layer of interest.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    decomposition: PuncturedDecomposition,
    terms: SubspaceTerms,
    slicers: Vec<&'static Constellation>,
    inv_sigma2: f64,
    ytilde: Vec<Complex64>,
    scaled: Vec<Complex64>,
}

impl SubspaceModel {
    pub fn new(
        h: &CMatrix,
        layer: usize,
        slicers: Vec<&'static Constellation>,
        sigma2: f64,
    ) -> Result<Self, MetricError> {
        let inv_sigma2 = check_sigma2(sigma2)?;
        let decomposition = decompose_for_layer(h, layer)?;
        let n = decomposition.dim();
        if slicers.len() != n - 1 {
            return Err(MetricError::SlicerCount {
                expected: n - 1,
                got: slicers.len(),
            });
        }
        let terms = SubspaceTerms::new(&decomposition)?;
        let zero = Complex64::new(0.0, 0.0);
        Ok(SubspaceModel {
            decomposition,
            terms,
            slicers,
            inv_sigma2,
            ytilde: vec![zero; n],
            scaled: vec![zero; n - 1],
        })
    }

    pub fn decomposition(&self) -> &PuncturedDecomposition {
        &self.decomposition
    }

    /// The transformed observation from the last `prepare`.
    pub fn transformed(&self) -> &[Complex64] {
        &self.ytilde
    }
}

impl DistanceModel for SubspaceModel {
    fn layer(&self) -> usize {
        self.decomposition.layer
    }

    fn remaining(&self) -> usize {
        self.slicers.len()
    }

    fn prepare(&mut self, y: &[Complex64]) {
        self.decomposition
            .w
            .adjoint_mul_vec_into(y, &mut self.ytilde);
        let n = self.ytilde.len();
        self.terms
            .scale_observation(&self.ytilde[..n - 1], &mut self.scaled);
    }

    fn distances(
        &self,
        candidates: &Constellation,
        out: &mut [f64],
        mut estimates: Option<&mut [Complex64]>,
    ) {
        let y2 = self.ytilde[self.ytilde.len() - 1];
        let rem = self.scaled.len();
        for (k, (x2, o)) in candidates.points().iter().zip(out.iter_mut()).enumerate() {
            let est = estimates
                .as_deref_mut()
                .map(|e| &mut e[k * rem..(k + 1) * rem]);
            *o = self.terms.metric(&self.scaled, y2, *x2, &self.slicers, est) * self.inv_sigma2;
        }
    }
}

/// LORD distances: SIC on the unpunctured triangular factor.
#[derive(Debug, Clone)]
pub struct LordModel {
    qr: LayerQr,
    inv_diag: Vec<f64>,
    slicers: Vec<&'static Constellation>,
    inv_sigma2: f64,
    ytilde: Vec<Complex64>,
}

impl LordModel {
    pub fn new(
        h: &CMatrix,
        layer: usize,
        slicers: Vec<&'static Constellation>,
        sigma2: f64,
    ) -> Result<Self, MetricError> {
        let inv_sigma2 = check_sigma2(sigma2)?;
        let qr = qr_for_layer(h, layer)?;
        let n = qr.r.cols();
        if slicers.len() != n - 1 {
            return Err(MetricError::SlicerCount {
                expected: n - 1,
                got: slicers.len(),
            });
        }
        let mut inv_diag = Vec::with_capacity(n);
        for i in 0..n {
            let v = qr.r[(i, i)].re;
            if v < PIVOT_TOLERANCE {
                return Err(LinalgError::DegeneratePivot { index: i, value: v }.into());
            }
            inv_diag.push(1.0 / v);
        }
        Ok(LordModel {
            qr,
            inv_diag,
            slicers,
            inv_sigma2,
            ytilde: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn factorization(&self) -> &LayerQr {
        &self.qr
    }

    fn metric(&self, x2: Complex64, est: &mut [Complex64]) -> f64 {
        let r = &self.qr.r;
        let n = self.ytilde.len();
        let last = n - 1;
        let mut acc = (self.ytilde[last] - r[(last, last)] * x2).norm_sqr();
        for i in (0..last).rev() {
            let mut z = self.ytilde[i] - r[(i, last)] * x2;
            for k in (i + 1)..last {
                z -= r[(i, k)] * est[k];
            }
            let u = z * self.inv_diag[i];
            let sl = self.slicers[i];
            let xh = Complex64::new(sl.slice_axis(u.re), sl.slice_axis(u.im));
            est[i] = xh;
            acc += (z - r[(i, i)] * xh).norm_sqr();
        }
        acc
    }
}

impl DistanceModel for LordModel {
    fn layer(&self) -> usize {
        self.qr.layer
    }

    fn remaining(&self) -> usize {
        self.slicers.len()
    }

    fn prepare(&mut self, y: &[Complex64]) {
        self.qr.q.adjoint_mul_vec_into(y, &mut self.ytilde);
    }

    fn distances(
        &self,
        candidates: &Constellation,
        out: &mut [f64],
        mut estimates: Option<&mut [Complex64]>,
    ) {
        let rem = self.ytilde.len() - 1;
        let mut scratch = [Complex64::new(0.0, 0.0); 16];
        let mut heap;
        let est: &mut [Complex64] = if rem <= scratch.len() {
            &mut scratch[..rem]
        } else {
            heap = vec![Complex64::new(0.0, 0.0); rem];
            &mut heap
        };
        for (k, (x2, o)) in candidates.points().iter().zip(out.iter_mut()).enumerate() {
            *o = self.metric(*x2, est) * self.inv_sigma2;
            if let Some(e) = estimates.as_deref_mut() {
                e[k * rem..(k + 1) * rem].copy_from_slice(est);
            }
        }
    }
}

/// Zero-forcing equalized single-stream distances.
#[derive(Debug, Clone)]
pub struct ZfModel {
    layer: usize,
    /// Row `layer` of `(H^* H)^{-1} H^*`.
    equalizer: Vec<Complex64>,
    inv_variance: f64,
    equalized: Complex64,
}

impl ZfModel {
    pub fn new(
        h: &CMatrix,
        layer: usize,
        sigma2: f64,
        variance: ZfVariance,
    ) -> Result<Self, MetricError> {
        check_sigma2(sigma2)?;
        let n = h.cols();
        if layer >= n {
            return Err(LinalgError::IndexOutOfRange {
                index: layer,
                layers: n,
            }
            .into());
        }
        let (q, r) = qrd(h)?;
        let r_inv = upper_triangular_inverse(&r)?;
        // row `layer` of R^{-1} Q^*
        let equalizer: Vec<Complex64> = (0..h.rows())
            .map(|m| (0..n).map(|k| r_inv[(layer, k)] * q[(m, k)].conj()).sum())
            .collect();
        let scale = match variance {
            ZfVariance::ColumnEnergy => 1.0 / h.column_norm(layer).powi(2),
            ZfVariance::PostEqualization => (0..n).map(|k| r_inv[(layer, k)].norm_sqr()).sum(),
        };
        Ok(ZfModel {
            layer,
            equalizer,
            inv_variance: 1.0 / (scale * sigma2),
            equalized: Complex64::new(0.0, 0.0),
        })
    }

    pub fn equalized(&self) -> Complex64 {
        self.equalized
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.inv_variance
    }
}

impl DistanceModel for ZfModel {
    fn layer(&self) -> usize {
        self.layer
    }

    fn remaining(&self) -> usize {
        0
    }

    fn prepare(&mut self, y: &[Complex64]) {
        self.equalized = self.equalizer.iter().zip(y).map(|(g, v)| g * v).sum();
    }

    fn distances(
        &self,
        candidates: &Constellation,
        out: &mut [f64],
        _estimates: Option<&mut [Complex64]>,
    ) {
        for (x, o) in candidates.points().iter().zip(out.iter_mut()) {
            *o = (self.equalized - x).norm_sqr() * self.inv_variance;
        }
    }
}

/// Builds the subspace or LORD model for `layer`.
pub fn expansion_model(
    expansion: Expansion,
    h: &CMatrix,
    layer: usize,
    slicers: Vec<&'static Constellation>,
    sigma2: f64,
) -> Result<Box<dyn DistanceModel + Send + Sync>, MetricError> {
    Ok(match expansion {
        Expansion::Subspace => Box::new(SubspaceModel::new(h, layer, slicers, sigma2)?),
        Expansion::Lord => Box::new(LordModel::new(h, layer, slicers, sigma2)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{permute_layer, transform_observation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_h(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| crate::channel::complex_gaussian(&mut rng))
    }

    fn random_symbols(c: &Constellation, n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| c.points()[rng.random_range(0..c.len())])
            .collect()
    }

    fn exhaustive_slice(c: &Constellation, v: Complex64) -> Complex64 {
        *c.points()
            .iter()
            .min_by(|a, b| {
                (v - *a)
                    .norm_sqr()
                    .partial_cmp(&(v - *b).norm_sqr())
                    .unwrap()
            })
            .unwrap()
    }

    #[test]
    fn noiseless_true_candidate_has_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_h(4, 8);
        let mts = [
            Modulation::Qpsk,
            Modulation::Qam16,
            Modulation::Phi,
            Modulation::Qam64,
        ];
        let x: Vec<Complex64> = mts
            .iter()
            .map(|m| random_symbols(m.constellation(), 1, &mut rng)[0])
            .collect();
        let y = h.mul_vec(&x);
        for layer in 0..4 {
            let d = decompose_for_layer(&h, layer).unwrap();
            let (y1, y2) = transform_observation(&y, &d).unwrap();
            let slicers = true_slicers(&mts, layer);
            let terms = SubspaceTerms::new(&d).unwrap();
            let mut z = vec![Complex64::new(0.0, 0.0); 3];
            terms.scale_observation(&y1, &mut z);
            let dist = terms.metric(&z, y2, x[layer], &slicers, None);
            assert!(dist < 1e-18, "layer {layer}: {dist}");

            let mut lord = LordModel::new(&h, layer, slicers.clone(), 1.0).unwrap();
            lord.prepare(&y);
            let c = mts[layer].constellation();
            let mut out = vec![0.0; c.len()];
            lord.distances(c, &mut out, None);
            let k = c.index_of(x[layer]).unwrap();
            assert!(out[k] < 1e-18, "lord layer {layer}: {}", out[k]);
        }
    }

    #[test]
    fn scalar_channel_distance() {
        let h = CMatrix::from_row_major(1, 1, vec![Complex64::new(0.6, -0.8) * 2.0]).unwrap();
        let hv = h[(0, 0)];
        let d = decompose_for_layer(&h, 0).unwrap();
        let y = [Complex64::new(0.4, 0.1)];
        let (y1, y2) = transform_observation(&y, &d).unwrap();
        assert!(y1.is_empty());
        let x2 = Modulation::Qpsk.constellation().points()[2];
        let sigma2 = 0.3;
        let got = subspace_distance(&y1, y2, &d, x2, Modulation::Qam1024.constellation(), sigma2)
            .unwrap();
        let want = (hv.conj() * y[0] / hv.norm() - hv.norm() * x2).norm_sqr() / sigma2;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn subspace_matches_unfactored_oracle() {
        // recompute ||W^*y - R x||^2 with x1 from an exhaustive slicer
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = random_h(4, 17);
        let dense = Modulation::Qam1024.constellation();
        let y: Vec<Complex64> = (0..4)
            .map(|_| crate::channel::complex_gaussian(&mut rng))
            .collect();
        let sigma2 = 0.05;
        for layer in 0..4 {
            let d = decompose_for_layer(&h, layer).unwrap();
            let (y1, y2) = transform_observation(&y, &d).unwrap();
            let ytilde = d.w.adjoint().mul_vec(&y);
            for x2 in Modulation::Qam16.constellation().points() {
                let got = subspace_distance(&y1, y2, &d, *x2, dense, sigma2).unwrap();
                let mut x = vec![Complex64::new(0.0, 0.0); 4];
                x[3] = *x2;
                for i in 0..3 {
                    x[i] = exhaustive_slice(dense, (ytilde[i] - d.r[(i, 3)] * x2) / d.r[(i, i)]);
                }
                let rx = d.r.mul_vec(&x);
                let want: f64 = ytilde
                    .iter()
                    .zip(&rx)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    / sigma2;
                assert!((got - want).abs() < 1e-9 * want.max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn lord_matches_hand_rolled_sic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = random_h(4, 23);
        let dense = Modulation::Qam1024.constellation();
        let y: Vec<Complex64> = (0..4)
            .map(|_| crate::channel::complex_gaussian(&mut rng))
            .collect();
        let layer = 1;
        let mut model = LordModel::new(&h, layer, vec![dense; 3], 0.2).unwrap();
        model.prepare(&y);
        let cands = Modulation::Qpsk.constellation();
        let mut out = vec![0.0; 4];
        model.distances(cands, &mut out, None);

        let hp = permute_layer(&h, layer).unwrap();
        let (q, r) = qrd(&hp).unwrap();
        let yt = q.adjoint().mul_vec(&y);
        for (k, x2) in cands.points().iter().enumerate() {
            let mut x = vec![Complex64::new(0.0, 0.0); 4];
            x[3] = *x2;
            for i in (0..3).rev() {
                let mut z = yt[i];
                for j in (i + 1)..4 {
                    z -= r[(i, j)] * x[j];
                }
                x[i] = exhaustive_slice(dense, z / r[(i, i)]);
            }
            let rx = r.mul_vec(&x);
            let want: f64 = yt
                .iter()
                .zip(&rx)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / 0.2;
            assert!(out[k] >= 0.0);
            assert!((out[k] - want).abs() < 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn lord_equals_subspace_for_two_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = random_h(2, 31);
        let dense = Modulation::Qam1024.constellation();
        for layer in 0..2 {
            let mut s = SubspaceModel::new(&h, layer, vec![dense], 0.1).unwrap();
            let mut l = LordModel::new(&h, layer, vec![dense], 0.1).unwrap();
            for _ in 0..20 {
                let y: Vec<Complex64> = (0..2)
                    .map(|_| crate::channel::complex_gaussian(&mut rng))
                    .collect();
                s.prepare(&y);
                l.prepare(&y);
                let c = Modulation::Qam16.constellation();
                let (mut a, mut b) = (vec![0.0; 16], vec![0.0; 16]);
                s.distances(c, &mut a, None);
                l.distances(c, &mut b, None);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-9 * u.max(1.0));
                }
            }
        }
    }

    #[test]
    fn zf_identity_channel() {
        let h = CMatrix::identity(3);
        let mut zf = ZfModel::new(&h, 1, 0.5, ZfVariance::ColumnEnergy).unwrap();
        let y = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.2, -0.3),
            Complex64::new(0.0, 1.0),
        ];
        zf.prepare(&y);
        assert!((zf.equalized() - y[1]).norm() < 1e-15);
        assert!((zf.variance() - 0.5).abs() < 1e-15);
        let exact = ZfModel::new(&h, 1, 0.5, ZfVariance::PostEqualization).unwrap();
        assert!((exact.variance() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zf_inverts_channel() {
        let h = random_h(4, 12);
        let x: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let y = h.mul_vec(&x);
        for (layer, &xl) in x.iter().enumerate() {
            let mut zf = ZfModel::new(&h, layer, 1.0, ZfVariance::ColumnEnergy).unwrap();
            zf.prepare(&y);
            assert!((zf.equalized() - xl).norm() < 1e-10);
            let post = ZfModel::new(&h, layer, 1.0, ZfVariance::PostEqualization).unwrap();
            assert!(post.variance() >= zf.variance() - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = random_h(3, 1);
        assert!(matches!(
            SubspaceModel::new(&h, 0, vec![Modulation::Qpsk.constellation()], 1.0),
            Err(MetricError::SlicerCount { .. })
        ));
        assert!(SubspaceModel::new(&h, 0, vec![Modulation::Qpsk.constellation(); 2], 0.0).is_err());
        let d = decompose_for_layer(&h, 0).unwrap();
        let mut bad = d.clone();
        bad.a[1] = 0.0;
        let err = subspace_distance(
            &[Complex64::new(0.0, 0.0); 2],
            Complex64::new(0.0, 0.0),
            &bad,
            Complex64::new(0.0, 0.0),
            Modulation::Qpsk.constellation(),
            1.0,
        );
        assert!(matches!(
            err,
            Err(MetricError::DegenerateA { index: 1, .. })
        ));
    }
}
