//! Small dense complex matrices, Householder QR, and the punctured
//! (WR) decomposition that decouples a layer of interest.
//!
//! Layer and matrix indices are zero-based throughout.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Relative pivot tolerance for QR.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Absolute floor for divisors used while puncturing.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is rank deficient (pivot {pivot:.3e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },
    #[error("degenerate pivot r[{index}][{index}] = {value:.3e}")]
    DegeneratePivot { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layer index {index} out of range for {layers} layers")]
    IndexOutOfRange { index: usize, layers: usize },
    #[error("puncture position ({0}, {1}) is not strictly above the diagonal")]
    InvalidPattern(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| format!("{:+.4}{:+.4}i", self[(r, c)].re, self[(r, c)].im))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds from row-major entries, rejecting NaN/Inf.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    ) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn column_norm(&self, c: usize) -> f64 {
        (0..self.rows)
            .map(|r| self[(r, c)].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        CMatrix::from_fn(self.rows, other.cols, |r, c| {
            (0..self.cols).map(|k| self[(r, k)] * other[(k, c)]).sum()
        })
    }

    /// `A^* B` without forming the adjoint.
    pub fn adjoint_matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_matmul dimension mismatch");
        CMatrix::from_fn(self.cols, other.cols, |r, c| {
            (0..self.rows)
                .map(|k| self[(k, r)].conj() * other[(k, c)])
                .sum()
        })
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * x[c]).sum())
            .collect()
    }

    /// `A^* y`, written into `out`.
    #[inline]
    pub fn adjoint_mul_vec_into(&self, y: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(self.rows, y.len());
        debug_assert_eq!(self.cols, out.len());
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (r, yr) in y.iter().enumerate() {
                acc += self.data[r * self.cols + c].conj() * yr;
            }
            *o = acc;
        }
    }

    pub fn adjoint_mul_vec(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        self.adjoint_mul_vec_into(y, &mut out);
        out
    }

    pub fn swap_columns(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for r in 0..self.rows {
            self.data.swap(r * self.cols + a, r * self.cols + b);
        }
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Householder QR of an `M x N` matrix (`M >= N`) with a real positive
/// diagonal. Returns `(Q, R)` with `Q` unitary `M x M` and `Q^* H = R`.
pub fn qrd(h: &CMatrix) -> Result<(CMatrix, CMatrix), LinalgError> {
    let (m, n) = (h.rows(), h.cols());
    if m < n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: m,
        });
    }
    if !h.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let scale = (0..n).map(|c| h.column_norm(c)).fold(0.0, f64::max);
    let mut r = h.clone();
    let mut q = CMatrix::identity(m);
    let mut v = vec![Complex64::new(0.0, 0.0); m];

    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * scale || norm == 0.0 {
            return Err(LinalgError::RankDeficient {
                column: k,
                pivot: norm,
            });
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * norm;
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm = (k..m).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            for vi in &mut v[k..m] {
                *vi /= vnorm;
            }
            // R <- (I - 2 v v^*) R
            for c in k..n {
                let dot: Complex64 = (k..m).map(|i| v[i].conj() * r[(i, c)]).sum();
                for i in k..m {
                    r[(i, c)] -= 2.0 * v[i] * dot;
                }
            }
            // Q <- Q (I - 2 v v^*)
            for row in 0..m {
                let dot: Complex64 = (k..m).map(|i| q[(row, i)] * v[i]).sum();
                for i in k..m {
                    q[(row, i)] -= 2.0 * dot * v[i].conj();
                }
            }
        }
        for i in (k + 1)..m {
            r[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }

    // rotate each row of R (and column of Q) so the diagonal is real positive
    for k in 0..n {
        let d = r[(k, k)];
        let unit = d / d.norm();
        for c in k..n {
            r[(k, c)] *= unit.conj();
        }
        r[(k, k)] = Complex64::new(d.norm(), 0.0);
        for row in 0..m {
            q[(row, k)] *= unit;
        }
    }
    Ok((q, r))
}

/// Output of puncturing a QRD: `W^* H = R` with unit-norm columns of `W`.
#[derive(Debug, Clone)]
pub struct Wrd {
    pub w: CMatrix,
    pub r: CMatrix,
}

/// Nulls the listed entries of `R` by elementary column operations on `Q`,
/// renormalizing each touched column of `Q` to unit length.
///
/// Positions are processed bottom to top, right to left regardless of the
/// order in `pattern`.
pub fn puncture(q: &CMatrix, r: &CMatrix, pattern: &[(usize, usize)]) -> Result<Wrd, LinalgError> {
    let n = r.cols();
    if r.rows() != n || q.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: q.cols(),
        });
    }
    let mut order: Vec<(usize, usize)> = pattern.to_vec();
    for &(row, col) in &order {
        if col <= row || col >= n {
            return Err(LinalgError::InvalidPattern(row, col));
        }
    }
    order.sort_unstable_by(|a, b| b.cmp(a));
    order.dedup();

    let mut w = q.clone();
    let mut r = r.clone();
    let rows = w.rows();
    let mut i = 0;
    while i < order.len() {
        let row = order[i].0;
        while i < order.len() && order[i].0 == row {
            let m = order[i].1;
            let pivot = r[(m, m)];
            if pivot.norm() < PIVOT_TOLERANCE {
                return Err(LinalgError::DegeneratePivot {
                    index: m,
                    value: pivot.norm(),
                });
            }
            let ratio = r[(row, m)] / pivot;
            for k in 0..rows {
                let wm = w[(k, m)];
                w[(k, row)] -= wm * ratio.conj();
            }
            for j in m..n {
                let rm = r[(m, j)];
                r[(row, j)] -= rm * ratio;
            }
            r[(row, m)] = Complex64::new(0.0, 0.0);
            i += 1;
        }
        let norm = w.column_norm(row);
        if norm < PIVOT_TOLERANCE {
            return Err(LinalgError::DegeneratePivot {
                index: row,
                value: norm,
            });
        }
        for j in row..n {
            r[(row, j)] /= norm;
        }
        for k in 0..rows {
            w[(k, row)] /= norm;
        }
    }
    Ok(Wrd { w, r })
}

/// Positions nulled so that only the diagonal and the last column survive.
pub fn layer_of_interest_pattern(n: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::new();
    for row in 0..n.saturating_sub(1) {
        for col in (row + 1)..n.saturating_sub(1) {
            p.push((row, col));
        }
    }
    p
}

/// Swaps column `layer` with the last column.
pub fn permute_layer(h: &CMatrix, layer: usize) -> Result<CMatrix, LinalgError> {
    let n = h.cols();
    if layer >= n {
        return Err(LinalgError::IndexOutOfRange {
            index: layer,
            layers: n,
        });
    }
    let mut p = h.clone();
    p.swap_columns(layer, n - 1);
    Ok(p)
}

/// Permutation applied by [`permute_layer`], as a map on indices.
#[inline]
pub fn permuted_index(i: usize, layer: usize, n: usize) -> usize {
    if i == layer {
        n - 1
    } else if i == n - 1 {
        layer
    } else {
        i
    }
}

/// WR decomposition of `H` with layer `layer` moved to the last column.
///
/// `R` is partitioned as `[[A, b], [0, c]]` with `A` real diagonal.
#[derive(Debug, Clone)]
pub struct PuncturedDecomposition {
    pub w: CMatrix,
    pub r: CMatrix,
    pub layer: usize,
    pub a: Vec<f64>,
    pub b: Vec<Complex64>,
    pub c: f64,
}

impl PuncturedDecomposition {
    pub fn dim(&self) -> usize {
        self.r.cols()
    }

    /// Noise covariance `sigma2 * W^* W` seen after the transform.
    pub fn noise_covariance(&self, sigma2: f64) -> CMatrix {
        let mut g = self.w.adjoint_matmul(&self.w);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                g[(i, j)] *= sigma2;
            }
        }
        g
    }
}

pub fn decompose_for_layer(
    h: &CMatrix,
    layer: usize,
) -> Result<PuncturedDecomposition, LinalgError> {
    let hp = permute_layer(h, layer)?;
    let (q, r) = qrd(&hp)?;
    let n = hp.cols();
    let wrd = puncture(&q, &r, &layer_of_interest_pattern(n))?;
    let a: Vec<f64> = (0..n - 1).map(|i| wrd.r[(i, i)].re).collect();
    let b: Vec<Complex64> = (0..n - 1).map(|i| wrd.r[(i, n - 1)]).collect();
    let c = wrd.r[(n - 1, n - 1)].re;
    for (i, &ai) in a.iter().enumerate() {
        if ai < PIVOT_TOLERANCE {
            return Err(LinalgError::DegeneratePivot {
                index: i,
                value: ai,
            });
        }
    }
    if c < PIVOT_TOLERANCE {
        return Err(LinalgError::DegeneratePivot {
            index: n - 1,
            value: c,
        });
    }
    Ok(PuncturedDecomposition {
        w: wrd.w,
        r: wrd.r,
        layer,
        a,
        b,
        c,
    })
}

/// Unpunctured QRD of the layer-permuted channel, used by SIC expansion.
#[derive(Debug, Clone)]
pub struct LayerQr {
    pub q: CMatrix,
    pub r: CMatrix,
    pub layer: usize,
}

pub fn qr_for_layer(h: &CMatrix, layer: usize) -> Result<LayerQr, LinalgError> {
    let hp = permute_layer(h, layer)?;
    let (q, r) = qrd(&hp)?;
    Ok(LayerQr { q, r, layer })
}

/// Splits `W^* y` into the first `N-1` entries and the last entry.
pub fn transform_observation(
    y: &[Complex64],
    d: &PuncturedDecomposition,
) -> Result<(Vec<Complex64>, Complex64), LinalgError> {
    if y.len() != d.w.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: d.w.rows(),
            got: y.len(),
        });
    }
    let mut t = d.w.adjoint_mul_vec(y);
    let last = t.pop().expect("non-empty decomposition");
    Ok((t, last))
}

/// Inverse of an upper-triangular matrix by back substitution.
pub fn upper_triangular_inverse(r: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = r.cols();
    let mut inv = CMatrix::zeros(n, n);
    for i in 0..n {
        if r[(i, i)].norm() < PIVOT_TOLERANCE {
            return Err(LinalgError::DegeneratePivot {
                index: i,
                value: r[(i, i)].norm(),
            });
        }
    }
    for col in 0..n {
        for row in (0..=col).rev() {
            let mut acc = if row == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for k in (row + 1)..=col {
                acc -= r[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = acc / r[(row, row)];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn assert_unitary(q: &CMatrix, tol: f64) {
        let g = q.adjoint_matmul(q);
        assert!(g.max_abs_diff(&CMatrix::identity(q.cols())) < tol);
    }

    #[test]
    fn qrd_identity() {
        let (q, r) = qrd(&CMatrix::identity(4)).unwrap();
        assert!(q.max_abs_diff(&CMatrix::identity(4)) < 1e-15);
        assert!(r.max_abs_diff(&CMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn qrd_positive_diagonal() {
        let (q, r) = qrd(&CMatrix::diag(&[2.0, 3.0])).unwrap();
        assert!(q.max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        assert!(r.max_abs_diff(&CMatrix::diag(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn qrd_reconstructs_random() {
        for seed in 0..20 {
            let h = random_matrix(4, seed);
            let (q, r) = qrd(&h).unwrap();
            assert_unitary(&q, 1e-10);
            assert!(q.adjoint_matmul(&h).max_abs_diff(&r) < 1e-10);
            for i in 0..4 {
                assert!(r[(i, i)].im == 0.0 && r[(i, i)].re > 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn qrd_rank_deficient() {
        let mut h = random_matrix(3, 7);
        for r in 0..3 {
            h[(r, 2)] = h[(r, 0)] * 2.0;
        }
        assert!(matches!(
            qrd(&h),
            Err(LinalgError::RankDeficient { column: 2, .. })
        ));
    }

    #[test]
    fn puncture_empty_pattern_is_qrd() {
        let h = random_matrix(2, 3);
        let (q, r) = qrd(&h).unwrap();
        assert!(layer_of_interest_pattern(2).is_empty());
        let wrd = puncture(&q, &r, &[]).unwrap();
        assert_eq!(wrd.w, q);
        assert_eq!(wrd.r, r);
    }

    #[test]
    fn puncture_fig1b_pattern() {
        assert_eq!(layer_of_interest_pattern(4), vec![(0, 1), (0, 2), (1, 2)]);
        let h = random_matrix(4, 11);
        let (q, r) = qrd(&h).unwrap();
        let wrd = puncture(&q, &r, &layer_of_interest_pattern(4)).unwrap();
        for &(i, j) in &[(0, 1), (0, 2), (1, 2)] {
            assert!(wrd.r[(i, j)].norm() < 1e-9);
        }
        for i in 0..4 {
            assert!((wrd.w.column_norm(i) - 1.0).abs() < 1e-10);
        }
        assert!(wrd.w.adjoint_matmul(&h).max_abs_diff(&wrd.r) < 1e-9);
    }

    #[test]
    fn single_puncture_orthogonalizes_against_column() {
        let h = random_matrix(3, 5);
        let (q, r) = qrd(&h).unwrap();
        let wrd = puncture(&q, &r, &[(0, 1)]).unwrap();
        let h1 = h.column(1);
        let w0 = wrd.w.column(0);
        let ip: Complex64 = w0.iter().zip(&h1).map(|(a, b)| a.conj() * b).sum();
        assert!(ip.norm() < 1e-10);
    }

    #[test]
    fn puncture_rejects_bad_pattern() {
        let (q, r) = qrd(&CMatrix::identity(3)).unwrap();
        assert!(matches!(
            puncture(&q, &r, &[(1, 1)]),
            Err(LinalgError::InvalidPattern(1, 1))
        ));
    }

    #[test]
    fn permute_layer_swaps_with_last() {
        let h = random_matrix(4, 1);
        let p = permute_layer(&h, 0).unwrap();
        for r in 0..4 {
            assert_eq!(p[(r, 0)], h[(r, 3)]);
            assert_eq!(p[(r, 3)], h[(r, 0)]);
            assert_eq!(p[(r, 1)], h[(r, 1)]);
            assert_eq!(p[(r, 2)], h[(r, 2)]);
        }
        assert_eq!(permute_layer(&h, 3).unwrap(), h);
        assert_eq!(permute_layer(&p, 0).unwrap(), h);
        assert!(matches!(
            permute_layer(&h, 4),
            Err(LinalgError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn decompose_identity() {
        for layer in 0..4 {
            let d = decompose_for_layer(&CMatrix::identity(4), layer).unwrap();
            // permuting the identity and decomposing yields a permutation for W
            // whose product with the permuted H is still the identity
            assert!(d.r.max_abs_diff(&CMatrix::identity(4)) < 1e-15);
            assert!(d.a.iter().all(|a| (a - 1.0).abs() < 1e-15));
            assert!((d.c - 1.0).abs() < 1e-15);
        }
        let d = decompose_for_layer(&CMatrix::identity(4), 3).unwrap();
        assert!(d.w.max_abs_diff(&CMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn decompose_structure() {
        let h = random_matrix(4, 21);
        for layer in 0..4 {
            let d = decompose_for_layer(&h, layer).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(d.r[(i, j)].norm() < 1e-9);
                    }
                }
                assert!(d.r[(i, i)].im.abs() < 1e-15 && d.a[i] > 0.0);
            }
            assert!(d.c > 0.0);
            let hp = permute_layer(&h, layer).unwrap();
            assert!(d.w.adjoint_matmul(&hp).max_abs_diff(&d.r) < 1e-9);
        }
    }

    #[test]
    fn transform_observation_splits() {
        let d = decompose_for_layer(&CMatrix::identity(2), 1).unwrap();
        let (y1, y2) =
            transform_observation(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)], &d)
                .unwrap();
        assert_eq!(y1, vec![Complex64::new(1.0, 0.0)]);
        assert_eq!(y2, Complex64::new(0.0, 2.0));
        assert!(transform_observation(&[Complex64::new(1.0, 0.0)], &d).is_err());
    }

    #[test]
    fn transform_matches_dense_product() {
        let h = random_matrix(4, 9);
        let d = decompose_for_layer(&h, 1).unwrap();
        let y: Vec<Complex64> = (0..4)
            .map(|i| Complex64::new(i as f64, 1.0 - i as f64))
            .collect();
        let (y1, y2) = transform_observation(&y, &d).unwrap();
        let dense = d.w.adjoint().mul_vec(&y);
        for i in 0..3 {
            assert!((dense[i] - y1[i]).norm() < 1e-14);
        }
        assert!((dense[3] - y2).norm() < 1e-14);
    }

    #[test]
    fn transform_is_isometry_for_n2() {
        let h = random_matrix(2, 4);
        let d = decompose_for_layer(&h, 0).unwrap();
        let y = vec![Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5)];
        let (y1, y2) = transform_observation(&y, &d).unwrap();
        let before: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        let after = y1[0].norm_sqr() + y2.norm_sqr();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn triangular_inverse() {
        let (_, r) = qrd(&random_matrix(4, 2)).unwrap();
        let inv = upper_triangular_inverse(&r).unwrap();
        assert!(r.matmul(&inv).max_abs_diff(&CMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn non_finite_rejected() {
        let data = vec![Complex64::new(f64::NAN, 0.0); 4];
        assert_eq!(
            CMatrix::from_row_major(2, 2, data),
            Err(LinalgError::NonFinite)
        );
    }
}
