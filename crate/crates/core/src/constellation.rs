//! Modulation types, normalized square-QAM point sets with per-axis Gray
//! labels, and the nearest-point slicer.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstellationError {
    #[error("symbol {0} is not a point of the {1} constellation")]
    NotAMember(Complex64, Modulation),
    #[error("expected {expected} bits, got {got}")]
    BitLength { expected: usize, got: usize },
    #[error("unknown modulation type `{0}`")]
    UnknownModulation(String),
}

/// Modulation type carried by one transmit layer.
///
/// `Phi` is a silent antenna: a single point at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Phi,
    Qpsk,
    Qam16,
    Qam64,
    Qam256,
    Qam1024,
}

impl Modulation {
    pub const ALL: [Modulation; 6] = [
        Modulation::Phi,
        Modulation::Qpsk,
        Modulation::Qam16,
        Modulation::Qam64,
        Modulation::Qam256,
        Modulation::Qam1024,
    ];

    /// Bits per symbol, `q_n`.
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Phi => 0,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
            Modulation::Qam256 => 8,
            Modulation::Qam1024 => 10,
        }
    }

    /// Number of points, `2^q_n`.
    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Phi => "phi",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
            Modulation::Qam64 => "qam64",
            Modulation::Qam256 => "qam256",
            Modulation::Qam1024 => "qam1024",
        }
    }

    /// Shared, lazily built point set for this type.
    pub fn constellation(self) -> &'static Constellation {
        static TABLE: OnceLock<Vec<Constellation>> = OnceLock::new();
        let table = TABLE.get_or_init(|| {
            Modulation::ALL
                .iter()
                .map(|&m| build_constellation(m))
                .collect()
        });
        &table[self as usize]
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = ConstellationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modulation::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConstellationError::UnknownModulation(s.trim().to_string()))
    }
}

/// A finite unit-average-power symbol set with bit labels.
///
/// Points are stored in canonical order: index `i * side + q`, where `i`
/// ranks the real level and `q` the imaginary level, both ascending. The
/// label of a point is `gray(i)` in the high bits followed by `gray(q)`.
#[derive(Debug, Clone)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<Complex64>,
    labels: Vec<u32>,
    /// Per-axis amplitude levels, ascending.
    levels: Vec<f64>,
    side: usize,
    // fractional level index t = v * rank_scale + rank_offset
    rank_scale: f64,
    rank_offset: f64,
    rank_max: f64,
}

fn gray(i: usize) -> u32 {
    (i ^ (i >> 1)) as u32
}

/// Builds the canonical point set for `mt`.
pub fn build_constellation(mt: Modulation) -> Constellation {
    if mt == Modulation::Phi {
        return Constellation {
            modulation: mt,
            points: vec![Complex64::new(0.0, 0.0)],
            labels: vec![0],
            levels: vec![0.0],
            side: 1,
            rank_scale: 0.0,
            rank_offset: 0.0,
            rank_max: 0.0,
        };
    }
    let order = mt.order();
    let side = 1usize << (mt.bits_per_symbol() / 2);
    let axis_bits = mt.bits_per_symbol() / 2;
    // levels ±1, ±3, ... scaled to unit average energy
    let step = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
    let levels: Vec<f64> = (0..side)
        .map(|i| (2.0 * i as f64 - (side as f64 - 1.0)) * step)
        .collect();

    let mut points = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    for i in 0..side {
        for q in 0..side {
            points.push(Complex64::new(levels[i], levels[q]));
            labels.push((gray(i) << axis_bits) | gray(q));
        }
    }
    let rank_max = (side - 1) as f64;
    Constellation {
        modulation: mt,
        points,
        labels,
        levels,
        side,
        rank_scale: 0.5 / step,
        rank_offset: 0.5 * rank_max - 0.5,
        rank_max,
    }
}

impl Constellation {
    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    /// Bit `k` (0 = most significant) of the label of point `index`.
    #[inline]
    pub fn bit(&self, index: usize, k: usize) -> u8 {
        let q = self.bits_per_symbol();
        ((self.labels[index] >> (q - 1 - k)) & 1) as u8
    }

    /// Index of the nearest level on one axis: `ceil(t - 1/2)` with `t` the
    /// fractional level index, so an exact midpoint resolves downwards.
    #[inline]
    fn axis_rank(&self, v: f64) -> usize {
        // NaN survives the clamp and then casts to 0
        let s = (v * self.rank_scale + self.rank_offset).clamp(0.0, self.rank_max);
        let r = s as i32;
        (r + i32::from((r as f64) < s)) as usize
    }

    /// Nearest level on one axis (the per-axis slicer).
    #[inline]
    pub fn slice_axis(&self, v: f64) -> f64 {
        self.levels[self.axis_rank(v)]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Canonical index of the nearest point to `value`.
    #[inline]
    pub fn slice_index(&self, value: Complex64) -> usize {
        self.axis_rank(value.re) * self.side + self.axis_rank(value.im)
    }

    /// Nearest point to `value`; ties go to the lower canonical index.
    #[inline]
    pub fn slice(&self, value: Complex64) -> Complex64 {
        Complex64::new(self.slice_axis(value.re), self.slice_axis(value.im))
    }

    /// Canonical index of `x`, which must be an exact member.
    pub fn index_of(&self, x: Complex64) -> Result<usize, ConstellationError> {
        let idx = self.slice_index(x);
        if self.points[idx] == x {
            Ok(idx)
        } else {
            Err(ConstellationError::NotAMember(x, self.modulation))
        }
    }

    pub fn symbol_to_bits(&self, x: Complex64) -> Result<Vec<u8>, ConstellationError> {
        let idx = self.index_of(x)?;
        Ok((0..self.bits_per_symbol())
            .map(|k| self.bit(idx, k))
            .collect())
    }

    pub fn bits_to_symbol(&self, bits: &[u8]) -> Result<Complex64, ConstellationError> {
        let q = self.bits_per_symbol();
        if bits.len() != q {
            return Err(ConstellationError::BitLength {
                expected: q,
                got: bits.len(),
            });
        }
        let label = bits
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1));
        let idx = self
            .labels
            .iter()
            .position(|&l| l == label)
            .expect("labels cover every bit pattern");
        Ok(self.points[idx])
    }

    /// Mean of |x|^2 over the points.
    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exhaustive_slice(c: &Constellation, v: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in c.points().iter().enumerate() {
            let d = (v - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    #[test]
    fn cardinalities() {
        let expected = [1, 4, 16, 64, 256, 1024];
        for (m, n) in Modulation::ALL.iter().zip(expected) {
            assert_eq!(m.constellation().len(), n);
            assert_eq!(m.order(), n);
        }
    }

    #[test]
    fn phi_is_single_zero_point() {
        let c = build_constellation(Modulation::Phi);
        assert_eq!(c.points(), &[Complex64::new(0.0, 0.0)]);
        assert_eq!(c.bits_per_symbol(), 0);
        assert_eq!(c.slice(Complex64::new(3.0, -7.0)), Complex64::new(0.0, 0.0));
        assert!(c
            .symbol_to_bits(Complex64::new(0.0, 0.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn qpsk_points() {
        let c = build_constellation(Modulation::Qpsk);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for p in c.points() {
            assert!((p.re.abs() - s).abs() < 1e-15 && (p.im.abs() - s).abs() < 1e-15);
        }
        assert!((c.average_energy() - 1.0).abs() < 1e-12);
        assert_eq!(c.slice(Complex64::new(0.9, 0.8)), Complex64::new(s, s));
    }

    #[test]
    fn qam16_levels() {
        let c = build_constellation(Modulation::Qam16);
        let s = 1.0 / 10f64.sqrt();
        let mut levels: Vec<f64> = c.points().iter().map(|p| p.re).collect();
        levels.dedup();
        let want = [-3.0 * s, -s, s, 3.0 * s];
        for (a, b) in levels.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((c.average_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_energy_all_types() {
        for m in &Modulation::ALL[1..] {
            assert!(
                (m.constellation().average_energy() - 1.0).abs() < 1e-12,
                "{m}"
            );
        }
    }

    #[test]
    fn labels_distinct() {
        for m in Modulation::ALL {
            let mut l = m.constellation().labels().to_vec();
            l.sort_unstable();
            l.dedup();
            assert_eq!(l.len(), m.order());
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for m in &Modulation::ALL[1..] {
            let c = m.constellation();
            let side = c.side;
            for i in 0..side {
                for q in 0..side {
                    let here = c.labels()[i * side + q];
                    if i + 1 < side {
                        assert_eq!((here ^ c.labels()[(i + 1) * side + q]).count_ones(), 1);
                    }
                    if q + 1 < side {
                        assert_eq!((here ^ c.labels()[i * side + q + 1]).count_ones(), 1);
                    }
                }
            }
        }
    }

    #[test]
    fn slice_qam1024_matches_exhaustive() {
        let c = Modulation::Qam1024.constellation();
        let v = Complex64::new(0.33, 0.02);
        assert_eq!(c.slice_index(v), exhaustive_slice(c, v));
    }

    #[test]
    fn slice_idempotent() {
        for m in Modulation::ALL {
            let c = m.constellation();
            for (i, p) in c.points().iter().enumerate() {
                assert_eq!(c.slice_index(*p), i);
            }
        }
    }

    #[test]
    fn slice_tie_goes_to_earlier_point() {
        let c = Modulation::Qpsk.constellation();
        // origin is equidistant from all four points
        assert_eq!(c.slice_index(Complex64::new(0.0, 0.0)), 0);
        assert_eq!(
            c.slice_index(Complex64::new(0.0, 0.0)),
            exhaustive_slice(c, Complex64::new(0.0, 0.0))
        );
    }

    #[test]
    fn non_member_rejected() {
        let c = Modulation::Qpsk.constellation();
        assert!(matches!(
            c.symbol_to_bits(Complex64::new(0.5, 0.5)),
            Err(ConstellationError::NotAMember(..))
        ));
        assert!(c.bits_to_symbol(&[1]).is_err());
    }

    #[test]
    fn names_round_trip() {
        for m in Modulation::ALL {
            assert_eq!(m.name().parse::<Modulation>().unwrap(), m);
        }
        assert!("8psk".parse::<Modulation>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn slice_agrees_with_exhaustive(re in -1.6f64..1.6, im in -1.6f64..1.6, k in 0usize..6) {
            let c = Modulation::ALL[k].constellation();
            let v = Complex64::new(re, im);
            prop_assert_eq!(c.slice_index(v), exhaustive_slice(c, v));
        }

        #[test]
        fn bits_round_trip(k in 0usize..6, idx in 0usize..1024) {
            let c = Modulation::ALL[k].constellation();
            let p = c.points()[idx % c.len()];
            let bits = c.symbol_to_bits(p).unwrap();
            prop_assert_eq!(bits.len(), c.bits_per_symbol());
            prop_assert_eq!(c.bits_to_symbol(&bits).unwrap(), p);
        }
    }
}
