//! Rayleigh channel generation (i.i.d. or Kronecker-correlated), per-frame
//! modulation draws, and synthesis of `y = Hx + z`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::constellation::Modulation;
use crate::linalg::CMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("SNR must be positive, got {0}")]
    NonPositiveSnr(f64),
    #[error("correlation factor must lie in [0, 1), got {0}")]
    InvalidCorrelation(f64),
    #[error("invalid frame spec: {0}")]
    InvalidSpec(String),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise variance for a given linear SNR, with `SNR = N / sigma^2`.
pub fn snr_to_sigma2(snr_linear: f64, antennas: usize) -> Result<f64, ChannelError> {
    if !(snr_linear > 0.0) {
        return Err(ChannelError::NonPositiveSnr(snr_linear));
    }
    Ok(antennas as f64 / snr_linear)
}

/// Exponential correlation profile `R[i][j] = rho^|i-j|`.
pub fn exponential_correlation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Principal (symmetric positive-definite) square root of `R`.
pub fn principal_sqrt(r: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(r.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub correlation: f64,
}

/// Draws a circular complex Gaussian sample with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Square `n x n` Rayleigh channel; for `rho > 0` both sides use the same
/// exponential profile, `H_c = R_r^{1/2} H R_t^{1/2}`.
pub fn generate_channel<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(ChannelError::InvalidCorrelation(rho));
    }
    let raw = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    let h = if rho > 0.0 {
        let root = real_to_complex(&principal_sqrt(&exponential_correlation(n, rho)));
        root.matmul(&raw).matmul(&root)
    } else {
        raw
    };
    Ok(ChannelRealization {
        h,
        correlation: rho,
    })
}

/// Parameters of one frame: `T` observations through a fixed channel.
#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub antennas: usize,
    pub observations: usize,
    pub hypotheses: Vec<Modulation>,
    pub snr_db: f64,
    pub rho: f64,
    pub seed: u64,
    /// Layer whose modulation is fixed instead of drawn.
    pub pinned: Option<(usize, Modulation)>,
}

impl FrameSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.antennas == 0 {
            return Err(ChannelError::InvalidSpec("antennas must be >= 1".into()));
        }
        if self.observations == 0 {
            return Err(ChannelError::InvalidSpec(
                "observations must be >= 1".into(),
            ));
        }
        if self.hypotheses.is_empty() {
            return Err(ChannelError::InvalidSpec("hypothesis set is empty".into()));
        }
        if let Some((layer, _)) = self.pinned {
            if layer >= self.antennas {
                return Err(ChannelError::InvalidSpec(format!(
                    "pinned layer {layer} out of range"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(ChannelError::InvalidCorrelation(self.rho));
        }
        Ok(())
    }

    pub fn sigma2(&self) -> Result<f64, ChannelError> {
        snr_to_sigma2(db_to_linear(self.snr_db), self.antennas)
    }

    /// Independent generator for frame `index`; a ChaCha stream per frame,
    /// so frames can be drawn in any order.
    pub fn frame_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// One received vector and the symbols that produced it.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: Vec<Complex64>,
    pub x: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub channel: ChannelRealization,
    pub modulations: Vec<Modulation>,
    pub sigma2: f64,
    pub observations: Vec<Observation>,
}

impl Frame {
    pub fn antennas(&self) -> usize {
        self.channel.h.cols()
    }
}

/// Draws a frame: channel, per-layer modulation types, then `T`
/// observations with fresh symbols and noise.
///
/// Noise is drawn as unit-variance samples scaled by `sigma`, so frames at
/// different SNR from the same generator differ only in the noise scale.
pub fn draw_frame<R: Rng + ?Sized>(spec: &FrameSpec, rng: &mut R) -> Result<Frame, ChannelError> {
    spec.validate()?;
    let sigma2 = spec.sigma2()?;
    let n = spec.antennas;
    let channel = generate_channel(n, spec.rho, rng)?;
    let modulations: Vec<Modulation> = (0..n)
        .map(|layer| {
            let drawn = spec.hypotheses[rng.random_range(0..spec.hypotheses.len())];
            match spec.pinned {
                Some((l, m)) if l == layer => m,
                _ => drawn,
            }
        })
        .collect();
    let sets: Vec<_> = modulations.iter().map(|m| m.constellation()).collect();
    let sigma = sigma2.sqrt();

    let mut observations = Vec::with_capacity(spec.observations);
    for _ in 0..spec.observations {
        let x: Vec<Complex64> = sets
            .iter()
            .map(|c| c.points()[rng.random_range(0..c.len())])
            .collect();
        let mut y = channel.h.mul_vec(&x);
        for yi in &mut y {
            *yi += complex_gaussian(rng) * sigma;
        }
        observations.push(Observation { y, x });
    }
    Ok(Frame {
        channel,
        modulations,
        sigma2,
        observations,
    })
}
