//! Quasi-static Rayleigh MIMO channel `Y = XH + W` and the equivalent
//! real-valued linear model used by the detectors.
//!
//! # Random streams
//!
//! Every trial draws from its own [`RngStream`], a ChaCha8 generator keyed by
//! the master seed with the trial index as the ChaCha stream selector. Since
//! ChaCha is counter based, a trial's draws depend only on
//! `(master_seed, stream_id)`, never on which thread ran it or in what order.
//!
//! Complex Gaussians are produced by Box-Muller from two 53-bit uniforms
//! `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)`:
//!
//! ```text
//! ρ = sqrt(-ln u1)            (so that E|z|² = 1)
//! z = ρ·cos(2π u2) + j·ρ·sin(2π u2)
//! ```
//!
//! Draw order inside a trial is fixed: channel entries row-major, then the
//! PAM coordinates of the symbol vector, then noise entries row-major.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codes::CodeDef;
use crate::linalg::{check, vec, ComplexMat, RealMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstellationError {
    #[error("constellation size {0} is not a square QAM size (4, 16, 64, ...)")]
    NotSquare(usize),
}

/// Square M-QAM seen as two PAM axes over the odd integers
/// `{±1, ±3, …, ±(√M − 1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    m: usize,
    axis: Vec<f64>,
}

impl ConstellationSpec {
    pub fn new(m: usize) -> Result<Self, ConstellationError> {
        // even power of two, at least 4
        if m < 4 || !m.is_power_of_two() || !m.trailing_zeros().is_multiple_of(2) {
            return Err(ConstellationError::NotSquare(m));
        }
        let side = 1usize << (m.trailing_zeros() / 2);
        let axis = (0..side).map(|i| (2 * i) as f64 - (side - 1) as f64).collect();
        Ok(Self { m, axis })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `√M`, the number of PAM levels per real coordinate.
    pub fn side(&self) -> usize {
        self.axis.len()
    }

    /// Largest PAM amplitude, `√M − 1`.
    pub fn max_level(&self) -> f64 {
        (self.side() - 1) as f64
    }

    /// PAM points in increasing order.
    pub fn pam_axis(&self) -> &[f64] {
        &self.axis
    }

    /// `E[x²]` for a uniform PAM coordinate, `(M − 1)/3`.
    pub fn coordinate_energy(&self) -> f64 {
        (self.m as f64 - 1.0) / 3.0
    }
}

/// Per-trial random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Circularly-symmetric `CN(0, 1)` sample.
    pub fn complex_normal(&mut self) -> Complex64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        Complex64::from_polar((-u1.ln()).sqrt(), TAU * u2)
    }

    /// Uniformly chosen PAM point.
    pub fn pam_point(&mut self, c: &ConstellationSpec) -> f64 {
        c.pam_axis()[self.rng.random_range(0..c.side())]
    }

    pub fn symbols(&mut self, c: &ConstellationSpec, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.pam_point(c)).collect()
    }
}

/// One quasi-static channel draw.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `Nt × Nr` fading matrix.
    pub h: ComplexMat,
    /// Noise variance per complex dimension.
    pub noise_var: f64,
}

/// Draws `H` with i.i.d. `CN(0, 1)` entries.
pub fn sample_channel(nt: usize, nr: usize, noise_var: f64, rng: &mut RngStream) -> ChannelRealization {
    assert!(nt >= 1 && nr >= 1);
    let h = ComplexMat::from_fn(nt, nr, |_, _| rng.complex_normal());
    ChannelRealization { h, noise_var }
}

/// `Y = XH + W`, `W` with i.i.d. `CN(0, N₀)` entries.
///
/// Noise is always drawn (as unit-variance samples scaled by `√N₀`), so the
/// stream position after this call does not depend on `N₀`.
pub fn transmit(x: &ComplexMat, ch: &ChannelRealization, rng: &mut RngStream) -> ComplexMat {
    assert_eq!(x.cols(), ch.h.rows(), "X columns must match H rows");
    let mut y = x * &ch.h;
    let sigma = ch.noise_var.sqrt();
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            let w = rng.complex_normal();
            y[(i, j)] += w * sigma;
        }
    }
    y
}

/// Equivalent complex channel `𝓗` (`N_r·T × 2K`): block row `i` holds
/// `β_k h_i` in column `k`, so that `vec(XH) = 𝓗 s`.
pub fn equivalent_channel(code: &CodeDef, h: &ComplexMat) -> ComplexMat {
    assert_eq!(code.nt(), h.rows(), "code Nt must match H rows");
    let (t, nr) = (code.t(), h.cols());
    let mut out = ComplexMat::zeros(nr * t, code.dim());
    for i in 0..nr {
        let hi = ComplexMat::column_vector(&h.column(i));
        for (k, beta) in code.weights().iter().enumerate() {
            let col = beta * &hi;
            for r in 0..t {
                out[(i * t + r, k)] = col[(r, 0)];
            }
        }
    }
    out
}

/// Real model `y̌ = 𝓗̌ s + w̌` from the complex one.
pub fn real_model(hcal: &ComplexMat, y_vec: &ComplexMat) -> (RealMat, Vec<f64>) {
    assert_eq!(y_vec.cols(), 1);
    assert_eq!(hcal.rows(), y_vec.rows());
    (check(hcal), check(y_vec).as_slice().to_vec())
}

/// Convenience: real model straight from a received matrix.
pub fn real_system(code: &CodeDef, h: &ComplexMat, y: &ComplexMat) -> (RealMat, Vec<f64>) {
    real_model(&equivalent_channel(code, h), &vec(y))
}

/// Average received energy per channel use per receive antenna,
/// `E‖X‖²_F / T` with `E|h|² = 1`, exact under uniform independent PAM
/// coordinates (cross terms vanish because coordinates are zero-mean).
pub fn average_energy(code: &CodeDef, c: &ConstellationSpec) -> f64 {
    let weight_energy: f64 = code
        .weights()
        .iter()
        .map(|b| b.frobenius_norm().powi(2))
        .sum();
    weight_energy * c.coordinate_energy() / code.t() as f64
}

/// `N₀ = E_avg / 10^(snr_db/10)`; `+∞` dB maps to a noiseless channel.
pub fn snr_to_noise_var(snr_db: f64, code: &CodeDef, c: &ConstellationSpec) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    average_energy(code, c) / 10f64.powf(snr_db / 10.0)
}
