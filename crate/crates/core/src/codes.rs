//! Code constructions: the rate-3/4 complex orthogonal design, the rate-5/4
//! code that embeds it, and the linear-dispersion view shared by both.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{check, thin_qr, vec, ComplexMat, RealMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("weight matrices are linearly dependent over the reals")]
    DependentWeights,
    #[error("unknown code {0:?} (expected \"cod34\" or \"new54\")")]
    UnknownCode(String),
    #[error("weight {index} has shape {rows}x{cols}, expected {t}x{nt}")]
    WeightShape {
        index: usize,
        rows: usize,
        cols: usize,
        t: usize,
        nt: usize,
    },
    #[error("a code needs an even, positive number of real weights, got {0}")]
    WeightCount(usize),
}

/// Rotation angle that maximizes the coding gain: `½·arccos(1/5)`.
pub fn default_phi() -> f64 {
    0.5 * (0.2f64).acos()
}

/// The 4x4 rate-3/4 complex orthogonal design `O(x1..x6)`.
pub fn cod34(x: &[f64; 6]) -> ComplexMat {
    let mut s = [0.0; 10];
    s[..6].copy_from_slice(x);
    new_code_matrix(&s, 0.0)
}

/// The rate-5/4 codeword for ten real PAM coordinates.
pub fn new_code_matrix(s: &[f64; 10], phi: f64) -> ComplexMat {
    let j = Complex64::i();
    let e = Complex64::from_polar(1.0, phi);
    let r = |x: f64| Complex64::new(x, 0.0);
    let [x1, x2, x3, x4, x5, x6, x7, x8, x9, x10] = s.map(r);
    ComplexMat::from_rows(&[
        vec![
            x1 + j * x2 - j * x10 * e,
            x3 + j * x4,
            x5 + j * x6 + j * x9 * e,
            -e * (x7 + j * x8),
        ],
        vec![
            -x3 + j * x4,
            x1 - j * x2 - j * x10 * e,
            e * (-x7 + j * x8),
            -x5 - j * x6 + j * x9 * e,
        ],
        vec![
            -x5 + j * x6 + j * x9 * e,
            e * (x7 + j * x8),
            x1 - j * x2 + j * x10 * e,
            x3 + j * x4,
        ],
        vec![
            -e * (-x7 + j * x8),
            x5 - j * x6 + j * x9 * e,
            -x3 + j * x4,
            x1 + j * x2 + j * x10 * e,
        ],
    ])
}

/// Reads the weight matrices of a linear code off its constructor by
/// evaluating it at unit vectors, then checks they are independent.
pub fn extract_weights<F>(constructor: F, count: usize) -> Result<Vec<ComplexMat>, CodeError>
where
    F: Fn(&[f64]) -> ComplexMat,
{
    let weights: Vec<ComplexMat> = (0..count)
        .map(|k| {
            let mut e = vec![0.0; count];
            e[k] = 1.0;
            constructor(&e)
        })
        .collect();
    if weights_independent(&weights) {
        Ok(weights)
    } else {
        Err(CodeError::DependentWeights)
    }
}

/// Rank test on the stacked real embeddings `[check(vec(β_1)) … check(vec(β_2K))]`.
fn weights_independent(weights: &[ComplexMat]) -> bool {
    let rows = 2 * weights[0].rows() * weights[0].cols();
    if rows < weights.len() {
        return false;
    }
    let cols: Vec<RealMat> = weights.iter().map(|b| check(&vec(b))).collect();
    let stacked = RealMat::from_fn(rows, weights.len(), |i, k| cols[k][(i, 0)]);
    thin_qr(&stacked).is_ok()
}

/// A space-time block code in linear-dispersion form `X(s) = Σ β_k x_k`.
#[derive(Debug, Clone)]
pub struct CodeDef {
    name: String,
    t: usize,
    nt: usize,
    weights: Vec<ComplexMat>,
    phi: Option<f64>,
    orthogonal_prefix: usize,
}

impl CodeDef {
    /// Builds a code from explicit weight matrices.
    ///
    /// `orthogonal_prefix` is the number of leading real symbols whose
    /// equivalent-channel columns are mutually orthogonal for every channel;
    /// detectors slice those levels instead of enumerating them.
    pub fn from_weights(
        name: impl Into<String>,
        weights: Vec<ComplexMat>,
        phi: Option<f64>,
        orthogonal_prefix: usize,
    ) -> Result<Self, CodeError> {
        if weights.is_empty() || !weights.len().is_multiple_of(2) {
            return Err(CodeError::WeightCount(weights.len()));
        }
        let (t, nt) = (weights[0].rows(), weights[0].cols());
        for (index, w) in weights.iter().enumerate() {
            if (w.rows(), w.cols()) != (t, nt) {
                return Err(CodeError::WeightShape {
                    index,
                    rows: w.rows(),
                    cols: w.cols(),
                    t,
                    nt,
                });
            }
        }
        if !weights_independent(&weights) {
            return Err(CodeError::DependentWeights);
        }
        Ok(Self {
            name: name.into(),
            t,
            nt,
            orthogonal_prefix: orthogonal_prefix.min(weights.len()),
            weights,
            phi,
        })
    }

    pub fn cod34() -> Self {
        let weights = extract_weights(
            |s| cod34(&s.try_into().expect("six coordinates")),
            6,
        )
        .expect("cod34 weights are independent");
        Self::from_weights("cod34", weights, None, 6).expect("valid cod34")
    }

    pub fn new54(phi: f64) -> Self {
        let weights = extract_weights(
            |s| new_code_matrix(&s.try_into().expect("ten coordinates"), phi),
            10,
        )
        .expect("new54 weights are independent");
        Self::from_weights("new54", weights, Some(phi), 6).expect("valid new54")
    }

    /// Resolves `"cod34"` or `"new54"` (the latter at the optimal angle).
    pub fn by_name(name: &str) -> Result<Self, CodeError> {
        match name {
            "cod34" => Ok(Self::cod34()),
            "new54" => Ok(Self::new54(default_phi())),
            other => Err(CodeError::UnknownCode(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Channel uses per codeword.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Transmit antennas.
    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Complex symbols per codeword.
    pub fn k(&self) -> usize {
        self.weights.len() / 2
    }

    /// Real symbols per codeword (`2K`).
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn phi(&self) -> Option<f64> {
        self.phi
    }

    pub fn weights(&self) -> &[ComplexMat] {
        &self.weights
    }

    pub fn orthogonal_prefix(&self) -> usize {
        self.orthogonal_prefix
    }

    /// `X(s) = Σ β_k s_k`
    pub fn encode(&self, s: &[f64]) -> ComplexMat {
        assert_eq!(s.len(), self.dim(), "symbol vector length");
        let mut x = ComplexMat::zeros(self.t, self.nt);
        for (w, &sk) in self.weights.iter().zip(s) {
            if sk != 0.0 {
                x.axpy(sk, w);
            }
        }
        x
    }

    /// Integer-difference variant of [`encode`](Self::encode) used by the
    /// determinant searches.
    pub fn encode_int(&self, delta: &[i64]) -> ComplexMat {
        let s: Vec<f64> = delta.iter().map(|&d| d as f64).collect();
        self.encode(&s)
    }
}
