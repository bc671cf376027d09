//! Grid verification of the non-vanishing determinant argument for the
//! rate-5/4 code.
//!
//! With `Δx_i = 2n_i`, `σ₁ = Σ_{i≤6} Δx_i²` and `σ₂ = Σ_{i≥7} Δx_i²`, the
//! codeword-difference determinant is
//!
//! ```text
//! |det X(Δs)| = |σ₁² + e^{j2φ}·b + e^{j4φ}·σ₂²|,   b = 2(Σa_i² − 2(a₁² + a₂² + a₃²))
//! ```
//!
//! where `a₁ … a₈` come from Euler's four-square and Fibonacci's two-square
//! identities, `Σ a_i² = σ₁σ₂`. The argument splits into `σ₁ ≠ σ₂`, where
//! `|det| ≥ (σ₂ − σ₁)² ≥ 16`, and `σ₁ = σ₂ = σ`, where
//! `|det| = |2σ²cos 2φ + b|` and, at `cos 2φ = 1/5`,
//! `5|det| = 64·|3σ̃² − 5(ã₁² + ã₂² + ã₃²)|` with `σ̃ = σ/4`, `ã_i = a_i/4`.
//! The last form is an instance of `3X₁² − 5(X₂² + X₃² + X₄²)`, which never
//! takes the values `0` or `±1` on nonzero integer tuples.
//!
//! Everything below checks those statements exhaustively on bounded grids.
//! Integer quantities are exact (`i64`, `i128` for squares of squares); only
//! the determinants themselves are floating point.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::codes::{default_phi, new_code_matrix, CodeDef};
use crate::metrics::min_det;

/// Coding-gain ceiling: `|det O(2,0,0,0,0,0)| = 16`.
pub const DET_CEILING: f64 = 16.0;

/// Ten integers `n_i` of a difference vector, `Δx_i = 2n_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DeltaVec(pub [i64; 10]);

impl DeltaVec {
    /// `Δx_i = 2n_i`
    pub fn dx(&self) -> [i64; 10] {
        self.0.map(|n| 2 * n)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&n| n == 0)
    }

    pub fn sigmas(&self) -> (i64, i64) {
        let dx = self.dx();
        (
            dx[..6].iter().map(|v| v * v).sum(),
            dx[6..].iter().map(|v| v * v).sum(),
        )
    }
}

impl fmt::Display for DeltaVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        write!(f, "n=({})", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetDecomposition {
    pub sigma1: i64,
    pub sigma2: i64,
    pub b: i64,
    pub a: [i64; 8],
}

/// The eight integers `a₁ … a₈` of the four-square / two-square expansion of
/// `σ₁σ₂`, in difference (`Δx`) units.
pub fn four_square_identity(d: &DeltaVec) -> [i64; 8] {
    let x = d.dx();
    let [x1, x2, x3, x4, x5, x6, x7, x8, x9, x10] = x;
    [
        x7 * x4 - x8 * x3 + x9 * x6 - x10 * x2,
        x7 * x6 + x8 * x2 - x9 * x4 - x10 * x3,
        x7 * x2 - x8 * x6 - x9 * x3 + x10 * x4,
        x7 * x3 + x8 * x4 + x9 * x2 + x10 * x6,
        x7 * x1 + x8 * x5,
        x8 * x1 - x7 * x5,
        x9 * x1 + x10 * x5,
        x10 * x1 - x9 * x5,
    ]
}

fn sum_sq(a: &[i64]) -> i64 {
    a.iter().map(|v| v * v).sum()
}

pub fn decompose(d: &DeltaVec) -> DetDecomposition {
    let (sigma1, sigma2) = d.sigmas();
    let a = four_square_identity(d);
    let b = 2 * (sum_sq(&a) - 2 * sum_sq(&a[..3]));
    DetDecomposition { sigma1, sigma2, b, a }
}

/// `|σ₁² + e^{j2φ} b + e^{j4φ} σ₂²|`
pub fn det_closed_form(d: &DeltaVec, phi: f64) -> f64 {
    let dec = decompose(d);
    let (s1, s2, b) = (dec.sigma1 as f64, dec.sigma2 as f64, dec.b as f64);
    (Complex64::new(s1 * s1, 0.0) + Complex64::from_polar(b, 2.0 * phi) + Complex64::from_polar(s2 * s2, 4.0 * phi)).norm()
}

/// `|det X(Δs)|` from the 4x4 codeword matrix itself.
pub fn det_direct(d: &DeltaVec, phi: f64) -> f64 {
    new_code_matrix(&d.dx().map(|v| v as f64), phi).det().norm()
}

/// `4(Σa² − 2(a₁² + a₂² + a₃²))² − 4(Σa²)²`, the discriminant of
/// `σ₂²x² + bx + σ₁²` written through the `a_i`.
pub fn discriminant_from_a(a: &[i64; 8]) -> i128 {
    let total = a.iter().map(|&v| (v as i128) * (v as i128)).sum::<i128>();
    let head = a[..3].iter().map(|&v| (v as i128) * (v as i128)).sum::<i128>();
    let half_b = total - 2 * head;
    4 * half_b * half_b - 4 * total * total
}

pub fn discriminant_sign(d: &DeltaVec) -> i128 {
    discriminant_from_a(&four_square_identity(d))
}

/// Moduli of the two roots of `σ₂²x² + bx + σ₁²`, when `σ₂ > 0`.
pub fn root_moduli(d: &DeltaVec) -> Option<(f64, f64)> {
    let dec = decompose(d);
    if dec.sigma2 == 0 {
        return None;
    }
    let lead = (dec.sigma2 * dec.sigma2) as f64;
    let b = dec.b as f64;
    let disc = discriminant_sign(d) as f64;
    let (re, im) = (-b / (2.0 * lead), disc.abs().sqrt() / (2.0 * lead));
    if disc <= 0.0 {
        let m = Complex64::new(re, im).norm();
        Some((m, m))
    } else {
        Some(((re + im).abs(), (re - im).abs()))
    }
}

/// Runs `fold` over every nonzero grid vector with `|n_i| ≤ n_max` whose
/// first nonzero entry is positive (one of each `±d` pair; every quantity
/// checked here is even in `d`). Work is split by leading coordinate.
fn fold_canonical_grid<A, I, F, R>(n_max: i64, init: I, fold: F, reduce: R) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &DeltaVec) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    let leads: Vec<(usize, i64)> = (0..10).flat_map(|p| (1..=n_max).map(move |v| (p, v))).collect();
    leads
        .into_par_iter()
        .map(|(p, v)| {
            let mut acc = init();
            let mut d = DeltaVec([0; 10]);
            d.0[p] = v;
            for slot in d.0.iter_mut().skip(p + 1) {
                *slot = -n_max;
            }
            loop {
                acc = fold(acc, &d);
                // odometer over positions p+1..10
                let mut pos = 9;
                loop {
                    if pos <= p {
                        return acc;
                    }
                    if d.0[pos] < n_max {
                        d.0[pos] += 1;
                        break;
                    }
                    d.0[pos] = -n_max;
                    pos -= 1;
                }
            }
        })
        .reduce(&init, reduce)
}

/// Number of nonzero vectors in the canonical half of the grid.
pub fn canonical_grid_size(n_max: i64) -> u64 {
    (((2 * n_max + 1) as u64).pow(10) - 1) / 2
}

fn min_by_value(a: Option<(f64, DeltaVec)>, b: Option<(f64, DeltaVec)>) -> Option<(f64, DeltaVec)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if (x.0, x.1) <= (y.0, y.1) {
                Some(x)
            } else {
                Some(y)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridIdentities {
    pub vectors: u64,
    /// Largest `|closed − direct| / direct` over the grid.
    pub max_rel_err: f64,
    /// Vectors where `Σa² ≠ σ₁σ₂`; must be zero.
    pub four_square_failures: u64,
    /// Largest discriminant seen; must be `≤ 0`.
    pub max_discriminant: i128,
    /// Largest `| |λ| − σ₁/σ₂ |` relative error over `σ₂ > 0`.
    pub max_root_err: f64,
}

/// One pass over the grid checking the closed form, the four-square identity,
/// the discriminant sign and the root moduli.
pub fn grid_identities(n_max: i64, phi: f64) -> GridIdentities {
    fold_canonical_grid(
        n_max,
        || GridIdentities {
            vectors: 0,
            max_rel_err: 0.0,
            four_square_failures: 0,
            max_discriminant: i128::MIN,
            max_root_err: 0.0,
        },
        |mut acc, d| {
            let dec = decompose(d);
            let closed = det_closed_form(d, phi);
            let direct = det_direct(d, phi);
            acc.vectors += 1;
            acc.max_rel_err = acc.max_rel_err.max((closed - direct).abs() / direct.max(f64::MIN_POSITIVE));
            if sum_sq(&dec.a) != dec.sigma1 * dec.sigma2 {
                acc.four_square_failures += 1;
            }
            acc.max_discriminant = acc.max_discriminant.max(discriminant_from_a(&dec.a));
            if let Some((l1, l2)) = root_moduli(d) {
                let want = dec.sigma1 as f64 / dec.sigma2 as f64;
                let err = (l1 - want).abs().max((l2 - want).abs()) / want.max(1.0);
                acc.max_root_err = acc.max_root_err.max(err);
            }
            acc
        },
        |a, b| GridIdentities {
            vectors: a.vectors + b.vectors,
            max_rel_err: a.max_rel_err.max(b.max_rel_err),
            four_square_failures: a.four_square_failures + b.four_square_failures,
            max_discriminant: a.max_discriminant.max(b.max_discriminant),
            max_root_err: a.max_root_err.max(b.max_root_err),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnequalStratum {
    pub n_max: i64,
    pub vectors: u64,
    pub min_det: f64,
    pub argmin: DeltaVec,
    /// `|det X(argmin)|` recomputed from the codeword matrix.
    pub argmin_direct: f64,
    pub min_gap_sq: i64,
    /// Vectors where `|det| < (σ₂ − σ₁)²` beyond rounding.
    pub chain_violations: u64,
    /// Minimum over the `σ₁ = 0` slice, where `|det| = σ₂²`.
    pub sigma1_zero_min: f64,
}

impl UnequalStratum {
    pub fn holds(&self) -> bool {
        self.min_det >= DET_CEILING - 1e-9 && self.min_gap_sq >= 16 && self.chain_violations == 0
    }
}

/// The `σ₁ ≠ σ₂`, `σ₂ > 0` stratum at the optimal angle.
pub fn bound_case_unequal(n_max: i64) -> UnequalStratum {
    let phi = default_phi();
    type Acc = (u64, Option<(f64, DeltaVec)>, i64, u64, f64);
    let (vectors, best, min_gap_sq, chain_violations, sigma1_zero_min) = fold_canonical_grid(
        n_max,
        || -> Acc { (0, None, i64::MAX, 0, f64::INFINITY) },
        |mut acc, d| {
            let (s1, s2) = d.sigmas();
            if s1 == s2 || s2 == 0 {
                return acc;
            }
            let det = det_closed_form(d, phi);
            let gap = (s2 - s1) * (s2 - s1);
            acc.0 += 1;
            acc.1 = min_by_value(acc.1, Some((det, *d)));
            acc.2 = acc.2.min(gap);
            if det < gap as f64 * (1.0 - 1e-12) - 1e-9 {
                acc.3 += 1;
            }
            if s1 == 0 {
                acc.4 = acc.4.min(det);
            }
            acc
        },
        |a, b| (a.0 + b.0, min_by_value(a.1, b.1), a.2.min(b.2), a.3 + b.3, a.4.min(b.4)),
    );
    let (min_det, argmin) = best.expect("stratum is nonempty");
    UnequalStratum {
        n_max,
        vectors,
        min_det,
        argmin,
        argmin_direct: det_direct(&argmin, phi),
        min_gap_sq,
        chain_violations,
        sigma1_zero_min,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualStratum {
    pub n_max: i64,
    pub vectors: u64,
    pub min_det: f64,
    pub argmin: DeltaVec,
    /// Minimum of the direct 4x4 determinant over the stratum.
    pub min_det_direct: f64,
    /// Largest deviation from `|det| = |2σ²cos2φ + b|`.
    pub max_reduced_form_err: f64,
    /// Smallest `|3σ̃² − 5(ã₁² + ã₂² + ã₃²)|`.
    pub min_diophantine: i64,
    /// Largest deviation from `5|det| = 64·|3σ̃² − 5(ã₁² + ã₂² + ã₃²)|`.
    pub max_scaling_err: f64,
    /// Same stratum at `cos 2φ = 0`, reported only.
    pub quarter_turn_min: f64,
}

impl EqualStratum {
    pub fn holds(&self) -> bool {
        self.min_det > DET_CEILING
            && self.min_det_direct > DET_CEILING
            && self.min_diophantine >= 2
            && self.max_reduced_form_err < 1e-9
            && self.max_scaling_err < 1e-9
    }
}

/// All `n_max`-bounded integer vectors of length `len`, grouped by `Σ n_i²`.
fn shells(len: usize, n_max: i64) -> BTreeMap<i64, Vec<Vec<i64>>> {
    let mut out: BTreeMap<i64, Vec<Vec<i64>>> = BTreeMap::new();
    let side = (2 * n_max + 1) as u64;
    for idx in 0..side.pow(len as u32) {
        let mut rem = idx;
        let v: Vec<i64> = (0..len)
            .map(|_| {
                let x = (rem % side) as i64 - n_max;
                rem /= side;
                x
            })
            .collect();
        out.entry(v.iter().map(|x| x * x).sum()).or_default().push(v);
    }
    out
}

/// The `σ₁ = σ₂ ≠ 0` stratum, enumerated by pairing shells of equal squared
/// norm from the first six and last four coordinates.
pub fn bound_case_equal(n_max: i64) -> EqualStratum {
    let phi = default_phi();
    let cos2 = (2.0 * phi).cos();
    let quarter = std::f64::consts::FRAC_PI_4;
    let head = shells(6, n_max);
    let tail = shells(4, n_max);
    let pairs: Vec<(&Vec<i64>, &Vec<Vec<i64>>)> = head
        .iter()
        .filter(|(norm, _)| **norm > 0)
        .filter_map(|(norm, hs)| tail.get(norm).map(|ts| hs.iter().map(move |h| (h, ts))))
        .flatten()
        .collect();

    #[derive(Clone)]
    struct Acc {
        vectors: u64,
        best: Option<(f64, DeltaVec)>,
        direct: f64,
        form_err: f64,
        dioph: i64,
        scale_err: f64,
        quarter: f64,
    }
    let init = || Acc {
        vectors: 0,
        best: None,
        direct: f64::INFINITY,
        form_err: 0.0,
        dioph: i64::MAX,
        scale_err: 0.0,
        quarter: f64::INFINITY,
    };
    let acc = pairs
        .par_iter()
        .fold(init, |mut acc, (h, ts)| {
            for t in ts.iter() {
                let mut n = [0i64; 10];
                n[..6].copy_from_slice(h);
                n[6..].copy_from_slice(t);
                let d = DeltaVec(n);
                let dec = decompose(&d);
                debug_assert_eq!(dec.sigma1, dec.sigma2);
                let sigma = dec.sigma1 as f64;
                let det = det_closed_form(&d, phi);
                acc.vectors += 1;
                acc.best = min_by_value(acc.best, Some((det, d)));
                acc.direct = acc.direct.min(det_direct(&d, phi));
                let reduced = (2.0 * sigma * sigma * cos2 + dec.b as f64).abs();
                acc.form_err = acc.form_err.max((reduced - det).abs() / det.max(1.0));
                // Δx = 2n makes σ and every a_i divisible by 4
                let s_t = dec.sigma1 / 4;
                let head3: i64 = dec.a[..3].iter().map(|a| (a / 4) * (a / 4)).sum();
                let form = (3 * s_t * s_t - 5 * head3).abs();
                acc.dioph = acc.dioph.min(form);
                acc.scale_err = acc.scale_err.max((5.0 * det - 64.0 * form as f64).abs() / det.max(1.0));
                acc.quarter = acc.quarter.min(det_closed_form(&d, quarter));
            }
            acc
        })
        .reduce(init, |a, b| Acc {
            vectors: a.vectors + b.vectors,
            best: min_by_value(a.best, b.best),
            direct: a.direct.min(b.direct),
            form_err: a.form_err.max(b.form_err),
            dioph: a.dioph.min(b.dioph),
            scale_err: a.scale_err.max(b.scale_err),
            quarter: a.quarter.min(b.quarter),
        });
    let (min_det, argmin) = acc.best.expect("stratum is nonempty");
    EqualStratum {
        n_max,
        vectors: acc.vectors,
        min_det,
        argmin,
        min_det_direct: acc.direct,
        max_reduced_form_err: acc.form_err,
        min_diophantine: acc.dioph,
        max_scaling_err: acc.scale_err,
        quarter_turn_min: acc.quarter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiophantineGap {
    pub x_max: i64,
    pub min_abs: i64,
    pub argmin: [i64; 4],
    /// Nonzero tuples with value 0.
    pub zeros: u64,
    /// Nonzero tuples with value ±1.
    pub units: u64,
}

impl DiophantineGap {
    pub fn holds(&self) -> bool {
        self.zeros == 0 && self.units == 0 && self.min_abs >= 2
    }
}

/// `3X₁² − 5(X₂² + X₃² + X₄²)`
pub fn diophantine_form(x: [i64; 4]) -> i64 {
    3 * x[0] * x[0] - 5 * (x[1] * x[1] + x[2] * x[2] + x[3] * x[3])
}

/// Minimum of `|3X₁² − 5(X₂² + X₃² + X₄²)|` over nonzero tuples with
/// `max |X_i| ≤ x_max`. The form is even in each `X_i`, so only nonnegative
/// tuples are visited.
pub fn diophantine_gap(x_max: i64) -> DiophantineGap {
    assert!(x_max >= 1);
    type Acc = (i64, [i64; 4], u64, u64);
    let (min_abs, argmin, zeros, units) = (0..=x_max)
        .into_par_iter()
        .fold(
            || -> Acc { (i64::MAX, [0; 4], 0, 0) },
            |mut acc, x1| {
                for x2 in 0..=x_max {
                    for x3 in 0..=x_max {
                        for x4 in 0..=x_max {
                            let x = [x1, x2, x3, x4];
                            if x == [0; 4] {
                                continue;
                            }
                            let v = diophantine_form(x).abs();
                            if v == 0 {
                                acc.2 += 1;
                            } else if v == 1 {
                                acc.3 += 1;
                            }
                            if (v, x) < (acc.0, acc.1) {
                                acc.0 = v;
                                acc.1 = x;
                            }
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || (i64::MAX, [0; 4], 0, 0),
            |a, b| {
                let (v, x) = if (a.0, a.1) <= (b.0, b.1) { (a.0, a.1) } else { (b.0, b.1) };
                (v, x, a.2 + b.2, a.3 + b.3)
            },
        );
    DiophantineGap {
        x_max,
        min_abs,
        argmin,
        zeros,
        units,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModularConditions {
    /// `−3·5·5·5 mod 8`, must be 1.
    pub product_mod8: i64,
    /// `3 − 5 − 5 − 5 mod 8`, must be 4.
    pub sum_mod8: i64,
    /// Quadratic residues mod 5.
    pub residues_mod5: Vec<i64>,
    /// Values of `3X² mod 5`.
    pub three_x2_mod5: Vec<i64>,
}

impl ModularConditions {
    pub fn holds(&self) -> bool {
        self.product_mod8 == 1
            && self.sum_mod8 == 4
            && self.residues_mod5 == [0, 1, 4]
            && !self.three_x2_mod5.contains(&1)
            && !self.three_x2_mod5.contains(&4)
    }
}

pub fn modular_conditions() -> ModularConditions {
    let mut residues: Vec<i64> = (0..5).map(|x: i64| (x * x).rem_euclid(5)).collect();
    residues.sort_unstable();
    residues.dedup();
    let mut three: Vec<i64> = residues.iter().map(|r| (3 * r).rem_euclid(5)).collect();
    three.sort_unstable();
    ModularConditions {
        product_mod8: (-3i64 * 5 * 5 * 5).rem_euclid(8),
        sum_mod8: (3i64 - 5 - 5 - 5).rem_euclid(8),
        residues_mod5: residues,
        three_x2_mod5: three,
    }
}

/// `points` angles evenly spread over the open interval `(0, π/2)`.
pub fn phi_grid(points: usize) -> Vec<f64> {
    let step = std::f64::consts::FRAC_PI_2 / points as f64;
    (0..points).map(|i| (i as f64 + 0.5) * step).collect()
}

/// Grid minimum of `|det X(Δs)|` for each angle, from the codeword matrices.
pub fn phi_optimality_scan(phis: &[f64], n_max: i64) -> Vec<(f64, f64)> {
    phis.par_iter()
        .map(|&phi| {
            let code = CodeDef::new54(phi);
            let min = fold_canonical_grid(
                n_max,
                || f64::INFINITY,
                |m, d| m.min(code.encode_int(&d.dx()).det().norm()),
                f64::min,
            );
            (phi, min)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub name: String,
    pub bound: String,
    pub observed: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NvdReport {
    pub n_max: i64,
    pub x_max: i64,
    pub claims: Vec<Claim>,
}

impl NvdReport {
    pub fn all_passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }
}

impl fmt::Display for NvdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "NVD verification (n_max = {}, x_max = {})", self.n_max, self.x_max)?;
        for c in &self.claims {
            writeln!(
                f,
                "[{}] {} | {} | {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.bound,
                c.observed
            )?;
        }
        write!(
            f,
            "result: {}",
            if self.all_passed() { "all claims hold" } else { "FAILED" }
        )
    }
}

/// Runs every check and collects one claim per statement.
pub fn verify_nvd(n_max: i64, x_max: i64) -> NvdReport {
    let phi = default_phi();
    let grid = format!("|n_i| <= {n_max}");
    let mut claims = Vec::new();
    let mut push = |name: &str, bound: &str, observed: String, passed: bool| {
        claims.push(Claim {
            name: name.to_string(),
            bound: bound.to_string(),
            observed,
            passed,
        });
    };

    let ids = grid_identities(n_max, phi);
    push(
        "closed-form determinant matches direct 4x4 determinant",
        &grid,
        format!("{} vectors, max rel err {:.3e}", ids.vectors, ids.max_rel_err),
        ids.max_rel_err <= 1e-9,
    );
    push(
        "four-square identity sum a_i^2 = sigma1*sigma2",
        &grid,
        format!("{} failures", ids.four_square_failures),
        ids.four_square_failures == 0,
    );
    push(
        "discriminant <= 0",
        &grid,
        format!("max discriminant {}", ids.max_discriminant),
        ids.max_discriminant <= 0,
    );
    push(
        "root moduli |lambda| = sigma1/sigma2",
        &grid,
        format!("max rel err {:.3e}", ids.max_root_err),
        ids.max_root_err <= 1e-9,
    );

    let un = bound_case_unequal(n_max);
    push(
        "sigma1 != sigma2: min |det| >= 16",
        &grid,
        format!(
            "min {:.9} at {} (direct {:.9}), {} vectors",
            un.min_det, un.argmin, un.argmin_direct, un.vectors
        ),
        un.min_det >= DET_CEILING - 1e-9 && (un.argmin_direct - un.min_det).abs() < 1e-9,
    );
    push(
        "sigma1 != sigma2: min (sigma2 - sigma1)^2 >= 16",
        &grid,
        format!("min {}", un.min_gap_sq),
        un.min_gap_sq >= 16,
    );
    push(
        "sigma1 != sigma2: |det| >= (sigma2 - sigma1)^2 pointwise",
        &grid,
        format!("{} violations", un.chain_violations),
        un.chain_violations == 0,
    );
    push(
        "sigma1 = 0: min |det| = min sigma2^2 >= 16",
        &grid,
        format!("min {:.9}", un.sigma1_zero_min),
        un.sigma1_zero_min >= DET_CEILING - 1e-9,
    );

    let eq = bound_case_equal(n_max);
    push(
        "sigma1 = sigma2: min |det| > 16",
        &grid,
        format!(
            "min {:.9} at {} (direct min {:.9}), {} vectors",
            eq.min_det, eq.argmin, eq.min_det_direct, eq.vectors
        ),
        eq.min_det > DET_CEILING && eq.min_det_direct > DET_CEILING,
    );
    push(
        "sigma1 = sigma2: |det| = |2 sigma^2 cos(2phi) + b|",
        &grid,
        format!("max rel err {:.3e}", eq.max_reduced_form_err),
        eq.max_reduced_form_err < 1e-9,
    );
    push(
        "sigma1 = sigma2: 5|det| = 64 |3 s~^2 - 5(a~1^2+a~2^2+a~3^2)| >= 128",
        &grid,
        format!(
            "min |3 s~^2 - 5 A~| = {}, max rel err {:.3e}",
            eq.min_diophantine, eq.max_scaling_err
        ),
        eq.min_diophantine >= 2 && eq.max_scaling_err < 1e-9,
    );
    push(
        "sigma1 = sigma2 at cos(2phi) = 0 (report only)",
        &grid,
        format!("min {:.9}", eq.quarter_turn_min),
        true,
    );

    let dio = diophantine_gap(x_max);
    push(
        "3X1^2 - 5(X2^2+X3^2+X4^2) never 0 or +-1, gap >= 2",
        &format!("0 < max|X_i| <= {x_max}"),
        format!(
            "min |value| {} at {:?}, zeros {}, units {}",
            dio.min_abs, dio.argmin, dio.zeros, dio.units
        ),
        dio.holds() && dio.min_abs == 2,
    );

    let modc = modular_conditions();
    push(
        "modular conditions (mod 8 and quadratic residues mod 5)",
        "exact",
        format!(
            "-3*5*5*5 = {} mod 8, 3-5-5-5 = {} mod 8, squares mod 5 {:?}, 3X^2 mod 5 {:?}",
            modc.product_mod8, modc.sum_mod8, modc.residues_mod5, modc.three_x2_mod5
        ),
        modc.holds(),
    );

    let global = min_det(&CodeDef::new54(phi), n_max, None);
    push(
        "global minimum |det| over the grid = 16",
        &grid,
        format!("min {:.9} at delta {:?}", global.value, global.argmin_delta),
        (global.value - DET_CEILING).abs() <= 1e-6,
    );

    NvdReport { n_max, x_max, claims }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(i: usize) -> DeltaVec {
        let mut n = [0; 10];
        n[i] = 1;
        DeltaVec(n)
    }

    #[test]
    fn closed_form_simple_cases() {
        let phi = default_phi();
        let d = unit(0);
        let dec = decompose(&d);
        assert_eq!((dec.sigma1, dec.sigma2, dec.b), (4, 0, 0));
        assert!((det_closed_form(&d, phi) - 16.0).abs() < 1e-12);
        let d = unit(9);
        let dec = decompose(&d);
        assert_eq!((dec.sigma1, dec.sigma2), (0, 4));
        assert!((det_closed_form(&d, phi) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10_000 {
            let d = DeltaVec(std::array::from_fn(|_| rng.random_range(-3..=3)));
            if d.is_zero() {
                continue;
            }
            for phi in [default_phi(), 0.3, 1.1] {
                let (c, x) = (det_closed_form(&d, phi), det_direct(&d, phi));
                assert!((c - x).abs() <= 1e-9 * x.max(1.0), "{d}: {c} vs {x}");
            }
        }
    }

    #[test]
    fn four_square_cases() {
        let mut n = [0; 10];
        n[0] = 1;
        n[6] = 2;
        let d = DeltaVec(n);
        let a = four_square_identity(&d);
        // Δx1 = 2, Δx7 = 4
        assert_eq!(a, [0, 0, 0, 0, 8, 0, 0, 0]);
        assert_eq!(sum_sq(&a), 64);
        assert_eq!(four_square_identity(&DeltaVec([0; 10])), [0; 8]);

        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100_000 {
            let d = DeltaVec(std::array::from_fn(|_| rng.random_range(-50..=50)));
            let (s1, s2) = d.sigmas();
            assert_eq!(sum_sq(&four_square_identity(&d)), s1 * s2);
        }
    }

    proptest::proptest! {
        #[test]
        fn identities_hold_for_any_difference(n in proptest::array::uniform10(-1000i64..=1000)) {
            let d = DeltaVec(n);
            let (s1, s2) = d.sigmas();
            proptest::prop_assert_eq!(sum_sq(&four_square_identity(&d)), s1 * s2);
            proptest::prop_assert!(discriminant_sign(&d) <= 0);
        }
    }

    #[test]
    fn discriminant_cases() {
        assert_eq!(discriminant_from_a(&[1, 0, 0, 0, 0, 0, 0, 0]), 0);
        assert_eq!(discriminant_from_a(&[0, 0, 0, 1, 0, 0, 0, 0]), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100_000 {
            let d = DeltaVec(std::array::from_fn(|_| rng.random_range(-20..=20)));
            assert!(discriminant_sign(&d) <= 0);
        }
    }

    #[test]
    fn root_moduli_are_sigma_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..1000 {
            let d = DeltaVec(std::array::from_fn(|_| rng.random_range(-3..=3)));
            let (s1, s2) = d.sigmas();
            if let Some((l1, l2)) = root_moduli(&d) {
                let want = s1 as f64 / s2 as f64;
                assert!((l1 - want).abs() < 1e-9 * want.max(1.0));
                assert!((l2 - want).abs() < 1e-9 * want.max(1.0));
            } else {
                assert_eq!(s2, 0);
            }
        }
    }

    #[test]
    fn unequal_stratum_small_grid() {
        let r = bound_case_unequal(1);
        assert!(r.holds(), "{r:?}");
        assert!((r.argmin_direct - r.min_det).abs() < 1e-9);
        assert!(r.sigma1_zero_min >= 16.0 - 1e-9);
    }

    #[test]
    fn equal_stratum_small_grid() {
        let mut n = [0; 10];
        n[0] = 1;
        n[6] = 1;
        let d = DeltaVec(n);
        assert_eq!(d.sigmas(), (4, 4));
        assert!(det_closed_form(&d, default_phi()) > 16.0);
        assert!(det_direct(&d, default_phi()) > 16.0);

        let r = bound_case_equal(1);
        assert!(r.holds(), "{r:?}");
        // 96 + 1440 + 5120 + 3840 pairs across shells 1..=4
        assert_eq!(r.vectors, 10_496);
    }

    #[test]
    fn diophantine_values() {
        assert_eq!(diophantine_form([1, 0, 0, 0]), 3);
        assert_eq!(diophantine_form([3, 2, 1, 0]), 2);
        let g = diophantine_gap(10);
        assert!(g.holds());
        assert_eq!(g.min_abs, 2);
    }

    #[test]
    fn modular_facts() {
        let m = modular_conditions();
        assert!(m.holds(), "{m:?}");
        assert_eq!(m.three_x2_mod5, vec![0, 2, 3]);
    }

    #[test]
    fn grid_sizes() {
        let mut count = 0u64;
        let n = fold_canonical_grid(1, || 0u64, |a, _| a + 1, |a, b| a + b);
        count += n;
        assert_eq!(count, canonical_grid_size(1));
        assert_eq!(canonical_grid_size(1), 29_524);
    }

    #[test]
    fn phi_scan_small() {
        let mut phis = vec![0.0, default_phi()];
        phis.extend(phi_grid(8));
        let scan = phi_optimality_scan(&phis, 1);
        assert!(scan[0].1 < 16.0 - 1e-3, "phi = 0 gives {}", scan[0].1);
        assert!((scan[1].1 - 16.0).abs() < 1e-6);
        assert!(scan.iter().all(|&(_, m)| m <= 16.0 + 1e-6));
    }
}
