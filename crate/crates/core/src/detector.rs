//! Maximum-likelihood detection over the triangularized real model
//! `‖y′ − R s‖²`.
//!
//! Three decoders share one depth-first engine:
//!
//! * [`exhaustive_ml`] visits the whole tree (the reference oracle);
//! * [`conditional_ml`] enumerates the non-orthogonal symbols and slices the
//!   orthogonal ones, with no pruning, so its leaf count is exactly
//!   `√M^(2K − sliced)` (`M²` for the rate-5/4 code);
//! * [`sphere_decode`] is the infinite-initial-radius Schnorr-Euchner
//!   depth-first search, optionally slicing the bottom levels.
//!
//! Row `i` of `R` only involves `x_i … x_{2K}`, so the tree is walked from the
//! last coordinate down to the first. The sliced levels are the leading
//! coordinates, whose columns in `R` must be mutually orthogonal.
//!
//! Counting convention: every partial assignment whose partial metric gets
//! computed is a visited node, pruned ones included; a leaf is a complete
//! assignment whose metric reached the final comparison.
//!
//! Ties: two metrics within [`TIE_EPS`] are treated as equal and the
//! lexicographically smaller PAM vector wins, in every decoder.

use std::cmp::Ordering;

use thiserror::Error;

use crate::channel::ConstellationSpec;
use crate::linalg::{thin_qr, LinalgError, RealMat};

/// Absolute slack under which two metrics count as tied.
pub const TIE_EPS: f64 = 1e-9;

/// Magnitude above which an entry breaks the orthogonal block of `R`.
pub const PATTERN_TOL: f64 = 1e-9;

/// Largest tree `exhaustive_ml` agrees to enumerate, in leaves.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("R[{row}][{col}] = {value:e} breaks the orthogonal block structure")]
    PatternViolation { row: usize, col: usize, value: f64 },
    #[error("exhaustive search over {leaves} leaves exceeds the limit of {limit}")]
    TooLarge { leaves: u64, limit: u64 },
    #[error("cannot slice {sliced} levels of a {dim}-level tree")]
    SlicedLevels { sliced: usize, dim: usize },
}

/// `R` and `y′ = Q₁ᵀ y̌` after QR reduction.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub r: RealMat,
    pub y: Vec<f64>,
}

impl ReducedSystem {
    pub fn dim(&self) -> usize {
        self.r.cols()
    }

    /// `‖y′ − R s‖²`
    pub fn metric(&self, s: &[f64]) -> f64 {
        self.r
            .mul_vec(s)
            .iter()
            .zip(&self.y)
            .map(|(a, b)| (b - a).powi(2))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub s_hat: Vec<f64>,
    pub metric: f64,
    pub nodes_visited: u64,
    pub leaves_evaluated: u64,
}

/// Thin-QR reduction of the real model.
pub fn reduce(h: &RealMat, y: &[f64]) -> Result<ReducedSystem, DecodeError> {
    let (q1, r) = thin_qr(h)?;
    Ok(ReducedSystem {
        y: q1.tr_mul_vec(y),
        r,
    })
}

/// Checks that the leading `sliced × sliced` block of `r` is diagonal.
pub fn check_pattern(r: &RealMat, sliced: usize) -> Result<(), DecodeError> {
    for row in 0..sliced {
        for col in row + 1..sliced {
            let value = r[(row, col)];
            if value.abs() > PATTERN_TOL {
                return Err(DecodeError::PatternViolation { row, col, value });
            }
        }
    }
    Ok(())
}

/// Nearest PAM point to `z / r_diag`:
/// `sign(u)·min(|2·round((u − 1)/2) + 1|, √M − 1)` with `u = z / r_diag`.
///
/// A fixed handful of arithmetic operations, whatever the constellation size.
pub fn pam_slice(z: f64, r_diag: f64, c: &ConstellationSpec) -> f64 {
    let u = z / r_diag;
    let level = (2.0 * ((u - 1.0) / 2.0).round() + 1.0).abs().min(c.max_level());
    if u >= 0.0 {
        level
    } else {
        -level
    }
}

/// Schnorr-Euchner order over a finite PAM axis: start at the nearest point
/// and alternate sides around `center`, so distances never decrease. When one
/// side runs out the other is continued alone.
#[derive(Debug, Clone)]
pub struct ZigZag {
    center: f64,
    max: f64,
    next_up: f64,
    next_down: f64,
    started: bool,
    first: f64,
}

impl ZigZag {
    pub fn new(center: f64, first: f64, max: f64) -> Self {
        Self {
            center,
            max,
            next_up: first + 2.0,
            next_down: first - 2.0,
            started: false,
            first,
        }
    }
}

impl Iterator for ZigZag {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if !self.started {
            self.started = true;
            return Some(self.first);
        }
        let up_ok = self.next_up <= self.max;
        let down_ok = self.next_down >= -self.max;
        let take_up = match (up_ok, down_ok) {
            (false, false) => return None,
            (true, false) => true,
            (false, true) => false,
            (true, true) => (self.next_up - self.center).abs() < (self.center - self.next_down).abs(),
        };
        if take_up {
            self.next_up += 2.0;
            Some(self.next_up - 2.0)
        } else {
            self.next_down -= 2.0;
            Some(self.next_down + 2.0)
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

struct Search<'a> {
    sys: &'a ReducedSystem,
    c: &'a ConstellationSpec,
    sliced: usize,
    prune: bool,
    cur: Vec<f64>,
    best: Vec<f64>,
    best_metric: f64,
    nodes: u64,
    leaves: u64,
}

impl<'a> Search<'a> {
    fn new(sys: &'a ReducedSystem, c: &'a ConstellationSpec, sliced: usize, prune: bool) -> Self {
        let dim = sys.dim();
        Self {
            sys,
            c,
            sliced,
            prune,
            cur: vec![0.0; dim],
            best: Vec::new(),
            best_metric: f64::INFINITY,
            nodes: 0,
            leaves: 0,
        }
    }

    fn pruned(&self, partial: f64) -> bool {
        self.prune && partial > self.best_metric + TIE_EPS
    }

    /// `y′_i − Σ_{j>i} r_ij x_j`
    fn residual(&self, i: usize) -> f64 {
        let r = &self.sys.r;
        let mut z = self.sys.y[i];
        for j in i + 1..self.cur.len() {
            z -= r[(i, j)] * self.cur[j];
        }
        z
    }

    fn run(mut self) -> DecodeOutcome {
        let dim = self.cur.len();
        if self.sliced == dim {
            self.slice_down(0.0);
        } else {
            self.visit(dim - 1, 0.0);
        }
        DecodeOutcome {
            s_hat: self.best,
            metric: self.best_metric,
            nodes_visited: self.nodes,
            leaves_evaluated: self.leaves,
        }
    }

    fn visit(&mut self, i: usize, partial: f64) {
        let z = self.residual(i);
        let rii = self.sys.r[(i, i)];
        let first = pam_slice(z, rii, self.c);
        for x in ZigZag::new(z / rii, first, self.c.max_level()) {
            let d = z - rii * x;
            let p = partial + d * d;
            self.nodes += 1;
            if self.pruned(p) {
                // later siblings are farther from the center
                break;
            }
            self.cur[i] = x;
            if i == 0 {
                self.leaf(p);
            } else if i == self.sliced {
                self.slice_down(p);
            } else {
                self.visit(i - 1, p);
            }
        }
    }

    /// Resolves levels `sliced-1 … 0` by slicing, one node per level.
    fn slice_down(&mut self, mut partial: f64) {
        for i in (0..self.sliced).rev() {
            let z = self.residual(i);
            let rii = self.sys.r[(i, i)];
            let x = pam_slice(z, rii, self.c);
            let d = z - rii * x;
            partial += d * d;
            self.nodes += 1;
            if self.pruned(partial) {
                return;
            }
            self.cur[i] = x;
        }
        self.leaf(partial);
    }

    fn leaf(&mut self, metric: f64) {
        self.leaves += 1;
        let better = if metric < self.best_metric - TIE_EPS {
            true
        } else if metric <= self.best_metric + TIE_EPS {
            lex_cmp(&self.cur, &self.best) == Ordering::Less
        } else {
            false
        };
        if better {
            self.best_metric = metric;
            self.best.clone_from(&self.cur);
        }
    }
}

/// Conditional ML: every assignment of the non-orthogonal coordinates
/// `x_{sliced+1} … x_{2K}`, with the orthogonal ones sliced given each.
pub fn conditional_ml(
    sys: &ReducedSystem,
    c: &ConstellationSpec,
    sliced: usize,
) -> Result<DecodeOutcome, DecodeError> {
    if sliced > sys.dim() {
        return Err(DecodeError::SlicedLevels { sliced, dim: sys.dim() });
    }
    check_pattern(&sys.r, sliced)?;
    Ok(Search::new(sys, c, sliced, false).run())
}

/// Depth-first sphere decoder with infinite initial radius and
/// Schnorr-Euchner child order. The radius shrinks at every improving leaf.
///
/// `slicer_levels = 0` is the plain decoder; a positive value resolves the
/// leading `slicer_levels` coordinates by slicing once the rest are fixed,
/// which requires the corresponding block of `R` to be diagonal.
pub fn sphere_decode(
    sys: &ReducedSystem,
    c: &ConstellationSpec,
    slicer_levels: usize,
) -> Result<DecodeOutcome, DecodeError> {
    if slicer_levels > sys.dim() {
        return Err(DecodeError::SlicedLevels {
            sliced: slicer_levels,
            dim: sys.dim(),
        });
    }
    check_pattern(&sys.r, slicer_levels)?;
    Ok(Search::new(sys, c, slicer_levels, true).run())
}

/// Brute-force ML over all `M^K` codewords.
pub fn exhaustive_ml(sys: &ReducedSystem, c: &ConstellationSpec) -> Result<DecodeOutcome, DecodeError> {
    let leaves = (c.side() as u64)
        .checked_pow(sys.dim() as u32)
        .unwrap_or(u64::MAX);
    if leaves > EXHAUSTIVE_LIMIT {
        return Err(DecodeError::TooLarge {
            leaves,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    Ok(Search::new(sys, c, 0, false).run())
}

/// Minimum visited-node count of the pruned sphere decoder when the first
/// descent already lands on the ML leaf: one node per level on the way down,
/// plus one rejected sibling at every enumerated level.
pub fn sphere_node_floor(dim: usize, slicer_levels: usize, c: &ConstellationSpec) -> u64 {
    let enumerated = (dim - slicer_levels) as u64;
    let siblings = if c.side() > 1 { enumerated } else { 0 };
    dim as u64 + siblings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{real_system, sample_channel, transmit, ConstellationSpec, RngStream};
    use crate::codes::CodeDef;

    fn brute_slice(z: f64, r: f64, c: &ConstellationSpec) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for &x in c.pam_axis() {
            let d = (z - r * x).powi(2);
            if d < best.0 {
                best = (d, x);
            }
        }
        best.1
    }

    proptest::proptest! {
        #[test]
        fn slicer_is_nearest_point(z in -80.0f64..80.0, r in 0.01f64..10.0, k in 1u32..4) {
            let c = ConstellationSpec::new(4usize.pow(k)).unwrap();
            proptest::prop_assert_eq!(pam_slice(z, r, &c), brute_slice(z, r, &c));
        }
    }

    #[test]
    fn slicer_examples() {
        let c4 = ConstellationSpec::new(4).unwrap();
        let c16 = ConstellationSpec::new(16).unwrap();
        let c64 = ConstellationSpec::new(64).unwrap();
        assert_eq!(brute_slice(0.3, 1.0, &c4), 1.0);
        assert_eq!(pam_slice(0.3, 1.0, &c4), 1.0);
        assert_eq!(brute_slice(-5.2, 1.0, &c16), -3.0);
        assert_eq!(pam_slice(-5.2, 1.0, &c16), -3.0);
        assert_eq!(pam_slice(100.0, 1.0, &c64), 7.0);
        assert_eq!(pam_slice(-100.0, 2.5, &c64), -7.0);
        assert_eq!(pam_slice(2.2 * 0.4, 0.4, &c16), 3.0);
        // zero goes to the nonnegative side
        assert_eq!(pam_slice(0.0, 1.0, &c16), 1.0);
    }

    #[test]
    fn zigzag_visits_axis_in_distance_order() {
        let c = ConstellationSpec::new(64).unwrap();
        for center in [-9.3, -6.9, -2.2, -0.1, 0.0, 0.7, 3.99, 4.01, 8.5] {
            let first = pam_slice(center, 1.0, &c);
            let order: Vec<f64> = ZigZag::new(center, first, c.max_level()).collect();
            assert_eq!(order.len(), 8, "center {center}: {order:?}");
            let mut sorted = order.clone();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(sorted, c.pam_axis());
            for w in order.windows(2) {
                assert!((w[0] - center).abs() <= (w[1] - center).abs() + 1e-12, "{order:?}");
            }
        }
    }

    #[test]
    fn reduce_identity_is_noop() {
        let y = vec![0.5, -1.0, 2.0];
        let sys = reduce(&RealMat::identity(3), &y).unwrap();
        assert_eq!(sys.r, RealMat::identity(3));
        assert_eq!(sys.y, y);
    }

    fn noisy_system(code: &CodeDef, c: &ConstellationSpec, n0: f64, seed: u64, id: u64) -> (ReducedSystem, Vec<f64>, RealMat, Vec<f64>) {
        let mut rng = RngStream::new(seed, id);
        let ch = sample_channel(code.nt(), 2, n0, &mut rng);
        let s = rng.symbols(c, code.dim());
        let y = transmit(&code.encode(&s), &ch, &mut rng);
        let (hr, yr) = real_system(code, &ch.h, &y);
        (reduce(&hr, &yr).unwrap(), s, hr, yr)
    }

    #[test]
    fn reduction_preserves_metric_differences() {
        let code = CodeDef::by_name("new54").unwrap();
        let c = ConstellationSpec::new(16).unwrap();
        for id in 0..20 {
            let (sys, _, hr, yr) = noisy_system(&code, &c, 1.0, 21, id);
            let mut rng = RngStream::new(99, id);
            let full = |s: &[f64]| -> f64 {
                hr.mul_vec(s).iter().zip(&yr).map(|(a, b)| (a - b).powi(2)).sum()
            };
            let offsets: Vec<f64> = (0..2)
                .map(|_| {
                    let s = rng.symbols(&c, 10);
                    full(&s) - sys.metric(&s)
                })
                .collect();
            assert!((offsets[0] - offsets[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn r_structure_per_code() {
        let cod = CodeDef::by_name("cod34").unwrap();
        let new = CodeDef::by_name("new54").unwrap();
        let c = ConstellationSpec::new(4).unwrap();
        for id in 0..20 {
            let (sys, ..) = noisy_system(&cod, &c, 0.1, 22, id);
            for i in 0..6 {
                for j in 0..6 {
                    if i != j {
                        assert!(sys.r[(i, j)].abs() <= 1e-10);
                    }
                }
            }
            let (sys, ..) = noisy_system(&new, &c, 0.1, 22, id);
            assert!(check_pattern(&sys.r, 6).is_ok());
            // the enumerated block is genuinely coupled
            assert!(sys.r[(0, 6)].abs() + sys.r[(0, 7)].abs() + sys.r[(6, 7)].abs() > 1e-6);
        }
    }

    #[test]
    fn noiseless_decoders_recover_symbols() {
        let code = CodeDef::by_name("new54").unwrap();
        for m in [4, 16] {
            let c = ConstellationSpec::new(m).unwrap();
            for id in 0..10 {
                let (sys, s, ..) = noisy_system(&code, &c, 0.0, 23, id);
                let outs = [
                    conditional_ml(&sys, &c, 6).unwrap(),
                    sphere_decode(&sys, &c, 0).unwrap(),
                    sphere_decode(&sys, &c, 6).unwrap(),
                ];
                for out in &outs {
                    assert_eq!(out.s_hat, s);
                    assert!(out.metric <= 1e-18);
                }
                if m == 4 {
                    let ex = exhaustive_ml(&sys, &c).unwrap();
                    assert_eq!(ex.s_hat, s);
                    assert_eq!(ex.leaves_evaluated, 1024);
                }
            }
        }
    }

    #[test]
    fn conditional_leaf_count_is_m_squared() {
        let code = CodeDef::by_name("new54").unwrap();
        for (m, leaves) in [(4, 16), (16, 256)] {
            let c = ConstellationSpec::new(m).unwrap();
            for id in 0..5 {
                let (sys, ..) = noisy_system(&code, &c, 3.0, 24, id);
                assert_eq!(conditional_ml(&sys, &c, 6).unwrap().leaves_evaluated, leaves);
            }
        }
        // everything sliced: one leaf
        let cod = CodeDef::by_name("cod34").unwrap();
        let c = ConstellationSpec::new(16).unwrap();
        let (sys, ..) = noisy_system(&cod, &c, 3.0, 24, 0);
        assert_eq!(conditional_ml(&sys, &c, 6).unwrap().leaves_evaluated, 1);
    }

    #[test]
    fn decoders_agree_with_exhaustive_on_noisy_instances() {
        let code = CodeDef::by_name("new54").unwrap();
        let c = ConstellationSpec::new(4).unwrap();
        for id in 0..200 {
            let (sys, _, hr, yr) = noisy_system(&code, &c, 4.0, 25, id);
            let ex = exhaustive_ml(&sys, &c).unwrap();
            let unreduced: f64 = hr.mul_vec(&ex.s_hat).iter().zip(&yr).map(|(a, b)| (a - b).powi(2)).sum();
            let q_perp = yr.iter().map(|v| v * v).sum::<f64>() - sys.y.iter().map(|v| v * v).sum::<f64>();
            assert!((unreduced - (ex.metric + q_perp)).abs() < 1e-9);
            for out in [
                conditional_ml(&sys, &c, 6).unwrap(),
                sphere_decode(&sys, &c, 0).unwrap(),
                sphere_decode(&sys, &c, 6).unwrap(),
            ] {
                assert_eq!(out.s_hat, ex.s_hat, "instance {id}");
                assert!((out.metric - ex.metric).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pattern_violation_is_reported() {
        let mut r = RealMat::identity(10);
        r[(2, 4)] = 0.1;
        let sys = ReducedSystem { r, y: vec![0.0; 10] };
        let c = ConstellationSpec::new(4).unwrap();
        assert!(matches!(
            conditional_ml(&sys, &c, 6),
            Err(DecodeError::PatternViolation { row: 2, col: 4, .. })
        ));
        assert!(matches!(sphere_decode(&sys, &c, 6), Err(DecodeError::PatternViolation { .. })));
        assert!(sphere_decode(&sys, &c, 0).is_ok());
        assert!(matches!(sphere_decode(&sys, &c, 11), Err(DecodeError::SlicedLevels { .. })));
    }

    #[test]
    fn exhaustive_guard() {
        let sys = ReducedSystem {
            r: RealMat::identity(10),
            y: vec![0.0; 10],
        };
        let c64 = ConstellationSpec::new(64).unwrap();
        assert!(matches!(exhaustive_ml(&sys, &c64), Err(DecodeError::TooLarge { .. })));
        // 16-QAM with K = 5 sits exactly on the limit
        let c16 = ConstellationSpec::new(16).unwrap();
        let out = exhaustive_ml(&sys, &c16).unwrap();
        assert_eq!(out.leaves_evaluated, 1 << 20);
    }

    #[test]
    fn exact_ties_resolve_lexicographically() {
        // y = 0 and R = I: every coordinate ties between -1 and +1
        let sys = ReducedSystem {
            r: RealMat::identity(3),
            y: vec![0.0; 3],
        };
        let c = ConstellationSpec::new(4).unwrap();
        let ex = exhaustive_ml(&sys, &c).unwrap();
        assert_eq!(ex.s_hat, vec![-1.0, -1.0, -1.0]);
        assert_eq!(sphere_decode(&sys, &c, 0).unwrap().s_hat, ex.s_hat);
    }

    #[test]
    fn sphere_first_descent_reaches_a_leaf() {
        let code = CodeDef::by_name("new54").unwrap();
        let c = ConstellationSpec::new(16).unwrap();
        for id in 0..50 {
            let (sys, ..) = noisy_system(&code, &c, 50.0, 26, id);
            for levels in [0, 6] {
                let out = sphere_decode(&sys, &c, levels).unwrap();
                assert!(out.leaves_evaluated >= 1);
                assert!(out.nodes_visited >= 10);
            }
        }
    }
}
