//! Code-quality measurements: minimum determinant, PAPR, worst-case decoding
//! complexity, and the Monte Carlo codeword-error-rate / average-complexity
//! harness.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{real_system, sample_channel, snr_to_noise_var, transmit, ConstellationSpec, RngStream};
use crate::codes::CodeDef;
use crate::detector::{conditional_ml, exhaustive_ml, reduce, sphere_decode, DecodeError, DecodeOutcome, EXHAUSTIVE_LIMIT};
use crate::linalg::LinalgError;

/// Resolution at which determinant values are compared when picking an
/// argmin, so that float noise cannot reorder equal minima.
const DET_QUANTUM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinDetResult {
    /// `min |det X(Δs)|` over the searched grid.
    pub value: f64,
    /// Minimizing difference vector, in PAM units (even integers).
    pub argmin_delta: Vec<i64>,
    /// `n_max` with `Δx_i = 2n_i`, `|n_i| ≤ n_max`.
    pub grid_bound: i64,
    /// Number of squared-norm shells visited.
    pub shells_searched: usize,
    /// `false` when the search stopped early at the requested floor.
    pub exhaustive: bool,
}

impl MinDetResult {
    /// Coding gain `δ = value²`.
    pub fn coding_gain(&self) -> f64 {
        self.value * self.value
    }
}

fn quantize(v: f64) -> i64 {
    (v / DET_QUANTUM).round() as i64
}

type Candidate = (i64, Vec<i64>, f64);

fn better(a: Candidate, b: Candidate) -> Candidate {
    if (a.0, &a.1) <= (b.0, &b.1) {
        a
    } else {
        b
    }
}

/// Visits every vector of `dim` integers in `[-n_max, n_max]` with
/// `Σ n_i² = remaining` whose first nonzero entry is positive.
fn visit_shell(
    cur: &mut Vec<i64>,
    dim: usize,
    n_max: i64,
    remaining: i64,
    sign_fixed: bool,
    f: &mut dyn FnMut(&[i64]),
) {
    let pos = cur.len();
    if pos == dim {
        if remaining == 0 {
            f(cur);
        }
        return;
    }
    let slack = (dim - pos - 1) as i64 * n_max * n_max;
    let lo = if sign_fixed { -n_max } else { 0 };
    for v in lo..=n_max {
        let rest = remaining - v * v;
        if rest < 0 || rest > slack {
            continue;
        }
        cur.push(v);
        visit_shell(cur, dim, n_max, rest, sign_fixed || v != 0, f);
        cur.pop();
    }
}

/// Exhaustive minimum of `|det X(Δs)|` over nonzero `Δs` with
/// `Δx_i = 2n_i`, `|n_i| ≤ n_max`, visiting shells of increasing `Σ n_i²`.
///
/// `Δs` and `−Δs` give the same determinant modulus, so only vectors whose
/// first nonzero entry is positive are evaluated. If `early_exit` is set, the
/// search stops after the first shell whose running minimum is at or below
/// that floor.
pub fn min_det(code: &CodeDef, n_max: i64, early_exit: Option<f64>) -> MinDetResult {
    assert!(code.t() == code.nt(), "determinant needs a square code");
    assert!(n_max >= 1);
    let dim = code.dim();
    let top = dim as i64 * n_max * n_max;
    let mut best: Option<Candidate> = None;
    let mut shells = 0;
    let mut exhaustive = true;
    for shell in 1..=top {
        shells += 1;
        let shell_best = (0..=n_max)
            .into_par_iter()
            .filter_map(|lead| {
                let rest = shell - lead * lead;
                if rest < 0 {
                    return None;
                }
                let mut local: Option<Candidate> = None;
                let mut cur = vec![lead];
                visit_shell(&mut cur, dim, n_max, rest, lead != 0, &mut |n| {
                    let delta: Vec<i64> = n.iter().map(|v| 2 * v).collect();
                    let value = code.encode_int(&delta).det().norm();
                    let cand = (quantize(value), delta, value);
                    local = Some(match local.take() {
                        Some(l) => better(l, cand),
                        None => cand,
                    });
                });
                local
            })
            .reduce_with(better);
        if let Some(sb) = shell_best {
            // earlier shells win ties
            best = Some(match best.take() {
                Some(b) if b.0 <= sb.0 => b,
                _ => sb,
            });
        }
        if let (Some(floor), Some(b)) = (early_exit, &best) {
            if b.2 <= floor + DET_QUANTUM && shell < top {
                exhaustive = false;
                break;
            }
        }
    }
    let (_, argmin_delta, value) = best.expect("grid has nonzero vectors");
    MinDetResult {
        value,
        argmin_delta,
        grid_bound: n_max,
        shells_searched: shells,
        exhaustive,
    }
}

/// `det[(ΔX)ᴴ ΔX]`, the coding gain distance of one difference vector.
pub fn coding_gain_distance(code: &CodeDef, delta: &[i64]) -> f64 {
    let dx = code.encode_int(delta);
    (&dx.adjoint() * &dx).det().re
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaprReport {
    pub m: usize,
    /// PAPR of each transmit antenna, dB.
    pub per_antenna_db: Vec<f64>,
}

impl PaprReport {
    /// Worst antenna; all four coincide for the codes here.
    pub fn db(&self) -> f64 {
        self.per_antenna_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Peak-to-average power ratio per antenna: peak `|X(t,n)|²` over all
/// codewords and time slots, divided by the time-averaged mean power.
///
/// Each entry of `X` depends on a handful of PAM coordinates, so the peak is
/// found by enumerating only those; the mean is exact from the coordinate
/// second moment because coordinates are independent and zero-mean.
pub fn papr(code: &CodeDef, c: &ConstellationSpec) -> PaprReport {
    let ex2 = c.coordinate_energy();
    let axis = c.pam_axis();
    let per_antenna_db = (0..code.nt())
        .map(|n| {
            let mut peak: f64 = 0.0;
            let mut mean = 0.0;
            for t in 0..code.t() {
                let coeffs: Vec<_> = code
                    .weights()
                    .iter()
                    .map(|b| b[(t, n)])
                    .filter(|z| z.norm_sqr() > 0.0)
                    .collect();
                mean += coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() * ex2;
                let combos = axis.len().pow(coeffs.len() as u32);
                for idx in 0..combos {
                    let mut rem = idx;
                    let mut acc = num_complex::Complex64::new(0.0, 0.0);
                    for z in &coeffs {
                        acc += z * axis[rem % axis.len()];
                        rem /= axis.len();
                    }
                    peak = peak.max(acc.norm_sqr());
                }
            }
            mean /= code.t() as f64;
            10.0 * (peak / mean).log10()
        })
        .collect();
    PaprReport {
        m: c.m(),
        per_antenna_db,
    }
}

/// Leaf count an optimal decoder needs in the worst case: the orthogonal
/// coordinates are sliced, the remaining `2K − p` coordinates enumerated, so
/// `√M^(2K−p)`: `1` for the orthogonal design, `M²` for the rate-5/4 code.
pub fn worst_case_count(code: &CodeDef, c: &ConstellationSpec) -> u64 {
    (c.side() as u64).pow((code.dim() - code.orthogonal_prefix()) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Sphere decoder; `slicer_levels` leading levels resolved by slicing.
    Sphere { slicer_levels: usize },
    Conditional,
    Exhaustive,
}

impl Decoder {
    pub fn label(&self) -> String {
        match self {
            Decoder::Sphere { slicer_levels } => format!("sphere(slicer_levels={slicer_levels})"),
            Decoder::Conditional => "conditional".into(),
            Decoder::Exhaustive => "exhaustive".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub code: CodeDef,
    pub nr: usize,
    pub constellation: ConstellationSpec,
    /// SNR points in dB; `f64::INFINITY` means a noiseless channel.
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub max_trials: u64,
    pub target_errors: u64,
    pub decoder: Decoder,
    /// Trials per parallel batch. The stopping rule is checked between
    /// batches, so results depend on this but never on the worker count.
    pub batch_size: u64,
}

impl SimConfig {
    pub fn new(code: CodeDef, constellation: ConstellationSpec) -> Self {
        let slicer_levels = code.orthogonal_prefix();
        Self {
            code,
            nr: 2,
            constellation,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            seed: 1,
            max_trials: 10_000_000,
            target_errors: 100,
            decoder: Decoder::Sphere { slicer_levels },
            batch_size: 4096,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.nr == 0 {
            return bad("nr must be at least 1".into());
        }
        if self.nr * self.code.t() < self.code.k() {
            return bad(format!(
                "Nr*T = {} is smaller than K = {}",
                self.nr * self.code.t(),
                self.code.k()
            ));
        }
        if self.snr_db.is_empty() {
            return bad("no SNR points".into());
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("SNR points must be finite or +inf".into());
        }
        if self.max_trials == 0 || self.batch_size == 0 {
            return bad("max_trials and batch_size must be positive".into());
        }
        match self.decoder {
            Decoder::Sphere { slicer_levels } if slicer_levels > self.code.orthogonal_prefix() => bad(format!(
                "{} has only {} orthogonal levels, cannot slice {slicer_levels}",
                self.code.name(),
                self.code.orthogonal_prefix()
            )),
            Decoder::Exhaustive => {
                let leaves = (self.constellation.side() as u64).checked_pow(self.code.dim() as u32);
                if leaves.is_none_or(|l| l > EXHAUSTIVE_LIMIT) {
                    bad(format!(
                        "exhaustive search over {}^{} leaves is too large",
                        self.constellation.side(),
                        self.code.dim()
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub cer: f64,
    pub avg_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub code: String,
    pub m: usize,
    pub nr: usize,
    pub decoder: String,
    pub seed: u64,
    pub points: Vec<SimPoint>,
}

impl SimReport {
    pub fn snr_points(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.snr_db).collect()
    }

    pub fn cer(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.cer).collect()
    }

    pub fn avg_nodes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.avg_nodes).collect()
    }

    /// `snr_db,trials,errors,cer,avg_nodes`, CER with six significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,trials,errors,cer,avg_nodes\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{:.5e},{:.4}",
                p.snr_db, p.trials, p.errors, p.cer, p.avg_nodes
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn decode(cfg: &SimConfig, sys: &crate::detector::ReducedSystem) -> Result<DecodeOutcome, DecodeError> {
    let c = &cfg.constellation;
    match cfg.decoder {
        Decoder::Sphere { slicer_levels } => sphere_decode(sys, c, slicer_levels),
        Decoder::Conditional => conditional_ml(sys, c, cfg.code.orthogonal_prefix()),
        Decoder::Exhaustive => exhaustive_ml(sys, c),
    }
}

/// One codeword over one channel draw. Returns (codeword error, visited nodes).
fn run_trial(cfg: &SimConfig, noise_var: f64, trial: u64) -> Result<(u64, u64), DecodeError> {
    let code = &cfg.code;
    let mut rng = RngStream::new(cfg.seed, trial);
    loop {
        let ch = sample_channel(code.nt(), cfg.nr, noise_var, &mut rng);
        let s = rng.symbols(&cfg.constellation, code.dim());
        let y = transmit(&code.encode(&s), &ch, &mut rng);
        let (h, yv) = real_system(code, &ch.h, &y);
        let sys = match reduce(&h, &yv) {
            Ok(sys) => sys,
            // degenerate draw: take the next one from the same stream
            Err(DecodeError::Linalg(LinalgError::RankDeficient { .. })) => continue,
            Err(e) => return Err(e),
        };
        let out = decode(cfg, &sys)?;
        return Ok((u64::from(out.s_hat != s), out.nodes_visited));
    }
}

/// Monte Carlo codeword error rate and average sphere-decoder complexity.
///
/// Trial `i` always uses stream `(seed, i)`, at every SNR point, so points
/// share channel, symbol and (unit-variance) noise draws.
pub fn run_cer(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.snr_db.len());
    for &snr in &cfg.snr_db {
        let noise_var = snr_to_noise_var(snr, &cfg.code, &cfg.constellation);
        let (mut trials, mut errors, mut nodes) = (0u64, 0u64, 0u64);
        while trials < cfg.max_trials && errors < cfg.target_errors {
            let end = (trials + cfg.batch_size).min(cfg.max_trials);
            let (e, n) = (trials..end)
                .into_par_iter()
                .map(|t| run_trial(cfg, noise_var, t))
                .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
            errors += e;
            nodes += n;
            trials = end;
        }
        points.push(SimPoint {
            snr_db: snr,
            trials,
            errors,
            cer: errors as f64 / trials as f64,
            avg_nodes: nodes as f64 / trials as f64,
        });
    }
    Ok(SimReport {
        code: cfg.code.name().to_string(),
        m: cfg.constellation.m(),
        nr: cfg.nr,
        decoder: cfg.decoder.label(),
        seed: cfg.seed,
        points,
    })
}
