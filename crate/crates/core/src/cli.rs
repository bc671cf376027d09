//! Argument parsing and command execution for the `stbc54` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::channel::{real_system, sample_channel, snr_to_noise_var, transmit, ConstellationSpec, RngStream};
use crate::codes::{CodeDef, CodeError};
use crate::detector::{conditional_ml, reduce, sphere_decode, DecodeError};
use crate::metrics::{min_det, papr, run_cer, worst_case_count, ConfigError, Decoder, SimConfig};
use crate::nvdproof::verify_nvd;

/// Constellation sizes accepted on the command line.
pub const SUPPORTED_M: [usize; 3] = [4, 16, 64];

/// Instances decoded by `worst-case`.
const WORST_CASE_INSTANCES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Mindet,
    Papr,
    VerifyNvd,
    WorstCase,
    SliceDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecoderArg {
    /// Sphere decoder slicing the orthogonal levels.
    Sphere,
    /// Sphere decoder without slicing.
    SpherePlain,
    Conditional,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "stbc54", version, about = "Rate-5/4 4x4 space-time block code toolkit")]
struct Args {
    command: Command,
    #[arg(long, default_value = "new54")]
    code: String,
    /// Constellation size (4, 16 or 64). `papr` reports all three if omitted.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 2)]
    nr: usize,
    /// Comma-separated SNR points in dB; `inf` for a noiseless channel.
    #[arg(long, value_delimiter = ',', value_parser = parse_snr, default_value = "0,5,10,15,20")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    n_max: i64,
    #[arg(long, default_value_t = 50)]
    x_max: i64,
    #[arg(long, value_parser = parse_count, default_value = "10000000")]
    max_trials: u64,
    /// Stop an SNR point after this many codeword errors; 0 disables.
    #[arg(long, value_parser = parse_count, default_value = "100")]
    target_errors: u64,
    #[arg(long, value_enum, default_value = "sphere")]
    decoder: DecoderArg,
    /// Stop the minimum-determinant search once this value is reached.
    #[arg(long)]
    early_exit: Option<f64>,
    /// Output file; `.json` selects JSON where available. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; machine parallelism if omitted.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_snr(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        t => match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("`{s}` is not a finite number or `inf`")),
        },
    }
}

/// Nonnegative integer, also accepting integral scientific notation (`1e7`).
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("`{s}` is not a nonnegative integer")),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub code: CodeDef,
    /// `None` only when `--m` was not given.
    pub m: Option<usize>,
    pub nr: usize,
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub n_max: i64,
    pub x_max: i64,
    pub max_trials: u64,
    pub target_errors: u64,
    pub decoder: DecoderArg,
    pub early_exit: Option<f64>,
    pub out_path: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn m(&self) -> usize {
        self.m.unwrap_or(4)
    }

    pub fn constellation(&self) -> ConstellationSpec {
        ConstellationSpec::new(self.m()).expect("validated in parse_args")
    }

    fn decoder(&self) -> Decoder {
        match self.decoder {
            DecoderArg::Sphere => Decoder::Sphere {
                slicer_levels: self.code.orthogonal_prefix(),
            },
            DecoderArg::SpherePlain => Decoder::Sphere { slicer_levels: 0 },
            DecoderArg::Conditional => Decoder::Conditional,
            DecoderArg::Exhaustive => Decoder::Exhaustive,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut sim = SimConfig::new(self.code.clone(), self.constellation());
        sim.nr = self.nr;
        sim.snr_db = self.snr_db.clone();
        sim.seed = self.seed;
        sim.max_trials = self.max_trials;
        sim.target_errors = if self.target_errors == 0 { u64::MAX } else { self.target_errors };
        sim.decoder = self.decoder();
        sim
    }

    fn wants_json(&self) -> bool {
        self.out_path
            .as_ref()
            .and_then(|p| p.extension())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    /// `--help` or `--version`; the text goes to stdout and the exit code is 0.
    #[error("{0}")]
    Info(String),
    #[error("{flag}: {message}")]
    Invalid { flag: String, message: String },
}

impl UsageError {
    fn invalid(flag: &str, message: impl Into<String>) -> Self {
        UsageError::Invalid {
            flag: flag.to_string(),
            message: message.into(),
        }
    }

    pub fn flag(&self) -> Option<&str> {
        match self {
            UsageError::Invalid { flag, .. } => Some(flag),
            UsageError::Info(_) => None,
        }
    }
}

fn from_clap(err: clap::Error) -> UsageError {
    if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        return UsageError::Info(err.render().to_string());
    }
    let flag = match err.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => s.split_whitespace().next().unwrap_or(s).to_string(),
        _ => match err.kind() {
            ErrorKind::MissingSubcommand | ErrorKind::MissingRequiredArgument => "<command>".to_string(),
            _ => "<args>".to_string(),
        },
    };
    let message = err
        .render()
        .to_string()
        .lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string();
    UsageError::Invalid { flag, message }
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let a = Args::try_parse_from(argv).map_err(from_clap)?;
    let code = CodeDef::by_name(&a.code).map_err(|e| UsageError::invalid("--code", e.to_string()))?;
    if let Some(m) = a.m {
        if !SUPPORTED_M.contains(&m) {
            return Err(UsageError::invalid("--m", format!("{m} is not one of 4, 16, 64")));
        }
    }
    if a.nr == 0 {
        return Err(UsageError::invalid("--nr", "must be at least 1"));
    }
    if a.snr.is_empty() {
        return Err(UsageError::invalid("--snr", "no SNR points"));
    }
    if a.n_max < 1 {
        return Err(UsageError::invalid("--n-max", "must be at least 1"));
    }
    if a.x_max < 1 {
        return Err(UsageError::invalid("--x-max", "must be at least 1"));
    }
    if a.max_trials == 0 {
        return Err(UsageError::invalid("--max-trials", "must be positive"));
    }
    if a.workers == Some(0) {
        return Err(UsageError::invalid("--workers", "must be positive"));
    }
    if a.decoder == DecoderArg::Exhaustive && a.command == Command::Simulate && a.m.unwrap_or(4) > 4 {
        return Err(UsageError::invalid("--decoder", "exhaustive search is limited to 4-QAM"));
    }
    Ok(RunConfig {
        command: a.command,
        code,
        m: a.m,
        nr: a.nr,
        snr_db: a.snr,
        seed: a.seed,
        n_max: a.n_max,
        x_max: a.x_max,
        max_trials: a.max_trials,
        target_errors: a.target_errors,
        decoder: a.decoder,
        early_exit: a.early_exit,
        out_path: a.out,
        workers: a.workers,
    })
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Result of one command: the file/stdout body, a one-line summary, and
/// whether every checked assertion held.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub body: String,
    pub summary: String,
    pub passed: bool,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Runs the command, using `--workers` threads when given.
pub fn execute(cfg: &RunConfig) -> Result<Execution, CliError> {
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Execution, CliError> {
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Mindet => Ok(mindet(cfg)),
        Command::Papr => Ok(papr_cmd(cfg)),
        Command::VerifyNvd => Ok(verify(cfg)),
        Command::WorstCase => worst_case(cfg),
        Command::SliceDemo => slice_demo(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Execution, CliError> {
    let report = run_cer(&cfg.sim_config())?;
    let body = if cfg.wants_json() { report.to_json() } else { report.to_csv() };
    let (first, last) = (&report.points[0], report.points.last().expect("nonempty"));
    let summary = format!(
        "simulate {} M={} Nr={} {}: CER {:.3e} at {} dB .. {:.3e} at {} dB",
        report.code, report.m, report.nr, report.decoder, first.cer, first.snr_db, last.cer, last.snr_db
    );
    Ok(Execution {
        body,
        summary,
        passed: true,
    })
}

fn join_ints(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

fn mindet(cfg: &RunConfig) -> Execution {
    let r = min_det(&cfg.code, cfg.n_max, cfg.early_exit);
    let body = if cfg.wants_json() {
        serde_json::to_string_pretty(&r).expect("result serializes")
    } else {
        format!("n_max,min_det,argmin\n{},{:.9},{}\n", r.grid_bound, r.value, join_ints(&r.argmin_delta))
    };
    let summary = format!(
        "mindet {} n_max={}: min |det| = {:.6} (coding gain {:.6}, {} shells{})",
        cfg.code.name(),
        r.grid_bound,
        r.value,
        r.coding_gain(),
        r.shells_searched,
        if r.exhaustive { "" } else { ", stopped early" }
    );
    Execution {
        body,
        summary,
        passed: true,
    }
}

fn papr_cmd(cfg: &RunConfig) -> Execution {
    let sizes: Vec<usize> = cfg.m.map_or(SUPPORTED_M.to_vec(), |m| vec![m]);
    let reports: Vec<_> = sizes
        .iter()
        .map(|&m| papr(&cfg.code, &ConstellationSpec::new(m).expect("supported size")))
        .collect();
    let body = if cfg.wants_json() {
        serde_json::to_string_pretty(&reports).expect("report serializes")
    } else {
        let mut s = String::from("m,papr_db\n");
        for r in &reports {
            let _ = writeln!(s, "{},{:.4}", r.m, r.db());
        }
        s
    };
    let parts: Vec<String> = reports.iter().map(|r| format!("M={}: {:.2} dB", r.m, r.db())).collect();
    Execution {
        body,
        summary: format!("papr {} {}", cfg.code.name(), parts.join(", ")),
        passed: true,
    }
}

fn verify(cfg: &RunConfig) -> Execution {
    let report = verify_nvd(cfg.n_max, cfg.x_max);
    let failed = report.claims.iter().filter(|c| !c.passed).count();
    let body = if cfg.wants_json() {
        serde_json::to_string_pretty(&report).expect("report serializes")
    } else {
        format!("{report}\n")
    };
    Execution {
        body,
        summary: format!(
            "verify-nvd n_max={} x_max={}: {}/{} claims hold",
            cfg.n_max,
            cfg.x_max,
            report.claims.len() - failed,
            report.claims.len()
        ),
        passed: report.all_passed(),
    }
}

fn noise_var(cfg: &RunConfig, snr_db: f64) -> f64 {
    snr_to_noise_var(snr_db, &cfg.code, &cfg.constellation())
}

/// Draws one received block from stream `(seed, stream)` and reduces it.
fn draw_instance(
    cfg: &RunConfig,
    noise_var: f64,
    stream: u64,
) -> Result<(Vec<f64>, crate::detector::ReducedSystem), CliError> {
    let c = cfg.constellation();
    let mut rng = RngStream::new(cfg.seed, stream);
    loop {
        let ch = sample_channel(cfg.code.nt(), cfg.nr, noise_var, &mut rng);
        let s = rng.symbols(&c, cfg.code.dim());
        let y = transmit(&cfg.code.encode(&s), &ch, &mut rng);
        let (h, yv) = real_system(&cfg.code, &ch.h, &y);
        match reduce(&h, &yv) {
            Ok(sys) => return Ok((s, sys)),
            Err(DecodeError::Linalg(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
}

fn worst_case(cfg: &RunConfig) -> Result<Execution, CliError> {
    let c = cfg.constellation();
    let predicted = worst_case_count(&cfg.code, &c);
    let nv = noise_var(cfg, cfg.snr_db[0]);
    let (mut lo, mut hi) = (u64::MAX, 0);
    for i in 0..WORST_CASE_INSTANCES {
        let (_, sys) = draw_instance(cfg, nv, i)?;
        let out = conditional_ml(&sys, &c, cfg.code.orthogonal_prefix())?;
        lo = lo.min(out.leaves_evaluated);
        hi = hi.max(out.leaves_evaluated);
    }
    let passed = lo == predicted && hi == predicted;
    Ok(Execution {
        body: format!(
            "code,m,predicted_leaves,min_leaves,max_leaves,instances\n{},{},{predicted},{lo},{hi},{WORST_CASE_INSTANCES}\n",
            cfg.code.name(),
            c.m()
        ),
        summary: format!(
            "worst-case {} M={}: {} leaves per decode (observed {}..{} over {} draws)",
            cfg.code.name(),
            c.m(),
            predicted,
            lo,
            hi,
            WORST_CASE_INSTANCES
        ),
        passed,
    })
}

/// One instance at the last SNR point, decoded with and without slicing of
/// the orthogonal levels and by conditional ML.
fn slice_demo(cfg: &RunConfig) -> Result<Execution, CliError> {
    let c = cfg.constellation();
    let snr = *cfg.snr_db.last().expect("nonempty");
    let (s, sys) = draw_instance(cfg, noise_var(cfg, snr), 0)?;
    let prefix = cfg.code.orthogonal_prefix();
    let runs = [
        ("sphere_sliced", sphere_decode(&sys, &c, prefix)?),
        ("sphere_plain", sphere_decode(&sys, &c, 0)?),
        ("conditional", conditional_ml(&sys, &c, prefix)?),
    ];
    let mut body = String::from("decoder,nodes_visited,leaves_evaluated,metric,symbol_errors\n");
    for (name, out) in &runs {
        let errs = out.s_hat.iter().zip(&s).filter(|(a, b)| a != b).count();
        let _ = writeln!(
            body,
            "{name},{},{},{:.6e},{errs}",
            out.nodes_visited, out.leaves_evaluated, out.metric
        );
    }
    let agree = runs.iter().all(|(_, o)| o.s_hat == runs[0].1.s_hat);
    Ok(Execution {
        body,
        summary: format!(
            "slice-demo {} M={} at {} dB: {} nodes sliced vs {} plain, decisions {}",
            cfg.code.name(),
            c.m(),
            snr,
            runs[0].1.nodes_visited,
            runs[1].1.nodes_visited,
            if agree { "agree" } else { "DIFFER" }
        ),
        passed: agree,
    })
}

/// Full command-line run: parse, execute, write output. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match parse_args(argv) {
        Ok(cfg) => cfg,
        Err(UsageError::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(e) => {
            eprintln!("usage error: {e}");
            return 2;
        }
    };
    let exec = match execute(&cfg) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match &cfg.out_path {
        Some(path) => {
            if let Err(source) = std::fs::write(path, &exec.body) {
                eprintln!(
                    "error: {}",
                    CliError::Io {
                        path: path.clone(),
                        source
                    }
                );
                return 2;
            }
        }
        None => print!("{}", exec.body),
    }
    println!("{}", exec.summary);
    exec.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, UsageError> {
        parse_args(std::iter::once("stbc54").chain(s.split_whitespace()))
    }

    #[test]
    fn defaults() {
        let cfg = parse("simulate").unwrap();
        assert_eq!(cfg.command, Command::Simulate);
        assert_eq!(cfg.code.name(), "new54");
        assert_eq!(cfg.m(), 4);
        assert_eq!(cfg.nr, 2);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.n_max, 2);
        assert_eq!(cfg.x_max, 50);
        assert_eq!(cfg.target_errors, 100);
        assert_eq!(cfg.max_trials, 10_000_000);
        assert_eq!(cfg.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(cfg.out_path, None);
    }

    #[test]
    fn simulate_flags() {
        let cfg = parse("simulate --code new54 --m 16 --nr 2 --snr 0,5,10,15,20").unwrap();
        assert_eq!(cfg.m(), 16);
        assert_eq!(cfg.snr_db.len(), 5);
        let cfg = parse("simulate --snr 10,inf --max-trials 1e5 --target-errors 0").unwrap();
        assert_eq!(cfg.snr_db, vec![10.0, f64::INFINITY]);
        assert_eq!(cfg.max_trials, 100_000);
        assert_eq!(cfg.sim_config().target_errors, u64::MAX);
    }

    #[test]
    fn mindet_flags() {
        let cfg = parse("mindet --code cod34 --n-max 2").unwrap();
        assert_eq!(cfg.command, Command::Mindet);
        assert_eq!(cfg.code.name(), "cod34");
        assert_eq!(cfg.n_max, 2);
    }

    #[test]
    fn usage_errors_name_the_flag() {
        assert_eq!(parse("simulate --m 5").unwrap_err().flag(), Some("--m"));
        assert_eq!(parse("simulate --m 256").unwrap_err().flag(), Some("--m"));
        assert_eq!(parse("simulate --code foo").unwrap_err().flag(), Some("--code"));
        assert_eq!(parse("simulate --bogus 1").unwrap_err().flag(), Some("--bogus"));
        assert_eq!(parse("simulate --snr 1,x").unwrap_err().flag(), Some("--snr"));
        assert_eq!(parse("simulate --nr 0").unwrap_err().flag(), Some("--nr"));
        assert_eq!(parse("simulate --workers 0").unwrap_err().flag(), Some("--workers"));
        assert!(parse("frobnicate").is_err());
        assert!(matches!(parse("--help"), Err(UsageError::Info(_))));
    }

    #[test]
    fn papr_defaults_to_all_sizes() {
        let exec = execute(&parse("papr").unwrap()).unwrap();
        let lines: Vec<&str> = exec.body.lines().collect();
        assert_eq!(lines[0], "m,papr_db");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("4,3.6"));
        assert!(exec.summary.contains("M=4: 3.6"));
    }

    #[test]
    fn mindet_output() {
        let exec = execute(&parse("mindet --code cod34 --n-max 1").unwrap()).unwrap();
        let lines: Vec<&str> = exec.body.lines().collect();
        assert_eq!(lines[0], "n_max,min_det,argmin");
        assert!(lines[1].starts_with("1,16.000000000,"));
        assert_eq!(lines[1].split(',').nth(2).unwrap().split(';').count(), 6);
    }

    #[test]
    fn worst_case_and_slice_demo() {
        let exec = execute(&parse("worst-case --m 16").unwrap()).unwrap();
        assert!(exec.passed);
        assert!(exec.body.contains("new54,16,256,256,256,100"));
        let exec = execute(&parse("worst-case --code cod34").unwrap()).unwrap();
        assert!(exec.body.contains("cod34,4,1,1,1,100"));
        let exec = execute(&parse("slice-demo --snr 20").unwrap()).unwrap();
        assert!(exec.passed);
        assert_eq!(exec.body.lines().count(), 4);
    }

    fn run_str(s: &str) -> i32 {
        run(std::iter::once("stbc54").chain(s.split_whitespace()))
    }

    #[test]
    fn run_writes_outputs_and_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("papr.csv");
        assert_eq!(run_str(&format!("papr --m 16 --out {}", csv.display())), 0);
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().next(), Some("m,papr_db"));

        let json = dir.path().join("sim.json");
        assert_eq!(
            run_str(&format!("simulate --snr 10 --max-trials 500 --out {}", json.display())),
            0
        );
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(v["points"][0]["trials"], 500);

        let report = dir.path().join("nvd.txt");
        assert_eq!(run_str(&format!("verify-nvd --n-max 1 --x-max 5 --out {}", report.display())), 0);
        assert!(std::fs::read_to_string(&report).unwrap().contains("all claims hold"));

        assert_eq!(run_str("simulate --m 5"), 2);
        assert_eq!(run_str("simulate --decoder exhaustive --m 16"), 2);
        let missing = dir.path().join("no/such/dir/out.csv");
        assert_eq!(run_str(&format!("papr --out {}", missing.display())), 2);
    }

    #[test]
    fn simulate_is_worker_independent() {
        let a = execute(&parse("simulate --snr 0,10 --max-trials 3000 --workers 1").unwrap()).unwrap();
        let b = execute(&parse("simulate --snr 0,10 --max-trials 3000 --workers 3").unwrap()).unwrap();
        assert_eq!(a.body, b.body);
        assert!(a.body.starts_with("snr_db,trials,errors,cer,avg_nodes\n"));
    }
}
