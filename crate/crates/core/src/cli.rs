//! Command-line front end.
//!
//! Every subcommand prints its main table to stdout. When an output
//! directory is given (`--out-dir`, or the `SLE_WZW_OUT_DIR` environment
//! variable) the same data is also written there as CSV and JSON.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blocks::{kz3c_residual, kz_residual, Block, BlockCase, Couplings};
use crate::conditions::{enumerate_solutions, CSV_HEADER};
use crate::invariant_space::{build_invariant_space, eigen_spectrum_check, InvariantCase};
use crate::sle_sim::{checkpoints_svg, mc_martingale_test, McConfig, McReport};
use crate::verify::{format_table, run_criterion, VerifyOptions, CRITERIA};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_UNRELIABLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;
pub const EXIT_IO: i32 = 74;

pub const OUT_DIR_ENV: &str = "SLE_WZW_OUT_DIR";

/// Largest KZ residual accepted by `blocks` before it reports an internal
/// inconsistency.
pub const KZ_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "sle-wzw", version, about = "SLE martingales for boundary WZW correlators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate exact (kappa, tau, rho) solutions of the null-vector conditions.
    Conditions(ConditionsArgs),
    /// Invariant-subspace coupling matrices and their spectra.
    Tensors(TensorsArgs),
    /// KZ residuals of the closed-form blocks at sampled points.
    Blocks(BlocksArgs),
    /// Monte Carlo martingale test of the one-point observable.
    Simulate(SimulateArgs),
    /// Run the acceptance suite and print a pass/fail table.
    VerifyAll(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory for CSV/JSON/SVG outputs [env: SLE_WZW_OUT_DIR]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Output {
    fn dir(&self) -> Option<PathBuf> {
        self.out_dir.clone().or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
    }
}

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    #[arg(long, default_value_t = 2)]
    pub k_max: i64,
    /// Largest Dynkin-label sum considered (also capped by k).
    #[arg(long, default_value_t = 2)]
    pub label_sum_max: u32,
    /// Print JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct TensorsArgs {
    /// fund-antifund or self-adjoint
    #[arg(long, default_value = "fund-antifund", value_parser = parse_invariant_case)]
    pub case: InvariantCase,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct BlocksArgs {
    /// su2, sun-fund or sun-selfadj
    #[arg(long, value_parser = parse_block_case)]
    pub case: BlockCase,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// su2, sun-fund or sun-selfadj
    #[arg(long, default_value = "su2", value_parser = parse_block_case)]
    pub case: BlockCase,
    /// Rank; defaults to 2 for su2 and 3 (fund) or 4 (selfadj) otherwise.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub k: i64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Gauge coupling; defaults to (4 - kappa)/n.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Run SLE(kappa, rho) with a marked boundary point at `--y`.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub y: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z0_re: f64,
    #[arg(long, default_value_t = 1.0)]
    pub z0_im: f64,
    #[arg(long = "T", default_value_t = 0.05)]
    pub t_final: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub checkpoints: usize,
    /// Negative-control mode: PASS means a violation was detected (z > 5).
    #[arg(long)]
    pub expect_violation: bool,
    /// `key = value` file; its entries override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write an SVG plot of the drift checkpoints.
    #[arg(long)]
    pub svg: bool,
    /// File name stem for the outputs.
    #[arg(long, default_value = "simulate")]
    pub prefix: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Monte Carlo paths for criteria 7 and 8 (the acceptance value is 100000).
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Run only these criteria (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    #[command(flatten)]
    pub output: Output,
}

fn parse_block_case(s: &str) -> std::result::Result<BlockCase, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_invariant_case(s: &str) -> std::result::Result<InvariantCase, String> {
    match s {
        "fund-antifund" => Ok(InvariantCase::FundAntifund),
        "self-adjoint" => Ok(InvariantCase::SelfAdjointFund),
        other => Err(format!(
            "unknown invariant case '{other}' (fund-antifund, self-adjoint)"
        )),
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidRank(_)
            | Error::InvalidLevel(_)
            | Error::LabelLength { .. }
            | Error::UnsupportedWeight { .. }
            | Error::ZeroWeight
            | Error::OddRank(_)
            | Error::SameLeg(_)
            | Error::LegOutOfRange { .. }
            | Error::KappaFree
            | Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(e.to_string())
    }
}

type CliResult = std::result::Result<i32, CliError>;

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Conditions(a) => conditions(&a),
        Command::Tensors(a) => tensors(&a),
        Command::Blocks(a) => blocks(&a),
        Command::Simulate(a) => simulate(&a),
        Command::VerifyAll(a) => verify_all(&a),
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> std::result::Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> std::result::Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::internal(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> std::result::Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Shortest round-trip decimal.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn stdout_bytes(b: &[u8]) {
    print!("{}", String::from_utf8_lossy(b));
}

fn conditions(a: &ConditionsArgs) -> CliResult {
    if a.n_max < 2 || a.k_max < 1 {
        return Err(CliError::usage("need --n-max >= 2 and --k-max >= 1"));
    }
    let sols = enumerate_solutions(a.n_max, a.k_max, a.label_sum_max);
    let rows: Vec<_> = sols.iter().map(crate::conditions::csv_record).collect();
    let csv = csv_bytes(&CSV_HEADER, &rows)?;
    let json = json_bytes(&sols)?;
    stdout_bytes(if a.json { &json } else { &csv });
    if let Some(dir) = a.output.dir() {
        write_file(&dir, "conditions.csv", &csv)?;
        write_file(&dir, "conditions.json", &json)?;
    }
    Ok(EXIT_OK)
}

fn tensors(a: &TensorsArgs) -> CliResult {
    let s = build_invariant_space(a.case, a.n)?;
    let spectrum = eigen_spectrum_check(&s)?;
    let mut rows = Vec::new();
    for (name, m) in [("T01", s.t01), ("T02", s.t02), ("T12", s.t12)] {
        rows.push(vec![
            name.to_string(),
            num(m[(0, 0)]),
            num(m[(0, 1)]),
            num(m[(1, 0)]),
            num(m[(1, 1)]),
        ]);
    }
    let csv = csv_bytes(&["matrix", "m00", "m01", "m10", "m11"], &rows)?;
    #[derive(Serialize)]
    struct Report<'a> {
        case: InvariantCase,
        n: usize,
        space_dim: usize,
        t01: [[f64; 2]; 2],
        t02: [[f64; 2]; 2],
        t12: [[f64; 2]; 2],
        completeness_residual: f64,
        orthonormality_defect: f64,
        spectrum: &'a crate::invariant_space::SpectrumReport,
    }
    let arr = |m: nalgebra::Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
    let report = Report {
        case: a.case,
        n: a.n,
        space_dim: s.space.dim(),
        t01: arr(s.t01),
        t02: arr(s.t02),
        t12: arr(s.t12),
        completeness_residual: s.tfn1_residual(),
        orthonormality_defect: s.orthonormality_defect(),
        spectrum: &spectrum,
    };
    stdout_bytes(&csv);
    println!(
        "# space dimension {}, completeness residual {:e}, spectrum residual {:e}",
        report.space_dim,
        report.completeness_residual,
        spectrum.max_residual()
    );
    if let Some(dir) = a.output.dir() {
        write_file(&dir, "tensors.csv", &csv)?;
        write_file(&dir, "tensors.json", &json_bytes(&report)?)?;
    }
    Ok(EXIT_OK)
}

fn blocks(a: &BlocksArgs) -> CliResult {
    if a.samples == 0 {
        return Err(CliError::usage("--samples must be positive"));
    }
    let block = Block::new(a.case, a.n)?;
    let t = Couplings::closed_form(&block)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..a.samples {
        let r = rng.gen_range(0.2..3.0);
        let th = rng.gen_range(0.15..std::f64::consts::PI - 0.15) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x = C64::from_polar(r, th);
        let r1 = kz_residual(&block, &t, x)?.camax();
        let r3 = kz3c_residual(&block, &t, x)?.camax();
        worst = worst.max(r1).max(r3);
        rows.push(vec![
            a.seed.to_string(),
            i.to_string(),
            num(x.re),
            num(x.im),
            num(r1),
            num(r3),
        ]);
    }
    let csv = csv_bytes(
        &["seed", "sample", "x_re", "x_im", "kz_residual", "kz_infinity_residual"],
        &rows,
    )?;
    stdout_bytes(&csv);
    if let Some(dir) = a.output.dir() {
        write_file(&dir, "blocks.csv", &csv)?;
    }
    if worst >= KZ_TOLERANCE {
        return Err(CliError::internal(format!(
            "KZ residual {worst:e} exceeds {KZ_TOLERANCE:e}"
        )));
    }
    Ok(EXIT_OK)
}

/// Parses a `key = value` config file. Blank lines and `#` comments are
/// ignored.
pub fn parse_config(text: &str) -> std::result::Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("config key '{key}': cannot parse '{v}'")))
}

/// Applies config entries to a simulation config. `tau` given explicitly
/// is returned separately so a config `kappa` can still imply the default τ.
pub fn apply_config(
    cfg: &mut McConfig,
    tau: &mut Option<f64>,
    entries: &[(String, String)],
) -> std::result::Result<(), CliError> {
    for (k, v) in entries {
        match k.as_str() {
            "case" => cfg.case = v.parse().map_err(|e: Error| CliError::usage(e.to_string()))?,
            "n" => cfg.n = parse_value(k, v)?,
            "k" => cfg.k = parse_value(k, v)?,
            "kappa" => cfg.kappa = parse_value(k, v)?,
            "tau" => *tau = Some(parse_value(k, v)?),
            "rho" => cfg.rho = Some(parse_value(k, v)?),
            "y" => cfg.y0 = parse_value(k, v)?,
            "z0_re" => cfg.z0_re = parse_value(k, v)?,
            "z0_im" => cfg.z0_im = parse_value(k, v)?,
            "T" | "t_final" => cfg.t_final = parse_value(k, v)?,
            "dt" => cfg.dt = parse_value(k, v)?,
            "paths" => cfg.paths = parse_value(k, v)?,
            "seed" => cfg.seed = parse_value(k, v)?,
            "checkpoints" => cfg.checkpoints = parse_value(k, v)?,
            "expect_violation" => cfg.expect_violation = parse_value(k, v)?,
            other => return Err(CliError::usage(format!("unknown config key '{other}'"))),
        }
    }
    Ok(())
}

fn default_n(case: BlockCase) -> usize {
    match case {
        BlockCase::Su2Level1 => 2,
        BlockCase::SunFundLevel1 => 3,
        BlockCase::SunSelfAdjLevel1 => 4,
    }
}

/// Builds the simulation config from flags and the optional config file.
pub fn simulation_config(a: &SimulateArgs) -> std::result::Result<McConfig, CliError> {
    let mut cfg = McConfig::new(a.case, a.n.unwrap_or(default_n(a.case)), a.kappa, 0.0);
    cfg.k = a.k;
    cfg.rho = a.rho;
    cfg.y0 = a.y;
    cfg.z0_re = a.z0_re;
    cfg.z0_im = a.z0_im;
    cfg.t_final = a.t_final;
    cfg.dt = a.dt;
    cfg.paths = a.paths;
    cfg.seed = a.seed;
    cfg.checkpoints = a.checkpoints;
    cfg.expect_violation = a.expect_violation;
    let mut tau = a.tau;
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)?;
        let entries = parse_config(&text)?;
        if a.n.is_none() && !entries.iter().any(|(k, _)| k == "n") {
            if let Some((_, v)) = entries.iter().find(|(k, _)| k == "case") {
                let case: BlockCase = v.parse().map_err(|e: Error| CliError::usage(e.to_string()))?;
                cfg.n = default_n(case);
            }
        }
        apply_config(&mut cfg, &mut tau, &entries)?;
    }
    cfg.tau = tau.unwrap_or((4.0 - cfg.kappa) / cfg.n as f64);
    cfg.validate()?;
    Ok(cfg)
}

/// One row per observable component.
pub fn report_rows(r: &McReport) -> Vec<Vec<String>> {
    (0..2)
        .map(|c| {
            vec![
                r.config.seed.to_string(),
                (c + 1).to_string(),
                num(r.m0[c].re),
                num(r.m0[c].im),
                num(r.mean[c].re),
                num(r.mean[c].im),
                num(r.se[c][0]),
                num(r.se[c][1]),
                num(r.z[c][0]),
                num(r.z[c][1]),
                r.paths.to_string(),
                num(r.dt),
                r.discards.to_string(),
                r.verdict.label().to_string(),
            ]
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 14] = [
    "seed",
    "component",
    "m0_re",
    "m0_im",
    "mean_re",
    "mean_im",
    "se_re",
    "se_im",
    "z_re",
    "z_im",
    "paths",
    "dt",
    "discards",
    "verdict",
];

fn simulate(a: &SimulateArgs) -> CliResult {
    let cfg = simulation_config(a)?;
    let report = mc_martingale_test(&cfg)?;
    let csv = csv_bytes(&REPORT_HEADER, &report_rows(&report))?;
    stdout_bytes(&csv);
    println!(
        "# {} n={} kappa={} tau={}{}: max z {:.3}, discards {} -> {}",
        cfg.case.label(),
        cfg.n,
        cfg.kappa,
        cfg.tau,
        cfg.rho.map(|r| format!(" rho={r} y={}", cfg.y0)).unwrap_or_default(),
        report.max_z(),
        report.discards,
        report.verdict.label()
    );
    if let Some(dir) = a.output.dir() {
        write_file(&dir, &format!("{}.csv", a.prefix), &csv)?;
        write_file(&dir, &format!("{}.json", a.prefix), &json_bytes(&report)?)?;
        if a.svg {
            write_file(&dir, &format!("{}.svg", a.prefix), checkpoints_svg(&report).as_bytes())?;
        }
    } else if a.svg {
        return Err(CliError::usage(format!("--svg needs --out-dir or {OUT_DIR_ENV}")));
    }
    Ok(report.verdict.exit_code())
}

fn verify_all(a: &VerifyArgs) -> CliResult {
    if a.paths < 2 {
        return Err(CliError::usage("--paths must be at least 2"));
    }
    let ids: Vec<u8> = if a.only.is_empty() {
        CRITERIA.iter().map(|(i, _)| *i).collect()
    } else {
        a.only.clone()
    };
    let opts = VerifyOptions {
        paths: a.paths,
        seed: a.seed,
    };
    let mut results = Vec::new();
    for id in ids {
        let r = run_criterion(id, &opts)?;
        print!("{}", format_table(std::slice::from_ref(&r)));
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    if let Some(dir) = a.output.dir() {
        #[derive(Serialize)]
        struct Summary<'a> {
            seed: u64,
            paths: usize,
            results: &'a [crate::verify::CriterionResult],
        }
        write_file(
            &dir,
            "verify.json",
            &json_bytes(&Summary {
                seed: a.seed,
                paths: a.paths,
                results: &results,
            })?,
        )?;
    }
    Ok(if passed == results.len() { EXIT_OK } else { EXIT_FAIL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let e = parse_config("# comment\nkappa = 2.5\n\npaths=10 # trailing\n").unwrap();
        assert_eq!(e, vec![("kappa".into(), "2.5".into()), ("paths".into(), "10".into())]);
        assert_eq!(parse_config("kappa 2").unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn config_overrides_and_default_tau() {
        let mut cfg = McConfig::new(BlockCase::Su2Level1, 2, 2.0, 1.0);
        let mut tau = None;
        apply_config(
            &mut cfg,
            &mut tau,
            &[("kappa".into(), "3".into()), ("seed".into(), "11".into())],
        )
        .unwrap();
        assert_eq!((cfg.kappa, cfg.seed, tau), (3.0, 11, None));
        let err = apply_config(&mut cfg, &mut tau, &[("colour".into(), "red".into())]).unwrap_err();
        assert_eq!(err.code, EXIT_USAGE);
    }

    #[test]
    fn usage_errors_map_to_64() {
        assert_eq!(run(["sle-wzw", "nonsense"]), EXIT_USAGE);
        assert_eq!(run(["sle-wzw", "blocks", "--case", "su5"]), EXIT_USAGE);
        assert_eq!(
            run(["sle-wzw", "blocks", "--case", "sun-selfadj", "--n", "3"]),
            EXIT_USAGE
        );
        assert_eq!(CliError::from(Error::BranchLost("x".into())).code, EXIT_INTERNAL);
    }
}
