//! Command-line front end: single scenarios, config files and named preset
//! sweeps, written as CSV or JSON.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::channel::{db_to_linear, linear_to_db, ScenarioConfig};
use crate::error::{Error, Result};
use crate::harness::{sweep, RunOptions, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;

const DEFAULT_DELTA: f64 = 0.1;
const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "fdd-subspace", version, about = "Monte Carlo study of ML subspace and channel-gain estimation for analog-feedback FDD training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario, a config file, or a named preset sweep.
    Run(RunArgs),
    /// List the built-in presets and their parameter grids.
    Presets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Named preset (see `presets`).
    #[arg(long, conflicts_with_all = ["config", "antennas", "tau", "rho_u_db", "rho_d_db", "dl_power", "beta"])]
    pub preset: Option<String>,
    /// Scenario file (JSON if it ends in .json, TOML otherwise).
    #[arg(long, conflicts_with_all = ["antennas", "tau", "rho_u_db", "rho_d_db", "dl_power", "beta"])]
    pub config: Option<PathBuf>,
    /// Number of antennas.
    #[arg(long = "M")]
    pub antennas: Option<usize>,
    /// Pilot length.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Target UL SINR in dB.
    #[arg(long = "rho-u-db", allow_negative_numbers = true)]
    pub rho_u_db: Option<f64>,
    /// DL SINR in dB (with β = 1).
    #[arg(long = "rho-d-db", allow_negative_numbers = true)]
    pub rho_d_db: Option<f64>,
    /// Total DL transmit power, linear. Requires --beta.
    #[arg(long = "P")]
    pub dl_power: Option<f64>,
    /// Channel gain, linear. Requires --P.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Power-iteration stopping threshold in radians [default: 0.1].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// A named parameter grid.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub reproduces: &'static str,
    pub grid: &'static str,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "fig3-ul",
        reproduces: "UL subspace RMSE vs. UL SINR, SVD and power iteration against the CRB",
        grid: "M in {4,16,64}, tau = M, rho_U = -10..20 dB step 2, rho_D = 20 dB, beta = 1, delta = 0.1",
    },
    Preset {
        name: "fig3-dl",
        reproduces: "DL subspace RMSE vs. DL SINR at fixed rho_U = 10 dB",
        grid: "M in {4,16,64}, tau = M, rho_D = 0..40 dB step 2, rho_U = 10 dB, beta = 1, delta = 0.1",
    },
    Preset {
        name: "fig4-iters",
        reproduces: "power-iteration counts (mean, 5th and 95th percentile) vs. M",
        grid: "M in {4,8,16,32,64}, tau = M, rho_U in {0,10} dB, delta in {0.1,0.01}, rho_D = 20 dB, beta = 1",
    },
    Preset {
        name: "fig5-gain",
        reproduces: "relative bias and error variance of the ML and SCM gain estimators vs. beta at Q = 1",
        grid: "beta = -10..20 dB step 2, M in {4,8,16,32}, tau = M, P = 1, rho_U = beta (Q = 1), delta = 0.1",
    },
];

fn db_range(start: i32, stop: i32, step: i32) -> Vec<f64> {
    (start..=stop).step_by(step as usize).map(f64::from).collect()
}

fn scenario(m: usize, beta: f64, p: f64, rho_u: f64, delta: f64, trials: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        antennas: m,
        pilot_len: m,
        dl_power: p,
        channel_gain: beta,
        target_ul_sinr: rho_u,
        stop_threshold: delta,
        trials,
        seed,
    }
}

/// Expands a preset into its scenarios. `delta` overrides the default
/// threshold for presets that do not sweep it.
pub fn preset_configs(name: &str, trials: usize, seed: u64, delta: Option<f64>) -> Result<Vec<ScenarioConfig>> {
    let d = delta.unwrap_or(DEFAULT_DELTA);
    let lin = db_to_linear;
    let mut out = Vec::new();
    match name {
        "fig3-ul" => {
            for m in [4, 16, 64] {
                for rho_u in db_range(-10, 20, 2) {
                    out.push(scenario(m, 1.0, lin(20.0), lin(rho_u), d, trials, seed));
                }
            }
        }
        "fig3-dl" => {
            for m in [4, 16, 64] {
                for rho_d in db_range(0, 40, 2) {
                    out.push(scenario(m, 1.0, lin(rho_d), lin(10.0), d, trials, seed));
                }
            }
        }
        "fig4-iters" => {
            if delta.is_some() {
                return Err(Error::InvalidConfig(
                    "fig4-iters sweeps delta itself; drop --delta".into(),
                ));
            }
            for rho_u in [0.0, 10.0] {
                for dd in [0.1, 0.01] {
                    for m in [4, 8, 16, 32, 64] {
                        out.push(scenario(m, 1.0, lin(20.0), lin(rho_u), dd, trials, seed));
                    }
                }
            }
        }
        "fig5-gain" => {
            for m in [4, 8, 16, 32] {
                for beta_db in db_range(-10, 20, 2) {
                    let beta = lin(beta_db);
                    out.push(scenario(m, beta, 1.0, beta, d, trials, seed));
                }
            }
        }
        other => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            return Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (known: {})",
                known.join(", ")
            )));
        }
    }
    Ok(out)
}

/// One output line: configuration echo, link budget, bounds and statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRow {
    pub scenario: usize,
    pub status: &'static str,
    #[serde(rename = "M")]
    pub antennas: usize,
    pub tau: usize,
    #[serde(rename = "P")]
    pub dl_power: f64,
    pub beta: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub rho_u_db: f64,
    pub rho_d_db: f64,
    pub alpha: f64,
    pub rho_u: f64,
    pub rho_d: f64,
    pub rho_u_post: f64,
    pub rho_d_post: f64,
    pub q: f64,
    pub q_eff: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub rmse_ul_svd: f64,
    pub rmse_ul_svd_se: f64,
    pub rmse_dl_svd: f64,
    pub rmse_dl_svd_se: f64,
    pub rmse_ul_pi: f64,
    pub rmse_ul_pi_se: f64,
    pub rmse_dl_pi: f64,
    pub rmse_dl_pi_se: f64,
    pub crb_ul: f64,
    pub crb_dl: f64,
    pub crb_ul_sqrt: f64,
    pub crb_dl_sqrt: f64,
    pub crb_ul_valid: bool,
    pub crb_dl_valid: bool,
    pub iter_mean: f64,
    pub iter_p5: f64,
    pub iter_p95: f64,
    pub pi_unconverged: usize,
    pub gain_rel_bias_ml: f64,
    pub gain_rel_bias_ml_se: f64,
    pub gain_rel_bias_scm: f64,
    pub gain_rel_bias_scm_se: f64,
    pub gain_rel_var_ml: f64,
    pub gain_rel_var_scm: f64,
    pub ml_overflow_count: usize,
    pub scm_clamped_count: usize,
}

impl OutputRow {
    pub fn new(index: usize, config: &ScenarioConfig, result: &Result<RunSummary>) -> Self {
        let nan = f64::NAN;
        let mut row = OutputRow {
            scenario: index,
            status: "error",
            antennas: config.antennas,
            tau: config.pilot_len,
            dl_power: config.dl_power,
            beta: config.channel_gain,
            delta: config.stop_threshold,
            trials: config.trials,
            seed: config.seed,
            rho_u_db: linear_to_db(config.target_ul_sinr),
            rho_d_db: linear_to_db(config.dl_sinr()),
            alpha: nan,
            rho_u: nan,
            rho_d: nan,
            rho_u_post: nan,
            rho_d_post: nan,
            q: nan,
            q_eff: nan,
            trials_ok: 0,
            trials_failed: config.trials,
            rmse_ul_svd: nan,
            rmse_ul_svd_se: nan,
            rmse_dl_svd: nan,
            rmse_dl_svd_se: nan,
            rmse_ul_pi: nan,
            rmse_ul_pi_se: nan,
            rmse_dl_pi: nan,
            rmse_dl_pi_se: nan,
            crb_ul: nan,
            crb_dl: nan,
            crb_ul_sqrt: nan,
            crb_dl_sqrt: nan,
            crb_ul_valid: false,
            crb_dl_valid: false,
            iter_mean: nan,
            iter_p5: nan,
            iter_p95: nan,
            pi_unconverged: 0,
            gain_rel_bias_ml: nan,
            gain_rel_bias_ml_se: nan,
            gain_rel_bias_scm: nan,
            gain_rel_bias_scm_se: nan,
            gain_rel_var_ml: nan,
            gain_rel_var_scm: nan,
            ml_overflow_count: 0,
            scm_clamped_count: 0,
        };
        if let Ok(s) = result {
            row.status = if s.trials_ok == 0 { "all_failed" } else { "ok" };
            row.alpha = s.alpha;
            row.rho_u = s.sinrs.rho_u;
            row.rho_d = s.sinrs.rho_d;
            row.rho_u_post = s.sinrs.rho_u_post;
            row.rho_d_post = s.sinrs.rho_d_post;
            row.q = s.sinrs.q;
            row.q_eff = s.sinrs.q_eff;
            row.trials_ok = s.trials_ok;
            row.trials_failed = s.trials_failed;
            row.rmse_ul_svd = s.rmse_ul_svd;
            row.rmse_ul_svd_se = s.rmse_ul_svd_se;
            row.rmse_dl_svd = s.rmse_dl_svd;
            row.rmse_dl_svd_se = s.rmse_dl_svd_se;
            row.rmse_ul_pi = s.rmse_ul_pi;
            row.rmse_ul_pi_se = s.rmse_ul_pi_se;
            row.rmse_dl_pi = s.rmse_dl_pi;
            row.rmse_dl_pi_se = s.rmse_dl_pi_se;
            row.crb_ul = s.crb.ul_crb;
            row.crb_dl = s.crb.dl_crb;
            row.crb_ul_sqrt = s.crb_ul_sqrt;
            row.crb_dl_sqrt = s.crb_dl_sqrt;
            row.crb_ul_valid = s.crb.ul_valid;
            row.crb_dl_valid = s.crb.dl_valid;
            row.iter_mean = s.iter_mean;
            row.iter_p5 = s.iter_p5;
            row.iter_p95 = s.iter_p95;
            row.pi_unconverged = s.pi_unconverged;
            row.gain_rel_bias_ml = s.gain_rel_bias_ml;
            row.gain_rel_bias_ml_se = s.gain_rel_bias_ml_se;
            row.gain_rel_bias_scm = s.gain_rel_bias_scm;
            row.gain_rel_bias_scm_se = s.gain_rel_bias_scm_se;
            row.gain_rel_var_ml = s.gain_rel_var_ml;
            row.gain_rel_var_scm = s.gain_rel_var_scm;
            row.ml_overflow_count = s.ml_overflow_count;
            row.scm_clamped_count = s.scm_clamped_count;
        }
        row
    }
}

/// CSV with a header line, LF line endings and shortest round-trip floats.
pub fn to_csv(rows: &[OutputRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn to_json(rows: &[OutputRow]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(rows)
        .map_err(|e| Error::InvalidArgument(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Turns the command-line flags into the list of scenarios to run.
pub fn resolve_scenarios(args: &RunArgs) -> Result<Vec<ScenarioConfig>> {
    let configs = if let Some(name) = &args.preset {
        let seed = args
            .seed
            .ok_or_else(|| Error::InvalidConfig("--seed is required".into()))?;
        preset_configs(name, args.trials.unwrap_or(DEFAULT_TRIALS), seed, args.delta)?
    } else if let Some(path) = &args.config {
        let mut c = ScenarioConfig::from_file(path)?;
        if let Some(t) = args.trials {
            c.trials = t;
        }
        if let Some(s) = args.seed {
            c.seed = s;
        }
        if let Some(d) = args.delta {
            c.stop_threshold = d;
        }
        vec![c]
    } else {
        vec![custom_scenario(args)?]
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

fn custom_scenario(args: &RunArgs) -> Result<ScenarioConfig> {
    let need = |name: &str| Error::InvalidConfig(format!("--{name} is required without --preset or --config"));
    let antennas = args.antennas.ok_or_else(|| need("M"))?;
    let tau = args.tau.ok_or_else(|| need("tau"))?;
    let rho_u_db = args.rho_u_db.ok_or_else(|| need("rho-u-db"))?;
    let trials = args.trials.ok_or_else(|| need("trials"))?;
    let seed = args.seed.ok_or_else(|| need("seed"))?;
    let (beta, p) = match (args.dl_power, args.beta, args.rho_d_db) {
        (Some(p), Some(b), None) => (b, p),
        (Some(_), Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "--rho-d-db must be absent when --P and --beta are given".into(),
            ))
        }
        (None, None, Some(rho_d_db)) => (1.0, db_to_linear(rho_d_db)),
        (None, None, None) => return Err(need("rho-d-db")),
        _ => {
            return Err(Error::InvalidConfig(
                "--P and --beta must be given together".into(),
            ))
        }
    };
    Ok(ScenarioConfig {
        antennas,
        pilot_len: tau,
        dl_power: p,
        channel_gain: beta,
        target_ul_sinr: db_to_linear(rho_u_db),
        stop_threshold: args.delta.unwrap_or(DEFAULT_DELTA),
        trials,
        seed,
    })
}

pub fn presets_text() -> String {
    let mut s = String::new();
    for p in PRESETS {
        let _ = writeln!(s, "{}\n  reproduces: {}\n  grid: {}", p.name, p.reproduces, p.grid);
    }
    s
}

/// Executes a `run` command and returns the exit code.
pub fn cmd_run(args: &RunArgs) -> i32 {
    let configs = match resolve_scenarios(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let opts = RunOptions {
        threads: args.threads,
        ..RunOptions::default()
    };
    let results = sweep(&configs, &opts);
    let rows: Vec<OutputRow> = configs
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(i, (c, r))| OutputRow::new(i, c, r))
        .collect();
    for (i, r) in results.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("scenario {i}: {e}");
        }
    }
    let text = match args.format {
        Format::Csv => to_csv(&rows),
        Format::Json => to_json(&rows),
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let written = match &args.out {
        Some(path) => std::fs::write(path, text.as_bytes()),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return 1;
    }
    if rows.iter().any(|r| r.trials_ok == 0) {
        eprintln!("error: every trial failed in at least one scenario");
        return EXIT_ALL_FAILED;
    }
    EXIT_OK
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Presets => {
            print!("{}", presets_text());
            EXIT_OK
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> RunArgs {
        let mut v = vec!["fdd-subspace", "run"];
        v.extend_from_slice(extra);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Run(a) => a,
            Command::Presets => unreachable!(),
        }
    }

    #[test]
    fn preset_grid_sizes() {
        assert_eq!(preset_configs("fig3-ul", 10, 1, None).unwrap().len(), 48);
        assert_eq!(preset_configs("fig3-dl", 10, 1, None).unwrap().len(), 63);
        assert_eq!(preset_configs("fig4-iters", 10, 1, None).unwrap().len(), 20);
        assert_eq!(preset_configs("fig5-gain", 10, 1, None).unwrap().len(), 64);
        assert!(preset_configs("fig9", 10, 1, None).is_err());
        assert!(preset_configs("fig4-iters", 10, 1, Some(0.2)).is_err());
    }

    #[test]
    fn fig3_dl_fixes_ul_sinr() {
        for c in preset_configs("fig3-dl", 10, 1, None).unwrap() {
            assert!((linear_to_db(c.target_ul_sinr) - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fig5_has_unit_repeater_power() {
        for c in preset_configs("fig5-gain", 10, 1, None).unwrap() {
            let s = crate::channel::compute_sinrs(&c, crate::channel::genie_alpha(&c));
            assert!((s.q - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_scenario_from_db() {
        let a = args(&["--M", "8", "--tau", "8", "--rho-u-db", "-3", "--rho-d-db", "10", "--trials", "5", "--seed", "1"]);
        let c = resolve_scenarios(&a).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].channel_gain, 1.0);
        assert!((c[0].dl_power - 10.0).abs() < 1e-12);
        assert!((linear_to_db(c[0].target_ul_sinr) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn custom_scenario_from_power_and_gain() {
        let a = args(&["--M", "4", "--tau", "4", "--rho-u-db", "0", "--P", "3", "--beta", "2", "--trials", "5", "--seed", "1"]);
        let c = resolve_scenarios(&a).unwrap();
        assert_eq!(c[0].dl_sinr(), 6.0);
    }

    #[test]
    fn flag_combination_errors() {
        let only_p = args(&["--M", "4", "--tau", "4", "--rho-u-db", "0", "--P", "3", "--trials", "5", "--seed", "1"]);
        assert!(resolve_scenarios(&only_p).is_err());
        let both = args(&["--M", "4", "--tau", "4", "--rho-u-db", "0", "--rho-d-db", "3", "--P", "3", "--beta", "1", "--trials", "5", "--seed", "1"]);
        assert!(resolve_scenarios(&both).is_err());
        let short = args(&["--M", "4", "--tau", "2", "--rho-u-db", "0", "--rho-d-db", "3", "--trials", "5", "--seed", "1"]);
        let msg = resolve_scenarios(&short).unwrap_err().to_string();
        assert!(msg.contains("tau"), "{msg}");
        let no_seed = args(&["--preset", "fig3-ul"]);
        assert!(resolve_scenarios(&no_seed).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = preset_configs("fig3-ul", 3, 1, None).unwrap();
        let rows: Vec<OutputRow> = c
            .iter()
            .take(2)
            .enumerate()
            .map(|(i, c)| OutputRow::new(i, c, &Err(Error::ZeroMatrix)))
            .collect();
        let text = to_csv(&rows).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("scenario,status,M,tau,P,beta,"));
        assert!(lines[1].contains(",error,"));
    }
}
