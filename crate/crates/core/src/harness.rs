//! Seeded Monte Carlo runner.
//!
//! Trial `i` of a scenario draws everything from the substream
//! `(seed, i)`, so a run is fully determined by its configuration no matter
//! how many threads execute it. Statistics are reduced in trial order.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{dl_crb, CrbReport};
use crate::channel::{compute_sinrs, generate_realization_masked, NoiseMask, ScenarioConfig, SinrSet};
use crate::error::{Error, Result};
use crate::gain::{ml_gain_from_context, scm_gain_from_sigma1, LogLikelihoodContext, SearchOptions};
use crate::linalg::{full_svd, RngStream};
use crate::subspace::{default_max_iters, dl_from_svd, power_iteration_rank1, ul_from_svd, SubspacePoint};

/// Per-trial results. Distances are to the true subspaces `[g]` and `[h]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub d_ul_svd: f64,
    pub d_dl_svd: f64,
    pub d_ul_pi: f64,
    pub d_dl_pi: f64,
    pub pi_iterations: usize,
    pub pi_converged: bool,
    pub zeta_true: f64,
    pub zeta_ml: f64,
    pub zeta_scm: f64,
    pub ml_overflow: bool,
    pub scm_clamped: bool,
}

/// Aggregate over the successful trials of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub alpha: f64,
    pub sinrs: SinrSet,
    pub crb: CrbReport,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub rmse_ul_svd: f64,
    pub rmse_dl_svd: f64,
    pub rmse_ul_pi: f64,
    pub rmse_dl_pi: f64,
    /// Bootstrap standard errors of the four RMSEs.
    pub rmse_ul_svd_se: f64,
    pub rmse_dl_svd_se: f64,
    pub rmse_ul_pi_se: f64,
    pub rmse_dl_pi_se: f64,
    pub crb_ul_sqrt: f64,
    pub crb_dl_sqrt: f64,
    pub iter_mean: f64,
    pub iter_p5: f64,
    pub iter_p95: f64,
    pub pi_unconverged: usize,
    /// `E[ζ̂] / (βM) − 1`.
    pub gain_rel_bias_ml: f64,
    pub gain_rel_bias_scm: f64,
    pub gain_rel_bias_ml_se: f64,
    pub gain_rel_bias_scm_se: f64,
    /// `Var[ζ̂ − ζ] / (βM)²`.
    pub gain_rel_var_ml: f64,
    pub gain_rel_var_scm: f64,
    pub ml_overflow_count: usize,
    pub scm_clamped_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    pub noise: NoiseMask,
    /// Power-iteration cap; `None` means `10·M + 100`.
    pub max_iters: Option<usize>,
    pub bootstrap_resamples: usize,
    pub search: SearchOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            noise: NoiseMask::ALL,
            max_iters: None,
            bootstrap_resamples: 200,
            search: SearchOptions::default(),
        }
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<(Vec<TrialRecord>, RunSummary)> {
    run_scenario_with(config, &RunOptions::default())
}

pub fn run_scenario_with(
    config: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<(Vec<TrialRecord>, RunSummary)> {
    config.validate()?;
    let work = || {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|id| run_trial(config, opts, id))
            .collect::<Vec<_>>()
    };
    let outcomes = match opts.threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start thread pool: {e}")))?
            .install(work),
    };
    let trials_failed = outcomes.iter().filter(|o| o.is_err()).count();
    let records: Vec<TrialRecord> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let summary = summarize(config, opts, &records, trials_failed);
    Ok((records, summary))
}

/// Runs each scenario in order; a scenario that cannot run yields an error
/// entry without stopping the others.
pub fn sweep(configs: &[ScenarioConfig], opts: &RunOptions) -> Vec<Result<RunSummary>> {
    configs
        .iter()
        .map(|c| run_scenario_with(c, opts).map(|(_, s)| s))
        .collect()
}

fn run_trial(config: &ScenarioConfig, opts: &RunOptions, trial_id: u64) -> Result<TrialRecord> {
    let mut rng = RngStream::new(config.seed, trial_id);
    let r = generate_realization_masked(config, &mut rng, opts.noise)?;
    let true_ul = SubspacePoint::from_vector(r.g.clone())?;
    let true_dl = SubspacePoint::from_vector(r.h.clone())?;

    let svd = full_svd(&r.y_tilde)?;
    let ul = ul_from_svd(&svd)?;
    let dl = dl_from_svd(&svd)?;
    let max_iters = opts
        .max_iters
        .unwrap_or_else(|| default_max_iters(config.antennas));
    let pi = power_iteration_rank1(&r.y_tilde, config.stop_threshold, max_iters)?;

    let q_eff = compute_sinrs(config, r.alpha).q_eff;
    let sigma_sq = svd.sigma.iter().map(|s| s * s).collect();
    let ctx = LogLikelihoodContext::new(sigma_sq, q_eff)?;
    let ml = ml_gain_from_context(&ctx, &opts.search)?;
    let scm = scm_gain_from_sigma1(svd.sigma[0], r.y_tilde.ncols(), q_eff)?;

    Ok(TrialRecord {
        trial_id,
        d_ul_svd: ul.distance(&true_ul)?,
        d_dl_svd: dl.distance(&true_dl)?,
        d_ul_pi: pi.g_hat.distance(&true_ul)?,
        d_dl_pi: pi.h_hat.distance(&true_dl)?,
        pi_iterations: pi.iterations,
        pi_converged: pi.converged,
        zeta_true: r.g.norm_squared(),
        zeta_ml: ml.zeta_hat,
        zeta_scm: scm.zeta_hat,
        ml_overflow: ml.overflow_flag,
        scm_clamped: scm.clamped,
    })
}

fn rmse(values: &[f64]) -> f64 {
    (values.iter().map(|d| d * d).sum::<f64>() / values.len() as f64).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; NaN below two samples.
fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mu = mean(values);
    values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64
}

/// Nearest-rank percentile of already sorted data.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn bootstrap_se(values: &[f64], resamples: &[Vec<usize>]) -> f64 {
    if resamples.len() < 2 {
        return f64::NAN;
    }
    let stats: Vec<f64> = resamples
        .iter()
        .map(|idx| (idx.iter().map(|&i| values[i] * values[i]).sum::<f64>() / idx.len() as f64).sqrt())
        .collect();
    variance(&stats).sqrt()
}

fn summarize(
    config: &ScenarioConfig,
    opts: &RunOptions,
    records: &[TrialRecord],
    trials_failed: usize,
) -> RunSummary {
    let alpha = crate::channel::genie_alpha(config);
    let sinrs = compute_sinrs(config, alpha);
    let crb = dl_crb(config, &sinrs);
    let n = records.len();

    let col = |f: fn(&TrialRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let d_ul_svd = col(|r| r.d_ul_svd);
    let d_dl_svd = col(|r| r.d_dl_svd);
    let d_ul_pi = col(|r| r.d_ul_pi);
    let d_dl_pi = col(|r| r.d_dl_pi);
    let iters = col(|r| r.pi_iterations as f64);
    let mut sorted_iters = iters.clone();
    sorted_iters.sort_by(f64::total_cmp);

    let mut boot_rng = RngStream::new(config.seed, u64::MAX);
    let resamples: Vec<Vec<usize>> = if n == 0 {
        Vec::new()
    } else {
        (0..opts.bootstrap_resamples)
            .map(|_| (0..n).map(|_| boot_rng.random_range(0..n)).collect())
            .collect()
    };

    let scale = config.channel_gain * config.antennas as f64;
    let err_ml = col(|r| r.zeta_ml - r.zeta_true);
    let err_scm = col(|r| r.zeta_scm - r.zeta_true);
    let est_ml = col(|r| r.zeta_ml);
    let est_scm = col(|r| r.zeta_scm);
    let bias_se = |e: &[f64]| (variance(e) / n as f64).sqrt() / scale;

    RunSummary {
        config: config.clone(),
        alpha,
        sinrs,
        crb,
        trials_ok: n,
        trials_failed,
        rmse_ul_svd: rmse(&d_ul_svd),
        rmse_dl_svd: rmse(&d_dl_svd),
        rmse_ul_pi: rmse(&d_ul_pi),
        rmse_dl_pi: rmse(&d_dl_pi),
        rmse_ul_svd_se: bootstrap_se(&d_ul_svd, &resamples),
        rmse_dl_svd_se: bootstrap_se(&d_dl_svd, &resamples),
        rmse_ul_pi_se: bootstrap_se(&d_ul_pi, &resamples),
        rmse_dl_pi_se: bootstrap_se(&d_dl_pi, &resamples),
        crb_ul_sqrt: crb.ul_crb.sqrt(),
        crb_dl_sqrt: crb.dl_crb.sqrt(),
        iter_mean: mean(&iters),
        iter_p5: percentile_nearest_rank(&sorted_iters, 5.0),
        iter_p95: percentile_nearest_rank(&sorted_iters, 95.0),
        pi_unconverged: records.iter().filter(|r| !r.pi_converged).count(),
        gain_rel_bias_ml: mean(&est_ml) / scale - 1.0,
        gain_rel_bias_scm: mean(&est_scm) / scale - 1.0,
        gain_rel_bias_ml_se: bias_se(&est_ml),
        gain_rel_bias_scm_se: bias_se(&est_scm),
        gain_rel_var_ml: variance(&err_ml) / (scale * scale),
        gain_rel_var_scm: variance(&err_scm) / (scale * scale),
        ml_overflow_count: records.iter().filter(|r| r.ml_overflow).count(),
        scm_clamped_count: records.iter().filter(|r| r.scm_clamped).count(),
    }
}
