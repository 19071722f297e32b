//! Intrinsic Cramér-Rao bounds (in rad²) for the UL and DL subspace
//! estimators on `G₁(ℂ^M)`.

use serde::Serialize;

use crate::channel::{ScenarioConfig, SinrSet};
use crate::error::{Error, Result};

/// Parameters of the inverse Fisher information on `G₁(ℂ^M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimParams {
    pub antennas: usize,
    /// Number of i.i.d. observations.
    pub observations: usize,
    /// Effective SINR, linear.
    pub sinr: f64,
}

/// `(M−1)(1+γ) / (Tγ²)`.
pub fn inverse_fim(p: FimParams) -> Result<f64> {
    if p.antennas < 2 {
        return Err(Error::InvalidArgument(format!(
            "the bound needs M >= 2, got {}",
            p.antennas
        )));
    }
    if p.observations < 1 {
        return Err(Error::InvalidArgument("the bound needs T >= 1".into()));
    }
    if !(p.sinr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "effective SINR must be > 0, got {}",
            p.sinr
        )));
    }
    let m = p.antennas as f64;
    let t = p.observations as f64;
    Ok((m - 1.0) * (1.0 + p.sinr) / (t * p.sinr * p.sinr))
}

/// Averaged UL bound: `M` observations at effective SINR `M·ρ̃_U`.
pub fn ul_crb(config: &ScenarioConfig, sinrs: &SinrSet) -> f64 {
    let m = config.antennas;
    inverse_fim(FimParams {
        antennas: m,
        observations: m,
        sinr: m as f64 * sinrs.rho_u_post,
    })
    .expect("validated scenario")
}

/// Bounds for one scenario. The DL bound is the sum of a DL-perturbation
/// term (one observation at `M·ρ̃_D`) and the UL bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrbReport {
    pub ul_crb: f64,
    pub dl_crb: f64,
    pub dl_component_dl: f64,
    pub dl_component_ul: f64,
    pub ul_valid: bool,
    pub dl_valid: bool,
}

pub fn dl_crb(config: &ScenarioConfig, sinrs: &SinrSet) -> CrbReport {
    let m = config.antennas;
    let ul = ul_crb(config, sinrs);
    let dl_part = inverse_fim(FimParams {
        antennas: m,
        observations: 1,
        sinr: m as f64 * sinrs.rho_d_post,
    })
    .expect("validated scenario");
    let (ul_valid, dl_valid) = crb_validity(config, sinrs);
    CrbReport {
        ul_crb: ul,
        dl_crb: dl_part + ul,
        dl_component_dl: dl_part,
        dl_component_ul: ul,
        ul_valid,
        dl_valid,
    }
}

/// Range in which the bounds are tight enough to compare against: the UL
/// bound needs `ρ_U > 1`, the DL bound additionally `ρ_D > M`.
pub fn crb_validity(config: &ScenarioConfig, sinrs: &SinrSet) -> (bool, bool) {
    let ul = sinrs.rho_u > 1.0;
    (ul, ul && sinrs.rho_d > config.antennas as f64)
}

/// UL bound for one realization with known gain `ζ = ‖g‖²`, effective SINR
/// `(ζ/β)·ρ̃_U`. Averaging this over `ζ` is bounded below by [`ul_crb`].
pub fn ul_crb_given_gain(config: &ScenarioConfig, sinrs: &SinrSet, zeta: f64) -> Result<f64> {
    inverse_fim(FimParams {
        antennas: config.antennas,
        observations: config.antennas,
        sinr: zeta / config.channel_gain * sinrs.rho_u_post,
    })
}
