//! FDD channel-training model with an analog repeater.
//!
//! The array sends `tau`-long orthonormal pilots over the DL channel `h`; the
//! repeater amplifies what it hears by `alpha` and feeds it back over the UL
//! channel `g`. All noise variances are normalized to one.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    sample_complex_gaussian_matrix, sample_complex_gaussian_vector, sample_unitary_pilot,
    ComplexMatrix, ComplexVector, RngStream,
};

/// Scalar parameters of one experiment.
///
/// Field names in serialized form are `M`, `tau`, `P`, `beta`,
/// `rho_u_target`, `delta`, `trials`, `seed`. Powers and SINRs are linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "tau")]
    pub pilot_len: usize,
    /// Total DL transmit power.
    #[serde(rename = "P")]
    pub dl_power: f64,
    /// Per-entry variance of the UL and DL channel vectors.
    #[serde(rename = "beta")]
    pub channel_gain: f64,
    #[serde(rename = "rho_u_target")]
    pub target_ul_sinr: f64,
    /// Power-iteration stopping threshold in radians.
    #[serde(rename = "delta")]
    pub stop_threshold: f64,
    pub trials: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.antennas < 2 {
            return bad(format!("M must be >= 2, got {}", self.antennas));
        }
        if self.pilot_len < self.antennas {
            return bad(format!(
                "pilot length tau ({}) must be >= M ({})",
                self.pilot_len, self.antennas
            ));
        }
        for (name, v) in [
            ("P", self.dl_power),
            ("beta", self.channel_gain),
            ("rho_u_target", self.target_ul_sinr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.stop_threshold > 0.0 && self.stop_threshold < FRAC_PI_2) {
            return bad(format!(
                "delta must lie in (0, pi/2), got {}",
                self.stop_threshold
            ));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        Ok(())
    }

    /// DL SINR `βP`.
    pub fn dl_sinr(&self) -> f64 {
        self.channel_gain * self.dl_power
    }

    pub fn pilot_ratio(&self) -> f64 {
        self.pilot_len as f64 / self.antennas as f64
    }

    /// Reads a TOML or JSON file; JSON is chosen by a `.json` extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Repeater gain that makes the UL SINR hit `rho_u_target` exactly.
pub fn genie_alpha(config: &ScenarioConfig) -> f64 {
    let beta = config.channel_gain;
    config.target_ul_sinr / (beta * (beta * config.dl_power + 1.0))
}

/// Link-budget quantities for a given repeater gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinrSet {
    pub rho_d: f64,
    pub rho_u: f64,
    /// DL SINR after pilot reverse modulation.
    pub rho_d_post: f64,
    /// UL SINR after pilot reverse modulation.
    pub rho_u_post: f64,
    /// Average repeater transmit power.
    pub q: f64,
    /// Effective repeater power seen after pilot reverse modulation.
    pub q_eff: f64,
}

pub fn compute_sinrs(config: &ScenarioConfig, alpha: f64) -> SinrSet {
    let beta = config.channel_gain;
    let p = config.dl_power;
    let ratio = config.pilot_ratio();
    let q = alpha * (beta * p + 1.0);
    let q_eff = alpha * (ratio * beta * p + 1.0);
    SinrSet {
        rho_d: beta * p,
        rho_u: beta * q,
        rho_d_post: ratio * beta * p,
        rho_u_post: beta * q_eff,
        q,
        q_eff,
    }
}

/// Which perturbations enter a realization. Disabled perturbations are still
/// drawn (so the channels stay identical across masks) but scaled to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseMask {
    pub dl: bool,
    pub ul: bool,
}

impl NoiseMask {
    pub const ALL: Self = Self { dl: true, ul: true };
    pub const NONE: Self = Self {
        dl: false,
        ul: false,
    };
}

impl Default for NoiseMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// One draw of pilots, channels and perturbations plus derived signals.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `tau × M` pilot matrix with orthonormal columns.
    pub pilot: ComplexMatrix,
    pub h: ComplexVector,
    pub g: ComplexVector,
    /// DL perturbation at the repeater, length `tau`.
    pub w: ComplexVector,
    /// UL perturbation, `M × tau`.
    pub n: ComplexMatrix,
    pub alpha: f64,
    /// Repeater receive signal, length `tau`.
    pub x: ComplexVector,
    /// UL receive signal `√α g x^H + N`, `M × tau`.
    pub y: ComplexMatrix,
    /// Reverse-modulated observation `Y Φ`, `M × M`.
    pub y_tilde: ComplexMatrix,
}

pub fn generate_realization(
    config: &ScenarioConfig,
    rng: &mut RngStream,
) -> Result<ChannelRealization> {
    generate_realization_masked(config, rng, NoiseMask::ALL)
}

/// Same as [`generate_realization`] with selected perturbations zeroed.
pub fn generate_realization_masked(
    config: &ScenarioConfig,
    rng: &mut RngStream,
    mask: NoiseMask,
) -> Result<ChannelRealization> {
    config.validate()?;
    let m = config.antennas;
    let tau = config.pilot_len;
    let beta = config.channel_gain;
    let alpha = genie_alpha(config);

    let pilot = sample_unitary_pilot(rng, tau, m)?;
    let h = sample_complex_gaussian_vector(rng, m, beta);
    let g = sample_complex_gaussian_vector(rng, m, beta);
    let mut w = sample_complex_gaussian_vector(rng, tau, 1.0);
    let mut n = sample_complex_gaussian_matrix(rng, m, tau, 1.0);
    if !mask.dl {
        w.fill(Default::default());
    }
    if !mask.ul {
        n.fill(Default::default());
    }

    // x^H = √(τP/M) h^H Φ^H + w^H  ⇔  x = √(τP/M) Φ h + w
    let x = (&pilot * &h).scale((config.pilot_ratio() * config.dl_power).sqrt()) + &w;
    let y = (&g * x.adjoint()).scale(alpha.sqrt()) + &n;
    let y_tilde = &y * &pilot;

    Ok(ChannelRealization {
        pilot,
        h,
        g,
        w,
        n,
        alpha,
        x,
        y,
        y_tilde,
    })
}
