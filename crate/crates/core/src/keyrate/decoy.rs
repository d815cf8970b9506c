//! Two-intensity (signal μ, weak decoy ν) decoy-state BB84.
//!
//! The single-photon yield is bounded from the two observed gains with the
//! vacuum yield taken from the background model, then
//!
//! `L = n·K_μ·q·[Q1_L·(1 − H(E1_U)) − Q_μ·f·H(E_μ) − Q_μ·Δ/n_μ]`
//!
//! with Δ the finite-size correction in bits on the signal sifted key.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::{binary_entropy, finite_size_delta, two_sided_normal_quantile, FiniteKeyParams};
use crate::keyrate::ZeroKeyCause;

/// Gains, QBERs and counts observed for the two intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservables {
    /// Total transmitted pulses `n`.
    pub n_total: f64,
    /// Detected signal pulses `n_μ`.
    pub n_signal_detected: f64,
    pub gain_signal: f64,
    pub gain_decoy: f64,
    pub qber_signal: f64,
    pub qber_decoy: f64,
    pub sent_signal: f64,
    pub sent_decoy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    pub y0_lower: f64,
    pub y0_upper: f64,
    pub y1_lower: f64,
    /// Single-photon gain lower bound `Y1_L·μ·e^(−μ)`.
    pub q1_lower: f64,
    pub e1_upper: f64,
}

/// Concentration bound used to widen observed frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiniteStatistics {
    /// `X ± u·sqrt(X/N)` with `u` the two-sided normal quantile at `1 − ε_PE`.
    #[default]
    Gaussian,
    /// `X ± sqrt(ln(2/ε_PE) / 2N)`.
    Hoeffding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Widen {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoyConfig {
    pub y0_lower: f64,
    /// Vacuum-yield upper bound; `None` takes the background click
    /// probability widened upward.
    pub y0_upper: Option<f64>,
    /// Subtract the vacuum error contribution `Y0_L/2` in `E1_U`.
    pub vacuum_error_subtraction: bool,
    pub statistics: FiniteStatistics,
}

impl Default for DecoyConfig {
    fn default() -> Self {
        Self {
            y0_lower: 0.0,
            y0_upper: None,
            vacuum_error_subtraction: false,
            statistics: FiniteStatistics::Gaussian,
        }
    }
}

/// Widens an observed per-pulse frequency `observable` estimated from
/// `n_sent` pulses in the adversarial direction. The result is clamped to
/// `[0, 1]`.
pub fn apply_finite_statistics(
    observable: f64,
    n_sent: f64,
    eps_pe: f64,
    direction: Widen,
    statistics: FiniteStatistics,
) -> Result<f64> {
    if !(n_sent >= 1.0) {
        return Err(Error::InsufficientData(format!(
            "{n_sent} pulses cannot support a finite-statistics bound"
        )));
    }
    let deviation = match statistics {
        FiniteStatistics::Gaussian => {
            two_sided_normal_quantile(eps_pe)? * (observable.max(0.0) / n_sent).sqrt()
        }
        FiniteStatistics::Hoeffding => ((2.0 / eps_pe).ln() / (2.0 * n_sent)).sqrt(),
    };
    let widened = match direction {
        Widen::Up => observable + deviation,
        Widen::Down => observable - deviation,
    };
    if !(0.0..=1.0).contains(&widened) {
        debug!("finite-statistics widening of {observable:e} clamped from {widened:e}");
    }
    Ok(widened.clamp(0.0, 1.0))
}

pub fn decoy_bounds(
    obs: &DecoyObservables,
    mu: f64,
    nu: f64,
    eps_pe: f64,
    background_prob: f64,
    config: &DecoyConfig,
) -> Result<DecoyBounds> {
    if !(nu >= 0.0 && nu < mu) {
        return Err(Error::Domain(format!("need 0 <= nu < mu (mu {mu}, nu {nu})")));
    }
    let stats = config.statistics;
    let gain_signal_up = apply_finite_statistics(obs.gain_signal, obs.sent_signal, eps_pe, Widen::Up, stats)?;
    let gain_decoy_down = apply_finite_statistics(obs.gain_decoy, obs.sent_decoy, eps_pe, Widen::Down, stats)?;
    let error_gain_decoy_up = apply_finite_statistics(
        obs.qber_decoy * obs.gain_decoy,
        obs.sent_decoy,
        eps_pe,
        Widen::Up,
        stats,
    )?;
    let y0_upper = match config.y0_upper {
        Some(y0) => y0,
        None => apply_finite_statistics(background_prob, obs.sent_decoy, eps_pe, Widen::Up, stats)?,
    };
    let y0_lower = config.y0_lower.min(y0_upper);

    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let y1_lower = mu / (mu * nu - nu2)
        * (gain_decoy_down * nu.exp()
            - gain_signal_up * mu.exp() * nu2 / mu2
            - (mu2 - nu2) / mu2 * y0_upper);
    if !(y1_lower.is_finite() && y1_lower > 0.0) {
        return Err(Error::BoundsCollapse { y1_lower });
    }

    let vacuum_errors = if config.vacuum_error_subtraction {
        0.5 * y0_lower
    } else {
        0.0
    };
    let e1_upper = ((error_gain_decoy_up * nu.exp() - vacuum_errors) / (y1_lower * nu)).clamp(0.0, 0.5);

    Ok(DecoyBounds {
        y0_lower,
        y0_upper,
        y1_lower,
        q1_lower: y1_lower * mu * (-mu).exp(),
        e1_upper,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WcpKey {
    pub bits: f64,
    pub unclamped: f64,
    /// Per-bit finite-size correction on the signal sifted key.
    pub delta: f64,
    pub m_sifted: f64,
    pub cause: Option<ZeroKeyCause>,
}

pub fn wcp_key_length(
    obs: &DecoyObservables,
    bounds: &DecoyBounds,
    params: &FiniteKeyParams,
    signal_fraction: f64,
) -> Result<WcpKey> {
    params.validate()?;
    if !(obs.n_signal_detected > 0.0) {
        return Err(Error::NoDetections("no signal pulses were detected".into()));
    }
    let m_sifted = params.sifting_ratio * obs.n_signal_detected;
    let delta = finite_size_delta(m_sifted, params.eps_bar, params.eps_pa, params.eps_ec)?;
    let delta_bits = delta * m_sifted;

    let bracket = bounds.q1_lower * (1.0 - binary_entropy(bounds.e1_upper))
        - obs.gain_signal * params.ec_efficiency * binary_entropy(obs.qber_signal)
        - obs.gain_signal * delta_bits / obs.n_signal_detected;
    let unclamped = obs.n_total * signal_fraction * params.sifting_ratio * bracket;
    let (bits, cause) = if unclamped > 0.0 {
        (unclamped, None)
    } else {
        (0.0, Some(ZeroKeyCause::NegativeBracket))
    };
    Ok(WcpKey {
        bits,
        unclamped,
        delta,
        m_sifted,
        cause,
    })
}
