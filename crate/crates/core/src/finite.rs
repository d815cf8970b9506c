//! Finite-size ingredients shared by both key-length models: binary entropy,
//! the parameter-estimation adjustment of the QBER and the per-bit finite-size
//! penalty Δ.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Security and post-processing parameters of one key-length evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteKeyParams {
    /// Failure probability of error-correction verification.
    pub eps_ec: f64,
    /// Failure probability of QBER estimation.
    pub eps_pe: f64,
    /// Smoothing parameter ε̄.
    pub eps_bar: f64,
    /// Privacy-amplification failure probability.
    pub eps_pa: f64,
    /// Error-correction inefficiency `f ≥ 1`.
    pub ec_efficiency: f64,
    /// Sifting ratio `q`.
    pub sifting_ratio: f64,
}

impl Default for FiniteKeyParams {
    fn default() -> Self {
        Self {
            eps_ec: 1e-10,
            eps_pe: 1e-10,
            eps_bar: 5e-10,
            eps_pa: 4e-10,
            ec_efficiency: 1.16,
            sifting_ratio: 0.5,
        }
    }
}

impl FiniteKeyParams {
    pub fn with_split(&self, eps_bar: f64, eps_pa: f64) -> Self {
        Self {
            eps_bar,
            eps_pa,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon_chain(self.eps_bar, self.eps_pa, self.eps_ec)?;
        if !(self.eps_pe > 0.0 && self.eps_pe < 1.0) {
            return Err(Error::Parameter(format!("eps_pe = {} must lie in (0, 1)", self.eps_pe)));
        }
        if !(self.ec_efficiency >= 1.0) {
            return Err(Error::Parameter(format!(
                "error-correction efficiency f = {} must be >= 1",
                self.ec_efficiency
            )));
        }
        if !(self.sifting_ratio > 0.0 && self.sifting_ratio <= 1.0) {
            return Err(Error::Parameter(format!(
                "sifting ratio {} must lie in (0, 1]",
                self.sifting_ratio
            )));
        }
        Ok(())
    }
}

/// Checks `1 − ε_EC > ε̄ > ε_PA > 0` with every ε in (0, 1).
pub fn check_epsilon_chain(eps_bar: f64, eps_pa: f64, eps_ec: f64) -> Result<()> {
    for (name, eps) in [("eps_bar", eps_bar), ("eps_pa", eps_pa), ("eps_ec", eps_ec)] {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Parameter(format!("{name} = {eps:e} must lie in (0, 1)")));
        }
    }
    if !(1.0 - eps_ec > eps_bar && eps_bar > eps_pa) {
        return Err(Error::Parameter(format!(
            "need 1 - eps_ec > eps_bar > eps_pa (eps_ec {eps_ec:e}, eps_bar {eps_bar:e}, eps_pa {eps_pa:e})"
        )));
    }
    Ok(())
}

/// Binary Shannon entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// QBER widened for parameter-estimation failure probability `eps_pe` on a
/// sifted key of `m` bits:
/// `Ẽ = E + ½·sqrt((2 ln(1/ε_PE) + 2 ln(m+1)) / m)`.
pub fn adjusted_qber(qber: f64, m: f64, eps_pe: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::InsufficientData(format!(
            "sifted key of {m} bits is too small to estimate the QBER"
        )));
    }
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(Error::Parameter(format!("eps_pe = {eps_pe} must lie in (0, 1)")));
    }
    let spread = ((2.0 * (1.0 / eps_pe).ln() + 2.0 * (m + 1.0).ln()) / m).sqrt();
    Ok(qber + 0.5 * spread)
}

/// Per-bit finite-size penalty on a sifted key of `m` bits:
/// `Δ = 7·sqrt(log2(2/ε̄)/m) + (2·log2(1/ε_PA) + log2(2/ε_EC)) / m`.
pub fn finite_size_delta(m: f64, eps_bar: f64, eps_pa: f64, eps_ec: f64) -> Result<f64> {
    check_epsilon_chain(eps_bar, eps_pa, eps_ec)?;
    if !(m >= 1.0) {
        return Err(Error::InsufficientData(format!(
            "sifted key of {m} bits is too small for a finite-size correction"
        )));
    }
    let smoothing = 7.0 * ((2.0 / eps_bar).log2() / m).sqrt();
    let fixed = 2.0 * (1.0 / eps_pa).log2() + (2.0 / eps_ec).log2();
    Ok(smoothing + fixed / m)
}

/// Two-sided standard-normal quantile `u` with `P(|Z| > u) = eps`.
pub fn two_sided_normal_quantile(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("confidence failure {eps} must lie in (0, 1)")));
    }
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(-standard.inverse_cdf(0.5 * eps))
}
