//! Photon-number statistics of the two sources and the multi-photon bound
//! estimated from Hanbury Brown–Twiss (HBT) click statistics.
//!
//! The quantum-dot (QD) source is described by its brightness `R` (probability
//! that a pulse slot is non-empty) and an upper bound `P_m` on the probability
//! of a multi-photon slot. Its photon-number distribution is truncated at two
//! photons: three-fold coincidences were measured below 1e-9 per window, so
//! the remainder is carried as a declared tail rather than modeled.
//!
//! The weak coherent pulse (WCP) source follows Poisson statistics.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_probability, Error, Result};

/// Tolerance on `Σ p_i ≤ 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Tolerance used when checking `R = 10^(−internal_loss/10)`.
pub const BRIGHTNESS_TOLERANCE: f64 = 1e-9;

/// Converts an optical loss in dB into a linear transmittance.
pub fn loss_db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Inverse of [`loss_db_to_linear`].
pub fn linear_to_loss_db(transmittance: f64) -> f64 {
    -10.0 * transmittance.log10()
}

/// Probabilities of emitting `i` photons into one pulse slot, `i = 0..len`.
///
/// Any missing mass `1 − Σ p_i` is the declared (neglected) tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

impl PhotonNumberDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty photon-number distribution".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            ensure_probability(&format!("p{i}"), p)?;
        }
        let total: f64 = probs.iter().sum();
        if total > 1.0 + NORMALIZATION_TOLERANCE {
            return Err(Error::Inconsistent(format!(
                "photon-number probabilities sum to {total} > 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Three-term distribution `(p0, p1, p2)`.
    pub fn truncated(p0: f64, p1: f64, p2: f64) -> Result<Self> {
        Self::new(vec![p0, p1, p2])
    }

    pub fn vacuum() -> Self {
        Self { probs: vec![1.0] }
    }

    pub fn probability(&self, photons: usize) -> f64 {
        self.probs.get(photons).copied().unwrap_or(0.0)
    }

    pub fn p0(&self) -> f64 {
        self.probability(0)
    }

    pub fn p1(&self) -> f64 {
        self.probability(1)
    }

    pub fn p2(&self) -> f64 {
        self.probability(2)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Highest photon number carried explicitly.
    pub fn max_photons(&self) -> usize {
        self.probs.len() - 1
    }

    /// Mass not represented by the explicit terms.
    pub fn tail(&self) -> f64 {
        (1.0 - self.probs.iter().sum::<f64>()).max(0.0)
    }

    /// Probability of a non-empty slot carried by the explicit terms.
    pub fn non_empty(&self) -> f64 {
        self.probs[1..].iter().sum()
    }

    /// Probability of two or more photons carried by the explicit terms.
    pub fn multi_photon(&self) -> f64 {
        self.probs.iter().skip(2).sum()
    }
}

/// Poisson photon-number statistics of a phase-randomized coherent state with
/// mean photon number `mu`, truncated at `n_max`.
pub fn poisson_distribution(mu: f64, n_max: usize) -> Result<PhotonNumberDistribution> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mean photon number {mu} must be >= 0")));
    }
    if n_max < 2 {
        return Err(Error::Domain(format!("truncation order {n_max} must be >= 2")));
    }
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut term = (-mu).exp();
    probs.push(term);
    for i in 1..=n_max {
        term *= mu / i as f64;
        probs.push(term);
    }
    PhotonNumberDistribution::new(probs)
}

/// Worst-case QD distribution: the whole multi-photon bound is realized as
/// two-photon emission, `(1 − R, R − P_m, P_m)`.
pub fn qd_distribution(non_empty: f64, multiphoton: f64) -> Result<PhotonNumberDistribution> {
    ensure_probability("R", non_empty)?;
    ensure_probability("P_m", multiphoton)?;
    if multiphoton > non_empty {
        return Err(Error::Inconsistent(format!(
            "multi-photon bound {multiphoton:e} exceeds non-empty probability {non_empty:e}"
        )));
    }
    PhotonNumberDistribution::truncated(1.0 - non_empty, non_empty - multiphoton, multiphoton)
}

fn ensure_bench_efficiency(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("efficiency {eta} must lie in (0, 1]")))
    }
}

/// Two-fold coincidence probability per slot behind a 50:50 splitter,
/// `C = p2 η² / 2`, with dark-count terms dropped.
pub fn coincidence_probability(dist: &PhotonNumberDistribution, eta: f64) -> Result<f64> {
    ensure_bench_efficiency(eta)?;
    Ok(0.5 * dist.p2() * eta * eta)
}

/// Probability that exactly one of the two HBT detectors clicks,
/// `S = p1 η + p2 η (3/2 − η)`, with dark-count terms dropped.
pub fn solitary_probability(dist: &PhotonNumberDistribution, eta: f64) -> Result<f64> {
    ensure_bench_efficiency(eta)?;
    Ok(dist.p1() * eta + dist.p2() * eta * (1.5 - eta))
}

fn estimator_denominator(kappa: f64, eta: f64) -> Result<f64> {
    ensure_bench_efficiency(eta)?;
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("kappa {kappa} must be >= 0")));
    }
    let denominator = eta - 3.0 * kappa + 2.0 * kappa * eta;
    if denominator > 0.0 {
        Ok(denominator)
    } else {
        Err(Error::EstimatorInvalid {
            kappa,
            eta,
            denominator,
        })
    }
}

/// Upper bound on the multi-photon probability per slot,
/// `P_m ≤ 2κR / (η − 3κ + 2κη)`, from the coincidence-to-solitary ratio `κ`.
///
/// It bounds `p2` because `R = p1 + p2 ≥ p1`.
pub fn multiphoton_bound(kappa: f64, eta: f64, non_empty: f64) -> Result<f64> {
    let denominator = estimator_denominator(kappa, eta)?;
    Ok(2.0 * kappa * non_empty / denominator)
}

/// Exact inversion of the C and S expressions for `p2` given `p1`.
pub fn two_photon_probability(kappa: f64, eta: f64, p1: f64) -> Result<f64> {
    let denominator = estimator_denominator(kappa, eta)?;
    Ok(2.0 * kappa * p1 / denominator)
}

/// Click statistics of an HBT bench run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbtMeasurement {
    /// Slots in which both detectors clicked.
    pub coincidences: u64,
    /// Slots in which exactly one detector clicked.
    pub solitary: u64,
    pub slots: u64,
    /// Bench efficiency η = η_t·η_d.
    pub eta: f64,
}

impl HbtMeasurement {
    pub fn new(coincidences: u64, solitary: u64, slots: u64, eta: f64) -> Result<Self> {
        ensure_bench_efficiency(eta)?;
        // Coincident and solitary slots are disjoint classes.
        if coincidences.saturating_add(solitary) > slots {
            return Err(Error::Inconsistent(format!(
                "{coincidences} coincident + {solitary} solitary slots exceed {slots} slots"
            )));
        }
        Ok(Self {
            coincidences,
            solitary,
            slots,
            eta,
        })
    }

    pub fn coincidence_rate(&self) -> f64 {
        self.coincidences as f64 / self.slots as f64
    }

    pub fn solitary_rate(&self) -> f64 {
        self.solitary as f64 / self.slots as f64
    }
}

/// `κ = N_C / N_S`.
pub fn kappa_from_counts(m: &HbtMeasurement) -> Result<f64> {
    if m.solitary == 0 {
        return Err(Error::InsufficientData(
            "no solitary clicks recorded; kappa undefined".into(),
        ));
    }
    Ok(m.coincidences as f64 / m.solitary as f64)
}

/// Quantum-dot source: repetition rate, brightness and multi-photon bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdSourceSpec {
    pub rep_rate_hz: f64,
    pub internal_loss_db: f64,
    /// Probability `R` that a slot carries at least one photon.
    pub non_empty: f64,
    /// Upper bound `P_m` on the multi-photon probability per slot.
    pub multiphoton: f64,
}

impl QdSourceSpec {
    pub fn from_internal_loss(rep_rate_hz: f64, internal_loss_db: f64, multiphoton: f64) -> Result<Self> {
        let spec = Self {
            rep_rate_hz,
            internal_loss_db,
            non_empty: loss_db_to_linear(internal_loss_db),
            multiphoton,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_brightness(rep_rate_hz: f64, non_empty: f64, multiphoton: f64) -> Result<Self> {
        if !(non_empty > 0.0) {
            return Err(Error::Domain(format!("brightness R = {non_empty} must be > 0")));
        }
        let spec = Self {
            rep_rate_hz,
            internal_loss_db: linear_to_loss_db(non_empty),
            non_empty,
            multiphoton,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::Domain(format!("rep rate {} must be > 0", self.rep_rate_hz)));
        }
        if !(self.internal_loss_db >= 0.0) {
            return Err(Error::Domain(format!(
                "internal loss {} dB must be >= 0",
                self.internal_loss_db
            )));
        }
        let derived = loss_db_to_linear(self.internal_loss_db);
        if (derived - self.non_empty).abs() > BRIGHTNESS_TOLERANCE {
            return Err(Error::Inconsistent(format!(
                "R = {} disagrees with internal loss {} dB (expected {derived})",
                self.non_empty, self.internal_loss_db
            )));
        }
        ensure_probability("P_m", self.multiphoton)?;
        if self.multiphoton > self.non_empty {
            return Err(Error::Inconsistent(format!(
                "P_m = {:e} exceeds R = {:e}",
                self.multiphoton, self.non_empty
            )));
        }
        Ok(())
    }

    /// Non-empty pulses per second leaving the source.
    pub fn effective_pulse_rate(&self) -> f64 {
        self.rep_rate_hz * self.non_empty
    }

    pub fn distribution(&self) -> Result<PhotonNumberDistribution> {
        qd_distribution(self.non_empty, self.multiphoton)
    }
}

/// Two-intensity decoy-state weak coherent pulse source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcpSourceSpec {
    pub rep_rate_hz: f64,
    /// Signal mean photon number μ.
    pub mu: f64,
    /// Decoy mean photon number ν.
    pub nu: f64,
    /// Fraction `K_μ` of slots sent at signal intensity.
    pub signal_fraction: f64,
}

impl WcpSourceSpec {
    pub fn new(rep_rate_hz: f64, mu: f64, nu: f64, signal_fraction: f64) -> Result<Self> {
        let spec = Self {
            rep_rate_hz,
            mu,
            nu,
            signal_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::Domain(format!("rep rate {} must be > 0", self.rep_rate_hz)));
        }
        if !(self.nu >= 0.0 && self.nu < self.mu) {
            return Err(Error::Domain(format!(
                "intensities must satisfy 0 <= nu < mu (mu {}, nu {})",
                self.mu, self.nu
            )));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::Domain(format!(
                "signal fraction {} must lie in (0, 1]",
                self.signal_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceModel {
    Qd(QdSourceSpec),
    Wcp(WcpSourceSpec),
}

impl SourceModel {
    pub fn rep_rate_hz(&self) -> f64 {
        match self {
            SourceModel::Qd(s) => s.rep_rate_hz,
            SourceModel::Wcp(s) => s.rep_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceModel::Qd(s) => s.validate(),
            SourceModel::Wcp(s) => s.validate(),
        }
    }
}
