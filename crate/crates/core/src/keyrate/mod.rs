//! Secure key length for one satellite pass.

use std::fmt;
use std::str::FromStr;

pub mod decoy;
pub mod qd;

/// Why a key-length evaluation produced no key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ZeroKeyCause {
    NoDetections,
    /// Not enough sifted bits for parameter estimation.
    InsufficientStatistics,
    /// `A = 0`: every detection may stem from a multi-photon pulse.
    MultiPhotonDominated,
    /// `Ẽ/A ≥ 1/2`.
    NoiseDominated,
    /// The decoy bounds certify no single-photon contribution.
    BoundsCollapse,
    /// The key bracket is non-positive after entropy and finite-size terms.
    NegativeBracket,
    /// Evaluation failed; the message carries the underlying error.
    Failed(String),
}

impl fmt::Display for ZeroKeyCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroKeyCause::NoDetections => f.write_str("no-detections"),
            ZeroKeyCause::InsufficientStatistics => f.write_str("insufficient-statistics"),
            ZeroKeyCause::MultiPhotonDominated => f.write_str("multi-photon-dominated"),
            ZeroKeyCause::NoiseDominated => f.write_str("noise-dominated"),
            ZeroKeyCause::BoundsCollapse => f.write_str("bounds-collapse"),
            ZeroKeyCause::NegativeBracket => f.write_str("negative-bracket"),
            ZeroKeyCause::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

impl FromStr for ZeroKeyCause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "no-detections" => ZeroKeyCause::NoDetections,
            "insufficient-statistics" => ZeroKeyCause::InsufficientStatistics,
            "multi-photon-dominated" => ZeroKeyCause::MultiPhotonDominated,
            "noise-dominated" => ZeroKeyCause::NoiseDominated,
            "bounds-collapse" => ZeroKeyCause::BoundsCollapse,
            "negative-bracket" => ZeroKeyCause::NegativeBracket,
            other => match other.strip_prefix("failed: ") {
                Some(msg) => ZeroKeyCause::Failed(msg.to_string()),
                None => return Err(format!("unknown zero-key cause '{other}'")),
            },
        })
    }
}
