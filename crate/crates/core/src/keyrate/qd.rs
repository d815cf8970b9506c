//! Key length of BB84 with an imperfect single-photon source:
//!
//! `L = n·q·A·(1 − H(Ẽ/A) − f·H(E) − Δ)`
//!
//! where `A = (p_det − P_m)/p_det` removes detections that may originate from
//! multi-photon pulses, Ẽ is the QBER widened for estimation error and Δ the
//! per-bit finite-size penalty.

use crate::error::{Error, Result};
use crate::finite::{adjusted_qber, binary_entropy, finite_size_delta, FiniteKeyParams};
use crate::keyrate::ZeroKeyCause;

/// Observed (or expected) statistics feeding the QD key length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdKeyInput {
    /// Raw key bits, i.e. detections in the pass.
    pub n_raw: f64,
    /// Sifted key size `m`, nominally `q·n`.
    pub m_sifted: f64,
    pub qber: f64,
    /// Detection probability per slot.
    pub p_det: f64,
    /// Multi-photon probability bound per slot.
    pub multiphoton: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QdKey {
    /// Key length in bits, never negative.
    pub bits: f64,
    /// `n·q·A·bracket` before clamping; `-inf` when the bracket is undefined.
    pub unclamped: f64,
    pub adjusted_qber: f64,
    pub correction_a: f64,
    pub delta: f64,
    pub cause: Option<ZeroKeyCause>,
}

/// `A = (p_det − P_m)/p_det`, clamped to `[0, 1]`.
pub fn multiphoton_correction(p_det: f64, multiphoton: f64) -> Result<f64> {
    if !(p_det > 0.0) {
        return Err(Error::NoDetections(format!(
            "detection probability {p_det} leaves no key to correct"
        )));
    }
    Ok(((p_det - multiphoton) / p_det).clamp(0.0, 1.0))
}

pub fn qd_key_length(input: &QdKeyInput, params: &FiniteKeyParams) -> Result<QdKey> {
    params.validate()?;
    let correction_a = multiphoton_correction(input.p_det, input.multiphoton)?;
    let adjusted = adjusted_qber(input.qber, input.m_sifted, params.eps_pe)?;
    let delta = finite_size_delta(input.m_sifted, params.eps_bar, params.eps_pa, params.eps_ec)?;

    let zero = |cause| QdKey {
        bits: 0.0,
        unclamped: f64::NEG_INFINITY,
        adjusted_qber: adjusted,
        correction_a,
        delta,
        cause: Some(cause),
    };
    if correction_a <= 0.0 {
        return Ok(zero(ZeroKeyCause::MultiPhotonDominated));
    }
    let phase_error = adjusted / correction_a;
    if phase_error >= 0.5 {
        return Ok(zero(ZeroKeyCause::NoiseDominated));
    }

    let bracket = 1.0
        - binary_entropy(phase_error)
        - params.ec_efficiency * binary_entropy(input.qber)
        - delta;
    let unclamped = input.n_raw * params.sifting_ratio * correction_a * bracket;
    let (bits, cause) = if unclamped > 0.0 {
        (unclamped, None)
    } else {
        (0.0, Some(ZeroKeyCause::NegativeBracket))
    };
    Ok(QdKey {
        bits,
        unclamped,
        adjusted_qber: adjusted,
        correction_a,
        delta,
        cause,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(n: f64, qber: f64, p_det: f64, pm: f64) -> QdKeyInput {
        QdKeyInput {
            n_raw: n,
            m_sifted: 0.5 * n,
            qber,
            p_det,
            multiphoton: pm,
        }
    }

    #[test]
    fn correction_examples() {
        assert_eq!(multiphoton_correction(1e-4, 0.0).unwrap(), 1.0);
        assert_eq!(multiphoton_correction(1e-4, 1e-4).unwrap(), 0.0);
        assert_eq!(multiphoton_correction(1e-4, 2e-4).unwrap(), 0.0);
        assert!(matches!(multiphoton_correction(0.0, 0.0), Err(Error::NoDetections(_))));

        // Detection probability of a 3.3% bright source at ~35 dB total loss.
        let p_det = 3e-4 * 0.033;
        let a = multiphoton_correction(p_det, 4.5e-6).unwrap();
        assert!((a - (1.0 - 4.5e-6 / 9.9e-6)).abs() < 1e-12);
        let key = qd_key_length(&input(1e7, 0.02, p_det, 4.5e-6), &FiniteKeyParams::default()).unwrap();
        assert_eq!(key.correction_a, a);
    }

    #[test]
    fn fixed_instance_matches_hand_evaluation() {
        let params = FiniteKeyParams::default().with_split(2e-11, 1e-11);
        let key = qd_key_length(&input(1e6, 0.02, 1e-4, 0.0), &params).unwrap();
        assert!((key.bits - 300_945.488_742_727_5).abs() < 1.0, "{}", key.bits);
        assert!((key.adjusted_qber - 0.026_012_338_672_042_92).abs() < 1e-14);
        assert!(key.cause.is_none());
    }

    #[test]
    fn perfect_channel_limit() {
        let params = FiniteKeyParams {
            ec_efficiency: 1.0,
            ..FiniteKeyParams::default()
        };
        let n = 1e16;
        let key = qd_key_length(&input(n, 0.0, 1e-3, 0.0), &params).unwrap();
        assert!((key.bits / (n * 0.5) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_key_causes() {
        let params = FiniteKeyParams::default();
        let key = qd_key_length(&input(1e6, 0.02, 1e-4, 1e-4), &params).unwrap();
        assert_eq!(key.cause, Some(ZeroKeyCause::MultiPhotonDominated));
        assert_eq!(key.bits, 0.0);

        let key = qd_key_length(&input(1e6, 0.3, 1e-4, 0.4e-4), &params).unwrap();
        assert_eq!(key.cause, Some(ZeroKeyCause::NoiseDominated));

        let key = qd_key_length(&input(1e3, 0.05, 1e-4, 0.0), &params).unwrap();
        assert_eq!(key.cause, Some(ZeroKeyCause::NegativeBracket));
        assert!(key.unclamped < 0.0);

        assert!(qd_key_length(&input(1e6, 0.02, 1e-4, 0.0), &params.with_split(1e-12, 1e-11)).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_inputs(
            n in 1e5f64..1e9,
            qber in 0.0f64..0.1,
            p_det in 1e-6f64..1e-3,
            pm_frac in 0.0f64..0.5,
        ) {
            let params = FiniteKeyParams::default();
            let pm = p_det * pm_frac;
            let base = qd_key_length(&input(n, qber, p_det, pm), &params).unwrap().bits;
            prop_assert!(base >= 0.0);
            prop_assert!(qd_key_length(&input(n, qber + 0.005, p_det, pm), &params).unwrap().bits <= base);
            prop_assert!(qd_key_length(&input(n, qber, p_det, pm * 1.2 + 1e-9), &params).unwrap().bits <= base);
            prop_assert!(qd_key_length(&input(n * 1.3, qber, p_det, pm), &params).unwrap().bits >= base);
        }

        #[test]
        fn a_scale_invariant(scale in 0.01f64..100.0, pm_frac in 0.0f64..0.9) {
            let params = FiniteKeyParams::default();
            let p_det = 1e-4;
            let a = qd_key_length(&input(1e7, 0.02, p_det, p_det * pm_frac), &params).unwrap();
            let b = qd_key_length(&input(1e7, 0.02, p_det * scale, p_det * pm_frac * scale), &params).unwrap();
            prop_assert!((a.correction_a - b.correction_a).abs() < 1e-12);
            prop_assert!((a.bits - b.bits).abs() <= 1e-9 * a.bits.max(1.0));
        }
    }
}
