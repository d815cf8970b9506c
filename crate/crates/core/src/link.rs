//! Link budget: turns a channel and receiver description into per-slot click
//! probabilities, expected QBER and expected counts for one satellite pass.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_probability, Error, Result};
use crate::source::{loss_db_to_linear, PhotonNumberDistribution};

/// Bob's passive-basis polarization receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSpec {
    /// Overall detection efficiency of Bob's detectors, including the
    /// coupling optics not broken out in `receiver_optical_loss_db`.
    pub detector_efficiency: f64,
    pub receiver_optical_loss_db: f64,
    pub num_detectors: u32,
    pub coincidence_window_s: f64,
    /// Dark-count probability per detector per window.
    pub dark_count_prob: f64,
    /// Probability `e_d` that a signal photon reaches the wrong detector of
    /// the matching basis.
    pub intrinsic_error: f64,
}

/// Default overall detection efficiency of Bob's receiver. Chosen so the
/// 76.4 MHz / 15 dB quantum-dot curve loses its key near 27 dB of channel loss.
pub const DEFAULT_DETECTOR_EFFICIENCY: f64 = 0.34;

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self {
            detector_efficiency: DEFAULT_DETECTOR_EFFICIENCY,
            receiver_optical_loss_db: 0.0,
            num_detectors: 4,
            coincidence_window_s: 5e-9,
            dark_count_prob: 0.0,
            intrinsic_error: 0.02,
        }
    }
}

impl ReceiverSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_probability("detector_efficiency", self.detector_efficiency)?;
        ensure_probability("dark_count_prob", self.dark_count_prob)?;
        ensure_probability("intrinsic_error", self.intrinsic_error)?;
        if !(self.receiver_optical_loss_db >= 0.0) {
            return Err(Error::Domain(format!(
                "receiver optical loss {} dB must be >= 0",
                self.receiver_optical_loss_db
            )));
        }
        if self.num_detectors < 2 {
            return Err(Error::Domain(format!(
                "receiver needs at least 2 detectors, got {}",
                self.num_detectors
            )));
        }
        if !(self.coincidence_window_s > 0.0) {
            return Err(Error::Domain(format!(
                "coincidence window {} s must be > 0",
                self.coincidence_window_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub loss_db: f64,
    /// Background click rate summed over all detectors.
    pub background_rate_hz: f64,
    pub pass_duration_s: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            loss_db: 30.0,
            background_rate_hz: 500.0,
            pass_duration_s: 100.0,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db >= 0.0) {
            return Err(Error::Domain(format!("channel loss {} dB must be >= 0", self.loss_db)));
        }
        if !(self.background_rate_hz >= 0.0) {
            return Err(Error::Domain(format!(
                "background rate {} Hz must be >= 0",
                self.background_rate_hz
            )));
        }
        if !(self.pass_duration_s > 0.0) {
            return Err(Error::Domain(format!(
                "pass duration {} s must be > 0",
                self.pass_duration_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkBudget {
    pub channel: ChannelSpec,
    pub receiver: ReceiverSpec,
}

impl LinkBudget {
    pub fn with_loss(&self, loss_db: f64) -> Self {
        let mut link = *self;
        link.channel.loss_db = loss_db;
        link
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.receiver.validate()
    }

    pub fn transmittance(&self) -> f64 {
        end_to_end_transmittance(&self.channel, &self.receiver)
    }

    pub fn background_prob(&self) -> f64 {
        background_click_prob(&self.channel, &self.receiver)
    }
}

/// Probability per slot of at least one background or dark click,
/// `rate·window + detectors·dark`, clamped to `[0, 1]`.
pub fn background_click_prob(channel: &ChannelSpec, receiver: &ReceiverSpec) -> f64 {
    let p = channel.background_rate_hz * receiver.coincidence_window_s
        + receiver.num_detectors as f64 * receiver.dark_count_prob;
    p.clamp(0.0, 1.0)
}

pub fn end_to_end_transmittance(channel: &ChannelSpec, receiver: &ReceiverSpec) -> f64 {
    loss_db_to_linear(channel.loss_db)
        * loss_db_to_linear(receiver.receiver_optical_loss_db)
        * receiver.detector_efficiency
}

/// Probability that at least one photon of a coherent pulse with mean `mu`
/// is detected.
pub fn wcp_signal_prob(mu: f64, eta_tot: f64) -> f64 {
    -(-mu * eta_tot).exp_m1()
}

/// Gain of a coherent pulse: `Q = 1 − (1 − p_bg)·e^(−μ·η_tot)`.
pub fn wcp_gain(mu: f64, eta_tot: f64, p_bg: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("mean photon number {mu} must be >= 0")));
    }
    Ok(p_bg + (1.0 - p_bg) * wcp_signal_prob(mu, eta_tot))
}

/// Probability that at least one photon of a slot drawn from `dist` is
/// detected, ignoring background.
pub fn signal_prob(dist: &PhotonNumberDistribution, eta_tot: f64) -> f64 {
    dist.probabilities()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &p)| p * -((k as f64) * (-eta_tot).ln_1p()).exp_m1())
        .sum()
}

/// Gain of the QD source: `Q = 1 − (1 − p_bg)·[p0 + p1(1−η) + p2(1−η)²]`.
/// Probability mass beyond the explicit terms counts as vacuum.
pub fn qd_gain(dist: &PhotonNumberDistribution, eta_tot: f64, p_bg: f64) -> f64 {
    p_bg + (1.0 - p_bg) * signal_prob(dist, eta_tot)
}

/// Expected QBER with background clicks contributing errors half the time,
/// `E = (e_d·p_signal + p_bg/2) / (p_signal + p_bg)`.
pub fn qber_expected(p_signal: f64, p_bg: f64, intrinsic_error: f64) -> Result<f64> {
    let total = p_signal + p_bg;
    if !(total > 0.0) {
        return Err(Error::NoDetections(
            "neither signal nor background clicks are possible".into(),
        ));
    }
    Ok((intrinsic_error * p_signal + 0.5 * p_bg) / total)
}

/// Expected counts for one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassCounts {
    pub n_sent: f64,
    pub n_detected: f64,
    pub m_sifted: f64,
}

pub fn pass_counts(rep_rate_hz: f64, duration_s: f64, sifting_ratio: f64, p_det: f64) -> Result<PassCounts> {
    if !(rep_rate_hz > 0.0) {
        return Err(Error::Domain(format!("rep rate {rep_rate_hz} must be > 0")));
    }
    let n_sent = rep_rate_hz * duration_s;
    let n_detected = n_sent * p_det;
    Ok(PassCounts {
        n_sent,
        n_detected,
        m_sifted: sifting_ratio * n_detected,
    })
}

/// Per-slot probabilities and expected pass counts for one source class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotStatistics {
    pub p_signal: f64,
    pub p_background: f64,
    pub p_det: f64,
    pub qber: f64,
    pub n_sent: f64,
    pub n_detected: f64,
}

impl SlotStatistics {
    fn from_parts(p_signal: f64, p_background: f64, intrinsic_error: f64, n_sent: f64) -> Result<Self> {
        let p_det = 1.0 - (1.0 - p_background) * (1.0 - p_signal);
        Ok(Self {
            p_signal,
            p_background,
            p_det,
            qber: qber_expected(p_signal, p_background, intrinsic_error)?,
            n_sent,
            n_detected: n_sent * p_det,
        })
    }

    /// Statistics for slots whose photon number follows `dist`.
    pub fn for_distribution(dist: &PhotonNumberDistribution, link: &LinkBudget, n_sent: f64) -> Result<Self> {
        let p_signal = signal_prob(dist, link.transmittance());
        Self::from_parts(p_signal, link.background_prob(), link.receiver.intrinsic_error, n_sent)
    }

    /// Statistics for coherent pulses of mean `mu`.
    pub fn for_coherent(mu: f64, link: &LinkBudget, n_sent: f64) -> Result<Self> {
        let p_signal = wcp_signal_prob(mu, link.transmittance());
        Self::from_parts(p_signal, link.background_prob(), link.receiver.intrinsic_error, n_sent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{poisson_distribution, qd_distribution};
    use proptest::prelude::*;

    fn receiver(det: f64, rx_db: f64, dark: f64) -> ReceiverSpec {
        ReceiverSpec {
            detector_efficiency: det,
            receiver_optical_loss_db: rx_db,
            dark_count_prob: dark,
            ..ReceiverSpec::default()
        }
    }

    fn channel(loss_db: f64, rate: f64) -> ChannelSpec {
        ChannelSpec {
            loss_db,
            background_rate_hz: rate,
            pass_duration_s: 100.0,
        }
    }

    #[test]
    fn background_examples() {
        assert_eq!(background_click_prob(&channel(30.0, 0.0), &receiver(1.0, 0.0, 0.0)), 0.0);
        let p = background_click_prob(&channel(30.0, 500.0), &receiver(1.0, 0.0, 0.0));
        assert!((p - 2.5e-6).abs() < 1e-18);
        let p = background_click_prob(&channel(30.0, 500.0), &receiver(1.0, 0.0, 1e-8));
        assert!((p - 2.54e-6).abs() < 1e-18);
        let p = background_click_prob(&channel(30.0, 1e12), &receiver(1.0, 0.0, 0.0));
        assert_eq!(p, 1.0);
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(end_to_end_transmittance(&channel(0.0, 0.0), &receiver(1.0, 0.0, 0.0)), 1.0);
        let t = end_to_end_transmittance(&channel(30.0, 0.0), &receiver(0.6, 0.0, 0.0));
        assert!((t - 6e-4).abs() < 1e-16);
        let t = end_to_end_transmittance(&channel(25.0, 0.0), &receiver(0.6, 1.0, 0.0));
        assert!((t - 1.507_131_858_905_748e-3).abs() < 1e-15);
    }

    #[test]
    fn wcp_gain_examples() {
        assert_eq!(wcp_gain(0.0, 0.3, 2.5e-6).unwrap(), 2.5e-6);
        let q = wcp_gain(1.0, 1e-8, 0.0).unwrap();
        assert!((q / 1e-8 - 1.0).abs() < 1e-6);
        let q = wcp_gain(0.5, 6e-4, 2.5e-6).unwrap();
        assert!((q - 3.024_542_546_121_512_7e-4).abs() < 1e-16);
        assert!(wcp_gain(-1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn qd_gain_examples() {
        let vac = PhotonNumberDistribution::vacuum();
        assert!((qd_gain(&vac, 0.01, 2.5e-6) - 2.5e-6).abs() < 1e-18);
        let single = PhotonNumberDistribution::truncated(0.0, 1.0, 0.0).unwrap();
        assert!((qd_gain(&single, 0.37, 0.0) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn qber_examples() {
        assert_eq!(qber_expected(1e-3, 0.0, 0.02).unwrap(), 0.02);
        assert_eq!(qber_expected(0.0, 1e-6, 0.02).unwrap(), 0.5);
        let e = qber_expected(3e-4, 2.5e-6, 0.02).unwrap();
        assert!((e - 0.023_966_942_148_760_33).abs() < 1e-15);
        assert!(matches!(qber_expected(0.0, 0.0, 0.02), Err(Error::NoDetections(_))));
    }

    #[test]
    fn pass_count_examples() {
        let c = pass_counts(76.4e6, 100.0, 0.5, 1e-4).unwrap();
        assert!((c.n_sent - 7.64e9).abs() < 1.0);
        let c = pass_counts(76.4e6, 100.0, 0.5, 0.0).unwrap();
        assert_eq!((c.n_detected, c.m_sifted), (0.0, 0.0));
        let c = pass_counts(300e6, 100.0, 0.5, 0.0).unwrap();
        assert!((c.n_sent - 3e10).abs() < 1.0);
        assert!(pass_counts(0.0, 100.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn slot_statistics_detection_bound() {
        let dist = qd_distribution(0.0316, 4.5e-6).unwrap();
        let link = LinkBudget::default().with_loss(25.0);
        let s = SlotStatistics::for_distribution(&dist, &link, 7.64e9).unwrap();
        assert!(s.p_det <= s.p_signal + s.p_background);
        assert!((s.p_det - qd_gain(&dist, link.transmittance(), link.background_prob())).abs() < 1e-15);
        assert!(s.qber >= 0.0 && s.qber <= 0.5);
    }

    proptest! {
        #[test]
        fn gain_monotone(mu in 0.01f64..2.0, eta in 1e-6f64..0.5, pbg in 0.0f64..1e-3) {
            let q = wcp_gain(mu, eta, pbg).unwrap();
            prop_assert!(wcp_gain(mu * 1.01, eta, pbg).unwrap() > q);
            prop_assert!(wcp_gain(mu, eta * 1.01, pbg).unwrap() > q);
            prop_assert!(wcp_gain(mu, eta, pbg + 1e-6).unwrap() > q);
        }

        #[test]
        fn poisson_source_matches_coherent_gain(mu in 0.0f64..0.1, eta in 0.0f64..1.0, pbg in 0.0f64..1e-3) {
            let dist = poisson_distribution(mu, 2).unwrap();
            let diff = (wcp_gain(mu, eta, pbg).unwrap() - qd_gain(&dist, eta, pbg)).abs();
            prop_assert!(diff <= dist.tail() + 1e-15);
            if eta <= 1e-3 {
                prop_assert!(diff < 1e-6);
            }
        }

        #[test]
        fn qber_bounded(ps in 0.0f64..1e-2, pbg in 1e-9f64..1e-3, ed in 0.0f64..0.5) {
            let e = qber_expected(ps, pbg, ed).unwrap();
            prop_assert!(e >= ed.min(0.5) - 1e-15 && e <= 0.5 + 1e-15);
        }
    }
}
