//! Expected-value key analysis of one operating point: source + link +
//! finite-key parameters in, optimized key length and intermediates out.
//!
//! Failures that simply mean "no key here" (no detections, too few bits,
//! collapsed decoy bounds) become a zero-key result with a cause; genuine
//! configuration errors propagate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite::FiniteKeyParams;
use crate::keyrate::decoy::{decoy_bounds, wcp_key_length, DecoyConfig, DecoyObservables};
use crate::keyrate::qd::{qd_key_length, QdKeyInput};
use crate::keyrate::ZeroKeyCause;
use crate::link::{LinkBudget, SlotStatistics};
use crate::optimizer::{optimize_epsilons, EpsilonBudget, GridSpec};
use crate::source::{QdSourceSpec, SourceModel, WcpSourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Total failure probability `ε̄ + ε_PA + ε_EC`.
    pub eps_total: f64,
    /// Optimize the (ε̄, ε_PA) split; otherwise use the split in the params.
    pub optimize: bool,
    pub grid: GridSpec,
    pub decoy: DecoyConfig,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            eps_total: EpsilonBudget::default().eps_total,
            optimize: true,
            grid: GridSpec::default(),
            decoy: DecoyConfig::default(),
        }
    }
}

impl AnalysisOptions {
    pub fn budget(&self, params: &FiniteKeyParams) -> EpsilonBudget {
        EpsilonBudget {
            eps_total: self.eps_total,
            eps_ec: params.eps_ec,
        }
    }
}

/// One row of a loss sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateResult {
    pub loss_db: f64,
    pub key_bits: f64,
    pub n_sent: f64,
    /// Detected slots (signal class only for decoy-state sources).
    pub n_detected: f64,
    pub m_sifted: f64,
    pub qber: f64,
    /// Ẽ; blank for decoy-state sources.
    pub qber_adjusted: Option<f64>,
    /// `A` for the QD source, `Q1_L` for decoy-state sources.
    pub correction: Option<f64>,
    pub e1_upper: Option<f64>,
    pub delta: Option<f64>,
    pub eps_bar: f64,
    pub eps_pa: f64,
    pub cause: Option<ZeroKeyCause>,
}

impl KeyRateResult {
    fn blank(loss_db: f64, params: &FiniteKeyParams) -> Self {
        Self {
            loss_db,
            key_bits: 0.0,
            n_sent: 0.0,
            n_detected: 0.0,
            m_sifted: 0.0,
            qber: 0.0,
            qber_adjusted: None,
            correction: None,
            e1_upper: None,
            delta: None,
            eps_bar: params.eps_bar,
            eps_pa: params.eps_pa,
            cause: None,
        }
    }

    /// Row for a sweep point that failed outright.
    pub fn failed(loss_db: f64, params: &FiniteKeyParams, err: &Error) -> Self {
        Self {
            cause: Some(ZeroKeyCause::Failed(err.to_string())),
            ..Self::blank(loss_db, params)
        }
    }
}

/// Maps "no key" errors to a cause; anything else is a real failure.
fn zero_cause(err: &Error) -> Option<ZeroKeyCause> {
    match err {
        Error::NoDetections(_) => Some(ZeroKeyCause::NoDetections),
        Error::InsufficientData(_) => Some(ZeroKeyCause::InsufficientStatistics),
        Error::BoundsCollapse { .. } => Some(ZeroKeyCause::BoundsCollapse),
        _ => None,
    }
}

/// Picks the split: optimized, or the one given in `params`.
fn choose_split<F>(objective: F, params: &FiniteKeyParams, opts: &AnalysisOptions) -> Result<(f64, f64)>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !opts.optimize {
        return Ok((params.eps_bar, params.eps_pa));
    }
    let split = optimize_epsilons(objective, &opts.budget(params), &opts.grid)?;
    Ok((split.eps_bar, split.eps_pa))
}

/// Counts feeding the QD key length, from expectation or simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdCounts {
    pub n_sent: f64,
    pub n_detected: f64,
    pub m_sifted: f64,
    pub qber: f64,
}

pub fn qd_key_from_counts(
    loss_db: f64,
    counts: &QdCounts,
    multiphoton: f64,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    params.validate()?;
    let mut row = KeyRateResult {
        n_sent: counts.n_sent,
        n_detected: counts.n_detected,
        m_sifted: counts.m_sifted,
        qber: counts.qber,
        ..KeyRateResult::blank(loss_db, params)
    };
    let input = QdKeyInput {
        n_raw: counts.n_detected,
        m_sifted: counts.m_sifted,
        qber: counts.qber,
        p_det: counts.n_detected / counts.n_sent,
        multiphoton,
    };
    let evaluate = |p: &FiniteKeyParams| qd_key_length(&input, p);

    let probe = match evaluate(params) {
        Ok(key) => key,
        Err(e) => {
            row.cause = Some(zero_cause(&e).ok_or(e)?);
            return Ok(row);
        }
    };
    row.qber_adjusted = Some(probe.adjusted_qber);
    row.correction = Some(probe.correction_a);
    if matches!(
        probe.cause,
        Some(ZeroKeyCause::MultiPhotonDominated | ZeroKeyCause::NoiseDominated)
    ) {
        // These do not depend on the split.
        row.delta = Some(probe.delta);
        row.cause = probe.cause;
        return Ok(row);
    }

    let objective = |b: f64, p: f64| {
        evaluate(&params.with_split(b, p))
            .map(|k| k.unclamped)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (eps_bar, eps_pa) = choose_split(objective, params, opts)?;
    let key = evaluate(&params.with_split(eps_bar, eps_pa))?;
    row.key_bits = key.bits;
    row.delta = Some(key.delta);
    row.eps_bar = eps_bar;
    row.eps_pa = eps_pa;
    row.cause = key.cause;
    Ok(row)
}

pub fn analyze_qd(
    qd: &QdSourceSpec,
    link: &LinkBudget,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    qd.validate()?;
    link.validate()?;
    let loss_db = link.channel.loss_db;
    let n_sent = qd.rep_rate_hz * link.channel.pass_duration_s;
    let stats = match SlotStatistics::for_distribution(&qd.distribution()?, link, n_sent) {
        Ok(s) => s,
        Err(e) => {
            return Ok(KeyRateResult {
                n_sent,
                cause: Some(zero_cause(&e).ok_or(e)?),
                ..KeyRateResult::blank(loss_db, params)
            })
        }
    };
    let counts = QdCounts {
        n_sent,
        n_detected: stats.n_detected,
        m_sifted: params.sifting_ratio * stats.n_detected,
        qber: stats.qber,
    };
    qd_key_from_counts(loss_db, &counts, qd.multiphoton, params, opts)
}

pub fn wcp_key_from_observables(
    loss_db: f64,
    obs: &DecoyObservables,
    wcp: &WcpSourceSpec,
    background_prob: f64,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    params.validate()?;
    let mut row = KeyRateResult {
        n_sent: obs.n_total,
        n_detected: obs.n_signal_detected,
        m_sifted: params.sifting_ratio * obs.n_signal_detected,
        qber: obs.qber_signal,
        ..KeyRateResult::blank(loss_db, params)
    };
    let bounds = match decoy_bounds(obs, wcp.mu, wcp.nu, params.eps_pe, background_prob, &opts.decoy) {
        Ok(b) => b,
        Err(e) => {
            row.cause = Some(zero_cause(&e).ok_or(e)?);
            return Ok(row);
        }
    };
    row.correction = Some(bounds.q1_lower);
    row.e1_upper = Some(bounds.e1_upper);

    let evaluate = |p: &FiniteKeyParams| wcp_key_length(obs, &bounds, p, wcp.signal_fraction);
    if let Err(e) = evaluate(params) {
        row.cause = Some(zero_cause(&e).ok_or(e)?);
        return Ok(row);
    }
    let objective = |b: f64, p: f64| {
        evaluate(&params.with_split(b, p))
            .map(|k| k.unclamped)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (eps_bar, eps_pa) = choose_split(objective, params, opts)?;
    let key = evaluate(&params.with_split(eps_bar, eps_pa))?;
    row.key_bits = key.bits;
    row.delta = Some(key.delta);
    row.eps_bar = eps_bar;
    row.eps_pa = eps_pa;
    row.cause = key.cause;
    Ok(row)
}

/// Expected decoy observables of a pass.
pub fn expected_decoy_observables(wcp: &WcpSourceSpec, link: &LinkBudget) -> Result<DecoyObservables> {
    let n_total = wcp.rep_rate_hz * link.channel.pass_duration_s;
    let sent_signal = wcp.signal_fraction * n_total;
    let sent_decoy = n_total - sent_signal;
    let signal = SlotStatistics::for_coherent(wcp.mu, link, sent_signal)?;
    let decoy = SlotStatistics::for_coherent(wcp.nu, link, sent_decoy)?;
    Ok(DecoyObservables {
        n_total,
        n_signal_detected: signal.n_detected,
        gain_signal: signal.p_det,
        gain_decoy: decoy.p_det,
        qber_signal: signal.qber,
        qber_decoy: decoy.qber,
        sent_signal,
        sent_decoy,
    })
}

pub fn analyze_wcp(
    wcp: &WcpSourceSpec,
    link: &LinkBudget,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    wcp.validate()?;
    link.validate()?;
    let loss_db = link.channel.loss_db;
    let obs = match expected_decoy_observables(wcp, link) {
        Ok(o) => o,
        Err(e) => {
            return Ok(KeyRateResult {
                n_sent: wcp.rep_rate_hz * link.channel.pass_duration_s,
                cause: Some(zero_cause(&e).ok_or(e)?),
                ..KeyRateResult::blank(loss_db, params)
            })
        }
    };
    wcp_key_from_observables(loss_db, &obs, wcp, link.background_prob(), params, opts)
}

pub fn analyze(
    source: &SourceModel,
    link: &LinkBudget,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    match source {
        SourceModel::Qd(qd) => analyze_qd(qd, link, params, opts),
        SourceModel::Wcp(wcp) => analyze_wcp(wcp, link, params, opts),
    }
}
