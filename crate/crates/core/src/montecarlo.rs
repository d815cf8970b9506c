//! Pulse-level Monte Carlo of a satellite pass and of the HBT bench.
//!
//! Every slot samples a photon number from the source, lets each photon
//! survive the link independently, routes survivors through Bob's passive
//! 50:50 basis choice and polarization analysis, and adds independent
//! background clicks per detector. The HBT bench is the same idea with two
//! detectors behind one 50:50 splitter.
//!
//! # Random streams
//!
//! Slots are processed in fixed-size chunks. Chunk `i` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`, so serial and
//! parallel execution produce identical tallies for the same master seed.
//!
//! # Sampling modes
//!
//! [`SamplingMode::PerSlot`] draws every slot literally. [`SamplingMode::SkipQuiet`]
//! draws the geometric gap to the next slot with any click and then samples
//! that slot conditional on being active; it has the same distribution and
//! makes full 1e10-slot passes tractable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{qd_key_from_counts, wcp_key_from_observables, AnalysisOptions, KeyRateResult, QdCounts};
use crate::error::{Error, Result};
use crate::finite::FiniteKeyParams;
use crate::keyrate::decoy::DecoyObservables;
use crate::link::LinkBudget;
use crate::source::{poisson_distribution, HbtMeasurement, PhotonNumberDistribution, SourceModel};

/// Truncation order for Poisson sources in the simulator.
const POISSON_ORDER: usize = 16;

pub const DEFAULT_CHUNK_SLOTS: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleClickPolicy {
    /// Squash multi-click slots: pick a clicked basis at random and a random
    /// bit when both detectors of that basis fired.
    #[default]
    RandomAssign,
    /// Drop every slot with more than one click from the sifted key.
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    #[default]
    PerSlot,
    SkipQuiet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub sampling: SamplingMode,
    pub execution: Execution,
    pub chunk_slots: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sampling: SamplingMode::PerSlot,
            execution: Execution::Parallel,
            chunk_slots: DEFAULT_CHUNK_SLOTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub num_slots: u64,
    pub source: SourceModel,
    pub link: LinkBudget,
    pub double_click: DoubleClickPolicy,
    pub run: RunOptions,
}

impl SimConfig {
    pub fn new(seed: u64, num_slots: u64, source: SourceModel, link: LinkBudget) -> Self {
        Self {
            seed,
            num_slots,
            source,
            link,
            double_click: DoubleClickPolicy::default(),
            run: RunOptions::default(),
        }
    }
}

/// Tallies for one intensity class (the QD source has a single class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassTally {
    pub sent: u64,
    /// Slots with at least one click.
    pub detected: u64,
    pub sifted: u64,
    pub errors: u64,
}

impl ClassTally {
    fn merge(&mut self, other: &ClassTally) {
        self.sent += other.sent;
        self.detected += other.detected;
        self.sifted += other.sifted;
        self.errors += other.errors;
    }

    pub fn gain(&self) -> f64 {
        self.detected as f64 / self.sent as f64
    }

    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimOutcome {
    pub num_slots: u64,
    /// Clicks per detector, ordered H, V, D, A.
    pub detections_per_detector: [u64; 4],
    pub detected: u64,
    /// Slots with two or more clicks.
    pub double_clicks: u64,
    /// Slots where more than two detectors clicked.
    pub three_way_coincidences: u64,
    pub sifted: u64,
    pub errors: u64,
    /// Per-class tallies: `[signal]` for QD, `[signal, decoy]` for WCP.
    pub classes: Vec<ClassTally>,
}

impl SimOutcome {
    fn empty(classes: usize) -> Self {
        Self {
            classes: vec![ClassTally::default(); classes],
            ..Self::default()
        }
    }

    fn merge(&mut self, other: &SimOutcome) {
        self.num_slots += other.num_slots;
        for (a, b) in self.detections_per_detector.iter_mut().zip(other.detections_per_detector) {
            *a += b;
        }
        self.detected += other.detected;
        self.double_clicks += other.double_clicks;
        self.three_way_coincidences += other.three_way_coincidences;
        self.sifted += other.sifted;
        self.errors += other.errors;
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.merge(b);
        }
    }

    pub fn observed_qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }
}

/// A group of slots sharing one photon-number distribution.
struct SlotClass {
    weight: f64,
    cumulative: Vec<f64>,
    /// Probability of `s` surviving photons, `s = 0..=max`.
    survivors: Vec<f64>,
}

impl SlotClass {
    fn new(weight: f64, dist: &PhotonNumberDistribution, eta: f64) -> Self {
        let probs = dist.probabilities();
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let max = dist.max_photons();
        let mut survivors = vec![0.0; max + 1];
        for (k, &pk) in probs.iter().enumerate() {
            for (s, slot) in survivors.iter_mut().enumerate().take(k + 1) {
                *slot += pk * binomial_pmf(k, s, eta);
            }
        }
        Self {
            weight,
            cumulative,
            survivors,
        }
    }

    /// Residual tail mass beyond the explicit terms is emitted as vacuum.
    fn sample_photons(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative.iter().position(|&c| u < c).unwrap_or(0)
    }
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut coeff = 1.0;
    for i in 0..k {
        coeff *= (n - i) as f64 / (i + 1) as f64;
    }
    coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

fn source_classes(source: &SourceModel, eta: f64) -> Result<Vec<SlotClass>> {
    Ok(match source {
        SourceModel::Qd(qd) => vec![SlotClass::new(1.0, &qd.distribution()?, eta)],
        SourceModel::Wcp(w) => vec![
            SlotClass::new(w.signal_fraction, &poisson_distribution(w.mu, POISSON_ORDER)?, eta),
            SlotClass::new(1.0 - w.signal_fraction, &poisson_distribution(w.nu, POISSON_ORDER)?, eta),
        ],
    })
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn run_chunks<T, F>(num_slots: u64, run: &RunOptions, seed: u64, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    if run.chunk_slots == 0 {
        return Err(Error::Domain("chunk size must be positive".into()));
    }
    let chunks = num_slots.div_ceil(run.chunk_slots);
    let one = |i: u64| {
        let len = run.chunk_slots.min(num_slots - i * run.chunk_slots);
        work(&mut chunk_rng(seed, i), len)
    };
    Ok(match run.execution {
        Execution::Serial => (0..chunks).map(one).collect(),
        Execution::Parallel => (0..chunks).into_par_iter().map(one).collect(),
    })
}

/// Independent per-detector click probability giving a total background
/// probability `p_bg` over `detectors` detectors.
fn per_detector_prob(p_bg: f64, detectors: u32) -> f64 {
    -((1.0 - p_bg).ln() / detectors as f64).exp_m1()
}

/// Samples per-detector background clicks conditioned on at least one click.
/// `first[i]` is the cumulative probability that detector `i` is the first
/// to click, normalized by the probability of any click.
fn nonempty_mask(rng: &mut ChaCha8Rng, first: &[f64], per_detector: f64) -> u8 {
    let u: f64 = rng.gen();
    let lead = first.iter().position(|&c| u < c).unwrap_or(first.len() - 1);
    let mut mask = 1u8 << lead;
    for j in (lead + 1)..first.len() {
        if rng.gen::<f64>() < per_detector {
            mask |= 1 << j;
        }
    }
    mask
}

fn first_click_table(per_detector: f64, detectors: usize) -> Vec<f64> {
    let any = 1.0 - (1.0 - per_detector).powi(detectors as i32);
    let mut acc = 0.0;
    (0..detectors)
        .map(|i| {
            acc += (1.0 - per_detector).powi(i as i32) * per_detector / any;
            acc
        })
        .collect()
}

fn background_mask(rng: &mut ChaCha8Rng, per_detector: f64, detectors: usize) -> u8 {
    let mut mask = 0u8;
    if per_detector > 0.0 {
        for j in 0..detectors {
            if rng.gen::<f64>() < per_detector {
                mask |= 1 << j;
            }
        }
    }
    mask
}

/// Static parameters of a pass simulation.
struct PassModel {
    classes: Vec<SlotClass>,
    eta: f64,
    intrinsic_error: f64,
    per_detector: f64,
    first_click: Vec<f64>,
    policy: DoubleClickPolicy,
}

impl PassModel {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.source.validate()?;
        cfg.link.validate()?;
        if cfg.link.receiver.num_detectors != 4 {
            return Err(Error::Domain(format!(
                "pass simulation models a four-detector receiver, got {}",
                cfg.link.receiver.num_detectors
            )));
        }
        let eta = cfg.link.transmittance();
        let per_detector = per_detector_prob(cfg.link.background_prob(), 4);
        Ok(Self {
            classes: source_classes(&cfg.source, eta)?,
            eta,
            intrinsic_error: cfg.link.receiver.intrinsic_error,
            per_detector,
            first_click: first_click_table(per_detector, 4),
            policy: cfg.double_click,
        })
    }

    /// Routes `survivors` photons through Bob's receiver, merges background
    /// clicks and tallies the slot.
    fn resolve(&self, rng: &mut ChaCha8Rng, survivors: usize, background: u8, class: &mut ClassTally, out: &mut SimOutcome) {
        let alice_basis = rng.gen::<bool>() as u8;
        let alice_bit = rng.gen::<bool>() as u8;
        let mut mask = background;
        for _ in 0..survivors {
            let basis = rng.gen::<bool>() as u8;
            let bit = if basis == alice_basis {
                alice_bit ^ (rng.gen::<f64>() < self.intrinsic_error) as u8
            } else {
                rng.gen::<bool>() as u8
            };
            mask |= 1 << (2 * basis + bit);
        }
        if mask == 0 {
            return;
        }
        class.detected += 1;
        out.detected += 1;
        for (d, count) in out.detections_per_detector.iter_mut().enumerate() {
            *count += u64::from(mask >> d & 1);
        }
        let clicks = mask.count_ones();
        if clicks >= 2 {
            out.double_clicks += 1;
            if clicks >= 3 {
                out.three_way_coincidences += 1;
            }
            if self.policy == DoubleClickPolicy::Discard {
                return;
            }
        }

        let in_basis = |b: u8| mask >> (2 * b) & 0b11;
        let basis = match (in_basis(0) != 0, in_basis(1) != 0) {
            (true, true) => rng.gen::<bool>() as u8,
            (true, false) => 0,
            _ => 1,
        };
        let bit = match in_basis(basis) {
            0b01 => 0,
            0b10 => 1,
            _ => rng.gen::<bool>() as u8,
        };
        if basis == alice_basis {
            class.sifted += 1;
            out.sifted += 1;
            if bit != alice_bit {
                class.errors += 1;
                out.errors += 1;
            }
        }
    }

    fn per_slot(&self, rng: &mut ChaCha8Rng, class_idx: usize, slots: u64, out: &mut SimOutcome) {
        let class = &self.classes[class_idx];
        let mut tally = ClassTally {
            sent: slots,
            ..ClassTally::default()
        };
        for _ in 0..slots {
            let photons = class.sample_photons(rng);
            let survivors = (0..photons).filter(|_| rng.gen::<f64>() < self.eta).count();
            let background = background_mask(rng, self.per_detector, 4);
            if survivors > 0 || background != 0 {
                self.resolve(rng, survivors, background, &mut tally, out);
            }
        }
        out.classes[class_idx].merge(&tally);
    }

    fn skip_quiet(&self, rng: &mut ChaCha8Rng, class_idx: usize, slots: u64, out: &mut SimOutcome) {
        let class = &self.classes[class_idx];
        let mut tally = ClassTally {
            sent: slots,
            ..ClassTally::default()
        };
        let with_photon: f64 = class.survivors[1..].iter().sum();
        let no_background = (1.0 - self.per_detector).powi(4);
        let active = with_photon + class.survivors[0] * (1.0 - no_background);
        if active > 0.0 {
            let gap = Geometric::new(active.min(1.0)).expect("valid activity probability");
            let mut survivor_cdf = Vec::with_capacity(class.survivors.len() - 1);
            let mut acc = 0.0;
            for &p in &class.survivors[1..] {
                acc += p / with_photon;
                survivor_cdf.push(acc);
            }
            let photon_share = with_photon / active;
            let mut position = 0u64;
            loop {
                position = position.saturating_add(gap.sample(rng));
                if position >= slots {
                    break;
                }
                if rng.gen::<f64>() < photon_share {
                    let u: f64 = rng.gen();
                    let survivors = 1 + survivor_cdf.iter().position(|&c| u < c).unwrap_or(survivor_cdf.len() - 1);
                    let background = background_mask(rng, self.per_detector, 4);
                    self.resolve(rng, survivors, background, &mut tally, out);
                } else {
                    let background = nonempty_mask(rng, &self.first_click, self.per_detector);
                    self.resolve(rng, 0, background, &mut tally, out);
                }
                position += 1;
            }
        }
        out.classes[class_idx].merge(&tally);
    }

    fn chunk(&self, rng: &mut ChaCha8Rng, len: u64, sampling: SamplingMode) -> SimOutcome {
        let mut out = SimOutcome::empty(self.classes.len());
        out.num_slots = len;
        match sampling {
            SamplingMode::PerSlot if self.classes.len() == 1 => self.per_slot(rng, 0, len, &mut out),
            SamplingMode::PerSlot => {
                // Slot-by-slot intensity choice, processed one slot at a time.
                let weight = self.classes[0].weight;
                for _ in 0..len {
                    let idx = usize::from(rng.gen::<f64>() >= weight);
                    self.per_slot(rng, idx, 1, &mut out);
                }
            }
            SamplingMode::SkipQuiet => {
                let mut remaining = len;
                for idx in 0..self.classes.len() {
                    let count = if idx + 1 == self.classes.len() {
                        remaining
                    } else {
                        let share = self.classes[idx].weight.clamp(0.0, 1.0);
                        Binomial::new(remaining, share).expect("valid share").sample(rng)
                    };
                    remaining -= count;
                    self.skip_quiet(rng, idx, count, &mut out);
                }
            }
        }
        out
    }
}

/// Simulates `cfg.num_slots` pulse slots of a QKD pass.
pub fn simulate_pass(cfg: &SimConfig) -> Result<SimOutcome> {
    let model = PassModel::new(cfg)?;
    let parts = run_chunks(cfg.num_slots, &cfg.run, cfg.seed, |rng, len| {
        model.chunk(rng, len, cfg.run.sampling)
    })?;
    let mut total = SimOutcome::empty(model.classes.len());
    for part in &parts {
        total.merge(part);
    }
    Ok(total)
}

/// Simulates the HBT bench: each photon is detected with probability `eta`
/// and sent to either detector with probability 1/2; each detector also
/// fires on a dark count with probability `window_dark_prob`.
pub fn simulate_hbt(
    dist: &PhotonNumberDistribution,
    eta: f64,
    num_slots: u64,
    window_dark_prob: f64,
    seed: u64,
) -> Result<HbtMeasurement> {
    simulate_hbt_with(dist, eta, num_slots, window_dark_prob, seed, &RunOptions::default())
}

pub fn simulate_hbt_with(
    dist: &PhotonNumberDistribution,
    eta: f64,
    num_slots: u64,
    window_dark_prob: f64,
    seed: u64,
    run: &RunOptions,
) -> Result<HbtMeasurement> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("bench efficiency {eta} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&window_dark_prob) {
        return Err(Error::Domain(format!("dark probability {window_dark_prob} is not a probability")));
    }
    let class = SlotClass::new(1.0, dist, eta);
    let first_click = first_click_table(window_dark_prob, 2);

    let classify = |mask: u8, counts: &mut (u64, u64)| match mask {
        0b11 => counts.0 += 1,
        0b01 | 0b10 => counts.1 += 1,
        _ => {}
    };
    let route = |rng: &mut ChaCha8Rng, survivors: usize, mut mask: u8| {
        for _ in 0..survivors {
            mask |= 1 << (rng.gen::<bool>() as u8);
        }
        mask
    };

    let parts = run_chunks(num_slots, run, seed, |rng, len| {
        let mut counts = (0u64, 0u64);
        match run.sampling {
            SamplingMode::PerSlot => {
                for _ in 0..len {
                    let photons = class.sample_photons(rng);
                    let survivors = (0..photons).filter(|_| rng.gen::<f64>() < eta).count();
                    let dark = background_mask(rng, window_dark_prob, 2);
                    if survivors > 0 || dark != 0 {
                        classify(route(rng, survivors, dark), &mut counts);
                    }
                }
            }
            SamplingMode::SkipQuiet => {
                let with_photon: f64 = class.survivors[1..].iter().sum();
                let quiet_dark = (1.0 - window_dark_prob).powi(2);
                let active = with_photon + class.survivors[0] * (1.0 - quiet_dark);
                if active > 0.0 {
                    let gap = Geometric::new(active.min(1.0)).expect("valid activity probability");
                    let photon_share = with_photon / active;
                    let mut position = 0u64;
                    loop {
                        position = position.saturating_add(gap.sample(rng));
                        if position >= len {
                            break;
                        }
                        let mask = if rng.gen::<f64>() < photon_share {
                            let mut u: f64 = rng.gen::<f64>() * with_photon;
                            let mut survivors = class.survivors.len() - 1;
                            for (s, &p) in class.survivors.iter().enumerate().skip(1) {
                                if u < p {
                                    survivors = s;
                                    break;
                                }
                                u -= p;
                            }
                            let dark = background_mask(rng, window_dark_prob, 2);
                            route(rng, survivors, dark)
                        } else {
                            nonempty_mask(rng, &first_click, window_dark_prob)
                        };
                        classify(mask, &mut counts);
                        position += 1;
                    }
                }
            }
        }
        counts
    })?;
    let (coincidences, solitary) = parts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    HbtMeasurement::new(coincidences, solitary, num_slots, eta)
}

/// Simulates a pass and feeds the observed tallies to the matching key-length
/// model. The QD path uses the source's configured `P_m` bound; the
/// decoy-state path uses the per-intensity gains and error rates.
pub fn empirical_key_pipeline(
    cfg: &SimConfig,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    let outcome = simulate_pass(cfg)?;
    key_from_outcome(cfg, &outcome, params, opts)
}

pub fn key_from_outcome(
    cfg: &SimConfig,
    outcome: &SimOutcome,
    params: &FiniteKeyParams,
    opts: &AnalysisOptions,
) -> Result<KeyRateResult> {
    let loss_db = cfg.link.channel.loss_db;
    let n = outcome.num_slots as f64;
    match &cfg.source {
        SourceModel::Qd(qd) => {
            let counts = QdCounts {
                n_sent: n,
                n_detected: outcome.detected as f64,
                m_sifted: outcome.sifted as f64,
                qber: outcome.observed_qber().unwrap_or(0.5),
            };
            qd_key_from_counts(loss_db, &counts, qd.multiphoton, params, opts)
        }
        SourceModel::Wcp(wcp) => {
            let obs = decoy_observables(outcome)?;
            wcp_key_from_observables(loss_db, &obs, wcp, cfg.link.background_prob(), params, opts)
        }
    }
}

/// Decoy observables from a two-class outcome. A class without sifted bits
/// reports the worst-case QBER of 1/2.
pub fn decoy_observables(outcome: &SimOutcome) -> Result<DecoyObservables> {
    let [signal, decoy] = outcome.classes.as_slice() else {
        return Err(Error::Domain(format!(
            "decoy observables need two intensity classes, got {}",
            outcome.classes.len()
        )));
    };
    Ok(DecoyObservables {
        n_total: outcome.num_slots as f64,
        n_signal_detected: signal.detected as f64,
        gain_signal: signal.gain(),
        gain_decoy: decoy.gain(),
        qber_signal: signal.qber().unwrap_or(0.5),
        qber_decoy: decoy.qber().unwrap_or(0.5),
        sent_signal: signal.sent as f64,
        sent_decoy: decoy.sent as f64,
    })
}
