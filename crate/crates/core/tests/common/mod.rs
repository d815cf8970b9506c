//! Exact click-model oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

/// Independent per-detector background probability for a total `p_bg` over
/// four detectors.
pub fn per_detector(p_bg: f64) -> f64 {
    1.0 - (1.0 - p_bg).powf(0.25)
}

/// Single-photon yield and sifted error rate of the four-detector receiver,
/// by exhaustive enumeration of photon routing, background masks and the
/// squashing rule (random clicked basis, random bit on same-basis double
/// clicks). Alice sends bit 0 in basis 0 without loss of generality.
pub fn single_photon_truth(eta: f64, p_bg: f64, intrinsic_error: f64) -> (f64, f64) {
    let pd = per_detector(p_bg);
    // (probability, photon mask)
    let mut photon = vec![(1.0 - eta, 0u8)];
    for bob_basis in 0..2u8 {
        for bit in 0..2u8 {
            let p_bit = if bob_basis == 0 {
                if bit == 0 { 1.0 - intrinsic_error } else { intrinsic_error }
            } else {
                0.5
            };
            photon.push((eta * 0.5 * p_bit, 1 << (2 * bob_basis + bit)));
        }
    }

    let (mut detected, mut sifted, mut errors) = (0.0, 0.0, 0.0);
    for &(p_photon, photon_mask) in &photon {
        for bg in 0..16u8 {
            let p_bg_mask: f64 = (0..4)
                .map(|d| if bg >> d & 1 == 1 { pd } else { 1.0 - pd })
                .product();
            let mask = photon_mask | bg;
            if mask == 0 {
                continue;
            }
            let p = p_photon * p_bg_mask;
            detected += p;
            let basis0 = mask & 0b0011;
            let basis1 = mask & 0b1100;
            let p_basis0 = match (basis0 != 0, basis1 != 0) {
                (true, true) => 0.5,
                (true, false) => 1.0,
                _ => 0.0,
            };
            let p_error = match basis0 {
                0b01 => 0.0,
                0b10 => 1.0,
                _ => 0.5,
            };
            sifted += p * p_basis0;
            errors += p * p_basis0 * p_error;
        }
    }
    (detected, errors / sifted)
}

/// Number of standard errors between an observed count and its binomial
/// expectation.
pub fn z_score(observed: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    let se = (n * p * (1.0 - p)).sqrt();
    (observed as f64 - n * p) / se
}

/// Exact HBT click probabilities for independent 50:50 routing, no dark
/// counts: (coincidence, solitary) for an `n`-photon pulse.
pub fn hbt_truth(probs: &[f64], eta: f64) -> (f64, f64) {
    let (mut c, mut s) = (0.0, 0.0);
    for (n, &p) in probs.iter().enumerate() {
        if n == 0 {
            continue;
        }
        // Each photon independently: lost, arm A or arm B.
        let none = (1.0 - eta).powi(n as i32);
        let only_a = (1.0 - eta / 2.0).powi(n as i32) - none;
        s += p * 2.0 * only_a;
        c += p * (1.0 - none - 2.0 * only_a);
    }
    (c, s)
}
