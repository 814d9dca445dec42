//! Independent validation paths for the analytical BER engine.
//!
//! Two oracles that share no code with the quadrature engine: a bit-level
//! Monte Carlo simulation of the full receiver decision (fading draw, bit
//! stream, integrated current, CSI threshold), and the Gaussian
//! photon-counting approximation
//! `Q((m1 - m0) / (sqrt(m1 + sigma2_m) + sqrt(m0 + sigma2_m)))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::{sample_fading, FadingSpec};
use crate::link::{gaussian_q, MimoScenario};

/// Outcome of a bit-level Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McRunReport {
    /// Bits actually simulated (may be fewer than requested when early
    /// stopping is enabled).
    pub bits_simulated: u64,
    /// Decision errors observed.
    pub errors_observed: u64,
    /// `errors / bits`.
    pub ber_estimate: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub binomial_std_error: f64,
    /// Seed the run was started from.
    pub seed: u64,
}

impl McRunReport {
    fn from_counts(bits: u64, errors: u64, seed: u64) -> Self {
        let p = errors as f64 / bits as f64;
        Self {
            bits_simulated: bits,
            errors_observed: errors,
            ber_estimate: p,
            binomial_std_error: (p * (1.0 - p) / bits as f64).sqrt(),
            seed,
        }
    }
}

/// Gaussian-approximation photon-counting BER for mean counts `m1` (bit 1)
/// and `m0` (bit 0) with count-domain noise variance `sigma2_m`:
///
/// `Q((m1 - m0) / (sqrt(m1 + sigma2_m) + sqrt(m0 + sigma2_m)))`
pub fn gaussian_counting_ber(m1: f64, m0: f64, sigma2_m: f64) -> Result<f64> {
    if !(m0 >= 0.0) || !m0.is_finite() || !m1.is_finite() {
        return Err(Error::invalid(
            "m0",
            format!("mean counts must be finite with m0 >= 0, got m0 = {m0}, m1 = {m1}"),
        ));
    }
    if m1 <= m0 {
        return Err(Error::invalid(
            "m1",
            format!("signaling requires m1 > m0, got m1 = {m1}, m0 = {m0}"),
        ));
    }
    if !(sigma2_m >= 0.0) || !sigma2_m.is_finite() {
        return Err(Error::invalid(
            "sigma2_m",
            format!("count variance must be finite and >= 0, got {sigma2_m}"),
        ));
    }
    let arg = (m1 - m0) / ((m1 + sigma2_m).sqrt() + (m0 + sigma2_m).sqrt());
    Ok(gaussian_q(arg))
}

/// Options for [`simulate_link_ber_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Stop after at least this many errors have accumulated (checked at
    /// deterministic batch boundaries, so the result is still independent
    /// of the worker count). `None` simulates every requested bit.
    pub stop_after_errors: Option<u64>,
}

// Decisions per random stream.
const DECISION_BLOCK: u64 = 8192;
// Blocks dispatched per round; early stopping is evaluated between rounds.
const BLOCKS_PER_ROUND: u64 = 64;

/// Bit-level Monte Carlo estimate of the link BER.
///
/// Every decision draws a fresh fading matrix (held fixed across the
/// `L_max + 1` bits that enter that decision), a random surrounding bit
/// pattern, and Gaussian noise of variance `N * sigma_tb^2`; the receiver
/// compares the combined integrated current against the CSI threshold
/// `sum_ij h_ij gamma_s_ij / 2`.
pub fn simulate_link_ber(scn: &MimoScenario, n_bits: u64, rng_seed: u64) -> Result<McRunReport> {
    simulate_link_ber_with(scn, n_bits, rng_seed, SimOptions::default())
}

/// [`simulate_link_ber`] with early-stopping options.
pub fn simulate_link_ber_with(
    scn: &MimoScenario,
    n_bits: u64,
    rng_seed: u64,
    options: SimOptions,
) -> Result<McRunReport> {
    if n_bits < 10_000 {
        return Err(Error::invalid(
            "n_bits",
            format!("need at least 10^4 bits for a meaningful estimate, got {n_bits}"),
        ));
    }
    let lmax = scn.max_memory() as u32;
    let sigma = scn.combined_sigma_tb();
    let blocks = n_bits.div_ceil(DECISION_BLOCK);

    let mut bits_done = 0u64;
    let mut errors = 0u64;
    let mut next_block = 0u64;
    while next_block < blocks {
        let round_end = (next_block + BLOCKS_PER_ROUND).min(blocks);
        let round: Vec<(u64, u64)> = (next_block..round_end)
            .into_par_iter()
            .map(|block| {
                let first = block * DECISION_BLOCK;
                let count = DECISION_BLOCK.min(n_bits - first);
                let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
                rng.set_stream(block);
                (count, simulate_decisions(scn, lmax, sigma, count, &mut rng))
            })
            .collect();
        for (count, errs) in round {
            bits_done += count;
            errors += errs;
        }
        next_block = round_end;
        if let Some(target) = options.stop_after_errors {
            if errors >= target {
                break;
            }
        }
    }

    Ok(McRunReport::from_counts(bits_done, errors, rng_seed))
}

fn simulate_decisions(
    scn: &MimoScenario,
    lmax: u32,
    sigma: f64,
    count: u64,
    rng: &mut ChaCha12Rng,
) -> u64 {
    let links = scn.links();
    let mut fading = vec![1.0f64; links];
    let mut errors = 0u64;

    for _ in 0..count {
        let b0 = rng.random::<bool>();
        let pattern: u64 = if lmax == 0 {
            0
        } else {
            rng.random::<u64>() & ((1u64 << lmax) - 1)
        };
        for (h, spec) in fading.iter_mut().zip(scn.fadings()) {
            *h = sample_fading(*spec, rng);
        }

        let mut signal = 0.0f64;
        let mut threshold = 0.0f64;
        for (link, &h) in fading.iter().enumerate() {
            let gamma = &scn.gammas()[link];
            threshold += h * gamma.gamma_s;
            let mut current = if b0 { h * gamma.gamma_s } else { 0.0 };
            for (k, &g) in gamma.gamma_isi.iter().enumerate() {
                if (pattern >> k) & 1 == 1 {
                    current += h * g;
                }
            }
            signal += current;
        }
        threshold /= 2.0;

        let noise: f64 = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        } else {
            0.0
        };
        let r = signal + noise;

        let error = if b0 { r <= threshold } else { r >= threshold };
        if error {
            errors += 1;
        }
    }
    errors
}

/// Minimum sample count for [`lognormal_sum_cdf_mc`].
pub const MIN_CDF_SAMPLES: u64 = 100_000;

/// Draw i.i.d. samples of the weighted log-normal sum `sum_i G_i h_i` and
/// return them sorted ascending, ready for a Kolmogorov-Smirnov comparison
/// against a candidate CDF.
pub fn lognormal_sum_cdf_mc(
    weights: &[f64],
    specs: &[FadingSpec],
    n_samples: u64,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if n_samples < MIN_CDF_SAMPLES {
        return Err(Error::invalid(
            "n_samples",
            format!("need at least {MIN_CDF_SAMPLES} samples, got {n_samples}"),
        ));
    }
    if weights.is_empty() {
        return Err(Error::EmptyInput("lognormal_sum_cdf_mc weights"));
    }
    if weights.len() != specs.len() {
        return Err(Error::invalid(
            "specs",
            format!(
                "weights ({}) and specs ({}) must have the same length",
                weights.len(),
                specs.len()
            ),
        ));
    }

    const SAMPLE_BLOCK: u64 = 65_536;
    let blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    let mut samples: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let first = block * SAMPLE_BLOCK;
            let count = SAMPLE_BLOCK.min(n_samples - first);
            let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
            rng.set_stream(block);
            let weights = weights.to_vec();
            let specs = specs.to_vec();
            (0..count)
                .map(move |_| {
                    weights
                        .iter()
                        .zip(&specs)
                        .map(|(&g, &spec)| g * sample_fading(spec, &mut rng))
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(samples)
}

/// Kolmogorov-Smirnov distance between sorted samples and a reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted_samples: &[f64], cdf: F) -> f64 {
    let n = sorted_samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted_samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Large-sample Kolmogorov-Smirnov critical value at significance `alpha`
/// (0.01 or 0.05).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let coefficient = if alpha <= 0.01 { 1.628 } else { 1.358 };
    coefficient / (n as f64).sqrt()
}
