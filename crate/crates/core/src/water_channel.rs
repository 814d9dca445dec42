//! Monte Carlo photon transport through absorbing, scattering water.
//!
//! Produces the turbulence-free impulse response between one transmitter
//! and one receiver: photons are launched inside the transmit divergence
//! cone, propagated with exponential free paths at the extinction rate,
//! re-weighted by the single-scattering albedo at every collision, steered
//! by the Henyey-Greenstein phase function, and recorded when they cross
//! the receiver aperture disc inside the field-of-view cone. Arrival times
//! are histogrammed relative to the line-of-sight delay as fractions of the
//! transmitted energy.
//!
//! Photons are simulated in fixed-size blocks, each block drawing from its
//! own counter-indexed random stream, and block histograms are merged in
//! block order, so the result is bitwise identical for a given seed no
//! matter how many worker threads run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::geom::{rotate_direction, Vec3};

/// Inherent optical properties of the water column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProperties {
    /// Absorption coefficient a (1/m).
    pub absorption: f64,
    /// Scattering coefficient b (1/m).
    pub scattering: f64,
    /// Extinction coefficient c = a + b (1/m).
    pub extinction: f64,
    /// Henyey-Greenstein asymmetry parameter g, in (-1, 1).
    pub asymmetry: f64,
}

/// Default Henyey-Greenstein asymmetry for ocean water.
pub const DEFAULT_ASYMMETRY: f64 = 0.924;

impl WaterProperties {
    /// Build from absorption and scattering coefficients; the extinction
    /// coefficient is their sum.
    pub fn new(absorption: f64, scattering: f64, asymmetry: f64) -> Result<Self> {
        let props = Self {
            absorption,
            scattering,
            extinction: absorption + scattering,
            asymmetry,
        };
        props.validate()?;
        Ok(props)
    }

    /// Check `a >= 0`, `b >= 0`, `c = a + b` (to 1e-12 relative) and
    /// `-1 < g < 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.absorption >= 0.0) || !self.absorption.is_finite() {
            return Err(Error::invalid(
                "absorption",
                format!("must be finite and >= 0, got {}", self.absorption),
            ));
        }
        if !(self.scattering >= 0.0) || !self.scattering.is_finite() {
            return Err(Error::invalid(
                "scattering",
                format!("must be finite and >= 0, got {}", self.scattering),
            ));
        }
        let sum = self.absorption + self.scattering;
        let scale = sum.max(self.extinction).max(1e-300);
        if (self.extinction - sum).abs() > 1e-12 * scale {
            return Err(Error::invalid(
                "extinction",
                format!(
                    "extinction {} is not absorption + scattering = {sum}",
                    self.extinction
                ),
            ));
        }
        if !(self.asymmetry > -1.0 && self.asymmetry < 1.0) {
            return Err(Error::invalid(
                "asymmetry",
                format!("must satisfy -1 < g < 1, got {}", self.asymmetry),
            ));
        }
        Ok(())
    }

    /// Single-scattering albedo b/c (zero for non-scattering water).
    pub fn albedo(&self) -> f64 {
        if self.extinction > 0.0 {
            self.scattering / self.extinction
        } else {
            0.0
        }
    }
}

/// Transmitter/receiver geometry for a single link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    /// Transmitter position (m).
    pub tx_position: Vec3,
    /// Transmitter boresight, unit length.
    pub tx_direction: Vec3,
    /// Full beam divergence angle (rad).
    pub beam_divergence: f64,
    /// Receiver aperture center (m).
    pub rx_position: Vec3,
    /// Receiver outward normal (towards the water), unit length.
    pub rx_normal: Vec3,
    /// Receiver aperture diameter (m).
    pub rx_aperture_diameter: f64,
    /// Receiver half field of view (rad), in (0, pi/2].
    pub rx_half_fov: f64,
    /// Water refractive index.
    pub refractive_index: f64,
}

impl LinkGeometry {
    /// Check unit vectors (to 1e-9), aperture, field of view, divergence,
    /// and refractive index.
    pub fn validate(&self) -> Result<()> {
        if !self.tx_position.is_finite() || !self.rx_position.is_finite() {
            return Err(Error::invalid("position", "positions must be finite"));
        }
        if !self.tx_direction.is_finite() || !self.tx_direction.is_unit(1e-9) {
            return Err(Error::invalid(
                "tx_direction",
                format!("must be unit length, |v| = {}", self.tx_direction.norm()),
            ));
        }
        if !self.rx_normal.is_finite() || !self.rx_normal.is_unit(1e-9) {
            return Err(Error::invalid(
                "rx_normal",
                format!("must be unit length, |v| = {}", self.rx_normal.norm()),
            ));
        }
        if !(self.rx_aperture_diameter > 0.0) || !self.rx_aperture_diameter.is_finite() {
            return Err(Error::invalid(
                "rx_aperture_diameter",
                format!("must be finite and > 0, got {}", self.rx_aperture_diameter),
            ));
        }
        if !(self.rx_half_fov > 0.0 && self.rx_half_fov <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(
                "rx_half_fov",
                format!("must be in (0, pi/2], got {}", self.rx_half_fov),
            ));
        }
        if !(self.beam_divergence >= 0.0 && self.beam_divergence < std::f64::consts::PI) {
            return Err(Error::invalid(
                "beam_divergence",
                format!("must be in [0, pi), got {}", self.beam_divergence),
            ));
        }
        if !(self.refractive_index >= 1.0) || !self.refractive_index.is_finite() {
            return Err(Error::invalid(
                "refractive_index",
                format!("must be finite and >= 1, got {}", self.refractive_index),
            ));
        }
        Ok(())
    }

    /// Center-to-center transmitter/receiver distance (m).
    pub fn range(&self) -> f64 {
        (self.rx_position - self.tx_position).norm()
    }

    /// Line-of-sight propagation delay at the in-water light speed (s).
    pub fn line_of_sight_delay(&self) -> f64 {
        self.range() * self.refractive_index / SPEED_OF_LIGHT
    }

    /// Same geometry with the receiver aperture area divided by `n`
    /// (diameter divided by sqrt(n)), for aperture splitting across `n`
    /// receivers.
    pub fn with_aperture_split(&self, n: usize) -> Self {
        let mut g = *self;
        g.rx_aperture_diameter = self.rx_aperture_diameter / (n as f64).sqrt();
        g
    }

    /// Canonical geometry of one link in a receiver array: the aperture is
    /// split `n` ways and the receiver sits `class` aperture pitches away
    /// from the point the transmitter aims at (the array packs the split
    /// apertures edge to edge, so the pitch is the split diameter). Class 0
    /// is the aimed, ballistic link; higher classes see scattered light
    /// only. In homogeneous water the response depends only on this
    /// relative displacement, so equal-class links share one simulation.
    pub fn with_displacement_class(&self, n: usize, class: usize) -> Self {
        let mut g = self.with_aperture_split(n);
        if class > 0 {
            let lateral = g.rx_normal.orthonormal();
            g.rx_position = g.rx_position + lateral.scale(class as f64 * g.rx_aperture_diameter);
        }
        g
    }
}

/// Receiver index transmitter `i` of `m` aims at, for `n` receivers:
/// aims are spread proportionally, so a lone transmitter points at the
/// array center and `m = n` gives the one-to-one assignment.
pub fn transmitter_aim(i: usize, m: usize, n: usize) -> usize {
    (((i as f64 + 0.5) / m as f64) * n as f64).floor() as usize
}

/// Displacement class of the link from transmitter `i` to receiver `j`:
/// how many aperture pitches separate the receiver from the aimed point.
pub fn link_displacement_class(i: usize, m: usize, n: usize, j: usize) -> usize {
    (j as i64 - transmitter_aim(i, m, n) as i64).unsigned_abs() as usize
}

/// Time-binned turbulence-free channel response between one TX/RX pair.
///
/// `bins[i]` is the fraction of the transmitted energy arriving in
/// `[t_start + i*bin_width, t_start + (i+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    bin_width: f64,
    bins: Vec<f64>,
    t_start: f64,
}

impl ImpulseResponse {
    /// Validate and build: positive bin width, non-negative finite bins,
    /// total at most 1 (energy conservation), non-negative start time.
    /// Trailing zero bins are trimmed, so the representation is canonical.
    pub fn new(bin_width: f64, mut bins: Vec<f64>, t_start: f64) -> Result<Self> {
        while bins.last() == Some(&0.0) {
            bins.pop();
        }
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::invalid(
                "bin_width",
                format!("must be finite and > 0, got {bin_width}"),
            ));
        }
        if !(t_start >= 0.0) || !t_start.is_finite() {
            return Err(Error::invalid(
                "t_start",
                format!("must be finite and >= 0, got {t_start}"),
            ));
        }
        let mut sum = 0.0;
        for (i, &b) in bins.iter().enumerate() {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::invalid(
                    "bins",
                    format!("bin {i} must be finite and >= 0, got {b}"),
                ));
            }
            sum += b;
        }
        // Tiny slack for floating-point accumulation across millions of
        // arrivals.
        if sum > 1.0 + 1e-9 {
            return Err(Error::invalid(
                "bins",
                format!("received fraction {sum} exceeds the transmitted energy"),
            ));
        }
        Ok(Self {
            bin_width,
            bins,
            t_start,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    /// Total received fraction of the transmitted energy.
    pub fn total_fraction(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// True when no energy was received.
    pub fn is_zero(&self) -> bool {
        self.bins.iter().all(|&b| b == 0.0)
    }
}

/// Result of a photon-transport run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    /// The normalized impulse response.
    pub response: ImpulseResponse,
    /// Photons launched.
    pub photons_launched: u64,
    /// Photons that reached the receiver.
    pub photons_received: u64,
    /// Arrivals that would have landed beyond the bin cap, summed weight
    /// (normalized). Zero in any reasonable configuration.
    pub dropped_fraction: f64,
}

impl TraceReport {
    /// Diagnostic flag: the run produced an all-zero response.
    pub fn no_arrivals(&self) -> bool {
        self.photons_received == 0
    }
}

/// Bin width that resolves one bit slot with 16 bins.
pub fn default_bin_width(bit_rate: f64) -> f64 {
    1.0 / bit_rate / 16.0
}

/// Sample the Henyey-Greenstein scattering polar angle (rad) by inverse
/// CDF from a uniform `u` in [0, 1). `u = 0` maps to forward scattering;
/// for `g = 0` this is the isotropic `acos(1 - 2u)`.
pub fn sample_scattering_angle(g: f64, u: f64) -> f64 {
    sample_scattering_cos(g, u).acos()
}

/// Cosine form of [`sample_scattering_angle`]; used directly in the
/// transport loop to avoid the acos/cos round trip.
pub fn sample_scattering_cos(g: f64, u: f64) -> f64 {
    let mu = if g.abs() < 1e-9 {
        1.0 - 2.0 * u
    } else {
        let s = (1.0 - g * g) / (1.0 + g - 2.0 * g * u);
        (1.0 + g * g - s * s) / (2.0 * g)
    };
    mu.clamp(-1.0, 1.0)
}

// Photons per random stream; the merged histogram is a block-ordered sum,
// so results do not depend on how blocks are scheduled across threads.
const PHOTON_BLOCK: u64 = 1 << 16;

// Arrivals beyond this bin index are dropped (and reported); keeps memory
// bounded for pathological geometries.
const MAX_BINS: usize = 1 << 24;

// Russian roulette: below the weight threshold a photon survives with
// probability 0.1 and carries ten times its weight, capped so a revived
// weight never exceeds 1 (the survival probability rises to keep the
// estimator unbiased). The cap keeps per-run energy conservation exact even
// for thresholds above 0.1.
const ROULETTE_BOOST: f64 = 10.0;

struct BlockResult {
    bins: Vec<f64>,
    received: u64,
    dropped_weight: f64,
}

/// Simulate the impulse response with `photon_count` photons.
///
/// Deterministic for a fixed `rng_seed`, independent of the rayon worker
/// count. A run in which no photon reaches the receiver is not an error:
/// it returns an all-zero response with [`TraceReport::no_arrivals`] set.
pub fn trace_photons(
    water: &WaterProperties,
    geom: &LinkGeometry,
    photon_count: u64,
    weight_threshold: f64,
    bin_width: f64,
    rng_seed: u64,
) -> Result<TraceReport> {
    water.validate()?;
    geom.validate()?;
    if photon_count < 1 {
        return Err(Error::invalid("photon_count", "must be >= 1"));
    }
    if !(weight_threshold > 0.0 && weight_threshold < 1.0) {
        return Err(Error::invalid(
            "weight_threshold",
            format!("must be in (0, 1), got {weight_threshold}"),
        ));
    }
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::invalid(
            "bin_width",
            format!("must be finite and > 0, got {bin_width}"),
        ));
    }

    let t_start = geom.line_of_sight_delay();
    let blocks = photon_count.div_ceil(PHOTON_BLOCK);

    let block_results: Vec<BlockResult> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let first = block * PHOTON_BLOCK;
            let count = PHOTON_BLOCK.min(photon_count - first);
            let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
            rng.set_stream(block);
            simulate_block(water, geom, count, weight_threshold, bin_width, t_start, &mut rng)
        })
        .collect();

    // Merge in block order for a thread-count-independent result.
    let mut bins: Vec<f64> = Vec::new();
    let mut received = 0u64;
    let mut dropped = 0.0f64;
    for block in block_results {
        if block.bins.len() > bins.len() {
            bins.resize(block.bins.len(), 0.0);
        }
        for (total, add) in bins.iter_mut().zip(block.bins.iter()) {
            *total += add;
        }
        received += block.received;
        dropped += block.dropped_weight;
    }

    let norm = 1.0 / photon_count as f64;
    for b in &mut bins {
        *b *= norm;
    }

    Ok(TraceReport {
        response: ImpulseResponse::new(bin_width, bins, t_start)?,
        photons_launched: photon_count,
        photons_received: received,
        dropped_fraction: dropped * norm,
    })
}

fn simulate_block(
    water: &WaterProperties,
    geom: &LinkGeometry,
    count: u64,
    weight_threshold: f64,
    bin_width: f64,
    t_start: f64,
    rng: &mut ChaCha12Rng,
) -> BlockResult {
    let mut bins: Vec<f64> = Vec::new();
    let mut received = 0u64;
    let mut dropped_weight = 0.0f64;

    let albedo = water.albedo();
    let extinction = water.extinction;
    let g = water.asymmetry;
    let cos_half_fov = geom.rx_half_fov.cos();
    let radius2 = {
        let r = geom.rx_aperture_diameter / 2.0;
        r * r
    };
    let cos_half_div = (geom.beam_divergence / 2.0).cos();
    let inv_speed = geom.refractive_index / SPEED_OF_LIGHT;
    let two_pi = 2.0 * std::f64::consts::PI;

    for _ in 0..count {
        // Launch uniformly in solid angle inside the divergence cone.
        let u: f64 = rng.random();
        let cos_theta = 1.0 - u * (1.0 - cos_half_div);
        let phi = two_pi * rng.random::<f64>();
        let mut dir = rotate_direction(geom.tx_direction, cos_theta, phi);
        let mut pos = geom.tx_position;
        let mut weight = 1.0f64;
        let mut path_len = 0.0f64;

        loop {
            // Free path at the extinction rate; infinite in vacuum-like
            // water (c = 0).
            let step = if extinction > 0.0 {
                -f64::ln_1p(-rng.random::<f64>()) / extinction
            } else {
                f64::INFINITY
            };

            // Does this segment cross the aperture inside the FOV cone?
            let cos_inc = -dir.dot(geom.rx_normal);
            if cos_inc >= cos_half_fov && cos_inc > 0.0 {
                let t = (geom.rx_position - pos).dot(geom.rx_normal) / dir.dot(geom.rx_normal);
                if t > 0.0 && t <= step {
                    let hit = pos.advance(dir, t);
                    let d = hit - geom.rx_position;
                    if d.dot(d) <= radius2 {
                        let time = (path_len + t) * inv_speed;
                        // Arrivals cannot precede the line-of-sight delay in
                        // a front-facing geometry; clamp defensively.
                        let idx = ((time - t_start) / bin_width).floor().max(0.0) as usize;
                        if idx < MAX_BINS {
                            if idx >= bins.len() {
                                bins.resize(idx + 1, 0.0);
                            }
                            bins[idx] += weight;
                            received += 1;
                        } else {
                            dropped_weight += weight;
                        }
                        break;
                    }
                }
            }

            if !step.is_finite() {
                break; // escaped into non-interacting water
            }

            pos = pos.advance(dir, step);
            path_len += step;

            // Collision: survival re-weighting by the albedo.
            weight *= albedo;
            if weight <= 0.0 {
                break;
            }
            if weight < weight_threshold {
                let revived = (weight * ROULETTE_BOOST).min(1.0);
                let survival = weight / revived;
                if rng.random::<f64>() < survival {
                    weight = revived;
                } else {
                    break;
                }
            }

            let mu = sample_scattering_cos(g, rng.random());
            let phi = two_pi * rng.random::<f64>();
            dir = rotate_direction(dir, mu, phi);
        }
    }

    BlockResult {
        bins,
        received,
        dropped_weight,
    }
}
