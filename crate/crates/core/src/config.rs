//! JSON sweep configuration for the batch front-end.
//!
//! One self-describing file with a block per domain type; angles are given
//! in degrees (matching how link budgets are usually specified) and
//! converted to radians when the blocks are lowered to domain types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::link::{noise_variance, NoiseBudget, NoiseVarianceReport};
use crate::water_channel::{LinkGeometry, WaterProperties, DEFAULT_ASYMMETRY};

/// Water block; `extinction` is written redundantly and checked against
/// `absorption + scattering` on validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterConfig {
    pub absorption: f64,
    pub scattering: f64,
    pub extinction: f64,
    #[serde(default = "default_asymmetry")]
    pub asymmetry: f64,
}

fn default_asymmetry() -> f64 {
    DEFAULT_ASYMMETRY
}

/// Geometry block; angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub tx_position: [f64; 3],
    pub tx_direction: [f64; 3],
    pub beam_divergence_full_angle_deg: f64,
    pub rx_position: [f64; 3],
    pub rx_normal: [f64; 3],
    pub rx_aperture_diameter: f64,
    pub rx_half_fov_deg: f64,
    pub refractive_index: f64,
}

/// Transmit power sweep in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweep {
    pub start_dbm: f64,
    pub stop_dbm: f64,
    pub step_db: f64,
}

impl PowerSweep {
    /// The swept points, start to stop inclusive (within floating-point
    /// slack of the step grid).
    pub fn points(&self) -> Vec<f64> {
        if !(self.step_db > 0.0) || self.stop_dbm < self.start_dbm {
            return Vec::new();
        }
        let count = ((self.stop_dbm - self.start_dbm) / self.step_db + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start_dbm + i as f64 * self.step_db)
            .collect()
    }
}

/// BER evaluation methods selectable in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Upper,
    Fw,
    Mc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Upper => "upper",
            Method::Fw => "fw",
            Method::Mc => "mc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Random seeds for the two stochastic engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub channel: u64,
    pub mc: u64,
}

fn default_weight_threshold() -> f64 {
    1e-6
}

fn default_mc_bits() -> u64 {
    1_000_000
}

fn default_memory_threshold() -> f64 {
    crate::link::DEFAULT_MEMORY_THRESHOLD
}

fn default_ghq_order() -> usize {
    crate::ber::DEFAULT_GHQ_ORDER
}

fn default_per_dim_order() -> usize {
    crate::ber::DEFAULT_PER_DIM_ORDER
}

/// Full sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub water: WaterConfig,
    pub geometry: GeometryConfig,
    pub noise: NoiseBudget,
    /// Bit rate (bit/s).
    pub bit_rate: f64,
    /// `(M, N)` transmitter/receiver counts to evaluate.
    pub configurations: Vec<[usize; 2]>,
    /// Log-amplitude standard deviations to evaluate.
    pub sigma_x: Vec<f64>,
    pub power_sweep_dbm: PowerSweep,
    pub methods: Vec<Method>,
    /// Photons for channel simulation (when not served from cache).
    pub photon_count: u64,
    #[serde(default = "default_weight_threshold")]
    pub weight_threshold: f64,
    pub seeds: Seeds,
    /// Bits per Monte Carlo BER point.
    #[serde(default = "default_mc_bits")]
    pub mc_bits: u64,
    /// Optional early stop for Monte Carlo points.
    #[serde(default)]
    pub mc_stop_after_errors: Option<u64>,
    #[serde(default = "default_memory_threshold")]
    pub memory_threshold: f64,
    #[serde(default = "default_ghq_order")]
    pub ghq_order: usize,
    #[serde(default = "default_per_dim_order")]
    pub per_dim_order: usize,
    /// Impulse-response bin width (s); defaults to one sixteenth of the
    /// bit duration.
    #[serde(default)]
    pub bin_width: Option<f64>,
}

/// Derived quantities printed by `validate` without running anything.
#[derive(Debug, Clone, Copy)]
pub struct ValidationReport {
    /// Photodetector responsivity (A/W).
    pub responsivity: f64,
    /// Bit duration (s).
    pub bit_duration: f64,
    /// Transmitter-receiver range (m).
    pub range: f64,
    /// Noise budget at the bit duration, signal hint at the sweep maximum.
    pub noise: NoiseVarianceReport,
}

/// Convert a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl SweepConfig {
    /// Parse from JSON text; serde errors (with their line/column) are
    /// wrapped in [`Error::Config`].
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical serialized form; hashing this gives the config hash used
    /// in manifests and cache keys.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization cannot fail")
    }

    /// Lower the water block, checking its invariants.
    pub fn water(&self) -> Result<WaterProperties> {
        let props = WaterProperties {
            absorption: self.water.absorption,
            scattering: self.water.scattering,
            extinction: self.water.extinction,
            asymmetry: self.water.asymmetry,
        };
        props.validate()?;
        Ok(props)
    }

    /// Lower the geometry block (degrees to radians).
    pub fn link_geometry(&self) -> LinkGeometry {
        LinkGeometry {
            tx_position: vec3(self.geometry.tx_position),
            tx_direction: vec3(self.geometry.tx_direction),
            beam_divergence: self.geometry.beam_divergence_full_angle_deg.to_radians(),
            rx_position: vec3(self.geometry.rx_position),
            rx_normal: vec3(self.geometry.rx_normal),
            rx_aperture_diameter: self.geometry.rx_aperture_diameter,
            rx_half_fov: self.geometry.rx_half_fov_deg.to_radians(),
            refractive_index: self.geometry.refractive_index,
        }
    }

    /// Bit duration (s).
    pub fn bit_duration(&self) -> f64 {
        1.0 / self.bit_rate
    }

    /// Effective impulse-response bin width (s).
    pub fn effective_bin_width(&self) -> f64 {
        self.bin_width
            .unwrap_or_else(|| crate::water_channel::default_bin_width(self.bit_rate))
    }

    /// Check every block and cross-field invariant; returns the derived
    /// quantities on success.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.water()?;
        let geometry = self.link_geometry();
        geometry.validate()?;
        self.noise.validate()?;

        if !(self.bit_rate > 0.0) || !self.bit_rate.is_finite() {
            return Err(Error::Config(format!(
                "bit_rate must be finite and > 0, got {}",
                self.bit_rate
            )));
        }
        if self.configurations.is_empty() {
            return Err(Error::Config("configurations must not be empty".into()));
        }
        for &[m, n] in &self.configurations {
            if m < 1 || n < 1 {
                return Err(Error::Config(format!(
                    "every configuration needs M >= 1 and N >= 1, got {m}x{n}"
                )));
            }
        }
        if self.sigma_x.is_empty() {
            return Err(Error::Config("sigma_x must not be empty".into()));
        }
        for &s in &self.sigma_x {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::Config(format!(
                    "sigma_x values must be finite and >= 0, got {s}"
                )));
            }
        }
        if self.power_sweep_dbm.points().is_empty() {
            return Err(Error::Config(
                "power sweep is empty (need step_db > 0 and stop_dbm >= start_dbm)".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.photon_count < 1 {
            return Err(Error::Config("photon_count must be >= 1".into()));
        }
        if !(self.weight_threshold > 0.0 && self.weight_threshold < 1.0) {
            return Err(Error::Config(format!(
                "weight_threshold must be in (0, 1), got {}",
                self.weight_threshold
            )));
        }
        if !(self.memory_threshold > 0.0) || !self.memory_threshold.is_finite() {
            return Err(Error::Config(format!(
                "memory_threshold must be finite and > 0, got {}",
                self.memory_threshold
            )));
        }
        for (name, order) in [("ghq_order", self.ghq_order), ("per_dim_order", self.per_dim_order)]
        {
            if !(1..=128).contains(&order) {
                return Err(Error::Config(format!(
                    "{name} must be in 1..=128, got {order}"
                )));
            }
        }
        if self.methods.contains(&Method::Mc) && self.mc_bits < 10_000 {
            return Err(Error::Config(format!(
                "mc_bits must be >= 10^4 when the mc method is enabled, got {}",
                self.mc_bits
            )));
        }
        if let Some(bw) = self.bin_width {
            if !(bw > 0.0) || !bw.is_finite() {
                return Err(Error::Config(format!(
                    "bin_width must be finite and > 0, got {bw}"
                )));
            }
        }

        let hint = dbm_to_watts(self.power_sweep_dbm.stop_dbm);
        let noise = noise_variance(&self.noise, self.bit_duration(), hint)?;
        Ok(ValidationReport {
            responsivity: self.noise.responsivity(),
            bit_duration: self.bit_duration(),
            range: geometry.range(),
            noise,
        })
    }
}
