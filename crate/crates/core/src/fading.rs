//! Log-normal turbulence fading.
//!
//! Weak oceanic turbulence multiplies the received optical signal by a
//! fading coefficient `h = exp(2X)` where the log-amplitude
//! `X ~ Normal(mu_x, sigma_x2)`. Normalizing `E[h] = 1` (fading fluctuates
//! the signal without adding or removing average power) forces
//! `mu_x = -sigma_x2`, so the whole model is parameterized by the
//! log-amplitude variance alone.
//!
//! The module also provides the Fenton-Wilkinson reduction: a weighted sum
//! of independent log-normal variables is approximated by a single
//! log-normal variable matched to the first two moments, which collapses
//! the multi-dimensional fading average of an equal-gain-combining receiver
//! to a one-dimensional integral.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-normal fading parameters for one link.
///
/// The log-amplitude mean is always `-sigma_x2`; there is no way to set it
/// independently, which keeps `E[h] = exp(2*mu_x + 2*sigma_x2) = 1` true by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FadingSpecRepr", into = "FadingSpecRepr")]
pub struct FadingSpec {
    sigma_x2: f64,
}

/// Serialized form of [`FadingSpec`]; only the variance is stored.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FadingSpecRepr {
    sigma_x2: f64,
}

impl TryFrom<FadingSpecRepr> for FadingSpec {
    type Error = Error;
    fn try_from(repr: FadingSpecRepr) -> Result<Self> {
        FadingSpec::new(repr.sigma_x2)
    }
}

impl From<FadingSpec> for FadingSpecRepr {
    fn from(spec: FadingSpec) -> Self {
        FadingSpecRepr {
            sigma_x2: spec.sigma_x2,
        }
    }
}

impl FadingSpec {
    /// Build from the log-amplitude variance `sigma_x2 >= 0`.
    pub fn new(sigma_x2: f64) -> Result<Self> {
        if !sigma_x2.is_finite() || sigma_x2 < 0.0 {
            return Err(Error::invalid(
                "sigma_x2",
                format!("log-amplitude variance must be finite and >= 0, got {sigma_x2}"),
            ));
        }
        Ok(Self { sigma_x2 })
    }

    /// Build from the log-amplitude standard deviation `sigma_x >= 0`.
    pub fn from_sigma_x(sigma_x: f64) -> Result<Self> {
        if !sigma_x.is_finite() || sigma_x < 0.0 {
            return Err(Error::invalid(
                "sigma_x",
                format!("log-amplitude std must be finite and >= 0, got {sigma_x}"),
            ));
        }
        Self::new(sigma_x * sigma_x)
    }

    /// Log-amplitude variance.
    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    /// Log-amplitude standard deviation.
    pub fn sigma_x(&self) -> f64 {
        self.sigma_x2.sqrt()
    }

    /// Log-amplitude mean, pinned to `-sigma_x2` by the unit-mean
    /// normalization.
    pub fn mu_x(&self) -> f64 {
        -self.sigma_x2
    }

    /// True when the fading coefficient is the constant 1.
    pub fn is_deterministic(&self) -> bool {
        self.sigma_x2 == 0.0
    }
}

/// Equivalent log-normal variable `alpha = exp(2z)`,
/// `z ~ Normal(mu_z, sigma_z2)`, produced by [`fw_equivalent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalEquivalent {
    /// Log-amplitude mean of the equivalent variable.
    pub mu_z: f64,
    /// Log-amplitude variance of the equivalent variable.
    pub sigma_z2: f64,
}

impl LognormalEquivalent {
    /// First moment `E[alpha] = exp(2*mu_z + 2*sigma_z2)`.
    pub fn mean(&self) -> f64 {
        (2.0 * self.mu_z + 2.0 * self.sigma_z2).exp()
    }

    /// Variance `exp(4*mu_z + 4*sigma_z2) * (exp(4*sigma_z2) - 1)`.
    pub fn variance(&self) -> f64 {
        (4.0 * self.mu_z + 4.0 * self.sigma_z2).exp() * f64::exp_m1(4.0 * self.sigma_z2)
    }

    /// CDF of `alpha` at `a`.
    pub fn cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let z = (a.ln() - 2.0 * self.mu_z) / (2.0 * self.sigma_z2.sqrt());
        // Phi(z) = erfc(-z / sqrt(2)) / 2
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// Probability density of the fading coefficient at `h > 0`:
///
/// `f(h) = 1/(2h sqrt(2 pi sigma_x2)) * exp(-(ln h - 2 mu_x)^2 / (8 sigma_x2))`
///
/// Errors for `sigma_x2 = 0` (point mass at 1; use the deterministic fast
/// path instead).
pub fn lognormal_pdf(h: f64, spec: FadingSpec) -> Result<f64> {
    if spec.sigma_x2() == 0.0 {
        return Err(Error::DegenerateLognormal);
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(
            "h",
            format!("fading coefficient must be finite and > 0, got {h}"),
        ));
    }
    let s2 = spec.sigma_x2();
    let d = h.ln() - 2.0 * spec.mu_x();
    let norm = 1.0 / (2.0 * h * (2.0 * std::f64::consts::PI * s2).sqrt());
    Ok(norm * (-(d * d) / (8.0 * s2)).exp())
}

/// Draw one fading coefficient `h = exp(2X)`, `X ~ Normal(mu_x, sigma_x2)`.
///
/// Returns exactly 1 when `sigma_x2 = 0`.
pub fn sample_fading<R: Rng + ?Sized>(spec: FadingSpec, rng: &mut R) -> f64 {
    if spec.is_deterministic() {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (2.0 * (spec.mu_x() + spec.sigma_x() * z)).exp()
}

/// Fenton-Wilkinson moment matching: approximate
/// `beta = sum_i G_i * h_i` (independent log-normal `h_i`, weights
/// `G_i > 0`) by a single log-normal `alpha = exp(2z)` with
///
/// `sigma_z2 = ln(1 + sum G_i^2 (e^{4 sigma_xi^2} - 1) / (sum G_i)^2) / 4`
/// `mu_z = ln(sum G_i) / 2 - sigma_z2`
///
/// which matches `E[alpha] = E[beta]` and `Var[alpha] = Var[beta]`.
pub fn fw_equivalent(weights: &[f64], specs: &[FadingSpec]) -> Result<LognormalEquivalent> {
    if weights.is_empty() {
        return Err(Error::EmptyInput("fw_equivalent weights"));
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
    let mut sum_g = 0.0;
    let mut sum_var = 0.0;
    for (&g, spec) in weights.iter().zip(specs) {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::invalid(
                "weights",
                format!("all weights must be finite and > 0, got {g}"),
            ));
        }
        sum_g += g;
        // Var[G h] = G^2 (e^{4 sigma_x2} - 1); exp_m1 keeps precision for
        // tiny variances.
        sum_var += g * g * f64::exp_m1(4.0 * spec.sigma_x2());
    }
    let sigma_z2 = 0.25 * f64::ln_1p(sum_var / (sum_g * sum_g));
    let mu_z = 0.5 * sum_g.ln() - sigma_z2;
    Ok(LognormalEquivalent { mu_z, sigma_z2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn spec_pins_mean_to_minus_variance() {
        let spec = FadingSpec::new(0.16).unwrap();
        assert_eq!(spec.mu_x(), -0.16);
        // E[h] = exp(2 mu + 2 sigma^2) = 1 exactly by construction.
        assert_eq!((2.0 * spec.mu_x() + 2.0 * spec.sigma_x2()).exp(), 1.0);
    }

    #[test]
    fn spec_rejects_negative_variance() {
        assert!(FadingSpec::new(-0.1).is_err());
        assert!(FadingSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn pdf_rejects_degenerate_and_nonpositive() {
        let spec = FadingSpec::new(0.0).unwrap();
        assert!(matches!(
            lognormal_pdf(1.0, spec),
            Err(Error::DegenerateLognormal)
        ));
        let spec = FadingSpec::new(0.01).unwrap();
        assert!(lognormal_pdf(0.0, spec).is_err());
        assert!(lognormal_pdf(-1.0, spec).is_err());
    }

    #[test]
    fn pdf_mode_is_a_local_maximum() {
        // Mode of the log-normal: h* = exp(2 mu - 4 sigma^2).
        let spec = FadingSpec::new(0.01).unwrap();
        let mode = (2.0 * spec.mu_x() - 4.0 * spec.sigma_x2()).exp();
        let at_mode = lognormal_pdf(mode, spec).unwrap();
        assert!(at_mode >= lognormal_pdf(mode * 1.01, spec).unwrap());
        assert!(at_mode >= lognormal_pdf(mode * 0.99, spec).unwrap());
    }

    #[test]
    fn sample_is_one_for_zero_variance() {
        let spec = FadingSpec::new(0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_fading(spec, &mut rng), 1.0);
        }
    }

    #[test]
    fn fw_single_term_is_exact() {
        // One term with G = 1: sigma_z2 = sigma_x2, mu_z = -sigma_x2.
        for s in [0.01, 0.16, 0.5] {
            let spec = FadingSpec::new(s).unwrap();
            let eq = fw_equivalent(&[1.0], &[spec]).unwrap();
            assert!((eq.sigma_z2 - s).abs() < 1e-14, "sigma_z2 = {}", eq.sigma_z2);
            assert!((eq.mu_z + s).abs() < 1e-14, "mu_z = {}", eq.mu_z);
        }
    }

    #[test]
    fn fw_deterministic_sum_of_two() {
        // G = [1, 1], sigma = 0: the sum is the constant 2.
        let spec = FadingSpec::new(0.0).unwrap();
        let eq = fw_equivalent(&[1.0, 1.0], &[spec, spec]).unwrap();
        assert_eq!(eq.sigma_z2, 0.0);
        assert!((eq.mu_z - 0.5 * 2.0f64.ln()).abs() < 1e-15);
        assert!((eq.mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fw_moment_matching_identities() {
        // exp(2 mu_z + 2 sigma_z2) = sum G and
        // exp(4 mu_z + 4 sigma_z2)(e^{4 sigma_z2} - 1) = sum G^2 (e^{4 s} - 1),
        // each to 1e-12 relative.
        let weights = [1.0, 2.0, 3.0];
        let specs: Vec<FadingSpec> = [0.16, 0.04, 0.25]
            .iter()
            .map(|&s| FadingSpec::new(s).unwrap())
            .collect();
        let eq = fw_equivalent(&weights, &specs).unwrap();
        let sum_g: f64 = weights.iter().sum();
        let sum_var: f64 = weights
            .iter()
            .zip(&specs)
            .map(|(&g, sp)| g * g * f64::exp_m1(4.0 * sp.sigma_x2()))
            .sum();
        assert!((eq.mean() - sum_g).abs() / sum_g < 1e-12);
        assert!((eq.variance() - sum_var).abs() / sum_var < 1e-12);
    }

    #[test]
    fn fw_scale_covariance() {
        // Scaling every weight by c shifts mu_z by ln(c)/2 and leaves
        // sigma_z2 unchanged.
        let weights = [0.5, 1.5, 2.5];
        let scaled: Vec<f64> = weights.iter().map(|g| g * 7.0).collect();
        let specs: Vec<FadingSpec> = (0..3).map(|_| FadingSpec::new(0.16).unwrap()).collect();
        let base = fw_equivalent(&weights, &specs).unwrap();
        let big = fw_equivalent(&scaled, &specs).unwrap();
        assert!((big.sigma_z2 - base.sigma_z2).abs() < 1e-14);
        assert!((big.mu_z - base.mu_z - 0.5 * 7.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn fw_rejects_bad_input() {
        let spec = FadingSpec::new(0.1).unwrap();
        assert!(matches!(
            fw_equivalent(&[], &[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(fw_equivalent(&[1.0, -1.0], &[spec, spec]).is_err());
        assert!(fw_equivalent(&[1.0], &[spec, spec]).is_err());
    }
}
