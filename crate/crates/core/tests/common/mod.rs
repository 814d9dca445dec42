//! Shared fixtures and independent numerical oracles for the integration
//! tests. Everything here deliberately avoids the quadrature machinery it
//! is used to check: integrals are evaluated by adaptive Simpson recursion.

#![allow(dead_code)]
#![allow(clippy::too_many_arguments)]

use std::sync::OnceLock;

use uwoc_core::geom::Vec3;
use uwoc_core::link::NoiseBudget;
use uwoc_core::water_channel::{
    trace_photons, ImpulseResponse, LinkGeometry, WaterProperties,
};

/// Seed of the frozen coastal channel realization used across tests.
pub const CHANNEL_SEED: u64 = 42;
/// Photons in the frozen realization.
pub const CHANNEL_PHOTONS: u64 = 10_000_000;
/// Bit rate of the reference link.
pub const BIT_RATE: f64 = 1e9;

/// Reference receiver noise parameters.
pub fn table1_noise() -> NoiseBudget {
    NoiseBudget {
        quantum_efficiency: 0.8,
        wavelength: 532e-9,
        electronic_bandwidth: 10e9,
        optical_filter_bandwidth: 10e-9,
        equivalent_temperature: 290.0,
        load_resistance: 100.0,
        dark_current: 1.226e-9,
        background_power: 6.34e-11,
    }
}

/// Coastal water inherent optical properties.
pub fn coastal_water() -> WaterProperties {
    WaterProperties::new(0.179, 0.219, 0.924).unwrap()
}

/// The 25 m straight reference link; `n_split` receivers share the total
/// aperture.
pub fn coastal_geometry(n_split: usize) -> LinkGeometry {
    LinkGeometry {
        tx_position: Vec3::new(0.0, 0.0, 0.0),
        tx_direction: Vec3::new(0.0, 0.0, 1.0),
        beam_divergence: 0.02f64.to_radians(),
        rx_position: Vec3::new(0.0, 0.0, 25.0),
        rx_normal: Vec3::new(0.0, 0.0, -1.0),
        rx_aperture_diameter: 0.2,
        rx_half_fov: 40f64.to_radians(),
        refractive_index: 1.331,
    }
    .with_aperture_split(n_split)
}

/// Build the frozen-channel MIMO scenario at a total transmit power: each
/// transmitter radiates `P/M` at its aimed receiver, receivers split the
/// aperture, and each link uses the impulse response of its displacement
/// class.
pub fn frozen_scenario(
    m: usize,
    n: usize,
    power_dbm: f64,
    sigma_x: f64,
    sigma_tb: f64,
) -> uwoc_core::link::MimoScenario {
    use uwoc_core::config::dbm_to_watts;
    use uwoc_core::fading::FadingSpec;
    use uwoc_core::link::{compute_gammas, GammaSet, MimoScenario, TransmitPulse};
    use uwoc_core::water_channel::link_displacement_class;

    let pulse =
        TransmitPulse::rectangular(dbm_to_watts(power_dbm) / m as f64, 1.0 / BIT_RATE).unwrap();
    let responsivity = table1_noise().responsivity();
    let mut matrix: Vec<GammaSet> = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let class = link_displacement_class(i, m, n, j);
            matrix.push(
                compute_gammas(frozen_channel(n, class), &pulse, responsivity, 1e-3).unwrap(),
            );
        }
    }
    let spec = FadingSpec::from_sigma_x(sigma_x).unwrap();
    MimoScenario::new(m, n, matrix, vec![spec; m * n], sigma_tb, BIT_RATE).unwrap()
}

const CHANNEL_SLOTS: usize = 9;

static CHANNELS: [OnceLock<ImpulseResponse>; CHANNEL_SLOTS] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

/// Frozen coastal impulse response for a receiver sharing the aperture
/// `n_split` ways (1..=3), displaced `class` aperture pitches from the
/// transmitter's aim. Simulated once per process.
pub fn frozen_channel(n_split: usize, class: usize) -> &'static ImpulseResponse {
    assert!((1..=3).contains(&n_split) && class < 3);
    CHANNELS[(n_split - 1) * 3 + class].get_or_init(|| {
        let bin_width = 1.0 / BIT_RATE / 16.0;
        let geometry = coastal_geometry(1).with_displacement_class(n_split, class);
        trace_photons(
            &coastal_water(),
            &geometry,
            CHANNEL_PHOTONS,
            1e-6,
            bin_width,
            CHANNEL_SEED,
        )
        .unwrap()
        .response
    })
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    eps: f64,
    depth: usize,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, fa, m, fm, left, lm, flm, eps * 0.5, depth - 1)
        + adaptive_step(f, m, fm, b, fb, right, rm, frm, eps * 0.5, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute
/// tolerance `eps`. The interval is pre-split into 64 panels before the
/// adaptive recursion so that localized mass cannot hide between the
/// initial sample points.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let panels = 64;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * width;
        let hi = if i == panels - 1 { b } else { lo + width };
        let flo = f(lo);
        let fhi = f(hi);
        let (whole, m, fm) = simpson(&f, lo, flo, hi, fhi);
        total += adaptive_step(&f, lo, flo, hi, fhi, whole, m, fm, eps / panels as f64, 50);
    }
    total
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Independent evaluation of the fading average
/// `E[Q(C h)]` for `h = exp(2X)`, `X ~ Normal(mu, sigma2)`: the integrand
/// is transformed to the standard normal variable and integrated by
/// adaptive Simpson over +/-14 sigma (the truncated tail is below 1e-44 in
/// absolute value).
pub fn avg_q_lognormal_simpson(c: f64, mu: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let f = |t: f64| uwoc_core::link::gaussian_q(c * (2.0 * mu + 2.0 * sigma * t).exp())
        * std_normal_pdf(t);
    // Scale the absolute tolerance off a coarse composite pass.
    let coarse: f64 = {
        let n = 2048;
        let h = 28.0 / n as f64;
        (0..n)
            .map(|i| {
                let a = -14.0 + i as f64 * h;
                (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0
            })
            .sum()
    };
    let eps = (coarse.abs() * 1e-10).max(1e-320);
    adaptive_simpson(f, -14.0, 14.0, eps)
}

/// Two-dimensional version for a pair of independent log-normal links with
/// weights `g1`, `g2`: `E[Q(C (g1 h1 + g2 h2))]` by nested adaptive
/// Simpson.
pub fn avg_q_two_lognormals_simpson(c: f64, g1: f64, g2: f64, mu: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let inner = |t1: f64| {
        let h1 = (2.0 * mu + 2.0 * sigma * t1).exp();
        let f = |t2: f64| {
            let h2 = (2.0 * mu + 2.0 * sigma * t2).exp();
            uwoc_core::link::gaussian_q(c * (g1 * h1 + g2 * h2)) * std_normal_pdf(t2)
        };
        adaptive_simpson(f, -10.0, 10.0, 1e-13)
    };
    let outer = |t1: f64| inner(t1) * std_normal_pdf(t1);
    adaptive_simpson(outer, -10.0, 10.0, 1e-12)
}

/// Bisect the transmit power (dBm) at which the monotone-decreasing BER
/// curve crosses `target`.
pub fn find_power_for_ber(
    target: f64,
    mut lo_dbm: f64,
    mut hi_dbm: f64,
    eval: impl Fn(f64) -> f64,
) -> f64 {
    let f_lo = eval(lo_dbm);
    let f_hi = eval(hi_dbm);
    assert!(
        f_lo > target && target > f_hi,
        "target {target:e} not bracketed: f({lo_dbm}) = {f_lo:e}, f({hi_dbm}) = {f_hi:e}"
    );
    for _ in 0..60 {
        let mid = 0.5 * (lo_dbm + hi_dbm);
        if eval(mid) > target {
            lo_dbm = mid;
        } else {
            hi_dbm = mid;
        }
    }
    0.5 * (lo_dbm + hi_dbm)
}

/// Relative difference `|a - b| / |b|`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
