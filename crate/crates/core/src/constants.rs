//! Physical constants used throughout the toolkit (SI units).

/// Electron charge in coulombs.
pub const ELECTRON_CHARGE: f64 = 1.602e-19;

/// Planck's constant in joule-seconds.
pub const PLANCK: f64 = 6.626e-34;

/// Speed of light in vacuum in meters per second.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Boltzmann's constant in joules per kelvin.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Photon energy hf in joules for an optical wavelength in meters.
pub fn photon_energy(wavelength: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / wavelength
}
