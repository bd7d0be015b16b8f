//! Physical constants (SI).

/// Reduced Planck constant (J·s), CODATA 2018.
pub const HBAR: f64 = 1.054571817e-34;

/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299792458.0;
