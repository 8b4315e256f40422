//! Unit conversions.
//!
//! All Hamiltonians are stored internally as angular frequencies in rad/s.
//! Public interfaces speak MHz for frequencies and ns/us/ms for durations.

use std::f64::consts::PI;

/// Convert a frequency in MHz to an angular frequency in rad/s.
pub fn mhz_to_rad(f_mhz: f64) -> f64 {
    2.0 * PI * 1.0e6 * f_mhz
}

/// Convert an angular frequency in rad/s to a frequency in MHz.
pub fn rad_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1.0e6)
}

pub fn ns_to_s(t: f64) -> f64 {
    t * 1.0e-9
}

pub fn us_to_s(t: f64) -> f64 {
    t * 1.0e-6
}

pub fn ms_to_s(t: f64) -> f64 {
    t * 1.0e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = 2880.0;
        assert!((rad_to_mhz(mhz_to_rad(f)) - f).abs() < 1e-9);
    }
}
