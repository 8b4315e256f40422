//! Continuous-wave ODMR and fluorescence-excitation spectra.

use serde::{Deserialize, Serialize};

use crate::nv::{transition_table, LevelBasis, SelectionRule, SpinHamiltonianParams};
use crate::{Error, Result};

/// A sampled spectrum: frequency axis in MHz, dimensionless signal.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freq_mhz: Vec<f64>,
    pub signal: Vec<f64>,
}

/// CW ODMR sweep parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrSweep {
    pub f_start_mhz: f64,
    pub f_stop_mhz: f64,
    pub n_points: usize,
    /// Lorentzian full width at half maximum per line, MHz.
    pub linewidth_mhz: f64,
    /// Fractional fluorescence dip depth of the strongest line.
    pub contrast: f64,
}

impl Default for OdmrSweep {
    fn default() -> Self {
        Self {
            f_start_mhz: 2800.0,
            f_stop_mhz: 2960.0,
            n_points: 801,
            linewidth_mhz: 1.0,
            contrast: 0.15,
        }
    }
}

impl OdmrSweep {
    pub fn validate(&self) -> Result<()> {
        if self.f_stop_mhz <= self.f_start_mhz {
            return Err(Error::Invalid("sweep must have f_stop > f_start".into()));
        }
        if self.n_points < 2 {
            return Err(Error::Invalid("sweep needs at least 2 points".into()));
        }
        if self.linewidth_mhz <= 0.0 {
            return Err(Error::Invalid("linewidth must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::Invalid("contrast must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Unit-peak Lorentzian with FWHM `w` centered at `f0`.
fn lorentzian(f: f64, f0: f64, w: f64) -> f64 {
    let hw = 0.5 * w;
    hw * hw / ((f - f0).powi(2) + hw * hw)
}

/// CW ODMR spectrum: normalized fluorescence 1 - contrast * sum of
/// Lorentzian dips at the spin-transition frequencies, dip depths scaled by
/// relative transition strength.
pub fn cw_odmr_spectrum(params: &SpinHamiltonianParams, sweep: &OdmrSweep) -> Result<Spectrum> {
    sweep.validate()?;
    let h = crate::nv::ground_hamiltonian(params)?;
    let basis = LevelBasis::ground(params);
    let lines = transition_table(&h, &basis, SelectionRule::default())?;
    if lines.is_empty() {
        return Err(Error::Invalid("no allowed transitions in the sweep model".into()));
    }
    let smax = lines.iter().map(|l| l.strength).fold(0.0f64, f64::max);
    let freq_mhz: Vec<f64> = (0..sweep.n_points)
        .map(|i| {
            sweep.f_start_mhz
                + (sweep.f_stop_mhz - sweep.f_start_mhz) * i as f64
                    / (sweep.n_points - 1) as f64
        })
        .collect();
    let signal = freq_mhz
        .iter()
        .map(|&f| {
            let dip: f64 = lines
                .iter()
                .map(|l| (l.strength / smax) * lorentzian(f, l.freq_mhz, sweep.linewidth_mhz))
                .sum();
            1.0 - sweep.contrast * dip.min(1.0)
        })
        .collect();
    Ok(Spectrum { freq_mhz, signal })
}

/// Low-temperature fluorescence-excitation line parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationLine {
    /// Excited-state lifetime, ns.
    pub lifetime_ns: f64,
    /// Additional broadening added to the lifetime limit, MHz
    /// (spectral diffusion, residual dephasing).
    pub extra_width_mhz: f64,
    /// Detuning sweep half-range, MHz.
    pub span_mhz: f64,
    pub n_points: usize,
}

impl Default for ExcitationLine {
    fn default() -> Self {
        Self {
            lifetime_ns: 13.0,
            extra_width_mhz: 9.5,
            span_mhz: 120.0,
            n_points: 961,
        }
    }
}

impl ExcitationLine {
    pub fn validate(&self) -> Result<()> {
        if self.lifetime_ns <= 0.0 {
            return Err(Error::Invalid("lifetime must be > 0".into()));
        }
        if self.extra_width_mhz < 0.0 {
            return Err(Error::Invalid("extra width must be >= 0".into()));
        }
        if self.n_points < 2 {
            return Err(Error::Invalid("line scan needs at least 2 points".into()));
        }
        Ok(())
    }

    /// Lifetime-limited FWHM 1/(2 pi tau), MHz.
    pub fn lifetime_limit_mhz(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.lifetime_ns * 1e-9) / 1e6
    }

    /// Total Lorentzian FWHM, MHz.
    pub fn fwhm_mhz(&self) -> f64 {
        self.lifetime_limit_mhz() + self.extra_width_mhz
    }
}

/// Resonant excitation line: unit-peak Lorentzian vs laser detuning.
pub fn excitation_line(line: &ExcitationLine) -> Result<Spectrum> {
    line.validate()?;
    let w = line.fwhm_mhz();
    let freq_mhz: Vec<f64> = (0..line.n_points)
        .map(|i| -line.span_mhz + 2.0 * line.span_mhz * i as f64 / (line.n_points - 1) as f64)
        .collect();
    let signal = freq_mhz.iter().map(|&f| lorentzian(f, 0.0, w)).collect();
    Ok(Spectrum { freq_mhz, signal })
}

/// Measure the FWHM of a single-peaked spectrum by linear interpolation at
/// the half-maximum crossings.
pub fn measured_fwhm(s: &Spectrum) -> Result<f64> {
    let (imax, &vmax) = s
        .signal
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or_else(|| Error::Invalid("empty spectrum".into()))?;
    let half = 0.5 * vmax;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev: Option<usize> = None;
        for i in range {
            if s.signal[i] < half {
                let j = prev?;
                let t = (half - s.signal[i]) / (s.signal[j] - s.signal[i]);
                return Some(s.freq_mhz[i] + t * (s.freq_mhz[j] - s.freq_mhz[i]));
            }
            prev = Some(i);
        }
        None
    };
    let left = cross(&mut (0..=imax).rev()).ok_or_else(|| {
        Error::Invalid("spectrum does not fall below half maximum on the left".into())
    })?;
    let right = cross(&mut (imax..s.signal.len())).ok_or_else(|| {
        Error::Invalid("spectrum does not fall below half maximum on the right".into())
    })?;
    Ok(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nv::NucleusSpec;

    #[test]
    fn single_dip_at_zero_field() {
        let params = SpinHamiltonianParams::default();
        let s = cw_odmr_spectrum(&params, &OdmrSweep::default()).unwrap();
        let (imin, vmin) = s
            .signal
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, &v)| (i, v))
            .unwrap();
        assert!((s.freq_mhz[imin] - 2880.0).abs() < 0.5);
        assert!((vmin - 0.85).abs() < 0.01);
    }

    #[test]
    fn axial_field_two_dips() {
        let mut params = SpinHamiltonianParams::default();
        params.b0_mt = [0.0, 0.0, 1.0];
        let s = cw_odmr_spectrum(&params, &OdmrSweep::default()).unwrap();
        // count local minima below 0.95
        let mut dips = Vec::new();
        for i in 1..s.signal.len() - 1 {
            if s.signal[i] < 0.95
                && s.signal[i] < s.signal[i - 1]
                && s.signal[i] <= s.signal[i + 1]
            {
                dips.push(s.freq_mhz[i]);
            }
        }
        assert_eq!(dips.len(), 2, "dips at {dips:?}");
        let split = dips[1] - dips[0];
        assert!((split - 2.0 * 28.03).abs() < 0.5, "split {split}");
    }

    #[test]
    fn n14_triplet_resolved() {
        let mut params = SpinHamiltonianParams::default();
        params.nuclei.push(NucleusSpec::n14());
        let sweep = OdmrSweep {
            f_start_mhz: 2870.0,
            f_stop_mhz: 2890.0,
            n_points: 2001,
            linewidth_mhz: 0.4,
            contrast: 0.2,
        };
        let s = cw_odmr_spectrum(&params, &sweep).unwrap();
        let mut dips = Vec::new();
        for i in 1..s.signal.len() - 1 {
            if s.signal[i] < 0.95
                && s.signal[i] < s.signal[i - 1]
                && s.signal[i] <= s.signal[i + 1]
            {
                dips.push(s.freq_mhz[i]);
            }
        }
        assert_eq!(dips.len(), 3, "dips at {dips:?}");
        assert!((dips[2] - dips[0] - 4.0).abs() < 0.1);
    }

    #[test]
    fn lifetime_limit_value() {
        let line = ExcitationLine::default();
        let gamma = line.lifetime_limit_mhz();
        assert!((gamma - 12.24).abs() < 0.05, "lifetime limit {gamma}");
        assert!((line.fwhm_mhz() - 21.74).abs() < 0.05);
    }

    #[test]
    fn excitation_line_measured_width_matches() {
        let line = ExcitationLine::default();
        let s = excitation_line(&line).unwrap();
        let w = measured_fwhm(&s).unwrap();
        assert!((w - line.fwhm_mhz()).abs() < 0.1, "measured {w}");
    }

    #[test]
    fn rejects_bad_sweep() {
        let params = SpinHamiltonianParams::default();
        let sweep = OdmrSweep { f_stop_mhz: 2700.0, ..OdmrSweep::default() };
        assert!(cw_odmr_spectrum(&params, &sweep).is_err());
    }
}
