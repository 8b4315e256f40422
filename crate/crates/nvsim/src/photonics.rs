//! Photon statistics of single emitters and lambda-system photon storage.
//!
//! Covers second-order photon correlations of three-level emitters, the
//! steady-state probe response of a driven lambda system, dressed states,
//! and dark-polariton photon-to-spin storage sweeps.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::qops::solve_complex;
use crate::units::mhz_to_rad;
use crate::{Error, Result};

/// Photophysical description of a single-photon emitter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterModel {
    /// Excited-state lifetime, ns.
    pub lifetime_ns: f64,
    /// Radiative fraction of the excited-state decay.
    pub quantum_yield: f64,
    /// Intersystem-crossing rate into the metastable shelf, 1/s.
    pub isc_rate: f64,
    /// Metastable shelf lifetime, ns.
    pub shelf_lifetime_ns: f64,
    /// Zero-phonon-line wavelength, nm.
    pub zpl_wavelength_nm: f64,
    /// Zero-phonon-line width, nm.
    pub zpl_width_nm: f64,
    /// Fraction of the emission contained in the zero-phonon line.
    pub debye_waller: f64,
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self::nv()
    }
}

impl EmitterModel {
    /// Nitrogen-vacancy defect: 13 ns lifetime, broad phonon sideband.
    pub fn nv() -> Self {
        Self {
            lifetime_ns: 13.0,
            quantum_yield: 0.7,
            isc_rate: 3.0e7,
            shelf_lifetime_ns: 300.0,
            zpl_wavelength_nm: 637.0,
            zpl_width_nm: 1.5,
            debye_waller: 0.04,
        }
    }

    /// Nickel-nitrogen defect: 5 ns lifetime, narrow room-temperature line.
    pub fn ne8() -> Self {
        Self {
            lifetime_ns: 5.0,
            quantum_yield: 0.7,
            isc_rate: 1.5e7,
            shelf_lifetime_ns: 300.0,
            zpl_wavelength_nm: 800.0,
            zpl_width_nm: 1.5,
            debye_waller: 0.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lifetime_ns <= 0.0 {
            return Err(Error::Invalid("emitter lifetime must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.quantum_yield) {
            return Err(Error::Invalid("quantum yield must be in [0, 1]".into()));
        }
        if self.isc_rate < 0.0 {
            return Err(Error::Invalid("ISC rate must be >= 0".into()));
        }
        if self.shelf_lifetime_ns <= 0.0 {
            return Err(Error::Invalid("shelf lifetime must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.debye_waller) {
            return Err(Error::Invalid("Debye-Waller factor must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Second-order photon correlation curve vs interphoton delay.
#[derive(Debug, Clone)]
pub struct G2Curve {
    pub tau_ns: Vec<f64>,
    pub g2: Vec<f64>,
}

/// g2(tau) of a pumped three-level emitter (ground / excited / shelf) from
/// classical rate equations: the excited population conditioned on an
/// emission at tau = 0, normalized by its steady-state value.
///
/// The conditional state starts entirely in the ground level, so g2(0) = 0
/// exactly; at long delay the populations relax to steady state and
/// g2 -> 1. A slow shelf produces a bunching shoulder g2 > 1 at
/// intermediate delays.
pub fn g2_curve(
    m: &EmitterModel,
    pump_rate: f64,
    tau_max_ns: f64,
    n_points: usize,
) -> Result<G2Curve> {
    m.validate()?;
    if pump_rate <= 0.0 {
        return Err(Error::Invalid("pump rate must be > 0".into()));
    }
    if tau_max_ns <= 0.0 || n_points < 2 {
        return Err(Error::Invalid("need tau_max > 0 and at least 2 points".into()));
    }
    let w = pump_rate;
    let k_e = 1.0 / (m.lifetime_ns * 1e-9);
    let k_isc = m.isc_rate;
    let k_s = 1.0 / (m.shelf_lifetime_ns * 1e-9);

    // Steady state from flux balance: w*pg = (k_e + k_isc)*pe, k_isc*pe = k_s*ps.
    let pe_over_pg = w / (k_e + k_isc);
    let ps_over_pg = pe_over_pg * k_isc / k_s;
    let pe_ss = pe_over_pg / (1.0 + pe_over_pg + ps_over_pg);

    let deriv = |p: [f64; 3]| -> [f64; 3] {
        [
            -w * p[0] + k_e * p[1] + k_s * p[2],
            w * p[0] - (k_e + k_isc) * p[1],
            k_isc * p[1] - k_s * p[2],
        ]
    };
    let max_rate = w.max(k_e + k_isc).max(k_s);
    let tau_step = tau_max_ns * 1e-9 / (n_points - 1) as f64;
    let oversample = (tau_step * max_rate / 0.05).ceil().max(1.0) as usize;
    let dt = tau_step / oversample as f64;

    let mut p = [1.0, 0.0, 0.0];
    let mut tau_ns = Vec::with_capacity(n_points);
    let mut g2 = Vec::with_capacity(n_points);
    for i in 0..n_points {
        tau_ns.push(i as f64 * tau_max_ns / (n_points - 1) as f64);
        g2.push(p[1] / pe_ss);
        for _ in 0..oversample {
            let k1 = deriv(p);
            let mid1 = std::array::from_fn(|j| p[j] + 0.5 * dt * k1[j]);
            let k2 = deriv(mid1);
            let mid2 = std::array::from_fn(|j| p[j] + 0.5 * dt * k2[j]);
            let k3 = deriv(mid2);
            let end = std::array::from_fn(|j| p[j] + dt * k3[j]);
            let k4 = deriv(end);
            for j in 0..3 {
                p[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
    }
    Ok(G2Curve { tau_ns, g2 })
}

/// How the lambda-system probe response is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EitPresentation {
    /// Normalized fluorescence: a narrow increase marks the transparency
    /// window, matching the optically detected presentation.
    FluorescenceIncrease,
    /// Raw excited-level population: a narrow dip inside the absorption peak.
    Absorption,
}

/// Three-level lambda system: two lower levels |1>, |3> and an upper
/// level |2>, with a strong coupling field on |3> <-> |2> and a weak
/// scanned probe on |1> <-> |2>.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSystem {
    pub e1_mhz: f64,
    pub e2_mhz: f64,
    pub e3_mhz: f64,
    /// Coupling Rabi frequency, MHz.
    pub omega_c_mhz: f64,
    /// Probe Rabi frequency, MHz.
    pub omega_p_mhz: f64,
    /// Coupling field frequency, MHz.
    pub coupling_freq_mhz: f64,
    /// Dephasing rate between the two lower levels, 1/s.
    pub ground_dephasing: f64,
    /// Decay rate of the upper level (split evenly to the lower pair), 1/s.
    pub excited_decay: f64,
}

impl Default for LambdaSystem {
    fn default() -> Self {
        Self {
            e1_mhz: 6.0,
            e2_mhz: 2803.0,
            e3_mhz: 0.0,
            omega_c_mhz: 1.0,
            omega_p_mhz: 0.1,
            coupling_freq_mhz: 2803.0,
            ground_dephasing: 3.0e6,
            excited_decay: 3.0e7,
        }
    }
}

impl LambdaSystem {
    pub fn validate(&self) -> Result<()> {
        if self.omega_c_mhz < 0.0 || self.omega_p_mhz < 0.0 {
            return Err(Error::Invalid("Rabi frequencies must be >= 0".into()));
        }
        if self.omega_p_mhz > 0.0 && self.omega_c_mhz > 0.0 && self.omega_p_mhz >= self.omega_c_mhz
        {
            return Err(Error::Invalid(
                "transparency regime needs omega_c > omega_p".into(),
            ));
        }
        if self.ground_dephasing < 0.0 {
            return Err(Error::Invalid("ground dephasing must be >= 0".into()));
        }
        if self.excited_decay <= 0.0 {
            return Err(Error::Invalid("excited decay must be > 0".into()));
        }
        if self.e2_mhz <= self.e1_mhz.max(self.e3_mhz) {
            return Err(Error::Invalid("|2> must lie above both lower levels".into()));
        }
        Ok(())
    }

    /// Probe frequency of the two-photon resonance, MHz.
    pub fn two_photon_resonance_mhz(&self) -> f64 {
        self.coupling_freq_mhz - (self.e1_mhz - self.e3_mhz)
    }
}

/// Probe-frequency scan parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EitScan {
    pub f_start_mhz: f64,
    pub f_stop_mhz: f64,
    pub n_points: usize,
    pub presentation: EitPresentation,
}

impl Default for EitScan {
    fn default() -> Self {
        Self {
            f_start_mhz: 2780.0,
            f_stop_mhz: 2814.0,
            n_points: 681,
            presentation: EitPresentation::FluorescenceIncrease,
        }
    }
}

impl EitScan {
    pub fn validate(&self) -> Result<()> {
        if self.f_stop_mhz <= self.f_start_mhz || self.n_points < 3 {
            return Err(Error::Invalid("scan needs f_stop > f_start and >= 3 points".into()));
        }
        Ok(())
    }

    pub fn bin_mhz(&self) -> f64 {
        (self.f_stop_mhz - self.f_start_mhz) / (self.n_points - 1) as f64
    }
}

/// Probe spectrum of the driven lambda system.
#[derive(Debug, Clone)]
pub struct EitSpectrum {
    pub probe_mhz: Vec<f64>,
    pub signal: Vec<f64>,
    pub presentation: EitPresentation,
    /// Set when the configuration cannot show a transparency window
    /// (no coupling field: the scan is a plain single resonance).
    pub note: Option<String>,
}

/// Steady-state probe response of the lambda system vs probe frequency.
///
/// Solves the three-level master equation (Liouvillian null space with unit
/// trace) at each probe point. A narrow feature appears at the two-photon
/// resonance; as the coupling weakens, its width becomes limited by the
/// lower-level dephasing.
pub fn eit_probe_spectrum(sys: &LambdaSystem, scan: &EitScan) -> Result<EitSpectrum> {
    sys.validate()?;
    scan.validate()?;
    let omega_c = mhz_to_rad(sys.omega_c_mhz);
    let omega_p = mhz_to_rad(sys.omega_p_mhz);
    let delta_c = mhz_to_rad(sys.coupling_freq_mhz - (sys.e2_mhz - sys.e3_mhz));
    let gamma = sys.excited_decay;

    // Collapse operators: upper-level decay to each lower level plus pure
    // dephasing of the lower-level coherence.
    let mut collapse: Vec<Array2<C64>> = Vec::new();
    let mut l_decay1 = Array2::<C64>::zeros((3, 3));
    l_decay1[[0, 1]] = C64::new((0.5 * gamma).sqrt(), 0.0);
    collapse.push(l_decay1);
    let mut l_decay3 = Array2::<C64>::zeros((3, 3));
    l_decay3[[2, 1]] = C64::new((0.5 * gamma).sqrt(), 0.0);
    collapse.push(l_decay3);
    if sys.ground_dephasing > 0.0 {
        let mut l_deph = Array2::<C64>::zeros((3, 3));
        l_deph[[2, 2]] = C64::new((2.0 * sys.ground_dephasing).sqrt(), 0.0);
        collapse.push(l_deph);
    }

    let idx = |i: usize, j: usize| 3 * i + j;
    let mut probe_mhz = Vec::with_capacity(scan.n_points);
    let mut excited = Vec::with_capacity(scan.n_points);
    for k in 0..scan.n_points {
        let f = scan.f_start_mhz
            + (scan.f_stop_mhz - scan.f_start_mhz) * k as f64 / (scan.n_points - 1) as f64;
        probe_mhz.push(f);
        let delta_p = mhz_to_rad(f - (sys.e2_mhz - sys.e1_mhz));
        // Rotating-frame Hamiltonian in the basis (|1>, |2>, |3>).
        let mut h = Array2::<C64>::zeros((3, 3));
        h[[1, 1]] = C64::new(-delta_p, 0.0);
        h[[2, 2]] = C64::new(-(delta_p - delta_c), 0.0);
        h[[0, 1]] = C64::new(0.5 * omega_p, 0.0);
        h[[1, 0]] = C64::new(0.5 * omega_p, 0.0);
        h[[1, 2]] = C64::new(0.5 * omega_c, 0.0);
        h[[2, 1]] = C64::new(0.5 * omega_c, 0.0);

        // Liouvillian superoperator over vec(rho)_{3i+j} = rho_ij.
        let mut liou = Array2::<C64>::zeros((9, 9));
        let mi = C64::new(0.0, -1.0);
        for i in 0..3 {
            for j in 0..3 {
                for k2 in 0..3 {
                    // -i (H rho - rho H)
                    liou[[idx(i, j), idx(k2, j)]] += mi * h[[i, k2]];
                    liou[[idx(i, j), idx(i, k2)]] -= mi * h[[k2, j]];
                }
            }
        }
        for l in &collapse {
            let ldl = {
                let ld = l.t().mapv(|v| v.conj());
                ld.dot(l)
            };
            for i in 0..3 {
                for j in 0..3 {
                    for a in 0..3 {
                        for b in 0..3 {
                            liou[[idx(i, j), idx(a, b)]] += l[[i, a]] * l[[j, b]].conj();
                        }
                        liou[[idx(i, j), idx(a, j)]] -= 0.5 * ldl[[i, a]];
                        liou[[idx(i, j), idx(i, a)]] -= 0.5 * ldl[[a, j]];
                    }
                }
            }
        }
        // Replace one row with the unit-trace constraint and solve.
        let mut rhs = vec![C64::new(0.0, 0.0); 9];
        for col in 0..9 {
            liou[[0, col]] = C64::new(0.0, 0.0);
        }
        for d in 0..3 {
            liou[[0, idx(d, d)]] = C64::new(1.0, 0.0);
        }
        rhs[0] = C64::new(1.0, 0.0);
        let rho = solve_complex(&liou, &rhs)?;
        excited.push(rho[idx(1, 1)].re.max(0.0));
    }

    let signal = match scan.presentation {
        EitPresentation::Absorption => excited,
        EitPresentation::FluorescenceIncrease => {
            let peak = excited.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
            excited.iter().map(|&p| 1.0 - p / peak).collect()
        }
    };
    let note = if sys.omega_c_mhz == 0.0 {
        Some("no coupling field: plain single-resonance spectrum, no transparency window".into())
    } else {
        None
    };
    Ok(EitSpectrum { probe_mhz, signal, presentation: scan.presentation, note })
}

/// Center and width of the narrow transparency feature.
#[derive(Debug, Clone, Copy)]
pub struct EitFeature {
    pub center_mhz: f64,
    pub fwhm_mhz: f64,
}

/// Locate the narrow feature nested inside the broad resonance: the
/// extremum between the two shoulder extrema of opposite kind.
pub fn eit_feature(spec: &EitSpectrum) -> Result<EitFeature> {
    // Work on a signal where the feature is a local minimum.
    let v: Vec<f64> = match spec.presentation {
        EitPresentation::Absorption => spec.signal.clone(),
        EitPresentation::FluorescenceIncrease => spec.signal.iter().map(|&s| -s).collect(),
    };
    let n = v.len();
    let mut maxima = Vec::new();
    for i in 1..n - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            maxima.push(i);
        }
    }
    if maxima.len() < 2 {
        return Err(Error::Invalid(
            "no nested feature found (single-resonance spectrum?)".into(),
        ));
    }
    // Take the two tallest shoulders and look between them.
    maxima.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
    let (lo, hi) = (maxima[0].min(maxima[1]), maxima[0].max(maxima[1]));
    if hi - lo < 2 {
        return Err(Error::Invalid("shoulders too close to resolve a feature".into()));
    }
    let imin = (lo + 1..hi)
        .min_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap())
        .unwrap();
    let center_mhz = spec.probe_mhz[imin];

    // FWHM of the dip relative to the shoulder level.
    let shoulder = 0.5 * (v[lo] + v[hi]);
    let half = 0.5 * (shoulder + v[imin]);
    let mut left = spec.probe_mhz[lo];
    for i in (lo..imin).rev() {
        if v[i] >= half {
            let t = (half - v[i + 1]) / (v[i] - v[i + 1]);
            left = spec.probe_mhz[i + 1] + t * (spec.probe_mhz[i] - spec.probe_mhz[i + 1]);
            break;
        }
    }
    let mut right = spec.probe_mhz[hi];
    for i in imin + 1..=hi {
        if v[i] >= half {
            let t = (half - v[i - 1]) / (v[i] - v[i - 1]);
            right = spec.probe_mhz[i - 1] + t * (spec.probe_mhz[i] - spec.probe_mhz[i - 1]);
            break;
        }
    }
    Ok(EitFeature { center_mhz, fwhm_mhz: right - left })
}

/// The pair of coupled-field dressed states, as real amplitude vectors over
/// the basis (|1>, |2>, |3>).
#[derive(Debug, Clone, Copy)]
pub struct DressedStates {
    /// Symmetric combination: (|3> + |2>)/sqrt(2) at resonant coupling.
    pub a: [f64; 3],
    /// Antisymmetric combination: (|3> - |2>)/sqrt(2) at resonant coupling.
    pub b: [f64; 3],
}

/// Dressed states of the coupling-driven |2> <-> |3> block.
///
/// At resonant coupling these are the equal-weight superpositions; off
/// resonance they are the eigenvectors of the rotating-frame 2x2 block and
/// approach the bare states as the detuning grows.
pub fn dressed_states(sys: &LambdaSystem) -> Result<DressedStates> {
    sys.validate()?;
    let delta_c = sys.coupling_freq_mhz - (sys.e2_mhz - sys.e3_mhz);
    if sys.omega_c_mhz == 0.0 && delta_c == 0.0 {
        return Err(Error::Invalid(
            "dressed states undefined without coupling or detuning".into(),
        ));
    }
    // Rotating-frame block in the (|2>, |3>) basis: diag(-delta_c, 0) with
    // off-diagonal omega_c/2; mixing angle from the standard two-level form.
    let theta = 0.5 * f64::atan2(sys.omega_c_mhz, -delta_c);
    Ok(DressedStates {
        a: [0.0, theta.cos(), theta.sin()],
        b: [0.0, -theta.sin(), theta.cos()],
    })
}

/// Dark-polariton state: superposition of a photonic amplitude and a
/// collective spin amplitude with mixing angle theta.
#[derive(Debug, Clone, Copy)]
pub struct PolaritonState {
    /// Mixing angle, radians.
    pub theta: f64,
    pub photon_amplitude: C64,
    pub spin_amplitude: C64,
    /// Single-spin coupling constant, 1/s.
    pub g: f64,
    /// Photon number of the stored mode.
    pub n_photons: f64,
}

impl PolaritonState {
    pub fn photon_fraction(&self) -> f64 {
        self.photon_amplitude.norm_sqr()
    }

    pub fn spin_fraction(&self) -> f64 {
        self.spin_amplitude.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.photon_fraction() + self.spin_fraction()
    }
}

/// Construct a dark polariton for control Rabi frequency `omega_mhz`,
/// coupling `g` (1/s), and photon number `n`.
///
/// cos(theta) = Omega / sqrt(Omega^2 + g^2 N) and
/// sin(theta) = g sqrt(N) / sqrt(Omega^2 + g^2 N); as Omega -> 0 the
/// excitation resides entirely in the spins.
pub fn polariton(omega_mhz: f64, g: f64, n: f64) -> Result<PolaritonState> {
    if omega_mhz < 0.0 || g < 0.0 || n < 0.0 {
        return Err(Error::Invalid("polariton parameters must be >= 0".into()));
    }
    let omega = mhz_to_rad(omega_mhz);
    let gn = g * n.sqrt();
    if omega == 0.0 && gn == 0.0 {
        return Err(Error::Invalid(
            "mixing angle undefined when both the control field and g*sqrt(N) vanish".into(),
        ));
    }
    let theta = f64::atan2(gn, omega);
    Ok(PolaritonState {
        theta,
        photon_amplitude: C64::new(theta.cos(), 0.0),
        spin_amplitude: C64::new(theta.sin(), 0.0),
        g,
        n_photons: n,
    })
}

/// Evolve the photon/spin amplitudes through a control-field ramp.
///
/// The dark combination is stationary while the orthogonal bright
/// combination precesses at sqrt(Omega^2 + g^2 N); each ramp step applies
/// that rotation exactly, so the total norm is conserved to rounding. A
/// ramp that is slow on the precession timescale keeps the state dark and
/// maps photons onto spins (storage); reversing the ramp retrieves them.
/// The ramp must be monotone; storage ramps end at zero control field.
pub fn storage_sweep(
    initial: &PolaritonState,
    ramp_mhz: &[f64],
    dt_s: f64,
) -> Result<Vec<PolaritonState>> {
    if ramp_mhz.len() < 2 {
        return Err(Error::Invalid("ramp needs at least 2 points".into()));
    }
    if dt_s <= 0.0 {
        return Err(Error::Invalid("ramp step time must be > 0".into()));
    }
    let increasing = ramp_mhz.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = ramp_mhz.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        return Err(Error::Invalid("ramp must be monotone".into()));
    }
    if ramp_mhz.iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid("control field must be >= 0".into()));
    }
    let gn = initial.g * initial.n_photons.sqrt();
    let mut e = initial.photon_amplitude;
    let mut s = initial.spin_amplitude;
    let mut out = Vec::with_capacity(ramp_mhz.len());
    for &om_mhz in ramp_mhz {
        let omega = mhz_to_rad(om_mhz);
        let theta = f64::atan2(gn, omega);
        let (sin_t, cos_t) = theta.sin_cos();
        let nu = omega.hypot(gn);
        // Decompose into dark (cos, sin) and bright (-sin, cos) components.
        let dark = e * cos_t + s * sin_t;
        let bright = (-e) * sin_t + s * cos_t;
        let bright = bright * C64::from_polar(1.0, -nu * dt_s);
        e = dark * cos_t - bright * sin_t;
        s = dark * sin_t + bright * cos_t;
        out.push(PolaritonState {
            theta,
            photon_amplitude: e,
            spin_amplitude: s,
            g: initial.g,
            n_photons: initial.n_photons,
        });
    }
    Ok(out)
}

/// Spatial pulse-compression factor c/v_gr = n + omega * dn/d(delta) for a
/// carrier at angular frequency `omega` in a medium with refractive index
/// `n_index` and dispersion slope `dn_ddelta`.
pub fn group_velocity_compression(n_index: f64, dn_ddelta: f64, omega: f64) -> Result<f64> {
    let ratio = n_index + omega * dn_ddelta;
    if ratio <= 0.0 {
        return Err(Error::Invalid(
            "group index must be positive for the slow-light formula".into(),
        ));
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emitter_presets_validate() {
        EmitterModel::nv().validate().unwrap();
        EmitterModel::ne8().validate().unwrap();
        let bad = EmitterModel { lifetime_ns: -1.0, ..EmitterModel::nv() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn g2_antibunched_and_normalized() {
        for m in [EmitterModel::nv(), EmitterModel::ne8()] {
            let c = g2_curve(&m, 2.0e7, 5000.0, 501).unwrap();
            assert_eq!(c.g2[0], 0.0);
            let tail = *c.g2.last().unwrap();
            assert!((tail - 1.0).abs() < 1e-3, "tail {tail}");
        }
    }

    #[test]
    fn ne8_bunching_shoulder() {
        let c = g2_curve(&EmitterModel::ne8(), 5.0e7, 3000.0, 601).unwrap();
        let peak = c.g2.iter().cloned().fold(0.0f64, f64::max);
        assert!(peak > 1.05, "no bunching shoulder, peak {peak}");
    }

    #[test]
    fn two_level_monotonic_rise() {
        let m = EmitterModel { isc_rate: 0.0, ..EmitterModel::nv() };
        let c = g2_curve(&m, 1.0e7, 200.0, 401).unwrap();
        for w in c.g2.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(c.g2.iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn g2_rate_rescaling_invariance() {
        let m = EmitterModel::ne8();
        let scaled = EmitterModel {
            lifetime_ns: m.lifetime_ns / 2.0,
            isc_rate: m.isc_rate * 2.0,
            shelf_lifetime_ns: m.shelf_lifetime_ns / 2.0,
            ..m.clone()
        };
        let a = g2_curve(&m, 4.0e7, 2000.0, 201).unwrap();
        let b = g2_curve(&scaled, 8.0e7, 1000.0, 201).unwrap();
        for (x, y) in a.g2.iter().zip(&b.g2) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn eit_feature_at_two_photon_resonance() {
        let sys = LambdaSystem::default();
        let scan = EitScan::default();
        let spec = eit_probe_spectrum(&sys, &scan).unwrap();
        assert!(spec.note.is_none());
        let feat = eit_feature(&spec).unwrap();
        let expected = sys.two_photon_resonance_mhz();
        assert!((expected - 2797.0).abs() < 1e-12);
        assert!(
            (feat.center_mhz - expected).abs() <= scan.bin_mhz() + 1e-9,
            "feature at {}",
            feat.center_mhz
        );
    }

    #[test]
    fn eit_width_tracks_ground_dephasing() {
        let scan = EitScan {
            f_start_mhz: 2790.0,
            f_stop_mhz: 2804.0,
            n_points: 1401,
            presentation: EitPresentation::Absorption,
        };
        let mut widths = Vec::new();
        for deph in [2.0e5, 2.0e6] {
            let sys = LambdaSystem {
                omega_c_mhz: 0.3,
                omega_p_mhz: 0.03,
                ground_dephasing: deph,
                ..LambdaSystem::default()
            };
            let spec = eit_probe_spectrum(&sys, &scan).unwrap();
            widths.push(eit_feature(&spec).unwrap().fwhm_mhz);
        }
        assert!(
            widths[1] > 1.5 * widths[0],
            "widths {widths:?} do not track dephasing"
        );
    }

    #[test]
    fn eit_no_coupling_is_single_resonance() {
        let sys = LambdaSystem { omega_c_mhz: 0.0, ..LambdaSystem::default() };
        let spec = eit_probe_spectrum(&sys, &EitScan::default()).unwrap();
        assert!(spec.note.is_some());
        assert!(eit_feature(&spec).is_err());
    }

    #[test]
    fn eit_feature_invariant_under_probe_power() {
        let scan = EitScan::default();
        let mut centers = Vec::new();
        for op in [0.1, 0.02] {
            let sys = LambdaSystem { omega_p_mhz: op, ..LambdaSystem::default() };
            let spec = eit_probe_spectrum(&sys, &scan).unwrap();
            centers.push(eit_feature(&spec).unwrap().center_mhz);
        }
        assert!((centers[0] - centers[1]).abs() <= scan.bin_mhz() + 1e-9);
    }

    #[test]
    fn dressed_states_resonant() {
        let sys = LambdaSystem::default();
        let d = dressed_states(&sys).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert!((d.a[1] - r).abs() < 1e-12 && (d.a[2] - r).abs() < 1e-12);
        assert!((d.b[1] + r).abs() < 1e-12 && (d.b[2] - r).abs() < 1e-12);
        let dot: f64 = (0..3).map(|i| d.a[i] * d.b[i]).sum();
        assert!(dot.abs() < 1e-15);
    }

    #[test]
    fn dressed_states_far_detuned_approach_bare() {
        for detuning in [50.0, 200.0, 1000.0] {
            let sys = LambdaSystem {
                coupling_freq_mhz: 2803.0 + detuning,
                ..LambdaSystem::default()
            };
            let d = dressed_states(&sys).unwrap();
            // One dressed state should be mostly |3>, the other mostly |2>.
            let deficit3 = 1.0 - d.a[2].powi(2).max(d.b[2].powi(2));
            let deficit2 = 1.0 - d.a[1].powi(2).max(d.b[1].powi(2));
            let bound = (sys.omega_c_mhz / (2.0 * detuning)).powi(2) * 1.1;
            assert!(deficit3 < bound, "deficit {deficit3} vs bound {bound}");
            assert!(deficit2 < bound, "deficit {deficit2} vs bound {bound}");
        }
    }

    #[test]
    fn polariton_limits_and_identity() {
        let p = polariton(0.0, 1.0e7, 4.0).unwrap();
        assert!((p.photon_fraction()).abs() < 1e-30);
        assert!((p.spin_fraction() - 1.0).abs() < 1e-12);
        // Omega^2 = g^2 N: equal superposition.
        let omega_eq = 1.0e7 * 2.0 / mhz_to_rad(1.0);
        let p = polariton(omega_eq, 1.0e7, 4.0).unwrap();
        assert!((p.photon_fraction() - 0.5).abs() < 1e-12);
        // Homogeneity: scaling both arguments leaves the angle invariant.
        let q = polariton(omega_eq * 3.0, 3.0e7, 4.0).unwrap();
        assert!((p.theta - q.theta).abs() < 1e-12);
        assert!(polariton(0.0, 0.0, 4.0).is_err());
        assert!(polariton(0.0, 1.0e7, 0.0).is_err());
    }

    #[test]
    fn adiabatic_storage_and_retrieval() {
        let g = 1.0e7;
        let n = 16.0f64;
        let gn = g * n.sqrt();
        let omega0 = gn / mhz_to_rad(1.0);
        let init = polariton(omega0, g, n).unwrap();
        // Smooth ramp: endpoints with zero slope keep the sweep adiabatic.
        let steps = 2000;
        let ramp: Vec<f64> = (0..=steps)
            .map(|i| {
                let x = i as f64 / steps as f64;
                omega0 * (0.5 * std::f64::consts::PI * x).cos().powi(2)
            })
            .collect();
        let traj = storage_sweep(&init, &ramp, 10.0e-9).unwrap();
        let last = traj.last().unwrap();
        assert!(last.spin_fraction() > 0.999, "spin {}", last.spin_fraction());
        for p in &traj {
            assert!((p.norm() - 1.0).abs() < 1e-6);
        }
        // Retrieval: run the reversed ramp from the stored state.
        let back: Vec<f64> = ramp.iter().rev().cloned().collect();
        let rt = storage_sweep(last, &back, 10.0e-9).unwrap();
        let fin = rt.last().unwrap();
        assert!(
            (fin.photon_fraction() - init.photon_fraction()).abs() < 1e-3,
            "round trip photon fraction {}",
            fin.photon_fraction()
        );
    }

    #[test]
    fn quench_keeps_spin_fraction() {
        let init = polariton(5.0, 1.0e7, 9.0).unwrap();
        let traj = storage_sweep(&init, &[5.0, 0.0], 1.0e-9).unwrap();
        let fin = traj.last().unwrap();
        assert!((fin.spin_fraction() - init.spin_fraction()).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_ramp_rejected() {
        let init = polariton(5.0, 1.0e7, 9.0).unwrap();
        assert!(storage_sweep(&init, &[5.0, 6.0, 4.0], 1.0e-9).is_err());
    }

    #[test]
    fn group_velocity_formula() {
        assert!((group_velocity_compression(1.0, 0.0, 1.0e15).unwrap() - 1.0).abs() < 1e-12);
        let r1 = group_velocity_compression(1.0, 1.0e-12, 1.0e15).unwrap();
        let r2 = group_velocity_compression(1.0, 2.0e-12, 1.0e15).unwrap();
        assert!(r1 > 100.0);
        assert!((r2 / r1 - 2.0).abs() < 0.01);
        assert!(group_velocity_compression(1.0, -2.0e-15, 1.0e15).is_err());
    }
}
