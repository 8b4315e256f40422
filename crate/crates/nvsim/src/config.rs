//! Declarative experiment configuration (TOML) with strict validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::measurement::{TelegraphModel, ZenoParams};
use crate::nv::{ExcitedBranch, PhotophysicsRates, SpinHamiltonianParams};
use crate::odmr::{ExcitationLine, OdmrSweep};
use crate::photonics::{EitScan, EmitterModel, LambdaSystem};
use crate::{Error, Result};

/// The experiments the runner knows about.
pub const EXPERIMENTS: &[&str] = &[
    "odmr",
    "excitation-line",
    "rabi",
    "echo",
    "bell-tomography",
    "zeno",
    "readout",
    "g2",
    "eit",
    "polariton-storage",
    "saturation",
];

/// Rabi-oscillation scan settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiSettings {
    pub rabi_mhz: f64,
    pub t_max_us: f64,
    pub n_points: usize,
    /// Pure dephasing during the drive, 1/s.
    pub dephasing_rate: f64,
}

impl Default for RabiSettings {
    fn default() -> Self {
        Self { rabi_mhz: 40.0, t_max_us: 0.5, n_points: 2001, dephasing_rate: 0.0 }
    }
}

/// Two-pulse echo scan settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoSettings {
    pub tau_max_us: f64,
    pub n_points: usize,
}

impl Default for EchoSettings {
    fn default() -> Self {
        Self { tau_max_us: 4.0, n_points: 512 }
    }
}

/// Bell-state preparation + tomography settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellSettings {
    /// One of psi-minus, psi-plus, phi-plus, phi-minus.
    pub state: String,
    /// Pure dephasing during preparation, 1/s.
    pub dephasing_rate: f64,
}

impl Default for BellSettings {
    fn default() -> Self {
        Self { state: "psi-minus".into(), dephasing_rate: 0.0 }
    }
}

/// Single-shot readout Monte Carlo settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSettings {
    pub model: TelegraphModel,
    pub n_windows: usize,
    /// Readout window length, ms.
    pub bin_ms: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        Self { model: TelegraphModel::default(), n_windows: 20000, bin_ms: 5.0 }
    }
}

/// Photon-correlation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Settings {
    pub emitter: EmitterModel,
    /// Optical pump rate, 1/s.
    pub pump_rate: f64,
    pub tau_max_ns: f64,
    pub n_points: usize,
}

impl Default for G2Settings {
    fn default() -> Self {
        Self {
            emitter: EmitterModel::nv(),
            pump_rate: 2.0e7,
            tau_max_ns: 3000.0,
            n_points: 601,
        }
    }
}

/// Dark-polariton storage sweep settings. The control field ramps smoothly
/// from matching g*sqrt(N) down to zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageSettings {
    /// Single-spin coupling constant, 1/s.
    pub g: f64,
    pub n_photons: f64,
    pub steps: usize,
    /// Time per ramp step, ns.
    pub dt_ns: f64,
}

impl Default for StorageSettings {
    fn default() -> Self {
        Self { g: 1.0e7, n_photons: 16.0, steps: 2000, dt_ns: 10.0 }
    }
}

/// Saturated-fluorescence settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationSettings {
    pub branch: ExcitedBranch,
    pub rates: PhotophysicsRates,
}

impl Default for SaturationSettings {
    fn default() -> Self {
        Self { branch: ExcitedBranch::Bright, rates: PhotophysicsRates::default() }
    }
}

fn default_zeno() -> ZenoParams {
    ZenoParams { lambda: 1.0, total_time: 1.0, n_measurements: 4 }
}

/// Full declarative description of one experiment run. Any section may be
/// omitted; defaults are the library defaults. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    /// Output directory.
    pub out: Option<String>,
    /// csv or json.
    pub format: Option<String>,
    pub spin: Option<SpinHamiltonianParams>,
    pub odmr: Option<OdmrSweep>,
    pub excitation: Option<ExcitationLine>,
    pub rabi: Option<RabiSettings>,
    pub echo: Option<EchoSettings>,
    pub bell: Option<BellSettings>,
    pub zeno: Option<ZenoParams>,
    pub readout: Option<ReadoutSettings>,
    pub g2: Option<G2Settings>,
    pub lambda: Option<LambdaSystem>,
    pub eit_scan: Option<EitScan>,
    pub storage: Option<StorageSettings>,
    pub saturation: Option<SaturationSettings>,
}

impl ExperimentConfig {
    /// Parse a TOML config file with positioned diagnostics.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, col) = e
                .span()
                .map(|s| offset_to_line_col(text, s.start))
                .unwrap_or((1, 1));
            Error::Parse { line, col, message: e.message().to_string() }
        })
    }

    pub fn zeno_or_default(&self) -> ZenoParams {
        self.zeno.unwrap_or_else(default_zeno)
    }

    /// Validate every present section without running anything.
    pub fn validate(&self) -> Result<()> {
        if let Some(name) = &self.experiment {
            if !EXPERIMENTS.contains(&name.as_str()) {
                return Err(Error::Invalid(format!(
                    "unknown experiment {name:?}; valid names: {}",
                    EXPERIMENTS.join(", ")
                )));
            }
        }
        if let Some(f) = &self.format {
            f.parse::<crate::output::OutputFormat>()?;
        }
        if let Some(s) = &self.spin {
            s.validate()?;
        }
        if let Some(s) = &self.odmr {
            s.validate()?;
        }
        if let Some(s) = &self.excitation {
            s.validate()?;
        }
        if let Some(s) = &self.rabi {
            if s.rabi_mhz <= 0.0 || s.t_max_us <= 0.0 || s.n_points < 8 {
                return Err(Error::Invalid(
                    "rabi: need rabi_mhz > 0, t_max_us > 0, n_points >= 8".into(),
                ));
            }
            if s.dephasing_rate < 0.0 {
                return Err(Error::Invalid("rabi: dephasing_rate must be >= 0".into()));
            }
        }
        if let Some(s) = &self.echo {
            if s.tau_max_us <= 0.0 || s.n_points < 8 {
                return Err(Error::Invalid(
                    "echo: need tau_max_us > 0 and n_points >= 8".into(),
                ));
            }
        }
        if let Some(s) = &self.bell {
            crate::pulse::BellState::parse(&s.state)?;
            if s.dephasing_rate < 0.0 {
                return Err(Error::Invalid("bell: dephasing_rate must be >= 0".into()));
            }
        }
        if let Some(z) = &self.zeno {
            z.validate()?;
        }
        if let Some(s) = &self.readout {
            s.model.validate()?;
            if s.n_windows == 0 || s.bin_ms <= 0.0 {
                return Err(Error::Invalid(
                    "readout: need n_windows >= 1 and bin_ms > 0".into(),
                ));
            }
        }
        if let Some(s) = &self.g2 {
            s.emitter.validate()?;
            if s.pump_rate <= 0.0 || s.tau_max_ns <= 0.0 || s.n_points < 2 {
                return Err(Error::Invalid(
                    "g2: need pump_rate > 0, tau_max_ns > 0, n_points >= 2".into(),
                ));
            }
        }
        if let Some(s) = &self.lambda {
            s.validate()?;
        }
        if let Some(s) = &self.eit_scan {
            s.validate()?;
        }
        if let Some(s) = &self.storage {
            if s.g < 0.0 || s.n_photons < 0.0 || s.steps < 2 || s.dt_ns <= 0.0 {
                return Err(Error::Invalid(
                    "storage: need g, n_photons >= 0, steps >= 2, dt_ns > 0".into(),
                ));
            }
        }
        if let Some(s) = &self.saturation {
            s.rates.validate()?;
        }
        Ok(())
    }
}

fn offset_to_line_col(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in text.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}
