//! Experiment runner: every simulation in the library as a reproducible
//! subcommand with declarative TOML config and CSV/JSON output.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use nvsim::config::{
    BellSettings, EchoSettings, ExperimentConfig, G2Settings, RabiSettings, ReadoutSettings,
    SaturationSettings, StorageSettings,
};
use nvsim::measurement::{
    readout_fidelity, readout_histogram, zeno_survival_continuous, zeno_survival_discrete,
    ZenoParams,
};
use nvsim::nv::{saturated_intensity, ExcitedBranch, NucleusSpec, SpinHamiltonianParams};
use nvsim::odmr::{cw_odmr_spectrum, excitation_line, ExcitationLine};
use nvsim::output::{write_json, MatrixJson, OutputFormat, RunManifest, Table};
use nvsim::photonics::{
    eit_feature, eit_probe_spectrum, g2_curve, polariton, storage_sweep, EitPresentation,
    EitScan, LambdaSystem,
};
use nvsim::pulse::{hahn_echo_trace, prepare_bell, rabi_trace, tomography_reconstruct, BellState};
use nvsim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nvsim",
    version,
    about = "Simulations of single defect-center spin and photon experiments"
)]
struct Cli {
    /// TOML experiment configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for stochastic experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for curves: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Continuous-wave magnetic-resonance spectrum.
    Odmr {
        /// Static field in mT as x,y,z.
        #[arg(long)]
        b0: Option<String>,
        /// Add a coupled nucleus: n14 or c13 (repeatable).
        #[arg(long)]
        nucleus: Vec<String>,
    },
    /// Low-temperature fluorescence-excitation line.
    ExcitationLine,
    /// Driven spin oscillation trace.
    Rabi {
        #[arg(long)]
        rabi_mhz: Option<f64>,
        #[arg(long)]
        t_max_us: Option<f64>,
        /// Pure dephasing during the drive, 1/s.
        #[arg(long)]
        dephasing: Option<f64>,
    },
    /// Two-pulse echo envelope vs inter-pulse delay.
    Echo {
        #[arg(long)]
        b0: Option<String>,
        #[arg(long)]
        nucleus: Vec<String>,
        #[arg(long)]
        tau_max_us: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Prepare a two-qubit entangled state and reconstruct its density matrix.
    BellTomography {
        /// psi-minus, psi-plus, phi-plus, or phi-minus.
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        dephasing: Option<f64>,
    },
    /// Survival probability under repeated projective measurement.
    Zeno {
        /// Product of transition amplitude and total time.
        #[arg(long)]
        lambda_t: Option<f64>,
        /// Number of measurements.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Monte Carlo single-shot readout histogram and fidelity analysis.
    Readout {
        #[arg(long)]
        n_windows: Option<usize>,
        #[arg(long)]
        bin_ms: Option<f64>,
    },
    /// Second-order photon correlation of a single emitter.
    G2 {
        /// Emitter preset: nv or ne8.
        #[arg(long)]
        emitter: Option<String>,
        #[arg(long)]
        pump_rate: Option<f64>,
        #[arg(long)]
        tau_max_ns: Option<f64>,
    },
    /// Probe spectrum of the coupled three-level lambda system.
    Eit {
        #[arg(long)]
        omega_c_mhz: Option<f64>,
        #[arg(long)]
        ground_dephasing: Option<f64>,
        /// fluorescence or absorption.
        #[arg(long)]
        presentation: Option<String>,
    },
    /// Photon-to-spin storage sweep of the dark polariton.
    PolaritonStorage {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dt_ns: Option<f64>,
    },
    /// Saturated fluorescence intensity of one excitation branch.
    Saturation {
        /// bright or dark.
        #[arg(long)]
        branch: Option<String>,
    },
    /// Validate the configuration without running anything.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut written: Vec<PathBuf> = Vec::new();
    match run(&cli, &mut written) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // Leave no partial results behind.
            for p in written {
                let _ = std::fs::remove_file(p);
            }
            match e {
                Error::Invalid(_) | Error::Parse { .. } | Error::Dimension(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: &Cli, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(fmt) = &cli.format {
        cfg.format = Some(fmt.clone());
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    cfg.validate()?;

    let out_dir = cfg.out.clone().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let format: OutputFormat = cfg.format.as_deref().unwrap_or("csv").parse()?;
    let seed = cfg.seed.unwrap_or(0);
    let start = Instant::now();

    let name = match &cli.cmd {
        Cmd::Odmr { .. } => "odmr",
        Cmd::ExcitationLine => "excitation-line",
        Cmd::Rabi { .. } => "rabi",
        Cmd::Echo { .. } => "echo",
        Cmd::BellTomography { .. } => "bell-tomography",
        Cmd::Zeno { .. } => "zeno",
        Cmd::Readout { .. } => "readout",
        Cmd::G2 { .. } => "g2",
        Cmd::Eit { .. } => "eit",
        Cmd::PolaritonStorage { .. } => "polariton-storage",
        Cmd::Saturation { .. } => "saturation",
        Cmd::Validate => {
            println!("configuration is valid");
            return Ok(());
        }
    };
    if !out_dir.is_dir() {
        std::fs::create_dir_all(&out_dir)?;
    }

    match &cli.cmd {
        Cmd::Odmr { b0, nucleus } => {
            let params = spin_params(&cfg, b0.as_deref(), nucleus)?;
            let sweep = cfg.odmr.clone().unwrap_or_default();
            let spec = cw_odmr_spectrum(&params, &sweep)?;
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "normalized fluorescence vs microwave frequency")
                .column("freq_mhz", spec.freq_mhz)
                .column("fluorescence", spec.signal);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::ExcitationLine => {
            let line: ExcitationLine = cfg.excitation.clone().unwrap_or_default();
            let spec = excitation_line(&line)?;
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "resonant excitation response vs laser detuning")
                .meta("fwhm_mhz", line.fwhm_mhz())
                .column("detuning_mhz", spec.freq_mhz)
                .column("fluorescence", spec.signal);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::Rabi { rabi_mhz, t_max_us, dephasing } => {
            let mut s: RabiSettings = cfg.rabi.clone().unwrap_or_default();
            if let Some(v) = rabi_mhz {
                s.rabi_mhz = *v;
            }
            if let Some(v) = t_max_us {
                s.t_max_us = *v;
            }
            if let Some(v) = dephasing {
                s.dephasing_rate = *v;
            }
            let tr = rabi_trace(s.rabi_mhz, s.t_max_us, s.n_points, s.dephasing_rate)?;
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "driven population oscillation vs drive duration")
                .meta("rabi_mhz", s.rabi_mhz)
                .column("time_s", tr.times)
                .column("population_0", tr.values);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::Echo { b0, nucleus, tau_max_us, n_points } => {
            let params = spin_params(&cfg, b0.as_deref(), nucleus)?;
            let mut s: EchoSettings = cfg.echo.clone().unwrap_or_default();
            if let Some(v) = tau_max_us {
                s.tau_max_us = *v;
            }
            if let Some(v) = n_points {
                s.n_points = *v;
            }
            let (tr, warnings) = hahn_echo_trace(&params, s.tau_max_us, s.n_points)?;
            for w in &warnings {
                eprintln!("note: {w}");
            }
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "echo amplitude vs inter-pulse delay")
                .column("tau_s", tr.times)
                .column("echo", tr.values);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::BellTomography { state, dephasing } => {
            let mut s: BellSettings = cfg.bell.clone().unwrap_or_default();
            if let Some(v) = state {
                s.state = v.clone();
            }
            if let Some(v) = dephasing {
                s.dephasing_rate = *v;
            }
            let which = BellState::parse(&s.state)?;
            let seq = prepare_bell(which);
            let result = tomography_reconstruct(&seq, s.dephasing_rate)?;
            let fidelity = result.rho.fidelity_with_state(&which.amplitudes());
            let doc = serde_json::json!({
                "experiment": name,
                "state": s.state,
                "rho": MatrixJson::from_matrix(result.rho.matrix()),
                "hermiticity_deviation": result.hermiticity_deviation,
                "flagged": result.flagged,
                "fidelity_vs_ideal": fidelity,
            });
            let path = out_dir.join(format!("{name}.json"));
            write_json(&path, &doc)?;
            written.push(path);
        }
        Cmd::Zeno { lambda_t, n } => {
            let mut z: ZenoParams = cfg.zeno_or_default();
            if let Some(v) = lambda_t {
                z.lambda = *v;
                z.total_time = 1.0;
            }
            if let Some(v) = n {
                z.n_measurements = *v;
            }
            let doc = serde_json::json!({
                "experiment": name,
                "lambda_t": z.lambda_t(),
                "n_measurements": z.n_measurements,
                "p_surv": zeno_survival_discrete(&z)?,
                "p_surv_continuous": zeno_survival_continuous(&z)?,
            });
            let path = out_dir.join(format!("{name}.json"));
            write_json(&path, &doc)?;
            written.push(path);
        }
        Cmd::Readout { n_windows, bin_ms } => {
            let mut s: ReadoutSettings = cfg.readout.clone().unwrap_or_default();
            if let Some(v) = n_windows {
                s.n_windows = *v;
            }
            if let Some(v) = bin_ms {
                s.bin_ms = *v;
            }
            let h = readout_histogram(&s.model, s.n_windows, s.bin_ms * 1e-3, seed)?;
            let analysis = readout_fidelity(&h)?;
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "photon counts per readout window")
                .meta("seed", seed)
                .meta("window_s", h.acquisition_bin)
                .column("counts", h.bin_edges.iter().map(|&c| c as f64).collect())
                .column(
                    "frequency",
                    h.frequencies.iter().map(|&f| f as f64).collect(),
                );
            written.push(table.write(&out_dir, &format!("{name}_histogram"), format)?);
            let path = out_dir.join(format!("{name}_analysis.json"));
            write_json(&path, &analysis)?;
            written.push(path);
        }
        Cmd::G2 { emitter, pump_rate, tau_max_ns } => {
            let mut s: G2Settings = cfg.g2.clone().unwrap_or_default();
            if let Some(which) = emitter {
                s.emitter = match which.as_str() {
                    "nv" => nvsim::photonics::EmitterModel::nv(),
                    "ne8" => nvsim::photonics::EmitterModel::ne8(),
                    other => {
                        return Err(Error::Invalid(format!(
                            "unknown emitter preset {other:?}; expected nv or ne8"
                        )))
                    }
                };
            }
            if let Some(v) = pump_rate {
                s.pump_rate = *v;
            }
            if let Some(v) = tau_max_ns {
                s.tau_max_ns = *v;
            }
            let c = g2_curve(&s.emitter, s.pump_rate, s.tau_max_ns, s.n_points)?;
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "second-order photon correlation vs delay")
                .meta("pump_rate_per_s", s.pump_rate)
                .column("tau_ns", c.tau_ns)
                .column("g2", c.g2);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::Eit { omega_c_mhz, ground_dephasing, presentation } => {
            let mut sys: LambdaSystem = cfg.lambda.clone().unwrap_or_default();
            let mut scan: EitScan = cfg.eit_scan.clone().unwrap_or_default();
            if let Some(v) = omega_c_mhz {
                sys.omega_c_mhz = *v;
            }
            if let Some(v) = ground_dephasing {
                sys.ground_dephasing = *v;
            }
            if let Some(p) = presentation {
                scan.presentation = match p.as_str() {
                    "fluorescence" => EitPresentation::FluorescenceIncrease,
                    "absorption" => EitPresentation::Absorption,
                    other => {
                        return Err(Error::Invalid(format!(
                            "unknown presentation {other:?}; expected fluorescence or absorption"
                        )))
                    }
                };
            }
            let spec = eit_probe_spectrum(&sys, &scan)?;
            let mut table = Table::new()
                .meta("experiment", name)
                .meta("description", "probe response of the coupled lambda system");
            if let Some(note) = &spec.note {
                table = table.meta("note", note);
            } else if let Ok(f) = eit_feature(&spec) {
                table = table
                    .meta("feature_center_mhz", f.center_mhz)
                    .meta("feature_fwhm_mhz", f.fwhm_mhz);
            }
            let table = table
                .column("probe_mhz", spec.probe_mhz)
                .column("signal", spec.signal);
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::PolaritonStorage { steps, dt_ns } => {
            let mut s: StorageSettings = cfg.storage.clone().unwrap_or_default();
            if let Some(v) = steps {
                s.steps = *v;
            }
            if let Some(v) = dt_ns {
                s.dt_ns = *v;
            }
            let gn = s.g * s.n_photons.sqrt();
            let omega0 = gn / nvsim::units::mhz_to_rad(1.0);
            let init = polariton(omega0, s.g, s.n_photons)?;
            let ramp: Vec<f64> = (0..=s.steps)
                .map(|i| {
                    let x = i as f64 / s.steps as f64;
                    omega0 * (0.5 * std::f64::consts::PI * x).cos().powi(2)
                })
                .collect();
            let traj = storage_sweep(&init, &ramp, s.dt_ns * 1e-9)?;
            let times: Vec<f64> =
                (0..traj.len()).map(|i| i as f64 * s.dt_ns * 1e-9).collect();
            let table = Table::new()
                .meta("experiment", name)
                .meta("description", "photon-to-spin transfer under a control-field ramp")
                .meta("final_spin_fraction", traj.last().unwrap().spin_fraction())
                .column("time_s", times)
                .column("control_mhz", ramp)
                .column("theta", traj.iter().map(|p| p.theta).collect())
                .column("photon_fraction", traj.iter().map(|p| p.photon_fraction()).collect())
                .column("spin_fraction", traj.iter().map(|p| p.spin_fraction()).collect());
            written.push(table.write(&out_dir, name, format)?);
        }
        Cmd::Saturation { branch } => {
            let mut s: SaturationSettings = cfg.saturation.clone().unwrap_or_default();
            if let Some(b) = branch {
                s.branch = match b.as_str() {
                    "bright" => ExcitedBranch::Bright,
                    "dark" => ExcitedBranch::Dark,
                    other => {
                        return Err(Error::Invalid(format!(
                            "unknown branch {other:?}; expected bright or dark"
                        )))
                    }
                };
            }
            let sat = saturated_intensity(&s.rates, s.branch)?;
            let doc = serde_json::json!({
                "experiment": name,
                "branch": s.branch,
                "result": sat,
            });
            let path = out_dir.join(format!("{name}.json"));
            write_json(&path, &doc)?;
            written.push(path);
        }
        Cmd::Validate => unreachable!("handled above"),
    }

    let mut manifest = RunManifest::new(
        name,
        seed,
        serde_json::to_value(&cfg)
            .map_err(|e| Error::Invalid(format!("config snapshot failed: {e}")))?,
    );
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.outputs = written.iter().map(|p| p.display().to_string()).collect();
    written.push(manifest.write(&out_dir)?);
    Ok(())
}

/// Spin-Hamiltonian parameters from config plus CLI overrides.
fn spin_params(
    cfg: &ExperimentConfig,
    b0: Option<&str>,
    nuclei: &[String],
) -> Result<SpinHamiltonianParams> {
    let mut params = cfg.spin.clone().unwrap_or_default();
    if let Some(text) = b0 {
        params.b0_mt = parse_vec3(text)?;
    }
    for n in nuclei {
        params.nuclei.push(match n.as_str() {
            "n14" => NucleusSpec::n14(),
            "c13" => NucleusSpec::c13(),
            other => {
                return Err(Error::Invalid(format!(
                    "unknown nucleus {other:?}; expected n14 or c13"
                )))
            }
        });
    }
    params.validate()?;
    Ok(params)
}

fn parse_vec3(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Invalid(format!(
            "expected three comma-separated values, got {text:?}"
        )));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("not a number: {p:?}")))?;
    }
    Ok(out)
}
