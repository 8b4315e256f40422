//! End-to-end acceptance suite: one test per release criterion, each
//! printing a PASS line with the measured value (run with --nocapture).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvsim::measurement::{
    rabi_damping_vs_power, readout_fidelity, readout_histogram, zeno_survival_continuous,
    zeno_survival_discrete, TelegraphModel, ZenoParams,
};
use nvsim::nv::{
    ground_hamiltonian, optical_rate_matrix, saturated_intensity, steady_state,
    transition_table, ExcitedBranch, LevelBasis, NucleusSpec, PhotophysicsRates, SelectionRule,
    SpinHamiltonianParams, E0, G0,
};
use nvsim::odmr::{cw_odmr_spectrum, OdmrSweep};
use nvsim::photonics::{
    eit_feature, eit_probe_spectrum, g2_curve, polariton, storage_sweep, EitPresentation,
    EitScan, EmitterModel, LambdaSystem,
};
use nvsim::pulse::{
    dominant_frequency, parse_sequence, prepare_bell, rabi_trace, simulate_sequence,
    tomography_reconstruct, BellState, Frame, SpinSystem,
};
use nvsim::qops::{
    lindblad_evolve, unitary_evolve, CollapseChannel, DensityMatrix, Observable, Operator,
};
use num_complex::Complex64 as C64;

/// Interpolated extremum position: parabolic fit through the discrete
/// extremum and its two neighbors.
fn parabolic_extremum(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return x[i];
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return x[i];
    }
    x[i] + 0.5 * (a - c) / denom * (x[i] - x[i - 1])
}

fn local_minima(signal: &[f64], below: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..signal.len() - 1 {
        if signal[i] < below && signal[i] < signal[i - 1] && signal[i] <= signal[i + 1] {
            out.push(i);
        }
    }
    out
}

#[test]
fn criterion_01_zero_field_resonance() {
    let params = SpinHamiltonianParams::default();
    let s = cw_odmr_spectrum(&params, &OdmrSweep::default()).unwrap();
    let vmin = s.signal.iter().cloned().fold(f64::INFINITY, f64::min);
    // The dip bottom may saturate flat at the contrast limit; take the
    // centroid of the bottom region.
    let bottom: Vec<usize> = (0..s.signal.len())
        .filter(|&i| s.signal[i] < vmin + 1e-12)
        .collect();
    let center = if bottom.len() > 1 {
        bottom.iter().map(|&i| s.freq_mhz[i]).sum::<f64>() / bottom.len() as f64
    } else {
        parabolic_extremum(&s.freq_mhz, &s.signal, bottom[0])
    };
    assert!(
        (center - 2880.0).abs() < 0.1,
        "dip center {center} MHz not within 0.1 MHz of 2880"
    );
    println!("criterion 01 PASS: zero-field dip center = {center:.4} MHz");
}

#[test]
fn criterion_02_n14_triplet_spacing() {
    let mut params = SpinHamiltonianParams::default();
    params.nuclei.push(NucleusSpec::n14());
    let sweep = OdmrSweep {
        f_start_mhz: 2872.0,
        f_stop_mhz: 2888.0,
        n_points: 3201,
        linewidth_mhz: 0.4,
        contrast: 0.2,
    };
    let s = cw_odmr_spectrum(&params, &sweep).unwrap();
    let dips = local_minima(&s.signal, 0.95);
    assert_eq!(dips.len(), 3, "expected 3 lines, got {}", dips.len());
    let f: Vec<f64> = dips
        .iter()
        .map(|&i| parabolic_extremum(&s.freq_mhz, &s.signal, i))
        .collect();
    for pair in f.windows(2) {
        let spacing = pair[1] - pair[0];
        assert!(
            (spacing - 2.0).abs() < 0.05,
            "adjacent spacing {spacing} MHz outside 2.0 +- 0.05"
        );
    }
    println!(
        "criterion 02 PASS: triplet at {:.3}/{:.3}/{:.3} MHz, spacings {:.3}, {:.3} MHz",
        f[0],
        f[1],
        f[2],
        f[1] - f[0],
        f[2] - f[1]
    );
}

#[test]
fn criterion_03_c13_doublet_separation() {
    let mut params = SpinHamiltonianParams::default();
    params.nuclei.push(NucleusSpec::c13());
    let h = ground_hamiltonian(&params).unwrap();
    let basis = LevelBasis::ground(&params);
    let mut lines = transition_table(&h, &basis, SelectionRule::default()).unwrap();
    lines.sort_by(|a, b| a.freq_mhz.partial_cmp(&b.freq_mhz).unwrap());
    let sep = lines.last().unwrap().freq_mhz - lines.first().unwrap().freq_mhz;
    assert!(
        (sep - 126.0).abs() < 0.5,
        "doublet separation {sep} MHz outside 126 +- 0.5"
    );
    println!("criterion 03 PASS: 13C doublet separation = {sep:.4} MHz");
}

#[test]
fn criterion_04_optical_pumping() {
    let rates = PhotophysicsRates::default();
    let m = optical_rate_matrix(&rates, 0.1 * rates.a_rad).unwrap();
    let v = steady_state(&m).unwrap();
    let ms0 = v[G0] + v[E0];
    assert!(ms0 > 0.80, "steady-state m_s=0 population {ms0} <= 0.80");
    println!("criterion 04 PASS: pumped m_s=0 population = {ms0:.4}");
}

/// Independent oracle for the saturated-intensity formula: a five-level
/// selective-excitation rate model (pumped ground, pumped excited, shelf,
/// two reservoir ground levels) solved for its steady-state photon flux.
fn saturation_oracle(rates: &PhotophysicsRates, k_s: f64) -> f64 {
    // In the saturated limit the pumped ground and excited levels hold
    // equal population, so they merge into one cycling level (0) holding
    // twice the excited population. Levels: 0 = cycling pair, 1 = shelf,
    // 2/3 = reservoir ground levels. Shelving and spin-lattice loss act on
    // the excited/ground half of the pair, hence the factors of 1/2.
    let mut m = Array2::<f64>::zeros((4, 4));
    let mut add = |from: usize, to: usize, rate: f64| {
        m[[to, from]] += rate;
        m[[from, from]] -= rate;
    };
    add(0, 1, 0.5 * k_s);
    add(1, 0, rates.k_z);
    add(1, 2, rates.k_x);
    add(1, 3, rates.k_y);
    let r = rates.r_slr;
    add(0, 2, 0.5 * r);
    add(0, 3, 0.5 * r);
    add(2, 0, r);
    add(3, 0, r);
    add(2, 3, r);
    add(3, 2, r);
    let v = steady_state(&m).unwrap();
    rates.a_rad * 0.5 * v[0]
}

#[test]
fn criterion_05_saturated_intensity_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_oracle = 0.0f64;
    let mut worst_lowt = 0.0f64;
    for _ in 0..1000 {
        let rates = PhotophysicsRates {
            a_rad: rng.gen_range(1.0e7..1.0e8),
            k_s_xy: rng.gen_range(1.0e6..1.0e8),
            k_s_z: rng.gen_range(1.0e6..1.0e8),
            k_x: rng.gen_range(1.0e5..1.0e7),
            k_y: rng.gen_range(1.0e5..1.0e7),
            k_z: rng.gen_range(1.0e5..1.0e7),
            r_slr: rng.gen_range(0.1..10.0), // R much smaller than every k
            ..PhotophysicsRates::default()
        };
        for (branch, k_s) in
            [(ExcitedBranch::Dark, rates.k_s_xy), (ExcitedBranch::Bright, rates.k_s_z)]
        {
            let sat = saturated_intensity(&rates, branch).unwrap();
            let oracle = saturation_oracle(&rates, k_s);
            let rel = (sat.emitted_cps - oracle).abs() / oracle;
            worst_oracle = worst_oracle.max(rel);
            let rel_lowt = (sat.emitted_cps - sat.low_t_approx).abs() / sat.low_t_approx;
            worst_lowt = worst_lowt.max(rel_lowt);
        }
    }
    assert!(worst_oracle < 0.15, "worst formula-vs-rate-matrix error {worst_oracle}");
    assert!(worst_lowt < 0.01, "worst low-temperature-limit error {worst_lowt}");
    println!(
        "criterion 05 PASS: worst oracle error {:.2}%, worst low-T error {:.3}%",
        100.0 * worst_oracle,
        100.0 * worst_lowt
    );
}

#[test]
fn criterion_06_zeno_survival() {
    let z = ZenoParams { lambda: 1.0, total_time: 1.0, n_measurements: 4 };
    let p = zeno_survival_discrete(&z).unwrap();
    assert!((p - 0.7931).abs() < 1e-4, "p_surv(1, 4) = {p}");

    for n in [100u64, 1000, 10000] {
        let z = ZenoParams { lambda: 1.0, total_time: 1.0, n_measurements: n };
        let d = zeno_survival_discrete(&z).unwrap();
        let c = zeno_survival_continuous(&z).unwrap();
        assert!((d - c).abs() < 1e-3, "discrete/continuous gap {} at N={n}", d - c);
    }
    let z = ZenoParams { lambda: 1.0, total_time: 1.0, n_measurements: 1_000_000 };
    let p_inf = zeno_survival_discrete(&z).unwrap();
    assert!(p_inf > 0.999, "p_surv at N=1e6 is {p_inf}, not -> 1");
    println!("criterion 06 PASS: p_surv(lambda T=1, N=4) = {p:.6}, N=1e6 gives {p_inf:.6}");
}

#[test]
fn criterion_07_damping_vs_power() {
    let rates = PhotophysicsRates::default();
    // Five points per decade from 1e4 to 1e8.
    let powers: Vec<f64> = (0..21).map(|i| 1.0e4 * 10f64.powf(i as f64 / 5.0)).collect();
    let pts = rabi_damping_vs_power(&powers, &rates, 10.0, 0.0).unwrap();
    assert!(pts.iter().all(|p| !p.flagged), "some fits failed");

    // Lowest decade: linear in W within 5% (slope anchored at the lowest point).
    let slope = pts[0].damping_rate / pts[0].pump_w;
    let mut worst_lin = 0.0f64;
    for p in pts.iter().take(6) {
        let rel = (p.damping_rate / (slope * p.pump_w) - 1.0).abs();
        worst_lin = worst_lin.max(rel);
    }
    assert!(worst_lin < 0.05, "lowest-decade nonlinearity {worst_lin}");

    // Top decade: sub-linear, ratio per doubling < 1.5. Powers 5e7 and 1e8
    // are not on the 5-per-decade grid, so check the decade endpoints
    // scaled: rate(1e8)/rate(1e7) < 1.5 per doubling over ~3.3 doublings
    // means the decade ratio must sit below 1.5^log2(10); check the
    // stricter direct doubling with two extra points.
    let extra = rabi_damping_vs_power(&[5.0e7, 1.0e8], &rates, 10.0, 0.0).unwrap();
    let doubling = extra[1].damping_rate / extra[0].damping_rate;
    assert!(
        doubling < 1.5,
        "top-decade damping ratio per doubling {doubling} >= 1.5"
    );
    println!(
        "criterion 07 PASS: lowest-decade nonlinearity {:.2}%, top-decade doubling ratio {:.3}",
        100.0 * worst_lin,
        doubling
    );
}

#[test]
fn criterion_08_readout_fidelity() {
    let model = TelegraphModel::default();
    assert_eq!(model.bright_cps, 15000.0);
    assert_eq!(model.dark_cps, 1000.0);
    let h = readout_histogram(&model, 20000, 5.0e-3, 12345).unwrap();
    let a = readout_fidelity(&h).unwrap();
    assert!(
        (a.fidelity - 0.95).abs() < 0.02,
        "fidelity {} outside 0.95 +- 0.02",
        a.fidelity
    );
    assert!(a.wing_ratio < 0.05, "off-peak wing {} >= 5%", a.wing_ratio);
    println!(
        "criterion 08 PASS: fidelity = {:.4}, wing ratio = {:.4}",
        a.fidelity, a.wing_ratio
    );
}

#[test]
fn criterion_09_bell_tomography() {
    let states = [
        BellState::PsiMinus,
        BellState::PsiPlus,
        BellState::PhiPlus,
        BellState::PhiMinus,
    ];
    let mut coh = Vec::new();
    for which in states {
        let rec = tomography_reconstruct(&prepare_bell(which), 0.0).unwrap();
        let f = rec.rho.fidelity_with_state(&which.amplitudes());
        assert!(f > 0.99, "{which:?} fidelity {f}");
        assert!(!rec.flagged, "{which:?} reconstruction flagged");
        // signature coherence: rho_12 for the psi pair, rho_03 for the phi pair
        let c = match which {
            BellState::PsiMinus | BellState::PsiPlus => rec.rho.get(1, 2).re,
            _ => rec.rho.get(0, 3).re,
        };
        coh.push((which, f, c));
    }
    // opposite sign between the +/- partners of each family
    assert!(coh[0].2 * coh[1].2 < 0.0, "psi coherences not opposite in sign");
    assert!(coh[2].2 * coh[3].2 < 0.0, "phi coherences not opposite in sign");
    for (which, f, c) in &coh {
        println!("criterion 09 PASS: {which:?} fidelity {f:.5}, signature coherence {c:+.3}");
    }
}

#[test]
fn criterion_10_rabi_calibration() {
    // pi pulse at 140 MHz on the 2943 MHz transition: t_pi = 3.571 ns
    let seq =
        parse_sequence("pulse mw f=2943MHz rabi=140MHz dur=3.571ns phase=0").unwrap();
    let sys = SpinSystem::bell_default();
    let initial = DensityMatrix::pure(4, 2); // lower level of the 2943 MHz pair
    let out = simulate_sequence(&sys, &seq, &initial, Frame::Rotating, 0.0).unwrap();
    let inverted = out.rho.population(0);
    assert!(inverted > 0.999, "pi-pulse inversion {inverted}");

    let mut freqs = Vec::new();
    for rabi in [40.0, 140.0] {
        let tr = rabi_trace(rabi, 0.5, 4096, 0.0).unwrap();
        let f = dominant_frequency(&tr.times, &tr.values).unwrap() / 1.0e6;
        assert!(
            (f - rabi).abs() / rabi < 0.01,
            "FFT recovered {f} MHz for {rabi} MHz drive"
        );
        freqs.push(f);
    }
    println!(
        "criterion 10 PASS: inversion = {inverted:.5}, FFT = {:.2} / {:.2} MHz",
        freqs[0], freqs[1]
    );
}

#[test]
fn criterion_11_eit_feature() {
    let sys = LambdaSystem::default();
    let scan = EitScan::default();
    let spec = eit_probe_spectrum(&sys, &scan).unwrap();
    let feat = eit_feature(&spec).unwrap();
    assert!(
        (feat.center_mhz - 2797.0).abs() <= scan.bin_mhz() + 1e-9,
        "feature at {} MHz, expected 2797 within one bin",
        feat.center_mhz
    );

    // Width tracks the lower-level dephasing when the coupling is weak.
    let narrow_scan = EitScan {
        f_start_mhz: 2790.0,
        f_stop_mhz: 2804.0,
        n_points: 1401,
        presentation: EitPresentation::Absorption,
    };
    let mut widths = Vec::new();
    for deph in [2.0e5, 6.0e5, 2.0e6] {
        let sys = LambdaSystem {
            omega_c_mhz: 0.3,
            omega_p_mhz: 0.03,
            ground_dephasing: deph,
            ..LambdaSystem::default()
        };
        let s = eit_probe_spectrum(&sys, &narrow_scan).unwrap();
        widths.push(eit_feature(&s).unwrap().fwhm_mhz);
    }
    assert!(
        widths[0] < widths[1] && widths[1] < widths[2],
        "feature widths {widths:?} do not track dephasing"
    );
    println!(
        "criterion 11 PASS: feature at {:.2} MHz; widths {:.3}/{:.3}/{:.3} MHz rise with dephasing",
        feat.center_mhz, widths[0], widths[1], widths[2]
    );
}

#[test]
fn criterion_12_polariton_storage() {
    // Mixing-angle identity over 1e4 random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let omega = rng.gen_range(0.0..100.0);
        let g = rng.gen_range(0.0..1.0e8);
        let n = rng.gen_range(0.0..1.0e4);
        let Ok(p) = polariton(omega, g, n) else { continue };
        let dev = (p.theta.cos().powi(2) + p.theta.sin().powi(2) - 1.0).abs();
        worst = worst.max(dev);
    }
    assert!(worst < 1e-15, "identity deviation {worst}");

    // Adiabatic storage and retrieval round trip.
    let g = 1.0e7;
    let n = 16.0f64;
    let omega0 = g * n.sqrt() / nvsim::units::mhz_to_rad(1.0);
    let init = polariton(omega0, g, n).unwrap();
    let steps = 2000;
    let ramp: Vec<f64> = (0..=steps)
        .map(|i| {
            let x = i as f64 / steps as f64;
            omega0 * (0.5 * std::f64::consts::PI * x).cos().powi(2)
        })
        .collect();
    let traj = storage_sweep(&init, &ramp, 10.0e-9).unwrap();
    let stored = traj.last().unwrap();
    assert!(stored.spin_fraction() > 0.999, "stored spin fraction {}", stored.spin_fraction());
    let back: Vec<f64> = ramp.iter().rev().cloned().collect();
    let rt = storage_sweep(stored, &back, 10.0e-9).unwrap();
    let err = (rt.last().unwrap().photon_fraction() - init.photon_fraction()).abs();
    assert!(err < 1e-3, "round-trip photon-fraction error {err}");
    println!(
        "criterion 12 PASS: identity deviation {worst:.2e}, stored spin {:.5}, round-trip error {err:.2e}",
        stored.spin_fraction()
    );
}

#[test]
fn criterion_13_engine_properties() {
    // Dissipative evolution: trace drift and positivity over 1e4 steps.
    let dim = 3;
    let mut h = Operator::zeros(dim);
    h.set(0, 1, C64::new(2.0e6, 0.0));
    h.set(1, 0, C64::new(2.0e6, 0.0));
    h.set(1, 2, C64::new(1.0e6, 0.0));
    h.set(2, 1, C64::new(1.0e6, 0.0));
    h.set(2, 2, C64::new(5.0e6, 0.0));
    let decay = CollapseChannel::new(Operator::ketbra(dim, 0, 2), 1.0e5).unwrap();
    let rho0 = DensityMatrix::pure(dim, 2);
    let obs: Vec<Observable> = Vec::new();
    let (rho, _) = lindblad_evolve(&rho0, &h, &[decay], 2.0e-9, 10_000, &obs).unwrap();
    let drift = (rho.trace() - 1.0).abs();
    assert!(drift < 1e-9, "trace drift {drift} over 1e4 steps");
    let min_eig = rho.min_eigenvalue();
    assert!(min_eig >= -1e-8, "positivity violated: min eigenvalue {min_eig}");

    // Zero channels must reproduce unitary evolution.
    let steps = 2000;
    let dt = 1.0e-9;
    let (rho_l, _) = lindblad_evolve(&rho0, &h, &[], dt, steps, &obs).unwrap();
    let rho_u = unitary_evolve(&rho0, &h, dt * steps as f64).unwrap();
    let diff = rho_l
        .matrix()
        .iter()
        .zip(rho_u.matrix().iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    assert!(diff < 1e-7, "zero-channel vs unitary max deviation {diff}");
    println!(
        "criterion 13 PASS: trace drift {drift:.2e}, min eigenvalue {min_eig:.2e}, unitary match {diff:.2e}"
    );
}

#[test]
fn criterion_14_g2_antibunching() {
    let mut shoulder_ne8 = 0.0f64;
    for (name, m, pump) in [
        ("NV", EmitterModel::nv(), 2.0e7),
        ("NE8", EmitterModel::ne8(), 5.0e7),
    ] {
        let c = g2_curve(&m, pump, 5000.0, 501).unwrap();
        assert_eq!(c.g2[0], 0.0, "{name}: g2(0) != 0");
        let tail = *c.g2.last().unwrap();
        assert!((tail - 1.0).abs() < 1e-3, "{name}: g2(inf) = {tail}");
        if name == "NE8" {
            shoulder_ne8 = c.g2.iter().cloned().fold(0.0f64, f64::max);
        }
    }
    assert!(shoulder_ne8 > 1.0, "NE8 bunching shoulder missing ({shoulder_ne8})");
    println!(
        "criterion 14 PASS: g2(0) = 0 and g2(inf) = 1 for NV and NE8; NE8 shoulder peak {shoulder_ne8:.3}"
    );
}
