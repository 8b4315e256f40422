//! Pulse-sequence language and coherent spin dynamics.
//!
//! Sequences are written in a small line-oriented language (see
//! [`parse_sequence`]) and executed against a [`SpinSystem`]: a set of
//! eigenlevels with a magnetic drive operator. The rotating-frame engine
//! applies each pulse as an exact two-level rotation on the addressed
//! transition; the lab-frame engine integrates the full time-dependent
//! Hamiltonian and exists to validate the rotating-frame results.

use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};

use crate::nv::{ground_hamiltonian, LevelBasis, SpinHamiltonianParams};
use crate::qops::{eig_hermitian, kron, spin_ops, C64, DensityMatrix, Operator};
use crate::series::{MultiTrace, TimeTrace};
use crate::units::mhz_to_rad;
use crate::{Error, Result};

/// Drive channel of a pulse line. Addressing is by frequency; the channel
/// tag mirrors the hardware split between microwave and radio frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Mw,
    Rf,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Mw => "mw",
            Channel::Rf => "rf",
        })
    }
}

/// Nominal pulse angle, when given instead of an explicit rabi + duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    HalfPi,
    Pi,
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::HalfPi => std::f64::consts::FRAC_PI_2,
            Angle::Pi => std::f64::consts::PI,
        }
    }
}

/// Default Rabi frequency used to realize `angle=` pulses, MHz.
pub const DEFAULT_ANGLE_RABI_MHZ: f64 = 20.0;

/// One event of a pulse program.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseEvent {
    Pulse {
        channel: Channel,
        freq_mhz: f64,
        rabi_mhz: f64,
        /// radians, normalized to [0, 2pi)
        phase: f64,
        duration_ns: f64,
        /// Set when the pulse was written as `angle=`.
        angle: Option<Angle>,
        /// Optional `on=a-b` transition label pair.
        target: Option<(String, String)>,
    },
    Delay { duration_ns: f64 },
    LaserInit { duration_ns: f64 },
    LaserReadout { duration_ns: f64 },
}

impl PulseEvent {
    pub fn duration_ns(&self) -> f64 {
        match self {
            PulseEvent::Pulse { duration_ns, .. }
            | PulseEvent::Delay { duration_ns }
            | PulseEvent::LaserInit { duration_ns }
            | PulseEvent::LaserReadout { duration_ns } => *duration_ns,
        }
    }
}

/// A named, validated pulse program.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub name: String,
    pub events: Vec<PulseEvent>,
}

impl PulseSequence {
    pub fn new(name: impl Into<String>, events: Vec<PulseEvent>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Invalid("pulse sequence must be non-empty".into()));
        }
        for (k, e) in events.iter().enumerate() {
            if e.duration_ns() <= 0.0 {
                return Err(Error::Invalid(format!("event {k} has non-positive duration")));
            }
            if let PulseEvent::LaserReadout { .. } = e {
                if k != events.len() - 1 {
                    return Err(Error::Invalid(
                        "laser readout must be the last event".into(),
                    ));
                }
            }
        }
        Ok(Self { name: name.into(), events })
    }
}

fn fmt_num(v: f64) -> String {
    // shortest round-trippable form without exponent clutter for DSL output
    let s = format!("{v}");
    s
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            match e {
                PulseEvent::Pulse { channel, freq_mhz, rabi_mhz, phase, duration_ns, angle, target } => {
                    write!(f, "pulse {channel} f={}MHz", fmt_num(*freq_mhz))?;
                    match angle {
                        Some(Angle::Pi) => write!(f, " angle=pi")?,
                        Some(Angle::HalfPi) => write!(f, " angle=pi/2")?,
                        None => write!(
                            f,
                            " rabi={}MHz dur={}ns",
                            fmt_num(*rabi_mhz),
                            fmt_num(*duration_ns)
                        )?,
                    }
                    if *phase != 0.0 {
                        write!(f, " phase={}", fmt_num(*phase))?;
                    }
                    if let Some((a, b)) = target {
                        write!(f, " on={a}-{b}")?;
                    }
                    writeln!(f)?;
                }
                PulseEvent::Delay { duration_ns } => {
                    writeln!(f, "wait {}ns", fmt_num(*duration_ns))?
                }
                PulseEvent::LaserInit { duration_ns } => {
                    writeln!(f, "init laser dur={}ns", fmt_num(*duration_ns))?
                }
                PulseEvent::LaserReadout { duration_ns } => {
                    writeln!(f, "readout laser dur={}ns", fmt_num(*duration_ns))?
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// parser

struct Tok<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

fn err_at(t: &Tok<'_>, msg: impl Into<String>) -> Error {
    Error::Parse { line: t.line, col: t.col, message: msg.into() }
}

fn split_number_suffix(s: &str) -> (&str, &str) {
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' && i == 0 || c == 'e' || c == 'E')
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    s.split_at(end)
}

fn parse_duration_ns(t: &Tok<'_>, s: &str) -> Result<f64> {
    let (num, unit) = split_number_suffix(s);
    let v: f64 = num
        .parse()
        .map_err(|_| err_at(t, format!("expected a number, got '{s}'")))?;
    let scale = match unit {
        "ns" => 1.0,
        "us" => 1e3,
        "ms" => 1e6,
        "" => return Err(err_at(t, format!("missing time unit on '{s}' (ns, us, ms)"))),
        other => return Err(err_at(t, format!("unknown time unit '{other}' (ns, us, ms)"))),
    };
    let d = v * scale;
    if d <= 0.0 {
        return Err(err_at(t, format!("duration must be > 0, got {s}")));
    }
    Ok(d)
}

fn parse_freq_mhz(t: &Tok<'_>, s: &str) -> Result<f64> {
    let (num, unit) = split_number_suffix(s);
    let v: f64 = num
        .parse()
        .map_err(|_| err_at(t, format!("expected a number, got '{s}'")))?;
    match unit {
        "MHz" => Ok(v),
        "GHz" => Ok(v * 1e3),
        "" => Err(err_at(t, format!("missing frequency unit on '{s}' (MHz, GHz)"))),
        other => Err(err_at(t, format!("unknown frequency unit '{other}' (MHz, GHz)"))),
    }
}

/// Parse a pulse program. Diagnostics carry 1-based line and column numbers.
///
/// ```text
/// # Rabi-style driven evolution
/// init laser dur=3us
/// pulse mw f=2880MHz rabi=10MHz phase=0 dur=25ns
/// pulse rf f=68MHz angle=pi
/// wait 1.5us
/// readout laser dur=300ns
/// ```
pub fn parse_sequence(text: &str) -> Result<PulseSequence> {
    let mut events = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        // tokenize with column positions
        let mut toks: Vec<Tok<'_>> = Vec::new();
        let mut col = 0usize;
        for piece in line.split_whitespace() {
            let at = line[col..].find(piece).unwrap() + col;
            toks.push(Tok { text: piece, line: line_no, col: at + 1 });
            col = at + piece.len();
        }
        let head = &toks[0];
        match head.text {
            "pulse" => events.push(parse_pulse_line(&toks)?),
            "wait" => {
                let arg = toks.get(1).ok_or_else(|| err_at(head, "wait needs a duration"))?;
                if toks.len() > 2 {
                    return Err(err_at(&toks[2], "unexpected token after wait duration"));
                }
                events.push(PulseEvent::Delay { duration_ns: parse_duration_ns(arg, arg.text)? });
            }
            "init" | "readout" => {
                let laser = toks.get(1).ok_or_else(|| err_at(head, "expected 'laser'"))?;
                if laser.text != "laser" {
                    return Err(err_at(laser, format!("expected 'laser', got '{}'", laser.text)));
                }
                let kv = toks.get(2).ok_or_else(|| err_at(laser, "expected dur=<time>"))?;
                let dur = kv
                    .text
                    .strip_prefix("dur=")
                    .ok_or_else(|| err_at(kv, format!("expected dur=<time>, got '{}'", kv.text)))?;
                let duration_ns = parse_duration_ns(kv, dur)?;
                if toks.len() > 3 {
                    return Err(err_at(&toks[3], "unexpected trailing token"));
                }
                events.push(if head.text == "init" {
                    PulseEvent::LaserInit { duration_ns }
                } else {
                    PulseEvent::LaserReadout { duration_ns }
                });
            }
            other => {
                return Err(err_at(
                    head,
                    format!("unknown statement '{other}' (pulse, wait, init, readout)"),
                ))
            }
        }
    }
    if events.is_empty() {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            message: "empty program: at least one statement required".into(),
        });
    }
    // positional readout constraint re-checked with line info unavailable here;
    // delegate to the sequence constructor
    PulseSequence::new("program", events)
}

fn parse_pulse_line(toks: &[Tok<'_>]) -> Result<PulseEvent> {
    let head = &toks[0];
    let chan_tok = toks.get(1).ok_or_else(|| err_at(head, "pulse needs a channel (mw, rf)"))?;
    let channel = match chan_tok.text {
        "mw" => Channel::Mw,
        "rf" => Channel::Rf,
        other => return Err(err_at(chan_tok, format!("unknown channel '{other}' (mw, rf)"))),
    };
    let mut freq: Option<f64> = None;
    let mut rabi: Option<f64> = None;
    let mut phase: f64 = 0.0;
    let mut dur: Option<f64> = None;
    let mut angle: Option<Angle> = None;
    let mut target: Option<(String, String)> = None;
    for t in &toks[2..] {
        let (key, val) = t
            .text
            .split_once('=')
            .ok_or_else(|| err_at(t, format!("expected key=value, got '{}'", t.text)))?;
        match key {
            "f" => freq = Some(parse_freq_mhz(t, val)?),
            "rabi" => {
                let r = parse_freq_mhz(t, val)?;
                if r < 0.0 {
                    return Err(err_at(t, format!("rabi must be >= 0, got {val}")));
                }
                rabi = Some(r);
            }
            "phase" => {
                phase = val
                    .parse()
                    .map_err(|_| err_at(t, format!("phase must be a number in radians, got '{val}'")))?;
            }
            "dur" => dur = Some(parse_duration_ns(t, val)?),
            "angle" => {
                angle = Some(match val {
                    "pi" => Angle::Pi,
                    "pi/2" => Angle::HalfPi,
                    other => return Err(err_at(t, format!("angle must be pi or pi/2, got '{other}'"))),
                })
            }
            "on" => {
                let (a, b) = val
                    .split_once('-')
                    .ok_or_else(|| err_at(t, format!("on= expects label-label, got '{val}'")))?;
                target = Some((a.to_string(), b.to_string()));
            }
            other => return Err(err_at(t, format!("unknown key '{other}'"))),
        }
    }
    let freq_mhz = freq.ok_or_else(|| err_at(head, "pulse needs f=<freq>"))?;
    let (rabi_mhz, duration_ns) = match (angle, rabi, dur) {
        (Some(a), None, None) => {
            // theta = 2 pi * rabi * t  ->  t_pi = 1/(2 rabi)
            let r = DEFAULT_ANGLE_RABI_MHZ;
            let t_ns = a.radians() / std::f64::consts::PI * 500.0 / r;
            (r, t_ns)
        }
        (None, Some(r), Some(d)) => (r, d),
        (Some(_), _, _) => {
            return Err(err_at(head, "angle= excludes explicit rabi=/dur="));
        }
        _ => return Err(err_at(head, "pulse needs either angle= or both rabi= and dur=")),
    };
    let tau = 2.0 * std::f64::consts::PI;
    let phase = phase.rem_euclid(tau);
    Ok(PulseEvent::Pulse { channel, freq_mhz, rabi_mhz, phase, duration_ns, angle, target })
}

// ---------------------------------------------------------------------------
// spin system and simulation

/// A driven multilevel system in its energy eigenbasis.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    /// Eigenenergies in MHz (can be negative; only differences matter).
    pub energies_mhz: Vec<f64>,
    pub labels: Vec<String>,
    /// Magnitude of the magnetic drive matrix element between levels,
    /// normalized to max 1; zero entries are forbidden transitions.
    pub drive: Array2<f64>,
    /// Level each state is pumped into by laser initialization.
    pub init_map: Vec<usize>,
}

impl SpinSystem {
    pub fn dim(&self) -> usize {
        self.energies_mhz.len()
    }

    /// Build from a ground-state Hamiltonian. The drive operator is
    /// gamma_e Sx + sum_k gamma_n Ix (all spins see the same B1 field
    /// through their own gyromagnetic ratios), transformed to the
    /// eigenbasis. Laser init maps each level to the m_s = 0 level with
    /// the same dominant nuclear state.
    pub fn from_params(params: &SpinHamiltonianParams) -> Result<Self> {
        let h = ground_hamiltonian(params)?;
        let (vals, vecs) = eig_hermitian(&h)?;
        let basis = LevelBasis::ground(params);
        let dim = h.dim();
        let nuc_dim = dim / 3;

        let (sx, _, _) = spin_ops(2);
        let mut d = kron(&sx, &Operator::identity(nuc_dim)).scale_re(params.gamma_e);
        for (k, n) in params.nuclei.iter().enumerate() {
            let (ix, _, _) = crate::nv::nucleus_ops(params, k);
            d = d.add(&ix.scale_re(n.gamma_n));
        }
        let d_eig = vecs.dagger().dot(&d).dot(&vecs);
        let mut drive = Array2::<f64>::zeros((dim, dim));
        let mut dmax = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let m = d_eig.get(i, j).norm();
                drive[[i, j]] = m;
                if i != j {
                    dmax = dmax.max(m);
                }
            }
        }
        if dmax > 0.0 {
            drive.mapv_inplace(|x| x / dmax);
        }

        // dominant product-basis index per eigenstate
        let dominant: Vec<usize> = (0..dim)
            .map(|col| {
                (0..dim)
                    .max_by(|&a, &b| {
                        vecs.get(a, col)
                            .norm_sqr()
                            .partial_cmp(&vecs.get(b, col).norm_sqr())
                            .unwrap()
                    })
                    .unwrap()
            })
            .collect();
        let labels = dominant.iter().map(|&i| basis.labels[i].clone()).collect();
        // product index -> eigenstate with that dominant index
        let mut inv = vec![usize::MAX; dim];
        for (eig_i, &prod) in dominant.iter().enumerate() {
            inv[prod] = eig_i;
        }
        if inv.iter().any(|&x| x == usize::MAX) {
            return Err(Error::Invalid(
                "eigenstates too strongly mixed to assign unique basis labels".into(),
            ));
        }
        // electron block of product index: 0 -> m_s=+1, 1 -> m_s=0, 2 -> m_s=-1
        let init_map = dominant
            .iter()
            .map(|&prod| inv[nuc_dim + prod % nuc_dim])
            .collect();

        Ok(Self {
            energies_mhz: vals.iter().map(|&v| crate::units::rad_to_mhz(v)).collect(),
            labels,
            drive,
            init_map,
        })
    }

    /// The standard four-level electron (+-1/2 pseudo-spin) x 13C system
    /// used for entanglement experiments. Basis order: up-up, up-down,
    /// down-up, down-down (electron spin first).
    ///
    /// E(s_e, s_n) = f_e s_e + f_n s_n + a s_e s_n with f_e = 2880 MHz,
    /// f_n = 5 MHz, a = 126 MHz, giving allowed transitions at
    /// 2943 and 2817 MHz (electron) and 68 and 58 MHz (nuclear).
    pub fn bell_default() -> Self {
        let fe = 2880.0;
        let fn_ = 5.0;
        let a = 126.0;
        let e = |se: f64, sn: f64| fe * se + fn_ * sn + a * se * sn;
        let energies_mhz = vec![
            e(0.5, 0.5),
            e(0.5, -0.5),
            e(-0.5, 0.5),
            e(-0.5, -0.5),
        ];
        let mut drive = Array2::<f64>::zeros((4, 4));
        for (i, j) in [(0, 2), (1, 3), (0, 1), (2, 3)] {
            drive[[i, j]] = 1.0;
            drive[[j, i]] = 1.0;
        }
        Self {
            energies_mhz,
            labels: vec!["up-up".into(), "up-down".into(), "down-up".into(), "down-down".into()],
            drive,
            init_map: vec![0, 1, 0, 1],
        }
    }

    /// Allowed transitions (pairs with a nonzero drive element), with
    /// positive frequencies in MHz.
    pub fn transitions(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.dim() {
            for j in (i + 1)..self.dim() {
                if self.drive[[i, j]] > 1e-6 {
                    out.push((i, j, (self.energies_mhz[i] - self.energies_mhz[j]).abs()));
                }
            }
        }
        out
    }

    /// The transition addressed by a pulse: nearest in frequency within a
    /// bandwidth of 3x the Rabi frequency; ties go to the larger drive
    /// element.
    fn address(&self, freq_mhz: f64, rabi_mhz: f64) -> Option<(usize, usize)> {
        let bw = 3.0 * rabi_mhz.max(1e-9);
        self.transitions()
            .into_iter()
            .filter(|&(_, _, f)| (f - freq_mhz).abs() <= bw)
            .min_by(|&(i1, j1, f1), &(i2, j2, f2)| {
                let d1 = (f1 - freq_mhz).abs();
                let d2 = (f2 - freq_mhz).abs();
                d1.partial_cmp(&d2)
                    .unwrap()
                    .then(self.drive[[i2, j2]].partial_cmp(&self.drive[[i1, j1]]).unwrap())
            })
            .map(|(i, j, _)| (i, j))
    }
}

/// Evolution frame for [`simulate_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Each pulse is an exact rotation on its addressed transition
    /// (rotating-wave treatment); the default.
    Rotating,
    /// Full time-dependent integration with an oscillating drive; slow,
    /// for validation.
    Lab,
}

/// Result of executing a pulse sequence.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub rho: DensityMatrix,
    /// Populations after each event (times = cumulative event end, s).
    pub trace: MultiTrace,
    pub warnings: Vec<String>,
}

/// Two-level rotation on levels (p, q), p below q in the level list, embedded
/// in `dim` levels: exp(-i (delta/2 sz + theta/(2 t) (cos(phi) sx +
/// sin(phi) sy)) t) with sz = |p><p| - |q><q|.
fn subspace_rotation(
    dim: usize,
    p: usize,
    q: usize,
    theta: f64,
    phase: f64,
    delta_theta: f64,
) -> Operator {
    // generator g = (delta_theta/2) sz + (theta/2) s_phi; exact 2x2 exponential
    let nx = 0.5 * theta * phase.cos();
    let ny = 0.5 * theta * phase.sin();
    let nz = 0.5 * delta_theta;
    let r = (nx * nx + ny * ny + nz * nz).sqrt();
    let (c, sinc) = if r < 1e-300 { (1.0, 1.0) } else { (r.cos(), r.sin() / r) };
    let i = C64::new(0.0, 1.0);
    // U = cos(r) I - i sinc(r) (nx sx + ny sy + nz sz) on the subspace
    let u_pp = C64::new(c, 0.0) - i * sinc * nz;
    let u_qq = C64::new(c, 0.0) + i * sinc * nz;
    let u_pq = -i * sinc * (C64::new(nx, 0.0) - i * ny); // <p|U|q>
    let u_qp = -i * sinc * (C64::new(nx, 0.0) + i * ny);
    let mut u = Operator::identity(dim);
    u.set(p, p, u_pp);
    u.set(q, q, u_qq);
    u.set(p, q, u_pq);
    u.set(q, p, u_qp);
    u
}

fn free_propagator(system: &SpinSystem, t_s: f64) -> Operator {
    let mut u = Operator::zeros(system.dim());
    for (k, &e) in system.energies_mhz.iter().enumerate() {
        let ph = -mhz_to_rad(e) * t_s;
        u.set(k, k, Complex64::from_polar(1.0, ph));
    }
    u
}

fn apply_init(system: &SpinSystem, rho: &DensityMatrix) -> DensityMatrix {
    // Kraus channel: population of level k moves to init_map[k];
    // coherences between levels with distinct targets are destroyed.
    let dim = system.dim();
    let mut m = Array2::<C64>::zeros((dim, dim));
    for k in 0..dim {
        m[[system.init_map[k], system.init_map[k]]] += C64::new(rho.population(k), 0.0);
    }
    DensityMatrix::from_raw(m)
}

fn dephase(rho: &DensityMatrix, factor: f64) -> DensityMatrix {
    let dim = rho.dim();
    let mut m = rho.matrix().clone();
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                m[[i, j]] *= factor;
            }
        }
    }
    DensityMatrix::from_raw(m)
}

/// Execute a pulse sequence on a spin system.
///
/// `dephasing_rate` (1/s) applies pure dephasing in the eigenbasis for the
/// duration of every event; zero gives exactly unitary evolution.
pub fn simulate_sequence(
    system: &SpinSystem,
    seq: &PulseSequence,
    initial: &DensityMatrix,
    frame: Frame,
    dephasing_rate: f64,
) -> Result<SimResult> {
    if initial.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "initial state dim {} does not match system dim {}",
            initial.dim(),
            system.dim()
        )));
    }
    let mut rho = initial.clone();
    let mut warnings = Vec::new();
    let mut t = 0.0f64;
    let mut times = Vec::with_capacity(seq.events.len() + 1);
    let mut pops: Vec<Vec<f64>> = vec![Vec::new(); system.dim()];
    let record = |t: f64, rho: &DensityMatrix, times: &mut Vec<f64>, pops: &mut Vec<Vec<f64>>| {
        times.push(t);
        for (k, p) in pops.iter_mut().enumerate() {
            p.push(rho.population(k));
        }
    };
    record(t, &rho, &mut times, &mut pops);

    for (idx, ev) in seq.events.iter().enumerate() {
        let dt_s = ev.duration_ns() * 1e-9;
        match ev {
            PulseEvent::Pulse { freq_mhz, rabi_mhz, phase, duration_ns, .. } => {
                match system.address(*freq_mhz, *rabi_mhz) {
                    None => {
                        warnings.push(format!(
                            "event {idx}: off-resonant pulse at {freq_mhz} MHz has negligible effect"
                        ));
                    }
                    Some((i, j)) => {
                        let f_trans = (system.energies_mhz[i] - system.energies_mhz[j]).abs();
                        let t_s = duration_ns * 1e-9;
                        let theta = 2.0 * std::f64::consts::PI * rabi_mhz * 1e6 * t_s;
                        let delta = mhz_to_rad(f_trans - freq_mhz) * t_s;
                        // order the pair so p is the lower-energy level
                        let (p, q) = if system.energies_mhz[i] < system.energies_mhz[j] {
                            (i, j)
                        } else {
                            (j, i)
                        };
                        match frame {
                            Frame::Rotating => {
                                let u = subspace_rotation(system.dim(), p, q, theta, *phase, delta);
                                rho = crate::qops::apply_unitary(&rho, &u);
                            }
                            Frame::Lab => {
                                rho = lab_frame_pulse(
                                    system, &rho, p, q, *freq_mhz, *rabi_mhz, *phase, t_s,
                                )?;
                            }
                        }
                    }
                }
            }
            PulseEvent::Delay { .. } => {
                let u = free_propagator(system, dt_s);
                rho = crate::qops::apply_unitary(&rho, &u);
            }
            PulseEvent::LaserInit { .. } => {
                rho = apply_init(system, &rho);
            }
            PulseEvent::LaserReadout { .. } => {
                // projective photon detection destroys eigenbasis coherence
                rho = dephase(&rho, 0.0);
            }
        }
        if dephasing_rate > 0.0 {
            rho = dephase(&rho, (-dephasing_rate * dt_s).exp());
        }
        t += dt_s;
        record(t, &rho, &mut times, &mut pops);
    }

    let series = system
        .labels
        .iter()
        .cloned()
        .zip(pops)
        .collect();
    Ok(SimResult { rho, trace: MultiTrace { times, series }, warnings })
}

/// Lab-frame pulse: integrate d(rho)/dt = -i [H0 + c cos(wt + phi) D, rho]
/// with RK4, where D is the physical drive operator scaled so the addressed
/// transition sees the requested Rabi frequency.
fn lab_frame_pulse(
    system: &SpinSystem,
    rho: &DensityMatrix,
    p: usize,
    q: usize,
    freq_mhz: f64,
    rabi_mhz: f64,
    phase: f64,
    t_s: f64,
) -> Result<DensityMatrix> {
    let dim = system.dim();
    let elem = system.drive[[p, q]];
    if elem <= 0.0 {
        return Err(Error::Invalid("lab-frame pulse on a forbidden transition".into()));
    }
    let mut h0 = Array2::<C64>::zeros((dim, dim));
    for (k, &e) in system.energies_mhz.iter().enumerate() {
        h0[[k, k]] = C64::new(mhz_to_rad(e), 0.0);
    }
    // real symmetric drive pattern from the element magnitudes
    let mut d = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                d[[i, j]] = C64::new(system.drive[[i, j]] / elem, 0.0);
            }
        }
    }
    let amp = mhz_to_rad(rabi_mhz); // c such that RWA recovers rabi_mhz
    let w = mhz_to_rad(freq_mhz);

    let f_max = system
        .energies_mhz
        .iter()
        .fold(freq_mhz.abs(), |a, &e| a.max(e.abs()));
    let dt = 1.0 / (f_max * 1e6 * 50.0);
    let steps = (t_s / dt).ceil() as usize;
    let dt = t_s / steps as f64;

    let mut r = rho.matrix().clone();
    let rhs = |r: &Array2<C64>, time: f64| -> Array2<C64> {
        let c = amp * (w * time + phase).cos();
        let h = &h0 + &d.mapv(|x| x * c);
        let hr = h.dot(r);
        let rh = r.dot(&h);
        (hr - rh).mapv(|x| x * C64::new(0.0, -1.0))
    };
    let mut time = 0.0;
    for _ in 0..steps {
        let k1 = rhs(&r, time);
        let k2 = rhs(&(&r + &k1.mapv(|x| x * (0.5 * dt))), time + 0.5 * dt);
        let k3 = rhs(&(&r + &k2.mapv(|x| x * (0.5 * dt))), time + 0.5 * dt);
        let k4 = rhs(&(&r + &k3.mapv(|x| x * dt)), time + dt);
        r = &r + &(k1 + k2.mapv(|x| x * 2.0) + k3.mapv(|x| x * 2.0) + k4).mapv(|x| x * (dt / 6.0));
        time += dt;
    }
    Ok(DensityMatrix::from_raw(r))
}

// ---------------------------------------------------------------------------
// FFT utilities

/// Dominant nonzero frequency of a uniformly sampled real signal, Hz, via
/// FFT magnitude peak with parabolic interpolation.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    let peaks = spectral_peaks(times, values, 0.99)?;
    peaks
        .first()
        .copied()
        .ok_or_else(|| Error::Fit("no spectral peak found".into()))
}

/// All spectral peaks above `rel_height` x the tallest peak, Hz, strongest
/// first.
pub fn spectral_peaks(times: &[f64], values: &[f64], rel_height: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 8 || times.len() != n {
        return Err(Error::Invalid("need >= 8 uniform samples for spectra".into()));
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(Error::Invalid("spectral analysis requires uniform sampling".into()));
        }
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<FftComplex<f64>> = values
        .iter()
        .map(|&v| FftComplex::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf.iter().take(n / 2).map(|c| c.norm()).collect();
    let tallest = mag[1..].iter().fold(0.0f64, |a, &b| a.max(b));
    if tallest <= 0.0 {
        return Ok(Vec::new());
    }
    let mut peaks: Vec<(f64, f64)> = Vec::new(); // (height, freq)
    for k in 1..mag.len() - 1 {
        if mag[k] >= mag[k - 1] && mag[k] > mag[k + 1] && mag[k] >= rel_height * tallest {
            let denom = mag[k - 1] - 2.0 * mag[k] + mag[k + 1];
            let delta = if denom.abs() > 1e-300 {
                0.5 * (mag[k - 1] - mag[k + 1]) / denom
            } else {
                0.0
            };
            peaks.push((mag[k], (k as f64 + delta) / (n as f64 * dt)));
        }
    }
    peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(peaks.into_iter().map(|(_, f)| f).collect())
}

// ---------------------------------------------------------------------------
// canned experiments

/// Driven two-level oscillation with exponential damping:
/// p0(t) = 1/2 + 1/2 exp(-rate t) cos(2 pi rabi t).
pub fn rabi_trace(
    rabi_mhz: f64,
    t_max_us: f64,
    n_points: usize,
    dephasing_rate: f64,
) -> Result<TimeTrace> {
    if rabi_mhz <= 0.0 || t_max_us <= 0.0 {
        return Err(Error::Invalid("rabi and t_max must be > 0".into()));
    }
    let periods = rabi_mhz * t_max_us;
    if (n_points as f64) < 8.0 * periods {
        return Err(Error::Invalid(format!(
            "{n_points} points under-sample {periods:.0} oscillation periods; need >= 8 per period"
        )));
    }
    let times: Vec<f64> = (0..n_points)
        .map(|i| t_max_us * 1e-6 * i as f64 / (n_points - 1) as f64)
        .collect();
    let values = times
        .iter()
        .map(|&t| 0.5 + 0.5 * (-dephasing_rate * t).exp() * (2.0 * std::f64::consts::PI * rabi_mhz * 1e6 * t).cos())
        .collect();
    TimeTrace::new(times, values)
}

/// Two-pulse echo amplitude vs inter-pulse delay tau for the full
/// electron-nuclear system: pi/2 - tau - pi - tau - pi/2, hard pulses on the
/// m_s = 0 <-> -1 pseudo-spin, nuclear spins untouched by the pulses.
/// Hyperfine-driven state mixing modulates the echo at the nuclear
/// eigensplittings of the two electron manifolds.
pub fn hahn_echo_trace(
    params: &SpinHamiltonianParams,
    tau_max_us: f64,
    n_points: usize,
) -> Result<(TimeTrace, Vec<String>)> {
    if n_points < 8 {
        return Err(Error::Invalid("echo scan needs >= 8 points".into()));
    }
    let mut warnings = Vec::new();
    if params.nuclei.is_empty() {
        warnings.push("no nuclei: echo envelope is unmodulated".into());
    } else if params
        .nuclei
        .iter()
        .all(|n| (n.a_parallel - n.a_perp).abs() < 1e-12)
        && params.b0_mt[0] == 0.0
        && params.b0_mt[1] == 0.0
    {
        warnings.push(
            "isotropic coupling with axial field: no state mixing, echo is unmodulated".into(),
        );
    }

    let h = ground_hamiltonian(params)?;
    let dim = h.dim();
    let nuc_dim = dim / 3;
    let (vals, vecs) = eig_hermitian(&h)?;

    // hard pulse: rotation on the (m_s=0, m_s=-1) electron pair, identity on
    // nuclei; product-basis blocks are [+1 | 0 | -1] x nuclear
    let pulse = |theta: f64| -> Operator {
        let mut u = Operator::identity(dim);
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        for k in 0..nuc_dim {
            let p = nuc_dim + k; // m_s = 0
            let q = 2 * nuc_dim + k; // m_s = -1
            u.set(p, p, C64::new(c, 0.0));
            u.set(q, q, C64::new(c, 0.0));
            u.set(p, q, C64::new(0.0, -s));
            u.set(q, p, C64::new(0.0, -s));
        }
        u
    };
    let p_half = pulse(std::f64::consts::FRAC_PI_2);
    let p_pi = pulse(std::f64::consts::PI);

    // free propagator for arbitrary tau from the eigendecomposition
    let free = |tau_s: f64| -> Operator {
        let mut d = Operator::zeros(dim);
        for (k, &w) in vals.iter().enumerate() {
            d.set(k, k, Complex64::from_polar(1.0, -w * tau_s));
        }
        vecs.dot(&d).dot(&vecs.dagger())
    };

    // initial state: m_s = 0, nuclear spins maximally mixed
    let mut rho0 = Array2::<C64>::zeros((dim, dim));
    for k in 0..nuc_dim {
        rho0[[nuc_dim + k, nuc_dim + k]] = C64::new(1.0 / nuc_dim as f64, 0.0);
    }
    let rho0 = DensityMatrix::from_raw(rho0);

    let mut times = Vec::with_capacity(n_points);
    let mut values = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let tau = tau_max_us * 1e-6 * (i + 1) as f64 / n_points as f64;
        let u_tau = free(tau);
        let u = p_half
            .dot(&u_tau)
            .dot(&p_pi)
            .dot(&u_tau)
            .dot(&p_half);
        let rho = crate::qops::apply_unitary(&rho0, &u);
        let p0: f64 = (0..nuc_dim).map(|k| rho.population(nuc_dim + k)).sum();
        times.push(tau);
        values.push(p0);
    }
    Ok((TimeTrace::new(times, values)?, warnings))
}

/// Nuclear eigensplittings (MHz) of the m_s = 0 and m_s = -1 manifolds:
/// the oracle frequencies for the echo modulation.
pub fn manifold_splittings(params: &SpinHamiltonianParams) -> Result<Vec<f64>> {
    let h = ground_hamiltonian(params)?;
    let dim = h.dim();
    let nuc_dim = dim / 3;
    let (vals, vecs) = eig_hermitian(&h)?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(), Vec::new()]; // ms=0, ms=-1
    for col in 0..dim {
        let prod = (0..dim)
            .max_by(|&a, &b| {
                vecs.get(a, col)
                    .norm_sqr()
                    .partial_cmp(&vecs.get(b, col).norm_sqr())
                    .unwrap()
            })
            .unwrap();
        match prod / nuc_dim {
            1 => groups[0].push(crate::units::rad_to_mhz(vals[col])),
            2 => groups[1].push(crate::units::rad_to_mhz(vals[col])),
            _ => {}
        }
    }
    let mut out = Vec::new();
    for g in &groups {
        for i in 0..g.len() {
            for j in (i + 1)..g.len() {
                let f = (g[i] - g[j]).abs();
                if f > 1e-9 {
                    out.push(f);
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Bell states and tomography

/// The four maximally entangled two-qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phi-plus" | "phi+" => Ok(BellState::PhiPlus),
            "phi-minus" | "phi-" => Ok(BellState::PhiMinus),
            "psi-plus" | "psi+" => Ok(BellState::PsiPlus),
            "psi-minus" | "psi-" => Ok(BellState::PsiMinus),
            other => Err(Error::Invalid(format!(
                "unknown Bell state '{other}' (phi-plus, phi-minus, psi-plus, psi-minus)"
            ))),
        }
    }

    /// Target amplitudes in the up-up, up-down, down-up, down-down basis.
    pub fn amplitudes(self) -> [C64; 4] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let p = C64::new(r, 0.0);
        let m = C64::new(-r, 0.0);
        match self {
            BellState::PhiPlus => [p, z, z, p],
            BellState::PhiMinus => [p, z, z, m],
            BellState::PsiPlus => [z, p, p, z],
            BellState::PsiMinus => [z, m, p, z],
        }
    }
}

fn pulse_on(system: &SpinSystem, i: usize, j: usize, angle: Angle, phase: f64, channel: Channel) -> PulseEvent {
    let f = (system.energies_mhz[i] - system.energies_mhz[j]).abs();
    let rabi = DEFAULT_ANGLE_RABI_MHZ;
    let dur = angle.radians() / std::f64::consts::PI * 500.0 / rabi;
    PulseEvent::Pulse {
        channel,
        freq_mhz: f,
        rabi_mhz: rabi,
        phase: phase.rem_euclid(2.0 * std::f64::consts::PI),
        duration_ns: dur,
        angle: Some(angle),
        target: Some((system.labels[i].clone(), system.labels[j].clone())),
    }
}

/// Pulse program preparing the chosen Bell state from the down-up level of
/// [`SpinSystem::bell_default`].
///
/// Psi states start with an electron coherence (microwave pi/2) converted by
/// a nuclear pi pulse; Phi states start with a nuclear pi/2 converted by an
/// electron pi pulse. The pulse phases pick the sign of the superposition
/// under the exp(-i theta/2 (cos phi sx + sin phi sy)) rotation convention.
pub fn prepare_bell(which: BellState) -> PulseSequence {
    let sys = SpinSystem::bell_default();
    let pi = std::f64::consts::PI;
    let events = match which {
        // pi/2 on up-up <-> down-up, then pi on up-up <-> up-down
        BellState::PsiMinus => vec![
            pulse_on(&sys, 0, 2, Angle::HalfPi, 0.0, Channel::Mw),
            pulse_on(&sys, 0, 1, Angle::Pi, 0.0, Channel::Rf),
        ],
        // pi/2 on down-up <-> down-down, then pi on up-down <-> down-down
        BellState::PsiPlus => vec![
            pulse_on(&sys, 2, 3, Angle::HalfPi, pi, Channel::Rf),
            pulse_on(&sys, 1, 3, Angle::Pi, 0.0, Channel::Mw),
        ],
        // pi/2 on down-up <-> down-down, then pi on up-up <-> down-up
        BellState::PhiPlus => vec![
            pulse_on(&sys, 2, 3, Angle::HalfPi, 0.0, Channel::Rf),
            pulse_on(&sys, 0, 2, Angle::Pi, 0.0, Channel::Mw),
        ],
        BellState::PhiMinus => vec![
            pulse_on(&sys, 2, 3, Angle::HalfPi, pi, Channel::Rf),
            pulse_on(&sys, 0, 2, Angle::Pi, 0.0, Channel::Mw),
        ],
    };
    PulseSequence::new(format!("{which:?}"), events).expect("static sequence is valid")
}

/// Tomographic reconstruction of a 4x4 density matrix.
#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    /// Probe description per reconstructed element (row, col, description).
    pub provenance: Vec<(usize, usize, String)>,
    pub hermiticity_deviation: f64,
    /// Set when the reconstruction violates Hermiticity beyond tolerance.
    pub flagged: bool,
}

/// Measured population difference p_a - p_b after applying `u` to `rho`.
fn probed_difference(rho: &DensityMatrix, u: &Operator, a: usize, b: usize) -> f64 {
    let r = crate::qops::apply_unitary(rho, u);
    r.population(a) - r.population(b)
}

/// A pi/2 probe on (p, q) at probe phase phi: the real part of the
/// coherence is measured at phi = 0 and the negative imaginary part at
/// phi = pi/2. Probe phases are referenced to the -y axis, i.e. the probe
/// is an ordinary pulse with phase phi - pi/2.
fn probe_unitary(dim: usize, p: usize, q: usize, phi: f64) -> Operator {
    subspace_rotation(
        dim,
        p,
        q,
        std::f64::consts::FRAC_PI_2,
        phi - std::f64::consts::FRAC_PI_2,
        0.0,
    )
}

/// Measure the complex coherence rho_pq of an allowed transition via the
/// two-phase probe.
fn measure_coherence(rho: &DensityMatrix, p: usize, q: usize) -> C64 {
    let dim = rho.dim();
    let re = probed_difference(rho, &probe_unitary(dim, p, q, 0.0), p, q);
    let im = -probed_difference(
        rho,
        &probe_unitary(dim, p, q, std::f64::consts::FRAC_PI_2),
        p,
        q,
    );
    0.5 * C64::new(re, im)
}

/// Reconstruct the 4x4 density matrix produced by `prep` on
/// [`SpinSystem::bell_default`], element by element, the way the experiment
/// accesses it:
/// - diagonals from the four allowed-transition population differences plus
///   normalization, by least squares;
/// - allowed-transition (first-order) coherences from pi/2 probes at phases
///   0 and pi/2;
/// - forbidden-transition (second-order) coherences by first swapping them
///   onto an allowed transition with a pi pulse.
///
/// `dephasing_rate` (1/s) adds pure dephasing during preparation.
pub fn tomography_reconstruct(
    prep: &PulseSequence,
    dephasing_rate: f64,
) -> Result<TomographyResult> {
    let sys = SpinSystem::bell_default();
    let initial = DensityMatrix::pure(4, 2); // down-up
    let sim = simulate_sequence(&sys, prep, &initial, Frame::Rotating, dephasing_rate)?;
    let rho = sim.rho;

    let mut provenance = Vec::new();

    // diagonals: population differences across the four allowed transitions
    // plus the trace constraint, solved in the least-squares sense
    let pairs = [(0usize, 2usize), (1, 3), (0, 1), (2, 3)];
    let mut ata = Array2::<f64>::zeros((4, 4));
    let mut atb = [0.0f64; 4];
    let mut rows: Vec<([f64; 4], f64)> = Vec::new();
    for &(a, b) in &pairs {
        let mut row = [0.0; 4];
        row[a] = 1.0;
        row[b] = -1.0;
        rows.push((row, rho.population(a) - rho.population(b)));
    }
    rows.push(([1.0, 1.0, 1.0, 1.0], 1.0));
    for (row, y) in &rows {
        for i in 0..4 {
            for j in 0..4 {
                ata[[i, j]] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    let mut ata_c = Array2::<C64>::zeros((4, 4));
    for i in 0..4 {
        for j in 0..4 {
            ata_c[[i, j]] = C64::new(ata[[i, j]], 0.0);
        }
    }
    let rhs: Vec<C64> = atb.iter().map(|&v| C64::new(v, 0.0)).collect();
    let diag = crate::qops::solve_complex(&ata_c, &rhs)?;
    for (k, d) in diag.iter().enumerate() {
        provenance.push((k, k, "population differences over 4 transitions + trace".into()));
        let _ = d;
    }

    let mut m = Array2::<C64>::zeros((4, 4));
    for k in 0..4 {
        m[[k, k]] = C64::new(diag[k].re, 0.0);
    }

    // first-order coherences
    for &(p, q) in &pairs {
        let c = measure_coherence(&rho, p, q);
        m[[p, q]] = c;
        m[[q, p]] = c.conj();
        provenance.push((p, q, "pi/2 probes at phases 0 and pi/2".into()));
    }

    // second-order coherences: swap onto the up-up <-> down-up transition
    // rho_{1,2} (up-down, down-up): pi swap on (0,1) maps it to rho_{0,2}
    {
        let w = subspace_rotation(4, 0, 1, std::f64::consts::PI, 0.0, 0.0);
        let swapped = crate::qops::apply_unitary(&rho, &w);
        // <0|W rho W^dag|2> = -i * rho_{1,2} under this swap phase
        let c = measure_coherence(&swapped, 0, 2);
        let val = C64::new(0.0, 1.0) * c; // undo the -i factor
        m[[1, 2]] = val;
        m[[2, 1]] = val.conj();
        provenance.push((1, 2, "pi swap on up-up/up-down, then pi/2 probes".into()));
    }
    // rho_{0,3} (up-up, down-down): pi swap on (2,3) maps it to rho_{0,2}
    {
        let w = subspace_rotation(4, 2, 3, std::f64::consts::PI, 0.0, 0.0);
        let swapped = crate::qops::apply_unitary(&rho, &w);
        // <0|W rho W^dag|2> = i * rho_{0,3}
        let c = measure_coherence(&swapped, 0, 2);
        let val = C64::new(0.0, -1.0) * c;
        m[[0, 3]] = val;
        m[[3, 0]] = val.conj();
        provenance.push((0, 3, "pi swap on down-up/down-down, then pi/2 probes".into()));
    }

    let op = Operator::new(m.clone()).map_err(|_| Error::Fit("reconstruction produced a non-finite matrix".into()))?;
    let dev = op.hermiticity_deviation();
    let flagged = dev > 1e-6;
    Ok(TomographyResult {
        rho: DensityMatrix::from_raw(m),
        provenance,
        hermiticity_deviation: dev,
        flagged,
    })
}
