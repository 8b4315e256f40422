//! NV center level structure: ground-state spin Hamiltonian with hyperfine
//! couplings, and the seven-level optical rate model with spin-selective
//! intersystem crossing (ISC).
//!
//! Convention adopted throughout: the m_s = 0 sublevel is optically bright
//! (small ISC from its excited state) and m_s = +-1 are dark (large ISC).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::qops::{eig_hermitian, kron, spin_ops, Operator};
use crate::units::mhz_to_rad;
use crate::{Error, Result};

/// Nuclear species with a resolved hyperfine coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Species {
    N14,
    C13,
}

impl Species {
    /// Twice the nuclear spin quantum number.
    pub fn two_i(self) -> u32 {
        match self {
            Species::N14 => 2, // I = 1
            Species::C13 => 1, // I = 1/2
        }
    }
}

/// One coupled nucleus: axial hyperfine tensor diag(a_perp, a_perp, a_par)
/// in the NV frame, optional quadrupole term for I = 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusSpec {
    pub species: Species,
    /// MHz
    pub a_parallel: f64,
    /// MHz
    pub a_perp: f64,
    /// Quadrupole parameter P in MHz; only meaningful for I = 1.
    #[serde(default)]
    pub quadrupole_p: f64,
    /// MHz/mT
    pub gamma_n: f64,
}

impl NucleusSpec {
    /// Host 14N nucleus (I = 1), isotropic 2.0 MHz coupling.
    pub fn n14() -> Self {
        Self {
            species: Species::N14,
            a_parallel: 2.0,
            a_perp: 2.0,
            quadrupole_p: 0.0,
            gamma_n: 0.003_077,
        }
    }

    /// First-shell 13C (I = 1/2), effective axial 126 MHz coupling chosen
    /// so the diagonalized doublet separation matches the observed value.
    pub fn c13() -> Self {
        Self {
            species: Species::C13,
            a_parallel: 126.0,
            a_perp: 0.0,
            quadrupole_p: 0.0,
            gamma_n: 0.010_705,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.species.two_i() != 2 && self.quadrupole_p != 0.0 {
            return Err(Error::Invalid(
                "quadrupole term only applies to I = 1 nuclei".into(),
            ));
        }
        Ok(())
    }
}

/// Ground-state spin Hamiltonian parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinHamiltonianParams {
    /// Zero-field splitting D, MHz.
    pub d_mhz: f64,
    /// Transverse zero-field term E, MHz (zero for C3v symmetry).
    pub e_mhz: f64,
    /// Electron gyromagnetic ratio, MHz/mT.
    pub gamma_e: f64,
    /// Static field, mT, in the NV frame.
    pub b0_mt: [f64; 3],
    pub nuclei: Vec<NucleusSpec>,
}

impl Default for SpinHamiltonianParams {
    fn default() -> Self {
        Self {
            d_mhz: 2880.0,
            e_mhz: 0.0,
            gamma_e: 28.03,
            b0_mt: [0.0, 0.0, 0.0],
            nuclei: Vec::new(),
        }
    }
}

impl SpinHamiltonianParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_mhz <= 0.0 {
            return Err(Error::Invalid(format!("D must be > 0, got {}", self.d_mhz)));
        }
        if self.e_mhz < 0.0 {
            return Err(Error::Invalid(format!("E must be >= 0, got {}", self.e_mhz)));
        }
        for n in &self.nuclei {
            n.validate()?;
        }
        Ok(())
    }

    /// Dimension of the ground-manifold Hilbert space.
    pub fn dim(&self) -> usize {
        3 * self
            .nuclei
            .iter()
            .map(|n| n.species.two_i() as usize + 1)
            .product::<usize>()
    }
}

/// Ordered labels for a tensor-product level basis.
#[derive(Debug, Clone)]
pub struct LevelBasis {
    pub labels: Vec<String>,
    /// Electron m_s per label (+1, 0, -1 ordering of the S=1 basis).
    pub electron_ms: Vec<f64>,
    /// Nuclear m_I per label and nucleus.
    pub nuclear_mi: Vec<Vec<f64>>,
}

impl LevelBasis {
    pub fn ground(params: &SpinHamiltonianParams) -> Self {
        let e_ms = [1.0, 0.0, -1.0];
        let mut labels = Vec::new();
        let mut electron_ms = Vec::new();
        let mut nuclear_mi = Vec::new();
        let nuc_dims: Vec<usize> = params
            .nuclei
            .iter()
            .map(|n| n.species.two_i() as usize + 1)
            .collect();
        let total_nuc: usize = nuc_dims.iter().product::<usize>().max(1);
        for &ms in &e_ms {
            for idx in 0..total_nuc {
                let mut rem = idx;
                let mut mis = Vec::new();
                let mut label = format!("ms={ms:+}");
                for (k, _) in nuc_dims.iter().enumerate() {
                    let sub = rem / nuc_dims[k + 1..].iter().product::<usize>().max(1);
                    rem %= nuc_dims[k + 1..].iter().product::<usize>().max(1);
                    let i = params.nuclei[k].species.two_i() as f64 / 2.0;
                    let mi = i - sub as f64;
                    mis.push(mi);
                    label.push_str(&format!(",mI={mi:+}"));
                }
                labels.push(label);
                electron_ms.push(ms);
                nuclear_mi.push(mis);
            }
        }
        Self { labels, electron_ms, nuclear_mi }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// Electron spin-1 operators extended to the full electron x nuclei space.
pub fn electron_ops(params: &SpinHamiltonianParams) -> (Operator, Operator, Operator) {
    let (sx, sy, sz) = spin_ops(2);
    let mut ops = [sx, sy, sz];
    for n in &params.nuclei {
        let id = Operator::identity(n.species.two_i() as usize + 1);
        for op in &mut ops {
            *op = kron(op, &id);
        }
    }
    let [x, y, z] = ops;
    (x, y, z)
}

/// Spin operators of nucleus `k` extended to the full space.
pub fn nucleus_ops(params: &SpinHamiltonianParams, k: usize) -> (Operator, Operator, Operator) {
    let mut ops: Option<[Operator; 3]> = None;
    let extend = |acc: Option<[Operator; 3]>, next: [Operator; 3]| match acc {
        None => Some(next),
        Some([a, b, c]) => {
            Some([kron(&a, &next[0]), kron(&b, &next[1]), kron(&c, &next[2])])
        }
    };
    let id3 = Operator::identity(3);
    ops = extend(ops, [id3.clone(), id3.clone(), id3]);
    for (j, n) in params.nuclei.iter().enumerate() {
        let dim = n.species.two_i() as usize + 1;
        let next = if j == k {
            let (ix, iy, iz) = spin_ops(n.species.two_i());
            [ix, iy, iz]
        } else {
            let id = Operator::identity(dim);
            [id.clone(), id.clone(), id]
        };
        ops = extend(ops, next);
    }
    let [x, y, z] = ops.unwrap();
    (x, y, z)
}

/// Ground-state spin Hamiltonian in rad/s on the basis |m_s> x |m_I, ...>.
///
/// H = D Sz^2 + E (Sx^2 - Sy^2) + gamma_e B.S
///     + sum_k [ a_perp (Sx Ix + Sy Iy) + a_par Sz Iz
///               + P (Iz^2 - I(I+1)/3) + gamma_n B.I ]
///
/// The zero-field term is written without the -S(S+1)/3 trace shift, so the
/// electron-only eigenvalues at B = 0, E = 0 are {0, D, D}; the shift is a
/// multiple of the identity and does not affect any transition frequency.
pub fn ground_hamiltonian(params: &SpinHamiltonianParams) -> Result<Operator> {
    params.validate()?;
    let (sx, sy, sz) = electron_ops(params);
    let [bx, by, bz] = params.b0_mt;

    let mut h = sz
        .dot(&sz)
        .scale_re(params.d_mhz)
        .add(&sx.dot(&sx).sub(&sy.dot(&sy)).scale_re(params.e_mhz))
        .add(
            &sx.scale_re(params.gamma_e * bx)
                .add(&sy.scale_re(params.gamma_e * by))
                .add(&sz.scale_re(params.gamma_e * bz)),
        );

    for (k, n) in params.nuclei.iter().enumerate() {
        let (ix, iy, iz) = nucleus_ops(params, k);
        let hf = sx
            .dot(&ix)
            .add(&sy.dot(&iy))
            .scale_re(n.a_perp)
            .add(&sz.dot(&iz).scale_re(n.a_parallel));
        h = h.add(&hf);
        if n.quadrupole_p != 0.0 {
            let i = n.species.two_i() as f64 / 2.0;
            let shift = Operator::identity(h.dim()).scale_re(i * (i + 1.0) / 3.0);
            h = h.add(&iz.dot(&iz).sub(&shift).scale_re(n.quadrupole_p));
        }
        h = h.add(
            &ix.scale_re(n.gamma_n * bx)
                .add(&iy.scale_re(n.gamma_n * by))
                .add(&iz.scale_re(n.gamma_n * bz)),
        );
    }

    let h = h.scale_re(mhz_to_rad(1.0));
    debug_assert!(h.is_hermitian(1e-12));
    Ok(h)
}

/// One allowed (or near-allowed) magnetic-dipole transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub freq_mhz: f64,
    /// |<i|Sx|j>|^2, dimensionless.
    pub strength: f64,
    pub from_label: String,
    pub to_label: String,
}

/// Selection rule for `transition_table`: keep transitions whose strength is
/// at least `strength_threshold` times the strongest one.
#[derive(Debug, Clone, Copy)]
pub struct SelectionRule {
    pub strength_threshold: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self { strength_threshold: 0.01 }
    }
}

/// All transitions of `h` under an Sx (microwave) drive, evaluated in the
/// eigenbasis. Frequencies are positive eigenvalue differences in MHz.
pub fn transition_table(
    h: &Operator,
    basis: &LevelBasis,
    rule: SelectionRule,
) -> Result<Vec<Transition>> {
    if h.dim() != basis.dim() {
        return Err(Error::Dimension("Hamiltonian and basis dimensions differ".into()));
    }
    let (vals, vecs) = eig_hermitian(h)?;
    let dim = h.dim();
    // Sx in the full space: rebuild from the basis metadata.
    let (sx_full, _, _) = {
        let (sx, sy, sz) = spin_ops(2);
        let nuc_dim = dim / 3;
        (
            kron(&sx, &Operator::identity(nuc_dim)),
            kron(&sy, &Operator::identity(nuc_dim)),
            kron(&sz, &Operator::identity(nuc_dim)),
        )
    };
    // matrix elements in the eigenbasis
    let me = vecs.dagger().dot(&sx_full).dot(&vecs);

    // dominant basis label for each eigenvector
    let label_of = |col: usize| {
        let mut best = 0;
        let mut best_w = 0.0;
        for i in 0..dim {
            let w = vecs.get(i, col).norm_sqr();
            if w > best_w {
                best_w = w;
                best = i;
            }
        }
        basis.labels[best].clone()
    };

    let mut list = Vec::new();
    let mut max_strength: f64 = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let f = crate::units::rad_to_mhz(vals[j] - vals[i]);
            if f <= 0.0 {
                continue;
            }
            let s = me.get(i, j).norm_sqr();
            max_strength = max_strength.max(s);
            list.push(Transition {
                freq_mhz: f,
                strength: s,
                from_label: label_of(i),
                to_label: label_of(j),
            });
        }
    }
    list.retain(|t| t.strength >= rule.strength_threshold * max_strength);
    list.sort_by(|a, b| a.freq_mhz.partial_cmp(&b.freq_mhz).unwrap());
    Ok(list)
}

/// Photophysical rate constants for the seven-level optical model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotophysicsRates {
    /// Excited-state total decay (Einstein coefficient A), 1/s.
    pub a_rad: f64,
    pub quantum_yield: f64,
    /// ISC rate from the excited m_s = +-1 states, 1/s (large branch).
    pub k_s_xy: f64,
    /// ISC rate from the excited m_s = 0 state, 1/s (small branch).
    pub k_s_z: f64,
    /// Singlet depopulation to ground m_s = +1, 1/s.
    pub k_x: f64,
    /// Singlet depopulation to ground m_s = -1, 1/s.
    pub k_y: f64,
    /// Singlet depopulation to ground m_s = 0, 1/s.
    pub k_z: f64,
    /// Ground-state spin-lattice relaxation rate R, 1/s.
    pub r_slr: f64,
    pub detection_eff: f64,
}

impl Default for PhotophysicsRates {
    fn default() -> Self {
        Self {
            a_rad: 1.0 / 13.0e-9, // 13 ns fluorescence lifetime
            quantum_yield: 0.7,
            k_s_xy: 5.0e7,
            k_s_z: 5.0e4,
            k_x: 1.0e6,
            k_y: 1.0e6,
            k_z: 1.0e6,
            r_slr: 1.0,
            detection_eff: 1.0e-3,
        }
    }
}

impl PhotophysicsRates {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a_rad", self.a_rad),
            ("k_s_xy", self.k_s_xy),
            ("k_s_z", self.k_s_z),
            ("k_x", self.k_x),
            ("k_y", self.k_y),
            ("k_z", self.k_z),
            ("r_slr", self.r_slr),
        ];
        for (name, v) in named {
            if v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("quantum_yield", self.quantum_yield), ("detection_eff", self.detection_eff)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{name} must be in [0,1], got {v}")));
            }
        }
        Ok(())
    }

    /// k_D = k_x + k_y (singlet depopulation to the m_s = +-1 sublevels).
    pub fn k_d(&self) -> f64 {
        self.k_x + self.k_y
    }

    /// k_T = k_D + k_z (total singlet depopulation).
    pub fn k_t(&self) -> f64 {
        self.k_d() + self.k_z
    }
}

/// Basis order of the seven-level optical rate model.
pub const OPTICAL_LEVELS: [&str; 7] = ["g0", "g+1", "g-1", "e0", "e+1", "e-1", "singlet"];
pub const G0: usize = 0;
pub const GP: usize = 1;
pub const GM: usize = 2;
pub const E0: usize = 3;
pub const EP: usize = 4;
pub const EM: usize = 5;
pub const SINGLET: usize = 6;

/// Classical 7x7 rate matrix M with dn/dt = M n; columns sum to zero.
///
/// The pump W is spin conserving (g_i -> e_i); radiative decay returns
/// e_i -> g_i at a_rad * quantum_yield; ISC feeds the singlet from the
/// excited states; the singlet empties at k_x, k_y, k_z; the ground
/// sublevels mix pairwise at r_slr.
pub fn optical_rate_matrix(rates: &PhotophysicsRates, pump_w: f64) -> Result<Array2<f64>> {
    rates.validate()?;
    if pump_w < 0.0 {
        return Err(Error::Invalid(format!("pump rate must be >= 0, got {pump_w}")));
    }
    let mut m = Array2::<f64>::zeros((7, 7));
    let mut add = |from: usize, to: usize, rate: f64| {
        m[[to, from]] += rate;
        m[[from, from]] -= rate;
    };
    let k_rad = rates.a_rad * rates.quantum_yield;
    for (g, e) in [(G0, E0), (GP, EP), (GM, EM)] {
        add(g, e, pump_w);
        add(e, g, k_rad);
    }
    add(E0, SINGLET, rates.k_s_z);
    add(EP, SINGLET, rates.k_s_xy);
    add(EM, SINGLET, rates.k_s_xy);
    add(SINGLET, G0, rates.k_z);
    add(SINGLET, GP, rates.k_x);
    add(SINGLET, GM, rates.k_y);
    for g in [G0, GP, GM] {
        for g2 in [G0, GP, GM] {
            if g != g2 {
                add(g, g2, rates.r_slr);
            }
        }
    }
    Ok(m)
}

/// Stationary population vector of a conservative rate matrix: v >= 0,
/// sum(v) = 1, M v = 0 (checked on the max-normalized matrix to 1e-10).
pub fn steady_state(m: &Array2<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension("rate matrix must be square".into()));
    }
    let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
    for j in 0..n {
        let col: f64 = (0..n).map(|i| m[[i, j]]).sum();
        if col.abs() > 1e-9 * scale {
            return Err(Error::Invalid(format!(
                "rate matrix column {j} does not sum to zero ({col:.3e})"
            )));
        }
    }
    // Solve M v = 0 with the last row replaced by the normalization sum(v)=1.
    let mut a = m.mapv(|x| x / scale);
    for j in 0..n {
        a[[n - 1, j]] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let x = solve_real(&mut a, &mut rhs).map_err(|_| {
        Error::Singular("degenerate null space: the rate graph is disconnected".into())
    })?;
    // residual on the normalized matrix
    let mn = m.mapv(|v| v / scale);
    for i in 0..n {
        let r: f64 = (0..n).map(|j| mn[[i, j]] * x[j]).sum();
        if r.abs() > 1e-10 {
            return Err(Error::Singular(format!("steady-state residual {r:.3e}")));
        }
    }
    let mut v = x;
    for p in &mut v {
        if *p < 0.0 {
            if *p < -1e-9 {
                return Err(Error::Singular(format!("negative steady-state population {p:.3e}")));
            }
            *p = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    for p in &mut v {
        *p /= total;
    }
    Ok(v)
}

fn solve_real(a: &mut Array2<f64>, b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())).max(1.0);
    for col in 0..n {
        let (piv, pmag) = (col..n)
            .map(|r| (r, a[[r, col]].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pmag <= 1e-12 * scale {
            return Err(Error::Singular(format!("pivot {pmag:.3e} in column {col}")));
        }
        if piv != col {
            for j in 0..n {
                a.swap([col, j], [piv, j]);
            }
            b.swap(col, piv);
        }
        let d = a[[col, col]];
        for r in (col + 1)..n {
            let f = a[[r, col]] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a[[col, j]];
                a[[r, j]] -= f * v;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[[row, j]] * x[j];
        }
        x[row] = acc / a[[row, row]];
    }
    Ok(x)
}

/// RK4 integration of the classical rate equation dn/dt = M n.
pub fn rate_evolve(m: &Array2<f64>, p0: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let n = p0.len();
    let rhs = |p: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| m[[i, j]] * p[j]).sum())
            .collect()
    };
    let mut p = p0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&p);
        let p2: Vec<f64> = (0..n).map(|i| p[i] + 0.5 * dt * k1[i]).collect();
        let k2 = rhs(&p2);
        let p3: Vec<f64> = (0..n).map(|i| p[i] + 0.5 * dt * k2[i]).collect();
        let k3 = rhs(&p3);
        let p4: Vec<f64> = (0..n).map(|i| p[i] + dt * k3[i]).collect();
        let k4 = rhs(&p4);
        for i in 0..n {
            p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

/// Which excited state the laser addresses for the saturated-intensity
/// formula; it selects the ISC rate k_s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitedBranch {
    /// m_s = +-1 excitation: large ISC (the shelving, telegraph branch).
    Dark,
    /// m_s = 0 excitation: small ISC.
    Bright,
}

/// Output of the saturated-intensity formula.
#[derive(Debug, Clone, Serialize)]
pub struct SaturatedIntensity {
    /// Emitted photons/s: A / (4 + (k_s k_D + R) / (R k_T)).
    pub emitted_cps: f64,
    /// Emitted rate times quantum yield times detection efficiency.
    pub detected_cps: f64,
    /// Low-temperature limit R A k_T / (k_s k_D), valid for R << all k's.
    pub low_t_approx: f64,
}

/// Saturated single-defect fluorescence intensity under selective excitation
/// of one spin branch.
pub fn saturated_intensity(
    rates: &PhotophysicsRates,
    branch: ExcitedBranch,
) -> Result<SaturatedIntensity> {
    rates.validate()?;
    if rates.r_slr == 0.0 {
        return Err(Error::Invalid(
            "saturated intensity is singular at R = 0 (no spin-lattice return path)".into(),
        ));
    }
    let k_s = match branch {
        ExcitedBranch::Dark => rates.k_s_xy,
        ExcitedBranch::Bright => rates.k_s_z,
    };
    let k_d = rates.k_d();
    let k_t = rates.k_t();
    let r = rates.r_slr;
    let emitted = rates.a_rad / (4.0 + (k_s * k_d + r) / (r * k_t));
    let low_t = if k_s > 0.0 && k_d > 0.0 {
        r * rates.a_rad * k_t / (k_s * k_d)
    } else {
        f64::INFINITY
    };
    Ok(SaturatedIntensity {
        emitted_cps: emitted,
        detected_cps: emitted * rates.quantum_yield * rates.detection_eff,
        low_t_approx: low_t,
    })
}
