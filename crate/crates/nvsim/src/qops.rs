//! Dense complex linear algebra and open-system evolution for small Hilbert
//! spaces (dimension <= 16).
//!
//! Everything here is a pure function over immutable values; evolutions can be
//! run in parallel without shared state. Hamiltonians are angular frequencies
//! (rad/s); time is in seconds.

use ndarray::Array2;
use num_complex::Complex64;

use crate::series::MultiTrace;
use crate::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// A complex square matrix over a declared level basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    m: Array2<C64>,
}

impl Operator {
    pub fn new(m: Array2<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: Array2::zeros((dim, dim)) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: Array2::eye(dim) }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Array2::zeros((d.len(), d.len()));
        for (i, &x) in d.iter().enumerate() {
            m[[i, i]] = C64::new(x, 0.0);
        }
        Self { m }
    }

    /// |i><j| on a `dim`-dimensional space.
    pub fn ketbra(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[i, j]] = C64::new(1.0, 0.0);
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[[i, j]]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.m[[i, j]] = v;
    }

    pub fn dagger(&self) -> Self {
        let mut out = Array2::zeros((self.dim(), self.dim()));
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                out[[i, j]] = self.m[[j, i]].conj();
            }
        }
        Self { m: out }
    }

    pub fn dot(&self, other: &Self) -> Self {
        Self { m: self.m.dot(&other.m) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { m: &self.m - &other.m }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { m: self.m.mapv(|x| x * c) }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.m[[i, i]]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute deviation from Hermiticity, max |A - A^dag|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                dev = dev.max((self.m[[i, j]] - self.m[[j, i]].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.frobenius_norm().max(1.0);
        self.hermiticity_deviation() <= rel_tol * scale
    }

    /// Expectation value tr(rho * self) for a Hermitian observable.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += rho.m[[i, j]] * self.m[[j, i]];
            }
        }
        acc.re
    }
}

/// Kronecker product; result dimension is dim(a)*dim(b).
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (da, db) = (a.dim(), b.dim());
    let mut out = Array2::zeros((da * db, da * db));
    for i in 0..da {
        for j in 0..da {
            let aij = a.m[[i, j]];
            for k in 0..db {
                for l in 0..db {
                    out[[i * db + k, j * db + l]] = aij * b.m[[k, l]];
                }
            }
        }
    }
    Operator { m: out }
}

/// Spin operators (Sx, Sy, Sz) for spin quantum number `two_j / 2`, in the
/// standard basis ordered m = +j ... -j. Dimensionless (units of hbar).
pub fn spin_ops(two_j: u32) -> (Operator, Operator, Operator) {
    let dim = two_j as usize + 1;
    let j = two_j as f64 / 2.0;
    let mut sp = Array2::<C64>::zeros((dim, dim)); // raising in m
    for k in 1..dim {
        // basis index k has m = j - k; S+ |m> = sqrt(j(j+1)-m(m+1)) |m+1>
        let m = j - k as f64;
        let c = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
        sp[[k - 1, k]] = C64::new(c, 0.0);
    }
    let spo = Operator { m: sp };
    let smo = spo.dagger();
    let sx = spo.add(&smo).scale_re(0.5);
    let sy = spo.sub(&smo).scale(C64::new(0.0, -0.5));
    let mut szm = Array2::<C64>::zeros((dim, dim));
    for k in 0..dim {
        szm[[k, k]] = C64::new(j - k as f64, 0.0);
    }
    (sx, sy, Operator { m: szm })
}

pub fn pauli_x() -> Operator {
    let (sx, _, _) = spin_ops(1);
    sx.scale_re(2.0)
}

pub fn pauli_y() -> Operator {
    let (_, sy, _) = spin_ops(1);
    sy.scale_re(2.0)
}

pub fn pauli_z() -> Operator {
    let (_, _, sz) = spin_ops(1);
    sz.scale_re(2.0)
}

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: Array2<C64>,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian within 1e-10, trace 1 within 1e-9.
    pub fn new(m: Array2<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let op = Operator { m };
        let dev = op.hermiticity_deviation();
        if dev > 1e-10 {
            return Err(Error::NonHermitian { dev });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Invalid(format!("density matrix trace {tr} != 1")));
        }
        Ok(Self { m: op.m })
    }

    /// Internal constructor for evolution outputs; skips validation.
    pub(crate) fn from_raw(m: Array2<C64>) -> Self {
        Self { m }
    }

    /// Pure state |k><k|.
    pub fn pure(dim: usize, k: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[k, k]] = C64::new(1.0, 0.0);
        Self { m }
    }

    /// Pure state from an (unnormalized) amplitude vector.
    pub fn from_state(amps: &[C64]) -> Self {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let dim = amps.len();
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[[i, j]] = amps[i] * amps[j].conj() / (norm * norm);
            }
        }
        Self { m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            m[[i, i]] = C64::new(1.0 / dim as f64, 0.0);
        }
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[[i, j]]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.m[[i, j]] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[[i, i]].re).sum()
    }

    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.m[[i, j]] * self.m[[j, i]]).re;
            }
        }
        acc
    }

    pub fn population(&self, k: usize) -> f64 {
        self.m[[k, k]].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[[i, i]].re).collect()
    }

    /// Smallest eigenvalue; the state is physical when this is >= -1e-9.
    pub fn min_eigenvalue(&self) -> f64 {
        let op = Operator { m: self.m.clone() };
        let (vals, _) = eig_hermitian(&op).expect("density matrix is Hermitian");
        vals[0]
    }

    /// Fidelity <psi|rho|psi> with a pure target state.
    pub fn fidelity_with_state(&self, amps: &[C64]) -> f64 {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += amps[i].conj() * self.m[[i, j]] * amps[j];
            }
        }
        acc.re / norm
    }

    pub fn as_operator(&self) -> Operator {
        Operator { m: self.m.clone() }
    }
}

/// A Lindblad dissipation channel: operator L with rate gamma >= 0, entering
/// the master equation as gamma (L rho L^dag - 1/2 {L^dag L, rho}).
#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub operator: Operator,
    /// 1/s
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(operator: Operator, rate: f64) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::Invalid(format!("collapse rate must be >= 0, got {rate}")));
        }
        Ok(Self { operator, rate })
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns eigenvalues in ascending order and the matrix of
/// eigenvectors (as columns).
pub fn eig_hermitian(h: &Operator) -> Result<(Vec<f64>, Operator)> {
    let dim = h.dim();
    let scale = h.frobenius_norm().max(1.0);
    let dev = h.hermiticity_deviation();
    if dev > 1e-12 * scale {
        return Err(Error::NonHermitian { dev });
    }
    let mut a = h.m.clone();
    // Symmetrize to kill representation noise below the tolerance.
    for i in 0..dim {
        for j in 0..dim {
            let s = (a[[i, j]] + a[[j, i]].conj()) * 0.5;
            a[[i, j]] = s;
            a[[j, i]] = s.conj();
        }
    }
    let mut v = Array2::<C64>::eye(dim);

    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..dim {
                for q in 0..dim {
                    if p != q {
                        s += a[[p, q]].norm_sqr();
                    }
                }
            }
            s.sqrt()
        };
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[[p, q]];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phi = apq / r; // unit phase
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Unitary J differing from identity on rows/cols p,q:
                //   J[p][p] = c*phi, J[p][q] = s*phi, J[q][p] = -s, J[q][q] = c
                // chosen so that (J^dag A J)[p][q] = 0.
                let jpp = phi * c;
                let jpq = phi * s;
                let jqp = C64::new(-s, 0.0);
                let jqq = C64::new(c, 0.0);

                // A <- J^dag A J: update columns then rows.
                for i in 0..dim {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = aip * jpp + aiq * jqp;
                    a[[i, q]] = aip * jpq + aiq * jqq;
                }
                for i in 0..dim {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = jpp.conj() * api + jqp.conj() * aqi;
                    a[[q, i]] = jpq.conj() * api + jqq.conj() * aqi;
                }
                for i in 0..dim {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip * jpp + viq * jqp;
                    v[[i, q]] = vip * jpq + viq * jqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    let diag: Vec<f64> = (0..dim).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vec_sorted = Array2::<C64>::zeros((dim, dim));
    for (col, &src) in order.iter().enumerate() {
        for i in 0..dim {
            vec_sorted[[i, col]] = v[[i, src]];
        }
    }
    Ok((vals, Operator { m: vec_sorted }))
}

/// Unitary evolution rho -> U rho U^dag with U = exp(-i h t), h in rad/s.
pub fn unitary_evolve(rho: &DensityMatrix, h: &Operator, t: f64) -> Result<DensityMatrix> {
    if t < 0.0 {
        return Err(Error::Invalid(format!("evolution time must be >= 0, got {t}")));
    }
    if rho.dim() != h.dim() {
        return Err(Error::Dimension("state and Hamiltonian dimensions differ".into()));
    }
    let u = expm_hermitian(h, t)?;
    Ok(apply_unitary(rho, &u))
}

/// exp(-i h t) for Hermitian h via eigendecomposition.
pub fn expm_hermitian(h: &Operator, t: f64) -> Result<Operator> {
    let (vals, vecs) = eig_hermitian(h)?;
    let dim = h.dim();
    let mut d = Array2::<C64>::zeros((dim, dim));
    for (i, &l) in vals.iter().enumerate() {
        d[[i, i]] = (-I * l * t).exp();
    }
    let u = vecs.m.dot(&d).dot(&vecs.dagger().m);
    Ok(Operator { m: u })
}

pub fn apply_unitary(rho: &DensityMatrix, u: &Operator) -> DensityMatrix {
    DensityMatrix::from_raw(u.m.dot(&rho.m).dot(&u.dagger().m))
}

/// Right-hand side of the Lindblad master equation.
fn lindblad_rhs(
    rho: &Array2<C64>,
    h: &Array2<C64>,
    prepped: &[(Array2<C64>, Array2<C64>, Array2<C64>, f64)], // (L, L^dag, L^dag L, rate)
) -> Array2<C64> {
    let h_rho = h.dot(rho);
    let rho_h = rho.dot(h);
    let mut out = (&h_rho - &rho_h).mapv(|x| x * (-I));
    for (l, ldag, ldl, rate) in prepped {
        if *rate == 0.0 {
            continue;
        }
        let jump = l.dot(rho).dot(ldag);
        let anti = ldl.dot(rho) + rho.dot(ldl);
        out = out + (jump - anti.mapv(|x| x * 0.5)).mapv(|x| x * *rate);
    }
    out
}

/// Observable to record during a Lindblad evolution.
#[derive(Debug, Clone)]
pub struct Observable {
    pub label: String,
    pub operator: Operator,
}

impl Observable {
    /// Population of basis level `k`.
    pub fn population(dim: usize, k: usize, label: impl Into<String>) -> Self {
        Self { label: label.into(), operator: Operator::ketbra(dim, k, k) }
    }
}

/// Fixed-step 4th-order integration of the Lindblad master equation.
///
/// The stability guard rejects dt * max(rate, |h|) >= 0.1 and reports a
/// usable step instead. Observables are sampled at every step boundary.
pub fn lindblad_evolve(
    rho: &DensityMatrix,
    h: &Operator,
    channels: &[CollapseChannel],
    dt: f64,
    steps: usize,
    observables: &[Observable],
) -> Result<(DensityMatrix, MultiTrace)> {
    if dt <= 0.0 {
        return Err(Error::Invalid(format!("dt must be > 0, got {dt}")));
    }
    if rho.dim() != h.dim() {
        return Err(Error::Dimension("state and Hamiltonian dimensions differ".into()));
    }
    let hnorm = h.frobenius_norm();
    let max_rate = channels.iter().map(|c| c.rate).fold(0.0f64, f64::max);
    let stiff = hnorm.max(max_rate);
    if dt * stiff >= 0.1 {
        return Err(Error::Unstable { recommended: 0.05 / stiff });
    }

    let prepped: Vec<(Array2<C64>, Array2<C64>, Array2<C64>, f64)> = channels
        .iter()
        .map(|c| {
            let l = c.operator.m.clone();
            let ldag = c.operator.dagger().m;
            let ldl = ldag.dot(&l);
            (l, ldag, ldl, c.rate)
        })
        .collect();

    let mut state = rho.m.clone();
    let hm = &h.m;
    let mut times = Vec::with_capacity(steps + 1);
    let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); observables.len()];
    let record = |state: &Array2<C64>, data: &mut Vec<Vec<f64>>| {
        for (k, obs) in observables.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..state.nrows() {
                for j in 0..state.ncols() {
                    acc += state[[i, j]] * obs.operator.m[[j, i]];
                }
            }
            data[k].push(acc.re);
        }
    };

    times.push(0.0);
    record(&state, &mut data);
    for step in 0..steps {
        let k1 = lindblad_rhs(&state, hm, &prepped);
        let s2 = &state + &k1.mapv(|x| x * (dt / 2.0));
        let k2 = lindblad_rhs(&s2, hm, &prepped);
        let s3 = &state + &k2.mapv(|x| x * (dt / 2.0));
        let k3 = lindblad_rhs(&s3, hm, &prepped);
        let s4 = &state + &k3.mapv(|x| x * dt);
        let k4 = lindblad_rhs(&s4, hm, &prepped);
        state = &state
            + &(k1 + k2.mapv(|x| x * 2.0) + k3.mapv(|x| x * 2.0) + k4).mapv(|x| x * (dt / 6.0));
        times.push((step + 1) as f64 * dt);
        record(&state, &mut data);
    }

    let series = observables
        .iter()
        .zip(data)
        .map(|(o, v)| (o.label.clone(), v))
        .collect();
    Ok((DensityMatrix::from_raw(state), MultiTrace { times, series }))
}

/// Solve the complex linear system A x = b by Gaussian elimination with
/// partial pivoting. A is consumed as a working copy.
pub fn solve_complex(a: &Array2<C64>, b: &[C64]) -> Result<Vec<C64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension("solve_complex expects square A and matching b".into()));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.iter().map(|x| x.norm()).fold(0.0f64, f64::max).max(1.0);
    for col in 0..n {
        let (piv, pnorm) = (col..n)
            .map(|r| (r, m[[r, col]].norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pnorm <= 1e-13 * scale {
            return Err(Error::Singular(format!("pivot {pnorm:.3e} in column {col}")));
        }
        if piv != col {
            for j in 0..n {
                m.swap([col, j], [piv, j]);
            }
            rhs.swap(col, piv);
        }
        let d = m[[col, col]];
        for r in (col + 1)..n {
            let f = m[[r, col]] / d;
            if f.norm() == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m[[col, j]];
                m[[r, j]] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= m[[row, j]] * x[j];
        }
        x[row] = acc / m[[row, row]];
    }
    Ok(x)
}
