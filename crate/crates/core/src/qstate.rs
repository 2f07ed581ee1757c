//! Dense statevectors, stabilizer product inputs, time evolution and the
//! Pauli-transfer form of the ensemble-averaged fidelity.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_dims, Error, Result};
use crate::pauli::{to_dense, PauliString, SparseHamiltonian, DENSE_LIMIT};

/// A single-qubit ket `[<0|v>, <1|v>]`.
pub type Ket2 = [Complex64; 2];
/// A 2x2 operator, row-major.
pub type Mat2 = [[Complex64; 2]; 2];

const NORM_TOL: f64 = 1e-10;

pub(crate) fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Stabilizer axis of a product input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// The `(-1)^b` eigenket of this axis.
    pub fn eigenket(self, b: bool) -> Ket2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = if b { -1.0 } else { 1.0 };
        match self {
            Axis::Z if !b => [c64(1.0, 0.0), c64(0.0, 0.0)],
            Axis::Z => [c64(0.0, 0.0), c64(1.0, 0.0)],
            Axis::X => [c64(h, 0.0), c64(s * h, 0.0)],
            Axis::Y => [c64(h, 0.0), c64(0.0, s * h)],
        }
    }
}

/// Label `(P, b)` of one element of the 6^n stabilizer product ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ProductStateLabel {
    pub axes: Vec<Axis>,
    pub signs: Vec<bool>,
}

impl ProductStateLabel {
    pub fn new(axes: Vec<Axis>, signs: Vec<bool>) -> Result<Self> {
        check_dims(axes.len(), signs.len())?;
        Ok(ProductStateLabel { axes, signs })
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    /// Ensemble index in `0..6^n`; qubit 0 is the most significant base-6 digit.
    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut axes = vec![Axis::Z; n];
        let mut signs = vec![false; n];
        for q in (0..n).rev() {
            let d = index % 6;
            index /= 6;
            axes[q] = Axis::ALL[d / 2];
            signs[q] = d % 2 == 1;
        }
        ProductStateLabel { axes, signs }
    }

    pub fn index(&self) -> usize {
        self.axes.iter().zip(&self.signs).fold(0, |acc, (a, &b)| {
            let d = Axis::ALL.iter().position(|x| x == a).unwrap() * 2 + b as usize;
            acc * 6 + d
        })
    }

    pub fn kets(&self) -> Vec<Ket2> {
        self.axes
            .iter()
            .zip(&self.signs)
            .map(|(a, &b)| a.eigenket(b))
            .collect()
    }

    pub fn to_state(&self) -> StateVector {
        StateVector::product(&self.kets())
    }
}

/// Dense amplitude vector over `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Normalized state; rejects amplitude vectors off the unit sphere.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let s = Self::from_amplitudes(amps)?;
        let norm = s.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Parameter(format!("state norm {norm} is not 1")));
        }
        Ok(s)
    }

    /// Any nonzero power-of-two length vector; no normalization check.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(Error::Parameter(format!(
                "amplitude count {} is not a power of two",
                amps.len()
            )));
        }
        let n = amps.len().trailing_zeros() as usize;
        Ok(StateVector { n, amps })
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![c64(0.0, 0.0); 1 << n];
        amps[index] = c64(1.0, 0.0);
        StateVector { n, amps }
    }

    /// Tensor product; `kets[0]` is qubit 0 (most significant).
    pub fn product(kets: &[Ket2]) -> Self {
        let mut amps = vec![c64(1.0, 0.0)];
        for k in kets {
            amps = amps
                .iter()
                .flat_map(|&a| [a * k[0], a * k[1]])
                .collect();
        }
        StateVector {
            n: kets.len(),
            amps,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_dims(self.n, other.n)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::Parameter("cannot normalize the zero vector".into()));
        }
        Ok(StateVector {
            n: self.n,
            amps: self.amps.iter().map(|a| a / norm).collect(),
        })
    }

    /// Contract local qubit `pos` with `<ket|`, leaving an (n-1)-qubit vector.
    pub fn project_qubit(&self, pos: usize, ket: &Ket2) -> StateVector {
        assert!(pos < self.n && self.n >= 1);
        let low = 1usize << (self.n - 1 - pos);
        let mut out = Vec::with_capacity(self.amps.len() / 2);
        for hi in 0..(self.amps.len() >> (self.n - pos)) {
            for lo in 0..low {
                let base = (hi << (self.n - pos)) | lo;
                out.push(ket[0].conj() * self.amps[base] + ket[1].conj() * self.amps[base | low]);
            }
        }
        StateVector {
            n: self.n - 1,
            amps: out,
        }
    }

    /// Reduced 2x2 operator `Tr_{others} |v><v|` on local qubit `pos`.
    pub fn reduced_qubit(&self, pos: usize) -> Mat2 {
        let low = 1usize << (self.n - 1 - pos);
        let mut rho = [[c64(0.0, 0.0); 2]; 2];
        for (i, a) in self.amps.iter().enumerate() {
            if i & low != 0 {
                continue;
            }
            let b = self.amps[i | low];
            rho[0][0] += a * a.conj();
            rho[0][1] += a * b.conj();
            rho[1][0] += b * a.conj();
            rho[1][1] += b * b.conj();
        }
        rho
    }

    /// Debug dump: one `index re im` line per amplitude.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, a) in self.amps.iter().enumerate() {
            let _ = writeln!(s, "{i} {:e} {:e}", a.re, a.im);
        }
        s
    }

    pub(crate) fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amps)
    }

    pub(crate) fn from_dvector(n: usize, v: DVector<Complex64>) -> StateVector {
        StateVector {
            n,
            amps: v.as_slice().to_vec(),
        }
    }
}

/// The raw truncated-series hypothesis, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct UnnormalizedState(pub StateVector);

impl UnnormalizedState {
    pub fn normalize(&self) -> Result<StateVector> {
        self.0.normalized()
    }
}

/// Uniform draw from the 6^n stabilizer product ensemble.
pub fn sample_stabilizer_product<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
) -> (ProductStateLabel, StateVector) {
    let mut axes = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for _ in 0..n {
        let d = rng.random_range(0..6usize);
        axes.push(Axis::ALL[d / 2]);
        signs.push(d % 2 == 1);
    }
    let label = ProductStateLabel { axes, signs };
    let state = label.to_state();
    (label, state)
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::Capacity {
            what: "dense qubit count",
            size: n,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Spectral decomposition of a Hamiltonian, reusable for any evolution time.
#[derive(Debug, Clone)]
pub struct Spectral {
    n: usize,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl Spectral {
    pub fn new(h: &SparseHamiltonian) -> Result<Self> {
        check_dense(h.n())?;
        let eig = SymmetricEigen::new(to_dense(h)?);
        Ok(Spectral {
            n: h.n(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `e^{-i H t}`.
    pub fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, lambda) in self.eigenvalues.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -lambda * t);
            scaled.column_mut(j).apply(|z| *z *= phase);
        }
        scaled * v.adjoint()
    }
}

/// A fixed unitary applied to statevectors, e.g. the lab device's `e^{-iHt}`.
#[derive(Debug, Clone)]
pub struct Propagator {
    n: usize,
    matrix: DMatrix<Complex64>,
}

impl Propagator {
    pub fn exact(h: &SparseHamiltonian, t: f64) -> Result<Self> {
        let spectral = Spectral::new(h)?;
        Ok(Propagator {
            n: h.n(),
            matrix: spectral.propagator(t),
        })
    }

    /// Dense `sum_{j<=l} (-i t H0)^j / j!`, not unitary.
    pub fn taylor(h0: &SparseHamiltonian, t: f64, order: usize) -> Result<Self> {
        check_dense(h0.n())?;
        let dense = to_dense(h0)? * c64(0.0, -t);
        let dim = dense.nrows();
        let mut term = DMatrix::<Complex64>::identity(dim, dim);
        let mut sum = term.clone();
        for j in 1..=order {
            term = &term * &dense / c64(j as f64, 0.0);
            sum += &term;
        }
        Ok(Propagator {
            n: h0.n(),
            matrix: sum,
        })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        check_dims(self.n, psi.n)?;
        Ok(StateVector::from_dvector(
            self.n,
            &self.matrix * psi.to_dvector(),
        ))
    }
}

/// `e^{-iHt} psi` through the Hermitian eigendecomposition.
pub fn evolve_exact(h: &SparseHamiltonian, t: f64, psi: &StateVector) -> Result<StateVector> {
    check_dims(h.n(), psi.n)?;
    Propagator::exact(h, t)?.apply(psi)
}

/// `sum_{j=0}^{l} (-i t H0)^j / j! |psi0>` by repeated sparse application.
pub fn taylor_hypothesis(
    h0: &SparseHamiltonian,
    t: f64,
    psi0: &StateVector,
    order: usize,
) -> Result<UnnormalizedState> {
    check_dims(h0.n(), psi0.n)?;
    let mut term = psi0.amps.clone();
    let mut sum = term.clone();
    for j in 1..=order {
        let applied = h0.apply(&term)?;
        let f = c64(0.0, -t / j as f64);
        term = applied.into_iter().map(|a| a * f).collect();
        for (s, a) in sum.iter_mut().zip(&term) {
            *s += a;
        }
    }
    Ok(UnnormalizedState(StateVector {
        n: psi0.n,
        amps: sum,
    }))
}

/// Series tail bound `x^{l+1} / (l+1)! * 1/(1 - x/(l+2))` on the truncation
/// error of `e^{-iHt}` at order `l`, with `x = t M`. Infinite if the geometric
/// factor does not converge.
pub fn taylor_tail_bound(x: f64, order: usize) -> f64 {
    let ratio = x / (order as f64 + 2.0);
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    let mut lead = 1.0;
    for j in 1..=order + 1 {
        lead *= x / j as f64;
    }
    lead / (1.0 - ratio)
}

/// `|<psi|phi>|^2`.
pub fn fidelity(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    Ok(psi.inner(phi)?.norm_sqr().min(1.0))
}

/// `W(t) = e^{i H0 t} e^{-i H t}`.
pub fn interaction_unitary(
    h: &SparseHamiltonian,
    h0: &SparseHamiltonian,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    check_dims(h0.n(), h.n())?;
    let u0 = Spectral::new(h0)?.propagator(-t);
    let u = Spectral::new(h)?.propagator(t);
    Ok(u0 * u)
}

/// `w_P(t) = Tr(P W(t)) / 2^n`.
pub fn pauli_transfer_coefficient(
    h: &SparseHamiltonian,
    h0: &SparseHamiltonian,
    t: f64,
    p: &PauliString,
) -> Result<Complex64> {
    check_dims(h.n(), p.n())?;
    let w = interaction_unitary(h, h0, t)?;
    Ok(p.trace_product(&w) / (w.nrows() as f64))
}

/// `|w_I(t)|^2`, the entanglement fidelity of `W(t)` with the identity.
pub fn identity_transfer_sqr(h: &SparseHamiltonian, h0: &SparseHamiltonian, t: f64) -> Result<f64> {
    let w = interaction_unitary(h, h0, t)?;
    Ok((w.trace() / w.nrows() as f64).norm_sqr())
}

/// `sum_P 3^{-wt(P)} |w_P(t)|^2` over all `4^n` Pauli words.
pub fn expected_fidelity_pauli(h: &SparseHamiltonian, h0: &SparseHamiltonian, t: f64) -> Result<f64> {
    let n = h.n();
    let w = interaction_unitary(h, h0, t)?;
    let dim = w.nrows() as f64;
    let mut total = 0.0;
    for idx in 0..1usize << (2 * n) {
        let p = PauliString::from_index(n, idx);
        let wp = p.trace_product(&w) / dim;
        total += wp.norm_sqr() * 3f64.powi(-(p.weight() as i32));
    }
    Ok(total)
}
