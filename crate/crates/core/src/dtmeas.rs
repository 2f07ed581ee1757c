//! Single-copy state certification with adaptive single-qubit bases.
//!
//! One shot picks a pivot qubit `k`, measures the qubits before it in the
//! computational basis, measures every qubit after it in a basis where the
//! conditioned hypothesis is a phase state (both outcomes equally likely), and
//! finally measures the pivot in a basis containing the conditioned
//! hypothesis. The shot accepts iff that last outcome is the hypothesis.
//!
//! The hypothesis side is abstracted by [`DtPath`] so the same driver runs on a
//! dense statevector ([`DenseDtPath`]) or on a sum of product terms with
//! precomputed overlap tables ([`FactorizedDtPath`]).

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::pauli::{pauli_mul, PauliString, SparseHamiltonian};
use crate::qstate::{c64, Ket2, Mat2, ProductStateLabel, StateVector};

/// Unnormalized conditioned traces below this count as a forbidden branch.
pub const ZERO_BRANCH_TOL: f64 = 1e-14;

/// Largest n accepted by [`rejection_probability_exact`].
pub const EXACT_TREE_LIMIT: usize = 6;

/// Default cap on merged Pauli words in a [`ProductTermSum`].
pub const DEFAULT_TERM_BUDGET: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const KET0: Ket2 = [ONE, ZERO];
const KET1: Ket2 = [ZERO, ONE];

fn bra_ket(a: &Ket2, b: &Ket2) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

fn trace2(m: &Mat2) -> f64 {
    (m[0][0] + m[1][1]).re
}

/// Bloch vector of `rho / Tr(rho)`.
pub fn bloch_vector(rho: &Mat2) -> [f64; 3] {
    let tr = trace2(rho);
    let off = rho[0][1];
    [
        2.0 * off.re / tr,
        -2.0 * off.im / tr,
        (rho[0][0].re - rho[1][1].re) / tr,
    ]
}

/// An orthonormal single-qubit measurement basis; outcome `b` projects on `kets[b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBasis {
    pub kets: [Ket2; 2],
}

impl PhaseBasis {
    pub fn computational() -> Self {
        PhaseBasis { kets: [KET0, KET1] }
    }

    /// Eigenbasis of `a . sigma` for a unit vector `a`; outcome 0 is the +1 eigenket.
    pub fn along(a: [f64; 3]) -> Self {
        let theta = a[2].clamp(-1.0, 1.0).acos();
        let phi = a[1].atan2(a[0]);
        let (s, c) = (theta / 2.0).sin_cos();
        let e = Complex64::from_polar(1.0, phi);
        PhaseBasis {
            kets: [[c64(c, 0.0), e * s], [c64(s, 0.0), -e * c]],
        }
    }

    /// `{v, v_perp}` with `v_perp = (-conj(v1), conj(v0))`.
    pub fn containing(v: &Ket2) -> Self {
        PhaseBasis {
            kets: [*v, [-v[1].conj(), v[0].conj()]],
        }
    }
}

/// Measurement axis orthogonal to the Bloch vector `r`: `r x e_z` normalized,
/// `e_x` when `r` is along `e_z`, and the computational basis when `r ~ 0`.
pub fn choose_phase_basis(rho: &Mat2) -> PhaseBasis {
    let r = bloch_vector(rho);
    let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(len >= 1e-12) {
        return PhaseBasis::computational();
    }
    let perp = (r[0] * r[0] + r[1] * r[1]).sqrt();
    if perp < 1e-12 {
        return PhaseBasis::along([1.0, 0.0, 0.0]);
    }
    PhaseBasis::along([r[1] / perp, -r[0] / perp, 0.0])
}

/// Pure state `v` with `rho ~ |v><v|` (rank one), normalized.
fn principal_ket(rho: &Mat2) -> Ket2 {
    let j = if rho[0][0].re >= rho[1][1].re { 0 } else { 1 };
    let s = rho[j][j].re.sqrt();
    let mut v = [rho[0][j] / s, rho[1][j] / s];
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    v[0] /= norm;
    v[1] /= norm;
    v
}

/// Reduced operator of `target` after contracting every `fixed` qubit with its
/// ket and tracing out the rest. `None` when the trace is below
/// [`ZERO_BRANCH_TOL`].
pub fn conditioned_qubit_state(
    phi: &StateVector,
    fixed: &[(usize, Ket2)],
    target: usize,
) -> Result<Option<Mat2>> {
    let n = phi.n();
    if target >= n || fixed.iter().any(|(q, _)| *q >= n || *q == target) {
        return Err(Error::Parameter(format!(
            "bad conditioning: target {target}, fixed {:?} on {n} qubits",
            fixed.iter().map(|f| f.0).collect::<Vec<_>>()
        )));
    }
    let mut order: Vec<&(usize, Ket2)> = fixed.iter().collect();
    order.sort_by(|a, b| b.0.cmp(&a.0));
    let mut v = phi.clone();
    for (q, ket) in order {
        v = v.project_qubit(*q, ket);
    }
    let pos = target - fixed.iter().filter(|(q, _)| *q < target).count();
    let rho = v.reduced_qubit(pos);
    Ok((trace2(&rho) >= ZERO_BRANCH_TOL).then_some(rho))
}

/// Hypothesis-side conditioning used by the measurement driver.
///
/// Calls follow the protocol order: [`DtPath::begin`] once, then alternating
/// `reduced(j)` / `fix(j, ..)` for `j = k+1..n`, then `reduced(k)`.
pub trait DtPath {
    fn n(&self) -> usize;
    /// Condition on the computational outcomes `x` of qubits `0..pivot`.
    fn begin(&mut self, pivot: usize, x: &[u8]);
    /// Unnormalized reduced operator on `target`; unfixed qubits other than
    /// `target` are traced out. `None` on a forbidden branch.
    fn reduced(&self, target: usize) -> Option<Mat2>;
    /// Condition qubit `qubit` on `ket`.
    fn fix(&mut self, qubit: usize, ket: &Ket2);
}

/// [`DtPath`] over a dense normalized hypothesis vector.
#[derive(Debug, Clone)]
pub struct DenseDtPath<'a> {
    phi: &'a StateVector,
    current: StateVector,
    live: Vec<usize>,
}

impl<'a> DenseDtPath<'a> {
    pub fn new(phi: &'a StateVector) -> Self {
        DenseDtPath {
            phi,
            current: phi.clone(),
            live: (0..phi.n()).collect(),
        }
    }

    fn pos(&self, qubit: usize) -> usize {
        self.live
            .iter()
            .position(|&q| q == qubit)
            .expect("qubit already conditioned")
    }
}

impl DtPath for DenseDtPath<'_> {
    fn n(&self) -> usize {
        self.phi.n()
    }

    fn begin(&mut self, pivot: usize, x: &[u8]) {
        debug_assert_eq!(x.len(), pivot);
        let mut v = self.phi.clone();
        for &bit in x {
            v = v.project_qubit(0, if bit == 0 { &KET0 } else { &KET1 });
        }
        self.current = v;
        self.live = (pivot..self.phi.n()).collect();
    }

    fn reduced(&self, target: usize) -> Option<Mat2> {
        let rho = self.current.reduced_qubit(self.pos(target));
        (trace2(&rho) >= ZERO_BRANCH_TOL).then_some(rho)
    }

    fn fix(&mut self, qubit: usize, ket: &Ket2) {
        let pos = self.pos(qubit);
        self.current = self.current.project_qubit(pos, ket);
        self.live.remove(pos);
    }
}

/// Lab copy of the state, collapsed as qubits are measured.
#[derive(Debug, Clone)]
struct LabState {
    v: StateVector,
    live: Vec<usize>,
}

impl LabState {
    fn new(psi: &StateVector) -> Self {
        LabState {
            v: psi.clone(),
            live: (0..psi.n()).collect(),
        }
    }

    /// Outcome probabilities and post-measurement states for measuring
    /// `qubit` in `basis`.
    fn branches(&self, qubit: usize, basis: &PhaseBasis) -> [(f64, LabState); 2] {
        let pos = self.live.iter().position(|&q| q == qubit).unwrap();
        let mut live = self.live.clone();
        live.remove(pos);
        let parts = basis.kets.map(|k| self.v.project_qubit(pos, &k));
        let w = [parts[0].norm_sqr(), parts[1].norm_sqr()];
        let total = w[0] + w[1];
        let [a, b] = parts;
        [(a, w[0]), (b, w[1])].map(|(v, p)| {
            let v = if p > 0.0 {
                v.normalized().unwrap()
            } else {
                v
            };
            (
                p / total,
                LabState {
                    v,
                    live: live.clone(),
                },
            )
        })
    }

    fn measure<R: Rng + ?Sized>(&mut self, qubit: usize, basis: &PhaseBasis, rng: &mut R) -> u8 {
        let [(p0, s0), (_, s1)] = self.branches(qubit, basis);
        if rng.random::<f64>() < p0 {
            *self = s0;
            0
        } else {
            *self = s1;
            1
        }
    }

    fn last_ket(&self) -> Ket2 {
        debug_assert_eq!(self.v.n(), 1);
        let a = self.v.amplitudes();
        [a[0], a[1]]
    }
}

/// Outcome of one certification shot. `k` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtOutcomeRecord {
    pub k: usize,
    pub x: Vec<u8>,
    pub dt_outcomes: Vec<u8>,
    pub accept: bool,
}

impl DtOutcomeRecord {
    pub const CSV_HEADER: &'static str = "trial,k,x,l_bits,accept";

    pub fn is_consistent(&self, n: usize) -> bool {
        (1..=n).contains(&self.k) && self.x.len() == self.k - 1 && self.dt_outcomes.len() == n - self.k
    }

    pub fn csv_row(&self, trial: usize) -> String {
        let bits = |v: &[u8]| v.iter().map(|b| char::from(b'0' + b)).collect::<String>();
        format!(
            "{trial},{},{},{},{}",
            self.k,
            bits(&self.x),
            bits(&self.dt_outcomes),
            self.accept as u8
        )
    }
}

/// One shot: returns whether the lab state `psi` was accepted against the
/// hypothesis behind `path`. A branch the hypothesis forbids rejects.
pub fn certify_state_once<P: DtPath, R: Rng + ?Sized>(
    psi: &StateVector,
    path: &mut P,
    rng: &mut R,
) -> Result<(bool, DtOutcomeRecord)> {
    let n = psi.n();
    check_dims(path.n(), n)?;
    let pivot = rng.random_range(0..n);
    let mut lab = LabState::new(psi);
    let comp = PhaseBasis::computational();
    let x: Vec<u8> = (0..pivot).map(|q| lab.measure(q, &comp, rng)).collect();
    let mut record = DtOutcomeRecord {
        k: pivot + 1,
        x,
        dt_outcomes: Vec::with_capacity(n - pivot - 1),
        accept: false,
    };
    path.begin(pivot, &record.x);
    for j in pivot + 1..n {
        let Some(rho) = path.reduced(j) else {
            // Hypothesis forbids the observed branch; pad the record.
            record.dt_outcomes.resize(n - pivot - 1, 0);
            return Ok((false, record));
        };
        let basis = choose_phase_basis(&rho);
        let b = lab.measure(j, &basis, rng);
        record.dt_outcomes.push(b);
        path.fix(j, &basis.kets[b as usize]);
    }
    let Some(rho) = path.reduced(pivot) else {
        return Ok((false, record));
    };
    let target = principal_ket(&rho);
    let p_accept = bra_ket(&target, &lab.last_ket()).norm_sqr();
    record.accept = rng.random::<f64>() < p_accept;
    Ok((record.accept, record))
}

/// Exact rejection probability of [`certify_state_once`] on a dense
/// hypothesis, by enumerating every pivot and measurement branch.
pub fn rejection_probability_exact(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    let n = psi.n();
    check_dims(n, phi.n())?;
    if n > EXACT_TREE_LIMIT {
        return Err(Error::Capacity {
            what: "exact measurement tree qubits",
            size: n,
            limit: EXACT_TREE_LIMIT,
        });
    }
    let mut total = 0.0;
    for pivot in 0..n {
        total += pivot_rejection(psi, &DenseDtPath::new(phi), pivot);
    }
    Ok(total / n as f64)
}

fn pivot_rejection<P: DtPath + Clone>(psi: &StateVector, path: &P, pivot: usize) -> f64 {
    let comp = PhaseBasis::computational();
    let mut stack = vec![(LabState::new(psi), Vec::<u8>::new(), 1.0)];
    let mut total = 0.0;
    while let Some((lab, x, w)) = stack.pop() {
        if x.len() == pivot {
            let mut p = path.clone();
            p.begin(pivot, &x);
            total += w * dt_rejection(lab, p, pivot + 1, pivot);
            continue;
        }
        let q = x.len();
        for (b, (pb, next)) in lab.branches(q, &comp).into_iter().enumerate() {
            if pb > 0.0 {
                let mut xb = x.clone();
                xb.push(b as u8);
                stack.push((next, xb, w * pb));
            }
        }
    }
    total
}

fn dt_rejection<P: DtPath + Clone>(lab: LabState, path: P, next: usize, pivot: usize) -> f64 {
    if next == path.n() {
        return match path.reduced(pivot) {
            None => 1.0,
            Some(rho) => 1.0 - bra_ket(&principal_ket(&rho), &lab.last_ket()).norm_sqr(),
        };
    }
    let Some(rho) = path.reduced(next) else {
        return 1.0;
    };
    let basis = choose_phase_basis(&rho);
    let mut total = 0.0;
    for (b, (pb, child)) in lab.branches(next, &basis).into_iter().enumerate() {
        if pb > 0.0 {
            let mut p = path.clone();
            p.fix(next, &basis.kets[b]);
            total += pb * dt_rejection(child, p, next + 1, pivot);
        }
    }
    total
}

/// One product term `coeff * (x)_i |kets[i]>`; the kets are not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub coeff: Complex64,
    pub kets: Vec<Ket2>,
}

/// A vector stored as a sum of product states.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTermSum {
    n: usize,
    terms: Vec<ProductTerm>,
}

impl ProductTermSum {
    pub fn new(n: usize, terms: Vec<ProductTerm>) -> Result<Self> {
        for t in &terms {
            check_dims(n, t.kets.len())?;
        }
        Ok(ProductTermSum { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    /// Number of product terms (Gamma).
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_dense(&self) -> StateVector {
        let mut amps = vec![ZERO; 1 << self.n];
        for t in &self.terms {
            let p = StateVector::product(&t.kets);
            for (a, b) in amps.iter_mut().zip(p.amplitudes()) {
                *a += t.coeff * b;
            }
        }
        StateVector::from_amplitudes(amps).expect("power-of-two length")
    }
}

/// Expand `sum_{j<=l} (-i t H0)^j / j!` as a merged Pauli polynomial and apply
/// each word to the product input.
pub fn build_product_term_sum(
    h0: &SparseHamiltonian,
    t: f64,
    order: usize,
    label: &ProductStateLabel,
    budget: usize,
) -> Result<ProductTermSum> {
    let n = h0.n();
    check_dims(n, label.n())?;
    let over_budget = |size: usize| Error::Capacity {
        what: "merged Pauli words in the truncated series",
        size,
        limit: budget,
    };
    let mut poly: BTreeMap<PauliString, Complex64> = BTreeMap::new();
    poly.insert(PauliString::identity(n), ONE);
    let mut term = poly.clone();
    for j in 1..=order {
        let scale = c64(0.0, -t / j as f64);
        let mut next: BTreeMap<PauliString, Complex64> = BTreeMap::new();
        for (p, a) in &term {
            for (q, mu) in h0.terms() {
                let (r, phase) = pauli_mul(p, q)?;
                *next.entry(r).or_insert(ZERO) += a * phase.to_complex() * mu * scale;
            }
        }
        next.retain(|_, c| *c != ZERO);
        if next.len() > budget {
            return Err(over_budget(next.len()));
        }
        for (p, c) in &next {
            *poly.entry(*p).or_insert(ZERO) += c;
        }
        if poly.len() > budget {
            return Err(over_budget(poly.len()));
        }
        term = next;
    }
    poly.retain(|_, c| *c != ZERO);
    let inputs = label.kets();
    let terms = poly
        .into_iter()
        .map(|(p, coeff)| ProductTerm {
            coeff,
            kets: inputs
                .iter()
                .zip(p.letters())
                .map(|(k, l)| {
                    let m = l.matrix();
                    [m[0][0] * k[0] + m[0][1] * k[1], m[1][0] * k[0] + m[1][1] * k[1]]
                })
                .collect(),
        })
        .collect();
    ProductTermSum::new(n, terms)
}

fn sandwich(a: &Ket2, m: &Mat2, b: &Ket2) -> Complex64 {
    let mb = [m[0][0] * b[0] + m[0][1] * b[1], m[1][0] * b[0] + m[1][1] * b[1]];
    bra_ket(a, &mb)
}

/// `<phi|Omega|phi>` for `Omega = (x)_i omega_i` with Hermitian factors;
/// `None` stands for the identity. Each unordered term pair is visited once.
pub fn factorized_expectation(phi: &ProductTermSum, omega: &[Option<Mat2>]) -> Result<f64> {
    check_dims(phi.n, omega.len())?;
    let terms = &phi.terms;
    let factor = |g: usize, h: usize| -> Complex64 {
        let mut acc = terms[g].coeff.conj() * terms[h].coeff;
        for (i, w) in omega.iter().enumerate() {
            let (a, b) = (&terms[g].kets[i], &terms[h].kets[i]);
            acc *= match w {
                Some(m) => sandwich(a, m, b),
                None => bra_ket(a, b),
            };
        }
        acc
    };
    let mut total = 0.0;
    for g in 0..terms.len() {
        total += factor(g, g).re;
        for h in g + 1..terms.len() {
            total += 2.0 * factor(g, h).re;
        }
    }
    Ok(total)
}

/// Projector `|v><v|`.
pub fn projector(v: &Ket2) -> Mat2 {
    [
        [v[0] * v[0].conj(), v[0] * v[1].conj()],
        [v[1] * v[0].conj(), v[1] * v[1].conj()],
    ]
}

/// Probe kets `|0>, |+>, |+i>` used to read off a reduced operator.
fn probe_kets() -> [Ket2; 3] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [KET0, [c64(h, 0.0), c64(h, 0.0)], [c64(h, 0.0), c64(0.0, h)]]
}

/// Rebuild a reduced 2x2 operator from `<0|rho|0>`, `<+|rho|+>`,
/// `<+i|rho|+i>` and `Tr(rho)`.
fn operator_from_probes(n0: f64, n_plus: f64, n_plus_i: f64, tr: f64) -> Mat2 {
    let off = c64(n_plus - tr / 2.0, tr / 2.0 - n_plus_i);
    [[c64(n0, 0.0), off], [off.conj(), c64(tr - n0, 0.0)]]
}

type Table = Vec<Complex64>;

/// [`DtPath`] over a [`ProductTermSum`] with precomputed overlap tables.
///
/// Construction builds, per qubit, the Gamma x Gamma Gram table of the term
/// kets and suffix products of those tables. Each `fix` then folds one new
/// projector factor into a running prefix, so a DT step costs one fresh
/// overlap per term plus a pass over the pair table.
#[derive(Debug, Clone)]
pub struct FactorizedDtPath {
    n: usize,
    gamma: usize,
    kets: Vec<Vec<Ket2>>,
    gram: Vec<Table>,
    suffix: Vec<Table>,
    norm_sqr: f64,
    base: Table,
    pivot: usize,
    next: usize,
    prefix: Table,
}

impl FactorizedDtPath {
    pub fn new(phi: &ProductTermSum) -> Self {
        let n = phi.n;
        let gamma = phi.len();
        let kets: Vec<Vec<Ket2>> = (0..n)
            .map(|i| phi.terms.iter().map(|t| t.kets[i]).collect())
            .collect();
        let pair = |f: &dyn Fn(usize, usize) -> Complex64| -> Table {
            (0..gamma * gamma).map(|ix| f(ix / gamma, ix % gamma)).collect()
        };
        let gram: Vec<Table> = kets
            .iter()
            .map(|col| pair(&|g, h| bra_ket(&col[g], &col[h])))
            .collect();
        let mut suffix = vec![vec![ONE; gamma * gamma]; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1].iter().zip(&gram[i]).map(|(a, b)| a * b).collect();
        }
        let weights = pair(&|g, h| phi.terms[g].coeff.conj() * phi.terms[h].coeff);
        let norm_sqr = weights.iter().zip(&suffix[0]).map(|(w, s)| w * s).sum::<Complex64>().re;
        FactorizedDtPath {
            n,
            gamma,
            kets,
            gram,
            suffix,
            norm_sqr,
            prefix: weights.clone(),
            base: weights,
            pivot: 0,
            next: 0,
        }
    }

    fn weights(&self, phi_terms: impl Fn(usize, usize) -> Complex64) -> Table {
        (0..self.gamma * self.gamma)
            .map(|ix| phi_terms(ix / self.gamma, ix % self.gamma))
            .collect()
    }

    /// `conj(<v|a_g>) <v|a_h>` over all pairs for the kets of `qubit`.
    fn projector_table(&self, qubit: usize, v: &Ket2) -> Table {
        let amp: Vec<Complex64> = self.kets[qubit].iter().map(|a| bra_ket(v, a)).collect();
        self.weights(|g, h| amp[g].conj() * amp[h])
    }

    /// `sum_{g,h} prefix * others * conj(<v|a_g>) <v|a_h>` on `target`.
    fn contract(&self, others: &Table, target: usize, v: &Ket2) -> f64 {
        let amp: Vec<Complex64> = self.kets[target].iter().map(|a| bra_ket(v, a)).collect();
        let mut acc = ZERO;
        for g in 0..self.gamma {
            let ag = amp[g].conj();
            let row = g * self.gamma;
            for h in 0..self.gamma {
                acc += self.prefix[row + h] * others[row + h] * ag * amp[h];
            }
        }
        acc.re
    }

    fn contract_trace(&self, others: &Table, target: usize) -> f64 {
        self.prefix
            .iter()
            .zip(others)
            .zip(&self.gram[target])
            .map(|((p, o), g)| p * o * g)
            .sum::<Complex64>()
            .re
    }

    /// The DT-step quantities `n^q_g` for `q in {0,1}` and `g in {0, +, +i}`
    /// on the next DT qubit, with qubits after it traced out.
    pub fn dt_step_quantities(&self) -> [[f64; 3]; 2] {
        let target = self.next;
        assert!(target > self.pivot && target < self.n, "no DT step pending");
        let probes = probe_kets();
        [KET0, KET1].map(|q| {
            let qtab = self.projector_table(self.pivot, &q);
            let others: Table = qtab
                .iter()
                .zip(&self.suffix[target + 1])
                .map(|(a, b)| a * b)
                .collect();
            probes.map(|g| self.contract(&others, target, &g))
        })
    }
}

impl DtPath for FactorizedDtPath {
    fn n(&self) -> usize {
        self.n
    }

    fn begin(&mut self, pivot: usize, x: &[u8]) {
        debug_assert_eq!(x.len(), pivot);
        let mut prefix = self.base.clone();
        for (q, &bit) in x.iter().enumerate() {
            let tab = self.projector_table(q, if bit == 0 { &KET0 } else { &KET1 });
            for (p, t) in prefix.iter_mut().zip(&tab) {
                *p *= t;
            }
        }
        self.prefix = prefix;
        self.pivot = pivot;
        self.next = pivot + 1;
    }

    fn reduced(&self, target: usize) -> Option<Mat2> {
        let threshold = ZERO_BRANCH_TOL * self.norm_sqr;
        let probes = probe_kets();
        let rho = if target == self.pivot {
            // All other qubits conditioned: unfixed = pivot and qubits >= next.
            let others = &self.suffix[self.next];
            let [n0, np, ni] = probes.map(|g| self.contract(others, target, &g));
            operator_from_probes(n0, np, ni, self.contract_trace(others, target))
        } else {
            assert_eq!(target, self.next, "DT qubits must be conditioned in order");
            let q = self.dt_step_quantities();
            let others: Table = self.gram[self.pivot]
                .iter()
                .zip(&self.suffix[target + 1])
                .map(|(a, b)| a * b)
                .collect();
            let tr = self.contract_trace(&others, target);
            operator_from_probes(q[0][0] + q[1][0], q[0][1] + q[1][1], q[0][2] + q[1][2], tr)
        };
        (trace2(&rho) >= threshold).then_some(rho)
    }

    fn fix(&mut self, qubit: usize, ket: &Ket2) {
        assert_eq!(qubit, self.next, "DT qubits must be conditioned in order");
        let tab = self.projector_table(qubit, ket);
        for (p, t) in self.prefix.iter_mut().zip(&tab) {
            *p *= t;
        }
        self.next += 1;
    }
}
