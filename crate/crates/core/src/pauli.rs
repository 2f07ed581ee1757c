//! Pauli strings and Pauli-sparse traceless Hamiltonians.
//!
//! Qubits are indexed from 0 in code; qubit 0 is the most significant bit of
//! a dense amplitude index. A [`PauliString`] packs its letters into two bit
//! masks (X part and Z part) so products and commutation checks are O(n / 64).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dims, Error, Result};

/// Largest qubit count for which dense matrices are formed.
pub const DENSE_LIMIT: usize = 12;

/// Largest qubit count for which constructors compute the exact operator norm.
const EXACT_NORM_LIMIT: usize = 10;

const MAX_QUBITS: usize = 64;

/// A single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    /// 2x2 matrix in the computational basis, row-major.
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Letter::I => [[l, o], [o, l]],
            Letter::X => [[o, l], [l, o]],
            Letter::Y => [[o, -i], [i, o]],
            Letter::Z => [[l, o], [o, -l]],
        }
    }
}

/// A power of `i`: one of +1, +i, -1, -i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_power(k: u32) -> Self {
        Phase((k % 4) as u8)
    }

    pub fn power(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

/// An n-qubit Pauli word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "at most {MAX_QUBITS} qubits supported");
        PauliString { n, x: 0, z: 0 }
    }

    pub fn from_letters(letters: &[Letter]) -> Self {
        let mut p = PauliString::identity(letters.len());
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l);
        }
        p
    }

    /// A single non-identity letter on `qubit`.
    pub fn single(n: usize, qubit: usize, letter: Letter) -> Self {
        let mut p = PauliString::identity(n);
        p.set(qubit, letter);
        p
    }

    /// Index `0..4^n` into the full Pauli basis, base-4 digits I=0,X=1,Y=2,Z=3
    /// with qubit 0 as the most significant digit.
    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut p = PauliString::identity(n);
        for q in (0..n).rev() {
            let letter = [Letter::I, Letter::X, Letter::Y, Letter::Z][index % 4];
            p.set(q, letter);
            index /= 4;
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        Letter::from_bits(self.x >> qubit & 1 == 1, self.z >> qubit & 1 == 1)
    }

    pub fn set(&mut self, qubit: usize, letter: Letter) {
        assert!(qubit < self.n);
        let (xb, zb) = letter.bits();
        let m = 1u64 << qubit;
        self.x = if xb { self.x | m } else { self.x & !m };
        self.z = if zb { self.z | m } else { self.z & !m };
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        (0..self.n).map(|q| self.letter(q))
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// Bit masks over dense amplitude indices: positions flipped by the word,
    /// and positions where it carries a Z component.
    fn index_masks(&self) -> (usize, usize) {
        let mut xm = 0usize;
        let mut zm = 0usize;
        for q in 0..self.n {
            let bit = 1usize << (self.n - 1 - q);
            if self.x >> q & 1 == 1 {
                xm |= bit;
            }
            if self.z >> q & 1 == 1 {
                zm |= bit;
            }
        }
        (xm, zm)
    }

    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// Column action: `P |j> = amp * |row>`.
    pub(crate) fn dense_action(&self) -> impl Fn(usize) -> (usize, Complex64) {
        let (xm, zm) = self.index_masks();
        let base = Phase::from_power(self.y_count());
        move |j| {
            let sign = if (j & zm).count_ones() % 2 == 1 {
                Phase::MINUS_ONE
            } else {
                Phase::ONE
            };
            (j ^ xm, (base * sign).to_complex())
        }
    }

    /// `Tr(P A)` for a dense matrix `A` of matching size.
    pub fn trace_product(&self, a: &DMatrix<Complex64>) -> Complex64 {
        let act = self.dense_action();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..a.ncols() {
            // (P A)_{rr} summed: P_{r,m} A_{m,r}, with r = m ^ x.
            let (r, amp) = act(m);
            acc += amp * a[(m, r)];
        }
        acc
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n;
        let mut m = DMatrix::zeros(dim, dim);
        let act = self.dense_action();
        for j in 0..dim {
            let (r, amp) = act(j);
            m[(r, j)] = amp;
        }
        m
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliString {
    /// Lexicographic on letters, qubit 0 first, with I < X < Y < Z.
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.letters().cmp(other.letters()))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.letters() {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_QUBITS {
            return Err(Error::Parameter(format!("bad Pauli word length: {s:?}")));
        }
        let letters = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Letter::I),
                'X' => Ok(Letter::X),
                'Y' => Ok(Letter::Y),
                'Z' => Ok(Letter::Z),
                other => Err(Error::Parameter(format!("bad Pauli letter {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliString::from_letters(&letters))
    }
}

/// Product `A * B = phase * C`.
pub fn pauli_mul(a: &PauliString, b: &PauliString) -> Result<(PauliString, Phase)> {
    check_dims(a.n, b.n)?;
    let mut phase = Phase::ONE;
    for q in 0..a.n {
        phase = phase * letter_product_phase(a.letter(q), b.letter(q));
    }
    Ok((
        PauliString {
            n: a.n,
            x: a.x ^ b.x,
            z: a.z ^ b.z,
        },
        phase,
    ))
}

fn letter_product_phase(a: Letter, b: Letter) -> Phase {
    use Letter::*;
    match (a, b) {
        (X, Y) | (Y, Z) | (Z, X) => Phase::I,
        (Y, X) | (Z, Y) | (X, Z) => Phase::MINUS_I,
        _ => Phase::ONE,
    }
}

/// Whether constructors enforce `|mu_P| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientPolicy {
    #[default]
    Strict,
    Relaxed,
}

/// A traceless real combination of Pauli words with a declared operator-norm bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    n: usize,
    terms: BTreeMap<PauliString, f64>,
    norm_bound: f64,
}

/// Result of a constructor: the Hamiltonian plus the identity coefficient
/// that was removed to make it traceless.
#[derive(Debug, Clone, PartialEq)]
pub struct Built {
    pub hamiltonian: SparseHamiltonian,
    pub dropped_identity: f64,
}

impl SparseHamiltonian {
    pub fn zero(n: usize) -> Self {
        SparseHamiltonian {
            n,
            terms: BTreeMap::new(),
            norm_bound: 0.0,
        }
    }

    /// Sums duplicate words, drops exact zeros and the identity component.
    /// The norm bound is the exact operator norm for small n, and the
    /// coefficient 1-norm otherwise.
    pub fn from_terms<I>(n: usize, terms: I, policy: CoefficientPolicy) -> Result<Built>
    where
        I: IntoIterator<Item = (PauliString, f64)>,
    {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Parameter(format!("qubit count {n} out of range")));
        }
        let mut map: BTreeMap<PauliString, f64> = BTreeMap::new();
        for (p, c) in terms {
            check_dims(n, p.n)?;
            if !c.is_finite() {
                return Err(Error::Parameter(format!("non-finite coefficient on {p}")));
            }
            *map.entry(p).or_insert(0.0) += c;
        }
        let dropped_identity = map.remove(&PauliString::identity(n)).unwrap_or(0.0);
        map.retain(|_, c| *c != 0.0);
        if policy == CoefficientPolicy::Strict {
            if let Some((p, &c)) = map.iter().find(|(_, c)| c.abs() > 1.0) {
                return Err(Error::Coefficient {
                    word: p.to_string(),
                    value: c,
                });
            }
        }
        let mut h = SparseHamiltonian {
            n,
            terms: map,
            norm_bound: 0.0,
        };
        h.norm_bound = if n <= EXACT_NORM_LIMIT {
            operator_norm(&h)?
        } else {
            h.coefficient_l1()
        };
        Ok(Built {
            hamiltonian: h,
            dropped_identity,
        })
    }

    /// Convenience for parsing `[("XZI", 0.5), ...]`.
    pub fn from_words(n: usize, words: &[(&str, f64)], policy: CoefficientPolicy) -> Result<Self> {
        let terms = words
            .iter()
            .map(|(w, c)| Ok((w.parse::<PauliString>()?, *c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseHamiltonian::from_terms(n, terms, policy)?.hamiltonian)
    }

    /// Replace the norm bound with a declared `m`, rejecting values below the
    /// exact norm when that is computable.
    pub fn with_norm_bound(mut self, m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Parameter(format!("norm bound must be positive, got {m}")));
        }
        if self.n <= EXACT_NORM_LIMIT {
            let actual = operator_norm(&self)?;
            if actual > m * (1.0 + 1e-9) {
                return Err(Error::NormBound { declared: m, actual });
            }
        }
        self.norm_bound = m;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Declared operator-norm bound M.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, f64)> {
        self.terms.iter().map(|(p, &c)| (p, c))
    }

    pub fn coefficient(&self, p: &PauliString) -> f64 {
        self.terms.get(p).copied().unwrap_or(0.0)
    }

    /// Sparsity: number of nonzero Pauli terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient_l1(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    /// Normalized Frobenius norm, the Euclidean norm of the coefficients.
    pub fn frobenius_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `self + scale * other`; the bound is the triangle-inequality bound.
    pub fn add_scaled(&self, other: &SparseHamiltonian, scale: f64) -> Result<SparseHamiltonian> {
        check_dims(self.n, other.n)?;
        let mut terms = self.terms.clone();
        for (p, c) in &other.terms {
            *terms.entry(*p).or_insert(0.0) += scale * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(SparseHamiltonian {
            n: self.n,
            terms,
            norm_bound: self.norm_bound + scale.abs() * other.norm_bound,
        })
    }

    pub fn scaled(&self, scale: f64) -> SparseHamiltonian {
        let mut terms = self.terms.clone();
        for c in terms.values_mut() {
            *c *= scale;
        }
        terms.retain(|_, c| *c != 0.0);
        SparseHamiltonian {
            n: self.n,
            terms,
            norm_bound: scale.abs() * self.norm_bound,
        }
    }

    /// Sparse action on a dense amplitude vector.
    pub fn apply(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dims(1 << self.n, amps.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (p, &c) in &self.terms {
            let act = p.dense_action();
            for (j, &a) in amps.iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let (r, amp) = act(j);
                out[r] += amp * a * c;
            }
        }
        Ok(out)
    }

    /// Serialize as the text record list read by [`SparseHamiltonian::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!("n {}\nM {:e}\n", self.n, self.norm_bound);
        for (p, c) in &self.terms {
            s.push_str(&format!("{p} {c:e}\n"));
        }
        s
    }

    /// Parse the text record list: `n <qubits>`, `M <bound>`, then one
    /// `<word> <coefficient>` per line. `#` starts a comment.
    pub fn parse(text: &str, policy: CoefficientPolicy) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut m: Option<f64> = None;
        let mut terms = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let val = parts.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected two fields in {line:?}"),
            })?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("trailing fields in {line:?}"),
                });
            }
            let parse_f = |v: &str| {
                v.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("{v:?}: {e}"),
                })
            };
            match key {
                "n" => {
                    n = Some(val.parse().map_err(|e| Error::Parse {
                        line: line_no,
                        msg: format!("{val:?}: {e}"),
                    })?)
                }
                "M" => m = Some(parse_f(val)?),
                word => {
                    let expected = n.ok_or(Error::Parse {
                        line: line_no,
                        msg: "term before the `n` header".into(),
                    })?;
                    let p: PauliString = word.parse().map_err(|e: Error| Error::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?;
                    if p.n() != expected {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("word {word} has {} letters, expected {expected}", p.n()),
                        });
                    }
                    terms.push((p, parse_f(val)?));
                }
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing `n` header".into(),
        })?;
        let h = SparseHamiltonian::from_terms(n, terms, policy)?.hamiltonian;
        match m {
            Some(m) if m == 0.0 && h.is_empty() => Ok(h),
            Some(m) => h.with_norm_bound(m),
            None => Ok(h),
        }
    }
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

/// Dense `sum_P mu_P P`.
pub fn to_dense(h: &SparseHamiltonian) -> Result<DMatrix<Complex64>> {
    check_dense(h.n)?;
    let dim = 1usize << h.n;
    let mut m = DMatrix::zeros(dim, dim);
    for (p, &c) in &h.terms {
        let act = p.dense_action();
        for j in 0..dim {
            let (r, amp) = act(j);
            m[(r, j)] += amp * c;
        }
    }
    Ok(m)
}

/// Project a dense operator onto the Pauli basis, keeping the real parts of
/// `Tr(P A) / 2^n`. The identity component is returned separately.
pub fn from_dense(a: &DMatrix<Complex64>) -> Result<(SparseHamiltonian, f64)> {
    let dim = a.nrows();
    if dim != a.ncols() || !dim.is_power_of_two() || dim < 2 {
        return Err(Error::Parameter(format!(
            "expected a square 2^n matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = dim.trailing_zeros() as usize;
    check_dense(n)?;
    let scale = 1.0 / dim as f64;
    let terms: Vec<_> = (0..1usize << (2 * n))
        .map(|i| {
            let p = PauliString::from_index(n, i);
            (p, p.trace_product(a).re * scale)
        })
        .collect();
    let built = SparseHamiltonian::from_terms(n, terms, CoefficientPolicy::Relaxed)?;
    Ok((built.hamiltonian, built.dropped_identity))
}

/// `||H - H0||_F` in the normalized Frobenius norm.
pub fn frobenius_distance(h: &SparseHamiltonian, h0: &SparseHamiltonian) -> Result<f64> {
    Ok(h.add_scaled(h0, -1.0)?.frobenius_norm())
}

/// Largest absolute eigenvalue of the dense matrix.
pub fn operator_norm(h: &SparseHamiltonian) -> Result<f64> {
    if h.is_empty() {
        return Ok(0.0);
    }
    let dense = to_dense(h)?;
    let eig = dense.symmetric_eigenvalues();
    Ok(eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Parameters of the Rydberg-atom chain
/// `Omega/2 sum X_i - Delta sum N_i + Omega sum_{i<j} (R_b / (a |i-j|))^6 N_i N_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RydbergParams {
    pub omega: f64,
    pub delta: f64,
    pub blockade_radius: f64,
    pub spacing: f64,
}

impl Default for RydbergParams {
    fn default() -> Self {
        RydbergParams {
            omega: 1.0,
            delta: 2.5,
            blockade_radius: 1.5,
            spacing: 1.0,
        }
    }
}

/// Expands `N_i = (I - Z_i)/2`, drops the identity, sets M to the exact norm.
/// Interaction coefficients routinely exceed 1, so the result is relaxed.
pub fn rydberg_hamiltonian(n: usize, params: RydbergParams) -> Result<SparseHamiltonian> {
    if n == 0 {
        return Err(Error::Parameter("Rydberg chain needs n >= 1".into()));
    }
    if !(params.spacing > 0.0) {
        return Err(Error::Parameter("lattice spacing must be positive".into()));
    }
    let RydbergParams {
        omega,
        delta,
        blockade_radius,
        spacing,
    } = params;
    let mut terms = Vec::new();
    for i in 0..n {
        terms.push((PauliString::single(n, i, Letter::X), omega / 2.0));
        // -Delta N_i = -Delta/2 I + Delta/2 Z_i
        terms.push((PauliString::single(n, i, Letter::Z), delta / 2.0));
        terms.push((PauliString::identity(n), -delta / 2.0));
    }
    for i in 0..n {
        for j in i + 1..n {
            let v = omega * (blockade_radius / (spacing * (j - i) as f64)).powi(6);
            let quarter = v / 4.0;
            let mut zz = PauliString::identity(n);
            zz.set(i, Letter::Z);
            zz.set(j, Letter::Z);
            terms.push((PauliString::identity(n), quarter));
            terms.push((PauliString::single(n, i, Letter::Z), -quarter));
            terms.push((PauliString::single(n, j, Letter::Z), -quarter));
            terms.push((zz, quarter));
        }
    }
    let mut h = SparseHamiltonian::from_terms(n, terms, CoefficientPolicy::Relaxed)?.hamiltonian;
    if n > EXACT_NORM_LIMIT && n <= DENSE_LIMIT {
        h.norm_bound = operator_norm(&h)?;
    }
    Ok(h)
}
