//! Brute-force reference implementations for tests.
//!
//! Nothing here calls the library's simulation code: Hamiltonians are rebuilt
//! from Kronecker products, evolutions use a scaled Taylor series, and the
//! measurement protocol is re-derived from dense projectors.

#![allow(dead_code)]

use hamcert::pauli::SparseHamiltonian;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const TREE_BUDGET: usize = 6;
pub const ENSEMBLE_BUDGET: usize = 3;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli2(letter: char) -> CMat {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match letter {
        'I' => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        'X' => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        'Z' => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("bad letter {letter}"),
    }
}

/// Kronecker product of per-qubit factors, qubit 0 leftmost.
pub fn kron_all(factors: &[CMat]) -> CMat {
    factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

pub fn word_matrix(word: &str) -> CMat {
    let f: Vec<CMat> = word.chars().map(pauli2).collect();
    kron_all(&f)
}

/// Dense matrix rebuilt from the printed Pauli words.
pub fn dense_hamiltonian(h: &SparseHamiltonian) -> CMat {
    let dim = 1usize << h.n();
    let mut m = CMat::zeros(dim, dim);
    for (p, mu) in h.terms() {
        m += word_matrix(&p.to_string()) * c(mu, 0.0);
    }
    m
}

/// `exp(A)` by scaling and squaring with a degree-30 Taylor polynomial.
pub fn expm(a: &CMat) -> CMat {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = (norm.log2().ceil().max(0.0) as u32) + 2;
    let scaled = a / c(2f64.powi(squarings as i32), 0.0);
    let dim = a.nrows();
    let mut term = CMat::identity(dim, dim);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / c(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `exp(-i t H)`.
pub fn evolution(h: &SparseHamiltonian, t: f64) -> CMat {
    expm(&(dense_hamiltonian(h) * c(0.0, -t)))
}

/// The six single-qubit stabilizer states.
pub fn stabilizer_kets() -> [CVec; 6] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = |a: C64, b: C64| CVec::from_vec(vec![a, b]);
    [
        v(c(1.0, 0.0), c(0.0, 0.0)),
        v(c(0.0, 0.0), c(1.0, 0.0)),
        v(c(h, 0.0), c(h, 0.0)),
        v(c(h, 0.0), c(-h, 0.0)),
        v(c(h, 0.0), c(0.0, h)),
        v(c(h, 0.0), c(0.0, -h)),
    ]
}

pub fn kron_vec(parts: &[CVec]) -> CVec {
    parts
        .iter()
        .skip(1)
        .fold(parts[0].clone(), |acc, p| acc.kronecker(p))
}

/// All 6^n stabilizer product states, in no particular order.
pub fn stabilizer_ensemble(n: usize) -> Vec<CVec> {
    let kets = stabilizer_kets();
    let mut out = vec![CVec::from_element(1, c(1.0, 0.0))];
    for _ in 0..n {
        out = out
            .iter()
            .flat_map(|v| kets.iter().map(move |k| v.kronecker(k)))
            .collect();
    }
    out
}

/// Exact average of `|<psi0| e^{iH0t} e^{-iHt} |psi0>|^2` over the ensemble.
pub fn ensemble_average_fidelity(h: &SparseHamiltonian, h0: &SparseHamiltonian, t: f64) -> f64 {
    assert!(h.n() <= ENSEMBLE_BUDGET, "ensemble oracle budget exceeded");
    let w = evolution(h0, -t) * evolution(h, t);
    let states = stabilizer_ensemble(h.n());
    let total: f64 = states
        .iter()
        .map(|psi| (psi.adjoint() * &w * psi)[(0, 0)].norm_sqr())
        .sum();
    total / states.len() as f64
}

/// `sum_{j<=l} (-i t H0)^j / j! psi0`, dense.
pub fn taylor_state(h0: &SparseHamiltonian, t: f64, psi0: &CVec, order: usize) -> CVec {
    let a = dense_hamiltonian(h0) * c(0.0, -t);
    let mut term = psi0.clone();
    let mut sum = term.clone();
    for j in 1..=order {
        term = &a * &term / c(j as f64, 0.0);
        sum += &term;
    }
    sum
}

/// Largest |eigenvalue| of a Hermitian matrix: Rayleigh quotient of `A^2`
/// under power iteration.
pub fn power_norm(a: &CMat) -> f64 {
    let dim = a.nrows();
    let a2 = a * a;
    let mut v = CVec::from_fn(dim, |i, _| c(1.0 + 0.37 * i as f64, 0.11 * (i % 3) as f64));
    v /= c(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = &a2 * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dotc(&w).re;
        v = w / c(norm, 0.0);
    }
    lambda.max(0.0).sqrt()
}

fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

fn basis_ket(bit: usize) -> CVec {
    let mut v = CVec::zeros(2);
    v[bit] = c(1.0, 0.0);
    v
}

/// `(I + a.sigma)/2` and `(I - a.sigma)/2`.
fn axis_projectors(a: [f64; 3]) -> [CMat; 2] {
    let s = pauli2('X') * c(a[0], 0.0) + pauli2('Y') * c(a[1], 0.0) + pauli2('Z') * c(a[2], 0.0);
    let id = CMat::identity(2, 2);
    [(&id + &s) * c(0.5, 0.0), (&id - &s) * c(0.5, 0.0)]
}

/// Partial trace of `rho` onto qubit `q` of `n`.
fn reduce_to(rho: &CMat, n: usize, q: usize) -> CMat {
    let dim = 1usize << n;
    let shift = n - 1 - q;
    let mut out = CMat::zeros(2, 2);
    for i in 0..dim {
        for j in 0..dim {
            // Same bits everywhere except qubit q.
            if (i ^ j) & !(1 << shift) == 0 {
                out[((i >> shift) & 1, (j >> shift) & 1)] += rho[(i, j)];
            }
        }
    }
    out
}

/// Measurement axis for a hypothesis reduced operator, or `None` for the
/// computational basis.
fn phase_axis(rho: &CMat) -> Option<[f64; 3]> {
    let tr = (rho[(0, 0)] + rho[(1, 1)]).re;
    let r = [
        (rho * pauli2('X')).trace().re / tr,
        (rho * pauli2('Y')).trace().re / tr,
        (rho * pauli2('Z')).trace().re / tr,
    ];
    let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if len < 1e-12 {
        return None;
    }
    // r x e_z = (r_y, -r_x, 0)
    let cross = [r[1], -r[0], 0.0];
    let cl = (cross[0] * cross[0] + cross[1] * cross[1]).sqrt();
    Some(if cl < 1e-12 {
        [1.0, 0.0, 0.0]
    } else {
        [cross[0] / cl, cross[1] / cl, 0.0]
    })
}

/// Exact acceptance probability of the adaptive single-copy test, by walking
/// every path and applying the full n-qubit projector chain to dense
/// density matrices.
pub fn enumerate_acceptance(psi: &CVec, phi: &CVec) -> f64 {
    let dim = psi.len();
    let n = dim.trailing_zeros() as usize;
    assert!(n <= TREE_BUDGET, "tree oracle budget exceeded");
    let rho_lab = projector(psi);
    let rho_hyp = projector(phi);
    let id2 = CMat::identity(2, 2);
    let mut total = 0.0;
    for k in 0..n {
        // Stack of per-qubit projector choices for qubits before and after k.
        let mut stack: Vec<Vec<Option<CMat>>> = vec![vec![None; n]];
        let mut complete = Vec::new();
        // Computational outcomes on qubits 0..k.
        for q in 0..k {
            stack = stack
                .into_iter()
                .flat_map(|f| {
                    (0..2).map(move |b| {
                        let mut g = f.clone();
                        g[q] = Some(projector(&basis_ket(b)));
                        g
                    })
                })
                .collect();
        }
        while let Some(f) = stack.pop() {
            let next = (k + 1..n).find(|&j| f[j].is_none());
            let chain = |f: &[Option<CMat>]| -> CMat {
                let parts: Vec<CMat> = f.iter().map(|o| o.clone().unwrap_or_else(|| id2.clone())).collect();
                kron_all(&parts)
            };
            let pi = chain(&f);
            let conditioned = &pi * &rho_hyp * &pi;
            let target = next.unwrap_or(k);
            let red = reduce_to(&conditioned, n, target);
            if (red[(0, 0)] + red[(1, 1)]).re < 1e-14 {
                // Forbidden by the hypothesis: counts as rejection.
                continue;
            }
            match next {
                Some(j) => {
                    let pair = match phase_axis(&red) {
                        Some(a) => axis_projectors(a),
                        None => [projector(&basis_ket(0)), projector(&basis_ket(1))],
                    };
                    for p in pair {
                        let mut g = f.clone();
                        g[j] = Some(p);
                        stack.push(g);
                    }
                }
                None => {
                    let tr = (red[(0, 0)] + red[(1, 1)]).re;
                    let mut g = f.clone();
                    g[k] = Some(red / c(tr, 0.0));
                    complete.push(g);
                }
            }
        }
        for f in complete {
            let parts: Vec<CMat> = f.into_iter().map(|o| o.unwrap()).collect();
            total += (kron_all(&parts) * &rho_lab).trace().re;
        }
    }
    total / n as f64
}

pub fn fidelity(psi: &CVec, phi: &CVec) -> f64 {
    psi.dotc(phi).norm_sqr() / (psi.norm_squared() * phi.norm_squared())
}

/// Largest `nu` maximizing `sum_{j > nu} z_j` over `0 <= nu < z.len()`.
pub fn replay_mle(z: &[f64]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    let mut tail = 0.0;
    let sums: Vec<f64> = z
        .iter()
        .rev()
        .map(|x| {
            tail += x;
            tail
        })
        .collect();
    for nu in 0..z.len() {
        let v = sums[z.len() - 1 - nu];
        if v >= best - 1e-12 {
            best = best.max(v);
            arg = nu;
        }
    }
    arg
}

/// Sequential Monte Carlo run length from an explicit loop.
pub fn mc_arl(scores: &[(f64, f64)], h: f64, trials: usize, horizon: usize, seed: u64) -> (f64, f64) {
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let cdf: Vec<f64> = scores
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.1;
            Some(*acc)
        })
        .collect();
    let total = *cdf.last().unwrap();
    let mut lengths = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut s = 0.0f64;
        let mut steps = 0;
        while steps < horizon {
            steps += 1;
            let u: f64 = rng.random::<f64>() * total;
            let i = cdf.iter().position(|&c| u < c).unwrap_or(scores.len() - 1);
            s = (s + scores[i].0).max(0.0);
            if s >= h {
                break;
            }
        }
        lengths.push(steps as f64);
    }
    let m = lengths.iter().sum::<f64>() / trials as f64;
    let var = lengths.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    (m, (var / trials as f64).sqrt())
}

pub fn to_cvec(amps: &[C64]) -> CVec {
    CVec::from_column_slice(amps)
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> CVec {
    let v = CVec::from_fn(1 << n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let norm = v.norm();
    v / c(norm, 0.0)
}
