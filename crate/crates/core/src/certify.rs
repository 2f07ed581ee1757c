//! Hamiltonian certification: parameter planning, rounds, and the verdict.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtmeas::{
    build_product_term_sum, certify_state_once, rejection_probability_exact, DenseDtPath,
    FactorizedDtPath, DEFAULT_TERM_BUDGET, EXACT_TREE_LIMIT,
};
use crate::error::{check_dims, Error, Result};
use crate::pauli::SparseHamiltonian;
use crate::qstate::{
    sample_stabilizer_product, taylor_hypothesis, taylor_tail_bound, ProductStateLabel,
    Propagator, StateVector,
};
use crate::rng::stream;

pub const DEFAULT_C: f64 = 0.1;
pub const DEFAULT_KAPPA: f64 = 0.25;
pub const DEFAULT_C_N: f64 = 8.0;
pub const DEFAULT_FRACTION_THRESHOLD: f64 = 1e-4;

/// Labels are cached per round engine up to this many qubits (6^n entries).
const LABEL_CACHE_LIMIT: usize = 6;
const MAX_ORDER: usize = 200;

/// Optional replacements for the planning defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanOverrides {
    pub c: Option<f64>,
    pub t: Option<f64>,
    pub order: Option<usize>,
    pub kappa: Option<f64>,
    pub xi: Option<f64>,
    pub c_n: Option<f64>,
    pub rounds: Option<usize>,
    pub shots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub n: usize,
    pub m: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
    pub t: f64,
    pub order: usize,
    pub kappa: f64,
    pub xi: f64,
    pub c_n: f64,
    pub rounds: usize,
    pub shots: usize,
}

impl ProtocolPlan {
    /// Pre-change reject probability `xi / 2n`.
    pub fn p(&self) -> f64 {
        self.xi / (2.0 * self.n as f64)
    }

    /// Post-change reject probability `xi / n`.
    pub fn q(&self) -> f64 {
        self.xi / self.n as f64
    }

    /// Total evolution time `N t s`.
    pub fn total_time(&self) -> f64 {
        self.rounds as f64 * self.t * self.shots as f64
    }
}

/// Smallest order `l` whose truncation error is below `t^2 eps^2 / 2n`.
///
/// For `tM < 1` this is the power rule `(tM)^{l+1} < t^2 eps^2 / 2n`; otherwise
/// the factorial tail bound of the series is used.
pub fn taylor_order(n: usize, m: f64, t: f64, epsilon: f64) -> Result<usize> {
    let target = t * t * epsilon * epsilon / (2.0 * n as f64);
    let x = t * m;
    for l in 0..=MAX_ORDER {
        let err = if x < 1.0 {
            x.powi(l as i32 + 1)
        } else {
            taylor_tail_bound(x, l)
        };
        if err < target {
            return Ok(l);
        }
    }
    Err(Error::Parameter(format!(
        "no Taylor order up to {MAX_ORDER} reaches error {target:e} at tM = {x}"
    )))
}

pub fn plan_parameters(
    n: usize,
    m: f64,
    epsilon: f64,
    delta: f64,
    overrides: &PlanOverrides,
) -> Result<ProtocolPlan> {
    let bad = |msg: String| Err(Error::Parameter(msg));
    if n == 0 {
        return bad("n must be positive".into());
    }
    if !(epsilon > 0.0) || !(m > 0.0) || !m.is_finite() {
        return bad(format!("need epsilon > 0 and finite M > 0, got {epsilon}, {m}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return bad(format!("delta must lie in (0, 1), got {delta}"));
    }
    let c = overrides.c.unwrap_or(DEFAULT_C);
    let t = overrides.t.unwrap_or(c / m);
    if !(t > 0.0) || !t.is_finite() {
        return bad(format!("evolution time must be positive, got {t}"));
    }
    let c = t * m;
    let kappa = overrides.kappa.unwrap_or(DEFAULT_KAPPA);
    let xi = overrides.xi.unwrap_or(kappa * epsilon * epsilon / (m * m));
    if !(xi > 0.0 && xi < 1.0) {
        return bad(format!("infeasible infidelity threshold xi = {xi}; need 0 < xi < 1"));
    }
    let c_n = overrides.c_n.unwrap_or(DEFAULT_C_N);
    let order = match overrides.order {
        Some(l) => l,
        None => taylor_order(n, m, t, epsilon)?,
    };
    let rounds = overrides
        .rounds
        .unwrap_or_else(|| (c_n * n as f64 * (1.0 / delta).ln() / xi).ceil() as usize);
    let shots = overrides.shots.unwrap_or(1);
    if rounds == 0 || shots == 0 {
        return bad("rounds and shots must be positive".into());
    }
    Ok(ProtocolPlan {
        n,
        m,
        epsilon,
        delta,
        c,
        t,
        order,
        kappa,
        xi,
        c_n,
        rounds,
        shots,
    })
}

/// How reject counts for a round are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundSampler {
    /// Simulate every shot of the measurement subroutine.
    #[default]
    Shots,
    /// Draw `Binomial(s, r)` with `r` the exact per-shot rejection probability
    /// of the sampled input. Same distribution, much cheaper for sweeps.
    Exact,
}

/// Which hypothesis representation the shot simulation conditions on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisPath {
    #[default]
    Dense,
    Factorized,
}

struct LabelData {
    psi: StateVector,
    phi: StateVector,
    factorized: Option<FactorizedDtPath>,
    reject: OnceLock<f64>,
}

/// Reject counts of one round, with the sampled input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOutcome {
    pub label: usize,
    pub rejects: usize,
}

/// Round engine for a fixed lab Hamiltonian and hypothesis.
///
/// The lab propagator is built once; per-input lab and hypothesis states are
/// computed lazily and shared across rounds and threads.
pub struct Certifier {
    h0: SparseHamiltonian,
    plan: ProtocolPlan,
    lab: Propagator,
    sampler: RoundSampler,
    path: HypothesisPath,
    cache: Vec<OnceLock<LabelData>>,
}

impl Certifier {
    pub fn new(h_lab: &SparseHamiltonian, h0: &SparseHamiltonian, plan: &ProtocolPlan) -> Result<Self> {
        check_dims(h0.n(), h_lab.n())?;
        check_dims(plan.n, h0.n())?;
        let lab = Propagator::exact(h_lab, plan.t)?;
        let n = plan.n;
        let cache = if n <= LABEL_CACHE_LIMIT {
            (0..6usize.pow(n as u32)).map(|_| OnceLock::new()).collect()
        } else {
            Vec::new()
        };
        Ok(Certifier {
            h0: h0.clone(),
            plan: plan.clone(),
            lab,
            sampler: RoundSampler::Shots,
            path: HypothesisPath::Dense,
            cache,
        })
    }

    pub fn with_sampler(mut self, sampler: RoundSampler) -> Result<Self> {
        if sampler == RoundSampler::Exact && self.plan.n > EXACT_TREE_LIMIT {
            return Err(Error::Capacity {
                what: "exact measurement tree qubits",
                size: self.plan.n,
                limit: EXACT_TREE_LIMIT,
            });
        }
        self.sampler = sampler;
        Ok(self)
    }

    pub fn with_path(mut self, path: HypothesisPath) -> Self {
        self.path = path;
        self
    }

    pub fn plan(&self) -> &ProtocolPlan {
        &self.plan
    }

    fn build(&self, label: &ProductStateLabel) -> Result<LabelData> {
        let psi0 = label.to_state();
        let psi = self.lab.apply(&psi0)?;
        let (phi, factorized) = match self.path {
            HypothesisPath::Dense => {
                let raw = taylor_hypothesis(&self.h0, self.plan.t, &psi0, self.plan.order)?;
                (raw.normalize()?, None)
            }
            HypothesisPath::Factorized => {
                let sum = build_product_term_sum(
                    &self.h0,
                    self.plan.t,
                    self.plan.order,
                    label,
                    DEFAULT_TERM_BUDGET,
                )?;
                let phi = sum.to_dense().normalized()?;
                (phi, Some(FactorizedDtPath::new(&sum)))
            }
        };
        Ok(LabelData {
            psi,
            phi,
            factorized,
            reject: OnceLock::new(),
        })
    }

    fn with_label<T>(&self, label: &ProductStateLabel, f: impl FnOnce(&LabelData) -> Result<T>) -> Result<T> {
        match self.cache.get(label.index()) {
            Some(slot) => {
                if slot.get().is_none() {
                    let data = self.build(label)?;
                    let _ = slot.set(data);
                }
                f(slot.get().expect("slot initialized"))
            }
            None => f(&self.build(label)?),
        }
    }

    /// Lab state and normalized hypothesis for an input label.
    pub fn states(&self, label: &ProductStateLabel) -> Result<(StateVector, StateVector)> {
        self.with_label(label, |d| Ok((d.psi.clone(), d.phi.clone())))
    }

    /// Exact per-shot rejection probability for an input label.
    pub fn reject_probability(&self, label: &ProductStateLabel) -> Result<f64> {
        self.with_label(label, exact_reject)
    }

    /// One round: sample an input, then `s` independent shots on it.
    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RoundOutcome> {
        let (label, _) = sample_stabilizer_product(rng, self.plan.n);
        let s = self.plan.shots;
        let rejects = self.with_label(&label, |d| match self.sampler {
            RoundSampler::Exact => {
                let r = exact_reject(d)?.clamp(0.0, 1.0);
                let dist = Binomial::new(s as u64, r).map_err(|e| Error::Parameter(e.to_string()))?;
                Ok(dist.sample(rng) as usize)
            }
            RoundSampler::Shots => {
                let mut rejects = 0;
                for _ in 0..s {
                    let accept = match &d.factorized {
                        Some(path) => certify_state_once(&d.psi, &mut path.clone(), rng)?.0,
                        None => certify_state_once(&d.psi, &mut DenseDtPath::new(&d.phi), rng)?.0,
                    };
                    rejects += usize::from(!accept);
                }
                Ok(rejects)
            }
        })?;
        Ok(RoundOutcome {
            label: label.index(),
            rejects,
        })
    }

    /// All `N` rounds; round `i` draws from stream `i` of `seed`, so the result
    /// does not depend on the thread count.
    pub fn run(&self, seed: u64) -> Result<Vec<usize>> {
        (0..self.plan.rounds)
            .into_par_iter()
            .map(|i| self.round(&mut stream(seed, i as u64)).map(|o| o.rejects))
            .collect()
    }
}

fn exact_reject(d: &LabelData) -> Result<f64> {
    if let Some(r) = d.reject.get() {
        return Ok(*r);
    }
    let r = rejection_probability_exact(&d.psi, &d.phi)?;
    let _ = d.reject.set(r);
    Ok(r)
}

/// One certification round against `h_lab`, built from scratch.
pub fn certification_round<R: Rng + ?Sized>(
    h_lab: &SparseHamiltonian,
    h0: &SparseHamiltonian,
    plan: &ProtocolPlan,
    rng: &mut R,
) -> Result<usize> {
    Ok(Certifier::new(h_lab, h0, plan)?.round(rng)?.rejects)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DecisionMode {
    /// Likelihood-ratio test of `Ber(xi/n)` against `Ber(xi/2n)` at level `ln(1/delta)`.
    Lrt,
    /// Fail when the overall reject fraction exceeds `threshold`.
    Fraction { threshold: f64 },
}

impl Default for DecisionMode {
    fn default() -> Self {
        DecisionMode::Fraction {
            threshold: DEFAULT_FRACTION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub decision: Decision,
    pub mode: DecisionMode,
    pub statistic: f64,
    pub total_rejects: usize,
    pub reject_fraction: f64,
    pub rounds: usize,
    pub shots: usize,
}

/// Binomial log-likelihood ratio summed in round order.
pub fn lrt_statistic(samples: &[usize], shots: usize, p: f64, q: f64) -> f64 {
    let up = (q / p).ln();
    let down = ((1.0 - q) / (1.0 - p)).ln();
    samples
        .iter()
        .map(|&x| x as f64 * up + (shots - x) as f64 * down)
        .sum()
}

pub fn decide(samples: &[usize], plan: &ProtocolPlan, mode: DecisionMode) -> Result<VerdictRecord> {
    if samples.is_empty() {
        return Err(Error::Parameter("no samples to decide on".into()));
    }
    let s = plan.shots;
    if let Some(&x) = samples.iter().find(|&&x| x > s) {
        return Err(Error::Parameter(format!("reject count {x} exceeds shots {s}")));
    }
    let statistic = lrt_statistic(samples, s, plan.p(), plan.q());
    let total: usize = samples.iter().sum();
    let fraction = total as f64 / (samples.len() * s) as f64;
    let fail = match mode {
        DecisionMode::Lrt => statistic >= (1.0 / plan.delta).ln(),
        DecisionMode::Fraction { threshold } => fraction > threshold,
    };
    Ok(VerdictRecord {
        decision: if fail { Decision::Fail } else { Decision::Pass },
        mode,
        statistic,
        total_rejects: total,
        reject_fraction: fraction,
        rounds: samples.len(),
        shots: s,
    })
}

/// Wilson score interval for `successes / trials` at `z` standard deviations.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nt = trials as f64;
    let p = successes as f64 / nt;
    let z2 = z * z;
    let denom = 1.0 + z2 / nt;
    let centre = (p + z2 / (2.0 * nt)) / denom;
    let half = z * (p * (1.0 - p) / nt + z2 / (4.0 * nt * nt)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
