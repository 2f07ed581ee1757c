//! Hamiltonian changepoint detection: certification rounds feeding CUSUM.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{Certifier, ProtocolPlan, RoundSampler};
use crate::cusum::{binomial_pmf, CusumConfig, CusumState};
use crate::error::{check_dims, Error, Result};
use crate::pauli::{from_dense, frobenius_distance, operator_norm, SparseHamiltonian, DENSE_LIMIT};
use crate::qstate::ProductStateLabel;
use crate::rng::{derive_seed, stream, StreamRng};

pub const DEFAULT_HORIZON: usize = 10_000;

/// Traceless GUE sample projected onto Paulis and multiplied by `scale`.
///
/// Diagonal entries are `N(0, 1)`; off-diagonal real and imaginary parts are
/// independent `N(0, 1/2)`.
pub fn gue_perturbation<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Result<SparseHamiltonian> {
    if n == 0 || n > DENSE_LIMIT {
        return Err(Error::Capacity {
            what: "dense qubit count",
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let dim = 1usize << n;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        a[(i, i)] = Complex64::new(rng.sample(StandardNormal), 0.0);
        for j in i + 1..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re * half, im * half);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    let (h, _) = from_dense(&a)?;
    Ok(h.scaled(scale))
}

/// GUE direction rescaled to unit normalized Frobenius norm.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<SparseHamiltonian> {
    let g = gue_perturbation(rng, n, 1.0)?;
    Ok(g.scaled(1.0 / g.frobenius_norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationLaw {
    #[default]
    Gue,
    /// Deterministic increments along one seeded unit direction.
    FixedDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// `H_i = H_{i-1} + sigma_i G_i`.
    #[default]
    Accumulate,
    /// `H_i = H0 + sigma_i G_i`.
    Iid,
}

/// Drifting Hamiltonian sequence. Step `i` sits at time `i t`; steps with
/// `window_start <= i t < window_start + window_width` use `sigma_large`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub sigma_small: f64,
    pub sigma_large: f64,
    pub window_start: f64,
    pub window_width: f64,
    pub law: PerturbationLaw,
    pub mode: DriftMode,
    /// Operator-norm bound every `H_i` must respect.
    pub m_bound: f64,
    pub seed: u64,
}

impl DriftScenario {
    /// No drift at all: `H_i = H0`.
    pub fn constant(h0: &SparseHamiltonian) -> Self {
        DriftScenario {
            sigma_small: 0.0,
            sigma_large: 0.0,
            window_start: 0.0,
            window_width: 0.0,
            law: PerturbationLaw::Gue,
            mode: DriftMode::Accumulate,
            m_bound: 2.0 * h0.norm_bound(),
            seed: 0,
        }
    }

    pub fn in_window(&self, step: usize, t: f64) -> bool {
        let tau = step as f64 * t;
        tau >= self.window_start - 1e-9 && tau < self.window_start + self.window_width - 1e-9
    }

    /// Iterator state producing `H_1, H_2, ...` for one trial.
    pub fn walk(&self, h0: &SparseHamiltonian, trial: u64, t: f64) -> Result<ScenarioWalk> {
        let mut rng = stream(derive_seed(self.seed, 0x5ce7), trial);
        let direction = match self.law {
            PerturbationLaw::FixedDirection => Some(unit_direction(&mut rng, h0.n())?),
            PerturbationLaw::Gue => None,
        };
        Ok(ScenarioWalk {
            scenario: self.clone(),
            h0: h0.clone(),
            current: h0.clone(),
            direction,
            rng,
            step: 0,
            t,
        })
    }
}

pub struct ScenarioWalk {
    scenario: DriftScenario,
    h0: SparseHamiltonian,
    current: SparseHamiltonian,
    direction: Option<SparseHamiltonian>,
    rng: StreamRng,
    step: usize,
    t: f64,
}

impl ScenarioWalk {
    /// Materialize the next Hamiltonian and check it against the norm bound.
    pub fn next_hamiltonian(&mut self) -> Result<&SparseHamiltonian> {
        self.step += 1;
        let sc = &self.scenario;
        let sigma = if sc.in_window(self.step, self.t) {
            sc.sigma_large
        } else {
            sc.sigma_small
        };
        let base = match sc.mode {
            DriftMode::Accumulate => &self.current,
            DriftMode::Iid => &self.h0,
        };
        let next = if sigma == 0.0 {
            base.clone()
        } else {
            let inc = match &self.direction {
                Some(d) => d.scaled(sigma),
                None => gue_perturbation(&mut self.rng, self.h0.n(), sigma)?,
            };
            base.add_scaled(&inc, 1.0)?
        };
        if !next.is_empty() {
            let actual = operator_norm(&next)?;
            if actual > sc.m_bound * (1.0 + 1e-9) {
                return Err(Error::NormBound {
                    declared: sc.m_bound,
                    actual,
                });
            }
        }
        self.current = next;
        Ok(&self.current)
    }
}

/// One monitored step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub step: usize,
    pub total_time: f64,
    pub reject_count: usize,
    pub z: f64,
    pub s: f64,
    pub frobenius_deviation: f64,
}

impl MonitorRow {
    pub const CSV_HEADER: &'static str = "step,total_time,reject_count,z,s,frobenius_deviation";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.total_time, self.reject_count, self.z, self.s, self.frobenius_deviation
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorResult {
    /// Termination step, or the horizon when censored.
    pub steps: usize,
    /// `steps * t * s`.
    pub total_time: f64,
    /// Changepoint estimate; `None` when censored.
    pub nu_hat: Option<usize>,
    pub censored: bool,
    #[serde(skip)]
    pub trace: Vec<MonitorRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorOptions {
    pub horizon: usize,
    /// Keep stepping after the first crossing so the whole score path is recorded.
    pub full_trace: bool,
    pub sampler: RoundSampler,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        MonitorOptions {
            horizon: DEFAULT_HORIZON,
            full_trace: false,
            sampler: RoundSampler::Shots,
        }
    }
}

/// Run the online detector on one trial of `scenario`.
///
/// Each step materializes `H_i`, runs one certification round against it and
/// feeds the reject count to CUSUM. With `full_trace` the score keeps
/// evolving after the first crossing, which only affects the trace.
pub fn detect(
    scenario: &DriftScenario,
    h0: &SparseHamiltonian,
    plan: &ProtocolPlan,
    config: &CusumConfig,
    trial: u64,
    options: &MonitorOptions,
) -> Result<MonitorResult> {
    check_dims(plan.n, h0.n())?;
    if config.shots != plan.shots {
        return Err(Error::Parameter(format!(
            "CUSUM shots {} differ from plan shots {}",
            config.shots, plan.shots
        )));
    }
    let mut walk = scenario.walk(h0, trial, plan.t)?;
    let mut rng = stream(derive_seed(scenario.seed, 0x3ea5), trial);
    let mut score = CusumState::new();
    let mut hit: Option<(usize, usize)> = None;
    let mut trace = Vec::new();
    for step in 1..=options.horizon {
        let h = walk.next_hamiltonian()?;
        let cert = Certifier::new(h, h0, plan)?.with_sampler(options.sampler)?;
        let rejects = cert.round(&mut rng)?.rejects;
        let z = config.llr(rejects)?;
        score.step(z, f64::INFINITY)?;
        trace.push(MonitorRow {
            step,
            total_time: step as f64 * plan.t * plan.shots as f64,
            reject_count: rejects,
            z,
            s: score.score,
            frobenius_deviation: frobenius_distance(h, h0)?,
        });
        if hit.is_none() && score.score >= config.h {
            hit = Some((step, score.last_zero));
            if !options.full_trace {
                break;
            }
        }
    }
    Ok(finish(hit, options.horizon, plan, trace))
}

fn finish(hit: Option<(usize, usize)>, horizon: usize, plan: &ProtocolPlan, trace: Vec<MonitorRow>) -> MonitorResult {
    let steps = hit.map_or(horizon, |h| h.0);
    MonitorResult {
        steps,
        total_time: steps as f64 * plan.t * plan.shots as f64,
        nu_hat: hit.map(|h| h.1),
        censored: hit.is_none(),
        trace,
    }
}

/// Detection against a Hamiltonian that stays fixed for the whole run.
pub fn detect_fixed(
    certifier: &Certifier,
    config: &CusumConfig,
    rng: &mut StreamRng,
    horizon: usize,
) -> Result<MonitorResult> {
    let plan = certifier.plan();
    let mut score = CusumState::new();
    for _ in 0..horizon {
        let rejects = certifier.round(rng)?.rejects;
        score.step(config.llr(rejects)?, config.h)?;
        if score.terminated {
            return Ok(finish(Some((score.step, score.last_zero)), horizon, plan, Vec::new()));
        }
    }
    Ok(finish(None, horizon, plan, Vec::new()))
}

/// Distribution of one round's reject count: the input-averaged mixture of
/// `Binomial(s, r_label)`.
pub fn round_count_distribution(certifier: &Certifier) -> Result<Vec<f64>> {
    let plan = certifier.plan();
    let labels = 6usize.pow(plan.n as u32);
    let mut pmf = vec![0.0; plan.shots + 1];
    for ix in 0..labels {
        let r = certifier.reject_probability(&ProductStateLabel::from_index(plan.n, ix))?;
        for (acc, w) in pmf.iter_mut().zip(binomial_pmf(plan.shots, r.clamp(0.0, 1.0))) {
            *acc += w / labels as f64;
        }
    }
    Ok(pmf)
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (q / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub norm: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
    pub censored_fraction: f64,
    pub steps: Vec<usize>,
}

/// Termination steps for `H = H0 + norm * D` with a fresh unit GUE
/// direction `D` per trial, summarized by median and 2.5/97.5 percentiles.
#[allow(clippy::too_many_arguments)]
pub fn delay_vs_deviation_sweep(
    h0: &SparseHamiltonian,
    norms: &[f64],
    trials: usize,
    plan: &ProtocolPlan,
    config: &CusumConfig,
    seed: u64,
    horizon: usize,
    sampler: RoundSampler,
) -> Result<Vec<SweepRow>> {
    if norms.is_empty() || trials == 0 {
        return Err(Error::Parameter("sweep needs norms and trials".into()));
    }
    norms
        .iter()
        .enumerate()
        .map(|(k, &norm)| {
            let block = derive_seed(seed, k as u64);
            let steps: Vec<(usize, bool)> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = stream(block, trial as u64);
                    let dir = unit_direction(&mut rng, h0.n())?;
                    let h = h0.add_scaled(&dir, norm)?;
                    let cert = Certifier::new(&h, h0, plan)?.with_sampler(sampler)?;
                    let r = detect_fixed(&cert, config, &mut rng, horizon)?;
                    Ok((r.steps, r.censored))
                })
                .collect::<Result<_>>()?;
            let mut sorted: Vec<f64> = steps.iter().map(|s| s.0 as f64).collect();
            sorted.sort_by(f64::total_cmp);
            Ok(SweepRow {
                norm,
                median: percentile(&sorted, 50.0),
                lo: percentile(&sorted, 2.5),
                hi: percentile(&sorted, 97.5),
                censored_fraction: steps.iter().filter(|s| s.1).count() as f64 / trials as f64,
                steps: steps.iter().map(|s| s.0).collect(),
            })
        })
        .collect()
}
