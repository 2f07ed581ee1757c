//! CUSUM change detection with binomial log-likelihood scores.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Relative tolerance for matching two LLR values to an integer ratio.
pub const COMMENSURABILITY_TOL: f64 = 1e-9;
const MAX_LATTICE_DENOMINATOR: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumConfig {
    pub p: f64,
    pub q: f64,
    pub h: f64,
    pub shots: usize,
}

impl CusumConfig {
    pub fn new(p: f64, q: f64, h: f64, shots: usize) -> Result<Self> {
        if !(0.0 < p && p < q && q < 1.0) {
            return Err(Error::Parameter(format!("need 0 < p < q < 1, got p={p}, q={q}")));
        }
        if !(h > 0.0) || shots == 0 {
            return Err(Error::Parameter(format!("need h > 0 and shots >= 1, got h={h}, s={shots}")));
        }
        Ok(CusumConfig { p, q, h, shots })
    }

    /// Score per rejection and per acceptance: `ln(q/p)` and `ln((1-q)/(1-p))`.
    pub fn unit_scores(&self) -> (f64, f64) {
        ((self.q / self.p).ln(), ((1.0 - self.q) / (1.0 - self.p)).ln())
    }

    pub fn llr(&self, x: usize) -> Result<f64> {
        llr_raw(x, self.shots, self.p, self.q)
    }
}

/// `x ln(q/p) + (s-x) ln((1-q)/(1-p))`; valid for any `p, q` in (0, 1).
pub fn llr_raw(x: usize, shots: usize, p: f64, q: f64) -> Result<f64> {
    if x > shots {
        return Err(Error::Parameter(format!("reject count {x} exceeds shots {shots}")));
    }
    if p == q {
        return Ok(0.0);
    }
    Ok(x as f64 * (q / p).ln() + (shots - x) as f64 * ((1.0 - q) / (1.0 - p)).ln())
}

pub fn llr(x: usize, config: &CusumConfig) -> Result<f64> {
    config.llr(x)
}

/// `D(Ber(q) || Ber(p))`.
pub fn kl_bernoulli(q: f64, p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0 && 0.0 < q && q < 1.0) {
        return Err(Error::Parameter(format!("need p, q in (0, 1), got q={q}, p={p}")));
    }
    Ok(q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln())
}

/// Running CUSUM statistic. Step 0 is the initial zero score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub step: usize,
    pub score: f64,
    compensation: f64,
    pub last_zero: usize,
    pub terminated: bool,
}

impl Default for CusumState {
    fn default() -> Self {
        CusumState::new()
    }
}

impl CusumState {
    pub fn new() -> Self {
        CusumState::starting_at(0.0)
    }

    pub fn starting_at(score: f64) -> Self {
        CusumState {
            step: 0,
            score: score.max(0.0),
            compensation: 0.0,
            last_zero: 0,
            terminated: false,
        }
    }

    /// `s <- max(0, s + z)` with Kahan compensation; terminates once `s >= h`.
    pub fn step(&mut self, z: f64, h: f64) -> Result<()> {
        if self.terminated {
            return Err(Error::Usage("cusum already terminated".into()));
        }
        self.step += 1;
        let y = z - self.compensation;
        let t = self.score + y;
        self.compensation = (t - self.score) - y;
        self.score = t;
        if self.score <= 0.0 {
            self.score = 0.0;
            self.compensation = 0.0;
            self.last_zero = self.step;
        }
        self.terminated = self.score >= h;
        Ok(())
    }
}

pub fn cusum_step(state: &CusumState, z: f64, h: f64) -> Result<CusumState> {
    let mut next = *state;
    next.step(z, h)?;
    Ok(next)
}

/// Largest step with zero score, read off a terminated state.
pub fn changepoint_mle(state: &CusumState) -> Result<usize> {
    if !state.terminated {
        return Err(Error::Usage("changepoint estimate needs a terminated run".into()));
    }
    Ok(state.last_zero)
}

/// One row of a score trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub i: usize,
    pub z: f64,
    pub s: f64,
    pub terminated: bool,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "i,z,s,terminated";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.i, self.z, self.s, self.terminated as u8)
    }
}

/// Online detector fed with reject counts.
#[derive(Debug, Clone)]
pub struct CusumDetector {
    config: CusumConfig,
    state: CusumState,
}

impl CusumDetector {
    pub fn new(config: CusumConfig) -> Self {
        CusumDetector {
            config,
            state: CusumState::new(),
        }
    }

    pub fn config(&self) -> &CusumConfig {
        &self.config
    }

    pub fn state(&self) -> &CusumState {
        &self.state
    }

    pub fn push(&mut self, rejects: usize) -> Result<TraceRow> {
        let z = self.config.llr(rejects)?;
        self.state.step(z, self.config.h)?;
        Ok(TraceRow {
            i: self.state.step,
            z,
            s: self.state.score,
            terminated: self.state.terminated,
        })
    }
}

/// Integer lattice for two-valued scores `+up * unit` and `-down * unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub up: u64,
    pub down: u64,
    pub unit: f64,
}

impl Lattice {
    /// Find small integers with `up_score / down_score ~ up / down`.
    /// `down_score` is the magnitude of the negative score.
    pub fn from_scores(up_score: f64, down_score: f64, tol: f64) -> Result<Self> {
        let fail = Error::Commensurability {
            up: up_score,
            down: -down_score,
            tol,
        };
        if !(up_score > 0.0 && down_score > 0.0) {
            return Err(fail);
        }
        let ratio = up_score / down_score;
        // Continued-fraction convergents of the ratio.
        let (mut h0, mut h1) = (0u64, 1u64);
        let (mut k0, mut k1) = (1u64, 0u64);
        let mut x = ratio;
        loop {
            let a = x.floor();
            if a > 1e12 {
                return Err(fail);
            }
            let a = a as u64;
            let (h2, k2) = (a * h1 + h0, a * k1 + k0);
            if k2 > MAX_LATTICE_DENOMINATOR || h2 > MAX_LATTICE_DENOMINATOR {
                return Err(fail);
            }
            if ((h2 as f64 / k2 as f64) - ratio).abs() <= tol * ratio {
                return Ok(Lattice {
                    up: h2,
                    down: k2,
                    unit: up_score / h2 as f64,
                });
            }
            (h0, h1, k0, k1) = (h1, h2, k1, k2);
            let frac = x - a as f64;
            if frac <= 0.0 {
                return Err(fail);
            }
            x = 1.0 / frac;
        }
    }

    /// Lattice of a Bernoulli CUSUM configuration.
    pub fn from_config(config: &CusumConfig) -> Result<Self> {
        let (up, down) = config.unit_scores();
        Lattice::from_scores(up, -down, COMMENSURABILITY_TOL)
    }

    /// Threshold in lattice units: smallest `k` with `k * unit >= h`.
    pub fn threshold(&self, h: f64) -> u64 {
        ((h / self.unit) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }
}

/// Expected steps to reach `h` from `start` for integer increments drawn from
/// `steps` (value, probability), reflecting at 0. Infinite if `h` is never
/// reached with probability one.
pub fn arl_lattice_dist(steps: &[(i64, f64)], h: u64, start: u64) -> Result<f64> {
    if start >= h {
        return Ok(0.0);
    }
    if steps.iter().all(|&(v, p)| v <= 0 || p == 0.0) {
        return Ok(f64::INFINITY);
    }
    let m = h as usize;
    // Sub-stochastic transitions among the transient states 0..h and the
    // one-step absorption mass. Elimination below never subtracts, so huge
    // run lengths keep full relative accuracy.
    let mut q = vec![0.0; m * m];
    let mut exit = vec![0.0; m];
    for i in 0..m {
        for &(v, p) in steps {
            let j = (i as i64 + v).max(0);
            if j < h as i64 {
                q[i * m + j as usize] += p;
            } else {
                exit[i] += p;
            }
        }
    }
    let mut b = vec![1.0; m];
    let mut d = vec![0.0; m];
    for k in (0..m).rev() {
        d[k] = exit[k] + (0..k).map(|j| q[k * m + j]).sum::<f64>();
        if d[k] <= 0.0 {
            return Ok(f64::INFINITY);
        }
        for i in 0..k {
            let f = q[i * m + k] / d[k];
            if f == 0.0 {
                continue;
            }
            for j in 0..k {
                q[i * m + j] += f * q[k * m + j];
            }
            exit[i] += f * exit[k];
            b[i] += f * b[k];
        }
    }
    let mut x = vec![0.0; m];
    for k in 0..m {
        x[k] = (b[k] + (0..k).map(|j| q[k * m + j] * x[j]).sum::<f64>()) / d[k];
    }
    let e = x[start as usize];
    Ok(if e.is_finite() { e } else { f64::INFINITY })
}

/// Two-point lattice ARL: `+up` with probability `theta_up`, else `-down`.
pub fn arl_lattice(theta_up: f64, up: u64, down: u64, h: u64, start: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta_up) || up == 0 || down == 0 {
        return Err(Error::Parameter(format!(
            "bad lattice walk: theta={theta_up}, up={up}, down={down}"
        )));
    }
    if theta_up == 0.0 && start < h {
        return Ok(f64::INFINITY);
    }
    arl_lattice_dist(&[(up as i64, theta_up), (-(down as i64), 1.0 - theta_up)], h, start)
}

/// Lattice increments of a binomial CUSUM when the true reject probability is `theta`.
pub fn binomial_lattice_steps(lattice: &Lattice, shots: usize, theta: f64) -> Vec<(i64, f64)> {
    binomial_pmf(shots, theta)
        .into_iter()
        .enumerate()
        .map(|(x, w)| {
            let v = x as i64 * lattice.up as i64 - (shots - x) as i64 * lattice.down as i64;
            (v, w)
        })
        .collect()
}

/// `P(X = x)` for `X ~ Binomial(s, theta)`, `x = 0..=s`.
pub fn binomial_pmf(shots: usize, theta: f64) -> Vec<f64> {
    (0..=shots)
        .map(|x| {
            let ln_choose = ln_factorial(shots) - ln_factorial(x) - ln_factorial(shots - x);
            let a = if x == 0 { 0.0 } else { x as f64 * theta.ln() };
            let b = if x == shots { 0.0 } else { (shots - x) as f64 * (1.0 - theta).ln() };
            (ln_choose + a + b).exp()
        })
        .collect()
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Score distribution `(llr(x), P(x))` of a binomial CUSUM under true reject probability `theta`.
pub fn binomial_score_distribution(config: &CusumConfig, theta: f64) -> Vec<(f64, f64)> {
    binomial_pmf(config.shots, theta)
        .into_iter()
        .enumerate()
        .map(|(x, w)| (config.llr(x).expect("x within shots"), w))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloArl {
    /// Mean run length; censored runs count as the horizon.
    pub mean: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
    pub trials: usize,
}

/// Monte Carlo run length for i.i.d. scores drawn from `(value, prob)`.
pub fn arl_monte_carlo(
    scores: &[(f64, f64)],
    h: f64,
    trials: usize,
    horizon: usize,
    seed: u64,
    start: f64,
) -> Result<MonteCarloArl> {
    if trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let dist = WeightedIndex::new(scores.iter().map(|s| s.1))
        .map_err(|e| Error::Parameter(format!("bad score distribution: {e}")))?;
    let runs: Vec<(usize, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut st = CusumState::starting_at(start);
            if st.score >= h {
                return (0, false);
            }
            while st.step < horizon {
                st.step(scores[dist.sample(&mut rng)].0, h).expect("running");
                if st.terminated {
                    return (st.step, false);
                }
            }
            (horizon, true)
        })
        .collect();
    let nt = trials as f64;
    let mean = runs.iter().map(|r| r.0 as f64).sum::<f64>() / nt;
    let var = if trials > 1 {
        runs.iter().map(|r| (r.0 as f64 - mean).powi(2)).sum::<f64>() / (nt - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloArl {
        mean,
        stderr: (var / nt).sqrt(),
        censored_fraction: runs.iter().filter(|r| r.1).count() as f64 / nt,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArlMethod {
    ExactLattice,
    MonteCarlo,
}

impl ArlMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ArlMethod::ExactLattice => "exact-lattice",
            ArlMethod::MonteCarlo => "monte-carlo",
        }
    }
}

/// Run lengths under the pre-change and post-change laws, both from a zero start.
/// Infinite values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlReport {
    pub h: f64,
    pub pre_change: f64,
    pub post_change: f64,
    pub method: ArlMethod,
    pub pre_change_stderr: Option<f64>,
    pub post_change_stderr: Option<f64>,
    pub censored_fraction: Option<f64>,
}

/// Exact report for a commensurable Bernoulli configuration.
pub fn arl_report_exact(config: &CusumConfig) -> Result<ArlReport> {
    let lat = Lattice::from_config(config)?;
    let hl = lat.threshold(config.h);
    let pre = arl_lattice_dist(&binomial_lattice_steps(&lat, config.shots, config.p), hl, 0)?;
    let post = arl_lattice_dist(&binomial_lattice_steps(&lat, config.shots, config.q), hl, 0)?;
    Ok(ArlReport {
        h: config.h,
        pre_change: pre,
        post_change: post,
        method: ArlMethod::ExactLattice,
        pre_change_stderr: None,
        post_change_stderr: None,
        censored_fraction: None,
    })
}

/// Reject probability with `Ber(q)` up-steps of `2 ln(phi)` and `Ber(1-q)`
/// down-steps of `ln(phi)` when `q = 1/2`.
pub fn golden_ratio_p() -> f64 {
    1.0 - (1.0 + 5f64.sqrt()) / 4.0
}
