//! Named experiment configurations for the figure reproductions.

use serde::{Deserialize, Serialize};

use crate::certify::{plan_parameters, DecisionMode, PlanOverrides, ProtocolPlan};
use crate::cusum::{golden_ratio_p, CusumConfig};
use crate::error::{Error, Result};
use crate::monitor::{DriftMode, DriftScenario, PerturbationLaw};
use crate::pauli::{rydberg_hamiltonian, RydbergParams, SparseHamiltonian};

pub const PRESET_NAMES: [&str; 5] = ["fig2", "fig3-left", "fig3-right", "fig4-left", "fig4-right"];

/// Evolution time per round used throughout the figures.
pub const FIGURE_T: f64 = 0.1;
pub const CERTIFY_EPSILON: f64 = 0.2;
pub const CERTIFY_DELTA: f64 = 0.01;

/// Seed of the unit perturbation direction for the verdict sweep on `n` qubits.
pub fn fig2_direction_seed(n: usize) -> u64 {
    0xF162_0000 + n as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSweep {
    pub n: usize,
    pub rydberg: RydbergParamsDef,
    pub dev_norms: Vec<f64>,
    pub runs: usize,
    pub rounds: usize,
    pub shots: usize,
    pub t: f64,
    pub mode: DecisionMode,
    pub direction_seed: u64,
}

/// Serializable mirror of [`RydbergParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RydbergParamsDef {
    pub omega: f64,
    pub delta: f64,
    pub rb: f64,
    pub a: f64,
}

impl Default for RydbergParamsDef {
    fn default() -> Self {
        let p = RydbergParams::default();
        RydbergParamsDef {
            omega: p.omega,
            delta: p.delta,
            rb: p.blockade_radius,
            a: p.spacing,
        }
    }
}

impl RydbergParamsDef {
    pub fn params(&self) -> RydbergParams {
        RydbergParams {
            omega: self.omega,
            delta: self.delta,
            blockade_radius: self.rb,
            spacing: self.a,
        }
    }

    pub fn hamiltonian(&self, n: usize) -> Result<SparseHamiltonian> {
        rydberg_hamiltonian(n, self.params())
    }
}

pub fn fig2(n: usize) -> VerdictSweep {
    VerdictSweep {
        n,
        rydberg: RydbergParamsDef::default(),
        dev_norms: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5],
        runs: 200,
        rounds: 20_000,
        shots: 1,
        t: FIGURE_T,
        mode: DecisionMode::default(),
        direction_seed: fig2_direction_seed(n),
    }
}

impl VerdictSweep {
    pub fn plan(&self, h0: &SparseHamiltonian) -> Result<ProtocolPlan> {
        plan_parameters(
            self.n,
            h0.norm_bound(),
            CERTIFY_EPSILON,
            CERTIFY_DELTA,
            &PlanOverrides {
                t: Some(self.t),
                rounds: Some(self.rounds),
                shots: Some(self.shots),
                ..Default::default()
            },
        )
    }
}

/// Shared settings of the changepoint experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorPreset {
    pub n: usize,
    pub rydberg: RydbergParamsDef,
    pub xi: f64,
    pub shots: usize,
    pub h: f64,
    pub t: f64,
    pub trials: usize,
    pub horizon: usize,
    pub scenario: DriftScenario,
}

impl MonitorPreset {
    pub fn h0(&self) -> Result<SparseHamiltonian> {
        self.rydberg.hamiltonian(self.n)
    }

    pub fn plan(&self, h0: &SparseHamiltonian) -> Result<ProtocolPlan> {
        plan_parameters(
            self.n,
            h0.norm_bound(),
            CERTIFY_EPSILON,
            CERTIFY_DELTA,
            &PlanOverrides {
                t: Some(self.t),
                xi: Some(self.xi),
                shots: Some(self.shots),
                rounds: Some(self.horizon),
                ..Default::default()
            },
        )
    }

    pub fn cusum(&self, plan: &ProtocolPlan) -> Result<CusumConfig> {
        CusumConfig::new(plan.p(), plan.q(), self.h, self.shots)
    }
}

fn monitor_base(sigma_large: f64, h0_bound: f64) -> MonitorPreset {
    MonitorPreset {
        n: 3,
        rydberg: RydbergParamsDef::default(),
        xi: 0.002,
        shots: 100,
        h: 3.0,
        t: FIGURE_T,
        trials: 120,
        horizon: 60,
        scenario: DriftScenario {
            sigma_small: 0.01,
            sigma_large,
            window_start: 2.0,
            window_width: 1.0,
            law: PerturbationLaw::Gue,
            mode: DriftMode::Accumulate,
            m_bound: 2.0 * h0_bound,
            seed: 0xF163,
        },
    }
}

/// Change window of GUE scale 0.1 at time 2.0, small drift elsewhere.
pub fn fig3_left() -> Result<MonitorPreset> {
    let b = RydbergParamsDef::default().hamiltonian(3)?.norm_bound();
    Ok(monitor_base(0.1, b))
}

/// Small drift only.
pub fn fig3_right() -> Result<MonitorPreset> {
    let b = RydbergParamsDef::default().hamiltonian(3)?.norm_bound();
    Ok(monitor_base(0.01, b))
}

/// Deviation sweep with a fixed `H` per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySweepPreset {
    pub monitor: MonitorPreset,
    pub norms: Vec<f64>,
}

pub fn fig4_right() -> Result<DelaySweepPreset> {
    let mut monitor = fig3_right()?;
    monitor.horizon = crate::monitor::DEFAULT_HORIZON;
    monitor.scenario.seed = 0xF164;
    Ok(DelaySweepPreset {
        monitor,
        norms: vec![0.25, 0.5, 1.0, 1.5, 2.0],
    })
}

/// Lattice ARL sweep over thresholds and true reject probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlPreset {
    pub p: f64,
    pub q: f64,
    /// Thresholds in lattice units.
    pub thresholds: Vec<u64>,
    pub thetas: Vec<f64>,
    pub mc_trials: usize,
    pub mc_thresholds: Vec<u64>,
}

pub fn fig4_left() -> ArlPreset {
    ArlPreset {
        p: golden_ratio_p(),
        q: 0.5,
        thresholds: (2..=52).step_by(5).collect(),
        thetas: (1..=19).map(|k| k as f64 * 0.05).collect(),
        mc_trials: 100_000,
        mc_thresholds: vec![2, 7, 12],
    }
}

pub fn check_name(name: &str) -> Result<()> {
    if PRESET_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "unknown preset {name}; expected one of {}",
            PRESET_NAMES.join(", ")
        )))
    }
}
