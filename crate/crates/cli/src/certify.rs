use std::io::Read;
use std::path::PathBuf;

use hamcert::certify::{
    decide, plan_parameters, wilson_interval, Certifier, Decision, DecisionMode, PlanOverrides, ProtocolPlan,
    RoundSampler, DEFAULT_FRACTION_THRESHOLD,
};
use hamcert::monitor::unit_direction;
use hamcert::pauli::{frobenius_distance, CoefficientPolicy, SparseHamiltonian};
use hamcert::presets::{self, RydbergParamsDef, CERTIFY_DELTA, CERTIFY_EPSILON, FIGURE_T};
use hamcert::rng::{derive_seed, stream};
use serde::Serialize;
use serde_json::json;

use crate::output::{Meta, OutputSet};
use crate::settings::Settings;
use crate::{resolve_seed, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `rydberg` (single run, figure parameters) or `fig2` (verdict sweep).
    #[arg(long)]
    preset: Option<String>,
    /// Qubit count; a comma list for the sweep.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Reference Hamiltonian file (text record format). Default: Rydberg chain.
    #[arg(long)]
    h0: Option<PathBuf>,
    /// Lab Hamiltonian file. Default: H0 plus a seeded unit direction times --dev-norm.
    #[arg(long)]
    h: Option<PathBuf>,
    /// Accept Pauli coefficients above 1 in Hamiltonian files.
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    dev_norm: Option<f64>,
    /// Deviation grid of the sweep.
    #[arg(long, value_delimiter = ',')]
    dev_norms: Option<Vec<f64>>,
    #[arg(long)]
    direction_seed: Option<u64>,
    /// Repetitions per grid point in the sweep.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Failure probability delta.
    #[arg(long)]
    fail_prob: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    cn: Option<f64>,
    /// Taylor order of the hypothesis state.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    /// `lrt` or `fraction`.
    #[arg(long)]
    mode: Option<String>,
    /// Reject fraction above which `fraction` mode fails.
    #[arg(long)]
    threshold: Option<f64>,
    /// `shots` or `exact`.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    /// Rydberg detuning.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rb: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Decide on reject counts read from standard input, one per line.
    #[arg(long)]
    stdin: bool,
}

pub fn parse_sampler(s: &str) -> Result<RoundSampler, CliError> {
    match s {
        "shots" => Ok(RoundSampler::Shots),
        "exact" => Ok(RoundSampler::Exact),
        _ => Err(CliError::Config(format!("unknown sampler {s}; expected shots or exact"))),
    }
}

pub fn sampler_name(s: RoundSampler) -> &'static str {
    match s {
        RoundSampler::Shots => "shots",
        RoundSampler::Exact => "exact",
    }
}

pub fn rydberg_settings(
    settings: &Settings,
    flags: [Option<f64>; 4],
    base: RydbergParamsDef,
) -> Result<RydbergParamsDef, CliError> {
    let [omega, delta, rb, a] = flags;
    Ok(RydbergParamsDef {
        omega: settings.or("omega", omega, base.omega)?,
        delta: settings.or("delta", delta, base.delta)?,
        rb: settings.or("rb", rb, base.rb)?,
        a: settings.or("a", a, base.a)?,
    })
}

pub fn load_hamiltonian(path: &std::path::Path, relaxed: bool) -> Result<SparseHamiltonian, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read Hamiltonian {}: {e}", path.display())))?;
    let policy = if relaxed {
        CoefficientPolicy::Relaxed
    } else {
        CoefficientPolicy::Strict
    };
    Ok(SparseHamiltonian::parse(&text, policy)?)
}

/// Reject counts, one non-negative integer per line; blank lines and `#` comments skipped.
pub fn read_counts(mut input: impl Read) -> Result<Vec<usize>, CliError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| CliError::Io(format!("reading stdin: {e}")))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|e| CliError::Config(format!("stdin line {}: {line:?}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct Resolved {
    preset: Option<String>,
    n: Vec<usize>,
    h0: Option<String>,
    h: Option<String>,
    rydberg: RydbergParamsDef,
    relaxed: bool,
    dev_norms: Vec<f64>,
    direction_seed: Option<u64>,
    runs: usize,
    epsilon: f64,
    fail_prob: f64,
    overrides: PlanOverrides,
    mode: DecisionMode,
    sampler: RoundSampler,
    stdin: bool,
}

fn resolve(a: &Args, s: &Settings) -> Result<Resolved, CliError> {
    let preset = s.get::<String>("preset", a.preset.clone())?;
    let sweep = match preset.as_deref() {
        None | Some("rydberg") => false,
        Some("fig2") => true,
        Some(p) => return Err(CliError::Config(format!("unknown certify preset {p}; expected rydberg or fig2"))),
    };
    let figure = preset.is_some();
    let relaxed = s.or("relaxed", a.relaxed.then_some(true), false)?;
    let h0 = s.get::<String>("h0", a.h0.as_ref().map(|p| p.display().to_string()))?;
    let n = match (s.list("n", a.n.clone())?, &h0) {
        (Some(n), _) => n,
        (None, Some(path)) => vec![load_hamiltonian(path.as_ref(), relaxed)?.n()],
        (None, None) if sweep => vec![3, 5, 7],
        (None, None) => vec![3],
    };
    if n.is_empty() || (!sweep && n.len() != 1) {
        return Err(CliError::Config("a single run takes exactly one --n".into()));
    }
    let fig2 = presets::fig2(n[0]);
    let dev_norms = if sweep {
        s.list("dev_norms", a.dev_norms.clone())?.unwrap_or(fig2.dev_norms.clone())
    } else {
        vec![s.or("dev_norm", a.dev_norm, 0.0)?]
    };
    if dev_norms.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(CliError::Config("deviation norms must be finite and non-negative".into()));
    }
    let mode = match s.or("mode", a.mode.clone(), "fraction".to_string())?.as_str() {
        "lrt" => DecisionMode::Lrt,
        "fraction" => DecisionMode::Fraction {
            threshold: s.or("threshold", a.threshold, DEFAULT_FRACTION_THRESHOLD)?,
        },
        m => return Err(CliError::Config(format!("unknown mode {m}; expected lrt or fraction"))),
    };
    let figure_or = |v: Option<f64>, fig: f64| if figure { v.or(Some(fig)) } else { v };
    let overrides = PlanOverrides {
        c: s.get("c", a.c)?,
        t: figure_or(s.get("t", a.t)?, FIGURE_T),
        order: s.get("order", a.order)?,
        kappa: s.get("kappa", a.kappa)?,
        xi: s.get("xi", a.xi)?,
        c_n: s.get("cn", a.cn)?,
        rounds: s.get("rounds", a.rounds)?.or(figure.then_some(fig2.rounds)),
        shots: s.get("shots", a.shots)?.or(figure.then_some(fig2.shots)),
    };
    Ok(Resolved {
        n,
        h0,
        h: s.get::<String>("h", a.h.as_ref().map(|p| p.display().to_string()))?,
        rydberg: rydberg_settings(s, [a.omega, a.delta, a.rb, a.a], RydbergParamsDef::default())?,
        relaxed,
        dev_norms,
        direction_seed: s.get("direction_seed", a.direction_seed)?,
        runs: s.or("runs", a.runs, fig2.runs)?,
        epsilon: s.or("epsilon", a.epsilon, CERTIFY_EPSILON)?,
        fail_prob: s.or("fail_prob", a.fail_prob, CERTIFY_DELTA)?,
        overrides,
        mode,
        sampler: parse_sampler(&s.or("sampler", a.sampler.clone(), "shots".to_string())?)?,
        stdin: s.or("stdin", a.stdin.then_some(true), false)?,
        preset,
    })
}

impl Resolved {
    fn h0(&self, n: usize) -> Result<SparseHamiltonian, CliError> {
        let h0 = match &self.h0 {
            Some(p) => load_hamiltonian(p.as_ref(), self.relaxed)?,
            None => self.rydberg.hamiltonian(n)?,
        };
        if h0.n() != n {
            return Err(CliError::Config(format!("H0 has {} qubits but n = {n}", h0.n())));
        }
        Ok(h0)
    }

    fn plan(&self, h0: &SparseHamiltonian) -> Result<ProtocolPlan, CliError> {
        Ok(plan_parameters(h0.n(), h0.norm_bound(), self.epsilon, self.fail_prob, &self.overrides)?)
    }

    fn direction_seed(&self, n: usize) -> u64 {
        self.direction_seed.unwrap_or_else(|| presets::fig2_direction_seed(n))
    }

    fn lab(&self, h0: &SparseHamiltonian, norm: f64) -> Result<SparseHamiltonian, CliError> {
        if let Some(p) = &self.h {
            let h = load_hamiltonian(p.as_ref(), self.relaxed)?;
            if h.n() != h0.n() {
                return Err(CliError::Config(format!("H has {} qubits, H0 has {}", h.n(), h0.n())));
            }
            return Ok(h);
        }
        let dir = unit_direction(&mut stream(self.direction_seed(h0.n()), 0), h0.n())?;
        Ok(h0.add_scaled(&dir, norm)?)
    }
}

pub fn run(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let r = resolve(a, s)?;
    let seed = resolve_seed(s, seed_flag, 0)?;
    let meta = Meta::new("certify", seed, serde_json::to_value(&r).expect("serializable"));
    let mut out = OutputSet::default();
    if r.preset.as_deref() == Some("fig2") {
        sweep(&r, seed, &meta, &mut out)?;
        return Ok(out);
    }
    let n = r.n[0];
    let h0 = r.h0(n)?;
    let (plan, xs, deviation) = if r.stdin {
        let xs = read_counts(std::io::stdin().lock())?;
        let mut over = r.overrides.clone();
        over.rounds = Some(xs.len().max(1));
        let plan = plan_parameters(n, h0.norm_bound(), r.epsilon, r.fail_prob, &over)?;
        (plan, xs, None)
    } else {
        let plan = r.plan(&h0)?;
        let h = r.lab(&h0, r.dev_norms[0])?;
        let cert = Certifier::new(&h, &h0, &plan)?.with_sampler(r.sampler)?;
        let xs = cert.run(seed)?;
        (plan, xs, Some(frobenius_distance(&h, &h0)?))
    };
    let verdict = decide(&xs, &plan, r.mode)?;
    out.csv(
        "certify_rounds.csv",
        &meta,
        "round,reject_count,shots",
        xs.iter().enumerate().map(|(i, x)| format!("{},{x},{}", i + 1, plan.shots)),
    );
    out.json(
        "certify_summary.json",
        &meta,
        json!({
            "plan": plan,
            "p": plan.p(),
            "q": plan.q(),
            "total_time": plan.total_time(),
            "frobenius_deviation": deviation,
            "decision": verdict.decision,
            "statistic": verdict.statistic,
            "reject_fraction": verdict.reject_fraction,
            "verdict": verdict,
        }),
    );
    Ok(out)
}

fn sweep(r: &Resolved, seed: u64, meta: &Meta, out: &mut OutputSet) -> Result<(), CliError> {
    if r.runs == 0 {
        return Err(CliError::Config("runs must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut plans = Vec::new();
    for &n in &r.n {
        let h0 = r.h0(n)?;
        let plan = r.plan(&h0)?;
        for (k, &norm) in r.dev_norms.iter().enumerate() {
            let h = r.lab(&h0, norm)?;
            let cert = Certifier::new(&h, &h0, &plan)?.with_sampler(r.sampler)?;
            let block = derive_seed(seed, (n * 100 + k) as u64);
            let mut accepted = 0;
            for run in 0..r.runs {
                let xs = cert.run(derive_seed(block, run as u64))?;
                if decide(&xs, &plan, r.mode)?.decision == Decision::Pass {
                    accepted += 1;
                }
            }
            let (lo, hi) = wilson_interval(accepted, r.runs, 1.0);
            rows.push(json!({
                "n": n,
                "dev_norm": norm,
                "accepted": accepted,
                "runs": r.runs,
                "accept_prob": accepted as f64 / r.runs as f64,
                "wilson_lo": lo,
                "wilson_hi": hi,
            }));
        }
        plans.push(json!({"n": n, "direction_seed": r.direction_seed(n), "plan": plan}));
    }
    out.csv(
        "fig2.csv",
        meta,
        "n,dev_norm,accept_prob,wilson_lo,wilson_hi",
        rows.iter().map(|v| {
            format!(
                "{},{},{},{},{}",
                v["n"], v["dev_norm"], v["accept_prob"], v["wilson_lo"], v["wilson_hi"]
            )
        }),
    );
    out.json("fig2.json", meta, json!({"plans": plans, "rows": rows}));
    Ok(())
}
