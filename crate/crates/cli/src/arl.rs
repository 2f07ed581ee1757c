use hamcert::certify::RoundSampler;
use hamcert::cusum::{arl_lattice, arl_monte_carlo, arl_report_exact, CusumConfig, Lattice};
use hamcert::monitor::delay_vs_deviation_sweep;
use hamcert::presets;
use hamcert::rng::derive_seed;
use serde_json::{json, Value};

use crate::certify::{parse_sampler, sampler_name};
use crate::output::{num, Meta, OutputSet};
use crate::settings::Settings;
use crate::{resolve_seed, CliError};

const FIG4_COLUMNS: &str = "h,theta_or_norm,arl,method";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `fig4-left` (lattice table) or `fig4-right` (delay against deviation).
    #[arg(long)]
    preset: Option<String>,
    /// Threshold: lattice units for `--theta`, log-likelihood units for `--p/--q`.
    #[arg(long)]
    h: Option<f64>,
    /// Up-step probability of a two-point lattice walk.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    up: Option<u64>,
    #[arg(long)]
    down: Option<u64>,
    #[arg(long)]
    start: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    shots: Option<usize>,
    /// Monte Carlo trials (fig4-left) or runs per norm (fig4-right).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    norms: Option<Vec<f64>>,
    /// `shots` or `exact`.
    #[arg(long)]
    sampler: Option<String>,
}

pub fn run(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let preset = s.get::<String>("preset", a.preset.clone())?;
    match preset.as_deref() {
        Some("fig4-left") => fig4_left(a, s, seed_flag),
        Some("fig4-right") => fig4_right(a, s, seed_flag),
        Some(p) => Err(CliError::Config(format!("unknown arl preset {p}; expected fig4-left or fig4-right"))),
        None => {
            let p = s.get("p", a.p)?;
            let q = s.get("q", a.q)?;
            match (p, q) {
                (Some(p), Some(q)) => from_probabilities(a, s, seed_flag, p, q),
                (None, None) => direct(a, s, seed_flag),
                _ => Err(CliError::Config("--p and --q go together".into())),
            }
        }
    }
}

fn lattice_h(h: f64) -> Result<u64, CliError> {
    if h.is_finite() && h >= 0.0 && h.fract() == 0.0 {
        Ok(h as u64)
    } else {
        Err(CliError::Config(format!("lattice threshold must be a non-negative integer, got {h}")))
    }
}

fn direct(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let theta = s
        .get("theta", a.theta)?
        .ok_or_else(|| CliError::Config("need --preset, --p/--q, or --theta".into()))?;
    let h = lattice_h(
        s.get("h", a.h)?
            .ok_or_else(|| CliError::Config("need --h".into()))?,
    )?;
    let up = s.or("up", a.up, 1)?;
    let down = s.or("down", a.down, 1)?;
    let start = s.or("start", a.start, 0)?;
    let seed = resolve_seed(s, seed_flag, 0)?;
    let arl = arl_lattice(theta, up, down, h, start)?;
    let config = json!({"h": h, "theta": theta, "up": up, "down": down, "start": start});
    let meta = Meta::new("arl", seed, config);
    let mut out = OutputSet::default();
    out.csv("arl.csv", &meta, FIG4_COLUMNS, [format!("{h},{theta},{},exact-lattice", num(arl))]);
    out.json("arl.json", &meta, json!({"arl": arl, "method": "exact-lattice"}));
    Ok(out)
}

fn from_probabilities(a: &Args, s: &Settings, seed_flag: Option<u64>, p: f64, q: f64) -> Result<OutputSet, CliError> {
    let h = s
        .get("h", a.h)?
        .ok_or_else(|| CliError::Config("need --h".into()))?;
    let shots = s.or("shots", a.shots, 1)?;
    let seed = resolve_seed(s, seed_flag, 0)?;
    let cfg = CusumConfig::new(p, q, h, shots)?;
    let lat = Lattice::from_config(&cfg)?;
    let report = arl_report_exact(&cfg)?;
    let meta = Meta::new("arl", seed, json!({"p": p, "q": q, "h": h, "shots": shots}));
    let mut out = OutputSet::default();
    out.csv(
        "arl.csv",
        &meta,
        FIG4_COLUMNS,
        [
            format!("{h},{p},{},exact-lattice", num(report.pre_change)),
            format!("{h},{q},{},exact-lattice", num(report.post_change)),
        ],
    );
    out.json(
        "arl.json",
        &meta,
        json!({"lattice": lat, "lattice_threshold": lat.threshold(h), "report": report}),
    );
    Ok(out)
}

fn fig4_left(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let mut pre = presets::fig4_left();
    pre.p = s.or("p", a.p, pre.p)?;
    pre.q = s.or("q", a.q, pre.q)?;
    pre.mc_trials = s.or("trials", a.trials, pre.mc_trials)?;
    let horizon = s.or("horizon", a.horizon, 10_000_000)?;
    let seed = resolve_seed(s, seed_flag, 0xF164)?;
    let lat = Lattice::from_config(&CusumConfig::new(pre.p, pre.q, 1.0, 1)?)?;

    let mut thetas = pre.thetas.clone();
    thetas.push(pre.p);
    thetas.push(pre.q);
    thetas.sort_by(f64::total_cmp);
    thetas.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let mut rows = Vec::new();
    let mut records: Vec<Value> = Vec::new();
    for &h in &pre.thresholds {
        for &theta in &thetas {
            let arl = arl_lattice(theta, lat.up, lat.down, h, 0)?;
            rows.push(format!("{h},{theta},{},exact-lattice", num(arl)));
            records.push(json!({"h": h, "theta": theta, "arl": arl, "method": "exact-lattice"}));
        }
    }
    for (i, &h) in pre.mc_thresholds.iter().enumerate() {
        for (j, &theta) in [pre.p, pre.q].iter().enumerate() {
            let scores = [(lat.up as f64, theta), (-(lat.down as f64), 1.0 - theta)];
            let mc = arl_monte_carlo(&scores, h as f64, pre.mc_trials, horizon, derive_seed(seed, (2 * i + j) as u64), 0.0)?;
            rows.push(format!("{h},{theta},{},monte-carlo", mc.mean));
            records.push(json!({
                "h": h,
                "theta": theta,
                "arl": mc.mean,
                "stderr": mc.stderr,
                "censored_fraction": mc.censored_fraction,
                "method": "monte-carlo",
            }));
        }
    }
    let config = json!({"preset": "fig4-left", "settings": pre, "horizon": horizon});
    let meta = Meta::new("arl", seed, config);
    let mut out = OutputSet::default();
    out.csv("fig4-left.csv", &meta, FIG4_COLUMNS, rows);
    out.json("fig4-left.json", &meta, json!({"lattice": lat, "rows": records}));
    Ok(out)
}

fn fig4_right(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let mut pre = presets::fig4_right()?;
    pre.norms = s.list("norms", a.norms.clone())?.unwrap_or(pre.norms);
    let m = &mut pre.monitor;
    m.trials = s.or("trials", a.trials, m.trials)?;
    m.horizon = s.or("horizon", a.horizon, m.horizon)?;
    m.shots = s.or("shots", a.shots, m.shots)?;
    m.h = s.or("h", a.h, m.h)?;
    let sampler = parse_sampler(&s.or("sampler", a.sampler.clone(), sampler_name(RoundSampler::Exact).to_string())?)?;
    let seed = resolve_seed(s, seed_flag, m.scenario.seed)?;
    let h0 = m.h0()?;
    let plan = m.plan(&h0)?;
    let cfg = m.cusum(&plan)?;
    let sweep = delay_vs_deviation_sweep(&h0, &pre.norms, m.trials, &plan, &cfg, seed, m.horizon, sampler)?;

    let mut rows = Vec::new();
    for r in &sweep {
        for (v, method) in [(r.median, "median"), (r.lo, "p2.5"), (r.hi, "p97.5")] {
            rows.push(format!("{},{},{v},{method}", cfg.h, r.norm));
        }
    }
    let summary: Vec<Value> = sweep
        .iter()
        .map(|r| {
            json!({
                "norm": r.norm,
                "median": r.median,
                "lo": r.lo,
                "hi": r.hi,
                "censored_fraction": r.censored_fraction,
                "steps": r.steps,
            })
        })
        .collect();
    let config = json!({"preset": "fig4-right", "settings": pre, "sampler": sampler_name(sampler)});
    let meta = Meta::new("arl", seed, config);
    let mut out = OutputSet::default();
    out.csv("fig4-right.csv", &meta, FIG4_COLUMNS, rows);
    out.json("fig4-right.json", &meta, json!({"plan": plan, "p": cfg.p, "q": cfg.q, "rows": summary}));
    Ok(out)
}
