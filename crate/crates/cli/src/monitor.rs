use hamcert::certify::{ProtocolPlan, RoundSampler};
use hamcert::cusum::{changepoint_mle, CusumConfig, CusumDetector, TraceRow};
use hamcert::monitor::{detect, percentile, DriftMode, MonitorOptions, MonitorRow, PerturbationLaw};
use hamcert::presets::{self, MonitorPreset};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::certify::{parse_sampler, read_counts, rydberg_settings};
use crate::output::{Meta, OutputSet};
use crate::settings::Settings;
use crate::{resolve_seed, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `fig3-left` (default) or `fig3-right`; other keys override it.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    /// Rydberg detuning.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rb: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    sigma_small: Option<f64>,
    #[arg(long)]
    sigma_large: Option<f64>,
    #[arg(long)]
    window_start: Option<f64>,
    #[arg(long)]
    window_width: Option<f64>,
    #[arg(long)]
    shots: Option<usize>,
    /// CUSUM threshold.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// `gue` or `fixed-direction`.
    #[arg(long)]
    law: Option<String>,
    /// `accumulate` or `iid`.
    #[arg(long)]
    drift: Option<String>,
    #[arg(long)]
    m_bound: Option<f64>,
    /// `shots` or `exact`.
    #[arg(long)]
    sampler: Option<String>,
    /// Stop each trial at its first crossing instead of recording up to the horizon.
    #[arg(long)]
    stop_at_crossing: bool,
    /// Pre-change reject probability; defaults to xi / (2n).
    #[arg(long)]
    p: Option<f64>,
    /// Post-change reject probability; defaults to xi / n.
    #[arg(long)]
    q: Option<f64>,
    /// Run CUSUM on reject counts read from standard input, one per line.
    #[arg(long)]
    stdin: bool,
}

#[derive(Debug, Clone, Serialize)]
struct Resolved {
    preset: String,
    #[serde(flatten)]
    monitor: MonitorPreset,
    p: f64,
    q: f64,
    sampler: RoundSampler,
    full_trace: bool,
    stdin: bool,
}

type Resolution = (Resolved, CusumConfig, Option<ProtocolPlan>);

fn resolve(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<Resolution, CliError> {
    let preset = s.or("preset", a.preset.clone(), "fig3-left".to_string())?;
    let mut m = match preset.as_str() {
        "fig3-left" => presets::fig3_left()?,
        "fig3-right" => presets::fig3_right()?,
        p => return Err(CliError::Config(format!("unknown monitor preset {p}; expected fig3-left or fig3-right"))),
    };
    m.n = s.or("n", a.n, m.n)?;
    m.rydberg = rydberg_settings(s, [a.omega, a.delta, a.rb, a.a], m.rydberg)?;
    m.xi = s.or("xi", a.xi, m.xi)?;
    m.shots = s.or("shots", a.shots, m.shots)?;
    m.h = s.or("h", a.h, m.h)?;
    m.t = s.or("t", a.t, m.t)?;
    m.trials = s.or("trials", a.trials, m.trials)?;
    m.horizon = s.or("horizon", a.horizon, m.horizon)?;
    let sc = &mut m.scenario;
    sc.sigma_small = s.or("sigma_small", a.sigma_small, sc.sigma_small)?;
    sc.sigma_large = s.or("sigma_large", a.sigma_large, sc.sigma_large)?;
    sc.window_start = s.or("window_start", a.window_start, sc.window_start)?;
    sc.window_width = s.or("window_width", a.window_width, sc.window_width)?;
    if let Some(law) = s.get::<String>("law", a.law.clone())? {
        sc.law = match law.as_str() {
            "gue" => PerturbationLaw::Gue,
            "fixed-direction" => PerturbationLaw::FixedDirection,
            l => return Err(CliError::Config(format!("unknown law {l}; expected gue or fixed-direction"))),
        };
    }
    if let Some(d) = s.get::<String>("drift", a.drift.clone())? {
        sc.mode = match d.as_str() {
            "accumulate" => DriftMode::Accumulate,
            "iid" => DriftMode::Iid,
            d => return Err(CliError::Config(format!("unknown drift {d}; expected accumulate or iid"))),
        };
    }
    sc.seed = resolve_seed(s, seed_flag, sc.seed)?;
    let m_bound = s.get("m_bound", a.m_bound)?;
    if m.trials == 0 || m.horizon == 0 {
        return Err(CliError::Config("trials and horizon must be positive".into()));
    }
    let stdin = s.or("stdin", a.stdin.then_some(true), false)?;
    let p_set = s.get("p", a.p)?;
    let q_set = s.get("q", a.q)?;
    let (plan, default_bound) = if stdin && p_set.is_some() && q_set.is_some() {
        (None, 0.0)
    } else {
        let h0 = m.h0()?;
        (Some(m.plan(&h0)?), 2.0 * h0.norm_bound())
    };
    m.scenario.m_bound = m_bound.unwrap_or(default_bound);
    let p = p_set.or(plan.as_ref().map(|pl| pl.p())).unwrap_or(0.0);
    let q = q_set.or(plan.as_ref().map(|pl| pl.q())).unwrap_or(0.0);
    let cfg = CusumConfig::new(p, q, m.h, m.shots)?;
    let r = Resolved {
        preset,
        p,
        q,
        sampler: parse_sampler(&s.or("sampler", a.sampler.clone(), "shots".to_string())?)?,
        full_trace: !s.or("stop_at_crossing", a.stop_at_crossing.then_some(true), false)?,
        stdin,
        monitor: m,
    };
    Ok((r, cfg, plan))
}

pub fn run(a: &Args, s: &Settings, seed_flag: Option<u64>) -> Result<OutputSet, CliError> {
    let (r, cfg, plan) = resolve(a, s, seed_flag)?;
    let seed = r.monitor.scenario.seed;
    let meta = Meta::new("monitor", seed, serde_json::to_value(&r).expect("serializable"));
    let mut out = OutputSet::default();
    if r.stdin {
        stream_mode(read_counts(std::io::stdin().lock())?, cfg, &meta, &mut out)?;
        return Ok(out);
    }
    let plan = plan.expect("planned unless stdin");
    let m = &r.monitor;
    let h0 = m.h0()?;
    let opts = MonitorOptions {
        horizon: m.horizon,
        full_trace: r.full_trace,
        sampler: r.sampler,
    };
    let results = (0..m.trials as u64)
        .into_par_iter()
        .map(|trial| detect(&m.scenario, &h0, &plan, &cfg, trial, &opts))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = results.iter().enumerate().flat_map(|(k, res)| {
        res.trace.iter().map(move |row| {
            format!("{k},{},{},{},{}", row.step, row.total_time, row.s, row.frobenius_deviation)
        })
    });
    out.csv(&format!("{}.csv", r.preset), &meta, "trial,step,total_time,s,deviation", rows);
    out.csv(
        "monitor_trace.csv",
        &meta,
        MonitorRow::CSV_HEADER,
        results[0].trace.iter().map(MonitorRow::csv_row),
    );

    let longest = results.iter().map(|res| res.trace.len()).max().unwrap_or(0);
    let band: Vec<_> = (0..longest)
        .map(|i| {
            let mut s: Vec<f64> = results.iter().filter_map(|res| res.trace.get(i).map(|row| row.s)).collect();
            s.sort_by(f64::total_cmp);
            json!({
                "step": i + 1,
                "total_time": (i + 1) as f64 * plan.t * plan.shots as f64,
                "trials": s.len(),
                "median": percentile(&s, 50.0),
                "lo": percentile(&s, 2.5),
                "hi": percentile(&s, 97.5),
            })
        })
        .collect();
    let trials: Vec<_> = results
        .iter()
        .enumerate()
        .map(|(k, res)| {
            json!({
                "trial": k,
                "steps": res.steps,
                "total_time": res.total_time,
                "nu_hat": res.nu_hat,
                "censored": res.censored,
            })
        })
        .collect();
    let mut steps: Vec<f64> = results.iter().map(|res| res.steps as f64).collect();
    steps.sort_by(f64::total_cmp);
    let censored = results.iter().filter(|res| res.censored).count();
    out.json(
        &format!("{}.json", r.preset),
        &meta,
        json!({
            "plan": plan,
            "p": cfg.p,
            "q": cfg.q,
            "censored_fraction": censored as f64 / results.len() as f64,
            "median_steps": percentile(&steps, 50.0),
            "trials": trials,
            "band": band,
        }),
    );
    Ok(out)
}

fn stream_mode(counts: Vec<usize>, cfg: CusumConfig, meta: &Meta, out: &mut OutputSet) -> Result<(), CliError> {
    let mut det = CusumDetector::new(cfg);
    let mut rows: Vec<TraceRow> = Vec::new();
    for x in counts {
        let row = det.push(x)?;
        rows.push(row);
        if row.terminated {
            break;
        }
    }
    let st = det.state();
    let nu_hat = if st.terminated { Some(changepoint_mle(st)?) } else { None };
    out.csv("cusum_trace.csv", meta, TraceRow::CSV_HEADER, rows.iter().map(TraceRow::csv_row));
    out.json(
        "cusum_result.json",
        meta,
        json!({
            "steps": st.step,
            "score": st.score,
            "nu_hat": nu_hat,
            "censored": !st.terminated,
        }),
    );
    Ok(())
}
