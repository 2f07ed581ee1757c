use hamcert::certify::{plan_parameters, Certifier, PlanOverrides, RoundSampler};
use hamcert::cusum::{arl_monte_carlo, CusumConfig};
use hamcert::error::Error;
use hamcert::monitor::{
    detect, detect_fixed, gue_perturbation, percentile, round_count_distribution, unit_direction,
    DriftMode, DriftScenario, MonitorOptions, PerturbationLaw,
};
use hamcert::pauli::{frobenius_distance, rydberg_hamiltonian, PauliString, RydbergParams};
use hamcert::presets;
use hamcert::rng::stream;

#[test]
fn gue_single_qubit_statistics() {
    let mut rng = stream(41, 0);
    let draws = 10_000;
    let mut sums = [0.0f64; 3];
    let mut sqs = [0.0f64; 3];
    for _ in 0..draws {
        let g = gue_perturbation(&mut rng, 1, 1.0).unwrap();
        for (k, w) in ["X", "Y", "Z"].iter().enumerate() {
            let c = g.coefficient(&w.parse::<PauliString>().unwrap());
            sums[k] += c;
            sqs[k] += c * c;
        }
    }
    let nd = draws as f64;
    let vars: Vec<f64> = sqs.iter().map(|s| s / nd).collect();
    for k in 0..3 {
        // Each coefficient is Tr(P A) / 2 with variance 1/2 under this convention.
        assert!((sums[k] / nd).abs() < 3.0 * (0.5 / nd).sqrt());
        assert!((vars[k] - 0.5).abs() < 5.0 * 0.5 * (2.0 / nd).sqrt());
    }
    let (lo, hi) = vars.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 1.05, "{vars:?}");
}

fn small_setup() -> (hamcert::pauli::SparseHamiltonian, hamcert::certify::ProtocolPlan) {
    let h0 = rydberg_hamiltonian(3, RydbergParams::default()).unwrap();
    let over = PlanOverrides {
        t: Some(0.1),
        xi: Some(0.002),
        shots: Some(100),
        ..Default::default()
    };
    let plan = plan_parameters(3, h0.norm_bound(), 0.2, 0.01, &over).unwrap();
    (h0, plan)
}

#[test]
fn fixed_direction_drift_accumulates_or_not() {
    let (h0, plan) = small_setup();
    let mut sc = DriftScenario::constant(&h0);
    sc.law = PerturbationLaw::FixedDirection;
    sc.sigma_small = 0.01;
    sc.sigma_large = 0.1;
    sc.window_start = 0.5;
    sc.window_width = 0.3;
    sc.seed = 3;
    let mut walk = sc.walk(&h0, 0, plan.t).unwrap();
    let mut expect = 0.0;
    for i in 1..=12 {
        expect += if sc.in_window(i, plan.t) { 0.1 } else { 0.01 };
        let d = frobenius_distance(walk.next_hamiltonian().unwrap(), &h0).unwrap();
        assert!((d - expect).abs() < 1e-12, "step {i}: {d} vs {expect}");
    }
    assert!(!sc.in_window(4, 0.1) && sc.in_window(5, 0.1) && sc.in_window(7, 0.1) && !sc.in_window(8, 0.1));

    sc.mode = DriftMode::Iid;
    let mut walk = sc.walk(&h0, 0, plan.t).unwrap();
    for i in 1..=12 {
        let want = if sc.in_window(i, plan.t) { 0.1 } else { 0.01 };
        let d = frobenius_distance(walk.next_hamiltonian().unwrap(), &h0).unwrap();
        assert!((d - want).abs() < 1e-12);
    }
}

#[test]
fn norm_bound_is_enforced() {
    let (h0, plan) = small_setup();
    let mut sc = DriftScenario::constant(&h0);
    sc.sigma_small = 5.0;
    sc.m_bound = h0.norm_bound() * 1.01;
    let mut walk = sc.walk(&h0, 0, plan.t).unwrap();
    let err = (0..20).find_map(|_| walk.next_hamiltonian().err());
    assert!(matches!(err, Some(Error::NormBound { .. })));
}

#[test]
fn constant_scenario_is_censored() {
    let (h0, plan) = small_setup();
    let cfg = CusumConfig::new(plan.p(), plan.q(), 3.0, plan.shots).unwrap();
    let opts = MonitorOptions {
        horizon: 40,
        ..Default::default()
    };
    let r = detect(&DriftScenario::constant(&h0), &h0, &plan, &cfg, 0, &opts).unwrap();
    assert!(r.censored && r.nu_hat.is_none());
    assert_eq!(r.steps, 40);
    assert!((r.total_time - 40.0 * plan.t * plan.shots as f64).abs() < 1e-12);
    assert!(r.trace.iter().all(|row| row.s < 3.0 && row.frobenius_deviation == 0.0));
}

#[test]
fn changepoint_estimate_replays_from_trace() {
    let (h0, plan) = small_setup();
    let cfg = CusumConfig::new(plan.p(), plan.q(), 3.0, plan.shots).unwrap();
    let mut sc = DriftScenario::constant(&h0);
    sc.law = PerturbationLaw::FixedDirection;
    sc.mode = DriftMode::Iid;
    sc.sigma_large = 1.5;
    sc.window_start = 1.0;
    sc.window_width = 100.0;
    sc.seed = 8;
    let opts = MonitorOptions {
        horizon: 400,
        full_trace: true,
        ..Default::default()
    };
    for trial in 0..5 {
        let r = detect(&sc, &h0, &plan, &cfg, trial, &opts).unwrap();
        assert!(!r.censored);
        let nu = r.nu_hat.unwrap();
        assert!(nu <= r.steps);
        let last_zero = r.trace[..r.steps]
            .iter()
            .filter(|row| row.s == 0.0)
            .map(|row| row.step)
            .max()
            .unwrap_or(0);
        assert_eq!(nu, last_zero);
        assert!(r.trace[r.steps - 1].s >= 3.0 && r.trace[..r.steps - 1].iter().all(|row| row.s < 3.0));
        assert!((r.total_time - r.steps as f64 * plan.t * plan.shots as f64).abs() < 1e-9);
    }
}

fn arl_of(cert: &Certifier, cfg: &CusumConfig, seed: u64) -> (f64, f64) {
    let pmf = round_count_distribution(cert).unwrap();
    let scores: Vec<(f64, f64)> = pmf
        .iter()
        .enumerate()
        .map(|(x, &w)| (cfg.llr(x).unwrap(), w))
        .collect();
    let mc = arl_monte_carlo(&scores, cfg.h, 100_000, 100_000, seed, 0.0).unwrap();
    (mc.mean, mc.stderr)
}

#[test]
fn detection_delay_matches_mixture_arl() {
    let (h0, plan) = small_setup();
    let cfg = CusumConfig::new(plan.p(), plan.q(), 3.0, plan.shots).unwrap();
    let dir = unit_direction(&mut stream(42, 0), 3).unwrap();
    let h = h0.add_scaled(&dir, 1.0).unwrap();
    let cert = Certifier::new(&h, &h0, &plan).unwrap();
    let trials = 300;
    let steps: Vec<f64> = (0..trials)
        .map(|i| {
            let r = detect_fixed(&cert, &cfg, &mut stream(43, i), 10_000).unwrap();
            assert!(!r.censored);
            r.steps as f64
        })
        .collect();
    let mean = steps.iter().sum::<f64>() / trials as f64;
    let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let (arl, se) = arl_of(&cert, &cfg, 44);
    let sigma = (var / trials as f64 + se * se).sqrt();
    assert!((mean - arl).abs() < 3.0 * sigma, "{mean} vs {arl} +- {sigma}");
}

#[test]
fn doubling_shots_roughly_halves_delay() {
    let (h0, plan) = small_setup();
    let dir = unit_direction(&mut stream(45, 0), 3).unwrap();
    let h = h0.add_scaled(&dir, 1.0).unwrap();
    let medians: Vec<f64> = [100, 200]
        .iter()
        .map(|&s| {
            let mut p = plan.clone();
            p.shots = s;
            let cfg = CusumConfig::new(p.p(), p.q(), 3.0, s).unwrap();
            let cert = Certifier::new(&h, &h0, &p)
                .unwrap()
                .with_sampler(RoundSampler::Exact)
                .unwrap();
            let mut steps: Vec<f64> = (0..400)
                .map(|i| detect_fixed(&cert, &cfg, &mut stream(46, i), 10_000).unwrap().steps as f64)
                .collect();
            steps.sort_by(f64::total_cmp);
            percentile(&steps, 50.0)
        })
        .collect();
    let ratio = medians[1] / medians[0];
    assert!((0.35..=0.7).contains(&ratio), "{medians:?}");
}

#[test]
fn fig3_presets_pin_parameters() {
    let left = presets::fig3_left().unwrap();
    let right = presets::fig3_right().unwrap();
    assert_eq!((left.n, left.shots, left.h, left.trials), (3, 100, 3.0, 120));
    assert_eq!(left.xi, 0.002);
    assert_eq!((left.scenario.sigma_large, left.scenario.sigma_small), (0.1, 0.01));
    assert_eq!(right.scenario.sigma_large, right.scenario.sigma_small);
}
