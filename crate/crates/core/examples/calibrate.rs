//! Exact per-input rejection statistics for the figure presets.
//!
//! For each deviation norm this averages the exact rejection probability and
//! the infidelity over all 6^n inputs, and reports how often the fraction rule
//! would fail a 2e4-shot run. Use it to tune `c`, `kappa`, `C_N` or the norm
//! grids against the exact oracle.
//!
//!     cargo run --release -p hamcert --example calibrate [n]

use hamcert::certify::Certifier;
use hamcert::cusum::binomial_pmf;
use hamcert::monitor::unit_direction;
use hamcert::presets::{fig2, fig4_right};
use hamcert::qstate::{fidelity, ProductStateLabel};
use hamcert::rng::stream;

fn main() -> hamcert::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let sweep = fig2(n);
    let h0 = sweep.rydberg.hamiltonian(n)?;
    let plan = sweep.plan(&h0)?;
    println!("n={n} M={:.4} t={} order={}", h0.norm_bound(), plan.t, plan.order);
    let dir = unit_direction(&mut stream(sweep.direction_seed, 0), n)?;
    let shots_total = plan.rounds * plan.shots;
    println!("dev_norm mean_reject mean_infidelity ratio p_fail(frac>1e-4 over {shots_total})");
    let mut norms = sweep.dev_norms.clone();
    norms.extend(fig4_right()?.norms);
    for norm in norms {
        let h = h0.add_scaled(&dir, norm)?;
        let cert = Certifier::new(&h, &h0, &plan)?;
        let labels = 6usize.pow(n as u32);
        let (mut rej, mut inf) = (0.0, 0.0);
        for ix in 0..labels {
            let label = ProductStateLabel::from_index(n, ix);
            rej += cert.reject_probability(&label)?;
            let (psi, phi) = cert.states(&label)?;
            inf += 1.0 - fidelity(&psi, &phi)?;
        }
        rej /= labels as f64;
        inf /= labels as f64;
        let limit = (1e-4 * shots_total as f64).floor() as usize;
        let pmf = binomial_pmf(shots_total, rej);
        let pass: f64 = pmf[..=limit].iter().sum();
        println!("{norm:8.3} {rej:11.3e} {inf:15.3e} {:5.3} {:.4}", rej / inf.max(1e-300), 1.0 - pass);
    }
    Ok(())
}
