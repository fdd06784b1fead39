//! Photon number and g² from the vacuum up to stationarity, with and without
//! the feedback mirror, at the antibunching working point (Δ = δ = √2 g,
//! constructive phase ω₀τ = 4π).
//!
//!     cargo run --release --example antibunching_trace [t_end]

use std::f64::consts::PI;

use feedback_qed::cli::{run_trace, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t_end: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(12.0);
    let cfg = RunConfig::from_text(&format!(
        "omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = {}\nt_end = {t_end}\nstride = 100\n",
        4.0 * PI
    ))?;
    let table = run_trace(&cfg)?;
    println!("{:>8} {:>12} {:>10} {:>12} {:>10}", "t", "n fb", "g2 fb", "n ref", "g2 ref");
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.5}"));
    for (a, b) in table.feedback.records.iter().zip(&table.reference.records) {
        println!(
            "{:>8.3} {:>12.4e} {:>10} {:>12.4e} {:>10}",
            a.t,
            a.n_photon,
            show(a.g2.value()),
            b.n_photon,
            show(b.g2.value())
        );
    }
    println!(
        "feedback: {} modes, W = {}; reference: {} modes, W = {}; dt = {:.3e}",
        table.feedback.modes,
        table.feedback.bandwidth,
        table.reference.modes,
        table.reference.bandwidth,
        table.feedback.dt
    );
    Ok(())
}
