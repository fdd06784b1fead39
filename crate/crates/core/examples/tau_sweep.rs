//! Stationary observables against the feedback phase ω₀τ over one period,
//! written as CSV. Constructive interference (ω₀τ = 2πn) maximises the photon
//! number and the emitter entanglement and minimises g².
//!
//!     cargo run --release --example tau_sweep > sweep.csv

use std::f64::consts::PI;

use feedback_qed::cli::{sweep_tau, Numerics, RunConfig, SweepParam, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_text("omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 6.283185307179586\n")?;
    // one period at a quarter of the default resolution, single horizon
    let spec = SweepSpec::linspace(SweepParam::Tau, PI / 5.0, 2.0 * PI, 10, Numerics::default())?
        .with_ladder(vec![24.0]);
    let table = sweep_tau(&cfg, &spec)?;
    table.write_csv(std::io::stdout().lock())?;
    Ok(())
}
