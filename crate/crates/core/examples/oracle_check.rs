//! Checks the closed equations of motion against the full-basis Hamiltonian:
//! derivatives on random states, traces from the vacuum, norm conservation of
//! the closed system and the dressed-state residuals.
//!
//!     cargo run --release --example oracle_check

use feedback_qed::cli::{verify, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_text(
        "omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 12.566370614359172\nt_end = 0.5\nstride = 5\n",
    )?;
    let report = verify(&cfg)?;
    for c in &report.checks {
        println!(
            "{:<32} {:>10.3e}  (tolerance {:.0e})  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed() { "ok" } else { "FAILED" }
        );
    }
    if !report.passed() {
        std::process::exit(3);
    }
    Ok(())
}
