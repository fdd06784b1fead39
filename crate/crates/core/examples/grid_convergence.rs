//! Stationary values on the default grid and on one with twice the modes and
//! twice the bandwidth, plus the observed RK4 order from step halving.
//!
//!     cargo run --release --example grid_convergence [feedback|reference]

use feedback_qed::cli::{converge, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "reference".into());
    let cfg = RunConfig::from_text(&format!(
        "omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 12.566370614359172\nmode = {mode}\n"
    ))?;
    let report = converge(&cfg)?;
    report.write_csv(std::io::stdout().lock())?;
    Ok(())
}
