//! Stationary g² of the cavity without feedback against the drive strength.
//! The appended comment line reports whether the series is monotonic.
//!
//!     cargo run --release --example drive_sweep

use feedback_qed::cli::{sweep_drive, Numerics, RunConfig, SweepParam, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::from_text("omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 6.283185307179586\n")?;
    let numerics = Numerics {
        bandwidth: Some(100.0),
        ..Numerics::default()
    };
    let spec = SweepSpec::linspace(SweepParam::Epsilon, 0.01, 0.1, 4, numerics)?.with_ladder(vec![12.0]);
    let table = sweep_drive(&cfg, &spec)?;
    table.write_csv(std::io::stdout().lock())?;
    Ok(())
}
