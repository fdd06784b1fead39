//! Stationary g² at the bunching detuning Δ = δ = √1.5 g, where the drive
//! hits the two-photon dressed state: feedback at the constructive phase
//! raises the already large bunching of the plain cavity.
//!
//!     cargo run --release --example bunching

use std::f64::consts::PI;

use feedback_qed::cli::{default_ladder, stationary, Numerics};
use feedback_qed::dressed::{resonance_detuning, Branch};
use feedback_qed::{CouplingMode, Delay, ParamsBuilder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = 40.0;
    let detuning = resonance_detuning(2, Branch::Plus)? * g;
    let params = ParamsBuilder::new()
        .omega0(1.1e5)
        .g(g)
        .epsilon(0.035)
        .cavity_detuning(detuning)
        .delay(Delay::Omega0Tau(4.0 * PI))
        .build()?;
    let numerics = Numerics::default();
    let ladder = default_ladder(numerics.t_end);
    for mode in [CouplingMode::Reference, CouplingMode::Feedback] {
        let p = stationary(&params, mode, &numerics, &ladder)?;
        println!(
            "{mode:>9}: g2 = {:9.2}  n = {:.4e}  P2 = {:.4e}  (t_end {}, {} modes, spread {:.2}%)",
            p.g2.value.unwrap_or(f64::NAN),
            p.n.value.unwrap_or(f64::NAN),
            p.p2.value.unwrap_or(f64::NAN),
            p.t_end,
            p.modes,
            100.0 * p.g2.window_spread
        );
    }
    Ok(())
}
