//! Entanglement between the two emitters, built up through the shared cavity
//! mode, with and without feedback.
//!
//!     cargo run --release --example concurrence

use std::f64::consts::PI;

use feedback_qed::observables::{concurrence, reduced_density_matrix};
use feedback_qed::{CouplingMode, Delay, FeedbackSystem, KGrid, ParamsBuilder, StateVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ParamsBuilder::new()
        .omega0(1.1e5)
        .g(40.0)
        .epsilon(0.035)
        .delay(Delay::Omega0Tau(4.0 * PI))
        .build()?;
    let t_end = 8.0;
    for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
        let grid = KGrid::with_horizon(&params, mode, 60.0, t_end, 1.0)?;
        let sys = FeedbackSystem::new(params, grid.clone(), mode);
        let dt = 0.8 * sys.max_stable_dt();
        let stride = (1.0 / dt).round() as usize;
        println!("{mode}");
        let mut failure = None;
        sys.evolve(&StateVector::vacuum(&grid)?, t_end, dt, stride, |t, s| {
            match reduced_density_matrix(s).and_then(|rho| concurrence(&rho)) {
                Ok(c) => println!("  t = {t:5.2}  C = {c:.4e}"),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e.into());
        }
    }
    Ok(())
}
