//! Wall time per RK4 step of the closed equations against the mode count.
//! The pair block dominates, so the cost per stored pair should stay flat.
//!
//!     cargo run --release --example step_throughput [modes...]

use std::f64::consts::PI;
use std::time::Instant;

use feedback_qed::{CouplingMode, Delay, FeedbackSystem, KGrid, ParamsBuilder, Propagator, StateVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sizes: Vec<usize> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    if sizes.is_empty() {
        sizes = vec![250, 500, 1000, 2000];
    }
    let params = ParamsBuilder::new()
        .omega0(1.1e5)
        .g(40.0)
        .epsilon(0.035)
        .delay(Delay::Omega0Tau(4.0 * PI))
        .build()?;
    for n in sizes {
        let grid = KGrid::build(&params, CouplingMode::Feedback, n, 60.0, 0.0)?;
        let sys = FeedbackSystem::new(params, grid.clone(), CouplingMode::Feedback);
        let dt = 0.8 * sys.max_stable_dt();
        let mut prop = Propagator::new(&sys, StateVector::vacuum(&grid)?, 0.0, dt)?;
        let steps = (4e8 / (n * n) as f64).clamp(5.0, 2000.0) as usize;
        let start = Instant::now();
        for _ in 0..steps {
            prop.advance()?;
        }
        let per_step = start.elapsed().as_secs_f64() / steps as f64;
        let pairs = n * (n + 1) / 2;
        println!(
            "N = {n:>5}: {:8.3} ms/step, {:5.2} ns per pair amplitude",
            1e3 * per_step,
            1e9 * per_step / pairs as f64
        );
    }
    Ok(())
}
