//! The one- and two-excitation dressed states of the closed system and the
//! cavity detunings that put their lower branches in resonance with the drive.
//!
//!     cargo run --example dressed_catalog

use feedback_qed::cli::{dressed_residual, dressed_table};
use feedback_qed::dressed::{resonance_detuning, Branch};
use feedback_qed::{Delay, ParamsBuilder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = 40.0;
    print!("{}", dressed_table(g)?);
    for m in [1, 2] {
        println!(
            "manifold {m}: Delta = {:+.6} g addresses the lower branch",
            resonance_detuning(m, Branch::Plus)?
        );
    }
    let params = ParamsBuilder::new()
        .omega0(1.1e5)
        .g(g)
        .epsilon(0.0)
        .delay(Delay::Omega0Tau(1.0))
        .build()?;
    println!("largest |Hv - Ev| against the assembled Hamiltonian: {:.2e}", dressed_residual(&params)?);
    Ok(())
}
