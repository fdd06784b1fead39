//! Dressed states of the closed two-emitter cavity (equal couplings,
//! emitters resonant with the cavity) and the detunings that address them.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{Error, Result};

/// `|n, i₁, i₂⟩`: cavity photons and the two emitter states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BareKet {
    pub photons: u8,
    pub emitter1: bool,
    pub emitter2: bool,
}

impl BareKet {
    pub const fn new(photons: u8, emitter1: bool, emitter2: bool) -> Self {
        Self {
            photons,
            emitter1,
            emitter2,
        }
    }

    pub fn excitations(&self) -> u8 {
        self.photons + self.emitter1 as u8 + self.emitter2 as u8
    }

    pub fn label(&self) -> String {
        let e = |x: bool| if x { 'e' } else { 'g' };
        format!("|{}{}{}>", self.photons, e(self.emitter1), e(self.emitter2))
    }
}

/// One eigenstate of a fixed-excitation manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedState {
    pub label: &'static str,
    pub manifold: u8,
    pub amplitudes: Vec<(BareKet, f64)>,
    /// Energy above `manifold · Δ`, in units of g.
    pub energy: f64,
}

impl DressedState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|(_, a)| a * a).sum::<f64>().sqrt()
    }

    pub fn amplitude(&self, ket: BareKet) -> f64 {
        self.amplitudes
            .iter()
            .find(|(k, _)| *k == ket)
            .map_or(0.0, |(_, a)| *a)
    }

    /// Overlap with another dressed state (real amplitudes).
    pub fn overlap(&self, other: &DressedState) -> f64 {
        self.amplitudes
            .iter()
            .map(|(k, a)| a * other.amplitude(*k))
            .sum()
    }
}

const GG1: BareKet = BareKet::new(1, false, false);
const GE0: BareKet = BareKet::new(0, false, true);
const EG0: BareKet = BareKet::new(0, true, false);
const GG2: BareKet = BareKet::new(2, false, false);
const GE1: BareKet = BareKet::new(1, false, true);
const EG1: BareKet = BareKet::new(1, true, false);
const EE0: BareKet = BareKet::new(0, true, true);

/// The seven dressed states of the one- and two-excitation manifolds.
/// Energies scale with `g`; amplitudes do not.
pub fn dressed_states(g: f64) -> Result<Vec<DressedState>> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Domain(format!("coupling g must be positive, got {g}")));
    }
    let s3 = 1.0 / 3f64.sqrt();
    let s6 = 1.0 / 6f64.sqrt();
    let r6 = 6f64.sqrt();
    let state = |label, manifold, amplitudes: Vec<(BareKet, f64)>, energy: f64| DressedState {
        label,
        manifold,
        amplitudes,
        energy: energy * g,
    };
    Ok(vec![
        state("1_0", 1, vec![(GE0, FRAC_1_SQRT_2), (EG0, -FRAC_1_SQRT_2)], 0.0),
        state("1_+", 1, vec![(GG1, FRAC_1_SQRT_2), (GE0, 0.5), (EG0, 0.5)], SQRT_2),
        state("1_-", 1, vec![(GG1, FRAC_1_SQRT_2), (GE0, -0.5), (EG0, -0.5)], -SQRT_2),
        state("2_0^1", 2, vec![(GG2, s3), (EE0, -r6 / 3.0)], 0.0),
        state("2_0^2", 2, vec![(GE1, FRAC_1_SQRT_2), (EG1, -FRAC_1_SQRT_2)], 0.0),
        state("2_+", 2, vec![(GG2, s3), (GE1, 0.5), (EG1, 0.5), (EE0, s6)], r6),
        state("2_-", 2, vec![(GG2, s3), (GE1, -0.5), (EG1, -0.5), (EE0, s6)], -r6),
    ])
}

/// Which member of a ± pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Cavity detuning Δ, in units of g, that brings the given dressed branch
/// into resonance with the drive (one photon per excitation).
pub fn resonance_detuning(manifold: u8, branch: Branch) -> Result<f64> {
    let magnitude = match manifold {
        1 => SQRT_2,
        2 => 6f64.sqrt() / 2.0,
        m => return Err(Error::Domain(format!("manifold must be 1 or 2, got {m}"))),
    };
    Ok(match branch {
        Branch::Plus => magnitude,
        Branch::Minus => -magnitude,
    })
}
