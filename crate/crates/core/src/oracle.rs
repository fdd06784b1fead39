//! Brute-force reference: the truncated Hamiltonian assembled as a sparse
//! matrix by letting each operator act on occupation-number kets, with the
//! vacuum amplitude kept dynamical.
//!
//! The matrix uses `+G a† d + G* d† a` for the continuum coupling. The
//! hand-written equations of motion in [`crate::dynamics`] correspond to the
//! gauge `d_j → −d_j`, so [`FullBasis::embed`] and [`FullBasis::extract`]
//! flip the sign of every amplitude with exactly one continuum photon.
//! Observables are unaffected by the flip.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::dressed::BareKet;
use crate::error::{Error, Result};
use crate::model::{coupling, CouplingMode, KGrid, SystemParams};
use crate::state::{Amp, Family, StateVector, DEFAULT_MEMORY_BUDGET};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Photons in the continuum: none, one in mode `j`, or a pair `j ≤ l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Continuum {
    Empty,
    One(usize),
    Two(usize, usize),
}

impl Continuum {
    fn count(&self) -> u8 {
        match self {
            Continuum::Empty => 0,
            Continuum::One(_) => 1,
            Continuum::Two(..) => 2,
        }
    }

    /// `d_j† |self⟩` as (coefficient, ket).
    fn create(&self, j: usize) -> Option<(f64, Continuum)> {
        match *self {
            Continuum::Empty => Some((1.0, Continuum::One(j))),
            Continuum::One(l) if l == j => Some((std::f64::consts::SQRT_2, Continuum::Two(j, j))),
            Continuum::One(l) => Some((1.0, Continuum::Two(j.min(l), j.max(l)))),
            Continuum::Two(..) => None,
        }
    }

    /// `d_j |self⟩` as (coefficient, ket).
    fn annihilate(&self, j: usize) -> Option<(f64, Continuum)> {
        match *self {
            Continuum::Empty => None,
            Continuum::One(l) => (l == j).then_some((1.0, Continuum::Empty)),
            Continuum::Two(a, b) if a == j && b == j => {
                Some((std::f64::consts::SQRT_2, Continuum::One(j)))
            }
            Continuum::Two(a, b) if a == j => Some((1.0, Continuum::One(b))),
            Continuum::Two(a, b) if b == j => Some((1.0, Continuum::One(a))),
            Continuum::Two(..) => None,
        }
    }
}

/// `|cavity photons, emitter 1, emitter 2, continuum⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ket {
    pub bare: BareKet,
    pub continuum: Continuum,
}

impl Ket {
    pub fn excitations(&self) -> u8 {
        self.bare.excitations() + self.continuum.count()
    }
}

/// Every ket with at most two excitations over `n` continuum modes, with a
/// bijective index.
#[derive(Debug, Clone)]
pub struct FullBasis {
    n: usize,
    kets: Vec<Ket>,
    index: HashMap<Ket, usize>,
}

impl FullBasis {
    pub fn new(n: usize) -> Self {
        let mut kets = Vec::new();
        let mut bare = Vec::new();
        for photons in 0..=2u8 {
            for e1 in [false, true] {
                for e2 in [false, true] {
                    let k = BareKet::new(photons, e1, e2);
                    if k.excitations() <= 2 {
                        bare.push(k);
                    }
                }
            }
        }
        for &b in &bare {
            kets.push(Ket {
                bare: b,
                continuum: Continuum::Empty,
            });
        }
        for &b in bare.iter().filter(|b| b.excitations() <= 1) {
            for j in 0..n {
                kets.push(Ket {
                    bare: b,
                    continuum: Continuum::One(j),
                });
            }
        }
        let vac = BareKet::new(0, false, false);
        for j in 0..n {
            for l in j..n {
                kets.push(Ket {
                    bare: vac,
                    continuum: Continuum::Two(j, l),
                });
            }
        }
        let index = kets.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Self { n, kets, index }
    }

    pub fn dimension(&self) -> usize {
        self.kets.len()
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn ket(&self, i: usize) -> Ket {
        self.kets[i]
    }

    pub fn index_of(&self, k: &Ket) -> Option<usize> {
        self.index.get(k).copied()
    }

    /// Position of a continuum-free bare ket.
    pub fn bare_index(&self, b: BareKet) -> Option<usize> {
        self.index_of(&Ket {
            bare: b,
            continuum: Continuum::Empty,
        })
    }

    /// Full-basis amplitudes of a closure state (gauge sign applied).
    pub fn embed(&self, s: &StateVector) -> Vec<Complex64> {
        assert_eq!(s.modes(), self.n);
        self.kets.iter().map(|k| lookup(s, k)).collect()
    }

    pub fn extract(&self, x: &[Complex64]) -> Result<StateVector> {
        let mut s = StateVector::zeros(self.n)?;
        for (k, &v) in self.kets.iter().zip(x) {
            store(&mut s, k, v);
        }
        Ok(s)
    }
}

fn scalar_amp(b: BareKet) -> Amp {
    match (b.photons, b.emitter1, b.emitter2) {
        (0, false, false) => Amp::Gg00,
        (0, false, true) => Amp::Ge00,
        (0, true, false) => Amp::Eg00,
        (0, true, true) => Amp::Ee00,
        (1, false, false) => Amp::Gg10,
        (1, false, true) => Amp::Ge10,
        (1, true, false) => Amp::Eg10,
        (2, false, false) => Amp::Gg20,
        _ => unreachable!("not a two-excitation ket"),
    }
}

fn family(b: BareKet) -> Family {
    match (b.photons, b.emitter1, b.emitter2) {
        (0, false, false) => Family::Gg0k,
        (0, false, true) => Family::Ge0k,
        (0, true, false) => Family::Eg0k,
        (1, false, false) => Family::Gg1k,
        _ => unreachable!("not a one-photon family"),
    }
}

fn lookup(s: &StateVector, k: &Ket) -> Complex64 {
    match k.continuum {
        Continuum::Empty => s.get(scalar_amp(k.bare)),
        Continuum::One(j) => -s.family(family(k.bare))[j],
        Continuum::Two(j, l) => s.pair(j, l),
    }
}

fn store(s: &mut StateVector, k: &Ket, v: Complex64) {
    match k.continuum {
        Continuum::Empty => s.set(scalar_amp(k.bare), v),
        Continuum::One(j) => s.family_mut(family(k.bare))[j] = -v,
        Continuum::Two(j, l) => s.set_pair(j, l, v),
    }
}

/// One coupling entry `row ← col` carrying G_j(t) or its conjugate.
#[derive(Debug, Clone, Copy)]
struct CouplingEntry {
    row: usize,
    col: usize,
    mode: usize,
    weight: f64,
    conjugate: bool,
}

/// Sparse truncated Hamiltonian `H(t) = H_static + H_coupling(t)`.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub basis: FullBasis,
    params: SystemParams,
    grid: KGrid,
    mode: CouplingMode,
    /// (row, col, value), non-Hermitian only through −iγ/2 on the diagonal.
    static_part: Vec<(usize, usize, Complex64)>,
    coupling: Vec<CouplingEntry>,
    /// Drive matrix elements that would leave the truncated space.
    pub dropped_drive_terms: usize,
}

/// Rough memory footprint of an assembled Hamiltonian over `n` modes.
pub fn assembly_bytes(n: usize) -> usize {
    let d = 8 + 4 * n + n * (n + 1) / 2;
    // ket + hash entry, ~5 static and ~4 coupling entries per ket
    d * (2 * std::mem::size_of::<Ket>() + 16) + d * 5 * 32 + d * 4 * 40
}

impl SparseHamiltonian {
    pub fn assemble(params: &SystemParams, grid: &KGrid, mode: CouplingMode) -> Result<Self> {
        Self::assemble_with_budget(params, grid, mode, DEFAULT_MEMORY_BUDGET)
    }

    pub fn assemble_with_budget(
        params: &SystemParams,
        grid: &KGrid,
        mode: CouplingMode,
        budget_bytes: usize,
    ) -> Result<Self> {
        let n = grid.len();
        let required_bytes = assembly_bytes(n);
        if required_bytes > budget_bytes {
            return Err(Error::MemoryBudget {
                modes: n,
                required_bytes,
                budget_bytes,
            });
        }
        let basis = FullBasis::new(n);
        let mut static_part = Vec::new();
        let mut coupling_entries = Vec::new();
        let mut dropped = 0usize;
        let p = params;

        for (col, ket) in basis.kets.iter().enumerate() {
            let b = ket.bare;
            let push = |list: &mut Vec<(usize, usize, Complex64)>, target: Ket, v: Complex64| {
                if let Some(row) = basis.index_of(&target) {
                    list.push((row, col, v));
                    true
                } else {
                    false
                }
            };
            // diagonal: Δ a†a + δ Σ σ⁺σ⁻ − iγ/2 Σ σ⁺σ⁻
            let ne = b.emitter1 as u8 + b.emitter2 as u8;
            let diag = Complex64::new(
                p.cavity_detuning * b.photons as f64 + p.emitter_detuning * ne as f64,
                -0.5 * p.gamma * ne as f64,
            );
            if diag != ZERO {
                static_part.push((col, col, diag));
            }
            let with = |bare: BareKet| Ket {
                bare,
                continuum: ket.continuum,
            };
            let nph = b.photons as f64;
            // g_i (a† σ_i⁻ + σ_i⁺ a)
            for (which, gi) in [(1, p.g1), (2, p.g2)] {
                let excited = if which == 1 { b.emitter1 } else { b.emitter2 };
                let flip = |e: bool, photons: u8| {
                    if which == 1 {
                        BareKet::new(photons, e, b.emitter2)
                    } else {
                        BareKet::new(photons, b.emitter1, e)
                    }
                };
                if excited {
                    push(
                        &mut static_part,
                        with(flip(false, b.photons + 1)),
                        Complex64::new(gi * (nph + 1.0).sqrt(), 0.0),
                    );
                } else if b.photons > 0 {
                    push(
                        &mut static_part,
                        with(flip(true, b.photons - 1)),
                        Complex64::new(gi * nph.sqrt(), 0.0),
                    );
                }
            }
            // ε (a† + a)
            let up = with(BareKet::new(b.photons + 1, b.emitter1, b.emitter2));
            if !push(&mut static_part, up, Complex64::new(p.epsilon * (nph + 1.0).sqrt(), 0.0))
                && p.epsilon != 0.0
            {
                dropped += 1;
            }
            if b.photons > 0 {
                let down = with(BareKet::new(b.photons - 1, b.emitter1, b.emitter2));
                push(&mut static_part, down, Complex64::new(p.epsilon * nph.sqrt(), 0.0));
            }
            // G_j a† d_j and G_j* d_j† a
            for j in 0..n {
                if let Some((cd, cont)) = ket.continuum.annihilate(j) {
                    let target = Ket {
                        bare: BareKet::new(b.photons + 1, b.emitter1, b.emitter2),
                        continuum: cont,
                    };
                    if let Some(row) = basis.index_of(&target) {
                        coupling_entries.push(CouplingEntry {
                            row,
                            col,
                            mode: j,
                            weight: cd * (nph + 1.0).sqrt(),
                            conjugate: false,
                        });
                    }
                }
                if b.photons > 0 {
                    if let Some((cc, cont)) = ket.continuum.create(j) {
                        let target = Ket {
                            bare: BareKet::new(b.photons - 1, b.emitter1, b.emitter2),
                            continuum: cont,
                        };
                        if let Some(row) = basis.index_of(&target) {
                            coupling_entries.push(CouplingEntry {
                                row,
                                col,
                                mode: j,
                                weight: cc * nph.sqrt(),
                                conjugate: true,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            basis,
            params: *params,
            grid: grid.clone(),
            mode,
            static_part,
            coupling: coupling_entries,
            dropped_drive_terms: dropped,
        })
    }

    pub fn dimension(&self) -> usize {
        self.basis.dimension()
    }

    pub fn nonzeros(&self) -> usize {
        self.static_part.len() + self.coupling.len()
    }

    fn phasors(&self, t: f64) -> Vec<Complex64> {
        (0..self.grid.len())
            .map(|j| coupling(self.mode, j, t, &self.params, &self.grid))
            .collect()
    }

    /// `H(t) x`.
    pub fn apply(&self, t: f64, x: &[Complex64]) -> Vec<Complex64> {
        let g = self.phasors(t);
        let mut y = self.apply_static(x);
        for e in &self.coupling {
            let gj = if e.conjugate { g[e.mode].conj() } else { g[e.mode] };
            y[e.row] += gj * e.weight * x[e.col];
        }
        y
    }

    /// Time-independent part only.
    pub fn apply_static(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; x.len()];
        for &(r, c, v) in &self.static_part {
            y[r] += v * x[c];
        }
        y
    }

    /// Schrödinger right-hand side `−i H(t) x`.
    pub fn rhs(&self, t: f64, x: &[Complex64]) -> Vec<Complex64> {
        self.apply(t, x).into_iter().map(|v| -I * v).collect()
    }

    /// Dense `H(t)`; small bases only.
    pub fn to_dense(&self, t: f64) -> Vec<Vec<Complex64>> {
        let d = self.dimension();
        let g = self.phasors(t);
        let mut m = vec![vec![ZERO; d]; d];
        for &(r, c, v) in &self.static_part {
            m[r][c] += v;
        }
        for e in &self.coupling {
            let gj = if e.conjugate { g[e.mode].conj() } else { g[e.mode] };
            m[e.row][e.col] += gj * e.weight;
        }
        m
    }

    /// `⟨row|H(t)|col⟩`.
    pub fn element(&self, t: f64, row: &Ket, col: &Ket) -> Complex64 {
        let (Some(r), Some(c)) = (self.basis.index_of(row), self.basis.index_of(col)) else {
            return ZERO;
        };
        let mut x = vec![ZERO; self.dimension()];
        x[c] = Complex64::new(1.0, 0.0);
        self.apply(t, &x)[r]
    }

    /// ε |c_gg20|: scale of the drive amplitude into the omitted
    /// three-excitation sector.
    pub fn boundary_leak(&self, x: &[Complex64]) -> f64 {
        let i = self
            .basis
            .bare_index(BareKet::new(2, false, false))
            .expect("gg20 is in every basis");
        self.params.epsilon * x[i].norm()
    }

    /// Fixed-step RK4 on the full system; the observer sees the initial
    /// state, every `stride`-th step and the final state.
    pub fn evolve_full<F>(
        &self,
        initial: &[Complex64],
        t_end: f64,
        dt: f64,
        stride: usize,
        mut observer: F,
    ) -> Result<Vec<Complex64>>
    where
        F: FnMut(f64, &[Complex64]),
    {
        if !(t_end > 0.0) || !(dt > 0.0) || stride == 0 {
            return Err(Error::Domain(format!(
                "need t_end > 0, dt > 0, stride ≥ 1 (got {t_end}, {dt}, {stride})"
            )));
        }
        let recurrence = self.grid.recurrence_time();
        if !(recurrence > t_end) {
            return Err(Error::GridTooCoarse {
                recurrence,
                t_end,
                required_modes: KGrid::required_modes(self.grid.half_width, self.grid.c, t_end),
            });
        }
        let steps = crate::dynamics::step_count(t_end, dt);
        let h = t_end / steps as f64;
        let mut x = initial.to_vec();
        observer(0.0, &x);
        let axpy = |base: &[Complex64], a: f64, k: &[Complex64]| -> Vec<Complex64> {
            base.iter().zip(k).map(|(b, k)| b + k * a).collect()
        };
        for step in 1..=steps {
            let t = (step - 1) as f64 * h;
            let k1 = self.rhs(t, &x);
            let k2 = self.rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1));
            let k3 = self.rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2));
            let k4 = self.rhs(t + h, &axpy(&x, h, &k3));
            for i in 0..x.len() {
                x[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
            if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Diverged { t: step as f64 * h, dt: h });
            }
            if step % stride as u64 == 0 || step == steps {
                observer(step as f64 * h, &x);
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Delay, ParamsBuilder};
    use std::f64::consts::PI;

    fn params(gamma: f64) -> SystemParams {
        ParamsBuilder::new()
            .omega0(1.1e5)
            .g(40.0)
            .epsilon(0.035)
            .gamma(gamma)
            .delay(Delay::Omega0Tau(4.0 * PI))
            .build()
            .unwrap()
    }

    #[test]
    fn basis_is_bijective() {
        let b = FullBasis::new(5);
        assert_eq!(b.dimension(), crate::state::state_dimension(5));
        for i in 0..b.dimension() {
            assert_eq!(b.index_of(&b.ket(i)), Some(i));
            assert!(b.ket(i).excitations() <= 2);
        }
    }

    #[test]
    fn embed_extract_round_trip() {
        let mut s = StateVector::zeros(3).unwrap();
        s.set(Amp::Ee00, Complex64::new(0.1, 0.2));
        s.family_mut(Family::Eg0k)[1] = Complex64::new(-0.3, 0.0);
        s.set_pair(0, 2, Complex64::new(0.0, 0.7));
        let b = FullBasis::new(3);
        let x = b.embed(&s);
        assert_eq!(b.extract(&x).unwrap(), s);
        let k = Ket {
            bare: BareKet::new(0, true, false),
            continuum: Continuum::One(1),
        };
        assert_eq!(x[b.index_of(&k).unwrap()], Complex64::new(0.3, 0.0));
    }

    #[test]
    fn hermitian_without_decay() {
        let p = params(0.0);
        for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
            let grid = KGrid::build(&p, mode, 4, 50.0, 0.1).unwrap();
            let h = SparseHamiltonian::assemble(&p, &grid, mode).unwrap();
            let m = h.to_dense(0.37);
            for r in 0..m.len() {
                for c in 0..m.len() {
                    assert_eq!(m[r][c], m[c][r].conj());
                }
            }
        }
    }

    #[test]
    fn named_matrix_elements() {
        let p = params(1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 4, 50.0, 0.1).unwrap();
        let h = SparseHamiltonian::assemble(&p, &grid, CouplingMode::Feedback).unwrap();
        let ket = |ph, e1, e2, continuum| Ket {
            bare: BareKet::new(ph, e1, e2),
            continuum,
        };
        let e = Continuum::Empty;
        assert_eq!(h.element(0.0, &ket(1, false, false, e), &ket(0, true, false, e)), Complex64::new(40.0, 0.0));
        assert_eq!(
            h.element(0.0, &ket(2, false, false, e), &ket(1, false, false, e)),
            Complex64::new(0.035 * std::f64::consts::SQRT_2, 0.0)
        );
        let gj = coupling(CouplingMode::Feedback, 2, 0.2, &p, &grid);
        let got = h.element(0.2, &ket(1, false, false, Continuum::One(2)), &ket(0, false, false, Continuum::Two(2, 2)));
        assert!((got - std::f64::consts::SQRT_2 * gj).norm() < 1e-15);
        assert!(h.dropped_drive_terms > 0);
    }

    #[test]
    fn budget_is_enforced() {
        let p = params(1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 64, 50.0, 0.1).unwrap();
        assert!(matches!(
            SparseHamiltonian::assemble_with_budget(&p, &grid, CouplingMode::Feedback, 1000),
            Err(Error::MemoryBudget { .. })
        ));
    }
}
