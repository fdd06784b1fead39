//! Two-excitation truncated wavefunction of the emitters, the cavity mode
//! and the waveguide continuum.
//!
//! Amplitudes are named `c_<emitter1><emitter2><cavity photons><continuum>`:
//! `Ge10` is emitter 1 in the ground state, emitter 2 excited, one cavity
//! photon, empty continuum. Continuum amplitudes carry the √Δk normalization,
//! so discrete modes have unit commutators and every `∫dk` is a plain sum.
//!
//! Two-photon continuum amplitudes are stored once per unordered pair
//! `j ≤ l` as amplitudes of normalized Fock states (`|1_j 1_l⟩` for `j < l`,
//! `|2_j⟩` on the diagonal). With that convention the squared norm of the
//! block is the plain sum of `|c|²` over the stored entries.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::KGrid;

/// Default memory budget for a single state vector.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// Scalar amplitudes without continuum photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Amp {
    Gg00 = 0,
    Ge00 = 1,
    Eg00 = 2,
    Ee00 = 3,
    Gg10 = 4,
    Ge10 = 5,
    Eg10 = 6,
    Gg20 = 7,
}

impl Amp {
    pub const ALL: [Amp; 8] = [
        Amp::Gg00,
        Amp::Ge00,
        Amp::Eg00,
        Amp::Ee00,
        Amp::Gg10,
        Amp::Ge10,
        Amp::Eg10,
        Amp::Gg20,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Amp::Gg00 => "gg00",
            Amp::Ge00 => "ge00",
            Amp::Eg00 => "eg00",
            Amp::Ee00 => "ee00",
            Amp::Gg10 => "gg10",
            Amp::Ge10 => "ge10",
            Amp::Eg10 => "eg10",
            Amp::Gg20 => "gg20",
        }
    }
}

/// Amplitude families with exactly one continuum photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gg0k = 0,
    Ge0k = 1,
    Eg0k = 2,
    Gg1k = 3,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gg0k, Family::Ge0k, Family::Eg0k, Family::Gg1k];
}

pub(crate) const N_SCALARS: usize = 8;

/// Number of complex amplitudes of a state over `n` modes:
/// `8 + 4N + N(N+1)/2`.
pub fn state_dimension(n: usize) -> usize {
    N_SCALARS + 4 * n + n * (n + 1) / 2
}

/// Packed upper triangle (`j ≤ l`, row-major) of the symmetric two-photon
/// block, real and imaginary parts stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlock {
    n: usize,
    pub(crate) re: Vec<f64>,
    pub(crate) im: Vec<f64>,
}

impl PairBlock {
    fn zeros(n: usize) -> Self {
        let len = n * (n + 1) / 2;
        Self {
            n,
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    /// Offset of row `j` in packed storage (entry `(j, j)`).
    #[inline]
    pub fn row_offset(&self, j: usize) -> usize {
        j * (2 * self.n - j + 1) / 2
    }

    /// Packed index of the unordered pair `{j, l}`.
    #[inline]
    pub fn index(&self, j: usize, l: usize) -> usize {
        let (a, b) = if j <= l { (j, l) } else { (l, j) };
        packed_index(self.n, a, b)
    }

    #[inline]
    pub fn get(&self, j: usize, l: usize) -> Complex64 {
        let i = self.index(j, l);
        Complex64::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, j: usize, l: usize, v: Complex64) {
        let i = self.index(j, l);
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    /// Packed entries as complex numbers, row-major over `j ≤ l`.
    pub fn iter(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i))
    }
}

/// Packed row-major index of `(j, l)` with `j ≤ l < n`.
#[inline]
pub(crate) fn packed_index(n: usize, j: usize, l: usize) -> usize {
    debug_assert!(j <= l && l < n);
    // rows 0..j hold n, n-1, ..., n-j+1 entries
    j * (2 * n - j + 1) / 2 + (l - j)
}

/// Truncated wavefunction over a grid of `n` continuum modes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    /// Eight scalars followed by the four single-photon families.
    pub(crate) head: Vec<Complex64>,
    pub(crate) pairs: PairBlock,
}

/// Which single excitation [`StateVector::single_excitation`] creates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Excitation {
    Emitter1,
    Emitter2,
    Cavity,
}

impl StateVector {
    /// All-zero state; rejects grids whose state would exceed the default
    /// memory budget.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::zeros_with_budget(n, DEFAULT_MEMORY_BUDGET)
    }

    pub fn zeros_with_budget(n: usize, budget_bytes: usize) -> Result<Self> {
        let required_bytes = state_dimension(n) * std::mem::size_of::<Complex64>();
        if required_bytes > budget_bytes {
            return Err(Error::MemoryBudget {
                modes: n,
                required_bytes,
                budget_bytes,
            });
        }
        Ok(Self {
            n,
            head: vec![Complex64::new(0.0, 0.0); N_SCALARS + 4 * n],
            pairs: PairBlock::zeros(n),
        })
    }

    /// Empty cavity, both emitters in the ground state, empty continuum.
    pub fn vacuum(grid: &KGrid) -> Result<Self> {
        let mut s = Self::zeros(grid.len())?;
        s.set(Amp::Gg00, Complex64::new(1.0, 0.0));
        Ok(s)
    }

    /// A single excitation in one emitter or the cavity; everything else,
    /// including the vacuum amplitude, is zero.
    pub fn single_excitation(grid: &KGrid, which: Excitation) -> Result<Self> {
        let mut s = Self::zeros(grid.len())?;
        let amp = match which {
            Excitation::Emitter1 => Amp::Eg00,
            Excitation::Emitter2 => Amp::Ge00,
            Excitation::Cavity => Amp::Gg10,
        };
        s.set(amp, Complex64::new(1.0, 0.0));
        Ok(s)
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    /// Number of complex amplitudes.
    pub fn dimension(&self) -> usize {
        state_dimension(self.n)
    }

    #[inline]
    pub fn get(&self, a: Amp) -> Complex64 {
        self.head[a as usize]
    }

    #[inline]
    pub fn set(&mut self, a: Amp, v: Complex64) {
        self.head[a as usize] = v;
    }

    #[inline]
    pub fn family(&self, f: Family) -> &[Complex64] {
        let start = N_SCALARS + f as usize * self.n;
        &self.head[start..start + self.n]
    }

    #[inline]
    pub fn family_mut(&mut self, f: Family) -> &mut [Complex64] {
        let start = N_SCALARS + f as usize * self.n;
        &mut self.head[start..start + self.n]
    }

    /// Two-photon continuum amplitude; symmetric in `(j, l)`.
    #[inline]
    pub fn pair(&self, j: usize, l: usize) -> Complex64 {
        self.pairs.get(j, l)
    }

    #[inline]
    pub fn set_pair(&mut self, j: usize, l: usize, v: Complex64) {
        self.pairs.set(j, l, v);
    }

    pub fn pairs(&self) -> &PairBlock {
        &self.pairs
    }

    /// Scalars and single-photon families as one slice.
    pub fn head(&self) -> &[Complex64] {
        &self.head
    }

    pub fn scale(&mut self, a: f64) {
        self.head.iter_mut().for_each(|c| *c *= a);
        self.pairs.re.iter_mut().for_each(|c| *c *= a);
        self.pairs.im.iter_mut().for_each(|c| *c *= a);
    }

    /// Multiplies every amplitude by a complex factor.
    pub fn rotate(&mut self, z: Complex64) {
        self.head.iter_mut().for_each(|c| *c *= z);
        for (r, i) in self.pairs.re.iter_mut().zip(self.pairs.im.iter_mut()) {
            let v = Complex64::new(*r, *i) * z;
            *r = v.re;
            *i = v.im;
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &StateVector) {
        assert_eq!(self.n, other.n, "state shapes differ");
        for (x, y) in self.head.iter_mut().zip(&other.head) {
            *x += y * a;
        }
        for (x, y) in self.pairs.re.iter_mut().zip(&other.pairs.re) {
            *x += a * y;
        }
        for (x, y) in self.pairs.im.iter_mut().zip(&other.pairs.im) {
            *x += a * y;
        }
    }

    /// `self = base + a · dir`.
    pub fn assign_axpy(&mut self, base: &StateVector, a: f64, dir: &StateVector) {
        for ((x, b), d) in self.head.iter_mut().zip(&base.head).zip(&dir.head) {
            *x = b + d * a;
        }
        for ((x, b), d) in self.pairs.re.iter_mut().zip(&base.pairs.re).zip(&dir.pairs.re) {
            *x = b + a * d;
        }
        for ((x, b), d) in self.pairs.im.iter_mut().zip(&base.pairs.im).zip(&dir.pairs.im) {
            *x = b + a * d;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.head.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.pairs.re.iter().all(|x| x.is_finite())
            && self.pairs.im.iter().all(|x| x.is_finite())
    }

    /// Every amplitude in storage order: scalars, families, packed pairs.
    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.dimension());
        v.extend_from_slice(&self.head);
        v.extend(self.pairs.iter());
        v
    }

    /// Inverse of [`StateVector::to_flat`].
    pub fn from_flat(n: usize, flat: &[Complex64]) -> Result<Self> {
        if flat.len() != state_dimension(n) {
            return Err(Error::Domain(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                state_dimension(n)
            )));
        }
        let mut s = Self::zeros(n)?;
        let split = N_SCALARS + 4 * n;
        s.head.copy_from_slice(&flat[..split]);
        for (i, c) in flat[split..].iter().enumerate() {
            s.pairs.re[i] = c.re;
            s.pairs.im[i] = c.im;
        }
        Ok(s)
    }

    /// Largest absolute difference between two states of equal shape.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        assert_eq!(self.n, other.n);
        let head = self
            .head
            .iter()
            .zip(&other.head)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let pairs = (0..self.pairs.len())
            .map(|i| {
                Complex64::new(self.pairs.re[i] - other.pairs.re[i], self.pairs.im[i] - other.pairs.im[i])
                    .norm()
            })
            .fold(0.0, f64::max);
        head.max(pairs)
    }

    /// Largest amplitude magnitude.
    pub fn max_abs(&self) -> f64 {
        self.head
            .iter()
            .map(|c| c.norm())
            .chain(self.pairs.iter().map(|c| c.norm()))
            .fold(0.0, f64::max)
    }
}

/// Squared norm `Σ|C|²` over all amplitude families.
pub fn norm(state: &StateVector, grid: &KGrid) -> f64 {
    debug_assert_eq!(state.modes(), grid.len());
    state.head.iter().map(|c| c.norm_sqr()).sum::<f64>() + state.pairs.norm_sqr()
}

/// Whether g² had a usable denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum G2Value {
    Defined(f64),
    /// Photon number below the floor; ratio not reported.
    Undefined,
}

impl G2Value {
    pub fn value(&self) -> Option<f64> {
        match self {
            G2Value::Defined(v) => Some(*v),
            G2Value::Undefined => None,
        }
    }
}

/// Observables sampled at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    pub n_photon: f64,
    pub p2: f64,
    pub g2: G2Value,
    pub concurrence: f64,
    pub norm: f64,
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"FBQD";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a binary checkpoint: 16-byte header (magic, version, mode count)
/// followed by every amplitude as little-endian `(re, im)` pairs in storage
/// order.
pub fn write_checkpoint<W: Write>(state: &StateVector, mut w: W) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(state.n as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * state.dimension());
    for c in &state.head {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    for (r, i) in state.pairs.re.iter().zip(&state.pairs.im) {
        buf.extend_from_slice(&r.to_le_bytes());
        buf.extend_from_slice(&i.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<StateVector> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut s = StateVector::zeros(n)?;
    let mut body = vec![0u8; 16 * s.dimension()];
    r.read_exact(&mut body)?;
    let mut values = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    for c in s.head.iter_mut() {
        *c = Complex64::new(values.next().unwrap(), values.next().unwrap());
    }
    for i in 0..s.pairs.len() {
        s.pairs.re[i] = values.next().unwrap();
        s.pairs.im[i] = values.next().unwrap();
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after state".into()));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KGrid;
    use proptest::prelude::*;

    fn grid(n: usize) -> KGrid {
        KGrid::new(1000.0, n, 10.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn packed_indexing_is_a_bijection() {
        for n in [1usize, 2, 3, 7, 16] {
            let block = PairBlock::zeros(n);
            let mut seen = vec![false; block.len()];
            let mut expected = 0;
            for j in 0..n {
                assert_eq!(block.index(j, j), expected);
                for l in j..n {
                    let i = block.index(j, l);
                    assert_eq!(i, expected);
                    assert_eq!(block.index(l, j), i);
                    assert!(!seen[i]);
                    seen[i] = true;
                    expected += 1;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn vacuum_and_single_excitations() {
        let g = grid(5);
        let v = StateVector::vacuum(&g).unwrap();
        assert_eq!(norm(&v, &g), 1.0);
        assert_eq!(v.get(Amp::Gg00), Complex64::new(1.0, 0.0));
        for which in [Excitation::Emitter1, Excitation::Emitter2, Excitation::Cavity] {
            let s = StateVector::single_excitation(&g, which).unwrap();
            assert_eq!(norm(&s, &g), 1.0);
            assert_eq!(s.get(Amp::Gg00), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn norm_counts_each_pair_once() {
        let g = grid(4);
        let mut s = StateVector::zeros(4).unwrap();
        s.set_pair(1, 3, Complex64::new(0.6, 0.0));
        s.set_pair(2, 2, Complex64::new(0.0, 0.8));
        assert_eq!(s.pair(3, 1), Complex64::new(0.6, 0.0));
        assert!((norm(&s, &g) - 1.0).abs() < 1e-15);
        s.scale(0.5);
        assert!((norm(&s, &g) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let err = StateVector::zeros_with_budget(100, 1000).unwrap_err();
        match err {
            Error::MemoryBudget { required_bytes, .. } => {
                assert_eq!(required_bytes, 16 * (8 + 400 + 5050))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(read_checkpoint(&b"XXXX0000000000000000"[..]).is_err());
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec(-1.0f64..1.0, 2 * state_dimension(n)).prop_map(move |v| {
            let flat: Vec<Complex64> = v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            StateVector::from_flat(n, &flat).unwrap()
        })
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(s in arb_state(6)) {
            let mut buf = Vec::new();
            write_checkpoint(&s, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 16 + 16 * state_dimension(6));
            let back = read_checkpoint(&buf[..]).unwrap();
            prop_assert_eq!(back.to_flat().iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect::<Vec<_>>(),
                            s.to_flat().iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect::<Vec<_>>());
        }

        #[test]
        fn norm_is_phase_invariant(s in arb_state(5), phi in 0.0f64..6.3) {
            let g = grid(5);
            let before = norm(&s, &g);
            let mut r = s.clone();
            r.rotate(Complex64::from_polar(1.0, phi));
            prop_assert!((norm(&r, &g) - before).abs() <= 1e-12 * before.max(1.0));
        }
    }
}
