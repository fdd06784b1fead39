//! Weak-drive equations of motion and the fixed-step RK4 integrator.
//!
//! The vacuum amplitude `gg00` is frozen (its derivative is zero) but its
//! stored value still sources the drive term of `gg10`, so the derivative is
//! linear in the full state. Continuum couplings enter as `+i G` exactly as
//! in the coefficient equations; this is the `d_k → −d_k` gauge of the
//! Hamiltonian with `+G` couplings (see [`crate::oracle`]).
//!
//! The two-photon block is the O(N²) part. Its derivative depends only on
//! the `gg1k` family and is a symmetric rank-2 matrix, so within an RK4 step
//! every stage sum `Σ_l G_l(t) B_jl` can be reconstructed from three
//! matrix–vector products with the block at the start of the step.
//! [`Propagator`] does this with a single pass over the block per step;
//! [`FeedbackSystem::step_rk4`] is the plain four-derivative form and serves
//! as its reference.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CouplingMode, CouplingTable, KGrid, SystemParams};
use crate::state::{Amp, Family, StateVector, N_SCALARS};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Parameters, grid and coupling table of one simulation run.
#[derive(Debug, Clone)]
pub struct FeedbackSystem {
    pub params: SystemParams,
    pub grid: KGrid,
    pub mode: CouplingMode,
    table: CouplingTable,
}

/// Scratch space for [`FeedbackSystem::derivative`].
#[derive(Debug, Clone)]
pub struct DerivativeWorkspace {
    /// Coupling phasors G_j(t).
    phasors: Vec<Complex64>,
    /// Two-photon sums Σ_l m_jl G_l(t) B_jl.
    pair_sums: Vec<Complex64>,
}

impl DerivativeWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            phasors: vec![ZERO; n],
            pair_sums: vec![ZERO; n],
        }
    }
}

/// Scratch space for the unfused [`FeedbackSystem::step_rk4`].
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    deriv: DerivativeWorkspace,
    k: [StateVector; 4],
    stage: StateVector,
}

impl StepWorkspace {
    pub fn new(n: usize) -> Result<Self> {
        let z = StateVector::zeros(n)?;
        Ok(Self {
            deriv: DerivativeWorkspace::new(n),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z,
        })
    }
}

impl FeedbackSystem {
    pub fn new(params: SystemParams, grid: KGrid, mode: CouplingMode) -> Self {
        let table = CouplingTable::new(mode, &params, &grid);
        Self {
            params,
            grid,
            mode,
            table,
        }
    }

    pub fn modes(&self) -> usize {
        self.grid.len()
    }

    pub fn coupling_table(&self) -> &CouplingTable {
        &self.table
    }

    /// Largest step accepted by the integrators: `2 / Λ`, with Λ bounding
    /// the free frequencies of the discrete amplitudes, their couplings and
    /// the fastest continuum phase.
    pub fn max_stable_dt(&self) -> f64 {
        let p = &self.params;
        let detuning = (2.0 * p.cavity_detuning.abs())
            .max(2.0 * p.emitter_detuning.abs())
            .max((p.cavity_detuning + p.emitter_detuning).abs());
        let coupling: f64 = self.table.amplitude.iter().map(|a| a * a).sum::<f64>().sqrt();
        let system = detuning
            + 6f64.sqrt() * p.g_max()
            + 2.0 * SQRT_2 * p.epsilon
            + p.gamma
            + 2.0 * SQRT_2 * coupling;
        2.0 / system.max(self.table.max_frequency())
    }

    /// ∂_t of every amplitude at time `t`; `out` must have the state's shape.
    pub fn derivative(
        &self,
        state: &StateVector,
        t: f64,
        ws: &mut DerivativeWorkspace,
        out: &mut StateVector,
    ) {
        let n = self.modes();
        self.table.evaluate(t, &mut ws.phasors);
        pair_sums(state, &ws.phasors, &mut ws.pair_sums);
        head_derivative(
            &self.params,
            &state.head,
            n,
            &ws.phasors,
            &ws.pair_sums,
            &mut out.head,
        );
        let y = state.family(Family::Gg1k);
        let g = &ws.phasors;
        let pairs = &mut out.pairs;
        for j in 0..n {
            let base = pairs.row_offset(j);
            let d = I * SQRT_2 * g[j].conj() * y[j];
            pairs.re[base] = d.re;
            pairs.im[base] = d.im;
            for l in j + 1..n {
                let d = I * (g[l].conj() * y[j] + g[j].conj() * y[l]);
                let idx = base + (l - j);
                pairs.re[idx] = d.re;
                pairs.im[idx] = d.im;
            }
        }
    }

    /// One classical RK4 step from `t` to `t + dt` built from four calls to
    /// [`FeedbackSystem::derivative`].
    pub fn step_rk4(
        &self,
        state: &StateVector,
        t: f64,
        dt: f64,
        ws: &mut StepWorkspace,
    ) -> Result<StateVector> {
        self.check_dt(dt)?;
        let StepWorkspace { deriv, k, stage } = ws;
        let [k1, k2, k3, k4] = k;
        self.derivative(state, t, deriv, k1);
        stage.assign_axpy(state, 0.5 * dt, k1);
        self.derivative(stage, t + 0.5 * dt, deriv, k2);
        stage.assign_axpy(state, 0.5 * dt, k2);
        self.derivative(stage, t + 0.5 * dt, deriv, k3);
        stage.assign_axpy(state, dt, k3);
        self.derivative(stage, t + dt, deriv, k4);

        let mut next = state.clone();
        next.axpy(dt / 6.0, k1);
        next.axpy(dt / 3.0, k2);
        next.axpy(dt / 3.0, k3);
        next.axpy(dt / 6.0, k4);
        if !next.is_finite() {
            return Err(Error::Diverged { t: t + dt, dt });
        }
        Ok(next)
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let bound = self.max_stable_dt();
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
        Ok(())
    }

    /// Integrates from `t = 0` to `t_end` with `ceil(t_end / dt)` equal steps
    /// (the step is shrunk so the last one lands on `t_end`). The observer
    /// sees the initial state, every `stride`-th step and the final state.
    pub fn evolve<F>(
        &self,
        initial: &StateVector,
        t_end: f64,
        dt: f64,
        stride: usize,
        mut observer: F,
    ) -> Result<StateVector>
    where
        F: FnMut(f64, &StateVector),
    {
        if !(t_end > 0.0) {
            return Err(Error::Domain(format!("t_end must be positive, got {t_end}")));
        }
        if stride == 0 {
            return Err(Error::Domain("observer stride must be at least 1".into()));
        }
        let recurrence = self.grid.recurrence_time();
        if !(recurrence > t_end) {
            return Err(Error::GridTooCoarse {
                recurrence,
                t_end,
                required_modes: KGrid::required_modes(self.grid.half_width, self.grid.c, t_end),
            });
        }
        let steps = step_count(t_end, dt);
        let h = t_end / steps as f64;
        let mut prop = Propagator::new(self, initial.clone(), 0.0, h)?;
        observer(0.0, prop.state());
        for step in 1..=steps {
            prop.advance()?;
            if step % stride as u64 == 0 || step == steps {
                observer(prop.time(), prop.state());
            }
        }
        Ok(prop.into_state())
    }
}

/// `ceil(t_end / dt)` with a little slack for round-off in the ratio.
pub fn step_count(t_end: f64, dt: f64) -> u64 {
    let ratio = t_end / dt;
    let r = ratio.round();
    if (ratio - r).abs() < 1e-9 * r.max(1.0) {
        (r as u64).max(1)
    } else {
        (ratio.ceil() as u64).max(1)
    }
}

/// Σ_l m_jl G_l B_jl with m = √2 on the diagonal and 1 elsewhere.
fn pair_sums(state: &StateVector, g: &[Complex64], out: &mut [Complex64]) {
    let n = state.modes();
    let pairs = state.pairs();
    out.iter_mut().for_each(|s| *s = ZERO);
    for j in 0..n {
        let base = pairs.row_offset(j);
        let b = Complex64::new(pairs.re[base], pairs.im[base]);
        let mut row = SQRT_2 * g[j] * b;
        for l in j + 1..n {
            let idx = base + (l - j);
            let b = Complex64::new(pairs.re[idx], pairs.im[idx]);
            row += g[l] * b;
            out[l] += g[j] * b;
        }
        out[j] += row;
    }
}

/// Derivative of the scalars and single-photon families, given the coupling
/// phasors and the two-photon sums.
fn head_derivative(
    p: &SystemParams,
    head: &[Complex64],
    n: usize,
    g: &[Complex64],
    pair_sum: &[Complex64],
    out: &mut [Complex64],
) {
    let (cav, em) = (p.cavity_detuning, p.emitter_detuning);
    let (g1, g2, eps) = (p.g1, p.g2, p.epsilon);
    let half_gamma = 0.5 * p.gamma;
    let s = |a: Amp| head[a as usize];
    let fam = |f: Family| &head[N_SCALARS + f as usize * n..N_SCALARS + (f as usize + 1) * n];

    let gg0k = fam(Family::Gg0k);
    let ge0k = fam(Family::Ge0k);
    let eg0k = fam(Family::Eg0k);
    let gg1k = fam(Family::Gg1k);

    let mut sum_gg0k = ZERO;
    let mut sum_ge0k = ZERO;
    let mut sum_eg0k = ZERO;
    let mut sum_gg1k = ZERO;
    for j in 0..n {
        sum_gg0k += g[j] * gg0k[j];
        sum_ge0k += g[j] * ge0k[j];
        sum_eg0k += g[j] * eg0k[j];
        sum_gg1k += g[j] * gg1k[j];
    }

    let (gg00, ge00, eg00, ee00) = (s(Amp::Gg00), s(Amp::Ge00), s(Amp::Eg00), s(Amp::Ee00));
    let (gg10, ge10, eg10, gg20) = (s(Amp::Gg10), s(Amp::Ge10), s(Amp::Eg10), s(Amp::Gg20));

    out[Amp::Gg00 as usize] = ZERO;
    out[Amp::Ge00 as usize] = -I * (em * ge00 + g2 * gg10 + eps * ge10) - half_gamma * ge00;
    out[Amp::Eg00 as usize] = -I * (em * eg00 + g1 * gg10 + eps * eg10) - half_gamma * eg00;
    out[Amp::Ee00 as usize] = -I * (2.0 * em * ee00 + g1 * ge10 + g2 * eg10) - p.gamma * ee00;
    out[Amp::Gg20 as usize] = -I
        * (2.0 * cav * gg20 + SQRT_2 * g2 * ge10 + SQRT_2 * g1 * eg10 + SQRT_2 * eps * gg10)
        + I * SQRT_2 * sum_gg1k;
    out[Amp::Ge10 as usize] = -I
        * ((cav + em) * ge10 + SQRT_2 * g2 * gg20 + g1 * ee00 + eps * ge00)
        - half_gamma * ge10
        + I * sum_ge0k;
    out[Amp::Eg10 as usize] = -I
        * ((cav + em) * eg10 + g2 * ee00 + SQRT_2 * g1 * gg20 + eps * eg00)
        - half_gamma * eg10
        + I * sum_eg0k;
    out[Amp::Gg10 as usize] =
        I * sum_gg0k - I * (cav * gg10 + g2 * ge00 + g1 * eg00 + eps * (gg00 + SQRT_2 * gg20));

    let (head_out, fams_out) = out.split_at_mut(N_SCALARS);
    let _ = head_out;
    let (d_gg0k, rest) = fams_out.split_at_mut(n);
    let (d_ge0k, rest) = rest.split_at_mut(n);
    let (d_eg0k, d_gg1k) = rest.split_at_mut(n);
    let decay = Complex64::new(-half_gamma, -em);
    for j in 0..n {
        let gc = g[j].conj();
        d_ge0k[j] = decay * ge0k[j] - I * g2 * gg1k[j] + I * gc * ge10;
        d_eg0k[j] = decay * eg0k[j] - I * g1 * gg1k[j] + I * gc * eg10;
        d_gg0k[j] = -I * eps * gg1k[j] + I * gc * gg10;
        d_gg1k[j] = -I * (cav * gg1k[j] + g2 * ge0k[j] + g1 * eg0k[j] + eps * gg0k[j])
            + I * (pair_sum[j] + SQRT_2 * gc * gg20);
    }
}

/// Complex vector with split real and imaginary parts.
#[derive(Debug, Clone, Default)]
struct Split {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Split {
    fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    fn fill_from(&mut self, v: &[Complex64]) {
        for ((r, i), c) in self.re.iter_mut().zip(self.im.iter_mut()).zip(v) {
            *r = c.re;
            *i = c.im;
        }
    }

    fn clear(&mut self) {
        self.re.iter_mut().for_each(|x| *x = 0.0);
        self.im.iter_mut().for_each(|x| *x = 0.0);
    }

    #[inline]
    fn range(&self, lo: usize, m: usize) -> (&[f64], &[f64]) {
        (&self.re[lo..lo + m], &self.im[lo..lo + m])
    }

    #[inline]
    fn get(&self, j: usize) -> Complex64 {
        Complex64::new(self.re[j], self.im[j])
    }
}

/// Fused RK4 integrator owning its state; one pass over the two-photon
/// block per step.
pub struct Propagator<'a> {
    sys: &'a FeedbackSystem,
    state: StateVector,
    t: f64,
    dt: f64,
    /// Phasors at t, t + dt/2, t + dt.
    phasors: [Vec<Complex64>; 3],
    /// Σ_l m G_l(τ_a) B_jl for the three stage times, current block.
    sums: [Vec<Complex64>; 3],
    head0: Vec<Complex64>,
    stage: Vec<Complex64>,
    k: Vec<Complex64>,
    acc: Vec<Complex64>,
    y: [Vec<Complex64>; 4],
    stage_sum: Vec<Complex64>,
    // split-storage operands of the fused block pass
    u: [Split; 3],
    v: [Split; 3],
    gn: [Split; 3],
    pn: [Split; 3],
}

impl<'a> Propagator<'a> {
    pub fn new(sys: &'a FeedbackSystem, state: StateVector, t: f64, dt: f64) -> Result<Self> {
        sys.check_dt(dt)?;
        let n = sys.modes();
        if state.modes() != n {
            return Err(Error::Domain(format!(
                "state has {} modes, grid has {n}",
                state.modes()
            )));
        }
        let hl = state.head.len();
        let zeros = || vec![ZERO; n];
        let mut p = Self {
            sys,
            state,
            t,
            dt,
            phasors: [zeros(), zeros(), zeros()],
            sums: [zeros(), zeros(), zeros()],
            head0: vec![ZERO; hl],
            stage: vec![ZERO; hl],
            k: vec![ZERO; hl],
            acc: vec![ZERO; hl],
            y: [zeros(), zeros(), zeros(), zeros()],
            stage_sum: zeros(),
            u: [Split::zeros(n), Split::zeros(n), Split::zeros(n)],
            v: [Split::zeros(n), Split::zeros(n), Split::zeros(n)],
            gn: [Split::zeros(n), Split::zeros(n), Split::zeros(n)],
            pn: [Split::zeros(n), Split::zeros(n), Split::zeros(n)],
        };
        p.load_phasors();
        for a in 0..3 {
            pair_sums(&p.state, &p.phasors[a], &mut p.sums[a]);
        }
        Ok(p)
    }

    fn load_phasors(&mut self) {
        let table = &self.sys.table;
        let t = self.t;
        let h = self.dt;
        for (a, ph) in self.phasors.iter_mut().enumerate() {
            table.evaluate(t + 0.5 * h * a as f64, ph);
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn into_state(self) -> StateVector {
        self.state
    }

    /// Advances by one step of size `dt`.
    pub fn advance(&mut self) -> Result<()> {
        let n = self.sys.modes();
        let h = self.dt;
        let params = &self.sys.params;
        let y_off = N_SCALARS + Family::Gg1k as usize * n;

        self.head0.copy_from_slice(&self.state.head);
        self.acc.copy_from_slice(&self.state.head);

        // stage times index into the phasor triple: t, t+h/2, t+h/2, t+h
        const TIME_OF: [usize; 4] = [0, 1, 1, 2];
        const C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
        const W: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

        for i in 0..4 {
            let ta = TIME_OF[i];
            if i == 0 {
                self.stage.copy_from_slice(&self.head0);
                self.stage_sum.copy_from_slice(&self.sums[0]);
            } else {
                let c = C[i] * h;
                for ((s, h0), k) in self.stage.iter_mut().zip(&self.head0).zip(&self.k) {
                    *s = h0 + k * c;
                }
                // contribution of the previous stage's block slope
                let gp = &self.phasors[TIME_OF[i - 1]];
                let g = &self.phasors[ta];
                let yp = &self.y[i - 1];
                let mut a = ZERO;
                let mut b = ZERO;
                for l in 0..n {
                    a += g[l] * yp[l];
                    b += g[l] * gp[l].conj();
                }
                for j in 0..n {
                    let r = I * (gp[j].conj() * a + yp[j] * b);
                    self.stage_sum[j] = self.sums[ta][j] + c * r;
                }
            }
            self.y[i].copy_from_slice(&self.stage[y_off..y_off + n]);
            head_derivative(
                params,
                &self.stage,
                n,
                &self.phasors[ta],
                &self.stage_sum,
                &mut self.k,
            );
            let w = W[i] * h;
            for (a, k) in self.acc.iter_mut().zip(&self.k) {
                *a += k * w;
            }
        }

        // rank-6 update operands: (u_a, v_a) for times t, t+h/2, t+h
        let uw = [h / 6.0, h / 3.0, h / 6.0];
        for a in 0..3 {
            let scale = I * uw[a];
            for j in 0..n {
                let u = scale * self.phasors[a][j].conj();
                self.u[a].re[j] = u.re;
                self.u[a].im[j] = u.im;
            }
        }
        self.v[0].fill_from(&self.y[0]);
        for j in 0..n {
            let s = self.y[1][j] + self.y[2][j];
            self.v[1].re[j] = s.re;
            self.v[1].im[j] = s.im;
        }
        self.v[2].fill_from(&self.y[3]);

        // phasors for the next step
        self.t += h;
        self.load_phasors();
        for a in 0..3 {
            self.gn[a].fill_from(&self.phasors[a]);
            self.pn[a].clear();
        }

        fused_block_pass(
            n,
            &mut self.state.pairs.re,
            &mut self.state.pairs.im,
            &self.u,
            &self.v,
            &self.gn,
            &mut self.pn,
        );

        self.state.head.copy_from_slice(&self.acc);
        let mut finite = self.state.head.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        for a in 0..3 {
            for j in 0..n {
                let s = self.pn[a].get(j);
                finite &= s.re.is_finite() && s.im.is_finite();
                self.sums[a][j] = s;
            }
        }
        if !finite {
            return Err(Error::Diverged { t: self.t, dt: h });
        }
        Ok(())
    }
}

/// Applies the symmetric rank-6 update `B += Σ_a (u_a v_aᵀ + v_a u_aᵀ)` to the
/// packed block (diagonal weighted by √2 instead of 2) and accumulates
/// `P_a = Σ_l m G_a,l B_jl` of the updated block.
fn fused_block_pass(
    n: usize,
    bre: &mut [f64],
    bim: &mut [f64],
    u: &[Split; 3],
    v: &[Split; 3],
    g: &[Split; 3],
    p: &mut [Split; 3],
) {
    let mut base = 0usize;
    for j in 0..n {
        let uj = [u[0].get(j), u[1].get(j), u[2].get(j)];
        let vj = [v[0].get(j), v[1].get(j), v[2].get(j)];
        let gj = [g[0].get(j), g[1].get(j), g[2].get(j)];

        let mut d = Complex64::new(bre[base], bim[base]);
        d += SQRT_2 * (uj[0] * vj[0] + uj[1] * vj[1] + uj[2] * vj[2]);
        bre[base] = d.re;
        bim[base] = d.im;

        let lo = j + 1;
        let m = n - lo;
        let br = &mut bre[base + 1..base + 1 + m];
        let bi = &mut bim[base + 1..base + 1 + m];
        for a in 0..3 {
            rank2_row(br, bi, uj[a], vj[a], &u[a], &v[a], lo);
        }
        for a in 0..3 {
            let Split { re, im } = &mut p[a];
            scatter_row(&mut re[lo..], &mut im[lo..], gj[a], br, bi);
            let row = SQRT_2 * gj[a] * d + dot_row(&g[a].re[lo..], &g[a].im[lo..], br, bi);
            re[j] += row.re;
            im[j] += row.im;
        }
        base += n - j;
    }
}

/// `B_jl += u_j v_l + u_l v_j` along one packed row.
#[inline(always)]
fn rank2_row(
    br: &mut [f64],
    bi: &mut [f64],
    uj: Complex64,
    vj: Complex64,
    u: &Split,
    v: &Split,
    lo: usize,
) {
    let m = br.len();
    let bi = &mut bi[..m];
    let (ur, ui) = u.range(lo, m);
    let (vr, vi) = v.range(lo, m);
    for l in 0..m {
        br[l] += uj.re * vr[l] - uj.im * vi[l] + ur[l] * vj.re - ui[l] * vj.im;
        bi[l] += uj.re * vi[l] + uj.im * vr[l] + ur[l] * vj.im + ui[l] * vj.re;
    }
}

/// `P_l += G_j B_jl` along one packed row.
#[inline(always)]
fn scatter_row(pr: &mut [f64], pi: &mut [f64], gj: Complex64, br: &[f64], bi: &[f64]) {
    let m = br.len();
    let (pr, pi, bi) = (&mut pr[..m], &mut pi[..m], &bi[..m]);
    for l in 0..m {
        pr[l] += gj.re * br[l] - gj.im * bi[l];
        pi[l] += gj.re * bi[l] + gj.im * br[l];
    }
}

/// `Σ_l G_l B_jl` with fixed four-lane accumulation order.
#[inline(always)]
fn dot_row(gr: &[f64], gi: &[f64], br: &[f64], bi: &[f64]) -> Complex64 {
    const LANES: usize = 4;
    let m = br.len();
    let (gr, gi, bi) = (&gr[..m], &gi[..m], &bi[..m]);
    let mut sr = [0.0f64; LANES];
    let mut si = [0.0f64; LANES];
    let full = m - m % LANES;
    for ((((gr, gi), br), bi), _) in gr[..full]
        .chunks_exact(LANES)
        .zip(gi[..full].chunks_exact(LANES))
        .zip(br[..full].chunks_exact(LANES))
        .zip(bi[..full].chunks_exact(LANES))
        .zip(0..)
    {
        for k in 0..LANES {
            sr[k] += gr[k] * br[k] - gi[k] * bi[k];
            si[k] += gr[k] * bi[k] + gi[k] * br[k];
        }
    }
    for l in full..m {
        sr[l - full] += gr[l] * br[l] - gi[l] * bi[l];
        si[l - full] += gr[l] * bi[l] + gi[l] * br[l];
    }
    Complex64::new((sr[0] + sr[1]) + (sr[2] + sr[3]), (si[0] + si[1]) + (si[2] + si[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamsBuilder, Delay};
    use crate::state::{norm, Excitation};
    use std::f64::consts::PI;

    fn params(eps: f64, g: f64, gamma: f64) -> SystemParams {
        ParamsBuilder::new()
            .omega0(1.1e5)
            .g(g)
            .epsilon(eps)
            .gamma(gamma)
            .cavity_detuning(SQRT_2 * 40.0)
            .delay(Delay::Omega0Tau(4.0 * PI))
            .build()
            .unwrap()
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        // small deterministic LCG; only needs to be "generic"
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let flat: Vec<Complex64> = (0..crate::state::state_dimension(n))
            .map(|_| Complex64::new(next(), next()))
            .collect();
        StateVector::from_flat(n, &flat).unwrap()
    }

    #[test]
    fn undriven_vacuum_only_feeds_cavity_drive() {
        let mut p = params(0.3, 0.0, 1.0);
        p.g0 = 0.0;
        let grid = KGrid::build(&p, CouplingMode::Feedback, 9, 20.0, 0.5).unwrap();
        let sys = FeedbackSystem::new(p, grid.clone(), CouplingMode::Feedback);
        let v = StateVector::vacuum(&grid).unwrap();
        let mut ws = DerivativeWorkspace::new(9);
        let mut d = StateVector::zeros(9).unwrap();
        sys.derivative(&v, 0.0, &mut ws, &mut d);
        assert_eq!(d.get(Amp::Gg10), Complex64::new(0.0, -0.3));
        let mut rest = d.clone();
        rest.set(Amp::Gg10, ZERO);
        assert_eq!(rest.max_abs(), 0.0);
    }

    #[test]
    fn single_emitter_decays_with_detuning() {
        let mut p = params(0.0, 40.0, 1.0);
        p.g0 = 0.0;
        let grid = KGrid::build(&p, CouplingMode::Feedback, 5, 20.0, 0.5).unwrap();
        let sys = FeedbackSystem::new(p, grid.clone(), CouplingMode::Feedback);
        let mut s = StateVector::zeros(5).unwrap();
        s.set(Amp::Ge00, Complex64::new(1.0, 0.0));
        let mut p0 = p;
        p0.g2 = 0.0;
        p0.g1 = 0.0;
        let sys0 = FeedbackSystem::new(p0, grid, CouplingMode::Feedback);
        let mut ws = DerivativeWorkspace::new(5);
        let mut d = StateVector::zeros(5).unwrap();
        sys0.derivative(&s, 0.0, &mut ws, &mut d);
        let want = -(I * p.emitter_detuning + 0.5);
        assert!((d.get(Amp::Ge00) - want).norm() < 1e-14);
        let _ = sys;

        // one RK4 step against the exact exponential
        let dt = 1e-3;
        let mut sws = StepWorkspace::new(5).unwrap();
        let next = sys0.step_rk4(&s, 0.0, dt, &mut sws).unwrap();
        let exact = (want * dt).exp();
        let err = (next.get(Amp::Ge00) - exact).norm();
        let z = (want * dt).norm();
        assert!(err < z.powi(5) / 120.0 * 1.01 + 1e-16, "err {err}");
    }

    #[test]
    fn pair_block_matches_split_form() {
        // Σ_{p<j} G_p B_pj + Σ_{p>j} G_p B_jp + √2 G_j B_jj computed the long way
        let n = 7;
        let s = random_state(n, 3);
        let g: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(0.3 + 0.1 * j as f64, 0.7 * j as f64))
            .collect();
        let mut sums = vec![ZERO; n];
        pair_sums(&s, &g, &mut sums);
        for j in 0..n {
            let mut want = ZERO;
            for p in 0..j {
                want += g[p] * s.pair(p, j);
            }
            for p in j + 1..n {
                want += g[p] * s.pair(j, p);
            }
            want += SQRT_2 * g[j] * s.pair(j, j);
            assert!((sums[j] - want).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_is_linear_without_vacuum_source() {
        let p = params(0.2, 40.0, 1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 11, 30.0, 0.5).unwrap();
        let sys = FeedbackSystem::new(p, grid, CouplingMode::Feedback);
        let mut a = random_state(11, 1);
        let mut b = random_state(11, 2);
        a.set(Amp::Gg00, ZERO);
        b.set(Amp::Gg00, ZERO);
        let mut ws = DerivativeWorkspace::new(11);
        let mut da = StateVector::zeros(11).unwrap();
        let mut db = StateVector::zeros(11).unwrap();
        let mut dab = StateVector::zeros(11).unwrap();
        sys.derivative(&a, 0.3, &mut ws, &mut da);
        sys.derivative(&b, 0.3, &mut ws, &mut db);
        let mut ab = a.clone();
        ab.scale(0.7);
        ab.axpy(-1.3, &b);
        sys.derivative(&ab, 0.3, &mut ws, &mut dab);
        let mut want = da.clone();
        want.scale(0.7);
        want.axpy(-1.3, &db);
        assert!(dab.max_abs_diff(&want) < 1e-10 * want.max_abs());
    }

    #[test]
    fn fused_step_matches_plain_rk4() {
        for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
            let p = params(0.5, 40.0, 1.0);
            let n = 13;
            let grid = KGrid::build(&p, mode, n, 60.0, 0.3).unwrap();
            let sys = FeedbackSystem::new(p, grid, mode);
            let s0 = random_state(n, 9);
            let dt = 1e-3;
            let mut ws = StepWorkspace::new(n).unwrap();
            let mut plain = s0.clone();
            let mut prop = Propagator::new(&sys, s0.clone(), 0.1, dt).unwrap();
            for k in 0..5 {
                plain = sys.step_rk4(&plain, 0.1 + k as f64 * dt, dt, &mut ws).unwrap();
                prop.advance().unwrap();
            }
            let diff = prop.state().max_abs_diff(&plain);
            assert!(diff < 1e-12 * plain.max_abs(), "{mode}: diff {diff}");
            assert!((prop.time() - (0.1 + 5.0 * dt)).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_without_drive_reduces_norm() {
        let p = params(0.0, 40.0, 1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 64, 100.0, 0.5).unwrap();
        let sys = FeedbackSystem::new(p, grid.clone(), CouplingMode::Feedback);
        let s = StateVector::single_excitation(&grid, Excitation::Emitter1).unwrap();
        let mut norms = Vec::new();
        sys.evolve(&s, 0.5, 1e-3, 10, |_, st| norms.push(norm(st, &grid)))
            .unwrap();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn horizon_and_step_checks() {
        let p = params(0.035, 40.0, 1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 32, 100.0, 0.5).unwrap();
        let t_rec = grid.recurrence_time();
        let sys = FeedbackSystem::new(p, grid.clone(), CouplingMode::Feedback);
        let v = StateVector::vacuum(&grid).unwrap();
        assert!(matches!(
            sys.evolve(&v, t_rec * 1.01, 1e-3, 1, |_, _| {}),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(matches!(
            sys.evolve(&v, 0.1, 1.0, 1, |_, _| {}),
            Err(Error::StepTooLarge { .. })
        ));
        assert_eq!(step_count(0.5, 1e-3), 500);
        assert_eq!(step_count(0.5, 0.3), 2);
    }

    #[test]
    fn zero_state_step_only_populates_cavity_drive_channel() {
        let p = params(0.1, 40.0, 1.0);
        let grid = KGrid::build(&p, CouplingMode::Feedback, 8, 30.0, 0.5).unwrap();
        let sys = FeedbackSystem::new(p, grid.clone(), CouplingMode::Feedback);
        let v = StateVector::vacuum(&grid).unwrap();
        let mut ws = DerivativeWorkspace::new(8);
        let mut d = StateVector::zeros(8).unwrap();
        sys.derivative(&v, 0.0, &mut ws, &mut d);
        for a in Amp::ALL {
            if a != Amp::Gg10 {
                assert_eq!(d.get(a), ZERO, "{}", a.name());
            }
        }
        assert_eq!(d.get(Amp::Gg10), Complex64::new(0.0, -0.1));
    }
}
