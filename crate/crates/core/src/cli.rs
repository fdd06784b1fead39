//! Batch runs behind the `fbqed` binary: time traces, stationary values,
//! parameter sweeps, oracle verification and convergence checks. Every
//! table is plain CSV with the resolved configuration as `#` comments.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::dressed::dressed_states;
use crate::dynamics::{DerivativeWorkspace, FeedbackSystem};
use crate::error::{Error, Result};
use crate::model::{build_params, parse_config, CouplingMode, KGrid, RawConfig, SystemParams, PARAM_KEYS};
use crate::observables::record;
use crate::oracle::{FullBasis, SparseHamiltonian};
use crate::state::{state_dimension, Amp, Excitation, ObservableRecord, StateVector};

/// Run-control keys accepted next to the physical parameters.
pub const NUMERIC_KEYS: &[&str] = &[
    "mode",
    "nk",
    "bandwidth",
    "dt",
    "t_end",
    "stride",
    "window",
    "tolerance",
    "sweep_start",
    "sweep_stop",
    "sweep_count",
];

/// Half width W of the k grid when none is configured.
pub fn default_bandwidth(mode: CouplingMode) -> f64 {
    match mode {
        // coupling vanishes near the constructive points; 60 keeps the
        // band-edge ringing below the stationarity tolerance elsewhere
        CouplingMode::Feedback => 60.0,
        CouplingMode::Reference => 200.0,
    }
}

/// 80% of the stability bound, capped at 0.01.
pub fn default_dt(sys: &FeedbackSystem) -> f64 {
    (0.8 * sys.max_stable_dt()).min(0.01)
}

/// Integration and analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub nk: Option<usize>,
    pub bandwidth: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub stride: usize,
    pub window: f64,
    pub tolerance: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            nk: None,
            bandwidth: None,
            dt: None,
            t_end: 12.0,
            stride: 25,
            window: 0.2,
            tolerance: 0.01,
        }
    }
}

impl Numerics {
    pub fn bandwidth_for(&self, mode: CouplingMode) -> f64 {
        self.bandwidth.unwrap_or_else(|| default_bandwidth(mode))
    }

    /// Grid for a run to `t_end`: `nk` modes if given, otherwise the
    /// smallest count whose recurrence time exceeds `t_end`.
    pub fn grid(&self, params: &SystemParams, mode: CouplingMode, t_end: f64) -> Result<KGrid> {
        let w = self.bandwidth_for(mode);
        match self.nk {
            Some(n) => KGrid::build(params, mode, n, w, t_end),
            None => KGrid::with_horizon(params, mode, w, t_end, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::InvalidValue {
                key: key.into(),
                reason,
            })
        };
        if !(self.t_end > 0.0) {
            return bad("t_end", format!("must be positive, got {}", self.t_end));
        }
        if self.stride == 0 {
            return bad("stride", "must be at least 1".into());
        }
        if !(self.window > 0.0 && self.window < 1.0) {
            return bad("window", format!("must lie in (0, 1), got {}", self.window));
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", format!("must be positive, got {}", self.tolerance));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad("dt", format!("must be positive, got {dt}"));
            }
        }
        if let Some(w) = self.bandwidth {
            if !(w > 0.0) {
                return bad("bandwidth", format!("must be positive, got {w}"));
            }
        }
        Ok(())
    }
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub params: SystemParams,
    pub mode: Option<CouplingMode>,
    pub numerics: Numerics,
    pub sweep: Option<(f64, f64, usize)>,
}

fn parse_key<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>> {
    raw.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|_| Error::InvalidValue {
                key: key.into(),
                reason: format!("cannot parse `{v}`"),
            })
        })
        .transpose()
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        if let Some(k) = raw
            .keys()
            .find(|k| !PARAM_KEYS.contains(&k.as_str()) && !NUMERIC_KEYS.contains(&k.as_str()))
        {
            return Err(Error::UnknownKey(k.clone()));
        }
        let params = build_params(&raw)?;
        let mode = parse_key::<CouplingMode>(&raw, "mode")?;
        let d = Numerics::default();
        let numerics = Numerics {
            nk: parse_key(&raw, "nk")?,
            bandwidth: parse_key(&raw, "bandwidth")?,
            dt: parse_key(&raw, "dt")?,
            t_end: parse_key(&raw, "t_end")?.unwrap_or(d.t_end),
            stride: parse_key(&raw, "stride")?.unwrap_or(d.stride),
            window: parse_key(&raw, "window")?.unwrap_or(d.window),
            tolerance: parse_key(&raw, "tolerance")?.unwrap_or(d.tolerance),
        };
        numerics.validate()?;
        let sweep = match (
            parse_key::<f64>(&raw, "sweep_start")?,
            parse_key::<f64>(&raw, "sweep_stop")?,
            parse_key::<usize>(&raw, "sweep_count")?,
        ) {
            (None, None, None) => None,
            (Some(a), Some(b), Some(n)) => Some((a, b, n)),
            _ => {
                return Err(Error::MissingKey(
                    "sweep_start, sweep_stop and sweep_count go together".into(),
                ))
            }
        };
        Ok(Self {
            raw,
            params,
            mode,
            numerics,
            sweep,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_raw(parse_config(text)?)
    }

    /// `# key = value` lines describing the resolved run.
    pub fn header(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in self.params.describe() {
            out.push(format!("# {k} = {v}"));
        }
        let n = &self.numerics;
        if let Some(m) = self.mode {
            out.push(format!("# mode = {m}"));
        }
        let opt = |x: Option<String>| x.unwrap_or_else(|| "auto".into());
        out.push(format!("# nk = {}", opt(n.nk.map(|v| v.to_string()))));
        out.push(format!("# bandwidth = {}", opt(n.bandwidth.map(|v| v.to_string()))));
        out.push(format!("# dt = {}", opt(n.dt.map(|v| v.to_string()))));
        out.push(format!("# t_end = {}", n.t_end));
        out.push(format!("# stride = {}", n.stride));
        out.push(format!("# window = {}", n.window));
        out.push(format!("# tolerance = {}", n.tolerance));
        out
    }
}

/// Shortest representation that round-trips, exponent form for very small
/// or large magnitudes.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// One time trace.
#[derive(Debug, Clone)]
pub struct Run {
    pub mode: CouplingMode,
    pub modes: usize,
    pub bandwidth: f64,
    pub dt: f64,
    pub t_end: f64,
    pub records: Vec<ObservableRecord>,
}

/// Integrates from the vacuum and records observables every `stride` steps.
pub fn simulate(
    params: &SystemParams,
    mode: CouplingMode,
    numerics: &Numerics,
    t_end: f64,
) -> Result<Run> {
    let grid = numerics.grid(params, mode, t_end)?;
    let sys = FeedbackSystem::new(*params, grid.clone(), mode);
    let dt = numerics.dt.unwrap_or_else(|| default_dt(&sys));
    let mut records = Vec::new();
    let mut failure = None;
    sys.evolve(
        &StateVector::vacuum(&grid)?,
        t_end,
        dt,
        numerics.stride,
        |t, s| match record(t, s, &grid) {
            Ok(r) => records.push(r),
            Err(e) => {
                failure.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Run {
        mode,
        modes: grid.len(),
        bandwidth: grid.half_width,
        dt,
        t_end,
        records,
    })
}

/// Trailing-window summary of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryValue {
    /// Window mean; `None` when the series is undefined throughout.
    pub value: Option<f64>,
    pub converged: bool,
    /// (max − min) / |mean| over the window.
    pub window_spread: f64,
}

/// Mean of the samples with `t ≥ t_last − window_fraction (t_last − t_first)`;
/// converged when the relative spread there is below `tolerance`.
pub fn detect_stationary(
    series: &[(f64, Option<f64>)],
    window_fraction: f64,
    tolerance: f64,
) -> Result<StationaryValue> {
    if series.is_empty() {
        return Err(Error::Domain("empty series".into()));
    }
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "window fraction must lie in (0, 1), got {window_fraction}"
        )));
    }
    let t0 = series[0].0;
    let t1 = series[series.len() - 1].0;
    let start = t1 - window_fraction * (t1 - t0);
    let window: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= start)
        .filter_map(|(_, v)| *v)
        .collect();
    if window.is_empty() {
        return Ok(StationaryValue {
            value: None,
            converged: false,
            window_spread: f64::INFINITY,
        });
    }
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if max == min {
        0.0
    } else if mean == 0.0 {
        f64::INFINITY
    } else {
        (max - min) / mean.abs()
    };
    Ok(StationaryValue {
        value: Some(mean),
        converged: spread < tolerance,
        window_spread: spread,
    })
}

/// Stationary values of the four observables for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub t_end: f64,
    pub modes: usize,
    pub bandwidth: f64,
    pub dt: f64,
    pub n: StationaryValue,
    pub p2: StationaryValue,
    pub g2: StationaryValue,
    pub concurrence: StationaryValue,
}

impl StationaryPoint {
    pub fn converged(&self) -> bool {
        self.g2.converged && self.n.converged
    }

    fn from_run(run: &Run, window: f64, tol: f64) -> Result<Self> {
        let series = |f: &dyn Fn(&ObservableRecord) -> Option<f64>| -> Vec<(f64, Option<f64>)> {
            run.records.iter().map(|r| (r.t, f(r))).collect()
        };
        Ok(Self {
            t_end: run.t_end,
            modes: run.modes,
            bandwidth: run.bandwidth,
            dt: run.dt,
            n: detect_stationary(&series(&|r| Some(r.n_photon)), window, tol)?,
            p2: detect_stationary(&series(&|r| Some(r.p2)), window, tol)?,
            g2: detect_stationary(&series(&|r| r.g2.value()), window, tol)?,
            concurrence: detect_stationary(&series(&|r| Some(r.concurrence)), window, tol)?,
        })
    }
}

/// Horizons tried in turn until g² and n are stationary: `t_end`, `2 t_end`,
/// `3 t_end`.
pub fn default_ladder(t_end: f64) -> Vec<f64> {
    vec![t_end, 2.0 * t_end, 3.0 * t_end]
}

/// Runs each horizon of `ladder` until the point converges; returns the last
/// attempt either way.
pub fn stationary(
    params: &SystemParams,
    mode: CouplingMode,
    numerics: &Numerics,
    ladder: &[f64],
) -> Result<StationaryPoint> {
    let mut last = None;
    for &t_end in ladder {
        let run = simulate(params, mode, numerics, t_end)?;
        let point = StationaryPoint::from_run(&run, numerics.window, numerics.tolerance)?;
        if point.converged() {
            return Ok(point);
        }
        last = Some(point);
    }
    last.ok_or_else(|| Error::Domain("empty horizon ladder".into()))
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// The feedback phase ω₀τ.
    Tau,
    Epsilon,
    Delta,
}

impl SweepParam {
    pub fn column(&self) -> &'static str {
        match self {
            SweepParam::Tau => "omega0_tau",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Delta => "Delta",
        }
    }
}

/// Points and per-point settings of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub points: Vec<f64>,
    pub numerics: Numerics,
    pub ladder: Vec<f64>,
}

impl SweepSpec {
    /// `count` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(
        param: SweepParam,
        start: f64,
        stop: f64,
        count: usize,
        numerics: Numerics,
    ) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidValue {
                key: "sweep_count".into(),
                reason: format!("need at least 2 points, got {count}"),
            });
        }
        if !(start < stop) {
            return Err(Error::InvalidValue {
                key: "sweep_start".into(),
                reason: format!("start {start} must be below stop {stop}"),
            });
        }
        let step = (stop - start) / (count - 1) as f64;
        let points = (0..count)
            .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
            .collect();
        Self::from_points(param, points, numerics)
    }

    /// Explicit points; they must be distinct.
    pub fn from_points(param: SweepParam, points: Vec<f64>, numerics: Numerics) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidValue {
                key: "sweep_count".into(),
                reason: format!("need at least 2 points, got {}", points.len()),
            });
        }
        for (i, a) in points.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::InvalidValue {
                    key: param.column().into(),
                    reason: format!("non-finite sweep value {a}"),
                });
            }
            if points[..i].contains(a) {
                return Err(Error::InvalidValue {
                    key: param.column().into(),
                    reason: format!("value {a} requested twice"),
                });
            }
        }
        numerics.validate()?;
        let ladder = default_ladder(numerics.t_end);
        Ok(Self {
            param,
            points,
            numerics,
            ladder,
        })
    }

    pub fn with_ladder(mut self, ladder: Vec<f64>) -> Self {
        self.ladder = ladder;
        self
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub point: StationaryPoint,
}

/// Result of a sweep, rows in the order the points were requested.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: SweepParam,
    pub mode: CouplingMode,
    pub rows: Vec<SweepRow>,
    /// Stationary values without feedback, for comparison.
    pub reference: Option<StationaryPoint>,
    pub header: Vec<String>,
    pub comments: Vec<String>,
}

impl SweepTable {
    fn column(&self, f: impl Fn(&StationaryPoint) -> Option<f64>) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| f(&r.point)).collect()
    }

    pub fn g2(&self) -> Vec<Option<f64>> {
        self.column(|p| p.g2.value)
    }

    pub fn photon_number(&self) -> Vec<Option<f64>> {
        self.column(|p| p.n.value)
    }

    pub fn p2(&self) -> Vec<Option<f64>> {
        self.column(|p| p.p2.value)
    }

    pub fn concurrence(&self) -> Vec<Option<f64>> {
        self.column(|p| p.concurrence.value)
    }

    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        for line in &self.comments {
            writeln!(w, "# {line}")?;
        }
        let mut cols = vec![
            self.param.column().to_string(),
            "P2".into(),
            "n".into(),
            "g2".into(),
            "concurrence".into(),
            "converged".into(),
            "g2_spread".into(),
            "t_end".into(),
            "nk".into(),
        ];
        if self.reference.is_some() {
            for c in ["P2_ref", "n_ref", "g2_ref", "concurrence_ref"] {
                cols.push(c.into());
            }
        }
        writeln!(w, "{}", cols.join(","))?;
        for row in &self.rows {
            let p = &row.point;
            let mut f = vec![
                fmt_num(row.x),
                fmt_opt(p.p2.value),
                fmt_opt(p.n.value),
                fmt_opt(p.g2.value),
                fmt_opt(p.concurrence.value),
                (p.converged() as u8).to_string(),
                fmt_num(p.g2.window_spread),
                fmt_num(p.t_end),
                p.modes.to_string(),
            ];
            if let Some(r) = &self.reference {
                f.push(fmt_opt(r.p2.value));
                f.push(fmt_opt(r.n.value));
                f.push(fmt_opt(r.g2.value));
                f.push(fmt_opt(r.concurrence.value));
            }
            writeln!(w, "{}", f.join(","))?;
        }
        Ok(())
    }
}

fn run_points<F>(spec: &SweepSpec, mode: CouplingMode, make: F) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> Result<SystemParams> + Sync,
{
    spec.points
        .par_iter()
        .map(|&x| {
            let p = make(x)?;
            let point = stationary(&p, mode, &spec.numerics, &spec.ladder)?;
            Ok(SweepRow { x, point })
        })
        .collect()
}

/// Feedback phase sweep with the reference values as constant columns.
pub fn sweep_tau(cfg: &RunConfig, spec: &SweepSpec) -> Result<SweepTable> {
    if spec.param != SweepParam::Tau {
        return Err(Error::Domain("sweep_tau needs a Tau sweep".into()));
    }
    if spec.points.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidValue {
            key: "omega0_tau".into(),
            reason: "feedback phase must be positive (zero delay has no mirror)".into(),
        });
    }
    let rows = run_points(spec, CouplingMode::Feedback, |x| cfg.params.with_omega0_tau(x))?;
    let reference = stationary(&cfg.params, CouplingMode::Reference, &spec.numerics, &spec.ladder)?;
    Ok(SweepTable {
        param: SweepParam::Tau,
        mode: CouplingMode::Feedback,
        rows,
        reference: Some(reference),
        header: cfg.header(),
        comments: Vec::new(),
    })
}

/// Drive sweep without feedback.
pub fn sweep_drive(cfg: &RunConfig, spec: &SweepSpec) -> Result<SweepTable> {
    if spec.param != SweepParam::Epsilon {
        return Err(Error::Domain("sweep_drive needs an Epsilon sweep".into()));
    }
    let rows = run_points(spec, CouplingMode::Reference, |x| cfg.params.with_epsilon(x))?;
    let mut table = SweepTable {
        param: SweepParam::Epsilon,
        mode: CouplingMode::Reference,
        rows,
        reference: None,
        header: cfg.header(),
        comments: Vec::new(),
    };
    table.comments.push(format!("g2 monotonicity: {}", monotonicity(&table.g2()).label()));
    Ok(table)
}

/// Ordering of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    StrictlyIncreasing,
    StrictlyDecreasing,
    Neither,
    Undefined,
}

impl Monotonicity {
    pub fn label(&self) -> &'static str {
        match self {
            Monotonicity::StrictlyIncreasing => "strictly increasing",
            Monotonicity::StrictlyDecreasing => "strictly decreasing",
            Monotonicity::Neither => "not monotonic",
            Monotonicity::Undefined => "undefined values present",
        }
    }
}

pub fn monotonicity(values: &[Option<f64>]) -> Monotonicity {
    let Some(v) = values.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Monotonicity::Undefined;
    };
    if v.windows(2).all(|w| w[1] > w[0]) {
        Monotonicity::StrictlyIncreasing
    } else if v.windows(2).all(|w| w[1] < w[0]) {
        Monotonicity::StrictlyDecreasing
    } else {
        Monotonicity::Neither
    }
}

/// Both coupling modes of the same configuration.
#[derive(Debug, Clone)]
pub struct TraceTable {
    pub feedback: Run,
    pub reference: Run,
    pub header: Vec<String>,
}

/// Feedback and reference traces sampled at the same times.
pub fn run_trace(cfg: &RunConfig) -> Result<TraceTable> {
    let n = &cfg.numerics;
    let t_end = n.t_end;
    // one step size for both so that rows line up
    let dt = match n.dt {
        Some(dt) => dt,
        None => {
            let mut dt = f64::INFINITY;
            for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
                let grid = n.grid(&cfg.params, mode, t_end)?;
                dt = dt.min(default_dt(&FeedbackSystem::new(cfg.params, grid, mode)));
            }
            dt
        }
    };
    let numerics = Numerics {
        dt: Some(dt),
        ..n.clone()
    };
    let (feedback, reference) = rayon::join(
        || simulate(&cfg.params, CouplingMode::Feedback, &numerics, t_end),
        || simulate(&cfg.params, CouplingMode::Reference, &numerics, t_end),
    );
    Ok(TraceTable {
        feedback: feedback?,
        reference: reference?,
        header: cfg.header(),
    })
}

impl TraceTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        writeln!(
            w,
            "# feedback: nk = {}, bandwidth = {}, dt = {}",
            self.feedback.modes, self.feedback.bandwidth, self.feedback.dt
        )?;
        writeln!(
            w,
            "# reference: nk = {}, bandwidth = {}, dt = {}",
            self.reference.modes, self.reference.bandwidth, self.reference.dt
        )?;
        writeln!(w, "t,n_fb,g2_fb,p2_fb,conc_fb,norm_fb,n_ref,g2_ref,p2_ref,conc_ref,norm_ref")?;
        for (a, b) in self.feedback.records.iter().zip(&self.reference.records) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_num(a.t),
                fmt_num(a.n_photon),
                fmt_opt(a.g2.value()),
                fmt_num(a.p2),
                fmt_num(a.concurrence),
                fmt_num(a.norm),
                fmt_num(b.n_photon),
                fmt_opt(b.g2.value()),
                fmt_num(b.p2),
                fmt_num(b.concurrence),
                fmt_num(b.norm),
            )?;
        }
        Ok(())
    }
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value < self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub header: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        writeln!(w, "check,value,tolerance,pass")?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{},{},{}",
                c.name,
                fmt_num(c.value),
                fmt_num(c.tolerance),
                c.passed() as u8
            )?;
        }
        Ok(())
    }
}

fn random_state(n: usize, rng: &mut impl Rng) -> Result<StateVector> {
    let flat: Vec<Complex64> = (0..state_dimension(n))
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut s = StateVector::from_flat(n, &flat)?;
    s.set(Amp::Gg00, Complex64::new(0.0, 0.0));
    Ok(s)
}

/// Largest |closure − oracle| derivative over `count` random states with
/// vanishing vacuum amplitude, relative to the largest oracle entry. The
/// vacuum row is excluded: it is frozen in the closure.
pub fn derivative_discrepancy(
    params: &SystemParams,
    mode: CouplingMode,
    grid: &KGrid,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let n = grid.len();
    let sys = FeedbackSystem::new(*params, grid.clone(), mode);
    let h = SparseHamiltonian::assemble(params, grid, mode)?;
    let basis = FullBasis::new(n);
    let vac = basis
        .bare_index(crate::dressed::BareKet::new(0, false, false))
        .expect("vacuum ket");
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut ws = DerivativeWorkspace::new(n);
    let mut d = StateVector::zeros(n)?;
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let s = random_state(n, &mut rng)?;
        let t = 0.01 * k as f64;
        sys.derivative(&s, t, &mut ws, &mut d);
        let want = h.rhs(t, &basis.embed(&s));
        let got = basis.embed(&d);
        let scale = want.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let err = got
            .iter()
            .zip(&want)
            .enumerate()
            .filter(|(i, _)| *i != vac)
            .map(|(_, (a, b))| (a - b).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

/// Closure and oracle traces from the vacuum on one grid.
#[derive(Debug, Clone)]
pub struct TraceComparison {
    pub closure: Vec<ObservableRecord>,
    pub oracle: Vec<ObservableRecord>,
    pub max_boundary_leak: f64,
}

impl TraceComparison {
    /// Largest relative difference of photon number and of g² over samples
    /// where both are defined.
    pub fn max_relative_differences(&self) -> (f64, f64) {
        let mut dn: f64 = 0.0;
        let mut dg: f64 = 0.0;
        for (a, b) in self.closure.iter().zip(&self.oracle) {
            if b.n_photon > 0.0 {
                dn = dn.max((a.n_photon - b.n_photon).abs() / b.n_photon);
            }
            if let (Some(x), Some(y)) = (a.g2.value(), b.g2.value()) {
                dg = dg.max((x - y).abs() / y.abs());
            }
        }
        (dn, dg)
    }
}

pub fn compare_with_oracle(
    params: &SystemParams,
    mode: CouplingMode,
    grid: &KGrid,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<TraceComparison> {
    let sys = FeedbackSystem::new(*params, grid.clone(), mode);
    let vacuum = StateVector::vacuum(grid)?;
    let mut closure = Vec::new();
    let mut err = None;
    sys.evolve(&vacuum, t_end, dt, stride, |t, s| match record(t, s, grid) {
        Ok(r) => closure.push(r),
        Err(e) => {
            err.get_or_insert(e);
        }
    })?;
    let h = SparseHamiltonian::assemble(params, grid, mode)?;
    let mut oracle = Vec::new();
    let mut leak: f64 = 0.0;
    h.evolve_full(&h.basis.embed(&vacuum), t_end, dt, stride, |t, x| {
        leak = leak.max(h.boundary_leak(x));
        match h.basis.extract(x).and_then(|s| record(t, &s, grid)) {
            Ok(r) => oracle.push(r),
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(TraceComparison {
        closure,
        oracle,
        max_boundary_leak: leak,
    })
}

/// Largest |norm − 1| along a closed-system run (γ = ε = 0) from a single
/// cavity photon.
pub fn closed_norm_drift(
    params: &SystemParams,
    mode: CouplingMode,
    grid: &KGrid,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let mut p = *params;
    p.gamma = 0.0;
    p.epsilon = 0.0;
    let sys = FeedbackSystem::new(p, grid.clone(), mode);
    let s = StateVector::single_excitation(grid, Excitation::Cavity)?;
    let mut worst: f64 = 0.0;
    sys.evolve(&s, t_end, dt, 1, |_, st| {
        worst = worst.max((crate::state::norm(st, grid) - 1.0).abs());
    })?;
    Ok(worst)
}

/// Largest ‖Hv − Ev‖ of the dressed catalog against the assembled closed
/// Hamiltonian (γ = ε = G₀ = 0, emitters resonant with the cavity).
pub fn dressed_residual(params: &SystemParams) -> Result<f64> {
    let mut p = *params;
    p.gamma = 0.0;
    p.epsilon = 0.0;
    p.g0 = 0.0;
    p.emitter_detuning = p.cavity_detuning;
    p.g2 = p.g1;
    let grid = KGrid::build(&p, CouplingMode::Reference, 2, 1.0, 0.0)?;
    let h = SparseHamiltonian::assemble(&p, &grid, CouplingMode::Reference)?;
    let mut worst: f64 = 0.0;
    for s in dressed_states(p.g1)? {
        let mut v = vec![Complex64::new(0.0, 0.0); h.dimension()];
        for (ket, a) in &s.amplitudes {
            let i = h.basis.bare_index(*ket).expect("bare ket in basis");
            v[i] = Complex64::new(*a, 0.0);
        }
        let e = s.manifold as f64 * p.cavity_detuning + s.energy;
        let hv = h.apply(0.0, &v);
        let r: f64 = hv
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - e * y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Oracle comparisons for the configured system: derivative transcription,
/// trace agreement, closed-system norm and dressed-state residuals.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let n = &cfg.numerics;
    let modes = match cfg.mode {
        Some(m) => vec![m],
        None => vec![CouplingMode::Feedback, CouplingMode::Reference],
    };
    let mut report = VerifyReport {
        checks: Vec::new(),
        header: cfg.header(),
    };
    for mode in modes {
        let small = KGrid::build(&cfg.params, mode, 12, n.bandwidth_for(mode), 0.0)?;
        report.checks.push(Check {
            name: format!("derivative_{mode}"),
            value: derivative_discrepancy(&cfg.params, mode, &small, 20, 1)?,
            tolerance: 1e-12,
        });

        let grid = n.grid(&cfg.params, mode, n.t_end)?;
        let sys = FeedbackSystem::new(cfg.params, grid.clone(), mode);
        let dt = n.dt.unwrap_or_else(|| default_dt(&sys));
        let cmp = compare_with_oracle(&cfg.params, mode, &grid, n.t_end, dt, n.stride)?;
        let (dn, dg) = cmp.max_relative_differences();
        report.checks.push(Check {
            name: format!("trace_photon_number_{mode}"),
            value: dn,
            tolerance: 0.01,
        });
        report.checks.push(Check {
            name: format!("trace_g2_{mode}"),
            value: dg,
            tolerance: 0.01,
        });

        let t_closed = n.t_end.min(1.0);
        let closed_grid = n.grid(&cfg.params, mode, t_closed)?;
        // RK4 norm error scales as (h Λ)^5 per unit time
        let closed_dt = 0.01 * FeedbackSystem::new(cfg.params, closed_grid.clone(), mode).max_stable_dt();
        report.checks.push(Check {
            name: format!("closed_norm_{mode}"),
            value: closed_norm_drift(&cfg.params, mode, &closed_grid, t_closed, closed_dt)?,
            tolerance: 1e-8,
        });
    }
    report.checks.push(Check {
        name: "dressed_residual".into(),
        value: dressed_residual(&cfg.params)?,
        tolerance: 1e-12,
    });
    Ok(report)
}

/// Observed order from three step sizes `dt, dt/2, dt/4`, using the photon
/// number at the common sample times.
pub fn richardson_order(
    params: &SystemParams,
    mode: CouplingMode,
    grid: &KGrid,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<f64> {
    let sys = FeedbackSystem::new(*params, grid.clone(), mode);
    let vacuum = StateVector::vacuum(grid)?;
    let mut traces = Vec::new();
    for k in 0..3u32 {
        let h = dt / 2f64.powi(k as i32);
        let mut v = Vec::new();
        sys.evolve(&vacuum, t_end, h, stride << k, |_, s| {
            v.push(crate::observables::photon_number(s))
        })?;
        traces.push(v);
    }
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let e1 = diff(&traces[0], &traces[1]);
    let e2 = diff(&traces[1], &traces[2]);
    Ok((e1 / e2).log2())
}

/// Stationary values on the configured grid and on one with twice the modes
/// and twice the bandwidth, plus the observed integration order.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub mode: CouplingMode,
    pub base: StationaryPoint,
    pub refined: StationaryPoint,
    pub order: f64,
    pub header: Vec<String>,
}

impl ConvergenceReport {
    /// Relative change of (n, P2, g², concurrence) under grid doubling.
    pub fn relative_changes(&self) -> [(&'static str, Option<f64>); 4] {
        let rel = |a: &StationaryValue, b: &StationaryValue| match (a.value, b.value) {
            (Some(x), Some(y)) => Some((y - x).abs() / x.abs()),
            _ => None,
        };
        [
            ("n", rel(&self.base.n, &self.refined.n)),
            ("P2", rel(&self.base.p2, &self.refined.p2)),
            ("g2", rel(&self.base.g2, &self.refined.g2)),
            ("concurrence", rel(&self.base.concurrence, &self.refined.concurrence)),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        writeln!(
            w,
            "# mode = {}, base nk = {}, bandwidth = {}; refined nk = {}, bandwidth = {}; t_end = {}, dt = {}",
            self.mode,
            self.base.modes,
            self.base.bandwidth,
            self.refined.modes,
            self.refined.bandwidth,
            self.base.t_end,
            self.base.dt
        )?;
        writeln!(w, "# observed integration order = {}", fmt_num(self.order))?;
        writeln!(w, "observable,base,refined,relative_change")?;
        let pairs = [
            (&self.base.n, &self.refined.n),
            (&self.base.p2, &self.refined.p2),
            (&self.base.g2, &self.refined.g2),
            (&self.base.concurrence, &self.refined.concurrence),
        ];
        for ((name, rel), (a, b)) in self.relative_changes().iter().zip(pairs) {
            writeln!(w, "{name},{},{},{}", fmt_opt(a.value), fmt_opt(b.value), fmt_opt(*rel))?;
        }
        Ok(())
    }
}

/// Stationary point on a doubled grid at the base horizon. The base step is
/// kept unless the wider band needs a smaller one.
pub fn refine(
    params: &SystemParams,
    mode: CouplingMode,
    numerics: &Numerics,
    base: &StationaryPoint,
) -> Result<StationaryPoint> {
    let grid = KGrid::build(params, mode, 2 * base.modes, 2.0 * base.bandwidth, base.t_end)?;
    let bound = default_dt(&FeedbackSystem::new(*params, grid, mode));
    let refined = Numerics {
        nk: Some(2 * base.modes),
        bandwidth: Some(2.0 * base.bandwidth),
        dt: Some(base.dt.min(bound)),
        ..numerics.clone()
    };
    stationary(params, mode, &refined, &[base.t_end])
}

pub fn converge(cfg: &RunConfig) -> Result<ConvergenceReport> {
    let mode = cfg.mode.unwrap_or(CouplingMode::Feedback);
    let n = &cfg.numerics;
    let base = stationary(&cfg.params, mode, n, &default_ladder(n.t_end))?;
    let refined = refine(&cfg.params, mode, n, &base)?;
    let t_short = 0.5;
    let grid = KGrid::build(&cfg.params, mode, 257, 200.0, t_short)?;
    let order = richardson_order(&cfg.params, mode, &grid, t_short, 2e-3, 25)?;
    Ok(ConvergenceReport {
        mode,
        base,
        refined,
        order,
        header: cfg.header(),
    })
}

/// Dressed-state catalog as an aligned text table.
pub fn dressed_table(g: f64) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{:<7} {:>10}  amplitudes", "state", "energy/g").unwrap();
    for s in dressed_states(g)? {
        let amps: Vec<String> = s
            .amplitudes
            .iter()
            .map(|(k, a)| format!("{:+.6} {}", a, k.label()))
            .collect();
        writeln!(out, "{:<7} {:>+10.6}  {}", s.label, s.energy / g, amps.join("  ")).unwrap();
    }
    Ok(out)
}
