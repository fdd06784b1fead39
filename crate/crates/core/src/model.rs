//! Physical parameters, the discretized feedback continuum and the
//! cavity–continuum coupling functions.
//!
//! Units: the emitter decay rate fixes time (`gamma = 1` by default) and the
//! waveguide speed fixes length (`c = 1` by default). Every frequency below is
//! measured in the frame rotating at the drive frequency.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Raw `key = value` configuration, keys kept verbatim.
pub type RawConfig = BTreeMap<String, String>;

/// Parses the plain-text configuration format: one `key = value` per line,
/// `#` starts a comment, blank lines ignored. Duplicate keys are rejected.
pub fn parse_config(text: &str) -> Result<RawConfig> {
    let mut map = RawConfig::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidValue {
            key: format!("line {}", lineno + 1),
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::InvalidValue {
                key: format!("line {}", lineno + 1),
                reason: "empty key".into(),
            });
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Conflict(format!("key `{key}` given twice")));
        }
    }
    Ok(map)
}

pub(crate) fn parse_real(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| Error::InvalidValue {
        key: key.to_string(),
        reason: format!("`{value}` is not a real number"),
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            key: key.to_string(),
            reason: "value must be finite".into(),
        });
    }
    Ok(v)
}

/// Keys understood by [`build_params`].
pub const PARAM_KEYS: &[&str] = &[
    "omega0", "omegaL", "Delta", "delta", "g", "epsilon", "gamma", "G0", "c", "L", "tau",
    "omega0_tau",
];

/// Physical parameters of the driven cavity with two emitters and a
/// feedback channel. Construct through [`ParamsBuilder`] or [`build_params`];
/// the delay `tau` is always derived as `2 L / c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Cavity frequency ω₀.
    pub omega0: f64,
    /// Drive laser frequency ω_L.
    pub omega_l: f64,
    /// Cavity–laser detuning Δ = ω₀ − ω_L.
    pub cavity_detuning: f64,
    /// Emitter–laser detuning δ.
    pub emitter_detuning: f64,
    pub g1: f64,
    pub g2: f64,
    /// Drive amplitude ε.
    pub epsilon: f64,
    /// Spontaneous decay rate of each emitter.
    pub gamma: f64,
    /// Bare tunnel coupling G₀ between cavity and waveguide.
    pub g0: f64,
    /// Speed of light in the waveguide.
    pub c: f64,
    /// Cavity–mirror distance.
    pub length: f64,
    /// Round-trip delay 2L/c.
    pub tau: f64,
}

impl SystemParams {
    /// The feedback phase ω₀τ.
    pub fn omega0_tau(&self) -> f64 {
        self.omega0 * self.tau
    }

    /// Same system with a different drive amplitude.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ParamsBuilder::from_params(self).epsilon(epsilon).build()
    }

    /// Same system with the delay set from the feedback phase ω₀τ.
    pub fn with_omega0_tau(&self, phase: f64) -> Result<Self> {
        ParamsBuilder::from_params(self)
            .delay(Delay::Omega0Tau(phase))
            .build()
    }

    /// Same system with another cavity detuning; the emitter detuning follows.
    pub fn with_detuning(&self, detuning: f64) -> Result<Self> {
        ParamsBuilder::from_params(self)
            .cavity_detuning(detuning)
            .emitter_detuning(detuning)
            .build()
    }

    /// Largest emitter coupling.
    pub fn g_max(&self) -> f64 {
        self.g1.max(self.g2)
    }

    /// Key/value listing used for CSV headers.
    pub fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("omega0", self.omega0),
            ("omegaL", self.omega_l),
            ("Delta", self.cavity_detuning),
            ("delta", self.emitter_detuning),
            ("g1", self.g1),
            ("g2", self.g2),
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("G0", self.g0),
            ("c", self.c),
            ("L", self.length),
            ("tau", self.tau),
            ("omega0_tau", self.omega0_tau()),
        ]
    }
}

/// How the delay is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Length(f64),
    Tau(f64),
    Omega0Tau(f64),
}

/// Validating builder for [`SystemParams`].
///
/// Defaults: `gamma = 1`, `c = 1`, `G0 = sqrt(2 c gamma / pi)`, cavity
/// detuning `sqrt(2) g`, emitter detuning equal to the cavity detuning and
/// `g1 = g2 = g`.
#[derive(Debug, Clone)]
pub struct ParamsBuilder {
    omega0: Option<f64>,
    omega_l: Option<f64>,
    cavity_detuning: Option<f64>,
    emitter_detuning: Option<f64>,
    g: Option<f64>,
    epsilon: Option<f64>,
    gamma: f64,
    g0: Option<f64>,
    c: f64,
    delay: Option<Delay>,
}

impl Default for ParamsBuilder {
    fn default() -> Self {
        Self {
            omega0: None,
            omega_l: None,
            cavity_detuning: None,
            emitter_detuning: None,
            g: None,
            epsilon: None,
            gamma: 1.0,
            g0: None,
            c: 1.0,
            delay: None,
        }
    }
}

impl ParamsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn from_params(p: &SystemParams) -> Self {
        Self {
            omega0: Some(p.omega0),
            omega_l: None,
            cavity_detuning: Some(p.cavity_detuning),
            emitter_detuning: Some(p.emitter_detuning),
            g: Some(p.g1),
            epsilon: Some(p.epsilon),
            gamma: p.gamma,
            g0: Some(p.g0),
            c: p.c,
            delay: Some(Delay::Length(p.length)),
        }
    }

    pub fn omega0(mut self, v: f64) -> Self {
        self.omega0 = Some(v);
        self
    }
    pub fn omega_l(mut self, v: f64) -> Self {
        self.omega_l = Some(v);
        self
    }
    pub fn cavity_detuning(mut self, v: f64) -> Self {
        self.cavity_detuning = Some(v);
        self
    }
    pub fn emitter_detuning(mut self, v: f64) -> Self {
        self.emitter_detuning = Some(v);
        self
    }
    pub fn g(mut self, v: f64) -> Self {
        self.g = Some(v);
        self
    }
    pub fn epsilon(mut self, v: f64) -> Self {
        self.epsilon = Some(v);
        self
    }
    pub fn gamma(mut self, v: f64) -> Self {
        self.gamma = v;
        self
    }
    pub fn g0(mut self, v: f64) -> Self {
        self.g0 = Some(v);
        self
    }
    pub fn c(mut self, v: f64) -> Self {
        self.c = v;
        self
    }
    pub fn delay(mut self, d: Delay) -> Self {
        self.delay = Some(d);
        self
    }

    pub fn build(self) -> Result<SystemParams> {
        let omega0 = self.omega0.ok_or_else(|| Error::MissingKey("omega0".into()))?;
        let g = self.g.ok_or_else(|| Error::MissingKey("g".into()))?;
        let epsilon = self
            .epsilon
            .ok_or_else(|| Error::MissingKey("epsilon".into()))?;
        let delay = self
            .delay
            .ok_or_else(|| Error::MissingKey("tau (or L, omega0_tau)".into()))?;

        for (name, v) in [("omega0", omega0), ("g", g), ("epsilon", epsilon)] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite")));
            }
        }
        if omega0 <= 0.0 {
            return Err(Error::Domain("omega0 must be positive".into()));
        }
        if epsilon < 0.0 {
            return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if g < 0.0 {
            return Err(Error::Domain(format!("g must be >= 0, got {g}")));
        }
        // gamma = 0 is allowed for closed-system checks
        if !(self.gamma >= 0.0) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.c > 0.0) {
            return Err(Error::Domain(format!("c must be > 0, got {}", self.c)));
        }
        let g0 = self.g0.unwrap_or((2.0 * self.c * self.gamma / PI).sqrt());
        if !(g0 >= 0.0) {
            return Err(Error::Domain(format!("G0 must be >= 0, got {g0}")));
        }

        let cavity_detuning = match (self.cavity_detuning, self.omega_l) {
            (Some(d), Some(wl)) => {
                let implied = omega0 - wl;
                if (implied - d).abs() > 1e-9 * omega0.abs().max(1.0) {
                    return Err(Error::Conflict(format!(
                        "Delta = {d} but omega0 - omegaL = {implied}"
                    )));
                }
                d
            }
            (Some(d), None) => d,
            (None, Some(wl)) => omega0 - wl,
            (None, None) => SQRT_2 * g,
        };
        let emitter_detuning = self.emitter_detuning.unwrap_or(cavity_detuning);
        let omega_l = omega0 - cavity_detuning;
        if !(omega_l > 0.0) {
            return Err(Error::Domain(format!(
                "drive frequency omegaL = {omega_l} must be positive"
            )));
        }

        let length = match delay {
            Delay::Length(l) => l,
            Delay::Tau(t) => self.c * t / 2.0,
            Delay::Omega0Tau(phase) => self.c * (phase / omega0) / 2.0,
        };
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Domain(format!(
                "cavity-mirror distance must be positive, got L = {length}"
            )));
        }
        let tau = 2.0 * length / self.c;

        Ok(SystemParams {
            omega0,
            omega_l,
            cavity_detuning,
            emitter_detuning,
            g1: g,
            g2: g,
            epsilon,
            gamma: self.gamma,
            g0,
            c: self.c,
            length,
            tau,
        })
    }
}

/// Builds validated parameters from a raw configuration map.
///
/// Required keys: `omega0`, `g`, `epsilon` and one of `tau`, `L`,
/// `omega0_tau`. Giving several delay keys is allowed only when they agree.
pub fn build_params(raw: &RawConfig) -> Result<SystemParams> {
    let get = |key: &str| -> Result<Option<f64>> {
        raw.get(key).map(|v| parse_real(key, v)).transpose()
    };
    let mut b = ParamsBuilder::new();
    if let Some(v) = get("omega0")? {
        b = b.omega0(v);
    }
    if let Some(v) = get("omegaL")? {
        b = b.omega_l(v);
    }
    if let Some(v) = get("Delta")? {
        b = b.cavity_detuning(v);
    }
    if let Some(v) = get("delta")? {
        b = b.emitter_detuning(v);
    }
    if let Some(v) = get("g")? {
        b = b.g(v);
    }
    if let Some(v) = get("epsilon")? {
        b = b.epsilon(v);
    }
    if let Some(v) = get("gamma")? {
        b = b.gamma(v);
    }
    if let Some(v) = get("G0")? {
        b = b.g0(v);
    }
    let c = get("c")?.unwrap_or(1.0);
    b = b.c(c);

    let omega0 = get("omega0")?;
    let mut delays: Vec<(&str, f64)> = Vec::new();
    if let Some(l) = get("L")? {
        delays.push(("L", 2.0 * l / c));
    }
    if let Some(t) = get("tau")? {
        delays.push(("tau", t));
    }
    if let Some(p) = get("omega0_tau")? {
        let w0 = omega0.ok_or_else(|| Error::MissingKey("omega0".into()))?;
        delays.push(("omega0_tau", p / w0));
    }
    if let Some(&(first_key, first)) = delays.first() {
        for &(key, t) in &delays[1..] {
            if (t - first).abs() > 1e-12 * first.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Conflict(format!(
                    "`{first_key}` implies tau = {first}, `{key}` implies tau = {t}"
                )));
            }
        }
        b = match raw.get("L") {
            Some(v) => b.delay(Delay::Length(parse_real("L", v)?)),
            None => b.delay(Delay::Tau(first)),
        };
    }
    b.build()
}

/// Which cavity–continuum coupling is active for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingMode {
    /// Half-cavity modes terminated by the mirror: `G0 sin(kL) exp[i(ωL − ωk)t]`.
    Feedback,
    /// Flat reference continuum with the same initial loss:
    /// `G0/√2 exp[i(ω0 − ωk)t]`.
    Reference,
}

impl fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingMode::Feedback => "feedback",
            CouplingMode::Reference => "reference",
        })
    }
}

impl FromStr for CouplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "feedback" | "fb" => Ok(CouplingMode::Feedback),
            "reference" | "ref" | "nofeedback" => Ok(CouplingMode::Reference),
            other => Err(Error::InvalidValue {
                key: "mode".into(),
                reason: format!("`{other}` is neither `feedback` nor `reference`"),
            }),
        }
    }
}

impl CouplingMode {
    /// Frequency the coupling phase is measured against: ω_L for feedback,
    /// ω₀ for the reference continuum.
    pub fn phase_reference(&self, params: &SystemParams) -> f64 {
        match self {
            CouplingMode::Feedback => params.omega_l,
            CouplingMode::Reference => params.omega0,
        }
    }
}

/// Uniform discretization of the waveguide continuum.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub k_center: f64,
    pub half_width: f64,
    pub n_modes: usize,
    /// Mode wavenumbers, strictly increasing and positive.
    pub k: Vec<f64>,
    /// Quadrature weight Δk of every mode.
    pub weight: Vec<f64>,
    /// ω_k = c |k|.
    pub omega: Vec<f64>,
    /// k_j − k_center, kept separately to avoid cancellation in phases.
    pub offset: Vec<f64>,
    pub spacing: f64,
    pub c: f64,
}

impl KGrid {
    /// Uniform cell-centred grid: `n_modes` cells of width Δk = 2W / N tiling
    /// `[k_center − W, k_center + W]`, one mode at the middle of each cell.
    /// The recurrence time `2π / (c Δk)` must exceed `t_end`.
    pub fn new(k_center: f64, n_modes: usize, half_width: f64, c: f64, t_end: f64) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::Domain(format!("need at least 2 modes, got {n_modes}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
        }
        if !(k_center - half_width > 0.0) {
            return Err(Error::Domain(format!(
                "k range [{}, {}] must stay at positive k",
                k_center - half_width,
                k_center + half_width
            )));
        }
        let spacing = 2.0 * half_width / n_modes as f64;
        let recurrence = 2.0 * PI / (c * spacing);
        if !(recurrence > t_end) {
            return Err(Error::GridTooCoarse {
                recurrence,
                t_end,
                required_modes: Self::required_modes(half_width, c, t_end),
            });
        }
        let offset: Vec<f64> = (0..n_modes)
            .map(|j| -half_width + (j as f64 + 0.5) * spacing)
            .collect();
        let k: Vec<f64> = offset.iter().map(|x| k_center + x).collect();
        let omega = k.iter().map(|k| c * k.abs()).collect();
        Ok(Self {
            k_center,
            half_width,
            n_modes,
            k,
            weight: vec![spacing; n_modes],
            omega,
            offset,
            spacing,
            c,
        })
    }

    /// Grid for a coupling mode, centered where that mode's phases are slow:
    /// ω_L / c for feedback and ω₀ / c for the reference continuum.
    pub fn build(
        params: &SystemParams,
        mode: CouplingMode,
        n_modes: usize,
        half_width: f64,
        t_end: f64,
    ) -> Result<Self> {
        let center = mode.phase_reference(params) / params.c;
        Self::new(center, n_modes, half_width, params.c, t_end)
    }

    /// Smallest grid at this bandwidth whose recurrence time is at least
    /// `margin · t_end` (`margin ≥ 1`).
    pub fn with_horizon(
        params: &SystemParams,
        mode: CouplingMode,
        half_width: f64,
        t_end: f64,
        margin: f64,
    ) -> Result<Self> {
        let n = Self::required_modes(half_width, params.c, margin.max(1.0) * t_end);
        Self::build(params, mode, n, half_width, t_end)
    }

    /// Minimal mode count with recurrence time strictly above `t_end`.
    pub fn required_modes(half_width: f64, c: f64, t_end: f64) -> usize {
        // 2π N / (2 W c) > t_end
        ((half_width * c * t_end / PI).floor() as usize + 1).max(2)
    }

    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / (self.c * self.spacing)
    }

    pub fn len(&self) -> usize {
        self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.n_modes == 0
    }
}

/// Real amplitude of the discrete coupling to mode `j` (including the
/// √Δk continuum normalization).
pub fn coupling_amplitude(mode: CouplingMode, j: usize, params: &SystemParams, grid: &KGrid) -> f64 {
    let sqrt_w = grid.weight[j].sqrt();
    match mode {
        CouplingMode::Feedback => {
            let phase = grid.k_center * params.length + grid.offset[j] * params.length;
            params.g0 * phase.sin() * sqrt_w
        }
        CouplingMode::Reference => params.g0 * FRAC_1_SQRT_2 * sqrt_w,
    }
}

/// Angular frequency of the coupling phase for mode `j`:
/// `ω_ref − ω_j` with ω_ref = ω_L (feedback) or ω₀ (reference).
pub fn coupling_frequency(mode: CouplingMode, j: usize, params: &SystemParams, grid: &KGrid) -> f64 {
    (mode.phase_reference(params) - grid.c * grid.k_center) - grid.c * grid.offset[j]
}

/// Discrete coupling G_j(t) between the cavity and continuum mode `j`.
pub fn coupling(mode: CouplingMode, j: usize, t: f64, params: &SystemParams, grid: &KGrid) -> Complex64 {
    let a = coupling_amplitude(mode, j, params, grid);
    let w = coupling_frequency(mode, j, params, grid);
    Complex64::from_polar(a, w * t)
}

/// Precomputed amplitudes and frequencies of every mode; evaluates all
/// G_j(t) at once.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    pub mode: CouplingMode,
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
}

impl CouplingTable {
    pub fn new(mode: CouplingMode, params: &SystemParams, grid: &KGrid) -> Self {
        let n = grid.len();
        Self {
            mode,
            amplitude: (0..n).map(|j| coupling_amplitude(mode, j, params, grid)).collect(),
            frequency: (0..n).map(|j| coupling_frequency(mode, j, params, grid)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Writes G_j(t) for every mode into `out`.
    pub fn evaluate(&self, t: f64, out: &mut [Complex64]) {
        for ((o, &a), &w) in out.iter_mut().zip(&self.amplitude).zip(&self.frequency) {
            *o = Complex64::from_polar(a, w * t);
        }
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequency.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}
