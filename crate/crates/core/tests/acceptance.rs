//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::{PI, SQRT_2};
use std::cell::OnceCell;
use std::time::Instant;

use feedback_qed::cli::{
    compare_with_oracle, derivative_discrepancy, refine, richardson_order, stationary, sweep_tau,
    default_ladder, Numerics, RunConfig, StationaryPoint, SweepParam, SweepSpec, SweepTable,
};
use feedback_qed::dressed::{dressed_states, resonance_detuning, Branch};
use feedback_qed::observables::{
    concurrence, g2_zero_delay, reduced_density_matrix, EmitterDensityMatrix,
};
use feedback_qed::oracle::SparseHamiltonian;
use feedback_qed::state::norm;
use feedback_qed::*;
use num_complex::Complex64;

type Outcome = (bool, String);

const G: f64 = 40.0;

fn working_point() -> SystemParams {
    ParamsBuilder::new()
        .omega0(1.1e5)
        .g(G)
        .epsilon(0.035)
        .delay(Delay::Omega0Tau(4.0 * PI))
        .build()
        .unwrap()
}

fn bunching() -> SystemParams {
    working_point().with_detuning(1.5f64.sqrt() * G).unwrap()
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn oracle_equivalence() -> Outcome {
    let p = working_point();
    let mut ok = true;
    let mut detail = Vec::new();
    for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
        let grid = KGrid::build(&p, mode, 257, 200.0, 0.5).unwrap();
        let cmp = compare_with_oracle(&p, mode, &grid, 0.5, 2e-3, 5).unwrap();
        let (dn, dg) = cmp.max_relative_differences();
        ok &= dn < 0.01 && dg < 0.01 && cmp.closure.len() == cmp.oracle.len();
        detail.push(format!(
            "{mode}: max rel dn={dn:.2e} dg2={dg:.2e} leak={:.1e}",
            cmp.max_boundary_leak
        ));
    }
    (ok, detail.join("; "))
}

fn derivative_transcription() -> Outcome {
    let p = working_point();
    let mut worst: f64 = 0.0;
    for (seed, mode) in [(11, CouplingMode::Feedback), (12, CouplingMode::Reference)] {
        let grid = KGrid::build(&p, mode, 24, 150.0, 0.0).unwrap();
        worst = worst.max(derivative_discrepancy(&p, mode, &grid, 100, seed).unwrap());
    }
    (worst < 1e-12, format!("100 random states per mode, max rel err {worst:.2e}"))
}

fn conservation() -> Outcome {
    let p = ParamsBuilder::new()
        .omega0(1.1e5)
        .g(G)
        .epsilon(0.0)
        .gamma(0.0)
        .g0((2.0 / PI).sqrt())
        .delay(Delay::Omega0Tau(4.0 * PI))
        .build()
        .unwrap();
    let mut worst: f64 = 0.0;
    for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
        let grid = KGrid::with_horizon(&p, mode, 60.0, 1.0, 1.0).unwrap();
        let sys = FeedbackSystem::new(p, grid.clone(), mode);
        let dt = 0.01 * sys.max_stable_dt();
        for which in [Excitation::Cavity, Excitation::Emitter1, Excitation::Emitter2] {
            let s = StateVector::single_excitation(&grid, which).unwrap();
            sys.evolve(&s, 1.0, dt, 1, |_, st| {
                worst = worst.max((norm(st, &grid) - 1.0).abs());
            })
            .unwrap();
        }
    }
    (worst < 1e-8, format!("max |norm - 1| = {worst:.2e} over t = 1"))
}

fn integrator_order() -> Outcome {
    let p = working_point();
    let mut ok = true;
    let mut detail = Vec::new();
    for mode in [CouplingMode::Feedback, CouplingMode::Reference] {
        let grid = KGrid::build(&p, mode, 257, 200.0, 0.5).unwrap();
        let order = richardson_order(&p, mode, &grid, 0.5, 2e-3, 25).unwrap();
        ok &= (order - 4.0).abs() <= 0.2;
        detail.push(format!("{mode}: order {order:.3}"));
    }
    (ok, detail.join("; "))
}

fn point(p: &SystemParams, mode: CouplingMode) -> StationaryPoint {
    let n = Numerics::default();
    stationary(p, mode, &n, &default_ladder(n.t_end)).unwrap()
}

struct Stationary {
    anti_fb: StationaryPoint,
    anti_ref: StationaryPoint,
    bunch_fb: StationaryPoint,
    bunch_ref: StationaryPoint,
}

fn g2(p: &StationaryPoint) -> f64 {
    p.g2.value.unwrap_or(f64::NAN)
}

fn antibunching(s: &Stationary) -> Outcome {
    let (fb, rf) = (g2(&s.anti_fb), g2(&s.anti_ref));
    let ok = s.anti_fb.converged()
        && s.anti_ref.converged()
        && fb < rf
        && fb > 0.0
        && rf < 1.0;
    (ok, format!("g2 feedback {fb:.6} < reference {rf:.6}"))
}

fn bunching_enhancement(s: &Stationary) -> Outcome {
    let (fb, rf) = (g2(&s.bunch_fb), g2(&s.bunch_ref));
    let ok = s.bunch_fb.converged() && s.bunch_ref.converged() && fb > rf && rf > 1.0;
    (ok, format!("g2 feedback {fb:.2} > reference {rf:.2} > 1"))
}

fn tau_sweep() -> SweepTable {
    let cfg = RunConfig::from_text(
        "omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 12.566370614359172\n",
    )
    .unwrap();
    let spec = SweepSpec::linspace(SweepParam::Tau, PI / 10.0, 6.0 * PI, 60, Numerics::default())
        .unwrap();
    sweep_tau(&cfg, &spec).unwrap()
}

fn values(col: Vec<Option<f64>>) -> Vec<f64> {
    col.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

/// Distance from `x` to the nearest multiple of `period`.
fn off_lattice(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    r.min(period - r)
}

fn interference_periodicity(t: &SweepTable) -> Outcome {
    let xs = t.xs();
    let step = xs[1] - xs[0];
    let shift = (2.0 * PI / step).round() as usize;
    let cols = [
        ("g2", values(t.g2())),
        ("n", values(t.photon_number())),
        ("P2", values(t.p2())),
        ("C", values(t.concurrence())),
    ];
    let mut ok = xs.len() >= 60 && (xs[shift] - xs[0] - 2.0 * PI).abs() < 1e-9;
    let mut detail = Vec::new();
    for (name, v) in &cols {
        let (lo, hi) = (argmin(v), argmax(v));
        let aligned = off_lattice(xs[lo], PI) <= step + 1e-9 && off_lattice(xs[hi], PI) <= step + 1e-9;
        let periodic = (0..v.len() - shift)
            .map(|i| (v[i + shift] - v[i]).abs() / v[i].abs())
            .fold(0.0, f64::max);
        ok &= aligned && periodic < 0.02 && v.iter().all(|x| x.is_finite());
        detail.push(format!(
            "{name}: min@{:.1}pi max@{:.1}pi 2pi-dev {:.2}%",
            xs[lo] / PI,
            xs[hi] / PI,
            100.0 * periodic
        ));
    }
    let g2min = xs[argmin(&cols[0].1)];
    let near = off_lattice(g2min, 2.0 * PI) <= step + 1e-9;
    ok &= near;
    let unconverged = t.rows.iter().filter(|r| !r.point.converged()).count();
    detail.push(format!("argmin g2 at {:.2}pi; {unconverged} points unconverged", g2min / PI));
    (ok, detail.join("; "))
}

/// Grid distance between two sweep indices, taken modulo the 2π period so
/// that equal extrema in neighbouring periods count as the same location.
fn periodic_distance(a: usize, b: usize, period: usize) -> usize {
    let d = a.abs_diff(b) % period;
    d.min(period - d)
}

fn colocation(t: &SweepTable) -> Outcome {
    let xs = t.xs();
    let period = (2.0 * PI / (xs[1] - xs[0])).round() as usize;
    let g2min = argmin(&values(t.g2()));
    let others = [
        ("n", argmax(&values(t.photon_number()))),
        ("P2", argmax(&values(t.p2()))),
        ("C", argmax(&values(t.concurrence()))),
    ];
    let ok = others
        .iter()
        .all(|(_, i)| periodic_distance(*i, g2min, period) <= 1);
    let mut detail = vec![format!("argmin g2 {:.1}pi", xs[g2min] / PI)];
    for (name, i) in others {
        detail.push(format!("argmax {name} {:.1}pi", xs[i] / PI));
    }
    (ok, detail.join(", "))
}

fn drive_monotonicity() -> Outcome {
    let cfg = RunConfig::from_text("omega0 = 1.1e5\ng = 40\nepsilon = 0.035\nomega0_tau = 12.566370614359172\n")
        .unwrap();
    // single horizon: in reference mode the closure drift only grows with t_end
    let spec = SweepSpec::linspace(SweepParam::Epsilon, 0.01, 0.1, 8, Numerics::default())
        .unwrap()
        .with_ladder(vec![12.0]);
    let table = feedback_qed::cli::sweep_drive(&cfg, &spec).unwrap();
    let g = values(table.g2());
    let ok = g.windows(2).all(|w| w[1] > w[0]);
    let listed: Vec<String> = g.iter().map(|v| format!("{v:.5}")).collect();
    (ok, format!("g2 over eps 0.01..0.1: [{}]", listed.join(", ")))
}

fn observable_units() -> Outcome {
    let grid = KGrid::new(100.0, 4, 10.0, 1.0, 0.0).unwrap();
    let mut errs = Vec::new();

    let mut two = StateVector::zeros(4).unwrap();
    two.set(Amp::Gg20, c(1.0));
    errs.push(("g2 two-photon", (g2_zero_delay(&two).value().unwrap() - 0.5).abs()));

    let one = StateVector::single_excitation(&grid, Excitation::Cavity).unwrap();
    errs.push(("g2 one-photon", g2_zero_delay(&one).value().unwrap().abs()));

    let h = 1.0 / SQRT_2;
    let mut bell = StateVector::zeros(4).unwrap();
    bell.set(Amp::Ge00, c(h));
    bell.set(Amp::Eg00, c(h));
    let cb = concurrence(&reduced_density_matrix(&bell).unwrap()).unwrap();
    errs.push(("C(psi+)", (cb - 1.0).abs()));

    let mut product = StateVector::zeros(4).unwrap();
    product.set(Amp::Gg00, c(0.6));
    product.set(Amp::Ge00, c(0.8));
    let cp = concurrence(&reduced_density_matrix(&product).unwrap()).unwrap();
    errs.push(("C(product)", cp.abs()));

    let mut m = [[c(0.0); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(0.25);
    }
    let cm = concurrence(&EmitterDensityMatrix::new(m)).unwrap();
    errs.push(("C(I/4)", cm.abs()));

    let worst = errs.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let detail: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.0e}")).collect();
    (worst < 1e-10, detail.join(", "))
}

fn dressed_residuals() -> Outcome {
    let closed = |detuning: f64| {
        ParamsBuilder::new()
            .omega0(1.1e5)
            .g(G)
            .epsilon(0.0)
            .gamma(0.0)
            .g0(0.0)
            .cavity_detuning(detuning)
            .delay(Delay::Omega0Tau(4.0 * PI))
            .build()
            .unwrap()
    };
    let residual = |p: &SystemParams, label: &str, energy: f64| {
        let grid = KGrid::build(p, CouplingMode::Reference, 2, 1.0, 0.0).unwrap();
        let h = SparseHamiltonian::assemble(p, &grid, CouplingMode::Reference).unwrap();
        let s = dressed_states(G).unwrap().into_iter().find(|s| s.label == label).unwrap();
        let mut v = vec![c(0.0); h.dimension()];
        for (ket, a) in &s.amplitudes {
            v[h.basis.bare_index(*ket).unwrap()] = c(*a);
        }
        h.apply(0.0, &v)
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - energy * y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };

    // zero detuning: every state is an eigenvector at its tabulated energy
    let p0 = closed(0.0);
    let mut worst: f64 = 0.0;
    for s in dressed_states(G).unwrap() {
        worst = worst.max(residual(&p0, s.label, s.energy));
    }
    // at the resonance detunings the lower branch sits at zero drive-frame energy
    let mut gap: f64 = 0.0;
    for (m, lower, upper) in [(1u8, "1_-", "1_+"), (2, "2_-", "2_+")] {
        let d = resonance_detuning(m, Branch::Plus).unwrap() * G;
        let p = closed(d);
        gap = gap.max(residual(&p, lower, 0.0));
        let up = dressed_states(G).unwrap().into_iter().find(|s| s.label == upper).unwrap();
        gap = gap.max(residual(&p, upper, m as f64 * d + up.energy));
        let dm = resonance_detuning(m, Branch::Minus).unwrap() * G;
        gap = gap.max(residual(&closed(dm), upper, 0.0));
    }
    (
        worst < 1e-12 && gap < 1e-12,
        format!("max residual {worst:.1e}; at resonance detunings {gap:.1e}"),
    )
}

fn grid_convergence(s: &Stationary) -> Outcome {
    let n = Numerics::default();
    let cases = [
        ("anti fb", working_point(), CouplingMode::Feedback, &s.anti_fb),
        ("anti ref", working_point(), CouplingMode::Reference, &s.anti_ref),
        ("bunch fb", bunching(), CouplingMode::Feedback, &s.bunch_fb),
        ("bunch ref", bunching(), CouplingMode::Reference, &s.bunch_ref),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, p, mode, base) in cases {
        let fine = refine(&p, mode, &n, base).unwrap();
        let pairs = [
            (base.g2.value, fine.g2.value),
            (base.n.value, fine.n.value),
            (base.p2.value, fine.p2.value),
            (base.concurrence.value, fine.concurrence.value),
        ];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            let rel = match (a, b) {
                (Some(a), Some(b)) => (b - a).abs() / a.abs(),
                _ => f64::INFINITY,
            };
            worst = worst.max(rel);
        }
        ok &= worst < 0.01;
        detail.push(format!("{name} {:.3}%", 100.0 * worst));
    }
    (
        ok,
        format!("largest change of g2, n, P2, C under N,W doubling: {}", detail.join(", ")),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |k: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if want(k) {
            let t0 = Instant::now();
            let out = f();
            let secs = t0.elapsed().as_secs_f64();
            println!(
                "criterion {k:>2} {:<28} {} ({secs:.1} s) {}",
                name,
                if out.0 { "PASS" } else { "FAIL" },
                out.1
            );
            results.push((k, name, out, secs));
        }
    };

    run(1, "oracle equivalence", &mut oracle_equivalence);
    run(2, "derivative transcription", &mut derivative_transcription);
    run(3, "conservation", &mut conservation);
    run(4, "integrator order", &mut integrator_order);

    // shared runs are charged to the first criterion that needs them
    let st: OnceCell<Stationary> = OnceCell::new();
    let stationary = || {
        st.get_or_init(|| {
            let (anti, bunch) = rayon::join(
                || {
                    rayon::join(
                        || point(&working_point(), CouplingMode::Feedback),
                        || point(&working_point(), CouplingMode::Reference),
                    )
                },
                || {
                    rayon::join(
                        || point(&bunching(), CouplingMode::Feedback),
                        || point(&bunching(), CouplingMode::Reference),
                    )
                },
            );
            Stationary {
                anti_fb: anti.0,
                anti_ref: anti.1,
                bunch_fb: bunch.0,
                bunch_ref: bunch.1,
            }
        })
    };
    run(5, "antibunching enhancement", &mut || antibunching(stationary()));
    run(6, "bunching enhancement", &mut || bunching_enhancement(stationary()));

    let sw: OnceCell<SweepTable> = OnceCell::new();
    run(7, "interference periodicity", &mut || interference_periodicity(sw.get_or_init(tau_sweep)));
    run(8, "co-location of extrema", &mut || colocation(sw.get_or_init(tau_sweep)));

    run(9, "drive monotonicity", &mut drive_monotonicity);
    run(10, "observable unit values", &mut observable_units);
    run(11, "dressed-state residuals", &mut dressed_residuals);
    run(12, "grid convergence", &mut || grid_convergence(stationary()));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
