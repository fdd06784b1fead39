//! Photon statistics and emitter entanglement of a [`StateVector`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::KGrid;
use crate::state::{norm, Amp, Family, G2Value, ObservableRecord, StateVector};

/// Below this photon number g² is reported as undefined.
pub const G2_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type Mat4 = [[Complex64; 4]; 4];

/// Mean intracavity photon number ⟨a†a⟩.
pub fn photon_number(state: &StateVector) -> f64 {
    let sq = |a: Amp| state.get(a).norm_sqr();
    sq(Amp::Gg10)
        + 2.0 * sq(Amp::Gg20)
        + sq(Amp::Ge10)
        + sq(Amp::Eg10)
        + state.family(Family::Gg1k).iter().map(|c| c.norm_sqr()).sum::<f64>()
}

/// ⟨a†a†aa⟩ = 2|c_gg20|².
pub fn two_photon_probability(state: &StateVector) -> f64 {
    2.0 * state.get(Amp::Gg20).norm_sqr()
}

/// Zero-delay second-order correlation ⟨a†a†aa⟩ / ⟨a†a⟩².
pub fn g2_zero_delay(state: &StateVector) -> G2Value {
    let n = photon_number(state);
    if n < G2_FLOOR {
        G2Value::Undefined
    } else {
        G2Value::Defined(two_photon_probability(state) / (n * n))
    }
}

/// Reduced 4×4 density matrix of the two emitters in the basis
/// `|gg⟩, |ge⟩, |eg⟩, |ee⟩` (first letter: emitter 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterDensityMatrix {
    pub m: Mat4,
    pub normalized: bool,
}

impl EmitterDensityMatrix {
    pub fn new(m: Mat4) -> Self {
        Self {
            m,
            normalized: false,
        }
    }

    /// Projector onto a (not necessarily normalized) pure emitter state.
    pub fn pure(psi: [Complex64; 4]) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] = psi[a] * psi[b].conj();
            }
        }
        Self::new(m)
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|a| self.m[a][a].re).sum()
    }

    /// Copy scaled to unit trace.
    pub fn normalize(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr.abs() > 0.0) || !tr.is_finite() {
            return Err(Error::DegenerateState);
        }
        let mut m = self.m;
        m.iter_mut().flatten().for_each(|x| *x /= tr);
        Ok(Self {
            m,
            normalized: true,
        })
    }

    /// Largest `|ρ_ab − conj(ρ_ba)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                e = e.max((self.m[a][b] - self.m[b][a].conj()).norm());
            }
        }
        e
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<[f64; 4]> {
        let (mut w, _) = hermitian_eigen(&hermitize(&self.m))?;
        w.sort_by(|a, b| a.total_cmp(b));
        Ok(w)
    }

    /// `U ρ U†` for a local unitary `U = u1 ⊗ u2`.
    pub fn local_transform(&self, u1: [[Complex64; 2]; 2], u2: [[Complex64; 2]; 2]) -> Self {
        let mut u = [[ZERO; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                u[a][b] = u1[a >> 1][b >> 1] * u2[a & 1][b & 1];
            }
        }
        let m = mul(&mul(&u, &self.m), &adjoint(&u));
        Self {
            m,
            normalized: self.normalized,
        }
    }
}

/// Partial trace over every photonic configuration, then trace-normalized.
pub fn reduced_density_matrix(state: &StateVector) -> Result<EmitterDensityMatrix> {
    let mut m = [[ZERO; 4]; 4];
    let mut add = |v: [Complex64; 4]| {
        for a in 0..4 {
            if v[a] == ZERO {
                continue;
            }
            for b in 0..4 {
                m[a][b] += v[a] * v[b].conj();
            }
        }
    };
    let s = |a: Amp| state.get(a);
    add([s(Amp::Gg00), s(Amp::Ge00), s(Amp::Eg00), s(Amp::Ee00)]);
    add([s(Amp::Gg10), s(Amp::Ge10), s(Amp::Eg10), ZERO]);
    let gg0k = state.family(Family::Gg0k);
    let ge0k = state.family(Family::Ge0k);
    let eg0k = state.family(Family::Eg0k);
    for j in 0..state.modes() {
        add([gg0k[j], ge0k[j], eg0k[j], ZERO]);
    }
    // configurations with both emitters in |gg⟩ only
    let gg_only = s(Amp::Gg20).norm_sqr()
        + state.family(Family::Gg1k).iter().map(|c| c.norm_sqr()).sum::<f64>()
        + state.pairs().norm_sqr();
    m[0][0] += gg_only;
    EmitterDensityMatrix::new(m).normalize()
}

/// Wootters concurrence of a two-qubit density matrix (normalized first).
pub fn concurrence(rho: &EmitterDensityMatrix) -> Result<f64> {
    let rho = if rho.normalized { *rho } else { rho.normalize()? };
    let r = hermitize(&rho.m);
    let (w, v) = hermitian_eigen(&r)?;
    let mut sqrt_rho = [[ZERO; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += v[a][k] * w[k].max(0.0).sqrt() * v[b][k].conj();
            }
            sqrt_rho[a][b] = acc;
        }
    }
    let tilde = spin_flip(&r);
    let prod = hermitize(&mul(&mul(&sqrt_rho, &tilde), &sqrt_rho));
    let (mut mu, _) = hermitian_eigen(&prod)?;
    mu.sort_by(|a, b| b.total_cmp(a));
    let l: Vec<f64> = mu.iter().map(|x| x.max(0.0).sqrt()).collect();
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

/// Observables of one snapshot. A state whose emitter trace vanishes gets
/// concurrence 0.
pub fn record(t: f64, state: &StateVector, grid: &KGrid) -> Result<ObservableRecord> {
    let concurrence = match reduced_density_matrix(state) {
        Ok(rho) => concurrence(&rho)?,
        Err(Error::DegenerateState) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(ObservableRecord {
        t,
        n_photon: photon_number(state),
        p2: two_photon_probability(state),
        g2: g2_zero_delay(state),
        concurrence,
        norm: norm(state, grid),
    })
}

/// `(σy ⊗ σy) ρ* (σy ⊗ σy)`.
pub fn spin_flip(m: &Mat4) -> Mat4 {
    // σy⊗σy is real: antidiagonal (−1, 1, 1, −1)
    let sign = [-1.0, 1.0, 1.0, -1.0];
    let mut out = [[ZERO; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            out[a][b] = m[3 - a][3 - b].conj() * (sign[a] * sign[b]);
        }
    }
    out
}

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn adjoint(a: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

fn hermitize(a: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = 0.5 * (a[i][j] + a[j][i].conj());
        }
    }
    out
}

/// Cyclic complex Jacobi iteration for a Hermitian 4×4 matrix. Returns the
/// eigenvalues and the unitary whose columns are the eigenvectors.
pub fn hermitian_eigen(a: &Mat4) -> Result<([f64; 4], Mat4)> {
    let mut a = *a;
    let mut v = [[ZERO; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    let scale: f64 = a.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(([0.0; 4], v));
    }
    if !scale.is_finite() {
        return Err(Error::EigenNoConvergence(format!("{a:?}")));
    }
    for _sweep in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * scale {
            let w = [a[0][0].re, a[1][1].re, a[2][2].re, a[3][3].re];
            return Ok((w, v));
        }
        for p in 0..3 {
            for q in p + 1..4 {
                let b = a[p][q];
                let babs = b.norm();
                if babs <= 1e-300 {
                    continue;
                }
                let phase = b / babs;
                let theta = (a[q][q].re - a[p][p].re) / (2.0 * babs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // columns p, q of the rotation D·P with D = diag(1, conj(phase))
                let r_pp = Complex64::new(c, 0.0);
                let r_pq = Complex64::new(s, 0.0);
                let r_qp = -s * phase.conj();
                let r_qq = c * phase.conj();
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = akp * r_pp + akq * r_qp;
                    a[k][q] = akp * r_pq + akq * r_qq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = r_pp.conj() * apk + r_qp.conj() * aqk;
                    a[q][k] = r_pq.conj() * apk + r_qq.conj() * aqk;
                }
                a[p][q] = ZERO;
                a[q][p] = ZERO;
                a[p][p].im = 0.0;
                a[q][q].im = 0.0;
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = vp * r_pp + vq * r_qp;
                    row[q] = vp * r_pq + vq * r_qq;
                }
            }
        }
    }
    Err(Error::EigenNoConvergence(format!("{a:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn photon_counts() {
        let mut s = StateVector::zeros(3).unwrap();
        assert_eq!(photon_number(&s), 0.0);
        s.set(Amp::Gg20, c(1.0));
        assert_eq!(photon_number(&s), 2.0);
        assert_eq!(two_photon_probability(&s), 2.0);
        assert_eq!(g2_zero_delay(&s), G2Value::Defined(0.5));
        s.set(Amp::Gg20, c(FRAC_1_SQRT_2));
        assert!((two_photon_probability(&s) - 1.0).abs() < 1e-15);

        let mut one = StateVector::zeros(3).unwrap();
        one.family_mut(Family::Gg1k)[1] = c(1.0);
        assert_eq!(photon_number(&one), 1.0);
        one.family_mut(Family::Gg1k)[1] = ZERO;
        one.set(Amp::Gg10, c(1.0));
        assert_eq!(g2_zero_delay(&one), G2Value::Defined(0.0));
        assert_eq!(g2_zero_delay(&StateVector::zeros(3).unwrap()), G2Value::Undefined);
    }

    #[test]
    fn bell_and_product_states() {
        let mut s = StateVector::zeros(2).unwrap();
        s.set(Amp::Ge00, c(FRAC_1_SQRT_2));
        s.set(Amp::Eg00, c(FRAC_1_SQRT_2));
        let rho = reduced_density_matrix(&s).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = if (a == 1 || a == 2) && (b == 1 || b == 2) { 0.5 } else { 0.0 };
                assert!((rho.m[a][b] - c(want)).norm() < 1e-15);
            }
        }
        assert!((concurrence(&rho).unwrap() - 1.0).abs() < 1e-10);

        let mut k = StateVector::zeros(4).unwrap();
        k.family_mut(Family::Ge0k)[2] = c(FRAC_1_SQRT_2);
        k.family_mut(Family::Eg0k)[2] = c(FRAC_1_SQRT_2);
        let rho_k = reduced_density_matrix(&k).unwrap();
        assert!(rho_k.m.iter().flatten().zip(rho.m.iter().flatten()).all(|(x, y)| (x - y).norm() < 1e-15));

        let v = StateVector::zeros(2).map(|mut v| {
            v.set(Amp::Gg00, c(1.0));
            v
        });
        let rho_v = reduced_density_matrix(&v.unwrap()).unwrap();
        assert_eq!(rho_v.m[0][0], c(1.0));
        assert_eq!(concurrence(&rho_v).unwrap(), 0.0);
    }

    #[test]
    fn mixed_state_has_no_concurrence() {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = c(0.25);
        }
        assert!(concurrence(&EmitterDensityMatrix::new(m)).unwrap().abs() < 1e-10);
    }

    #[test]
    fn zero_trace_is_degenerate() {
        let s = StateVector::zeros(2).unwrap();
        assert!(matches!(reduced_density_matrix(&s), Err(Error::DegenerateState)));
    }

    #[test]
    fn jacobi_diagonalizes() {
        let m: Mat4 = [
            [c(2.0), Complex64::new(0.3, 0.4), c(0.0), Complex64::new(0.0, -0.2)],
            [Complex64::new(0.3, -0.4), c(1.0), Complex64::new(0.1, 0.1), c(0.0)],
            [c(0.0), Complex64::new(0.1, -0.1), c(-1.0), c(0.5)],
            [Complex64::new(0.0, 0.2), c(0.0), c(0.5), c(0.5)],
        ];
        let (w, v) = hermitian_eigen(&m).unwrap();
        for k in 0..4 {
            for a in 0..4 {
                let hv: Complex64 = (0..4).map(|b| m[a][b] * v[b][k]).sum();
                assert!((hv - w[k] * v[a][k]).norm() < 1e-13);
            }
        }
        let trace: f64 = w.iter().sum();
        assert!((trace - 2.5).abs() < 1e-13);
    }
}
