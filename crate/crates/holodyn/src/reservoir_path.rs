//! Smooth one-parameter families of Lindblad operators {Gamma_k(s), c_k(s)}
//! and the canonical scenarios used for verification.
//!
//! Built-ins:
//! * dark-state lambda system (dim 3, Abelian holonomy with known Berry phase),
//! * tripod (dim 4, two-dimensional dark subspace, non-Abelian holonomy),
//! * static operator sets (trivial holonomy regression).

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::operator_algebra::{c, fro_norm, zeros, CMatrix, ZERO};
use crate::{HolodynError, Result};

/// One sample of the environment: the Lindblad operators and their common
/// eigenvalues at a fixed path parameter.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub gammas: Vec<CMatrix>,
    pub cs: Vec<Complex64>,
}

/// Closed curve (theta(s), phi(s), chi(s)) in the tripod parameter space.
///
/// chi is the relative phase of the |1> component of the bright vector. A
/// curve confined to chi = 0 keeps the bright vector real, which makes the
/// dark bundle a real plane bundle with abelian SO(2) holonomy; loops that
/// wander in chi realize the full non-Abelian U(2) case.
#[derive(Debug, Clone)]
pub enum LoopCurve {
    /// phi winds once around at fixed theta, chi = 0.
    Circle { theta: f64 },
    /// theta(s) = theta0 + theta_amp sin(2 pi s),
    /// phi(s) = phi_amp sin^2(pi s), chi(s) = chi_amp sin^2(pi s).
    /// Encloses area for nonzero amplitudes, so it does not retrace itself.
    Petal {
        theta0: f64,
        theta_amp: f64,
        phi_amp: f64,
        chi_amp: f64,
    },
    /// Periodic Catmull-Rom interpolation through (theta, phi, chi) knots.
    Tabulated { points: Vec<(f64, f64, f64)> },
}

impl LoopCurve {
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        match self {
            LoopCurve::Circle { theta } => (*theta, 2.0 * PI * s, 0.0),
            LoopCurve::Petal {
                theta0,
                theta_amp,
                phi_amp,
                chi_amp,
            } => {
                let bump = (PI * s).sin().powi(2);
                let theta = theta0 + theta_amp * (2.0 * PI * s).sin();
                (theta, phi_amp * bump, chi_amp * bump)
            }
            LoopCurve::Tabulated { points } => {
                let n = points.len();
                let x = (s.rem_euclid(1.0)) * n as f64;
                let i1 = x.floor() as usize % n;
                let t = x - x.floor();
                let idx = |k: isize| -> (f64, f64, f64) {
                    points[(i1 as isize + k).rem_euclid(n as isize) as usize]
                };
                let (p0, p1, p2, p3) = (idx(-1), idx(0), idx(1), idx(2));
                let cr = |a: f64, b: f64, c0: f64, d: f64| {
                    0.5 * ((2.0 * b)
                        + (-a + c0) * t
                        + (2.0 * a - 5.0 * b + 4.0 * c0 - d) * t * t
                        + (-a + 3.0 * b - 3.0 * c0 + d) * t * t * t)
                };
                (
                    cr(p0.0, p1.0, p2.0, p3.0),
                    cr(p0.1, p1.1, p2.1, p3.1),
                    cr(p0.2, p1.2, p2.2, p3.2),
                )
            }
        }
    }

    fn is_closed(&self, tol: f64) -> bool {
        let (t0, p0, x0) = self.eval(0.0);
        let (t1, p1, x1) = self.eval(1.0);
        // phi and chi are periodic: full windings close the bright vector.
        let wrap = |d: f64| d - (d / (2.0 * PI)).round() * 2.0 * PI;
        (t1 - t0).abs() <= tol && wrap(p1 - p0).abs() <= tol && wrap(x1 - x0).abs() <= tol
    }
}

#[derive(Debug, Clone)]
enum PathKind {
    DarkState { theta: f64, kappa: f64 },
    Tripod { curve: LoopCurve, kappa: f64 },
    Static { gammas: Vec<CMatrix>, cs: Vec<Complex64> },
    Reversed { inner: Box<ReservoirPath> },
    /// s -> s - strength * sin(2 pi s) / (2 pi), a smooth monotone time warp.
    Reparam { inner: Box<ReservoirPath>, strength: f64 },
    /// First half runs `a`, second half runs `b`, each behind a smooth ramp
    /// whose derivative vanishes at the seam.
    Concat { a: Box<ReservoirPath>, b: Box<ReservoirPath> },
}

/// A deterministic map s in [0,1] -> {Gamma_k(s), c_k(s)}.
#[derive(Debug, Clone)]
pub struct ReservoirPath {
    kind: PathKind,
    pub dim: usize,
    pub num_ops: usize,
    pub closed: bool,
    /// Finite-difference step used by consumers for d/ds.
    pub smoothness_step: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

fn dark_bright_vector(theta: f64, s: f64) -> Vec<Complex64> {
    let phase = Complex64::from_polar(1.0, 2.0 * PI * s);
    vec![c(theta.cos(), 0.0), phase * theta.sin(), ZERO]
}

fn tripod_bright_vector(theta: f64, phi: f64, chi: f64) -> Vec<Complex64> {
    vec![
        c(theta.sin() * phi.cos(), 0.0),
        Complex64::from_polar(theta.sin() * phi.sin(), chi),
        c(theta.cos(), 0.0),
        ZERO,
    ]
}

/// sqrt(kappa) |e><b| and sqrt(kappa) |b><e| for a bright vector b.
fn bright_pair(bright: &[Complex64], excited: usize, kappa: f64) -> Vec<CMatrix> {
    let dim = bright.len();
    let root = c(kappa.sqrt(), 0.0);
    let mut lower = zeros(dim);
    let mut raise = zeros(dim);
    for (i, bi) in bright.iter().enumerate() {
        lower[[excited, i]] = root * bi.conj();
        raise[[i, excited]] = root * bi;
    }
    vec![lower, raise]
}

impl ReservoirPath {
    pub fn dark_state(theta: f64, kappa: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < PI / 2.0) {
            return Err(HolodynError::InvalidParameter(format!(
                "theta = {theta} at endpoint: DFS dimension jump"
            )));
        }
        if kappa <= 0.0 {
            return Err(HolodynError::InvalidParameter("kappa must be positive".into()));
        }
        Ok(ReservoirPath {
            kind: PathKind::DarkState { theta, kappa },
            dim: 3,
            num_ops: 2,
            closed: true,
            smoothness_step: DEFAULT_FD_STEP,
        })
    }

    pub fn tripod(curve: LoopCurve, kappa: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(HolodynError::InvalidParameter("kappa must be positive".into()));
        }
        if !curve.is_closed(1e-8) {
            return Err(HolodynError::InvalidParameter(
                "loop not closed within 1e-8".into(),
            ));
        }
        // theta must stay away from the poles or the dark pair degenerates.
        for j in 0..=200 {
            let (theta, _, _) = curve.eval(j as f64 / 200.0);
            if theta.sin().abs() < 0.05 {
                return Err(HolodynError::InvalidParameter(format!(
                    "theta reaches a pole at s={}: DFS dimension jump",
                    j as f64 / 200.0
                )));
            }
        }
        Ok(ReservoirPath {
            kind: PathKind::Tripod { curve, kappa },
            dim: 4,
            num_ops: 2,
            closed: true,
            smoothness_step: DEFAULT_FD_STEP,
        })
    }

    pub fn static_path(gammas: Vec<CMatrix>, cs: Vec<Complex64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != cs.len() {
            return Err(HolodynError::InvalidParameter(
                "need one eigenvalue per Lindblad operator".into(),
            ));
        }
        let dim = gammas[0].nrows();
        for g in &gammas {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(HolodynError::DimensionMismatch {
                    expected: dim,
                    got: g.nrows(),
                });
            }
        }
        let num_ops = gammas.len();
        Ok(ReservoirPath {
            kind: PathKind::Static { gammas, cs },
            dim,
            num_ops,
            closed: true,
            smoothness_step: DEFAULT_FD_STEP,
        })
    }

    pub fn reversed(&self) -> Self {
        ReservoirPath {
            kind: PathKind::Reversed {
                inner: Box::new(self.clone()),
            },
            ..self.clone()
        }
    }

    /// Smooth monotone time warp; |strength| < 1 keeps it monotone.
    pub fn reparameterized(&self, strength: f64) -> Result<Self> {
        if strength.abs() >= 1.0 {
            return Err(HolodynError::InvalidParameter(
                "warp strength must satisfy |a| < 1".into(),
            ));
        }
        Ok(ReservoirPath {
            kind: PathKind::Reparam {
                inner: Box::new(self.clone()),
                strength,
            },
            ..self.clone()
        })
    }

    /// Traverse `self` then `other` in one unit of s.
    pub fn concat(&self, other: &ReservoirPath) -> Result<Self> {
        if self.dim != other.dim || self.num_ops != other.num_ops {
            return Err(HolodynError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(ReservoirPath {
            kind: PathKind::Concat {
                a: Box::new(self.clone()),
                b: Box::new(other.clone()),
            },
            ..self.clone()
        })
    }

    pub fn eval(&self, s: f64) -> PathSample {
        match &self.kind {
            PathKind::DarkState { theta, kappa } => {
                let bright = dark_bright_vector(*theta, s);
                PathSample {
                    gammas: bright_pair(&bright, 2, *kappa),
                    cs: vec![ZERO, ZERO],
                }
            }
            PathKind::Tripod { curve, kappa } => {
                let (theta, phi, chi) = curve.eval(s);
                let bright = tripod_bright_vector(theta, phi, chi);
                PathSample {
                    gammas: bright_pair(&bright, 3, *kappa),
                    cs: vec![ZERO, ZERO],
                }
            }
            PathKind::Static { gammas, cs } => PathSample {
                gammas: gammas.clone(),
                cs: cs.clone(),
            },
            PathKind::Reversed { inner } => inner.eval(1.0 - s),
            PathKind::Reparam { inner, strength } => {
                inner.eval(s - strength * (2.0 * PI * s).sin() / (2.0 * PI))
            }
            PathKind::Concat { a, b } => {
                // C^infinity ramp with zero slope at both ends of each half.
                let ramp = |u: f64| (1.0 - (PI * u).cos()) / 2.0;
                if s < 0.5 {
                    a.eval(ramp(2.0 * s))
                } else {
                    b.eval(ramp(2.0 * s - 1.0))
                }
            }
        }
    }
}

/// Analytic reference attached to a scenario, when one exists.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpectedHolonomy {
    Identity,
    /// Abelian Berry phase in (-pi, pi].
    AbelianPhase(f64),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub path: ReservoirPath,
    pub rho0: CMatrix,
    pub expected: Option<ExpectedHolonomy>,
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Lambda system: bright state cos(theta)|0> + e^{2 pi i s} sin(theta)|1>,
/// one-dimensional dark subspace, Berry phase 2 pi sin^2(theta) per loop.
pub fn scenario_dark_state(theta: f64, kappa: f64) -> Result<Scenario> {
    let path = ReservoirPath::dark_state(theta, kappa)?;
    let mut rho0 = zeros(3);
    let d0 = [c(-theta.sin(), 0.0), c(theta.cos(), 0.0), ZERO];
    for i in 0..3 {
        for j in 0..3 {
            rho0[[i, j]] = d0[i] * d0[j].conj();
        }
    }
    Ok(Scenario {
        name: format!("dark_state(theta={theta:.6},kappa={kappa})"),
        path,
        rho0,
        expected: Some(ExpectedHolonomy::AbelianPhase(wrap_phase(
            2.0 * PI * theta.sin().powi(2),
        ))),
    })
}

/// Tripod: two-dimensional dark subspace over a closed (theta, phi) loop.
/// Initial state is the projector onto the first dark basis vector.
pub fn scenario_tripod(curve: LoopCurve, kappa: f64) -> Result<Scenario> {
    let path = ReservoirPath::tripod(curve.clone(), kappa)?;
    let (theta, phi, chi) = curve.eval(0.0);
    let d1 = [
        c(theta.cos() * phi.cos(), 0.0),
        Complex64::from_polar(theta.cos() * phi.sin(), chi),
        c(-theta.sin(), 0.0),
        ZERO,
    ];
    let mut rho0 = zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            rho0[[i, j]] = d1[i] * d1[j].conj();
        }
    }
    Ok(Scenario {
        name: format!("tripod(kappa={kappa})"),
        path,
        rho0,
        expected: None,
    })
}

/// Constant operator set; the holonomy is the identity.
pub fn scenario_static(gammas: Vec<CMatrix>, cs: Vec<Complex64>) -> Result<Scenario> {
    let path = ReservoirPath::static_path(gammas, cs)?;
    let sample = path.eval(0.0);
    let d = crate::dfs_tracker::build_d(&sample.gammas, &sample.cs)?;
    let kernel = crate::operator_algebra::nullspace(&d, 1e-9)?;
    if kernel.dim() == 0 {
        return Err(HolodynError::EmptyKernel);
    }
    // The kernel of D must really be a common eigenspace.
    for (g, ck) in sample.gammas.iter().zip(sample.cs.iter()) {
        for j in 0..kernel.dim() {
            let v = kernel.basis.column(j).to_owned();
            let residual = g.dot(&v) - v.mapv(|z| z * ck);
            let norm = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                return Err(HolodynError::InconsistentEigenvalues);
            }
        }
    }
    let first = kernel.basis.column(0).to_owned();
    let n = path.dim;
    let mut rho0 = zeros(n);
    for i in 0..n {
        for j in 0..n {
            rho0[[i, j]] = first[i] * first[j].conj();
        }
    }
    Ok(Scenario {
        name: "static".into(),
        path,
        rho0,
        expected: Some(ExpectedHolonomy::Identity),
    })
}

/// Central finite-difference derivative of the operator family at s.
pub fn fd_derivative(path: &ReservoirPath, s: f64, h: f64) -> Vec<CMatrix> {
    let plus = path.eval(s + h);
    let minus = path.eval(s - h);
    plus.gammas
        .iter()
        .zip(minus.gammas.iter())
        .map(|(p, m)| (p - m).mapv(|z| z / c(2.0 * h, 0.0)))
        .collect()
}

/// Richardson consistency of the finite-difference derivative: the h and h/2
/// estimates of d Gamma / ds must agree to O(h^2).
pub fn smoothness_defect(path: &ReservoirPath, s: f64) -> f64 {
    let h = path.smoothness_step;
    let coarse = fd_derivative(path, s, h);
    let fine = fd_derivative(path, s, h / 2.0);
    coarse
        .iter()
        .zip(fine.iter())
        .map(|(a, b)| fro_norm(&(a - b)))
        .fold(0.0, f64::max)
}
