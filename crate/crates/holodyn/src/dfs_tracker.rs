//! Instantaneous decoherence-free subspace data and smooth-frame transport.
//!
//! Per path parameter s this module produces D(s), its Hermitian part P(s),
//! the kernel projector Pi(s) with its spectral gap, and integrates the
//! transport frame O(s) generated by G = i[dPi/ds, Pi] + Q.

use num_complex::Complex64;

use crate::operator_algebra::{
    c, commutator, dagger, eigh, fro_norm, identity, matexp, nullspace, polar_unitary,
    procrustes_align, zeros, CMatrix, Subspace, I,
};
use crate::reservoir_path::ReservoirPath;
use crate::{HolodynError, Result};

/// Relative singular-value cutoff for rank decisions.
pub const DEFAULT_REL_TOL: f64 = 1e-9;
/// Gap floor relative to the largest eigenvalue of P.
pub const GAP_FLOOR_REL: f64 = 1e-6;
/// Frame-rigidity drift at which transport aborts.
pub const FRAME_RIGIDITY_TOL: f64 = 1e-6;

/// D = sum_k (Gamma_k^dag Gamma_k - 2 c_k^* Gamma_k + |c_k|^2), whose kernel
/// is the DFS and whose Hermitian part P is positive semidefinite.
pub fn build_d(gammas: &[CMatrix], cs: &[Complex64]) -> Result<CMatrix> {
    if gammas.len() != cs.len() {
        return Err(HolodynError::DimensionMismatch {
            expected: gammas.len(),
            got: cs.len(),
        });
    }
    if gammas.is_empty() {
        return Err(HolodynError::InvalidParameter("no Lindblad operators".into()));
    }
    let n = gammas[0].nrows();
    let mut d = zeros(n);
    for (g, ck) in gammas.iter().zip(cs.iter()) {
        d = d + dagger(g).dot(g) - g.mapv(|z| z * 2.0 * ck.conj())
            + identity(n).mapv(|z| z * ck.norm_sqr());
    }
    Ok(d)
}

pub fn build_p(d: &CMatrix) -> CMatrix {
    crate::operator_algebra::hermitian_part(d)
}

/// Kernel projector and spectral gap of the environment at parameter s.
///
/// Checks that D annihilates the kernel and that every kernel vector is a
/// common eigenvector of the Gamma_k with the declared c_k.
pub fn instantaneous_dfs(
    path: &ReservoirPath,
    s: f64,
    rel_tol: f64,
) -> Result<(Subspace, f64)> {
    let sample = path.eval(s);
    let d = build_d(&sample.gammas, &sample.cs)?;
    let kernel = nullspace(&d, rel_tol)?;
    if kernel.dim() == 0 {
        return Err(HolodynError::EmptyKernel);
    }
    let p = build_p(&d);
    let (vals, _) = eigh(&p)?;
    let max_eig = vals.iter().cloned().fold(0.0f64, f64::max);
    if kernel.dim() == p.nrows() {
        // D = 0: no complement, no gap to speak of.
        return Ok((kernel, 0.0));
    }
    let gap = vals[kernel.dim()];
    if gap < GAP_FLOOR_REL * max_eig {
        return Err(HolodynError::GapCollapse {
            gap,
            floor: GAP_FLOOR_REL * max_eig,
        });
    }
    let defect = fro_norm(&d.dot(&kernel.projector));
    if defect > 1e-10 * max_eig.max(1.0) {
        return Err(HolodynError::Linalg(format!(
            "D Pi defect {defect:.3e} at s={s}"
        )));
    }
    for (g, ck) in sample.gammas.iter().zip(sample.cs.iter()) {
        for j in 0..kernel.dim() {
            let v = kernel.basis.column(j).to_owned();
            let residual = g.dot(&v) - v.mapv(|z| z * ck);
            let norm = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 * max_eig.max(1.0) {
                return Err(HolodynError::InconsistentEigenvalues);
            }
        }
    }
    Ok((kernel, gap))
}

/// Per-grid-point bundle produced by `transport_frame`.
#[derive(Debug, Clone)]
pub struct DFSFrame {
    pub s: f64,
    pub pi: Subspace,
    pub gap: f64,
    /// Transport unitary with O(0) = 1.
    pub o: CMatrix,
    /// Frame generator G(s) = i[dPi/ds, Pi] + Q(s).
    pub g: CMatrix,
    pub q: CMatrix,
}

/// Block-diagonal Hermitian gauge term Q(s); receives s and Pi(s).
pub type GaugeFn<'a> = &'a dyn Fn(f64, &Subspace) -> CMatrix;

/// dPi/ds by central finite difference on the kernel projector.
pub fn projector_derivative(path: &ReservoirPath, s: f64, rel_tol: f64) -> Result<CMatrix> {
    let h = path.smoothness_step;
    let (kp, _) = instantaneous_dfs(path, s + h, rel_tol)?;
    let (km, _) = instantaneous_dfs(path, s - h, rel_tol)?;
    Ok((kp.projector - km.projector).mapv(|z| z / c(2.0 * h, 0.0)))
}

fn generator_at(
    path: &ReservoirPath,
    s: f64,
    rel_tol: f64,
    gauge: Option<GaugeFn>,
) -> Result<(CMatrix, Subspace, f64)> {
    let (kernel, gap) = instantaneous_dfs(path, s, rel_tol)?;
    let dpi = projector_derivative(path, s, rel_tol)?;
    let mut g = commutator(&dpi, &kernel.projector).mapv(|z| z * I);
    if let Some(q) = gauge {
        g = g + q(s, &kernel);
    }
    Ok((g, kernel, gap))
}

/// Integrate i dO/ds = G O on a uniform grid with a midpoint exponential
/// step, re-unitarizing by polar decomposition. Returns one frame per grid
/// point, kernel bases aligned by Procrustes along the chain.
pub fn transport_frame(
    path: &ReservoirPath,
    steps: usize,
    gauge: Option<GaugeFn>,
) -> Result<Vec<DFSFrame>> {
    if steps < 100 {
        return Err(HolodynError::InvalidParameter(
            "transport needs at least 100 steps".into(),
        ));
    }
    let rel_tol = DEFAULT_REL_TOL;
    let n = path.dim;
    let ds = 1.0 / steps as f64;
    let mut frames: Vec<DFSFrame> = Vec::with_capacity(steps + 1);
    let mut o = identity(n);
    for j in 0..=steps {
        let s = j as f64 * ds;
        let (g, mut kernel, gap) = generator_at(path, s, rel_tol, gauge)?;
        if let Some(prev) = frames.last() {
            if kernel.dim() != prev.pi.dim() {
                return Err(HolodynError::DfsDimensionJump {
                    from: prev.pi.dim(),
                    to: kernel.dim(),
                    s,
                });
            }
            let aligned = procrustes_align(&kernel.basis, &prev.pi.basis)?;
            kernel = Subspace::from_basis(aligned);
        }
        let q = match gauge {
            Some(qf) => qf(s, &kernel),
            None => zeros(n),
        };
        // Rigidity of the rotating frame: O^dag Pi O must stay at Pi(0).
        let pi0 = frames
            .first()
            .map(|f| f.pi.projector.clone())
            .unwrap_or_else(|| kernel.projector.clone());
        let drift = fro_norm(&(dagger(&o).dot(&kernel.projector).dot(&o) - &pi0));
        if drift > FRAME_RIGIDITY_TOL {
            return Err(HolodynError::FrameRigidity {
                defect: drift,
                tol: FRAME_RIGIDITY_TOL,
            });
        }
        frames.push(DFSFrame {
            s,
            pi: kernel,
            gap,
            o: o.clone(),
            g,
            q,
        });
        if j < steps {
            let (g_mid, _, _) = generator_at(path, s + ds / 2.0, rel_tol, gauge)?;
            let step = matexp(&g_mid, -I * c(ds, 0.0))?;
            o = polar_unitary(&step.dot(&o))?;
        }
    }
    Ok(frames)
}

/// Off-diagonal block of the rotated generator: Pi_perp(0) (O^dag G O) Pi(0).
pub fn g_off(frame: &DFSFrame, pi_bar: &Subspace) -> CMatrix {
    let g_bar = dagger(&frame.o).dot(&frame.g).dot(&frame.o);
    pi_bar
        .perp_projector()
        .dot(&g_bar)
        .dot(&pi_bar.projector)
}

/// Largest frame-rigidity defect over a frame chain.
pub fn frame_rigidity_defect(frames: &[DFSFrame]) -> f64 {
    let pi0 = &frames[0].pi.projector;
    frames
        .iter()
        .map(|f| fro_norm(&(dagger(&f.o).dot(&f.pi.projector).dot(&f.o) - pi0)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_algebra::{hermitian_part, random_hermitian, ONE, ZERO};
    use crate::reservoir_path::{LoopCurve, ReservoirPath};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn build_d_diag() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        let d = build_d(&[g], &[ZERO]).unwrap();
        assert!((d[[1, 1]] - ONE).norm() < 1e-14);
        assert!(d[[0, 0]].norm() < 1e-14);
    }

    #[test]
    fn build_d_sigma_z_shifted() {
        // Gamma = sigma_z, c = 1: D = 1 - 2 sigma_z + 1 = diag(0, 4).
        let sz = array![[ONE, ZERO], [ZERO, c(-1.0, 0.0)]];
        let d = build_d(&[sz], &[ONE]).unwrap();
        assert!(d[[0, 0]].norm() < 1e-14);
        assert!((d[[1, 1]] - c(4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn build_d_dark_state_assembly() {
        // Scenario A at s=0: D = kappa (|B><B| + |e><e|).
        let kappa = 1.7;
        let theta = PI / 4.0;
        let path = ReservoirPath::dark_state(theta, kappa).unwrap();
        let sample = path.eval(0.0);
        let d = build_d(&sample.gammas, &sample.cs).unwrap();
        let b = [c(theta.cos(), 0.0), c(theta.sin(), 0.0), ZERO];
        let mut want = zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                want[[i, j]] = b[i] * b[j].conj() * c(kappa, 0.0);
            }
        }
        want[[2, 2]] += c(kappa, 0.0);
        assert!(fro_norm(&(d - want)) < 1e-12);
    }

    #[test]
    fn build_d_length_mismatch() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        assert!(build_d(&[g], &[ZERO, ZERO]).is_err());
    }

    #[test]
    fn instantaneous_dfs_static_diag() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        let path = ReservoirPath::static_path(vec![g], vec![ZERO]).unwrap();
        let (kernel, gap) = instantaneous_dfs(&path, 0.3, 1e-9).unwrap();
        assert_eq!(kernel.dim(), 1);
        assert!((gap - 1.0).abs() < 1e-12);
        assert!((kernel.projector[[0, 0]] - ONE).norm() < 1e-12);
    }

    #[test]
    fn dark_state_gap_is_kappa() {
        let kappa = 2.5;
        let path = ReservoirPath::dark_state(PI / 4.0, kappa).unwrap();
        for j in 0..7 {
            let (kernel, gap) = instantaneous_dfs(&path, j as f64 / 7.0, 1e-9).unwrap();
            assert_eq!(kernel.dim(), 1);
            assert!((gap - kappa).abs() < 1e-9 * kappa);
        }
    }

    #[test]
    fn tripod_gap_is_kappa() {
        let kappa = 1.2;
        let path = ReservoirPath::tripod(LoopCurve::Circle { theta: PI / 3.0 }, kappa).unwrap();
        let (kernel, gap) = instantaneous_dfs(&path, 0.4, 1e-9).unwrap();
        assert_eq!(kernel.dim(), 2);
        assert!((gap - kappa).abs() < 1e-9 * kappa);
    }

    #[test]
    fn full_rank_reports_empty_kernel() {
        let g = array![[ONE, ZERO], [ZERO, c(2.0, 0.0)]];
        let path = ReservoirPath::static_path(vec![g], vec![c(5.0, 0.0)]).unwrap();
        assert!(matches!(
            instantaneous_dfs(&path, 0.0, 1e-9),
            Err(HolodynError::EmptyKernel)
        ));
    }

    #[test]
    fn static_transport_is_trivial() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        let path = ReservoirPath::static_path(vec![g], vec![ZERO]).unwrap();
        let frames = transport_frame(&path, 200, None).unwrap();
        let last = frames.last().unwrap();
        assert!(fro_norm(&(&last.o - &identity(2))) < 1e-10);
        assert!(fro_norm(&last.g) < 1e-10);
        let goff = g_off(last, &frames[0].pi);
        assert!(fro_norm(&goff) < 1e-10);
    }

    #[test]
    fn dark_state_frame_rigidity() {
        let path = ReservoirPath::dark_state(PI / 4.0, 1.0).unwrap();
        let frames = transport_frame(&path, 2000, None).unwrap();
        assert!(frame_rigidity_defect(&frames) <= 1e-8);
    }

    #[test]
    fn g_is_hermitian_along_the_path() {
        let path = ReservoirPath::dark_state(PI / 3.0, 1.0).unwrap();
        let frames = transport_frame(&path, 2000, None).unwrap();
        for f in &frames {
            assert!(fro_norm(&(&f.g - &dagger(&f.g))) <= 1e-10);
        }
    }

    #[test]
    fn g_off_norm_constant_for_symmetric_loop() {
        let path = ReservoirPath::dark_state(PI / 4.0, 1.0).unwrap();
        let frames = transport_frame(&path, 400, None).unwrap();
        let pi0 = frames[0].pi.clone();
        let norms: Vec<f64> = frames.iter().map(|f| fro_norm(&g_off(f, &pi0))).collect();
        let first = norms[0];
        assert!(first > 0.1, "G_off should not vanish, got {first}");
        for n in &norms {
            assert!((n - first).abs() < 1e-6 * first.max(1.0));
        }
    }

    #[test]
    fn doubling_steps_shrinks_rigidity_defect() {
        // theta away from pi/4: the symmetric loop there cancels the
        // second-order error and the defect sits on the FD floor.
        let path = ReservoirPath::dark_state(PI / 3.0, 1.0).unwrap();
        let coarse = frame_rigidity_defect(&transport_frame(&path, 1600, None).unwrap());
        let fine = frame_rigidity_defect(&transport_frame(&path, 3200, None).unwrap());
        assert!(
            fine * 3.0 <= coarse,
            "expected >=3x reduction, got {coarse:.3e} -> {fine:.3e}"
        );
    }

    #[test]
    fn gauge_covariance_block_diagonal_omega() {
        let path = ReservoirPath::dark_state(PI / 4.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(&mut rng, 3);
        let gauge = move |_s: f64, kernel: &Subspace| {
            let p = &kernel.projector;
            let q = kernel.perp_projector();
            hermitian_part(&(p.dot(&a).dot(p) + q.dot(&a).dot(&q)))
        };
        let plain = transport_frame(&path, 800, None).unwrap();
        let gauged = transport_frame(&path, 800, Some(&gauge)).unwrap();
        let omega = dagger(&plain.last().unwrap().o).dot(&gauged.last().unwrap().o);
        let pi0 = &plain[0].pi.projector;
        let defect = fro_norm(&commutator(pi0, &omega));
        assert!(defect <= 1e-6, "Omega not block diagonal: {defect:.3e}");
        // And Q stays block diagonal by construction.
        for f in gauged.iter().step_by(100) {
            let q_off = f.pi.projector.dot(&f.q).dot(&f.pi.perp_projector());
            assert!(fro_norm(&q_off) <= 1e-12);
        }
    }
}
