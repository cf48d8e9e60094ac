//! Geometric holonomy of a closed reservoir loop.
//!
//! The gauge-fixed Wilson loop multiplies exp([Pi', Pi] ds) along the loop
//! and compresses onto the initial dark block. The connection route builds a
//! periodic section of the dark bundle from a transported frame chain and
//! path-orders exp(A ds); both must agree, as must the frame-machinery
//! holonomy under any block-diagonal gauge Q.

use ndarray::Array2;
use num_complex::Complex64;

use crate::dfs_tracker::{
    build_d, instantaneous_dfs, transport_frame, DFSFrame, GaugeFn, DEFAULT_REL_TOL,
};
use crate::operator_algebra::{
    block, c, commutator, dagger, eig, fro_norm, identity, inverse, matexp, nullspace,
    polar_unitary, CMatrix, Subspace, I,
};
use crate::reservoir_path::ReservoirPath;
use crate::{HolodynError, Result};

const CLOSURE_TOL: f64 = 1e-8;
const ANTI_HERMITICITY_TOL: f64 = 1e-6;

/// Holonomy of one closed loop, compressed to the dark block.
#[derive(Debug, Clone)]
pub struct HolonomyResult {
    /// Unitary on the dark block in the chosen s=0 basis.
    pub u: CMatrix,
    /// Eigenphases of `u` in (-pi, pi], ascending.
    pub phases: Vec<f64>,
    /// ||U_raw^dag U_raw - 1|| before the polar cleanup.
    pub unitarity_defect: f64,
    pub loop_descriptor: String,
}

fn kernel_at(path: &ReservoirPath, s: f64) -> Result<Subspace> {
    let sample = path.eval(s);
    let d = build_d(&sample.gammas, &sample.cs)?;
    let kernel = nullspace(&d, DEFAULT_REL_TOL)?;
    if kernel.dim() == 0 {
        return Err(HolodynError::EmptyKernel);
    }
    Ok(kernel)
}

fn finish(
    raw: &CMatrix,
    descriptor: String,
) -> Result<HolonomyResult> {
    let d = raw.nrows();
    let defect = fro_norm(&(dagger(raw).dot(raw) - identity(d)));
    let u = polar_unitary(raw)?;
    let (vals, _) = eig(&u)?;
    let mut phases: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(HolonomyResult {
        u,
        phases,
        unitarity_defect: defect,
        loop_descriptor: descriptor,
    })
}

fn validate_basis(basis: &CMatrix, kernel: &Subspace) -> Result<()> {
    let d = basis.ncols();
    let ortho = fro_norm(&(dagger(basis).dot(basis) - identity(d)));
    let span = fro_norm(&(kernel.projector.dot(basis) - basis));
    if d != kernel.dim() || ortho > 1e-8 || span > 1e-8 {
        return Err(HolodynError::InvalidParameter(
            "basis does not span the dark subspace at s=0".into(),
        ));
    }
    Ok(())
}

/// Path-ordered product of exp([Pi'(s_j), Pi(s_j)] ds) over a closed loop,
/// later factors leftmost, compressed to the dark block at s=0.
///
/// `basis` fixes the s=0 block basis; pass the same matrix to compare
/// holonomies of different loops. Defaults to the kernel basis of D(0).
pub fn wilson_loop(
    path: &ReservoirPath,
    steps: usize,
    basis: Option<&CMatrix>,
) -> Result<HolonomyResult> {
    if steps < 500 {
        return Err(HolodynError::InvalidParameter(
            "wilson_loop needs at least 500 steps".into(),
        ));
    }
    // Validated kernel (gap + common-eigenvector checks) at the base point.
    let (kernel0, _) = instantaneous_dfs(path, 0.0, DEFAULT_REL_TOL)?;
    let b0 = match basis {
        Some(b) => {
            validate_basis(b, &kernel0)?;
            b.clone()
        }
        None => kernel0.basis.clone(),
    };
    let kernel1 = kernel_at(path, 1.0)?;
    let closure = fro_norm(&(&kernel1.projector - &kernel0.projector));
    if closure > CLOSURE_TOL {
        return Err(HolodynError::OpenPath { defect: closure });
    }

    let n = path.dim;
    let dim0 = kernel0.dim();
    let ds = 1.0 / steps as f64;
    let h = path.smoothness_step;
    let mut u_full = identity(n);
    for j in 0..steps {
        let s_mid = (j as f64 + 0.5) * ds;
        let kp = kernel_at(path, s_mid + h)?;
        let km = kernel_at(path, s_mid - h)?;
        if kp.dim() != dim0 || km.dim() != dim0 {
            return Err(HolodynError::DfsDimensionJump {
                from: dim0,
                to: kp.dim().min(km.dim()),
                s: s_mid,
            });
        }
        let dpi = (&kp.projector - &km.projector).mapv(|z| z / c(2.0 * h, 0.0));
        let pi_mid = (&kp.projector + &km.projector).mapv(|z| z * 0.5);
        // exp(i[Pi',Pi] * (-i ds)) = exp([Pi',Pi] ds): anti-Hermitian step.
        let step = matexp(&commutator(&dpi, &pi_mid), c(ds, 0.0))?;
        u_full = step.dot(&u_full);
    }
    let raw = dagger(&b0).dot(&u_full).dot(&b0);
    finish(
        &raw,
        format!("wilson_loop(dim={n}, dfs={dim0}, steps={steps})"),
    )
}

/// t-th power of a unitary via its eigendecomposition, principal branch.
fn unitary_power(m: &CMatrix, t: f64) -> Result<CMatrix> {
    let (vals, vecs) = eig(m)?;
    let vinv = inverse(&vecs)?;
    let powers = vals.mapv(|l| Complex64::from_polar(1.0, t * l.arg()));
    Ok(vecs.dot(&Array2::from_diag(&powers)).dot(&vinv))
}

/// Periodic orthonormal section V(s_j) of the dark bundle built from a
/// transported frame chain: the closure mismatch at s=1 is spread uniformly
/// so that V(1) = V(0) exactly (up to integration error).
pub fn periodic_section(frames: &[DFSFrame]) -> Result<Vec<CMatrix>> {
    let n = frames.len() - 1;
    let b0 = &frames[0].pi.basis;
    let holo = polar_unitary(&dagger(b0).dot(&frames[n].o).dot(b0))?;
    let mismatch = dagger(&holo);
    let mut section = Vec::with_capacity(n + 1);
    for (j, frame) in frames.iter().enumerate() {
        let twist = unitary_power(&mismatch, j as f64 / n as f64)?;
        section.push(frame.o.dot(b0).dot(&twist));
    }
    Ok(section)
}

/// Connection components A_j = -V_j^dag dV/ds of a periodic orthonormal
/// section, one per grid point (the last repeats the first). Anti-Hermitized
/// after a defect check; a defect above 1e-6 means the grid is too coarse.
pub fn connection_of_section(section: &[CMatrix]) -> Result<Vec<CMatrix>> {
    let n = section.len() - 1;
    let ds = 1.0 / n as f64;
    let at = |j: isize| &section[j.rem_euclid(n as isize) as usize];
    let mut out = Vec::with_capacity(n + 1);
    for j in 0..n as isize {
        // Fourth-order central difference on the periodic grid.
        let dv = (at(j - 2) - at(j + 2) + (at(j + 1) - at(j - 1)).mapv(|z| z * 8.0))
            .mapv(|z| z / c(12.0 * ds, 0.0));
        let a = dagger(at(j)).dot(&dv).mapv(|z| -z);
        let defect = fro_norm(&(&a + &dagger(&a)));
        if defect > ANTI_HERMITICITY_TOL {
            return Err(HolodynError::InvalidParameter(format!(
                "connection anti-Hermiticity defect {defect:.3e}: grid too coarse"
            )));
        }
        out.push((&a - &dagger(&a)).mapv(|z| z * 0.5));
    }
    out.push(out[0].clone());
    Ok(out)
}

/// Connection of the periodic section built from a transported frame chain.
pub fn connection(frames: &[DFSFrame]) -> Result<Vec<CMatrix>> {
    connection_of_section(&periodic_section(frames)?)
}

/// Path-ordered exponential of a sampled connection, later factors leftmost.
pub fn holonomy_from_connection(a: &[CMatrix]) -> Result<HolonomyResult> {
    let n = a.len() - 1;
    let ds = 1.0 / n as f64;
    let d = a[0].nrows();
    let mut u = identity(d);
    for j in 0..n {
        let mid = (&a[j] + &a[j + 1]).mapv(|z| z * 0.5);
        u = matexp(&mid, c(ds, 0.0))?.dot(&u);
    }
    finish(&u, format!("connection(dfs={d}, steps={n})"))
}

/// Holonomy through the frame machinery: the endpoint block of O(1),
/// gauge-corrected by unwinding the dynamical rotation that Q generates
/// inside the dark block.
pub fn frame_holonomy(frames: &[DFSFrame]) -> Result<HolonomyResult> {
    let n = frames.len() - 1;
    let pi0 = &frames[0].pi;
    let b0 = &pi0.basis;
    let ds = 1.0 / n as f64;
    let g_dfs: Vec<CMatrix> = frames
        .iter()
        .map(|f| {
            let g_bar = dagger(&f.o).dot(&f.g).dot(&f.o);
            block(&g_bar, pi0, pi0)
        })
        .collect::<Result<_>>()?;
    // du/ds = i G_DF u: the dark-block dynamical phase of the chosen gauge.
    let mut u_dyn = identity(pi0.dim());
    for j in 0..n {
        let mid = (&g_dfs[j] + &g_dfs[j + 1]).mapv(|z| z * 0.5);
        u_dyn = matexp(&mid, I * c(ds, 0.0))?.dot(&u_dyn);
    }
    let endpoint = polar_unitary(&dagger(b0).dot(&frames[n].o).dot(b0))?;
    finish(
        &endpoint.dot(&u_dyn),
        format!("frame_holonomy(dfs={}, steps={n})", pi0.dim()),
    )
}

/// Maximum discrepancy between the frame holonomies under two gauges and the
/// gauge-fixed Wilson loop. Gauge invariance makes all three agree.
pub fn gauge_invariance_check(
    path: &ReservoirPath,
    q1: Option<GaugeFn>,
    q2: Option<GaugeFn>,
    steps: usize,
) -> Result<f64> {
    let frames1 = transport_frame(path, steps, q1)?;
    let frames2 = transport_frame(path, steps, q2)?;
    let u1 = frame_holonomy(&frames1)?.u;
    let u2 = frame_holonomy(&frames2)?.u;
    let reference = wilson_loop(path, steps.max(500), Some(&frames1[0].pi.basis))?.u;
    let d12 = fro_norm(&(&u1 - &u2));
    let d1r = fro_norm(&(&u1 - &reference));
    let d2r = fro_norm(&(&u2 - &reference));
    Ok(d12.max(d1r).max(d2r))
}

/// ||U_A U_B - U_B U_A|| for two loops sharing the dark subspace at s=0.
pub fn noncommutativity(
    path_a: &ReservoirPath,
    path_b: &ReservoirPath,
    steps: usize,
) -> Result<f64> {
    let ka = kernel_at(path_a, 0.0)?;
    let kb = kernel_at(path_b, 0.0)?;
    let mismatch = fro_norm(&(&ka.projector - &kb.projector));
    if mismatch > CLOSURE_TOL {
        return Err(HolodynError::InvalidParameter(format!(
            "dark subspaces differ at s=0: defect {mismatch:.3e}"
        )));
    }
    let ua = wilson_loop(path_a, steps, Some(&ka.basis))?.u;
    let ub = wilson_loop(path_b, steps, Some(&ka.basis))?.u;
    Ok(fro_norm(&(ua.dot(&ub) - ub.dot(&ua))))
}
