//! Rotating-frame operators and the adiabatic superoperator hierarchy.
//!
//! In the frame of the transport unitary O(s), with rates rescaled by the
//! global gap bound gamma, the master equation splits into orders of
//! eta = 1/(gamma T):
//!
//!   (1/eta) L_-1  fast relaxation built from the Gammabar_k,
//!   L_0           geometric dark-block generator i[Gbar_DF, .],
//!   eta L_1       leakage: Lambda_k = Gammabar_k S1 plus the Hermitian Z.
//!
//! S1 block-off-diagonalizes the non-Hermitian -eta Gbar - i Dbar to first
//! order; its time derivative is dropped, as the expansion assumes.

use crate::dfs_tracker::{build_d, DFSFrame};
use crate::operator_algebra::{
    c, commutator, dagger, eigvals, fro_norm, identity, inverse, kron, matexp, nullspace, trace,
    unstack, vec_stack, zeros, CMatrix, CVector, Subspace, I,
};
use crate::reservoir_path::{PathSample, ReservoirPath};
use crate::{HolodynError, Result};

/// Every rotated operator the expansion needs at one path point.
#[derive(Debug, Clone)]
pub struct AdiabaticOrders {
    pub s: f64,
    /// Adiabatic parameter 1/(gamma T).
    pub eta: f64,
    pub gbar: CMatrix,
    pub gammabars: Vec<CMatrix>,
    pub dbar: CMatrix,
    pub s1: CMatrix,
    pub htilde0: CMatrix,
    pub htilde1: CMatrix,
    pub htilde2: CMatrix,
    /// Leakage operators Lambda_k = Gammabar_k S1.
    pub lambdas: Vec<CMatrix>,
    /// Hermitian correction Z = i G_off^dag (Dinv^dag - Dinv) G_off.
    pub z: CMatrix,
    /// Dark projector in the rotated frame, O^dag Pi(s) O.
    pub pi_bar: Subspace,
}

/// Gammabar_k = (O^dag Gamma_k O - c_k)/sqrt(gamma), Dbar = O^dag D O / gamma,
/// Gbar = O^dag G O. `gamma_gap` is the global bound of hypothesis (ii).
pub fn rotate_ops(
    frame: &DFSFrame,
    sample: &PathSample,
    gamma_gap: f64,
) -> Result<(Vec<CMatrix>, CMatrix, CMatrix)> {
    if gamma_gap <= 0.0 {
        return Err(HolodynError::InvalidParameter(
            "gamma_gap must be positive".into(),
        ));
    }
    let n = frame.o.nrows();
    let od = dagger(&frame.o);
    let root = gamma_gap.sqrt();
    let gammabars = sample
        .gammas
        .iter()
        .zip(sample.cs.iter())
        .map(|(g, ck)| {
            (od.dot(g).dot(&frame.o) - identity(n).mapv(|z| z * ck)).mapv(|z| z / root)
        })
        .collect();
    let d = build_d(&sample.gammas, &sample.cs)?;
    let dbar = od.dot(&d).dot(&frame.o).mapv(|z| z / gamma_gap);
    let gbar = od.dot(&frame.g).dot(&frame.o);
    Ok((gammabars, dbar, gbar))
}

/// Inverse of Dbar on the complement of the dark block, embedded back into
/// the full space (zero on the dark block).
fn restricted_inverse(dbar: &CMatrix, pi_bar: &Subspace) -> Result<CMatrix> {
    let b_perp = nullspace(&pi_bar.projector, 1e-9)?;
    if b_perp.dim() == 0 {
        return Err(HolodynError::InvalidParameter(
            "dark subspace fills the whole space; no complement block".into(),
        ));
    }
    let block = dagger(&b_perp.basis).dot(dbar).dot(&b_perp.basis);
    let inv = inverse(&block).map_err(|_| HolodynError::GapCollapse {
        gap: 0.0,
        floor: 0.0,
    })?;
    Ok(b_perp.basis.dot(&inv).dot(&dagger(&b_perp.basis)))
}

fn g_off(gbar: &CMatrix, pi_bar: &Subspace) -> CMatrix {
    pi_bar.perp_projector().dot(gbar).dot(&pi_bar.projector)
}

/// S1 = Dinv_perp Gbar_off - h.c.; anti-Hermitian with support only on the
/// off-diagonal blocks.
pub fn s1_operator(dbar: &CMatrix, gbar: &CMatrix, pi_bar: &Subspace) -> Result<CMatrix> {
    let dinv = restricted_inverse(dbar, pi_bar)?;
    let x = dinv.dot(&g_off(gbar, pi_bar));
    Ok(&x - &dagger(&x))
}

/// The block-diagonalized Hamiltonian orders of the expansion.
pub fn htilde_orders(
    dbar: &CMatrix,
    gbar: &CMatrix,
    s1: &CMatrix,
    pi_bar: &Subspace,
) -> (CMatrix, CMatrix, CMatrix) {
    let p = &pi_bar.projector;
    let q = pi_bar.perp_projector();
    let diag = |a: &CMatrix| p.dot(a).dot(p) + q.dot(a).dot(&q);
    let h0 = dbar.mapv(|z| z * (-I));
    let h1 = diag(gbar).mapv(|z| -z);
    let is1 = s1.mapv(|z| z * I);
    let h2 = diag(&commutator(&is1, gbar)).mapv(|z| z * (-0.5));
    (h0, h1, h2)
}

/// Dark-block generator Gbar_DF in the rotated frame; zero in the parallel
/// gauge Q = 0.
pub fn l0_generator(frame: &DFSFrame) -> CMatrix {
    let p = &frame.pi.projector;
    let core = p.dot(&frame.g).dot(p);
    dagger(&frame.o).dot(&core).dot(&frame.o)
}

/// Dense superoperator on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    pub matrix: CMatrix,
    pub dim: usize,
}

impl SuperOperator {
    pub fn zero(dim: usize) -> Self {
        SuperOperator {
            matrix: zeros(dim * dim),
            dim,
        }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unstack(&self.matrix.dot(&vec_stack(rho)), self.dim)
    }

    /// || vec(1)^dag M ||: zero iff the generator preserves trace.
    pub fn trace_defect(&self) -> f64 {
        let left = vec_stack(&identity(self.dim));
        let row = left.mapv(|z| z.conj()).dot(&self.matrix);
        row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn spectrum(&self) -> Result<CVector> {
        eigvals(&self.matrix)
    }

    /// Compression onto the span of the given matrices (orthonormalized by
    /// the caller): M_ij = <basis_i, L[basis_j]>.
    pub fn compress(&self, basis: &[CMatrix]) -> CMatrix {
        let k = basis.len();
        let mut m = zeros(k);
        for (j, bj) in basis.iter().enumerate() {
            let image = self.apply(bj);
            for (i, bi) in basis.iter().enumerate() {
                m[[i, j]] = trace(&dagger(bi).dot(&image));
            }
        }
        m
    }
}

/// rho -> A rho B as a dense matrix, column-stacking convention.
fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.t().to_owned(), a)
}

/// -sum_k { L_k^dag L_k rho + rho L_k^dag L_k - 2 L_k rho L_k^dag }.
fn dissipator_superop(ops: &[CMatrix], dim: usize) -> SuperOperator {
    let eye = identity(dim);
    let mut m = zeros(dim * dim);
    for op in ops {
        let od = dagger(op);
        let sq = od.dot(op);
        m = m - sandwich(&sq, &eye) - sandwich(&eye, &sq)
            + sandwich(op, &od).mapv(|z| z * 2.0);
    }
    SuperOperator { matrix: m, dim }
}

/// L_-1: the fast dissipator built from the rescaled Gammabar_k. Annihilates
/// every state supported on the dark block.
pub fn l_minus1_superop(gammabars: &[CMatrix], dim: usize) -> SuperOperator {
    dissipator_superop(gammabars, dim)
}

/// L_1 and its ingredients: the leakage operators Lambda_k = Gammabar_k S1,
/// the Hermitian correction Z, and the per-operator leakage indicators
/// ||Pi_perp Lambda_k Pi||.
pub fn l1_superop(
    gammabars: &[CMatrix],
    dbar: &CMatrix,
    gbar: &CMatrix,
    s1: &CMatrix,
    pi_bar: &Subspace,
) -> Result<(SuperOperator, Vec<CMatrix>, CMatrix, Vec<f64>)> {
    let dim = dbar.nrows();
    let lambdas: Vec<CMatrix> = gammabars.iter().map(|g| g.dot(s1)).collect();
    let dinv = restricted_inverse(dbar, pi_bar)?;
    let goff = g_off(gbar, pi_bar);
    let z = dagger(&goff)
        .dot(&(dagger(&dinv) - &dinv))
        .dot(&goff)
        .mapv(|z| z * I);
    let mut sup = dissipator_superop(&lambdas, dim);
    let eye = identity(dim);
    sup.matrix = sup.matrix
        + (sandwich(&z, &eye) - sandwich(&eye, &z)).mapv(|v| v * (-I));
    let indicators = lambdas
        .iter()
        .map(|l| fro_norm(&pi_bar.perp_projector().dot(l).dot(&pi_bar.projector)))
        .collect();
    Ok((sup, lambdas, z, indicators))
}

/// Assemble every order of the expansion at one frame.
pub fn build_orders(
    path: &ReservoirPath,
    frame: &DFSFrame,
    gamma_gap: f64,
    eta: f64,
) -> Result<AdiabaticOrders> {
    let sample = path.eval(frame.s);
    let (gammabars, dbar, gbar) = rotate_ops(frame, &sample, gamma_gap)?;
    let pi_bar = Subspace::from_basis(dagger(&frame.o).dot(&frame.pi.basis));
    let s1 = s1_operator(&dbar, &gbar, &pi_bar)?;
    let (htilde0, htilde1, htilde2) = htilde_orders(&dbar, &gbar, &s1, &pi_bar);
    let (_, lambdas, z, _) = l1_superop(&gammabars, &dbar, &gbar, &s1, &pi_bar)?;
    Ok(AdiabaticOrders {
        s: frame.s,
        eta,
        gbar,
        gammabars,
        dbar,
        s1,
        htilde0,
        htilde1,
        htilde2,
        lambdas,
        z,
        pi_bar,
    })
}

/// Instantaneous leakage rate out of the dark block at first order:
/// 2 sum_k Re tr(Pi_perp Lambda_k rho Lambda_k^dag) (multiply by eta).
pub fn leakage_rate(orders: &AdiabaticOrders, rho_bar: &CMatrix) -> f64 {
    let q = orders.pi_bar.perp_projector();
    orders
        .lambdas
        .iter()
        .map(|l| 2.0 * trace(&q.dot(l).dot(rho_bar).dot(&dagger(l))).re)
        .sum()
}

/// Per-loop leakage predicted by eta L_1 for a state held at rho_bar0 inside
/// the dark block (exact at Q = 0, where the dark block is frozen in the
/// rotated frame). Trapezoid over the frame grid.
pub fn predicted_loop_leakage(
    path: &ReservoirPath,
    frames: &[DFSFrame],
    rho_bar0: &CMatrix,
    eta: f64,
) -> Result<f64> {
    let gamma_gap = global_gap(frames);
    let n = frames.len() - 1;
    let ds = 1.0 / n as f64;
    let mut total = 0.0;
    for (j, frame) in frames.iter().enumerate() {
        let orders = build_orders(path, frame, gamma_gap, eta)?;
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        total += w * leakage_rate(&orders, rho_bar0) * ds;
    }
    Ok(eta * total)
}

/// Smallest gap along a frame chain: the global damping scale gamma.
pub fn global_gap(frames: &[DFSFrame]) -> f64 {
    frames.iter().map(|f| f.gap).fold(f64::INFINITY, f64::min)
}

struct RotatedPoint {
    gammabars: Vec<CMatrix>,
    gamma_dags: Vec<CMatrix>,
    dbar: CMatrix,
    dbar_dag: CMatrix,
    gbar: CMatrix,
}

fn rotated_points(
    path: &ReservoirPath,
    frames: &[DFSFrame],
    gamma_gap: f64,
) -> Result<Vec<RotatedPoint>> {
    frames
        .iter()
        .map(|frame| {
            let sample = path.eval(frame.s);
            let (gammabars, dbar, gbar) = rotate_ops(frame, &sample, gamma_gap)?;
            let gamma_dags = gammabars.iter().map(dagger).collect();
            let dbar_dag = dagger(&dbar);
            Ok(RotatedPoint {
                gammabars,
                gamma_dags,
                dbar,
                dbar_dag,
                gbar,
            })
        })
        .collect()
}

fn rk4<F: Fn(usize, &CMatrix) -> CMatrix>(rho0: &CMatrix, half_points: usize, rhs: F) -> CMatrix {
    // Grid has 2*steps+1 points; RK4 stages hit every half point.
    let steps = (half_points - 1) / 2;
    let ds = 1.0 / steps as f64;
    let half = c(ds / 2.0, 0.0);
    let sixth = c(ds / 6.0, 0.0);
    let mut rho = rho0.clone();
    for j in 0..steps {
        let (a, m, b) = (2 * j, 2 * j + 1, 2 * j + 2);
        let k1 = rhs(a, &rho);
        let k2 = rhs(m, &(&rho + &k1.mapv(|z| z * half)));
        let k3 = rhs(m, &(&rho + &k2.mapv(|z| z * half)));
        let k4 = rhs(b, &(&rho + &k3.mapv(|z| z * c(ds, 0.0))));
        rho = &rho + &(k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * sixth);
    }
    rho
}

/// Integrate the exact rotated-frame master equation
/// d rhobar/ds = i[Gbar, rhobar] - (1/eta){Dbar rhobar + rhobar Dbar^dag
/// - 2 sum_k Gammabar_k rhobar Gammabar_k^dag} over one loop.
///
/// `frames` must hold 2*steps+1 points so the RK4 stages land on the grid.
pub fn integrate_rotated(
    path: &ReservoirPath,
    frames: &[DFSFrame],
    rho_bar0: &CMatrix,
    eta: f64,
) -> Result<CMatrix> {
    check_half_grid(frames, eta)?;
    let points = rotated_points(path, frames, global_gap(frames))?;
    let inv_eta = 1.0 / eta;
    Ok(rk4(rho_bar0, frames.len(), |j, rho| {
        let p = &points[j];
        let mut diss = p.dbar.dot(rho) + rho.dot(&p.dbar_dag);
        for (g, gd) in p.gammabars.iter().zip(p.gamma_dags.iter()) {
            diss = diss - g.dot(rho).dot(gd).mapv(|z| z * 2.0);
        }
        commutator(&p.gbar, rho).mapv(|z| z * I) - diss.mapv(|z| z * inv_eta)
    }))
}

/// Integrate the truncated hierarchy (1/eta) L_-1 + L_0 + eta L_1 with
/// operators rebuilt at every half point of the frame grid.
pub fn integrate_hierarchy(
    path: &ReservoirPath,
    frames: &[DFSFrame],
    rho_tilde0: &CMatrix,
    eta: f64,
) -> Result<CMatrix> {
    check_half_grid(frames, eta)?;
    let gamma_gap = global_gap(frames);
    let orders: Vec<AdiabaticOrders> = frames
        .iter()
        .map(|f| build_orders(path, f, gamma_gap, eta))
        .collect::<Result<_>>()?;
    let g_dfs: Vec<CMatrix> = frames.iter().map(l0_generator).collect();
    let inv_eta = 1.0 / eta;
    Ok(rk4(rho_tilde0, frames.len(), |j, rho| {
        let o = &orders[j];
        let mut fast = zeros(rho.nrows());
        for g in &o.gammabars {
            let gd = dagger(g);
            let sq = gd.dot(g);
            fast = fast + sq.dot(rho) + rho.dot(&sq) - g.dot(rho).dot(&gd).mapv(|z| z * 2.0);
        }
        let mut slow = commutator(&o.z, rho).mapv(|z| z * I);
        for l in &o.lambdas {
            let ld = dagger(l);
            let sq = ld.dot(l);
            slow = slow + sq.dot(rho) + rho.dot(&sq) - l.dot(rho).dot(&ld).mapv(|z| z * 2.0);
        }
        let geometric = commutator(&g_dfs[j], rho).mapv(|z| z * I);
        fast.mapv(|z| z * (-inv_eta)) + geometric + slow.mapv(|z| z * (-eta))
    }))
}

fn check_half_grid(frames: &[DFSFrame], eta: f64) -> Result<()> {
    if frames.len() < 3 || frames.len() % 2 == 0 {
        return Err(HolodynError::GridMismatch);
    }
    let steps = (frames.len() - 1) / 2;
    // Fastest rate in the hierarchy is O(1/eta); keep RK4 well inside its
    // stability region.
    let guard = 4.0 / (eta * steps as f64);
    if guard > 0.5 {
        return Err(HolodynError::StabilityGuard { value: guard });
    }
    Ok(())
}

/// rho_tilde = e^{i eta S1} rho_bar e^{i eta S1}, trace-normalized (S1 is
/// anti-Hermitian, so e^{-i (eta S1)^dag} = e^{i eta S1}).
pub fn to_tilde(rho_bar: &CMatrix, s1: &CMatrix, eta: f64) -> Result<CMatrix> {
    let t = matexp(s1, I * c(eta, 0.0))?;
    let raw = t.dot(rho_bar).dot(&t);
    let norm = trace(&raw);
    Ok(raw.mapv(|z| z / norm))
}

/// Diagnostic for the dropped dS/ds term: max finite-difference derivative
/// of S1 over the frame grid.
pub fn s1_drift(path: &ReservoirPath, frames: &[DFSFrame], eta: f64) -> Result<f64> {
    let gamma_gap = global_gap(frames);
    let ds = 1.0 / (frames.len() - 1) as f64;
    let mut prev: Option<CMatrix> = None;
    let mut worst = 0.0f64;
    for frame in frames {
        let orders = build_orders(path, frame, gamma_gap, eta)?;
        if let Some(p) = prev {
            worst = worst.max(fro_norm(&(&orders.s1 - &p)) / ds);
        }
        prev = Some(orders.s1);
    }
    Ok(worst)
}
