//! Full lab-frame integration of the time-dependent master equation.
//!
//! Fixed-step RK4 on d rho/dt = -i[H, rho] - sum_k {G_k^dag G_k rho
//! + rho G_k^dag G_k - 2 G_k rho G_k^dag}, with the path sampled at
//! Gamma_k(t) = Gamma_k(s = t/T). No 1/2 in front of the dissipator: a
//! two-level decay through Gamma = sqrt(kappa)|0><1| relaxes at rate 2 kappa.

use crate::dfs_tracker::{instantaneous_dfs, DFSFrame, DEFAULT_REL_TOL};
use crate::operator_algebra::{
    c, commutator, dagger, eigh, fro_norm, hermitian_part, trace, CMatrix, I,
};
use crate::reservoir_path::ReservoirPath;
use crate::{HolodynError, Result};

/// Hard ceiling on (fastest dissipative rate) * dt.
pub const STABILITY_GUARD: f64 = 0.1;
const TRACE_ABORT: f64 = 1e-6;
const MAX_STORED: usize = 1000;

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Path parameter s = t/T of each stored state.
    pub grid: Vec<f64>,
    pub states: Vec<CMatrix>,
    /// Total physical time in 1/rate units.
    pub t_total: f64,
    pub trace_defects: Vec<f64>,
    pub min_eigs: Vec<f64>,
    /// tr(Pi(s) rho(s)) at stored steps.
    pub dfs_pops: Vec<f64>,
}

struct PreparedSample {
    gammas: Vec<CMatrix>,
    gamma_dags: Vec<CMatrix>,
    /// sum_k Gamma_k^dag Gamma_k
    total: CMatrix,
}

fn prepare(path: &ReservoirPath, s: f64) -> PreparedSample {
    let sample = path.eval(s);
    let gamma_dags: Vec<CMatrix> = sample.gammas.iter().map(dagger).collect();
    let n = path.dim;
    let mut total = crate::operator_algebra::zeros(n);
    for (g, gd) in sample.gammas.iter().zip(gamma_dags.iter()) {
        total = total + gd.dot(g);
    }
    PreparedSample {
        gammas: sample.gammas,
        gamma_dags,
        total,
    }
}

fn rhs(sample: &PreparedSample, rho: &CMatrix, hamiltonian: Option<&CMatrix>) -> CMatrix {
    let mut out = sample.total.dot(rho) + rho.dot(&sample.total);
    out.mapv_inplace(|z| -z);
    for (g, gd) in sample.gammas.iter().zip(sample.gamma_dags.iter()) {
        out = out + g.dot(rho).dot(gd).mapv(|z| z * 2.0);
    }
    if let Some(h) = hamiltonian {
        out = out - commutator(h, rho).mapv(|z| z * I);
    }
    out
}

/// Fastest dissipative rate along the path, used by the stability guard.
pub fn rate_scale(path: &ReservoirPath) -> f64 {
    let mut scale = 0.0f64;
    for j in 0..8 {
        let sample = prepare(path, j as f64 / 8.0);
        let p = hermitian_part(&sample.total);
        if let Ok((vals, _)) = eigh(&p) {
            scale = scale.max(vals.iter().cloned().fold(0.0, f64::max));
        }
    }
    scale
}

fn validate_rho0(rho0: &CMatrix) -> Result<()> {
    if fro_norm(&(rho0 - &dagger(rho0))) > 1e-10 {
        return Err(HolodynError::InvalidParameter("rho0 not Hermitian".into()));
    }
    if (trace(rho0).re - 1.0).abs() > 1e-9 {
        return Err(HolodynError::InvalidParameter("rho0 trace != 1".into()));
    }
    let (vals, _) = eigh(rho0)?;
    if vals.iter().any(|&v| v < -1e-10) {
        return Err(HolodynError::InvalidParameter("rho0 not positive".into()));
    }
    Ok(())
}

/// Integrate the master equation over t in [0, T].
///
/// Stores every ceil(steps/1000)-th state plus the endpoint. Aborts on trace
/// drift beyond 1e-6 and rejects step counts that violate the stability
/// guard rate * T / steps <= 0.1.
pub fn integrate(
    path: &ReservoirPath,
    rho0: &CMatrix,
    t_total: f64,
    steps: usize,
    hamiltonian: Option<&CMatrix>,
) -> Result<Trajectory> {
    if rho0.nrows() != path.dim || rho0.ncols() != path.dim {
        return Err(HolodynError::DimensionMismatch {
            expected: path.dim,
            got: rho0.nrows(),
        });
    }
    validate_rho0(rho0)?;
    let guard = rate_scale(path) * t_total / steps as f64;
    if guard > STABILITY_GUARD {
        return Err(HolodynError::StabilityGuard { value: guard });
    }
    let dt = t_total / steps as f64;
    let stride = steps.div_ceil(MAX_STORED);

    let mut traj = Trajectory {
        grid: Vec::new(),
        states: Vec::new(),
        t_total,
        trace_defects: Vec::new(),
        min_eigs: Vec::new(),
        dfs_pops: Vec::new(),
    };
    let mut store = |s: f64, rho: &CMatrix| -> Result<()> {
        let defect = (trace(rho).re - 1.0).abs();
        let (vals, _) = eigh(rho)?;
        let min_eig = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let (kernel, _) = instantaneous_dfs(path, s, DEFAULT_REL_TOL)?;
        let pop = trace(&kernel.projector.dot(rho)).re;
        traj.grid.push(s);
        traj.states.push(rho.clone());
        traj.trace_defects.push(defect);
        traj.min_eigs.push(min_eig);
        traj.dfs_pops.push(pop);
        Ok(())
    };

    let mut rho = rho0.clone();
    let mut sample_start = prepare(path, 0.0);
    store(0.0, &rho)?;
    let half = c(dt / 2.0, 0.0);
    let sixth = c(dt / 6.0, 0.0);
    for j in 0..steps {
        let t = j as f64 * dt;
        let s_mid = (t + dt / 2.0) / t_total;
        let s_end = (t + dt) / t_total;
        let sample_mid = prepare(path, s_mid);
        let sample_end = prepare(path, s_end);

        let k1 = rhs(&sample_start, &rho, hamiltonian);
        let k2 = rhs(&sample_mid, &(&rho + &k1.mapv(|z| z * half)), hamiltonian);
        let k3 = rhs(&sample_mid, &(&rho + &k2.mapv(|z| z * half)), hamiltonian);
        let k4 = rhs(
            &sample_end,
            &(&rho + &k3.mapv(|z| z * c(dt, 0.0))),
            hamiltonian,
        );
        rho = &rho + &(k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * sixth);
        // Strip the O(ulp) anti-Hermitian drift before it pollutes diagnostics.
        rho = hermitian_part(&rho);

        let defect = (trace(&rho).re - 1.0).abs();
        if defect > TRACE_ABORT {
            return Err(HolodynError::TraceDrift { defect });
        }
        if (j + 1) % stride == 0 || j + 1 == steps {
            store(s_end, &rho)?;
        }
        sample_start = sample_end;
    }
    Ok(traj)
}

/// DFS population and fidelity against the frame-transported reference
/// O(s) rho0 O(s)^dag, per stored trajectory point.
///
/// The trajectory grid must be a subset of the frame grid.
pub fn dfs_overlap(traj: &Trajectory, frames: &[DFSFrame]) -> Result<Vec<(f64, f64, f64)>> {
    let rho0 = &traj.states[0];
    let frame_steps = frames.len() - 1;
    let mut out = Vec::with_capacity(traj.grid.len());
    for (idx, &s) in traj.grid.iter().enumerate() {
        let pos = s * frame_steps as f64;
        let j = pos.round() as usize;
        if (pos - j as f64).abs() > 1e-6 || j >= frames.len() {
            return Err(HolodynError::GridMismatch);
        }
        let frame = &frames[j];
        let rho = &traj.states[idx];
        let p = trace(&frame.pi.projector.dot(rho)).re;
        let reference = frame.o.dot(rho0).dot(&dagger(&frame.o));
        // Overlap with the transported (pure) reference, evaluated on the
        // DFS block: projecting first makes the measure insensitive to
        // whatever the leaked component does outside the block.
        let pi = &frame.pi.projector;
        let rho_block = pi.dot(rho).dot(pi);
        let fidelity = trace(&rho_block.dot(&reference)).re;
        out.push((s, p, fidelity));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfs_tracker::transport_frame;
    use crate::operator_algebra::{zeros, ONE, ZERO};
    use crate::reservoir_path::{scenario_dark_state, ReservoirPath};
    use ndarray::array;
    use std::f64::consts::PI;

    #[test]
    fn dfs_state_is_stationary_for_static_bath() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        let path = ReservoirPath::static_path(vec![g], vec![ZERO]).unwrap();
        let rho0 = array![[ONE, ZERO], [ZERO, ZERO]];
        let traj = integrate(&path, &rho0, 5.0, 200, None).unwrap();
        for rho in &traj.states {
            assert!(fro_norm(&(rho - &rho0)) < 1e-12);
        }
    }

    #[test]
    fn two_level_decay_rate_is_2kappa() {
        // Gamma = sqrt(kappa)|0><1|: excited population decays as e^{-2 kappa t}.
        let kappa: f64 = 0.8;
        let mut g = zeros(2);
        g[[0, 1]] = c(kappa.sqrt(), 0.0);
        let path = ReservoirPath::static_path(vec![g], vec![ZERO]).unwrap();
        let rho0 = array![[ZERO, ZERO], [ZERO, ONE]];
        let t = 2.0;
        let traj = integrate(&path, &rho0, t, 2000, None).unwrap();
        let p11 = traj.states.last().unwrap()[[1, 1]].re;
        let expect = (-2.0 * kappa * t).exp();
        assert!(
            (p11 - expect).abs() < 1e-9,
            "p11 = {p11}, closed form {expect}"
        );
    }

    #[test]
    fn stability_guard_rejects_coarse_steps() {
        let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
        let err = integrate(&sc.path, &sc.rho0, 1000.0, 100, None);
        assert!(matches!(err, Err(HolodynError::StabilityGuard { .. })));
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
        let traj = integrate(&sc.path, &sc.rho0, 50.0, 2000, None).unwrap();
        for (rho, defect) in traj.states.iter().zip(traj.trace_defects.iter()) {
            assert!(*defect <= 1e-9);
            assert!(fro_norm(&(rho - &dagger(rho))) <= 1e-10);
            let purity = trace(&rho.dot(rho)).re;
            assert!(purity <= 1.0 + 1e-9);
        }
        for min_eig in &traj.min_eigs {
            assert!(*min_eig >= -1e-8);
        }
    }

    #[test]
    fn adiabatic_dark_state_leakage_matches_first_order() {
        // One loop at eta = 1/(kappa T) leaks 2 eta (2 pi)^2 sin^2 cos^2
        // of the dark-state population to first order in eta.
        let theta = PI / 4.0;
        let sc = scenario_dark_state(theta, 1.0).unwrap();
        let t = 1000.0;
        let traj = integrate(&sc.path, &sc.rho0, t, 20000, None).unwrap();
        let leak = 1.0 - traj.dfs_pops.last().unwrap();
        let predicted =
            2.0 / t * (2.0 * PI).powi(2) * (theta.sin() * theta.cos()).powi(2);
        assert!(
            (leak - predicted).abs() <= 0.1 * predicted,
            "leakage {leak:.4e} vs first-order prediction {predicted:.4e}"
        );
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
        let t = 20.0;
        let run = |steps: usize| {
            integrate(&sc.path, &sc.rho0, t, steps, None)
                .unwrap()
                .states
                .last()
                .unwrap()
                .clone()
        };
        let a = run(400);
        let b = run(800);
        let c_ = run(1600);
        let d1 = fro_norm(&(&a - &b));
        let d2 = fro_norm(&(&b - &c_));
        assert!(
            d2 * 10.0 <= d1,
            "difference should shrink ~16x per halving: {d1:.3e} -> {d2:.3e}"
        );
    }

    #[test]
    fn dfs_overlap_static_is_unity() {
        let g = array![[ZERO, ZERO], [ZERO, ONE]];
        let path = ReservoirPath::static_path(vec![g], vec![ZERO]).unwrap();
        let rho0 = array![[ONE, ZERO], [ZERO, ZERO]];
        let traj = integrate(&path, &rho0, 5.0, 1000, None).unwrap();
        let frames = transport_frame(&path, 1000, None).unwrap();
        for (_, p, f) in dfs_overlap(&traj, &frames).unwrap() {
            assert!((p - 1.0).abs() < 1e-10);
            assert!((f - 1.0).abs() < 1e-10);
        }
    }
}
