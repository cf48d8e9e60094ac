//! End-to-end acceptance suite. Each test covers one release criterion and
//! prints a single PASS line (run with `--nocapture` to see them).

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use holodyn::adiabatic_expansion::{
    build_orders, global_gap, integrate_hierarchy, integrate_rotated, to_tilde,
};
use holodyn::dfs_tracker::transport_frame;
use holodyn::experiment_harness::{
    exp_adiabatic_limit, exp_leakage_scaling, load_config, run_config, run_sweep_point, sweep,
    sweep_context, verify_invariants, Tolerances, EXIT_OK, EXIT_SCHEMA,
};
use holodyn::holonomy::{gauge_invariance_check, noncommutativity, wilson_loop};
use holodyn::operator_algebra::{fro_norm, hermitian_part, random_hermitian, trace, Subspace};
use holodyn::reservoir_path::{scenario_dark_state, scenario_tripod, LoopCurve, ReservoirPath};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Wrap an angle into (-pi, pi].
fn wrap(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Circular distance between two angles.
fn phase_dist(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

/// Independent Berry-phase oracle: quadrature of i<D|dD/ds> for the analytic
/// dark section D(s) = (e^{-i 2 pi s} sin(theta), -cos(theta), 0) on an
/// N-point periodic grid with central differences.
fn berry_quadrature(theta: f64, n: usize) -> f64 {
    let dark = |s: f64| -> Vec<Complex64> {
        vec![
            Complex64::from_polar(theta.sin(), -2.0 * PI * s),
            Complex64::new(-theta.cos(), 0.0),
            Complex64::new(0.0, 0.0),
        ]
    };
    let ds = 1.0 / n as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let s = j as f64 * ds;
        let d = dark(s);
        let plus = dark(s + ds);
        let minus = dark(s - ds);
        let mut inner = Complex64::new(0.0, 0.0);
        for k in 0..3 {
            inner += d[k].conj() * (plus[k] - minus[k]) / (2.0 * ds);
        }
        total += inner * ds;
    }
    (Complex64::new(0.0, 1.0) * total).re
}

#[test]
fn criterion_1_berry_phase_oracle() {
    let start = Instant::now();
    for (theta, expected) in [(PI / 4.0, PI), (PI / 6.0, PI / 2.0)] {
        let oracle = berry_quadrature(theta, 10_000);
        assert!(
            phase_dist(oracle, expected) < 1e-6,
            "oracle {oracle} vs expected {expected} at theta={theta}"
        );
        let path = ReservoirPath::dark_state(theta, 1.0).unwrap();
        let result = wilson_loop(&path, 10_000, None).unwrap();
        assert_eq!(result.phases.len(), 1);
        let got = result.phases[0];
        assert!(
            phase_dist(got, expected) < 1e-6,
            "wilson phase {got} vs expected {expected} at theta={theta}"
        );
        assert!(
            phase_dist(got, oracle) < 1e-6,
            "wilson {got} disagrees with oracle {oracle}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    println!("criterion 1 (Berry-phase oracle): PASS ({elapsed:?})");
}

#[test]
fn criterion_2_adiabatic_convergence() {
    let start = Instant::now();
    let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
    let ctx = sweep_context(sc).unwrap();
    let gamma_t = [100.0, 1000.0, 10000.0];
    let points = sweep(&ctx, &gamma_t, 128_000, 3).unwrap();
    let report = exp_adiabatic_limit(&ctx, &points, &Tolerances::default()).unwrap();
    let (slope_eta, stderr) = report.slope.unwrap();
    // 1 - fidelity shrinks like 1/(gamma T): slope -1 against gamma T,
    // equivalently +1 against eta.
    let slope_gamma_t = -slope_eta;
    assert!(
        (slope_gamma_t + 1.0).abs() <= 0.15,
        "slope vs gammaT {slope_gamma_t} +- {stderr} outside -1 +- 0.15"
    );
    assert!(report.passed(), "{:#?}", report.checks);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 2 (adiabatic convergence): PASS (slope vs gammaT {slope_gamma_t:.4} +- {stderr:.4}, {elapsed:?})"
    );
}

#[test]
fn criterion_3_leakage_scaling() {
    let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
    let ctx = sweep_context(sc).unwrap();
    let sc2 = scenario_dark_state(PI / 4.0, 2.0).unwrap();
    let ctx2 = sweep_context(sc2).unwrap();
    let gamma_t = [100.0, 1000.0, 10000.0];
    let points = sweep(&ctx, &gamma_t, 128_000, 3).unwrap();
    let report = exp_leakage_scaling(&ctx, &ctx2, &points, 128_000, &Tolerances::default()).unwrap();
    let (slope, stderr) = report.slope.unwrap();
    assert!(
        (slope - 1.0).abs() <= 0.2,
        "leakage slope vs eta {slope} +- {stderr} outside +1 +- 0.2"
    );
    let doubling = report
        .checks
        .iter()
        .find(|chk| chk.name == "kappa_doubling")
        .unwrap();
    assert!(
        doubling.passed,
        "kappa doubling ratio {} outside 0.5 +- 30%",
        doubling.value
    );
    assert!(report.passed(), "{:#?}", report.checks);
    println!(
        "criterion 3 (leakage scaling): PASS (slope {slope:.4} +- {stderr:.4}, doubling ratio {:.4})",
        doubling.value
    );
}

#[test]
fn criterion_4_non_abelian_holonomy() {
    let loop_a = LoopCurve::Circle { theta: 1.0 };
    let loop_b = LoopCurve::Petal {
        theta0: 1.0,
        theta_amp: 0.3,
        phi_amp: 1.0,
        chi_amp: 1.5,
    };
    let path_a = ReservoirPath::tripod(loop_a.clone(), 1.0).unwrap();
    let path_b = ReservoirPath::tripod(loop_b, 1.0).unwrap();
    let ua = wilson_loop(&path_a, 10_000, None).unwrap();
    let basis = {
        // Share the base-point frame so the two holonomies live in one basis.
        let frames = transport_frame(&path_a, 2000, None).unwrap();
        frames[0].pi.basis.clone()
    };
    let ub = wilson_loop(&path_b, 10_000, Some(&basis)).unwrap();
    assert!(ua.unitarity_defect <= 1e-8, "U_A defect {}", ua.unitarity_defect);
    assert!(ub.unitarity_defect <= 1e-8, "U_B defect {}", ub.unitarity_defect);
    let comm = noncommutativity(&path_a, &path_b, 10_000).unwrap();
    assert!(comm > 0.01, "commutator norm {comm} too small");

    // Full master-equation run at gammaT = 1e4 reproduces U_A on the block.
    let sc = scenario_tripod(loop_a, 1.0).unwrap();
    let ctx = sweep_context(sc).unwrap();
    let point = run_sweep_point(&ctx, 10_000.0, 128_000).unwrap();
    assert!(
        point.block_fidelity >= 0.999,
        "DFS-block fidelity {} below 0.999",
        point.block_fidelity
    );
    println!(
        "criterion 4 (non-Abelian holonomy): PASS (||[U_A,U_B]|| = {comm:.4}, block fidelity {:.6})",
        point.block_fidelity
    );
}

#[test]
fn criterion_5_structural_invariants() {
    let checks = verify_invariants(20260824).unwrap();
    for chk in &checks {
        assert!(
            chk.passed,
            "{}: value {:.3e} vs {}",
            chk.name, chk.value, chk.threshold
        );
    }
    println!(
        "criterion 5 (structural invariants): PASS ({} checks)",
        checks.len()
    );
}

#[test]
fn criterion_6_gauge_and_reparameterization_invariance() {
    // Holonomy under Q = 0 vs a seeded random block-diagonal Q.
    let path = ReservoirPath::dark_state(PI / 4.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = random_hermitian(&mut rng, 3);
    let gauge = move |_s: f64, kernel: &Subspace| {
        let p = &kernel.projector;
        let q = kernel.perp_projector();
        hermitian_part(&(p.dot(&h).dot(p) + q.dot(&h).dot(&q)))
    };
    let discrepancy = gauge_invariance_check(&path, None, Some(&gauge), 2000).unwrap();
    assert!(discrepancy <= 1e-6, "gauge discrepancy {discrepancy}");

    // Smooth monotone time warp leaves the Wilson loop unchanged.
    let warped = path.reparameterized(0.3).unwrap();
    let frames = transport_frame(&path, 100, None).unwrap();
    let basis = &frames[0].pi.basis;
    let u1 = wilson_loop(&path, 10_000, Some(basis)).unwrap().u;
    let u2 = wilson_loop(&warped, 10_000, Some(basis)).unwrap().u;
    let warp_diff = fro_norm(&(&u1 - &u2));
    assert!(warp_diff <= 1e-6, "reparameterization defect {warp_diff}");
    println!(
        "criterion 6 (gauge invariance): PASS (gauge {discrepancy:.3e}, warp {warp_diff:.3e})"
    );
}

#[test]
fn criterion_7_perturbation_theory_consistency() {
    let sc = scenario_dark_state(PI / 4.0, 1.0).unwrap();
    let run = |eta: f64| {
        let steps = (40.0 / eta).ceil() as usize;
        let frames = transport_frame(&sc.path, 2 * steps, None).unwrap();
        let gap = global_gap(&frames);
        let o0 = build_orders(&sc.path, &frames[0], gap, eta).unwrap();
        let rho_tilde0 = to_tilde(&sc.rho0, &o0.s1, eta).unwrap();
        let rho_bar = integrate_rotated(&sc.path, &frames, &sc.rho0, eta).unwrap();
        let rho_hier = integrate_hierarchy(&sc.path, &frames, &rho_tilde0, eta).unwrap();
        let on = build_orders(&sc.path, frames.last().unwrap(), gap, eta).unwrap();
        let tilde_from_exact = to_tilde(&rho_bar, &on.s1, eta).unwrap();
        let p = &on.pi_bar.projector;
        let norm = trace(&rho_hier);
        let hier = rho_hier.mapv(|z| z / norm);
        fro_norm(&p.dot(&(&hier - &tilde_from_exact)).dot(p))
    };
    let coarse = run(0.02);
    let fine = run(0.01);
    let ratio = coarse / fine;
    assert!(
        (2.8..=5.7).contains(&ratio),
        "discrepancy {coarse:.3e} -> {fine:.3e}: ratio {ratio:.2}, expected ~4"
    );
    println!("criterion 7 (perturbative hierarchy): PASS (O(eta^2) ratio {ratio:.2})");
}

#[test]
fn criterion_8_cli_contract() {
    let base = std::env::temp_dir().join(format!("holodyn_acceptance_{}", std::process::id()));
    let configs = [
        concat!(env!("CARGO_MANIFEST_DIR"), "/configs/darkstate.json"),
        concat!(env!("CARGO_MANIFEST_DIR"), "/configs/tripod.json"),
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let out_a = base.join(format!("{i}_a"));
        let out_b = base.join(format!("{i}_b"));
        let code_a = run_config(Path::new(cfg), Some(&out_a), 3, 0);
        let code_b = run_config(Path::new(cfg), Some(&out_b), 1, 0);
        assert_eq!(code_a, EXIT_OK, "{cfg} first run exit {code_a}");
        assert_eq!(code_b, EXIT_OK, "{cfg} second run exit {code_b}");
        for entry in std::fs::read_dir(&out_a).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between runs of {cfg}");
        }
    }

    // Malformed configs exit 2 with a diagnostic naming the problem.
    let bad_dir = base.join("bad");
    std::fs::create_dir_all(&bad_dir).unwrap();
    let missing = bad_dir.join("missing_params.json");
    std::fs::write(&missing, r#"{"scenario": "dark_state"}"#).unwrap();
    assert_eq!(run_config(&missing, Some(&bad_dir), 1, 0), EXIT_SCHEMA);
    let err = load_config(&missing).unwrap_err();
    assert!(err.to_string().contains("params"), "diagnostic: {err}");

    let guard = bad_dir.join("guard.json");
    std::fs::write(
        &guard,
        r#"{"scenario": "dark_state", "params": {"theta": 0.785},
           "gammaT": [100.0, 1000.0, 10000.0], "steps": 1000}"#,
    )
    .unwrap();
    assert_eq!(run_config(&guard, Some(&bad_dir), 1, 0), EXIT_SCHEMA);

    std::fs::remove_dir_all(&base).ok();
    println!("criterion 8 (CLI contract): PASS");
}

use std::path::Path;
