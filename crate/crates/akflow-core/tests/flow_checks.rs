//! Trajectory-level checks: RK4 accuracy, time symmetry, drift growth, and
//! the evolution equations verified by central time differences at strides
//! dt and 2dt (the residual must shrink ~4x when dt halves).

use std::sync::Arc;

use akflow_core::flow::{
    check_evolution, diagnostics, integrate, static_check, step_rk4, synthetic_tau_path_check,
    EvolutionKind, FlowConfig, FlowState,
};
use akflow_core::structure::FamilyParams;
use akflow_core::{AlmostKahler, PeriodicGrid};

fn family_state(n: usize, eps: f64, fd_order: usize) -> FlowState {
    let grid = Arc::new(PeriodicGrid::new(4, &[n, 1, 1, 1], fd_order).unwrap());
    let params = FamilyParams::default_for_dim(4, eps);
    let ak = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
    FlowState {
        t: 0.0,
        omega: ak.omega.clone(),
        j: ak.j.clone(),
    }
}

#[test]
fn rk4_is_fourth_order_by_richardson() {
    // halving dt reduces the Richardson error estimate on omega by ~16x;
    // a large amplitude keeps the time error above the round-off floor
    let state = family_state(16, 0.3, 4);
    let run = |dt: f64, steps: usize| {
        let cfg = FlowConfig {
            dt,
            steps,
            drift_tol: 1e-3,
            save_every: steps,
            ..Default::default()
        };
        integrate(state.clone(), &cfg).unwrap().states.pop().unwrap()
    };
    let a = run(2e-2, 4);
    let b = run(1e-2, 8);
    let c = run(5e-3, 16);
    let e1 = (&a.omega - &b.omega).max_abs();
    let e2 = (&b.omega - &c.omega).max_abs();
    let ratio = e1 / e2;
    assert!(
        ratio > 12.0 && ratio < 24.0,
        "Richardson ratio {ratio} (e1 {e1:.3e}, e2 {e2:.3e})"
    );
}

#[test]
fn forward_backward_stepping_is_fifth_order() {
    let state = family_state(16, 0.3, 4);
    let roundtrip = |dt: f64| {
        let cfg = FlowConfig {
            dt,
            steps: 1,
            drift_tol: 1e-3,
            ..Default::default()
        };
        let fwd = step_rk4(&state, &cfg, 0).unwrap();
        let back_cfg = FlowConfig { dt: -dt, ..cfg };
        let back = step_rk4(&fwd, &back_cfg, 1).unwrap();
        (&back.j - &state.j).max_abs().max((&back.omega - &state.omega).max_abs())
    };
    let e1 = roundtrip(4e-2);
    let e2 = roundtrip(2e-2);
    let ratio = e1 / e2;
    assert!(e1 < 1e-6, "roundtrip error {e1}");
    assert!(ratio > 20.0, "forward-backward ratio {ratio}");
}

#[test]
fn drift_grows_at_most_linearly() {
    let state = family_state(16, 0.05, 4);
    let drift_after = |steps: usize| {
        let cfg = FlowConfig {
            dt: 1e-3,
            steps,
            drift_tol: 1e-6,
            save_every: steps,
            ..Default::default()
        };
        let traj = integrate(state.clone(), &cfg).unwrap();
        let (j2, _, compat) = traj.states.last().unwrap().drift();
        j2.max(compat)
    };
    let d5 = drift_after(5);
    let d10 = drift_after(10);
    assert!(d10 <= 2.5 * d5 + 1e-14, "drift {d5:.3e} -> {d10:.3e}");
}

#[test]
fn renormalization_keeps_j_square_exact() {
    let state = family_state(16, 0.05, 4);
    let cfg = FlowConfig {
        dt: 1e-3,
        steps: 20,
        drift_tol: 1e-6,
        retraction: akflow_core::flow::Retraction::Renormalize,
        save_every: 20,
        ..Default::default()
    };
    let traj = integrate(state, &cfg).unwrap();
    let (j2, _, _) = traj.states.last().unwrap().drift();
    assert!(j2 <= 1e-13, "retracted J^2 drift {j2:.3e}");
}

#[test]
fn flat_evolution_checks_vanish() {
    let grid = Arc::new(PeriodicGrid::new(4, &[8, 1, 1, 1], 4).unwrap());
    let ak = AlmostKahler::<f64>::flat(&grid);
    let state = FlowState {
        t: 0.0,
        omega: ak.omega.clone(),
        j: ak.j.clone(),
    };
    let cfg = FlowConfig {
        dt: 1e-2,
        steps: 4,
        ..Default::default()
    };
    let traj = integrate(state, &cfg).unwrap();
    for kind in [
        EvolutionKind::TauNorm,
        EvolutionKind::TauNormGeneral,
        EvolutionKind::ChernScalar,
        EvolutionKind::TauTensor,
        EvolutionKind::RiemannScalar,
    ] {
        let rep = check_evolution(&traj, kind).unwrap();
        assert!(
            rep.kind_residual_dt <= 1e-12,
            "{kind:?} residual {} on the flat torus",
            rep.kind_residual_dt
        );
    }
}

#[test]
fn evolution_equations_refine_at_second_order_in_dt() {
    // fine grid + wide stencil so the spatial part of the residual sits far
    // below the O(dt^2) part being measured
    let state = family_state(96, 0.05, 8);
    let cfg = FlowConfig {
        dt: 1e-3,
        steps: 8,
        drift_tol: 1e-6,
        ..Default::default()
    };
    let traj = integrate(state, &cfg).unwrap();
    for kind in [
        EvolutionKind::TauNorm,
        EvolutionKind::TauNormGeneral,
        EvolutionKind::ChernScalar,
        EvolutionKind::RiemannScalar,
    ] {
        let rep = check_evolution(&traj, kind).unwrap();
        println!(
            "{kind:?}: dt {:.4e}  2dt {:.4e}  factor {:.2}  scale {:.3e}",
            rep.kind_residual_dt, rep.kind_residual_2dt, rep.dt_factor, rep.scale
        );
        assert!(
            rep.dt_factor >= 3.5,
            "{kind:?} dt-refinement factor {:.2}",
            rep.dt_factor
        );
    }
}

#[test]
fn torsion_variation_holds_on_synthetic_j_path() {
    let grid = Arc::new(PeriodicGrid::new(4, &[96, 1, 1, 1], 8).unwrap());
    let base = FamilyParams::default_for_dim(4, 0.05);
    let rep = synthetic_tau_path_check(&grid, &base, 1e-3).unwrap();
    println!(
        "tau path: d_eps {:.4e}  2d_eps {:.4e}  factor {:.2}",
        rep.kind_residual_dt, rep.kind_residual_2dt, rep.dt_factor
    );
    assert!(rep.dt_factor >= 3.5, "factor {:.2}", rep.dt_factor);
}

#[test]
fn j_velocity_forms_agree_along_the_trajectory() {
    // Prop-A equivalence is not special to t = 0: check it at a later state
    use akflow_core::curvature::GeometryCache;
    use akflow_core::identities::{registry, EvalCtx};
    let state = family_state(48, 0.05, 4);
    let cfg = FlowConfig {
        dt: 1e-3,
        steps: 6,
        drift_tol: 1e-6,
        ..Default::default()
    };
    let traj = integrate(state, &cfg).unwrap();
    let check = registry().into_iter().find(|c| c.id == "PROP-A").unwrap();
    for idx in [3usize, 6] {
        let ak = traj.states[idx].structure().unwrap();
        let geo = GeometryCache::build(&ak, &akflow_core::Deriv::Fd);
        let ctx = EvalCtx { ak: &ak, geo: &geo };
        let s = (check.eval)(&ctx);
        let rel = s.max_abs / s.scale.max(1e-30);
        assert!(rel < 1e-4, "J-velocity equivalence at state {idx}: {rel:.3e}");
    }
}

#[test]
fn static_check_discriminates_family_from_flat() {
    let grid = Arc::new(PeriodicGrid::new(4, &[32, 1, 1, 1], 4).unwrap());
    let params = FamilyParams::default_for_dim(4, 0.1);
    let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
    let rep = static_check(&fam, 0.0);
    assert!(rep.p_residual > 1e-3, "family P residual {}", rep.p_residual);
    let flat = AlmostKahler::<f64>::flat(&grid);
    let rep0 = static_check(&flat, 0.0);
    assert!(rep0.p_residual <= 1e-12 && rep0.j_dot_residual <= 1e-12);
}

#[test]
fn diagnostics_are_finite_and_track_the_family() {
    let state = family_state(32, 0.1, 4);
    let d = diagnostics(&state).unwrap();
    assert!(d.tau2_max > 1e-4);
    assert!(d.rho_mean.is_finite() && d.scal_mean.is_finite());
    assert!(d.j2_drift <= 1e-12); // initial data is exact
}
