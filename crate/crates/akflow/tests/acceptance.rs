//! Acceptance suite: every criterion at its stated tolerance, one pass/fail
//! line each. Run with `cargo test -p akflow --test acceptance -- --nocapture`.

use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use akflow::config::{BackendChoice, ExampleKind, RunConfig};
use akflow::runner;
use akflow_core::curvature::GeometryCache;
use akflow_core::flow::{
    check_evolution, integrate, static_check, synthetic_tau_path_check, EvolutionKind,
    FlowConfig, FlowState,
};
use akflow_core::identities::{
    convergence_study, registry, run_all, BackendKind, CheckStatus, JetClass,
};
use akflow_core::structure::{family_jets, FamilyParams};
use akflow_core::{AlmostKahler, Deriv, Jet, PeriodicGrid, TensorField};

struct Outcome {
    label: &'static str,
    pass: bool,
    detail: String,
}

fn report(outcomes: &[Outcome]) {
    for o in outcomes {
        println!(
            "criterion {:38} {}  ({})",
            o.label,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
}

fn grid4(res: &[usize], fd: usize) -> Arc<PeriodicGrid> {
    Arc::new(PeriodicGrid::new(4, res, fd).unwrap())
}

/// 1. Flat Kähler torus baseline: all residuals and the flow at round-off.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let grid = grid4(&[8, 1, 1, 1], 4);
    let ak = AlmostKahler::<f64>::flat(&grid);
    let geo = GeometryCache::build(&ak, &Deriv::Fd);
    let mut worst: f64 = 0.0;
    for r in run_all(&ak, &geo, BackendKind::FiniteDifference, None) {
        worst = worst.max(r.max_abs);
    }
    let rhs = akflow_core::flow::flow_rhs(&ak, &Deriv::Fd);
    let rhs_max = rhs
        .omega_dot
        .max_abs()
        .max(rhs.j_dot.max_abs())
        .max(rhs.g_dot.max_abs());
    let state = FlowState {
        t: 0.0,
        omega: ak.omega.clone(),
        j: ak.j.clone(),
    };
    let cfg = FlowConfig {
        dt: 1e-2,
        steps: 100,
        save_every: 100,
        ..Default::default()
    };
    let last = integrate(state, &cfg).unwrap().states.pop().unwrap();
    let moved = (&last.omega - &ak.omega)
        .max_abs()
        .max((&last.j - &ak.j).max_abs());
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "1 flat-torus baseline",
        pass: worst <= 1e-12 && rhs_max <= 1e-12 && moved <= 1e-12 && secs < 5.0,
        detail: format!(
            "identities {worst:.2e}, rhs {rhs_max:.2e}, 100-step drift {moved:.2e}, {secs:.2}s"
        ),
    }
}

/// 2. Exact-jet suite on the family: jet-complete identities at 1e-9 relative.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let grid = grid4(&[64, 1, 1, 1], 4);
    let params = FamilyParams::default_for_dim(4, 0.1);
    let jets = family_jets(&grid, &params).unwrap();
    let geo = GeometryCache::<Jet>::build(&jets, &Deriv::JetShift { axis: 0 });
    let (ak, geo) = (jets.values(), geo.values());
    let results = run_all(&ak, &geo, BackendKind::ExactJet, None);
    let required = [
        "TAU-CYCLIC", "TAU-TRACE", "N-8TAU", "THETA-N", "B-FORMS", "B-TRACE", "OMEGA-SYM",
        "RM-OMEGA", "RC-ID", "SCAL-ID", "KI", "V-2002", "P-2002", "RC-2002", "T-SYM", "PHI-ID",
        "RSTAR",
    ];
    let mut worst: f64 = 0.0;
    let mut missing = vec![];
    let mut failed = vec![];
    for id in required {
        if !results.iter().any(|r| r.id == id) {
            missing.push(id);
        }
    }
    for r in &results {
        match (&r.status, r.jet_class) {
            (CheckStatus::Fail, _) => failed.push(r.id),
            (CheckStatus::Pass, c) if c != JetClass::ThirdOrder => {
                worst = worst.max(r.relative);
            }
            _ => {}
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "2 exact-jet suite (eps 0.1)",
        pass: failed.is_empty() && missing.is_empty() && worst <= 1e-9 && secs < 10.0,
        detail: format!("worst relative {worst:.2e}, failed {failed:?}, {secs:.2}s"),
    }
}

/// 3. Dimension-4 B-norm relations, pointwise to 1e-9 relative.
fn criterion_3() -> Outcome {
    let grid = grid4(&[64, 1, 1, 1], 4);
    let params = FamilyParams::default_for_dim(4, 0.1);
    let jets = family_jets(&grid, &params).unwrap();
    let geo = GeometryCache::<Jet>::build(&jets, &Deriv::JetShift { axis: 0 });
    let (ak, geo) = (jets.values(), geo.values());
    let tau4 = akflow_core::field::einsum(",->", &[&geo.tau_norm2, &geo.tau_norm2]);
    let checks: [(&str, TensorField, f64); 5] = [
        ("|B1|^2", ak.norm2(&geo.b1), 8.0),
        ("|B2|^2", ak.norm2(&geo.b2), 4.0),
        ("<B1,B2>", ak.inner(&geo.b1, &geo.b2), 4.0),
        ("|B|^2", ak.norm2(&geo.b), 0.5),
        ("B2=g|tau|^2", geo.b2.clone(), f64::NAN), // handled separately
    ];
    let scale = tau4.max_abs().max(geo.tau_norm2.max_abs());
    let mut worst: f64 = 0.0;
    for (name, field, factor) in &checks {
        let res = if name.starts_with("B2=") {
            (&geo.b2 - &akflow_core::field::einsum(",ij->ij", &[&geo.tau_norm2, &ak.g])).max_abs()
        } else {
            (&field.clone() - &tau4.scale(*factor)).max_abs()
        };
        worst = worst.max(res / scale);
    }
    Outcome {
        label: "3 dim-4 B-norm relations",
        pass: worst <= 1e-9,
        detail: format!("worst relative {worst:.2e}"),
    }
}

/// 4. FD convergence of every identity at order >= 3 with fd_order 4.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let ids: Vec<&str> = registry().iter().map(|c| c.id).collect();
    let named = ["BIANCHI-1", "BIANCHI-2", "SEKIGAWA", "LAP-TAU", "LAP-OMEGA"];
    for n in named {
        assert!(ids.contains(&n));
    }
    let params = FamilyParams::default_for_dim(4, 0.1);
    let make = |n: usize| {
        let grid = grid4(&[n, 1, 1, 1], 4);
        let ak = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let geo = GeometryCache::build(&ak, &Deriv::Fd);
        (ak, geo)
    };
    let results = convergence_study(&make, &ids, &[32, 64, 128]);
    let mut bad = vec![];
    let mut min_order = f64::INFINITY;
    for r in &results {
        if r.at_machine_precision {
            continue;
        }
        let order = r.orders.iter().copied().fold(f64::INFINITY, f64::min);
        if order < 3.0 {
            bad.push((r.id, order));
        }
        min_order = min_order.min(order);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        label: "4 FD convergence order >= 3",
        pass: bad.is_empty() && secs < 60.0,
        detail: format!("slowest order {min_order:.2}, below threshold {bad:?}, {secs:.1}s"),
    }
}

/// 5. The two forms of the J-velocity agree: FD order >= 3 and 1e-9 exact.
fn criterion_5() -> Outcome {
    let params = FamilyParams::default_for_dim(4, 0.1);
    let make = |n: usize| {
        let grid = grid4(&[n, 1, 1, 1], 4);
        let ak = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let geo = GeometryCache::build(&ak, &Deriv::Fd);
        (ak, geo)
    };
    let conv = convergence_study(&make, &["PROP-A"], &[32, 64, 128]);
    let order = conv[0]
        .orders
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let grid = grid4(&[64, 1, 1, 1], 4);
    let jets = family_jets(&grid, &params).unwrap();
    let geo = GeometryCache::<Jet>::build(&jets, &Deriv::JetShift { axis: 0 });
    let (ak, geo) = (jets.values(), geo.values());
    let exact = run_all(&ak, &geo, BackendKind::ExactJet, Some(&["PROP-A"]));
    let rel = exact[0].relative;
    Outcome {
        label: "5 J-velocity equivalence",
        pass: order >= 3.0 && rel <= 1e-9,
        detail: format!("FD order {order:.2}, exact relative {rel:.2e}"),
    }
}

/// 6. Evolution equations shrink by >= 3.5 when dt halves (2e-3 -> 1e-3).
fn criterion_6() -> Outcome {
    let grid = grid4(&[96, 1, 1, 1], 8);
    let params = FamilyParams::default_for_dim(4, 0.05);
    let ak = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
    let state = FlowState {
        t: 0.0,
        omega: ak.omega.clone(),
        j: ak.j.clone(),
    };
    let cfg = FlowConfig {
        dt: 1e-3,
        steps: 8,
        drift_tol: 1e-6,
        ..Default::default()
    };
    let traj = integrate(state, &cfg).unwrap();
    let thm_b = check_evolution(&traj, EvolutionKind::TauNorm).unwrap();
    let thm_c = check_evolution(&traj, EvolutionKind::ChernScalar).unwrap();
    let tau_path = synthetic_tau_path_check(&grid, &params, 1e-3).unwrap();
    let pass =
        thm_b.dt_factor >= 3.5 && thm_c.dt_factor >= 3.5 && tau_path.dt_factor >= 3.5;
    Outcome {
        label: "6 evolution-equation dt factors",
        pass,
        detail: format!(
            "torsion-norm {:.2}, scalar {:.2}, torsion-tensor path {:.2}",
            thm_b.dt_factor, thm_c.dt_factor, tau_path.dt_factor
        ),
    }
}

/// 7. Static-structure semantics: flat passes at lambda 0, family fails.
fn criterion_7() -> Outcome {
    let grid = grid4(&[32, 1, 1, 1], 4);
    let flat = AlmostKahler::<f64>::flat(&grid);
    let flat_rep = static_check(&flat, 0.0);
    let params = FamilyParams::default_for_dim(4, 0.1);
    let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
    let fam_rep = static_check(&fam, 0.0);
    let pass = flat_rep.p_residual <= 1e-12
        && flat_rep.j_dot_residual <= 1e-12
        && fam_rep.p_residual > 1e-3;
    Outcome {
        label: "7 static-structure discrimination",
        pass,
        detail: format!(
            "flat {:.2e}/{:.2e}, family {:.3e}",
            flat_rep.p_residual, flat_rep.j_dot_residual, fam_rep.p_residual
        ),
    }
}

/// 8. Two identical `verify` runs produce byte-identical JSON reports.
fn criterion_8() -> Outcome {
    let dir = std::env::temp_dir().join(format!("akflow-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out1 = dir.join("r1.json");
    let out2 = dir.join("r2.json");
    let bin = env!("CARGO_BIN_EXE_akflow");
    for out in [&out1, &out2] {
        let status = Command::new(bin)
            .args([
                "verify",
                "--example",
                "family",
                "--eps",
                "0.1",
                "--grid",
                "48",
                "--backend",
                "exact",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    Outcome {
        label: "8 byte-identical verify reports",
        pass: a == b && !a.is_empty(),
        detail: format!("{} bytes each", a.len()),
    }
}

#[test]
fn acceptance() {
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ];
    report(&outcomes);
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.label)
        .collect();
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}

/// The runner honours AKFLOW_THREADS and parallel evaluation matches the
/// sequential result bit for bit.
#[test]
fn parallel_runner_is_deterministic() {
    let mut cfg = RunConfig::default();
    cfg.example = ExampleKind::Family;
    cfg.grid = Some(32);
    cfg.backend = BackendChoice::Fd;
    let grid = runner::build_grid(&cfg, None).unwrap();
    let (ak, geo, backend) = runner::build_geometry(&cfg, &grid).unwrap();
    let seq = runner::run_identities(&ak, &geo, backend, &[], 1);
    let par = runner::run_identities(&ak, &geo, backend, &[], 4);
    assert_eq!(seq.len(), par.len());
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.max_abs.to_bits(), b.max_abs.to_bits());
        assert_eq!(a.relative.to_bits(), b.relative.to_bits());
    }
}
