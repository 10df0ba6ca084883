//! Builds structures from a configuration and drives the identity registry,
//! convergence studies and flow runs. Identities are independent, so the
//! runner may spread them over worker threads (capped by `AKFLOW_THREADS`);
//! results are reassembled in registry order, keeping reports deterministic.

use std::sync::Arc;

use anyhow::{anyhow, bail, Result};

use akflow_core::curvature::GeometryCache;
use akflow_core::flow::{
    check_evolution, diagnostics, integrate, synthetic_tau_path_check, EvolutionKind,
    EvolutionReport, FlowConfig, FlowDiagnostics, FlowState, Retraction,
};
use akflow_core::identities::{
    evaluate, registry, BackendKind, ConvergenceResult, IdentityResult,
};
use akflow_core::structure::{family_jets, FamilyParams};
use akflow_core::AkError;
use akflow_core::{AlmostKahler, Deriv, Jet, PeriodicGrid};

use crate::config::{BackendChoice, ExampleKind, RetractionChoice, RunConfig};

/// Worker cap: `AKFLOW_THREADS` if set, otherwise the machine parallelism.
pub fn worker_threads() -> usize {
    if let Ok(v) = std::env::var("AKFLOW_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn family_params(cfg: &RunConfig) -> FamilyParams {
    let mut params = FamilyParams::default_for_dim(cfg.dim, cfg.eps);
    params.axis = cfg.axis;
    params.freq = cfg.freq;
    if let Some(gen) = &cfg.generator {
        params.generator = gen.clone();
    }
    params
}

pub fn build_grid(cfg: &RunConfig, leading: Option<usize>) -> Result<Arc<PeriodicGrid>> {
    let mut res = cfg.effective_resolutions()?;
    if let Some(n) = leading {
        res[cfg.axis] = n;
    }
    Ok(Arc::new(
        PeriodicGrid::new(cfg.dim, &res, cfg.fd_order).map_err(|e| anyhow!("{e}"))?,
    ))
}

pub fn build_structure(cfg: &RunConfig, grid: &Arc<PeriodicGrid>) -> Result<AlmostKahler> {
    Ok(match cfg.example {
        ExampleKind::Flat => AlmostKahler::<f64>::flat(grid),
        ExampleKind::Family => {
            AlmostKahler::<f64>::conjugation_family(grid, &family_params(cfg))
                .map_err(|e| anyhow!("{e}"))?
        }
    })
}

/// Structure plus curvature cache on the configured backend; the exact-jet
/// backend propagates second-order jets and exports their principal values.
pub fn build_geometry(
    cfg: &RunConfig,
    grid: &Arc<PeriodicGrid>,
) -> Result<(AlmostKahler, GeometryCache, BackendKind)> {
    match cfg.backend {
        BackendChoice::Fd => {
            let ak = build_structure(cfg, grid)?;
            let geo = GeometryCache::build(&ak, &Deriv::Fd);
            Ok((ak, geo, BackendKind::FiniteDifference))
        }
        BackendChoice::Exact => {
            let d = Deriv::JetShift { axis: cfg.axis };
            let (ak, geo) = match cfg.example {
                ExampleKind::Flat => {
                    let jets = AlmostKahler::<Jet>::flat(grid);
                    let geo = GeometryCache::build(&jets, &d);
                    (jets.values(), geo.values())
                }
                ExampleKind::Family => {
                    let jets =
                        family_jets(grid, &family_params(cfg)).map_err(|e| anyhow!("{e}"))?;
                    let geo = GeometryCache::build(&jets, &d);
                    (jets.values(), geo.values())
                }
            };
            Ok((ak, geo, BackendKind::ExactJet))
        }
    }
}

/// Evaluate selected identities, spread over worker threads, results in
/// registry order.
pub fn run_identities(
    ak: &AlmostKahler,
    geo: &GeometryCache,
    backend: BackendKind,
    selection: &[String],
    threads: usize,
) -> Vec<IdentityResult> {
    let reg = registry();
    let wanted: Vec<usize> = reg
        .iter()
        .enumerate()
        .filter(|(_, c)| selection.is_empty() || selection.iter().any(|s| s == c.id))
        .map(|(i, _)| i)
        .collect();
    if threads <= 1 || wanted.len() <= 1 {
        return wanted
            .iter()
            .map(|&i| evaluate(&reg[i], ak, geo, backend))
            .collect();
    }
    let chunk = wanted.len().div_ceil(threads);
    let mut results: Vec<Option<IdentityResult>> = vec![None; wanted.len()];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, slot) in wanted.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let reg = &reg;
            handles.push(scope.spawn(move || {
                for (&i, out) in w.iter().zip(slot.iter_mut()) {
                    *out = Some(evaluate(&reg[i], ak, geo, backend));
                }
            }));
        }
        for h in handles {
            h.join().expect("identity worker panicked");
        }
    });
    results.into_iter().map(|r| r.expect("slot filled")).collect()
}

pub fn run_convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceResult>> {
    if cfg.refine.len() < 2 {
        bail!("converge needs at least two resolutions (e.g. --res 32,64)");
    }
    for w in cfg.refine.windows(2) {
        if w[1] != 2 * w[0] {
            bail!("refinement resolutions must double: {:?}", cfg.refine);
        }
    }
    if cfg.backend == BackendChoice::Exact {
        bail!("convergence studies are finite-difference runs; use --backend fd");
    }
    let ids: Vec<&str> = if cfg.ids.is_empty() {
        registry().iter().map(|c| c.id).collect()
    } else {
        let reg = registry();
        let mut out = Vec::new();
        for id in &cfg.ids {
            let found = reg
                .iter()
                .find(|c| c.id == id.as_str())
                .ok_or_else(|| anyhow!("unknown identity id {id}"))?;
            out.push(found.id);
        }
        out
    };
    let make = |n: usize| {
        let grid = build_grid(cfg, Some(n)).expect("grid");
        let ak = build_structure(cfg, &grid).expect("structure");
        let geo = GeometryCache::build(&ak, &Deriv::Fd);
        (ak, geo)
    };
    Ok(akflow_core::identities::convergence_study(
        &make,
        &ids,
        &cfg.refine,
    ))
}

pub struct FlowRun {
    pub series: Vec<FlowDiagnostics>,
    pub evolution: Option<EvolutionReport>,
    pub h_factor: Option<f64>,
    pub check: Option<String>,
}

pub fn run_flow(cfg: &RunConfig) -> Result<FlowRun> {
    let kind = match &cfg.check {
        None => None,
        Some(name) => Some(
            EvolutionKind::parse(name)
                .ok_or_else(|| anyhow!("unknown evolution check {name}"))?,
        ),
    };

    // the torsion-variation check runs on a synthetic eps-path, not on a
    // time trajectory
    if kind == Some(EvolutionKind::TauTensor) {
        if cfg.example != ExampleKind::Family {
            bail!("the tau_tensor check needs the conjugation family");
        }
        let grid = build_grid(cfg, None)?;
        let rep = synthetic_tau_path_check(&grid, &family_params(cfg), cfg.dt)
            .map_err(|e| anyhow!("{e}"))?;
        let h_factor = if cfg.h_refine {
            let mut res = cfg.effective_resolutions()?;
            res[cfg.axis] /= 2;
            let coarse = Arc::new(
                PeriodicGrid::new(cfg.dim, &res, cfg.fd_order).map_err(|e| anyhow!("{e}"))?,
            );
            let rep2 = synthetic_tau_path_check(&coarse, &family_params(cfg), cfg.dt)
                .map_err(|e| anyhow!("{e}"))?;
            Some(rep2.kind_residual_dt / rep.kind_residual_dt)
        } else {
            None
        };
        return Ok(FlowRun {
            series: Vec::new(),
            evolution: Some(rep),
            h_factor,
            check: Some(EvolutionKind::TauTensor.as_str().to_string()),
        });
    }

    let flow_cfg = FlowConfig {
        dt: cfg.dt,
        steps: cfg.steps,
        drift_tol: cfg.drift_tol,
        retraction: match cfg.retraction {
            RetractionChoice::Off => Retraction::Off,
            RetractionChoice::Renormalize => Retraction::Renormalize,
        },
        save_every: cfg.save_every,
    };
    let run_at = |grid: &Arc<PeriodicGrid>| -> Result<(Vec<FlowDiagnostics>, Option<EvolutionReport>)> {
        let ak = build_structure(cfg, grid)?;
        let state = FlowState {
            t: 0.0,
            omega: ak.omega.clone(),
            j: ak.j.clone(),
        };
        let traj = integrate(state, &flow_cfg).map_err(anyhow::Error::new)?;
        let mut series = Vec::with_capacity(traj.states.len());
        for s in &traj.states {
            series.push(diagnostics(s).map_err(anyhow::Error::new)?);
        }
        let evolution = match kind {
            Some(k) => Some(check_evolution(&traj, k).map_err(anyhow::Error::new)?),
            None => None,
        };
        Ok((series, evolution))
    };

    let grid = build_grid(cfg, None)?;
    let (series, evolution) = run_at(&grid)?;
    let h_factor = if cfg.h_refine && kind.is_some() {
        let mut res = cfg.effective_resolutions()?;
        res[cfg.axis] /= 2;
        let coarse = Arc::new(
            PeriodicGrid::new(cfg.dim, &res, cfg.fd_order).map_err(|e| anyhow!("{e}"))?,
        );
        let (_, ev) = run_at(&coarse)?;
        match (&evolution, &ev) {
            (Some(fine), Some(coarse)) if fine.kind_residual_dt > 0.0 => {
                Some(coarse.kind_residual_dt / fine.kind_residual_dt)
            }
            _ => None,
        }
    } else {
        None
    };
    Ok(FlowRun {
        series,
        evolution,
        h_factor,
        check: kind.map(|k| k.as_str().to_string()),
    })
}
