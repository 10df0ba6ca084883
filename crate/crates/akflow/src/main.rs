//! Command-line driver: configure an example structure, verify the identity
//! registry, run grid-refinement convergence studies, and integrate the
//! symplectic curvature flow with evolution-equation checks.
//!
//! Exit status: 0 when all requested checks pass, 1 when a check fails,
//! 2 on configuration errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use akflow::config::{BackendChoice, ExampleKind, RetractionChoice, RunConfig};
use akflow::report::{
    to_json_pretty, write_series_csv, ConvergeReport, FlowReport, FlowSample, GridInfo,
    VerifyReport,
};
use akflow::runner;

#[derive(Parser)]
#[command(
    name = "akflow",
    about = "Almost-Kähler geometry engine: identity verification, convergence studies, and symplectic curvature flow"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the identity registry on one structure and emit a JSON report.
    Verify(CommonArgs),
    /// Grid-refinement convergence study of identity residuals.
    Converge(ConvergeArgs),
    /// Integrate the flow, write a CSV time series, optionally check an
    /// evolution equation by dt-refinement.
    Flow(FlowArgs),
    /// Print structure diagnostics (validation residuals, curvature summaries).
    Info(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Example structure: flat | family.
    #[arg(long)]
    example: Option<String>,
    /// Manifold dimension (even, >= 2).
    #[arg(long)]
    dim: Option<usize>,
    /// Leading resolution shorthand: [N, 1, 1, ...].
    #[arg(long)]
    grid: Option<usize>,
    /// Full per-axis resolution list.
    #[arg(long, value_delimiter = ',')]
    res: Option<Vec<usize>>,
    /// Central-difference order: 2, 4, 6 or 8.
    #[arg(long = "fd-order")]
    fd_order: Option<usize>,
    /// Derivative backend: fd | exact.
    #[arg(long)]
    backend: Option<String>,
    /// Family amplitude.
    #[arg(long)]
    eps: Option<f64>,
    /// Family profile axis.
    #[arg(long)]
    axis: Option<usize>,
    /// Family profile harmonic.
    #[arg(long)]
    freq: Option<f64>,
    /// Identity selection (comma-separated ids).
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    /// Output file for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Doubling sequence of leading resolutions, e.g. 32,64,128.
    /// (For `converge`, --res selects the refinement sequence.)
    #[arg(long = "refine", value_delimiter = ',')]
    refine: Option<Vec<usize>>,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of RK4 steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Keep every k-th state.
    #[arg(long = "save-every")]
    save_every: Option<usize>,
    /// Structure-drift rejection tolerance.
    #[arg(long = "drift-tol")]
    drift_tol: Option<f64>,
    /// Retraction: off | renormalize.
    #[arg(long)]
    retraction: Option<String>,
    /// Evolution check: tau_norm | tau_norm_general | chern_scalar |
    /// tau_tensor | riemann_scalar.
    #[arg(long)]
    check: Option<String>,
    /// Also run the check on a coarsened grid and report the h-factor.
    #[arg(long = "h-refine", default_value_t = false)]
    h_refine: bool,
    /// Output file for the JSON flow report (CSV series goes to --out).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn apply_common(cfg: &mut RunConfig, a: &CommonArgs) -> Result<()> {
    if let Some(e) = &a.example {
        cfg.example = match e.as_str() {
            "flat" => ExampleKind::Flat,
            "family" => ExampleKind::Family,
            other => return Err(anyhow!("unknown example {other} (use flat|family)")),
        };
    }
    if let Some(d) = a.dim {
        cfg.dim = d;
    }
    if let Some(g) = a.grid {
        cfg.grid = Some(g);
        cfg.resolutions = None;
    }
    if let Some(r) = &a.res {
        cfg.resolutions = Some(r.clone());
        cfg.grid = None;
    }
    if let Some(o) = a.fd_order {
        cfg.fd_order = o;
    }
    if let Some(b) = &a.backend {
        cfg.backend = match b.as_str() {
            "fd" => BackendChoice::Fd,
            "exact" => BackendChoice::Exact,
            other => return Err(anyhow!("unknown backend {other} (use fd|exact)")),
        };
    }
    if let Some(e) = a.eps {
        cfg.eps = e;
    }
    if let Some(x) = a.axis {
        cfg.axis = x;
    }
    if let Some(f) = a.freq {
        cfg.freq = f;
    }
    if let Some(ids) = &a.ids {
        cfg.ids = ids.clone();
    }
    Ok(())
}

fn load_config(a: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    apply_common(&mut cfg, a)?;
    Ok(cfg)
}

fn grid_info(cfg: &RunConfig) -> Result<GridInfo> {
    Ok(GridInfo {
        dim: cfg.dim,
        resolutions: cfg.effective_resolutions()?,
        fd_order: cfg.fd_order,
    })
}

fn validate_ids(ids: &[String]) -> Result<()> {
    let reg = akflow_core::identities::registry();
    for id in ids {
        if !reg.iter().any(|c| c.id == id.as_str()) {
            return Err(anyhow!("unknown identity id {id}"));
        }
    }
    Ok(())
}

fn cmd_verify(args: &CommonArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    validate_ids(&cfg.ids)?;
    let grid = runner::build_grid(&cfg, None)?;
    let (ak, geo, backend) = runner::build_geometry(&cfg, &grid)?;
    let results = runner::run_identities(&ak, &geo, backend, &cfg.ids, runner::worker_threads());
    let report = VerifyReport::new(&cfg, grid_info(&cfg)?, backend.as_str(), &results);
    let json = to_json_pretty(&report);
    if let Some(path) = &args.out {
        fs::write(path, &json)?;
    }
    for e in &report.results {
        println!(
            "{:6} {:22} rel {:>12.3e} max {:>12.3e}{}",
            e.status,
            e.id,
            e.relative,
            e.max_abs,
            e.reason.as_deref().map(|r| format!("  ({r})")).unwrap_or_default()
        );
    }
    println!(
        "verify: {} pass, {} fail, {} skip (backend {})",
        report.summary.pass, report.summary.fail, report.summary.skip, report.backend
    );
    Ok(report.summary.all_pass)
}

fn cmd_converge(args: &ConvergeArgs) -> Result<bool> {
    let mut cfg = load_config(&args.common)?;
    if let Some(r) = &args.refine {
        cfg.refine = r.clone();
    }
    // `--res 32,64,128` is the natural spelling from the interface contract;
    // accept it as the refinement list when it does not match the dimension
    if cfg.refine.is_empty() {
        if let Some(res) = &cfg.resolutions {
            if res.len() != cfg.dim {
                cfg.refine = res.clone();
                cfg.resolutions = None;
            }
        }
    }
    let results = runner::run_convergence(&cfg)?;
    let report = ConvergeReport::new(&cfg, grid_info(&cfg)?, &results);
    let json = to_json_pretty(&report);
    if let Some(path) = &args.common.out {
        fs::write(path, &json)?;
    }
    for e in &report.results {
        println!(
            "{:6} {:22} orders {:?}{}",
            if e.pass { "pass" } else { "fail" },
            e.id,
            e.orders.iter().map(|o| (o * 100.0).round() / 100.0).collect::<Vec<_>>(),
            if e.at_machine_precision { "  [machine precision]" } else { "" }
        );
    }
    println!(
        "converge: {} pass, {} fail (order threshold {})",
        report.summary.pass, report.summary.fail, report.order_threshold
    );
    Ok(report.summary.all_pass)
}

fn cmd_flow(args: &FlowArgs) -> Result<bool> {
    let mut cfg = load_config(&args.common)?;
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(k) = args.save_every {
        cfg.save_every = k;
    }
    if let Some(t) = args.drift_tol {
        cfg.drift_tol = t;
    }
    if let Some(r) = &args.retraction {
        cfg.retraction = match r.as_str() {
            "off" => RetractionChoice::Off,
            "renormalize" => RetractionChoice::Renormalize,
            other => return Err(anyhow!("unknown retraction {other}")),
        };
    }
    if let Some(c) = &args.check {
        cfg.check = Some(c.clone());
    }
    cfg.h_refine = args.h_refine;
    // dt-refinement factors need the spatial error well below the O(dt²)
    // part; when a check is requested and no grid was named anywhere, use
    // check-tuned defaults instead of the coarse general ones
    if cfg.check.is_some() && cfg.grid.is_none() && cfg.resolutions.is_none() {
        cfg.grid = Some(96);
        if args.common.fd_order.is_none() {
            cfg.fd_order = 8;
        }
    }

    let run = runner::run_flow(&cfg)?;
    if let Some(path) = &args.common.out {
        let file = fs::File::create(path)?;
        write_series_csv(file, &run.series)?;
    }
    let pass = match &run.evolution {
        Some(rep) => rep.kind_residual_dt <= 1e-12 || rep.dt_factor >= 3.5,
        None => true,
    };
    let report = FlowReport {
        tool: "akflow",
        format_version: akflow::report::FORMAT_VERSION,
        registry_version: akflow_core::REGISTRY_VERSION,
        config_hash: cfg.hash(),
        grid: grid_info(&cfg)?,
        config: cfg.clone(),
        check: run.check.clone(),
        residual_dt: run.evolution.as_ref().map(|r| r.kind_residual_dt),
        residual_2dt: run.evolution.as_ref().map(|r| r.kind_residual_2dt),
        dt_factor: run.evolution.as_ref().map(|r| r.dt_factor),
        h_factor: run.h_factor,
        steps: cfg.steps,
        states_saved: run.series.len(),
        final_diagnostics: run.series.last().map(FlowSample::from),
        pass,
    };
    if let Some(path) = &args.report {
        fs::write(path, to_json_pretty(&report))?;
    }
    if let Some(rep) = &run.evolution {
        println!(
            "flow check {}: residual(dt) {:.4e}, residual(2dt) {:.4e}, dt-factor {:.2}{}",
            run.check.as_deref().unwrap_or("-"),
            rep.kind_residual_dt,
            rep.kind_residual_2dt,
            rep.dt_factor,
            run.h_factor
                .map(|h| format!(", h-factor {h:.2}"))
                .unwrap_or_default()
        );
    }
    if let Some(d) = run.series.last() {
        println!(
            "flow: t {:.4}, rho_mean {:.6e}, tau2_max {:.6e}, j2_drift {:.3e}",
            d.t, d.rho_mean, d.tau2_max, d.j2_drift
        );
    }
    Ok(pass)
}

fn cmd_info(args: &CommonArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let grid = runner::build_grid(&cfg, None)?;
    let (ak, geo, backend) = runner::build_geometry(&cfg, &grid)?;
    let rep = ak.validate(&akflow_core::Deriv::Fd);
    let stats = |f: &akflow_core::TensorField| {
        let vals = f.raw();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, mean, max)
    };
    println!("structure: {:?}, backend {}", cfg.example, backend.as_str());
    println!(
        "grid: dim {}, resolutions {:?}, fd order {}",
        cfg.dim,
        cfg.effective_resolutions()?,
        cfg.fd_order
    );
    println!(
        "validation: max residual {:.3e}, min eig(g) {:.6}",
        rep.max_residual(),
        rep.min_eig
    );
    let (rmin, rmean, rmax) = stats(&geo.rho);
    println!("chern scalar rho:    min {rmin:+.6e}  mean {rmean:+.6e}  max {rmax:+.6e}");
    let (smin, smean, smax) = stats(&geo.scal);
    println!("scalar curvature R:  min {smin:+.6e}  mean {smean:+.6e}  max {smax:+.6e}");
    let (tmin, tmean, tmax) = stats(&geo.tau_norm2);
    println!("|tau|^2:             min {tmin:+.6e}  mean {tmean:+.6e}  max {tmax:+.6e}");
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Converge(a) => cmd_converge(a),
        Cmd::Flow(a) => cmd_flow(a),
        Cmd::Info(a) => cmd_info(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            // runtime rejections (structure drift, lost positivity) are
            // failed checks, not configuration mistakes
            match err.downcast_ref::<akflow_core::AkError>() {
                Some(
                    akflow_core::AkError::DriftExceeded { .. }
                    | akflow_core::AkError::NotPositiveDefinite { .. },
                ) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
