//! Machine-readable reports: JSON for identity runs, convergence studies and
//! flow checks, CSV for flow time series. Field order is fixed by the struct
//! definitions and no timestamps are embedded, so identical configurations
//! produce byte-identical files.

use std::io::Write;

use serde::Serialize;

use akflow_core::flow::FlowDiagnostics;
use akflow_core::identities::{CheckStatus, ConvergenceResult, IdentityResult};
use akflow_core::REGISTRY_VERSION;

use crate::config::RunConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct GridInfo {
    pub dim: usize,
    pub resolutions: Vec<usize>,
    pub fd_order: usize,
}

#[derive(Debug, Serialize)]
pub struct IdentityEntry {
    pub id: String,
    pub description: String,
    pub jet_class: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub max_abs: f64,
    pub l2_mean: f64,
    pub scale: f64,
    pub relative: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl From<&IdentityResult> for IdentityEntry {
    fn from(r: &IdentityResult) -> Self {
        let (status, reason) = match &r.status {
            CheckStatus::Pass => ("pass", None),
            CheckStatus::Fail => ("fail", None),
            CheckStatus::Skipped(why) => ("skip", Some(why.clone())),
        };
        Self {
            id: r.id.to_string(),
            description: r.description.to_string(),
            jet_class: r.jet_class.as_str().to_string(),
            status: status.to_string(),
            reason,
            max_abs: r.max_abs,
            l2_mean: r.l2_mean,
            scale: r.scale,
            relative: r.relative,
            tolerance: r.tolerance,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
    pub all_pass: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub tool: &'static str,
    pub format_version: u32,
    pub registry_version: &'static str,
    pub config_hash: String,
    pub backend: String,
    pub grid: GridInfo,
    pub config: RunConfig,
    pub results: Vec<IdentityEntry>,
    pub summary: Summary,
}

impl VerifyReport {
    pub fn new(
        cfg: &RunConfig,
        grid: GridInfo,
        backend: &str,
        results: &[IdentityResult],
    ) -> Self {
        let entries: Vec<IdentityEntry> = results.iter().map(IdentityEntry::from).collect();
        let pass = entries.iter().filter(|e| e.status == "pass").count();
        let fail = entries.iter().filter(|e| e.status == "fail").count();
        let skip = entries.iter().filter(|e| e.status == "skip").count();
        Self {
            tool: "akflow",
            format_version: FORMAT_VERSION,
            registry_version: REGISTRY_VERSION,
            config_hash: cfg.hash(),
            backend: backend.to_string(),
            grid,
            config: cfg.clone(),
            results: entries,
            summary: Summary {
                total: pass + fail + skip,
                pass,
                fail,
                skip,
                all_pass: fail == 0,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ConvergenceEntry {
    pub id: String,
    pub resolutions: Vec<usize>,
    pub max_abs: Vec<f64>,
    pub relative: Vec<f64>,
    pub orders: Vec<f64>,
    pub at_machine_precision: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct ConvergeReport {
    pub tool: &'static str,
    pub format_version: u32,
    pub registry_version: &'static str,
    pub config_hash: String,
    pub grid: GridInfo,
    pub config: RunConfig,
    /// Identities pass at order >= fd_order - 1 (or at the round-off floor).
    pub order_threshold: f64,
    pub results: Vec<ConvergenceEntry>,
    pub summary: Summary,
}

impl ConvergeReport {
    pub fn new(cfg: &RunConfig, grid: GridInfo, results: &[ConvergenceResult]) -> Self {
        let threshold = cfg.fd_order as f64 - 1.0;
        let entries: Vec<ConvergenceEntry> = results
            .iter()
            .map(|r| {
                let min_order = if r.orders.is_empty() {
                    None
                } else {
                    Some(r.orders.iter().copied().fold(f64::INFINITY, f64::min))
                };
                let pass = r.at_machine_precision || min_order.map_or(false, |o| o >= threshold);
                ConvergenceEntry {
                    id: r.id.to_string(),
                    resolutions: r.resolutions.clone(),
                    max_abs: r.max_abs.clone(),
                    relative: r.relative.clone(),
                    orders: r.orders.clone(),
                    at_machine_precision: r.at_machine_precision,
                    min_order,
                    pass,
                }
            })
            .collect();
        let pass = entries.iter().filter(|e| e.pass).count();
        let fail = entries.len() - pass;
        Self {
            tool: "akflow",
            format_version: FORMAT_VERSION,
            registry_version: REGISTRY_VERSION,
            config_hash: cfg.hash(),
            grid,
            config: cfg.clone(),
            order_threshold: threshold,
            results: entries,
            summary: Summary {
                total: pass + fail,
                pass,
                fail,
                skip: 0,
                all_pass: fail == 0,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FlowReport {
    pub tool: &'static str,
    pub format_version: u32,
    pub registry_version: &'static str,
    pub config_hash: String,
    pub grid: GridInfo,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_2dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_factor: Option<f64>,
    pub steps: usize,
    pub states_saved: usize,
    pub final_diagnostics: Option<FlowSample>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub rho_mean: f64,
    pub tau2_max: f64,
    pub tau2_l2: f64,
    pub j2_drift: f64,
    pub compat_drift: f64,
    pub scal_mean: f64,
}

impl From<&FlowDiagnostics> for FlowSample {
    fn from(d: &FlowDiagnostics) -> Self {
        Self {
            t: d.t,
            rho_mean: d.rho_mean,
            tau2_max: d.tau2_max,
            tau2_l2: d.tau2_l2,
            j2_drift: d.j2_drift,
            compat_drift: d.compat_drift,
            scal_mean: d.scal_mean,
        }
    }
}

/// Flow time series in CSV: header row, UTF-8, LF line endings.
pub fn write_series_csv<W: Write>(mut w: W, series: &[FlowDiagnostics]) -> std::io::Result<()> {
    w.write_all(b"t,rho_mean,tau2_max,tau2_l2,j2_drift,compat_drift,scalR_mean\n")?;
    for d in series {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.t, d.rho_mean, d.tau2_max, d.tau2_l2, d.j2_drift, d.compat_drift, d.scal_mean
        )?;
    }
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("reports serialize");
    out.push('\n');
    out
}
