//! Symplectic curvature flow in Chern form, and finite time-difference
//! verification of the evolution equations along trajectories.
//!
//! The evolved unknowns are `(ω, J)`; the metric is re-derived from
//! `g_{ij} = J_i^s ω_{js}` at every stage, so the compatibility identities
//! hold by construction and the metric velocity is an independent check:
//!
//! ```text
//!     ∂t ω_{ij} = -P_{ij}
//!     ∂t J_i^k  = 4 ω^{re} ∇_r τ^k_{ei}
//!     ∂t g_{ij} = -J_i^s P_{js} + 4 g^{ra} ∇_r τ_{aij}   ( = -2 Rc + 2 B )
//! ```

use alloc::vec::Vec;

use crate::connection::{chern, covariant_derivative, nijenhuis, ConnectionData};
use crate::curvature::{chern_laplacian_scalar, curvature_of, GeometryCache};
use crate::error::{AkError, Result};
use crate::field::{einsum, TensorField};
use crate::grid::PeriodicGrid;
use crate::linalg::{inv_sqrt_near_identity, mat_mul};
use crate::scalar::Deriv;
use crate::structure::{AlmostKahler, FamilyParams};

/// Connection plus the curvature pieces the flow velocity needs.
pub struct FlowOps {
    pub conn: ConnectionData,
    pub omega_curv: TensorField,
    pub p_form: TensorField,
    pub nabla_tau_low: TensorField,
    pub nabla_tau_up: TensorField,
}

pub fn flow_ops(ak: &AlmostKahler, d: &Deriv) -> FlowOps {
    let conn = chern(ak, d);
    let omega_curv = curvature_of(&conn.upsilon, &ak.g, d);
    let p_form = einsum("cd,abcd->ab", &[&ak.omega_inv, &omega_curv]);
    let nabla_tau_low = covariant_derivative(&conn.tau_low, &conn.upsilon, d);
    let nabla_tau_up = covariant_derivative(&conn.tau_up, &conn.upsilon, d);
    FlowOps {
        conn,
        omega_curv,
        p_form,
        nabla_tau_low,
        nabla_tau_up,
    }
}

/// The three flow velocities at a state.
pub struct FlowRhs {
    pub omega_dot: TensorField,
    pub j_dot: TensorField,
    pub g_dot: TensorField,
}

pub fn flow_rhs_from_ops(ak: &AlmostKahler, ops: &FlowOps) -> FlowRhs {
    let omega_dot = -&ops.p_form;
    let j_dot = einsum("re,rkei->ik", &[&ak.omega_inv, &ops.nabla_tau_up]).scale(4.0);
    let g_dot = &einsum("ra,raij->ij", &[&ak.g_inv, &ops.nabla_tau_low]).scale(4.0)
        - &einsum("is,js->ij", &[&ak.j, &ops.p_form]);
    FlowRhs {
        omega_dot,
        j_dot,
        g_dot,
    }
}

pub fn flow_rhs(ak: &AlmostKahler, d: &Deriv) -> FlowRhs {
    flow_rhs_from_ops(ak, &flow_ops(ak, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retraction {
    Off,
    Renormalize,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub dt: f64,
    pub steps: usize,
    pub drift_tol: f64,
    pub retraction: Retraction,
    /// Keep every `save_every`-th state in the trajectory (plus the last).
    pub save_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            steps: 100,
            drift_tol: 1e-8,
            retraction: Retraction::Off,
            save_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub omega: TensorField,
    pub j: TensorField,
}

impl FlowState {
    pub fn structure(&self) -> Result<AlmostKahler> {
        AlmostKahler::from_j_omega(self.j.clone(), self.omega.clone())
    }

    /// Structure drift: `max |J² + I|` and `max |ω(J·,J·) - ω|`.
    pub fn drift(&self) -> (f64, usize, f64) {
        let j2 = einsum("ia,ak->ik", &[&self.j, &self.j]);
        let delta = TensorField::kronecker(self.omega.grid());
        let j2_res = &j2 + &einsum("ki->ik", &[&delta]);
        let (point, _) = j2_res.argmax_abs();
        let compat = &einsum("ia,jb,ab->ij", &[&self.j, &self.j, &self.omega]) - &self.omega;
        (j2_res.max_abs(), point, compat.max_abs())
    }
}

/// One classical RK4 step of `(ω, J)`; `g` is re-derived at every stage.
pub fn step_rk4(state: &FlowState, cfg: &FlowConfig, step: usize) -> Result<FlowState> {
    let dt = cfg.dt;
    let eval = |omega: &TensorField, j: &TensorField| -> Result<FlowRhs> {
        let ak = AlmostKahler::from_j_omega(j.clone(), omega.clone())?;
        Ok(flow_rhs(&ak, &Deriv::Fd))
    };
    let k1 = eval(&state.omega, &state.j)?;
    let w2 = &state.omega + &k1.omega_dot.scale(0.5 * dt);
    let j2 = &state.j + &k1.j_dot.scale(0.5 * dt);
    let k2 = eval(&w2, &j2)?;
    let w3 = &state.omega + &k2.omega_dot.scale(0.5 * dt);
    let j3 = &state.j + &k2.j_dot.scale(0.5 * dt);
    let k3 = eval(&w3, &j3)?;
    let w4 = &state.omega + &k3.omega_dot.scale(dt);
    let j4 = &state.j + &k3.j_dot.scale(dt);
    let k4 = eval(&w4, &j4)?;

    let combine = |a: &TensorField, b: &TensorField, c: &TensorField, d: &TensorField| {
        &(&a.scale(1.0) + &b.scale(2.0)) + &(&c.scale(2.0) + &d.scale(1.0))
    };
    let omega = &state.omega
        + &combine(&k1.omega_dot, &k2.omega_dot, &k3.omega_dot, &k4.omega_dot).scale(dt / 6.0);
    let mut j = &state.j + &combine(&k1.j_dot, &k2.j_dot, &k3.j_dot, &k4.j_dot).scale(dt / 6.0);

    if cfg.retraction == Retraction::Renormalize {
        j = renormalize_j(&j)?;
    }

    let next = FlowState {
        t: state.t + dt,
        omega,
        j,
    };
    let (j2_drift, point, compat_drift) = next.drift();
    if j2_drift > cfg.drift_tol {
        return Err(AkError::DriftExceeded {
            step,
            what: "J^2 + I",
            value: j2_drift,
            point,
        });
    }
    if compat_drift > cfg.drift_tol {
        return Err(AkError::DriftExceeded {
            step,
            what: "omega(J.,J.) - omega",
            value: compat_drift,
            point,
        });
    }
    Ok(next)
}

/// Project `J` back onto `J² = -I` via `J (-J²)^{-1/2}`; stored components
/// compose like operator matrices, so this is pointwise matrix algebra.
fn renormalize_j(j: &TensorField) -> Result<TensorField> {
    let grid = j.grid().clone();
    let dim = grid.dim();
    let comps = dim * dim;
    let mut out = j.clone();
    for p in 0..grid.points() {
        let s = &j.raw()[p * comps..(p + 1) * comps];
        let s2 = mat_mul(s, s, dim);
        let m: Vec<f64> = s2.iter().map(|v| -v).collect();
        let y = inv_sqrt_near_identity(&m, dim).ok_or(AkError::NotPositiveDefinite {
            point: p,
            min_eig: 0.0,
        })?;
        let fixed = mat_mul(s, &y, dim);
        out.raw_mut()[p * comps..(p + 1) * comps].copy_from_slice(&fixed);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    /// Time spacing between consecutive saved states.
    pub dt: f64,
}

/// Integrate and keep every `save_every`-th state (the initial state is
/// always saved first).
pub fn integrate(initial: FlowState, cfg: &FlowConfig) -> Result<Trajectory> {
    if cfg.save_every == 0 || cfg.steps == 0 {
        return Err(AkError::Config("steps and save_every must be >= 1".into()));
    }
    if cfg.steps % cfg.save_every != 0 {
        return Err(AkError::Config(
            "steps must be a multiple of save_every".into(),
        ));
    }
    let mut states = Vec::with_capacity(cfg.steps / cfg.save_every + 1);
    let mut current = initial;
    states.push(current.clone());
    for step in 0..cfg.steps {
        current = step_rk4(&current, cfg, step)?;
        if (step + 1) % cfg.save_every == 0 {
            states.push(current.clone());
        }
    }
    Ok(Trajectory {
        states,
        dt: cfg.dt * cfg.save_every as f64,
    })
}

/// Per-state diagnostics for the flow time series.
#[derive(Debug, Clone, Copy)]
pub struct FlowDiagnostics {
    pub t: f64,
    pub rho_mean: f64,
    pub tau2_max: f64,
    pub tau2_l2: f64,
    pub j2_drift: f64,
    pub compat_drift: f64,
    pub scal_mean: f64,
}

pub fn diagnostics(state: &FlowState) -> Result<FlowDiagnostics> {
    let ak = state.structure()?;
    let ops = flow_ops(&ak, &Deriv::Fd);
    let rho = einsum("ba,ab->", &[&ak.omega_inv, &ops.p_form]);
    let tau2 = ak.norm2(&ops.conn.tau_low);
    let rm = curvature_of(&ops.conn.gamma, &ak.g, &Deriv::Fd);
    let rc = einsum("il,ijkl->jk", &[&ak.g_inv, &rm]);
    let scal = einsum("jk,jk->", &[&ak.g_inv, &rc]);
    let (j2_drift, _, compat_drift) = state.drift();
    let mean = |f: &TensorField| -> f64 {
        f.raw().iter().sum::<f64>() / f.raw().len() as f64
    };
    Ok(FlowDiagnostics {
        t: state.t,
        rho_mean: mean(&rho),
        tau2_max: tau2.max_abs(),
        tau2_l2: tau2.l2_mean(),
        j2_drift,
        compat_drift,
        scal_mean: mean(&scal),
    })
}

/// Which evolution equation a trajectory is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionKind {
    /// `(∂t - Δ)|τ|²` (dimension-4 form when dim = 4, general otherwise).
    TauNorm,
    /// First-variation formula for `|τ|²` with the flow's `ġ` and `J̇`.
    TauNormGeneral,
    /// `(∂t - Δ)ρ`.
    ChernScalar,
    /// Variation of the torsion tensor driven by `J̇` alone.
    TauTensor,
    /// Variation of the Riemannian scalar curvature in Chern form.
    RiemannScalar,
}

impl EvolutionKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tau_norm" => Self::TauNorm,
            "tau_norm_general" => Self::TauNormGeneral,
            "chern_scalar" => Self::ChernScalar,
            "tau_tensor" => Self::TauTensor,
            "riemann_scalar" => Self::RiemannScalar,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TauNorm => "tau_norm",
            Self::TauNormGeneral => "tau_norm_general",
            Self::ChernScalar => "chern_scalar",
            Self::TauTensor => "tau_tensor",
            Self::RiemannScalar => "riemann_scalar",
        }
    }
}

/// Residuals of a time-differenced evolution equation at strides `dt` and
/// `2dt` around the same mid state; `factor` near 4 demonstrates the
/// expected second-order time differencing.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionReport {
    pub kind_residual_dt: f64,
    pub kind_residual_2dt: f64,
    pub dt_factor: f64,
    pub scale: f64,
}

/// Evaluate the check at the centre of the trajectory (needs at least five
/// saved states for both strides).
pub fn check_evolution(traj: &Trajectory, kind: EvolutionKind) -> Result<EvolutionReport> {
    let n = traj.states.len();
    if n < 5 {
        return Err(AkError::InsufficientStates { have: n });
    }
    let mid = n / 2;
    let (lo, hi) = (mid - 2, mid + 2);
    debug_assert!(hi < n);
    let r1 = evolution_residual(traj, mid, 1, kind)?;
    let r2 = evolution_residual(traj, mid, 2, kind)?;
    Ok(EvolutionReport {
        kind_residual_dt: r1.0,
        kind_residual_2dt: r2.0,
        dt_factor: if r1.0 > 0.0 { r2.0 / r1.0 } else { f64::INFINITY },
        scale: r1.1.max(r2.1).max(lo as f64 * 0.0),
    })
}

fn evolution_residual(
    traj: &Trajectory,
    mid: usize,
    stride: usize,
    kind: EvolutionKind,
) -> Result<(f64, f64)> {
    let dt = traj.dt * stride as f64;
    let prev = &traj.states[mid - stride];
    let next = &traj.states[mid + stride];
    let state = &traj.states[mid];
    let ak = state.structure()?;
    let geo = GeometryCache::build(&ak, &Deriv::Fd);
    let rhs_ops = flow_rhs_from_ops(
        &ak,
        &FlowOps {
            conn: geo.conn.clone(),
            omega_curv: geo.omega_curv.clone(),
            p_form: geo.p_form.clone(),
            nabla_tau_low: geo.nabla_tau_low.clone(),
            nabla_tau_up: geo.nabla_tau_up.clone(),
        },
    );

    let time_diff = |f_next: &TensorField, f_prev: &TensorField| -> TensorField {
        (f_next - f_prev).scale(1.0 / (2.0 * dt))
    };

    match kind {
        EvolutionKind::TauNorm => {
            let q_prev = observable_tau2(prev)?;
            let q_next = observable_tau2(next)?;
            let lap = chern_laplacian_scalar(&geo.tau_norm2, &ak, &geo.conn.upsilon, &Deriv::Fd);
            let lhs = &time_diff(&q_next, &q_prev) - &lap;
            let rhs = tau_norm_evolution_rhs(&ak, &geo);
            let res = &lhs - &rhs;
            Ok((res.max_abs(), lhs.max_abs().max(rhs.max_abs())))
        }
        EvolutionKind::TauNormGeneral => {
            let q_prev = observable_tau2(prev)?;
            let q_next = observable_tau2(next)?;
            let lhs = time_diff(&q_next, &q_prev);
            let gb = ak.inner(&rhs_ops.g_dot, &geo.b);
            let njd = covariant_derivative(&rhs_ops.j_dot, &geo.conn.upsilon, &Deriv::Fd);
            let twist = einsum(
                "ap,bw,bae,pwe->",
                &[&ak.g_inv, &ak.omega_inv, &geo.conn.tau_low, &njd],
            )
            .scale(2.0);
            let rhs = &gb + &twist;
            let res = &lhs - &rhs;
            Ok((res.max_abs(), lhs.max_abs().max(rhs.max_abs())))
        }
        EvolutionKind::ChernScalar => {
            let r_prev = observable_rho(prev)?;
            let r_next = observable_rho(next)?;
            let lap_rho = chern_laplacian_scalar(&geo.rho, &ak, &geo.conn.upsilon, &Deriv::Fd);
            let lhs = &time_diff(&r_next, &r_prev) - &lap_rho;
            let rhs = chern_scalar_evolution_rhs(&ak, &geo);
            let res = &lhs - &rhs;
            Ok((res.max_abs(), lhs.max_abs().max(rhs.max_abs())))
        }
        EvolutionKind::TauTensor => {
            let tau_of = |s: &FlowState| -> Result<TensorField> {
                Ok(nijenhuis(&s.j, &Deriv::Fd).scale(0.125))
            };
            let lhs = time_diff(&tau_of(next)?, &tau_of(prev)?);
            let j_dot = time_diff(&next.j, &prev.j);
            let rhs = tau_variation_rhs(&ak, &geo, &j_dot);
            let res = &lhs - &rhs;
            Ok((res.max_abs(), lhs.max_abs().max(rhs.max_abs())))
        }
        EvolutionKind::RiemannScalar => {
            let s_prev = observable_scal(prev)?;
            let s_next = observable_scal(next)?;
            let lhs = time_diff(&s_next, &s_prev);
            let rhs = riemann_scalar_variation_rhs(&ak, &geo, &rhs_ops.g_dot);
            let res = &lhs - &rhs;
            Ok((res.max_abs(), lhs.max_abs().max(rhs.max_abs())))
        }
    }
}

fn observable_tau2(state: &FlowState) -> Result<TensorField> {
    let ak = state.structure()?;
    let conn = chern(&ak, &Deriv::Fd);
    Ok(ak.norm2(&conn.tau_low))
}

fn observable_rho(state: &FlowState) -> Result<TensorField> {
    let ak = state.structure()?;
    let ops = flow_ops(&ak, &Deriv::Fd);
    Ok(einsum("ba,ab->", &[&ak.omega_inv, &ops.p_form]))
}

fn observable_scal(state: &FlowState) -> Result<TensorField> {
    let ak = state.structure()?;
    let conn = chern(&ak, &Deriv::Fd);
    let rm = curvature_of(&conn.gamma, &ak.g, &Deriv::Fd);
    let rc = einsum("il,ijkl->jk", &[&ak.g_inv, &rm]);
    Ok(einsum("jk,jk->", &[&ak.g_inv, &rc]))
}

/// Quadratic curvature-torsion contractions entering the `|τ|²` evolution:
/// `Ω^{dabe} (τ_{edc} τ_{abc}, τ_{cde} τ_{acb}, τ_{ced} τ_{acb})`.
fn omega_tau_quadratics(ak: &AlmostKahler, geo: &GeometryCache) -> [TensorField; 3] {
    let mut om_up = geo.omega_curv.clone();
    for slot in 0..4 {
        om_up = ak.raise_lower(&om_up, slot, crate::field::Upper).unwrap();
    }
    let tl = &geo.conn.tau_low;
    let gi = &ak.g_inv;
    [
        einsum("dabe,cf,edc,abf->", &[&om_up, gi, tl, tl]),
        einsum("dabe,cf,cde,afb->", &[&om_up, gi, tl, tl]),
        einsum("dabe,cf,ced,afb->", &[&om_up, gi, tl, tl]),
    ]
}

/// Right side of `(∂t - Δ)|τ|²` along the flow: the general form
/// `|B|² - 2|∇τ|² - 4Ω(τcompletely)` or the dimension-4 reduction
/// `-2|∇τ|² - 4 Ω (τ_{edc} τ_{abc} + 2 τ_{ced} τ_{acb})`.
pub fn tau_norm_evolution_rhs(ak: &AlmostKahler, geo: &GeometryCache) -> TensorField {
    let [q1, q2, q3] = omega_tau_quadratics(ak, geo);
    let grad = geo.nabla_tau_norm2.scale(2.0);
    if ak.dim() == 4 {
        &(-&grad) - &(&q1 + &q3.scale(2.0)).scale(4.0)
    } else {
        let b_norm = ak.norm2(&geo.b);
        &(&b_norm - &grad) - &(&(&q1 + &q2) + &q3).scale(4.0)
    }
}

/// Right side of `(∂t - Δ)ρ` along the flow:
/// `4|Rc - B|² + 2Δ|τ|² + 4 ∇∇B-trace + 16 (∇_a ∇_r τ_{rbc}) τ^{abc}`.
pub fn chern_scalar_evolution_rhs(ak: &AlmostKahler, geo: &GeometryCache) -> TensorField {
    let gi = &ak.g_inv;
    let diff = &geo.rc - &geo.b;
    let t1 = ak.norm2(&diff).scale(4.0);
    let lap_tau2 =
        chern_laplacian_scalar(&geo.tau_norm2, ak, &geo.conn.upsilon, &Deriv::Fd).scale(2.0);
    let nb = covariant_derivative(&geo.b, &geo.conn.upsilon, &Deriv::Fd);
    let nnb = covariant_derivative(&nb, &geo.conn.upsilon, &Deriv::Fd);
    let t3 = einsum("ip,jq,jipq->", &[gi, gi, &nnb]).scale(4.0);
    let nnt = covariant_derivative(&geo.nabla_tau_low, &geo.conn.upsilon, &Deriv::Fd);
    let hess_div = einsum("rm,armbc->abc", &[gi, &nnt]);
    let t4 = einsum("ap,bq,cs,abc,pqs->", &[gi, gi, gi, &hess_div, &geo.conn.tau_low]).scale(16.0);
    &(&t1 + &lap_tau2) + &(&t3 + &t4)
}

/// Torsion variation driven by a `J`-velocity alone:
/// `τ̇^i_{jk} = ¼ J_j^p (∇_p J̇_k^i - ∇_k J̇_p^i) - ¼ J_k^p (∇_p J̇_j^i - ∇_j J̇_p^i)
///            + ½ J̇^d_p (J_k^p τ^i_{jd} - J_j^p τ^i_{kd} + J_d^i τ^p_{jk})`.
pub fn tau_variation_rhs(
    ak: &AlmostKahler,
    geo: &GeometryCache,
    j_dot: &TensorField,
) -> TensorField {
    let j = &ak.j;
    let tu = &geo.conn.tau_up;
    let njd = covariant_derivative(j_dot, &geo.conn.upsilon, &Deriv::Fd);
    let a = &einsum("jp,pki->ijk", &[j, &njd]) - &einsum("jp,kpi->ijk", &[j, &njd]);
    let b = &einsum("kp,pji->ijk", &[j, &njd]) - &einsum("kp,jpi->ijk", &[j, &njd]);
    let c = &(&einsum("pd,kp,ijd->ijk", &[j_dot, j, tu]) - &einsum("pd,jp,ikd->ijk", &[j_dot, j, tu]))
        + &einsum("pd,di,pjk->ijk", &[j_dot, j, tu]);
    &(&a - &b).scale(0.25) + &c.scale(0.5)
}

/// Riemannian scalar-curvature variation in Chern form for a metric
/// velocity `ġ`:
/// `Ṙ = -⟨ġ, Rc⟩ - Δ(tr_g ġ) + g^{ip} g^{jq} ∇_j ∇_i ġ_{pq} - g^{dw} g^{qj} ∇_j [ġ_{pd} τ^p_{qw}]`.
pub fn riemann_scalar_variation_rhs(
    ak: &AlmostKahler,
    geo: &GeometryCache,
    g_dot: &TensorField,
) -> TensorField {
    let gi = &ak.g_inv;
    let t1 = -&ak.inner(g_dot, &geo.rc);
    let trace = einsum("ij,ij->", &[gi, g_dot]);
    let t2 = -&chern_laplacian_scalar(&trace, ak, &geo.conn.upsilon, &Deriv::Fd);
    let ngd = covariant_derivative(g_dot, &geo.conn.upsilon, &Deriv::Fd);
    let nngd = covariant_derivative(&ngd, &geo.conn.upsilon, &Deriv::Fd);
    let t3 = einsum("ip,jq,jipq->", &[gi, gi, &nngd]);
    let bracket = einsum("pd,pqw->dqw", &[g_dot, &geo.conn.tau_up]);
    let nbracket = covariant_derivative(&bracket, &geo.conn.upsilon, &Deriv::Fd);
    let t4 = -&einsum("dw,qj,jdqw->", &[gi, gi, &nbracket]);
    &(&t1 + &t2) + &(&t3 + &t4)
}

/// Residuals of the static-structure condition `P = λ ω`, `J̇ = 0`.
#[derive(Debug, Clone, Copy)]
pub struct StaticReport {
    pub p_residual: f64,
    pub j_dot_residual: f64,
}

pub fn static_check(ak: &AlmostKahler, lambda: f64) -> StaticReport {
    let ops = flow_ops(ak, &Deriv::Fd);
    let rhs = flow_rhs_from_ops(ak, &ops);
    let res = &ops.p_form - &ak.omega.scale(lambda);
    StaticReport {
        p_residual: res.max_abs(),
        j_dot_residual: rhs.j_dot.max_abs(),
    }
}

/// Check the torsion-variation formula on a synthetic path where only `J`
/// moves: states are family structures at `eps ± k·d_eps`, the mid structure
/// supplies the connection, and `τ = N(J)/8` depends on `J` alone.
pub fn synthetic_tau_path_check(
    grid: &alloc::sync::Arc<PeriodicGrid>,
    base: &FamilyParams,
    d_eps: f64,
) -> Result<EvolutionReport> {
    let j_at = |eps: f64| -> Result<TensorField> {
        let params = FamilyParams { eps, ..base.clone() };
        Ok(AlmostKahler::<f64>::conjugation_family(grid, &params)?.j)
    };
    let ak = AlmostKahler::<f64>::conjugation_family(grid, base)?;
    let geo = GeometryCache::build(&ak, &Deriv::Fd);
    let mut residuals = [0.0f64; 2];
    let mut scale = 0.0f64;
    for (k, stride) in [1usize, 2].iter().enumerate() {
        let h = d_eps * *stride as f64;
        let j_plus = j_at(base.eps + h)?;
        let j_minus = j_at(base.eps - h)?;
        let tau_dot = (&nijenhuis(&j_plus, &Deriv::Fd).scale(0.125)
            - &nijenhuis(&j_minus, &Deriv::Fd).scale(0.125))
            .scale(1.0 / (2.0 * h));
        let j_dot = (&j_plus - &j_minus).scale(1.0 / (2.0 * h));
        let rhs = tau_variation_rhs(&ak, &geo, &j_dot);
        let res = &tau_dot - &rhs;
        residuals[k] = res.max_abs();
        scale = scale.max(tau_dot.max_abs()).max(rhs.max_abs());
    }
    Ok(EvolutionReport {
        kind_residual_dt: residuals[0],
        kind_residual_2dt: residuals[1],
        dt_factor: if residuals[0] > 0.0 {
            residuals[1] / residuals[0]
        } else {
            f64::INFINITY
        },
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::sync::Arc;

    fn flat_state(n: usize) -> FlowState {
        let grid = Arc::new(PeriodicGrid::new(4, &[n, 1, 1, 1], 4).unwrap());
        let ak = AlmostKahler::<f64>::flat(&grid);
        FlowState {
            t: 0.0,
            omega: ak.omega.clone(),
            j: ak.j.clone(),
        }
    }

    #[test]
    fn flat_torus_is_a_fixed_point() {
        let state = flat_state(8);
        let ak = state.structure().unwrap();
        let rhs = flow_rhs(&ak, &Deriv::Fd);
        assert_eq!(rhs.omega_dot.max_abs(), 0.0);
        assert_eq!(rhs.j_dot.max_abs(), 0.0);
        assert_eq!(rhs.g_dot.max_abs(), 0.0);
        let cfg = FlowConfig {
            dt: 1e-2,
            steps: 100,
            ..Default::default()
        };
        let traj = integrate(state.clone(), &cfg).unwrap();
        let last = traj.states.last().unwrap();
        assert!((&last.omega - &state.omega).max_abs() <= 1e-12);
        assert!((&last.j - &state.j).max_abs() <= 1e-12);
    }

    #[test]
    fn flat_static_check_discriminates_lambda() {
        let grid = Arc::new(PeriodicGrid::new(4, &[8, 1, 1, 1], 4).unwrap());
        let ak = AlmostKahler::<f64>::flat(&grid);
        let at_zero = static_check(&ak, 0.0);
        assert!(at_zero.p_residual <= 1e-12);
        assert!(at_zero.j_dot_residual <= 1e-12);
        let at_one = static_check(&ak, 1.0);
        // P = 0, so the residual is exactly max|ω| = 1
        assert!((at_one.p_residual - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn injected_drift_is_rejected_with_location() {
        let state = flat_state(8);
        let mut broken = state.clone();
        let comps = broken.j.comps();
        broken.j.raw_mut()[5 * comps] += 1e-3; // corrupt point 5
        let cfg = FlowConfig {
            dt: 1e-3,
            steps: 1,
            drift_tol: 1e-8,
            ..Default::default()
        };
        match step_rk4(&broken, &cfg, 0) {
            Err(AkError::DriftExceeded { point, value, .. }) => {
                assert_eq!(point, 5);
                assert!(value > 1e-4);
            }
            other => panic!("expected drift rejection, got {other:?}"),
        }
    }
}
