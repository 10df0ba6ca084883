//! Registry of executable residual checks.
//!
//! Every identity relating the structure, connection and curvature
//! quantities is an [`IdentityCheck`]: a stable id, the jet order of
//! derivative data it needs, and an evaluator producing a residual sample
//! normalised by the magnitude of the terms entering the identity. The
//! registry drives the `verify` runner and the grid-refinement convergence
//! studies.
//!
//! Checks classified `ThirdOrder` differentiate cached fields again and are
//! only meaningful on the finite-difference backend; the exact-jet backend
//! carries second-order jets and skips them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::connection::covariant_derivative;
use crate::curvature::{chern_laplacian_scalar, GeometryCache};
use crate::field::{einsum, TensorField};
use crate::scalar::Deriv;
use crate::structure::{AlmostKahler, ProjKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetClass {
    Algebraic,
    FirstOrder,
    SecondOrder,
    ThirdOrder,
}

impl JetClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            JetClass::Algebraic => "algebraic",
            JetClass::FirstOrder => "first_order",
            JetClass::SecondOrder => "second_order",
            JetClass::ThirdOrder => "third_order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    FiniteDifference,
    ExactJet,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::FiniteDifference => "fd",
            BackendKind::ExactJet => "exact",
        }
    }
}

/// Residual magnitudes of one identity: sup norm, rms, and the sup norm of
/// the largest term entering the identity (for relative reporting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub max_abs: f64,
    pub l2_mean: f64,
    pub scale: f64,
}

impl ResidualSample {
    pub fn relative(&self) -> f64 {
        if self.scale > 1e-30 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

fn sample(residuals: &[&TensorField], scale_terms: &[&TensorField]) -> ResidualSample {
    let max_abs = residuals.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    let l2_mean = residuals.iter().map(|r| r.l2_mean()).fold(0.0, f64::max);
    let scale = crate::field::scale_of(scale_terms);
    ResidualSample {
        max_abs,
        l2_mean,
        scale,
    }
}

pub struct EvalCtx<'a> {
    pub ak: &'a AlmostKahler,
    pub geo: &'a GeometryCache,
}

pub struct IdentityCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub jet_class: JetClass,
    pub dim4_only: bool,
    pub eval: fn(&EvalCtx) -> ResidualSample,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone)]
pub struct IdentityResult {
    pub id: &'static str,
    pub description: &'static str,
    pub jet_class: JetClass,
    pub status: CheckStatus,
    pub max_abs: f64,
    pub l2_mean: f64,
    pub scale: f64,
    pub relative: f64,
    /// Relative tolerance the status was judged against, when one applies.
    pub tolerance: Option<f64>,
}

/// Relative tolerance for exact-jet evaluations of jet-complete identities.
pub const EXACT_REL_TOL: f64 = 1e-9;

/// Ids that must exist in the registry; used by the completeness test and
/// by callers that want the canonical ordering.
pub const REQUIRED_IDS: &[&str] = &[
    "STRUCT-JSQ",
    "STRUCT-GCOMPAT",
    "STRUCT-OMEGA-DEF",
    "STRUCT-IDLIST",
    "STRUCT-DOMEGA",
    "METRIC-COMPAT",
    "CHERN-PARALLEL-OMEGA",
    "CHERN-PARALLEL-J",
    "CHERN-PARALLEL-G",
    "N-8TAU",
    "THETA-N",
    "N-DOMEGA",
    "TAU-CYCLIC",
    "TAU-TRACE",
    "TAU-11",
    "TAUTAU-11",
    "COMMUTATOR",
    "RM-SYM",
    "OMEGA-SYM",
    "RM-OMEGA",
    "RHO-DUAL",
    "BIANCHI-1",
    "BIANCHI-2",
    "P-BIANCHI",
    "T-GAP",
    "T-SYM",
    "V-TRACED",
    "RC-OMEGA",
    "RC-ID",
    "SCAL-ID",
    "KI",
    "V-2002",
    "P-2002",
    "RC-2002",
    "B-FORMS",
    "B-TRACE",
    "B-DIM4",
    "B-NORMS-DIM4",
    "PHI-ID",
    "LAP-OMEGA",
    "LAP-DJ",
    "RSTAR",
    "TAU-RM-PTWISE",
    "LAP-TAU",
    "SEKIGAWA",
    "SEKIGAWA-DIV",
    "PROP-A",
    "SCF-GDOT",
];

pub fn registry() -> Vec<IdentityCheck> {
    use JetClass::*;
    let mut v: Vec<IdentityCheck> = Vec::new();
    let mut add = |id, description, jet_class, dim4_only, eval| {
        v.push(IdentityCheck {
            id,
            description,
            jet_class,
            dim4_only,
            eval,
        })
    };

    add("STRUCT-JSQ", "J squares to minus the identity", Algebraic, false, ev_struct_jsq);
    add("STRUCT-GCOMPAT", "g(J.,J.) = g", Algebraic, false, ev_struct_gcompat);
    add("STRUCT-OMEGA-DEF", "omega = g(J.,.)", Algebraic, false, ev_struct_omega_def);
    add("STRUCT-IDLIST", "coordinate identities tying g, J, omega and inverses", Algebraic, false, ev_struct_idlist);
    add("STRUCT-DOMEGA", "omega is closed", FirstOrder, false, ev_struct_domega);
    add("METRIC-COMPAT", "Levi-Civita derivative of g vanishes", FirstOrder, false, ev_metric_compat);
    add("CHERN-PARALLEL-OMEGA", "Chern derivative of omega vanishes", FirstOrder, false, ev_chern_parallel_omega);
    add("CHERN-PARALLEL-J", "Chern derivative of J vanishes", FirstOrder, false, ev_chern_parallel_j);
    add("CHERN-PARALLEL-G", "Chern derivative of g vanishes", FirstOrder, false, ev_chern_parallel_g);
    add("N-8TAU", "Nijenhuis tensor equals eight times the Chern torsion", FirstOrder, false, ev_n_8tau);
    add("THETA-N", "contorsion is a relabelling of the Nijenhuis tensor", FirstOrder, false, ev_theta_n);
    add("N-DOMEGA", "Nijenhuis tensor as a Levi-Civita derivative of omega", FirstOrder, false, ev_n_domega);
    add("TAU-CYCLIC", "cyclic sum of lowered torsion vanishes", FirstOrder, false, ev_tau_cyclic);
    add("TAU-TRACE", "every g-, omega-, J-trace of torsion vanishes", FirstOrder, false, ev_tau_trace);
    add("TAU-11", "torsion has no (1,1) part in any index pair", FirstOrder, false, ev_tau_11);
    add("TAUTAU-11", "quadratic torsion contractions are type (1,1)", FirstOrder, false, ev_tautau_11);
    add("COMMUTATOR", "Chern commutator on a vector field = curvature minus torsion transport", SecondOrder, false, ev_commutator);
    add("RM-SYM", "Riemann tensor has the four classical symmetries", SecondOrder, false, ev_rm_sym);
    add("OMEGA-SYM", "Chern curvature symmetries incl. J-invariance of the last pair", SecondOrder, false, ev_omega_sym);
    add("RM-OMEGA", "Riemann tensor from Chern curvature plus torsion terms", SecondOrder, false, ev_rm_omega);
    add("RHO-DUAL", "Chern scalar from P-trace equals Chern scalar from S-trace", SecondOrder, false, ev_rho_dual);
    add("BIANCHI-1", "first Bianchi identity with torsion", SecondOrder, false, ev_bianchi_1);
    add("BIANCHI-2", "differential Bianchi identity with torsion", ThirdOrder, false, ev_bianchi_2);
    add("P-BIANCHI", "traced Bianchi identity for the Chern-Ricci form", ThirdOrder, false, ev_p_bianchi);
    add("T-GAP", "pair-exchange gap of Chern curvature equals the T-tensor", SecondOrder, false, ev_t_gap);
    add("T-SYM", "antisymmetries and pair-antisymmetry of the T-tensor", SecondOrder, false, ev_t_sym);
    add("V-TRACED", "first-trace of Chern curvature via P, div tau and tau^2", SecondOrder, false, ev_v_traced);
    add("RC-OMEGA", "Ricci from the V-trace plus torsion terms", SecondOrder, false, ev_rc_omega);
    add("RC-ID", "Ricci from J.P, div tau and tau^2", SecondOrder, false, ev_rc_id);
    add("SCAL-ID", "scalar curvature = half Chern scalar minus |tau|^2", SecondOrder, false, ev_scal_id);
    add("KI", "B = Rc^(1,1) - (1/2) J P^(1,1)", SecondOrder, false, ev_ki);
    add("V-2002", "anti-invariant part of V is minus a torsion divergence", SecondOrder, false, ev_v_2002);
    add("P-2002", "anti-invariant part of P is twice an omega-twisted divergence", SecondOrder, false, ev_p_2002);
    add("RC-2002", "anti-invariant part of Ricci from symmetrised torsion divergence", SecondOrder, false, ev_rc_2002);
    add("B-FORMS", "B-tensors agree between the DJ definition and torsion formulas", FirstOrder, false, ev_b_forms);
    add("B-TRACE", "traces of the B-tensors reproduce |tau|^2", FirstOrder, false, ev_b_trace);
    add("B-DIM4", "in dimension four B^2 = |tau|^2 g", FirstOrder, true, ev_b_dim4);
    add("B-NORMS-DIM4", "dimension-four norms: |B1|^2=8|tau|^4 etc.", FirstOrder, true, ev_b_norms_dim4);
    add("PHI-ID", "phi from its definition, from torsion, and from J.B1 agree", FirstOrder, false, ev_phi_id);
    add("LAP-OMEGA", "rough Laplacian of omega = -P^(2,0+0,2) - J.B2", SecondOrder, false, ev_lap_omega);
    add("LAP-DJ", "rough Laplacian of J from curvature contractions", SecondOrder, false, ev_lap_dj);
    add("RSTAR", "scalar minus star-scalar curvature = -2|tau|^2", SecondOrder, false, ev_rstar);
    add("TAU-RM-PTWISE", "|tau|^2 from a Riemann contraction and the scalar curvature", SecondOrder, false, ev_tau_rm_ptwise);
    add("LAP-TAU", "expansion of the Chern Laplacian of |tau|^2", ThirdOrder, false, ev_lap_tau);
    add("SEKIGAWA", "pointwise Sekigawa identity in Chern form", ThirdOrder, true, ev_sekigawa);
    add("SEKIGAWA-DIV", "divergence term of the Sekigawa identity in Chern form", ThirdOrder, false, ev_sekigawa_div);
    add("PROP-A", "the two forms of the J-flow velocity agree", SecondOrder, false, ev_prop_a);
    add("SCF-GDOT", "metric flow velocity: Chern form vs -2Rc+2B vs the J.omega chain", SecondOrder, false, ev_scf_gdot);

    v
}

// ---------------------------------------------------------------------------
// structure-level checks
// ---------------------------------------------------------------------------

fn ev_struct_jsq(c: &EvalCtx) -> ResidualSample {
    let j = &c.ak.j;
    let delta = TensorField::kronecker(c.ak.grid());
    let res = &einsum("ia,ak->ik", &[j, j]) + &einsum("ki->ik", &[&delta]);
    sample(&[&res], &[j, j])
}

fn ev_struct_gcompat(c: &EvalCtx) -> ResidualSample {
    let res = &c.ak.g - &einsum("ia,jb,ab->ij", &[&c.ak.j, &c.ak.j, &c.ak.g]);
    sample(&[&res], &[&c.ak.g])
}

fn ev_struct_omega_def(c: &EvalCtx) -> ResidualSample {
    let res = &c.ak.omega - &einsum("ia,ja->ij", &[&c.ak.j, &c.ak.g]);
    sample(&[&res], &[&c.ak.omega])
}

fn ev_struct_idlist(c: &EvalCtx) -> ResidualSample {
    let ak = c.ak;
    let delta = TensorField::kronecker(ak.grid());
    let res = [
        &ak.g - &einsum("is,js->ij", &[&ak.j, &ak.omega]),
        &ak.g_inv - &einsum("si,js->ij", &[&ak.j, &ak.omega_inv]),
        &ak.omega_inv - &einsum("si,js->ij", &[&ak.j, &ak.g_inv]),
        &ak.j - &einsum("js,is->ij", &[&ak.omega_inv, &ak.g]),
        &ak.j - &einsum("is,js->ij", &[&ak.omega, &ak.g_inv]),
        &delta - &einsum("ac,cb->ab", &[&ak.omega_inv, &ak.omega]),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[&ak.g, &ak.g_inv, &ak.omega_inv, &ak.j])
}

fn ev_struct_domega(c: &EvalCtx) -> ResidualSample {
    // dω is exactly zero for the constant-ω examples; on evolved states this
    // is a discrete residual of the finite-difference gradient.
    let dw = Deriv::Fd.grad(&c.ak.omega);
    let res = &(&dw + &einsum("jki->ijk", &[&dw])) + &einsum("kij->ijk", &[&dw]);
    sample(&[&res], &[&c.ak.omega])
}

fn ev_metric_compat(c: &EvalCtx) -> ResidualSample {
    sample(&[&c.geo.conn.dg_cov], &[&c.geo.conn.gamma])
}

fn ev_chern_parallel_omega(c: &EvalCtx) -> ResidualSample {
    sample(&[&c.geo.conn.nabla_omega], &[&c.geo.conn.upsilon])
}

fn ev_chern_parallel_j(c: &EvalCtx) -> ResidualSample {
    sample(&[&c.geo.conn.nabla_j], &[&c.geo.conn.upsilon])
}

fn ev_chern_parallel_g(c: &EvalCtx) -> ResidualSample {
    sample(&[&c.geo.conn.nabla_g], &[&c.geo.conn.upsilon])
}

// ---------------------------------------------------------------------------
// torsion and contorsion
// ---------------------------------------------------------------------------

fn ev_n_8tau(c: &EvalCtx) -> ResidualSample {
    let res = &c.geo.nijen_low - &c.geo.conn.tau_low.scale(8.0);
    sample(&[&res], &[&c.geo.nijen_low, &c.geo.conn.tau_low.scale(8.0)])
}

fn ev_theta_n(c: &EvalCtx) -> ResidualSample {
    let theta_low = einsum("lij,lk->ijk", &[&c.geo.conn.theta, &c.ak.g]);
    let res = &theta_low.scale(8.0) - &einsum("jki->ijk", &[&c.geo.nijen_low]);
    sample(&[&res], &[&theta_low.scale(8.0), &c.geo.nijen_low])
}

fn ev_n_domega(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    // D_i ω_{jk} = ¼ ω_{ip} N^p_{jk}
    let r1 = &geo.conn.dw_cov
        - &einsum("ip,pjk->ijk", &[&c.ak.omega, &geo.conn.nijenhuis]).scale(0.25);
    // N^k_{ij} = 4 ω^{kp} D_p ω_{ij}
    let r2 = &geo.conn.nijenhuis - &einsum("kp,pij->kij", &[&c.ak.omega_inv, &geo.conn.dw_cov]).scale(4.0);
    sample(&[&r1, &r2], &[&geo.conn.dw_cov, &geo.conn.nijenhuis])
}

fn ev_tau_cyclic(c: &EvalCtx) -> ResidualSample {
    let tl = &c.geo.conn.tau_low;
    let res = &(tl + &einsum("jki->ijk", &[tl])) + &einsum("kij->ijk", &[tl]);
    sample(&[&res], &[tl])
}

fn ev_tau_trace(c: &EvalCtx) -> ResidualSample {
    let tl = &c.geo.conn.tau_low;
    let tu = &c.geo.conn.tau_up;
    let traces = [
        einsum("ab,abc->c", &[&c.ak.g_inv, tl]),
        einsum("bc,abc->a", &[&c.ak.g_inv, tl]),
        einsum("ab,abc->c", &[&c.ak.omega_inv, tl]),
        einsum("bc,abc->a", &[&c.ak.omega_inv, tl]),
        einsum("ab,acb->c", &[&c.ak.j, tu]),
    ];
    let refs: Vec<&TensorField> = traces.iter().collect();
    sample(&refs, &[tl])
}

fn ev_tau_11(c: &EvalCtx) -> ResidualSample {
    let tl = &c.geo.conn.tau_low;
    let res = [
        c.ak.project_type(tl, (0, 1), ProjKind::OneOne).unwrap(),
        c.ak.project_type(tl, (0, 2), ProjKind::OneOne).unwrap(),
        c.ak.project_type(tl, (1, 2), ProjKind::OneOne).unwrap(),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[tl])
}

fn ev_tautau_11(c: &EvalCtx) -> ResidualSample {
    let tl = &c.geo.conn.tau_low;
    let gi = &c.ak.g_inv;
    let wi = &c.ak.omega_inv;
    let contractions = [
        einsum("ab,cd,iac,jbd->ij", &[gi, gi, tl, tl]),
        einsum("ab,cd,iac,jdb->ij", &[gi, gi, tl, tl]),
        einsum("ab,cd,aci,bdj->ij", &[gi, gi, tl, tl]),
        einsum("ab,cd,iac,jbd->ij", &[wi, gi, tl, tl]),
        einsum("ab,cd,iac,jdb->ij", &[wi, gi, tl, tl]),
        einsum("ab,cd,aci,bdj->ij", &[wi, gi, tl, tl]),
    ];
    let proj: Vec<TensorField> = contractions
        .iter()
        .map(|f| c.ak.project_type(f, (0, 1), ProjKind::TwoZero).unwrap())
        .collect();
    let refs: Vec<&TensorField> = proj.iter().collect();
    let scale_refs: Vec<&TensorField> = contractions.iter().collect();
    sample(&refs, &scale_refs)
}

fn ev_commutator(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    // [∇_a, ∇_b] X^i = Ω^i_{abd} X^d - τ^e_{ab} ∇_e X^i on the probe field
    let nnx = &geo.nabla2_probe; // (a, b, i) = ∇_a ∇_b X^i
    let lhs = nnx - &einsum("bai->abi", &[nnx]);
    let curv = einsum("abdl,li,d->abi", &[&geo.omega_curv, &c.ak.g_inv, &geo.probe]);
    let transport = einsum("eab,ei->abi", &[&geo.conn.tau_up, &geo.nabla_probe]);
    let res = &lhs - &(&curv - &transport);
    sample(&[&res], &[&lhs, &curv, &transport])
}

// ---------------------------------------------------------------------------
// curvature symmetries and conversions
// ---------------------------------------------------------------------------

fn ev_rm_sym(c: &EvalCtx) -> ResidualSample {
    let rm = &c.geo.rm;
    let res = [
        rm + &einsum("jikl->ijkl", &[rm]),
        rm + &einsum("ijlk->ijkl", &[rm]),
        rm - &einsum("klij->ijkl", &[rm]),
        &(rm + &einsum("jkil->ijkl", &[rm])) + &einsum("kijl->ijkl", &[rm]),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[rm])
}

fn ev_omega_sym(c: &EvalCtx) -> ResidualSample {
    let om = &c.geo.omega_curv;
    let j = &c.ak.j;
    let res = [
        om + &einsum("jikl->ijkl", &[om]),
        om + &einsum("ijlk->ijkl", &[om]),
        om - &einsum("ka,lb,ijab->ijkl", &[j, j, om]),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[om])
}

fn ev_rm_omega(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let tl = &geo.conn.tau_low;
    let nt = &geo.nabla_tau_low;
    let gi = &c.ak.g_inv;
    let rhs = &(&(&geo.omega_curv + &einsum("iklj->ijkl", &[nt])) - &einsum("jkli->ijkl", &[nt]))
        + &(&(&einsum("sd,sli,kdj->ijkl", &[gi, tl, tl]) - &einsum("sd,slj,kdi->ijkl", &[gi, tl, tl]))
            + &einsum("cij,klc->ijkl", &[&geo.conn.tau_up, tl]));
    let res = &geo.rm - &rhs;
    sample(&[&res], &[&geo.rm, &geo.omega_curv, nt])
}

fn ev_rho_dual(c: &EvalCtx) -> ResidualSample {
    let rho2 = einsum("dc,cd->", &[&c.ak.omega_inv, &c.geo.s_form]);
    let res = &c.geo.rho - &rho2;
    sample(&[&res], &[&c.geo.rho, &rho2])
}

fn ev_bianchi_1(c: &EvalCtx) -> ResidualSample {
    let om = &c.geo.omega_curv;
    let nt = &c.geo.nabla_tau_low;
    let tl = &c.geo.conn.tau_low;
    let gi = &c.ak.g_inv;
    let lhs = &(om + &einsum("cabm->abcm", &[om])) + &einsum("bcam->abcm", &[om]);
    let grad = &(nt + &einsum("bcam->abcm", &[nt])) + &einsum("cabm->abcm", &[nt]);
    let quad = &(&einsum("se,asm,bce->abcm", &[gi, tl, tl])
        + &einsum("se,csm,abe->abcm", &[gi, tl, tl]))
        + &einsum("se,bsm,cae->abcm", &[gi, tl, tl]);
    let res = &(&lhs - &grad) + &quad;
    sample(&[&res], &[&lhs, &grad, &quad])
}

fn ev_bianchi_2(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let nom = covariant_derivative(&geo.omega_curv, &geo.conn.upsilon, &Deriv::Fd);
    let tl = &geo.conn.tau_low;
    let gi = &c.ak.g_inv;
    let lhs = &(&nom + &einsum("bcajm->abcjm", &[&nom])) + &einsum("cabjm->abcjm", &[&nom]);
    let rhs = &(&einsum("ie,aijm,bce->abcjm", &[gi, &geo.omega_curv, tl])
        + &einsum("ie,bijm,cae->abcjm", &[gi, &geo.omega_curv, tl]))
        + &einsum("ie,cijm,abe->abcjm", &[gi, &geo.omega_curv, tl]);
    let res = &lhs - &rhs;
    sample(&[&res], &[&lhs, &rhs])
}

fn ev_p_bianchi(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let np = covariant_derivative(&geo.p_form, &geo.conn.upsilon, &Deriv::Fd);
    let tl = &geo.conn.tau_low;
    let gi = &c.ak.g_inv;
    let lhs = &(&np + &einsum("bca->abc", &[&np])) + &einsum("cab->abc", &[&np]);
    let rhs = &(&einsum("ie,ai,bce->abc", &[gi, &geo.p_form, tl])
        + &einsum("ie,bi,cae->abc", &[gi, &geo.p_form, tl]))
        + &einsum("ie,ci,abe->abc", &[gi, &geo.p_form, tl]);
    let res = &lhs - &rhs;
    sample(&[&res], &[&lhs, &rhs])
}

fn ev_t_gap(c: &EvalCtx) -> ResidualSample {
    let om = &c.geo.omega_curv;
    let gap = &einsum("bdac->bdac", &[om]) - &einsum("acbd->bdac", &[om]);
    let res = &gap - &c.geo.t_tensor;
    sample(&[&res], &[&gap, &c.geo.t_tensor])
}

fn ev_t_sym(c: &EvalCtx) -> ResidualSample {
    let t = &c.geo.t_tensor;
    let res = [
        t + &einsum("baij->abij", &[t]),
        t + &einsum("abji->abij", &[t]),
        t + &einsum("ijab->abij", &[t]),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[t])
}

fn ev_v_traced(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let t1 = einsum("ka,ja->jk", &[&c.ak.j, &geo.p_form]).scale(0.5);
    let t2 = einsum("ur,rukj->jk", &[&c.ak.g_inv, &geo.nabla_tau_low]);
    let t3 = einsum("sje,eks->jk", &[&geo.conn.tau_up, &geo.conn.tau_up]);
    let res = &geo.v_form - &(&(&t1 - &t2) - &t3);
    sample(&[&res], &[&geo.v_form, &t1, &t2, &t3])
}

fn ev_rc_omega(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let tl = &geo.conn.tau_low;
    let tu = &geo.conn.tau_up;
    let t1 = einsum("il,iklj->jk", &[gi, &geo.nabla_tau_low]);
    let t2 = einsum("sd,slj,lkd->jk", &[gi, tl, tu]);
    let t3 = einsum("li,cij,klc->jk", &[gi, tu, tl]);
    let res = &geo.rc - &(&(&geo.v_form + &t1) - &(&t2 - &t3));
    sample(&[&res], &[&geo.rc, &geo.v_form, &t1, &t2, &t3])
}

fn ev_rc_id(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let t1 = einsum("ka,ja->jk", &[&c.ak.j, &geo.p_form]).scale(0.5);
    let t2 = einsum("ur,rukj->jk", &[&c.ak.g_inv, &geo.nabla_tau_low]).scale(2.0);
    let t3 = einsum("sje,eks->jk", &[&geo.conn.tau_up, &geo.conn.tau_up]).scale(2.0);
    let res = &geo.rc - &(&(&t1 - &t2) - &t3);
    sample(&[&res], &[&geo.rc, &t1, &t2, &t3])
}

fn ev_scal_id(c: &EvalCtx) -> ResidualSample {
    let res = &c.geo.scal - &(&c.geo.rho.scale(0.5) - &c.geo.tau_norm2);
    sample(&[&res], &[&c.geo.scal, &c.geo.rho.scale(0.5), &c.geo.tau_norm2])
}

fn ev_ki(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let rc11 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::OneOne).unwrap();
    let p11 = c.ak.project_type(&geo.p_form, (0, 1), ProjKind::OneOne).unwrap();
    let jp11 = einsum("is,js->ij", &[&c.ak.j, &p11]);
    let res = &geo.b - &(&rc11 - &jp11.scale(0.5));
    sample(&[&res], &[&geo.b, &rc11, &jp11.scale(0.5)])
}

fn ev_v_2002(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let lhs = c.ak.project_type(&geo.v_form, (0, 1), ProjKind::TwoZero).unwrap();
    let rhs = -&einsum("mq,mqab->ab", &[&c.ak.g_inv, &geo.nabla_tau_low]);
    let res = &lhs - &rhs;
    sample(&[&res], &[&lhs, &rhs, &geo.v_form])
}

fn ev_p_2002(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let lhs = c.ak.project_type(&geo.p_form, (0, 1), ProjKind::TwoZero).unwrap();
    let rhs = einsum("mn,mabn->ab", &[&c.ak.omega_inv, &geo.nabla_tau_low]).scale(2.0);
    let res = &lhs - &rhs;
    sample(&[&res], &[&lhs, &rhs, &geo.p_form])
}

fn ev_rc_2002(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let lhs = c.ak.project_type(&geo.rc, (0, 1), ProjKind::TwoZero).unwrap();
    let rhs = -&(&einsum("ur,rujk->jk", &[&c.ak.g_inv, &geo.nabla_tau_low])
        + &einsum("ur,rukj->jk", &[&c.ak.g_inv, &geo.nabla_tau_low]));
    let res = &lhs - &rhs;
    sample(&[&res], &[&lhs, &rhs, &geo.rc])
}

// ---------------------------------------------------------------------------
// B-tensors, phi, Laplacians
// ---------------------------------------------------------------------------

fn ev_b_forms(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let g = &c.ak.g;
    let dj = &geo.conn.dj_cov;
    let tl = &geo.conn.tau_low;
    let b1_dj = einsum("kl,mn,ikm,jln->ij", &[gi, g, dj, dj]);
    let b2_dj = einsum("kl,mn,kim,ljn->ij", &[gi, g, dj, dj]);
    let b_tau = einsum("wa,kb,ika,jwb->ij", &[gi, gi, tl, tl]).scale(-2.0);
    let res = [
        &geo.b1 - &b1_dj,
        &geo.b2 - &b2_dj,
        &geo.b - &b_tau,
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[&geo.b1, &geo.b2, &geo.b])
}

fn ev_b_trace(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let tr1 = einsum("ij,ij->", &[gi, &geo.b1]).scale(0.25);
    let tr2 = einsum("ij,ij->", &[gi, &geo.b2]).scale(0.25);
    // tr_g B = -|tau|^2 (the quarter/half-trace identities fix the sign)
    let tr3 = -&einsum("ij,ij->", &[gi, &geo.b]);
    let res = [
        &geo.tau_norm2 - &tr1,
        &geo.tau_norm2 - &tr2,
        &geo.tau_norm2 - &tr3,
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[&geo.tau_norm2, &tr1])
}

fn ev_b_dim4(c: &EvalCtx) -> ResidualSample {
    let res = &c.geo.b2 - &einsum(",ij->ij", &[&c.geo.tau_norm2, &c.ak.g]);
    sample(&[&res], &[&c.geo.b2])
}

fn ev_b_norms_dim4(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let tau4 = einsum(",->", &[&geo.tau_norm2, &geo.tau_norm2]);
    let res = [
        &c.ak.norm2(&geo.b1) - &tau4.scale(8.0),
        &c.ak.norm2(&geo.b2) - &tau4.scale(4.0),
        &c.ak.inner(&geo.b1, &geo.b2) - &tau4.scale(4.0),
        &c.ak.norm2(&geo.b) - &tau4.scale(0.5),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    let s8 = tau4.scale(8.0);
    sample(&refs, &[&s8])
}

fn ev_phi_id(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let tl = &geo.conn.tau_low;
    let phi_tau = einsum("mk,ld,mli,kdj->ij", &[&c.ak.omega_inv, &c.ak.g_inv, tl, tl]).scale(4.0);
    let phi_b1 = einsum("iv,vj->ij", &[&c.ak.j, &geo.b1]);
    let res = [&geo.phi - &phi_tau, &geo.phi - &phi_b1];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[&geo.phi, &phi_tau])
}

fn ev_lap_omega(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let p2002 = c.ak.project_type(&geo.p_form, (0, 1), ProjKind::TwoZero).unwrap();
    let jb2 = einsum("is,sj->ij", &[&c.ak.j, &geo.b2]);
    let rhs = -&(&p2002 + &jb2);
    let res = &geo.lap_omega - &rhs;
    sample(&[&res], &[&geo.lap_omega, &p2002, &jb2])
}

fn ev_lap_dj(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let rhs = lap_dj_from_curvature(c);
    let res = &geo.lap_j - &rhs;
    sample(&[&res], &[&geo.lap_j, &rhs])
}

/// `Δ_D J_a^b = Rm_{iae}^b ω^{ei} + Rc_a^d J_d^b + Rc_e^b J_a^e + Rm_{aei}^b ω^{ei}`.
fn lap_dj_from_curvature(c: &EvalCtx) -> TensorField {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let wi = &c.ak.omega_inv;
    let j = &c.ak.j;
    let rm = &geo.rm;
    let t1 = einsum("ei,mb,iaem->ab", &[wi, gi, rm]);
    let t2 = einsum("dm,am,db->ab", &[gi, &geo.rc, j]);
    let t3 = einsum("bm,em,ae->ab", &[gi, &geo.rc, j]);
    let t4 = einsum("ei,mb,aeim->ab", &[wi, gi, rm]);
    &(&t1 + &t2) + &(&t3 + &t4)
}

fn ev_rstar(c: &EvalCtx) -> ResidualSample {
    let res = &(&c.geo.scal - &c.geo.rstar) + &c.geo.tau_norm2.scale(2.0);
    sample(&[&res], &[&c.geo.scal, &c.geo.rstar, &c.geo.tau_norm2.scale(2.0)])
}

fn ev_tau_rm_ptwise(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    // |τ|² = -¼ ⟨Δ_D J, J⟩, with ⟨Δ_D J, J⟩ = g_{bu} g^{av} J_v^u (Δ_D J)_a^b;
    // expanding Δ_D J by curvature gives |τ|² + ½ J_b^a Rm_{aie}^b ω^{ei} + ½ R = 0.
    let pairing = einsum("bu,av,vu,ab->", &[&c.ak.g, &c.ak.g_inv, &c.ak.j, &geo.lap_j]);
    let r1 = &geo.tau_norm2 + &pairing.scale(0.25);
    let x = einsum("ba,mb,ei,aiem->", &[&c.ak.j, &c.ak.g_inv, &c.ak.omega_inv, &geo.rm]);
    let r2 = &(&geo.tau_norm2 + &x.scale(0.5)) + &geo.scal.scale(0.5);
    sample(&[&r1, &r2], &[&geo.tau_norm2, &pairing.scale(0.25), &geo.scal.scale(0.5)])
}

// ---------------------------------------------------------------------------
// third-order identities (finite differences only)
// ---------------------------------------------------------------------------

fn ev_lap_tau(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let tl = &geo.conn.tau_low;
    let lap = chern_laplacian_scalar(&geo.tau_norm2, c.ak, &geo.conn.upsilon, &Deriv::Fd);
    let rc11 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::OneOne).unwrap();
    let t_rc = c.ak.inner(&rc11, &geo.b).scale(-2.0);
    let t_b2 = c.ak.norm2(&geo.b);
    let nnt = covariant_derivative(&geo.nabla_tau_low, &geo.conn.upsilon, &Deriv::Fd);
    let hess_div = einsum("rm,armbc->abc", &[gi, &nnt]);
    let t_hess = einsum("ap,bq,cs,abc,pqs->", &[gi, gi, gi, &hess_div, tl]).scale(8.0);
    let t_grad = geo.nabla_tau_norm2.scale(2.0);
    let om_up = raise_all4(c, &geo.omega_curv);
    let q1 = einsum("dabe,cf,edc,abf->", &[&om_up, gi, tl, tl]);
    let q2 = einsum("dabe,cf,cde,afb->", &[&om_up, gi, tl, tl]);
    let q3 = einsum("dabe,cf,ced,afb->", &[&om_up, gi, tl, tl]);
    let t_curv = (&(&q1 + &q2) + &q3).scale(4.0);
    let rhs = &(&(&t_rc + &t_b2) + &(&t_hess + &t_grad)) + &t_curv;
    let res = &lap - &rhs;
    sample(&[&res], &[&lap, &t_rc, &t_b2, &t_hess, &t_grad, &t_curv])
}

fn raise_all4(c: &EvalCtx, f: &TensorField) -> TensorField {
    let mut out = f.clone();
    for slot in 0..4 {
        out = c.ak.raise_lower(&out, slot, crate::field::Upper).unwrap();
    }
    out
}

/// Divergence term of the Sekigawa identity, Levi-Civita form:
/// `g^{uv} D_u [ (D_v ω^{ij}) Q_{ij} ]`.
fn sekigawa_div_lc(c: &EvalCtx) -> TensorField {
    let geo = c.geo;
    let mut dw_up = geo.conn.dw_cov.clone(); // (v, i, j)
    dw_up = c.ak.raise_lower(&dw_up, 1, crate::field::Upper).unwrap();
    dw_up = c.ak.raise_lower(&dw_up, 2, crate::field::Upper).unwrap();
    let f = einsum("vij,ij->v", &[&dw_up, &geo.q_form]);
    let df = covariant_derivative(&f, &geo.conn.gamma, &Deriv::Fd);
    einsum("uv,uv->", &[&c.ak.g_inv, &df])
}

/// Divergence term of the Sekigawa identity, Chern form:
/// `2 g^{rs} g^{ja} ∇_u [ τ^u_{as} ∇_m τ^m_{rj} ]` (expanded by the product
/// rule so only cached fields are differentiated). The overall sign is
/// pinned by refinement against the Levi-Civita form: the two sides agree
/// at stencil order with `+2`, not the `-2` the source prints.
fn sekigawa_div_chern(c: &EvalCtx) -> TensorField {
    let geo = c.geo;
    let gi = &c.ak.g_inv;
    let div_tau = einsum("mmrj->rj", &[&geo.nabla_tau_up]); // ∇_m τ^m_{rj}
    let div_div = einsum("uuas->as", &[&geo.nabla_tau_up]); // ∇_u τ^u_{as}
    let d_div = covariant_derivative(&div_tau, &geo.conn.upsilon, &Deriv::Fd); // (u, r, j)
    let part1 = einsum("rs,ja,as,rj->", &[gi, gi, &div_div, &div_tau]);
    let part2 = einsum("rs,ja,uas,urj->", &[gi, gi, &geo.conn.tau_up, &d_div]);
    (&part1 + &part2).scale(2.0)
}

fn ev_sekigawa_div(c: &EvalCtx) -> ResidualSample {
    let lc = sekigawa_div_lc(c).scale(0.5);
    let chern = sekigawa_div_chern(c);
    let res = &lc - &chern;
    sample(&[&res], &[&lc, &chern])
}

/// Sekigawa's pointwise identity reorganised around `-2⟨B, Rc^{1,1}⟩`, in
/// the form this implementation validates by refinement:
///
/// ```text
/// -2⟨B, Rc^{1,1}⟩ = |Rc^{2002}|² - (|W^aa|² - κ²/32) - ¼|P^{2002}|² - ¼|B²|²
///                   - 1/16 |B¹|² + div_D + 2 div_J - Δ|τ|²
/// ```
///
/// where `div_D = g^{uv} D_u[(D_v ω^{ij}) Q_{ij}]` (evaluated in the Chern
/// form of `sekigawa_div_chern`), `div_J = g^{pi} g^{qa} D_i[J_p^j D_a[J_q^b
/// Rc^{2002}_{jb}]]`, `W^aa` is the Weyl block mapping anti-invariant
/// 2-forms to anti-invariant 2-forms, and `κ = W(ω⁻¹, ω⁻¹)` its trace part.
/// The combination `|W^aa|² - κ²/32` vanishes identically on Kähler
/// 4-manifolds, as the identity forces (every other term vanishes with τ).
fn ev_sekigawa(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let rc2002 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::TwoZero).unwrap();
    let p2002 = c.ak.project_type(&geo.p_form, (0, 1), ProjKind::TwoZero).unwrap();
    let rc11 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::OneOne).unwrap();

    let lhs = c.ak.inner(&geo.b, &rc11).scale(-2.0);
    let n_rc = c.ak.norm2(&rc2002);
    let n_w = sekigawa_weyl_term(c).scale(0.5);
    let n_p = c.ak.norm2(&p2002).scale(0.25);
    let n_b2 = c.ak.norm2(&geo.b2).scale(0.25);
    let n_b1 = c.ak.norm2(&geo.b1).scale(1.0 / 16.0);
    let div_d = sekigawa_div_chern(c).scale(2.0);
    let div_j = sekigawa_div_j(c);
    let lap = chern_laplacian_scalar(&geo.tau_norm2, c.ak, &geo.conn.upsilon, &Deriv::Fd);

    let rhs = &(&(&(&n_rc - &n_w) - &(&n_p + &n_b2)) - &n_b1)
        + &(&(&div_d + &div_j.scale(2.0)) - &lap);
    let res = &lhs - &rhs;
    sample(
        &[&res],
        &[&lhs, &n_rc, &n_w, &n_p, &n_b2, &n_b1, &div_d, &div_j, &lap],
    )
}

/// The anti-invariant Weyl block entering the Sekigawa identity:
/// `2 (|W^aa|² - κ²/32)` with `W^aa` the both-pairs anti-invariant
/// projection and `κ = W_{ijkl} ω^{ij} ω^{kl}` (inverse components).
fn sekigawa_weyl_term(c: &EvalCtx) -> TensorField {
    let w_anti_first = c.ak.project_type(&c.geo.weyl, (0, 1), ProjKind::TwoZero).unwrap();
    let w_aa = c.ak.project_type(&w_anti_first, (2, 3), ProjKind::TwoZero).unwrap();
    let kappa = einsum("ij,kl,ijkl->", &[&c.ak.omega_inv, &c.ak.omega_inv, &c.geo.weyl]);
    let kappa2 = einsum(",->", &[&kappa, &kappa]);
    (&c.ak.norm2(&w_aa) - &kappa2.scale(1.0 / 32.0)).scale(2.0)
}

/// `g^{pi} g^{qa} D_i [ J_p^j D_a [ J_q^b Rc^{2002}_{jb} ] ]`.
fn sekigawa_div_j(c: &EvalCtx) -> TensorField {
    let geo = c.geo;
    let rc2002 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::TwoZero).unwrap();
    let inner = einsum("qb,jb->qj", &[&c.ak.j, &rc2002]);
    let d_inner = covariant_derivative(&inner, &geo.conn.gamma, &Deriv::Fd); // (a, q, j)
    let mid = einsum("pj,aqj->apq", &[&c.ak.j, &d_inner]);
    let d_mid = covariant_derivative(&mid, &geo.conn.gamma, &Deriv::Fd); // (i, a, p, q)
    einsum("pi,qa,iapq->", &[&c.ak.g_inv, &c.ak.g_inv, &d_mid])
}

// ---------------------------------------------------------------------------
// flow-velocity identities
// ---------------------------------------------------------------------------

fn ev_prop_a(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let jdot1 = einsum("re,rkei->ik", &[&c.ak.omega_inv, &geo.nabla_tau_up]).scale(4.0);
    let p2002 = c.ak.project_type(&geo.p_form, (0, 1), ProjKind::TwoZero).unwrap();
    let rc2002 = c.ak.project_type(&geo.rc, (0, 1), ProjKind::TwoZero).unwrap();
    let jdot2 = &einsum("ie,ew,wk->ik", &[&c.ak.j, &rc2002, &c.ak.g_inv]).scale(2.0)
        - &einsum("iw,wk->ik", &[&p2002, &c.ak.g_inv]);
    let res = &jdot1 - &jdot2;
    sample(&[&res], &[&jdot1, &jdot2])
}

fn ev_scf_gdot(c: &EvalCtx) -> ResidualSample {
    let geo = c.geo;
    let gdot = &einsum("ra,raij->ij", &[&c.ak.g_inv, &geo.nabla_tau_low]).scale(4.0)
        - &einsum("is,js->ij", &[&c.ak.j, &geo.p_form]);
    let ev_form = &geo.b.scale(2.0) - &geo.rc.scale(2.0);
    let jdot = einsum("re,rkei->ik", &[&c.ak.omega_inv, &geo.nabla_tau_up]).scale(4.0);
    let chain = &einsum("is,js->ij", &[&jdot, &c.ak.omega])
        - &einsum("is,js->ij", &[&c.ak.j, &geo.p_form]);
    let res = [
        &gdot - &ev_form,
        &gdot - &chain,
        &gdot - &einsum("ji->ij", &[&gdot]),
    ];
    let refs: Vec<&TensorField> = res.iter().collect();
    sample(&refs, &[&gdot, &ev_form])
}

// ---------------------------------------------------------------------------
// runner
// ---------------------------------------------------------------------------

/// Evaluate one identity in the context of a structure and its cache,
/// applying backend and dimension gating.
pub fn evaluate(
    check: &IdentityCheck,
    ak: &AlmostKahler,
    geo: &GeometryCache,
    backend: BackendKind,
) -> IdentityResult {
    if check.dim4_only && ak.dim() != 4 {
        return skipped(check, "only defined in dimension 4");
    }
    if backend == BackendKind::ExactJet && check.jet_class == JetClass::ThirdOrder {
        return skipped(check, "needs jets beyond second order");
    }
    let ctx = EvalCtx { ak, geo };
    let s = (check.eval)(&ctx);
    let relative = s.relative();
    let (status, tolerance) = match backend {
        BackendKind::ExactJet => {
            let tol = EXACT_REL_TOL;
            (
                if relative.is_finite() && relative <= tol {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                Some(tol),
            )
        }
        // FD residuals carry the discretization error; pass means finite,
        // refinement order is asserted by the convergence study instead.
        BackendKind::FiniteDifference => (
            if s.max_abs.is_finite() {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            None,
        ),
    };
    IdentityResult {
        id: check.id,
        description: check.description,
        jet_class: check.jet_class,
        status,
        max_abs: s.max_abs,
        l2_mean: s.l2_mean,
        scale: s.scale,
        relative,
        tolerance,
    }
}

fn skipped(check: &IdentityCheck, reason: &str) -> IdentityResult {
    IdentityResult {
        id: check.id,
        description: check.description,
        jet_class: check.jet_class,
        status: CheckStatus::Skipped(String::from(reason)),
        max_abs: 0.0,
        l2_mean: 0.0,
        scale: 0.0,
        relative: 0.0,
        tolerance: None,
    }
}

/// Run all (or a selection of) registered identities, in registry order.
pub fn run_all(
    ak: &AlmostKahler,
    geo: &GeometryCache,
    backend: BackendKind,
    selection: Option<&[&str]>,
) -> Vec<IdentityResult> {
    registry()
        .iter()
        .filter(|c| selection.map_or(true, |sel| sel.contains(&c.id)))
        .map(|c| evaluate(c, ak, geo, backend))
        .collect()
}

/// Result of refining one identity across a doubling sequence of grids.
#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub id: &'static str,
    pub resolutions: Vec<usize>,
    pub max_abs: Vec<f64>,
    pub relative: Vec<f64>,
    /// `log2` ratio of successive relative residuals.
    pub orders: Vec<f64>,
    /// Residuals sat at the round-off floor on every grid, so no meaningful
    /// order can be measured (flat-torus case).
    pub at_machine_precision: bool,
}

/// Empirical convergence order of selected identities under grid refinement.
/// `make` produces the structure and cache at a given leading resolution.
pub fn convergence_study(
    make: &dyn Fn(usize) -> (AlmostKahler, GeometryCache),
    ids: &[&str],
    resolutions: &[usize],
) -> Vec<ConvergenceResult> {
    let reg = registry();
    let checks: Vec<&IdentityCheck> = ids
        .iter()
        .map(|id| {
            reg.iter()
                .find(|c| c.id == *id)
                .unwrap_or_else(|| panic!("unknown identity id {id}"))
        })
        .collect();
    let mut samples: Vec<Vec<ResidualSample>> = alloc::vec![Vec::new(); checks.len()];
    for &n in resolutions {
        let (ak, geo) = make(n);
        let ctx = EvalCtx { ak: &ak, geo: &geo };
        for (k, c) in checks.iter().enumerate() {
            samples[k].push((c.eval)(&ctx));
        }
    }
    checks
        .iter()
        .zip(samples)
        .map(|(c, ss)| {
            let max_abs: Vec<f64> = ss.iter().map(|s| s.max_abs).collect();
            let relative: Vec<f64> = ss.iter().map(|s| s.relative()).collect();
            let at_floor = relative.iter().all(|&r| r < 1e-13);
            let orders = if at_floor {
                Vec::new()
            } else {
                relative
                    .windows(2)
                    .map(|w| libm::log2(w[0] / w[1]))
                    .collect()
            };
            ConvergenceResult {
                id: c.id,
                resolutions: resolutions.to_vec(),
                max_abs,
                relative,
                orders,
                at_machine_precision: at_floor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::structure::FamilyParams;
    use alloc::sync::Arc;

    #[test]
    fn registry_covers_required_ids() {
        let reg = registry();
        for id in REQUIRED_IDS {
            assert!(
                reg.iter().any(|c| c.id == *id),
                "registry is missing {id}"
            );
        }
        assert!(reg.len() >= 30);
        // ids unique
        for (i, a) in reg.iter().enumerate() {
            for b in &reg[i + 1..] {
                assert_ne!(a.id, b.id);
            }
        }
    }

    #[test]
    fn flat_torus_registry_is_at_machine_precision() {
        let grid = Arc::new(PeriodicGrid::new(4, &[8, 1, 1, 1], 4).unwrap());
        let ak = AlmostKahler::<f64>::flat(&grid);
        let geo = GeometryCache::build(&ak, &Deriv::Fd);
        for r in run_all(&ak, &geo, BackendKind::FiniteDifference, None) {
            assert!(
                r.max_abs <= 1e-12,
                "{} residual {} on the flat torus",
                r.id,
                r.max_abs
            );
        }
    }

    #[test]
    fn flat_convergence_reports_machine_precision_sentinel() {
        let make = |n: usize| {
            let grid = Arc::new(PeriodicGrid::new(4, &[n, 1, 1, 1], 4).unwrap());
            let ak = AlmostKahler::<f64>::flat(&grid);
            let geo = GeometryCache::build(&ak, &Deriv::Fd);
            (ak, geo)
        };
        let res = convergence_study(&make, &["SCAL-ID", "BIANCHI-2"], &[8, 16]);
        for r in res {
            assert!(r.at_machine_precision, "{} not at floor", r.id);
            assert!(r.orders.is_empty());
        }
    }

    #[test]
    fn run_all_is_deterministic() {
        let grid = Arc::new(PeriodicGrid::new(4, &[16, 1, 1, 1], 4).unwrap());
        let params = FamilyParams::default_for_dim(4, 0.1);
        let ak = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let geo = GeometryCache::build(&ak, &Deriv::Fd);
        let a = run_all(&ak, &geo, BackendKind::FiniteDifference, None);
        let b = run_all(&ak, &geo, BackendKind::FiniteDifference, None);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.max_abs.to_bits(), y.max_abs.to_bits());
            assert_eq!(x.l2_mean.to_bits(), y.l2_mean.to_bits());
        }
    }
}
