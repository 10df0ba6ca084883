//! Riemann and Chern curvature tensors, their traces, and the derived
//! quantities entering symplectic curvature flow.
//!
//! Curvature convention, applied to either set of connection coefficients:
//!
//! ```text
//!     R^l_{ijk} = ∂_i C^l_{jk} - ∂_j C^l_{ik} + C^l_{is} C^s_{jk} - C^l_{js} C^s_{ik}
//! ```
//!
//! lowered as `R_{ijkl} = R^m_{ijk} g_{ml}`. Traces follow the almost-Kähler
//! literature: Chern-Ricci `P_{ab} = ω^{cd} Ω_{abcd}`, twisted traces
//! `S_{cd} = ω^{ab} Ω_{abcd}`, `Q_{cd} = ω^{ab} Rm_{abcd}`, `V_{ab} = Ω^r_{rab}`,
//! Chern scalar `ρ = ω^{ba} P_{ab}`, Ricci `Rc_{jk} = g^{il} Rm_{ijkl}`, and
//! star-scalar `R* = ½ ω^{ji} ω^{kl} Rm_{ijkl}`.

use crate::connection::{chern, covariant_derivative, ConnectionData};
#[allow(unused_imports)]
use crate::field::{einsum, Lower, TensorField, Upper};
use crate::scalar::{Deriv, Jet, Scalar};
use crate::structure::AlmostKahler;

/// Curvature of a connection given in `(k; i, j)` coefficient layout,
/// returned fully lowered as `R_{ijkl}`.
pub fn curvature_of<S: Scalar>(
    coeffs: &TensorField<S>,
    g: &TensorField<S>,
    d: &Deriv,
) -> TensorField<S> {
    let dc = d.grad(coeffs); // (r, m, i, j) = ∂_r C^m_{ij}
    let t1 = einsum("imjk->mijk", &[&dc]);
    let t2 = einsum("jmik->mijk", &[&dc]);
    let q1 = einsum("mis,sjk->mijk", &[coeffs, coeffs]);
    let q2 = einsum("mjs,sik->mijk", &[coeffs, coeffs]);
    let up = &(&t1 - &t2) + &(&q1 - &q2);
    einsum("mijk,ml->ijkl", &[&up, g])
}

/// Derived curvature quantities of one structure. Everything is pointwise
/// data; all discrete differentiation happened on the way in, so exporting
/// the jet build's values yields exact fields for the identity checks.
#[derive(Debug, Clone)]
pub struct GeometryCache<S: Scalar = f64> {
    pub conn: ConnectionData<S>,
    /// Chern curvature `Ω_{ijkl}`.
    pub omega_curv: TensorField<S>,
    /// Riemann curvature `Rm_{ijkl}`.
    pub rm: TensorField<S>,
    /// Chern-Ricci form `P_{ab}`.
    pub p_form: TensorField<S>,
    /// Twisted Chern-Ricci `S_{cd}`.
    pub s_form: TensorField<S>,
    /// Twisted Ricci `Q_{cd}`.
    pub q_form: TensorField<S>,
    /// First-slot trace `V_{ab} = Ω^r_{rab}`.
    pub v_form: TensorField<S>,
    /// Chern scalar curvature `ρ`.
    pub rho: TensorField<S>,
    /// Ricci tensor.
    pub rc: TensorField<S>,
    /// Riemannian scalar curvature.
    pub scal: TensorField<S>,
    /// Star-scalar curvature `R*`.
    pub rstar: TensorField<S>,
    /// Chern covariant torsion derivative `∇_r τ_{ijk}`.
    pub nabla_tau_low: TensorField<S>,
    /// `∇_r τ^k_{ij}`, layout `(r, k, i, j)`.
    pub nabla_tau_up: TensorField<S>,
    /// Quadratic torsion tensors of the metric evolution (τ-path).
    pub b1: TensorField<S>,
    pub b2: TensorField<S>,
    pub b: TensorField<S>,
    /// Curvature-gap tensor `T_{bdac}`.
    pub t_tensor: TensorField<S>,
    /// Weyl tensor in the same index convention as `rm`.
    pub weyl: TensorField<S>,
    /// `φ_{ij} = J_i^s ⟨D_s ω, D_j ω⟩`-style quadratic (definition path).
    pub phi: TensorField<S>,
    /// Rough Laplacian `Δ_D ω` (definition path).
    pub lap_omega: TensorField<S>,
    /// Rough Laplacian `Δ_D J`, layout `(p, k)`.
    pub lap_j: TensorField<S>,
    /// Lowered Nijenhuis tensor `N_{ijk}`.
    pub nijen_low: TensorField<S>,
    /// `|τ|²` and `|∇τ|²` scalar fields.
    pub tau_norm2: TensorField<S>,
    pub nabla_tau_norm2: TensorField<S>,
    /// Probe vector field `X^i = J_1^i` with its first and second Chern
    /// derivatives, for the curvature-commutator check.
    pub probe: TensorField<S>,
    pub nabla_probe: TensorField<S>,
    pub nabla2_probe: TensorField<S>,
}

impl<S: Scalar> GeometryCache<S> {
    pub fn build(ak: &AlmostKahler<S>, d: &Deriv) -> Self {
        let conn = chern(ak, d);
        Self::from_connection(ak, conn, d)
    }

    pub fn from_connection(ak: &AlmostKahler<S>, conn: ConnectionData<S>, d: &Deriv) -> Self {
        let g = &ak.g;
        let ginv = &ak.g_inv;
        let winv = &ak.omega_inv;
        let j = &ak.j;

        let omega_curv = curvature_of(&conn.upsilon, g, d);
        let rm = curvature_of(&conn.gamma, g, d);

        let p_form = einsum("cd,abcd->ab", &[winv, &omega_curv]);
        let s_form = einsum("ab,abcd->cd", &[winv, &omega_curv]);
        let q_form = einsum("ab,abcd->cd", &[winv, &rm]);
        let v_form = einsum("re,rabe->ab", &[ginv, &omega_curv]);
        let rho = einsum("ba,ab->", &[winv, &p_form]);
        let rc = einsum("il,ijkl->jk", &[ginv, &rm]);
        let scal = einsum("jk,jk->", &[ginv, &rc]);
        let rstar = einsum("ji,kl,ijkl->", &[winv, winv, &rm]).scale(0.5);

        let nabla_tau_low = covariant_derivative(&conn.tau_low, &conn.upsilon, d);
        let nabla_tau_up = covariant_derivative(&conn.tau_up, &conn.upsilon, d);

        let tl = &conn.tau_low;
        let b1 = einsum("kl,wv,vki,wlj->ij", &[ginv, ginv, tl, tl]).scale(4.0);
        let b2 = einsum("kl,wv,vik,wjl->ij", &[ginv, ginv, tl, tl]).scale(4.0);
        let b = &b1.scale(0.25) - &b2.scale(0.5);

        let nt = &nabla_tau_low;
        let grad_part = &(&einsum("abdc->bdac", &[nt]) + &einsum("bcad->bdac", &[nt]))
            + &(&einsum("cdba->bdac", &[nt]) + &einsum("dacb->bdac", &[nt]));
        let quad_part = &(&einsum("se,asd,bce->bdac", &[ginv, tl, tl])
            + &einsum("se,bsc,dae->bdac", &[ginv, tl, tl]))
            + &(&einsum("se,dsc,abe->bdac", &[ginv, tl, tl])
                + &einsum("se,asb,cde->bdac", &[ginv, tl, tl]));
        let t_tensor = &grad_part - &quad_part;

        // Weyl by the standard dimension-n decomposition, with the sign of
        // the Kulkarni-Nomizu term matching this Rm convention (the trace
        // g^{il} W_{ijkl} then cancels identically).
        let n = ak.dim() as f64;
        let schouten = (&rc - &einsum(",ij->ij", &[&scal, g]).scale(1.0 / (2.0 * (n - 1.0))))
            .scale(1.0 / (n - 2.0));
        let kn = &(&einsum("ik,jl->ijkl", &[g, &schouten]) - &einsum("il,jk->ijkl", &[g, &schouten]))
            + &(&einsum("jl,ik->ijkl", &[g, &schouten]) - &einsum("jk,il->ijkl", &[g, &schouten]));
        let weyl = &rm + &kn;

        let dw = &conn.dw_cov;
        let phi = einsum("is,ac,bd,sab,jcd->ij", &[j, ginv, ginv, dw, dw]);

        let ddw = covariant_derivative(dw, &conn.gamma, d);
        let lap_omega = einsum("ab,abij->ij", &[ginv, &ddw]);
        let ddj = covariant_derivative(&conn.dj_cov, &conn.gamma, d);
        let lap_j = einsum("ab,abpk->pk", &[ginv, &ddj]);

        let nijen_low = einsum("lij,lk->ijk", &[&conn.nijenhuis, g]);
        let tau_norm2 = ak.norm2(tl);
        let nabla_tau_norm2 = ak.norm2(&nabla_tau_low);

        // X^i = J_1^i, a genuine vector field with jets wherever J has them
        let dim = ak.dim();
        let probe = TensorField::from_fn(ak.grid(), &[Upper], |p, idx| {
            j.get(p, &[1.min(dim - 1), idx[0]])
        });
        let nabla_probe = covariant_derivative(&probe, &conn.upsilon, d);
        let nabla2_probe = covariant_derivative(&nabla_probe, &conn.upsilon, d);

        Self {
            conn,
            omega_curv,
            rm,
            p_form,
            s_form,
            q_form,
            v_form,
            rho,
            rc,
            scal,
            rstar,
            nabla_tau_low,
            nabla_tau_up,
            b1,
            b2,
            b,
            t_tensor,
            weyl,
            phi,
            lap_omega,
            lap_j,
            nijen_low,
            tau_norm2,
            nabla_tau_norm2,
            probe,
            nabla_probe,
            nabla2_probe,
        }
    }
}

impl GeometryCache<Jet> {
    /// Export principal values for the identity checks; every field in the
    /// cache needs at most second-order jets, so the values are exact.
    pub fn values(&self) -> GeometryCache<f64> {
        let v = |f: &TensorField<Jet>| f.map(|x| x.v);
        GeometryCache {
            conn: self.conn.values(),
            omega_curv: v(&self.omega_curv),
            rm: v(&self.rm),
            p_form: v(&self.p_form),
            s_form: v(&self.s_form),
            q_form: v(&self.q_form),
            v_form: v(&self.v_form),
            rho: v(&self.rho),
            rc: v(&self.rc),
            scal: v(&self.scal),
            rstar: v(&self.rstar),
            nabla_tau_low: v(&self.nabla_tau_low),
            nabla_tau_up: v(&self.nabla_tau_up),
            b1: v(&self.b1),
            b2: v(&self.b2),
            b: v(&self.b),
            t_tensor: v(&self.t_tensor),
            weyl: v(&self.weyl),
            phi: v(&self.phi),
            lap_omega: v(&self.lap_omega),
            lap_j: v(&self.lap_j),
            nijen_low: v(&self.nijen_low),
            tau_norm2: v(&self.tau_norm2),
            nabla_tau_norm2: v(&self.nabla_tau_norm2),
            probe: v(&self.probe),
            nabla_probe: v(&self.nabla_probe),
            nabla2_probe: v(&self.nabla2_probe),
        }
    }
}

/// Curvature of a bare metric field (no almost-complex structure); used to
/// sanity-check the Riemann pipeline against closed-form metrics.
pub struct MetricCurvature<S: Scalar = f64> {
    pub gamma: TensorField<S>,
    pub rm: TensorField<S>,
    pub rc: TensorField<S>,
    pub scal: TensorField<S>,
}

pub fn metric_curvature<S: Scalar>(g: &TensorField<S>, d: &Deriv) -> MetricCurvature<S> {
    let ginv = crate::linalg::field_inverse(g, [Upper, Upper]).expect("metric must be invertible");
    let dg = d.grad(g);
    let t1 = einsum("kl,ijl->kij", &[&ginv, &dg]);
    let t2 = einsum("kl,jil->kij", &[&ginv, &dg]);
    let t3 = einsum("kl,lij->kij", &[&ginv, &dg]);
    let gamma = (&(&t1 + &t2) - &t3).scale(0.5);
    let rm = curvature_of(&gamma, g, d);
    let rc = einsum("il,ijkl->jk", &[&ginv, &rm]);
    let scal = einsum("jk,jk->", &[&ginv, &rc]);
    MetricCurvature { gamma, rm, rc, scal }
}

/// Chern Laplacian of a scalar field: `Δf = g^{ij}(∂_i ∂_j f - Υ^s_{ij} ∂_s f)`.
pub fn chern_laplacian_scalar<S: Scalar>(
    f: &TensorField<S>,
    ak: &AlmostKahler<S>,
    upsilon: &TensorField<S>,
    d: &Deriv,
) -> TensorField<S> {
    let df = d.grad(f);
    let ddf = d.grad(&df);
    let hess = einsum("ij,ji->", &[&ak.g_inv, &ddf]);
    let corr = einsum("ij,sij,s->", &[&ak.g_inv, upsilon, &df]);
    &hess - &corr
}
