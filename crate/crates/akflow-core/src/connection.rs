//! Levi-Civita and Chern connections of an almost-Kähler structure.
//!
//! All connection coefficients use the index layout `(k; i, j)` of
//! `Γ^k_{ij}`: upper output slot first, then the derivative direction, then
//! the acted-on index. The Chern connection is `∇ = ∂ + Υ` with
//! `Υ = Γ - Θ`, `Θ^k_{ij} = -½ (D_i J_p^k) J_j^p`, and its torsion is
//! `τ^k_{ij} = Υ^k_{ij} - Υ^k_{ji}`, lowered as `τ_{ijk} = τ^l_{ij} g_{lk}`.

use crate::field::{einsum, Lower, TensorField, Upper};
use crate::scalar::{Deriv, Scalar};
use crate::structure::AlmostKahler;

/// Output of the Chern-connection construction.
#[derive(Debug, Clone)]
pub struct ConnectionData<S: Scalar = f64> {
    /// Christoffel symbols `Γ^k_{ij}`, layout `(k, i, j)`.
    pub gamma: TensorField<S>,
    /// Negative contorsion `Θ^k_{ij} = -½ (D_i J_p^k) J_j^p`.
    pub theta: TensorField<S>,
    /// Chern coefficients `Υ = Γ - Θ`.
    pub upsilon: TensorField<S>,
    /// Nijenhuis tensor `N^i_{jk}`, layout `(i, j, k)`.
    pub nijenhuis: TensorField<S>,
    /// Chern torsion `τ^k_{ij}`, layout `(k, i, j)`.
    pub tau_up: TensorField<S>,
    /// Lowered torsion `τ_{ijk}`.
    pub tau_low: TensorField<S>,
    /// Covariant `D_i J_p^k` (Levi-Civita), layout `(i, p, k)`.
    pub dj_cov: TensorField<S>,
    /// Covariant `D_i ω_{jk}` (Levi-Civita), layout `(i, j, k)`.
    pub dw_cov: TensorField<S>,
    /// Levi-Civita `D g` (identically zero by the Koszul cancellation;
    /// kept as an explicit residual of the pipeline).
    pub dg_cov: TensorField<S>,
    /// Chern derivatives of the structure fields, the parallelism residuals.
    pub nabla_g: TensorField<S>,
    pub nabla_omega: TensorField<S>,
    pub nabla_j: TensorField<S>,
}

/// Christoffel symbols by the Koszul formula
/// `Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} - ∂_l g_{ij})`.
pub fn levi_civita<S: Scalar>(ak: &AlmostKahler<S>, d: &Deriv) -> TensorField<S> {
    let dg = d.grad(&ak.g);
    let t1 = einsum("kl,ijl->kij", &[&ak.g_inv, &dg]);
    let t2 = einsum("kl,jil->kij", &[&ak.g_inv, &dg]);
    let t3 = einsum("kl,lij->kij", &[&ak.g_inv, &dg]);
    (&(&t1 + &t2) - &t3).scale(0.5)
}

/// Coordinate Nijenhuis tensor
/// `N^i_{jk} = 2 (J_j^p ∂_p J_k^i - J_k^p ∂_p J_j^i - J_p^i ∂_j J_k^p + J_p^i ∂_k J_j^p)`.
/// Depends on the almost complex structure alone.
pub fn nijenhuis<S: Scalar>(j: &TensorField<S>, d: &Deriv) -> TensorField<S> {
    let dj = d.grad(j);
    let t1 = einsum("jp,pki->ijk", &[j, &dj]);
    let t2 = einsum("kp,pji->ijk", &[j, &dj]);
    let t3 = einsum("pi,jkp->ijk", &[j, &dj]);
    let t4 = einsum("pi,kjp->ijk", &[j, &dj]);
    (&(&t1 - &t2) - &(&t3 - &t4)).scale(2.0)
}

/// Covariant derivative of an arbitrary tensor field with respect to a
/// connection in `(k; i, j)` layout; prepends the direction slot, adds one
/// `+Υ`/`-Υ` correction per upper/lower slot.
pub fn covariant_derivative<S: Scalar>(
    f: &TensorField<S>,
    conn: &TensorField<S>,
    d: &Deriv,
) -> TensorField<S> {
    let grid = f.grid().clone();
    let dim = grid.dim();
    let mut out = d.grad(f);
    let rank = f.rank();
    let comps = f.comps();
    let conn_raw = conn.raw();
    let ccomps = dim * dim * dim;
    let strides: alloc::vec::Vec<usize> =
        (0..rank).map(|q| dim.pow((rank - 1 - q) as u32)).collect();
    for p in 0..grid.points() {
        let fbase = p * comps;
        let cbase = p * ccomps;
        for r in 0..dim {
            let obase = (p * dim + r) * comps;
            for c in 0..comps {
                let mut corr = S::zero();
                for q in 0..rank {
                    let st = strides[q];
                    let iq = (c / st) % dim;
                    let c0 = c - iq * st;
                    match f.variance()[q] {
                        Upper => {
                            for s in 0..dim {
                                corr = corr
                                    + conn_raw[cbase + (iq * dim + r) * dim + s]
                                        * f.raw()[fbase + c0 + s * st];
                            }
                        }
                        Lower => {
                            for s in 0..dim {
                                corr = corr
                                    - conn_raw[cbase + (s * dim + r) * dim + iq]
                                        * f.raw()[fbase + c0 + s * st];
                            }
                        }
                    }
                }
                out.raw_mut()[obase + c] = out.raw_mut()[obase + c] + corr;
            }
        }
    }
    out
}

/// Build the full Chern connection data.
pub fn chern<S: Scalar>(ak: &AlmostKahler<S>, d: &Deriv) -> ConnectionData<S> {
    let gamma = levi_civita(ak, d);
    let dj_cov = covariant_derivative(&ak.j, &gamma, d);
    let dw_cov = covariant_derivative(&ak.omega, &gamma, d);
    let theta = einsum("ipk,jp->kij", &[&dj_cov, &ak.j]).scale(-0.5);
    let upsilon = &gamma - &theta;
    let tau_up = &upsilon - &einsum("kji->kij", &[&upsilon]);
    let tau_low = einsum("lij,lk->ijk", &[&tau_up, &ak.g]);
    let nijen = nijenhuis(&ak.j, d);
    let dg_cov = covariant_derivative(&ak.g, &gamma, d);
    let nabla_g = covariant_derivative(&ak.g, &upsilon, d);
    let nabla_omega = covariant_derivative(&ak.omega, &upsilon, d);
    let nabla_j = covariant_derivative(&ak.j, &upsilon, d);
    ConnectionData {
        gamma,
        theta,
        upsilon,
        nijenhuis: nijen,
        tau_up,
        tau_low,
        dj_cov,
        dw_cov,
        dg_cov,
        nabla_g,
        nabla_omega,
        nabla_j,
    }
}

impl ConnectionData<crate::scalar::Jet> {
    pub fn values(&self) -> ConnectionData<f64> {
        ConnectionData {
            gamma: self.gamma.map(|v| v.v),
            theta: self.theta.map(|v| v.v),
            upsilon: self.upsilon.map(|v| v.v),
            nijenhuis: self.nijenhuis.map(|v| v.v),
            tau_up: self.tau_up.map(|v| v.v),
            tau_low: self.tau_low.map(|v| v.v),
            dj_cov: self.dj_cov.map(|v| v.v),
            dw_cov: self.dw_cov.map(|v| v.v),
            dg_cov: self.dg_cov.map(|v| v.v),
            nabla_g: self.nabla_g.map(|v| v.v),
            nabla_omega: self.nabla_omega.map(|v| v.v),
            nabla_j: self.nabla_j.map(|v| v.v),
        }
    }
}
