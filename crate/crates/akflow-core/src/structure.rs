//! Almost-Kähler structures `(g, J, ω)` on a periodic grid.
//!
//! Two constructions are provided: the flat Kähler torus, and a strictly
//! almost-Kähler "conjugation family" `J(x) = S J₀ S⁻¹` with
//! `S = exp(ε sin(k x_axis) A)` for a generator `A ∈ sp(2n, ℝ)`. The family
//! keeps `ω = ω₀` constant, so closedness is exact, and carries closed-form
//! jets: built over [`Jet`] scalars it yields exact first and second
//! derivatives for the exact-jet backend.
//!
//! Index conventions (paper-facing): `J` is stored as `J_i^a` with slot
//! order `(i, a)`, `ω` and `g` as `ω_{ij}`, `g_{ij}`; inverses satisfy
//! `ω^{ac} ω_{cb} = δ^a_b` with the first slot as the row.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{AkError, Result};
use crate::field::{einsum, Lower, TensorField, Upper, Variance};
use crate::grid::PeriodicGrid;
use crate::linalg::{field_inverse, mat_exp, mat_mul, sym_eig_min};
use crate::scalar::{Deriv, Jet, Scalar};

/// Standard block almost complex structure as an operator matrix
/// (`row = output index`): maps `e_{2k} -> e_{2k+1} -> -e_{2k}`.
pub fn standard_j_operator(dim: usize, orientation: f64) -> Vec<f64> {
    let mut m = alloc::vec![0.0; dim * dim];
    for k in 0..dim / 2 {
        m[(2 * k + 1) * dim + 2 * k] = orientation;
        m[2 * k * dim + (2 * k + 1)] = -orientation;
    }
    m
}

/// Standard symplectic form `ω₀ = Σ dx^{2k} ∧ dx^{2k+1}` as the matrix
/// `ω_{ij}` (row = first slot).
pub fn standard_omega(dim: usize) -> Vec<f64> {
    let mut m = alloc::vec![0.0; dim * dim];
    for k in 0..dim / 2 {
        m[2 * k * dim + (2 * k + 1)] = 1.0;
        m[(2 * k + 1) * dim + 2 * k] = -1.0;
    }
    m
}

/// Parameters of the conjugation family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    /// Profile amplitude ε.
    pub eps: f64,
    /// Grid axis the profile varies along.
    pub axis: usize,
    /// Harmonic of the profile, `sin(freq · x_axis)`.
    pub freq: f64,
    /// Generator `A` as a row-major operator matrix; must satisfy
    /// `Aᵀ ω₀ + ω₀ A = 0`.
    pub generator: Vec<f64>,
}

impl FamilyParams {
    /// Default generator `A = ω₀⁻¹ H` with `H = e₁⊗e₃ + e₃⊗e₁` (symmetric,
    /// hence `A ∈ sp`); for dim 2 the rank-one `H = e₁⊗e₁` is used.
    pub fn default_for_dim(dim: usize, eps: f64) -> Self {
        let mut h = alloc::vec![0.0; dim * dim];
        if dim >= 4 {
            h[2] = 1.0; // H[0][2]
            h[2 * dim] = 1.0; // H[2][0]
        } else {
            h[0] = 1.0;
        }
        let w = standard_omega(dim);
        let winv = crate::linalg::mat_inverse(&w, dim).unwrap();
        let a = mat_mul(&winv, &h, dim);
        Self {
            eps,
            axis: 0,
            freq: 1.0,
            generator: a,
        }
    }

    /// Residual of the symplectic Lie-algebra condition `Aᵀ ω₀ + ω₀ A`.
    pub fn symplectic_residual(&self, dim: usize) -> f64 {
        let w = standard_omega(dim);
        let a = &self.generator;
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for c in 0..dim {
                    s += a[c * dim + i] * w[c * dim + j] + w[i * dim + c] * a[c * dim + j];
                }
                worst = worst.max(libm::fabs(s));
            }
        }
        worst
    }
}

/// Projection kinds for the `(1,1)` / `(2,0)+(0,2)` type decomposition of a
/// 2-tensor slot pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjKind {
    OneOne,
    TwoZero,
}

#[derive(Debug, Clone)]
pub struct AlmostKahler<S: Scalar = f64> {
    grid: Arc<PeriodicGrid>,
    pub g: TensorField<S>,
    pub j: TensorField<S>,
    pub omega: TensorField<S>,
    pub g_inv: TensorField<S>,
    pub omega_inv: TensorField<S>,
}

impl<S: Scalar> AlmostKahler<S> {
    /// Flat Kähler torus: `g = δ`, `J = J₀`, `ω = ω₀`, all constant.
    pub fn flat(grid: &Arc<PeriodicGrid>) -> Self {
        let dim = grid.dim();
        let orientation = pinned_orientation(dim);
        let j_op = standard_j_operator(dim, orientation);
        let w = standard_omega(dim);
        let j_store: Vec<S> = transpose_mat(&j_op, dim)
            .into_iter()
            .map(S::from_f64)
            .collect();
        let w_store: Vec<S> = w.iter().map(|&v| S::from_f64(v)).collect();
        let j = TensorField::constant_matrix(grid, [Lower, Upper], &j_store);
        let omega = TensorField::constant_matrix(grid, [Lower, Lower], &w_store);
        Self::assemble(grid.clone(), j, omega).expect("flat structure is nondegenerate")
    }

    /// Conjugation family `J = exp(h A) J₀ exp(-h A)`, `h = ε sin(k x_axis)`,
    /// with constant `ω = ω₀` and `g` derived from `g_{ij} = J_i^s ω_{js}`.
    pub fn conjugation_family(grid: &Arc<PeriodicGrid>, params: &FamilyParams) -> Result<Self> {
        let dim = grid.dim();
        if params.generator.len() != dim * dim {
            return Err(AkError::Config(format!(
                "generator must be {dim}x{dim}, got {} entries",
                params.generator.len()
            )));
        }
        if params.axis >= dim {
            return Err(AkError::Config(format!(
                "profile axis {} out of range for dimension {dim}",
                params.axis
            )));
        }
        let sp_res = params.symplectic_residual(dim);
        if sp_res > 1e-12 {
            return Err(AkError::NotSymplectic { residual: sp_res });
        }
        let orientation = pinned_orientation(dim);
        let j0_op: Vec<S> = standard_j_operator(dim, orientation)
            .into_iter()
            .map(S::from_f64)
            .collect();
        let a_op: Vec<S> = params.generator.iter().map(|&v| S::from_f64(v)).collect();
        let w_mat: Vec<S> = standard_omega(dim).into_iter().map(S::from_f64).collect();
        let eps = S::from_f64(params.eps);
        let freq = S::from_f64(params.freq);

        let mut j = TensorField::zeros(grid, &[Lower, Upper]);
        let comps = dim * dim;
        for p in 0..grid.points() {
            let x = S::coord(grid.coord(p, params.axis));
            let h = eps * (freq * x).sin();
            let ha: Vec<S> = a_op.iter().map(|&v| v * h).collect();
            let s_mat = mat_exp(&ha, dim);
            let neg_ha: Vec<S> = ha.iter().map(|&v| -v).collect();
            let s_inv = mat_exp(&neg_ha, dim);
            let j_op = mat_mul(&s_mat, &mat_mul(&j0_op, &s_inv, dim), dim);
            // store J_i^a = operator[a][i]
            for i in 0..dim {
                for a in 0..dim {
                    j.raw_mut()[p * comps + i * dim + a] = j_op[a * dim + i];
                }
            }
        }
        let omega = TensorField::constant_matrix(grid, [Lower, Lower], &w_mat);
        Self::assemble(grid.clone(), j, omega)
    }

    /// Assemble a structure from `J` and `ω`, deriving `g_{ij} = J_i^s ω_{js}`
    /// and the pointwise inverses. Positivity of `g` is enforced; the full
    /// compatibility identities are the business of [`AlmostKahler::validate`].
    pub fn from_j_omega(j: TensorField<S>, omega: TensorField<S>) -> Result<Self> {
        let grid = j.grid().clone();
        Self::assemble(grid, j, omega)
    }

    fn assemble(
        grid: Arc<PeriodicGrid>,
        j: TensorField<S>,
        omega: TensorField<S>,
    ) -> Result<Self> {
        let g = einsum("is,js->ij", &[&j, &omega]);
        let dim = grid.dim();
        let comps = dim * dim;
        for p in 0..grid.points() {
            let m: Vec<f64> = g.raw()[p * comps..(p + 1) * comps]
                .iter()
                .map(|v| v.val())
                .collect();
            let sym: Vec<f64> = (0..comps)
                .map(|c| 0.5 * (m[c] + m[(c % dim) * dim + c / dim]))
                .collect();
            let min_eig = sym_eig_min(&sym, dim);
            if !(min_eig > 0.0) {
                return Err(AkError::NotPositiveDefinite { point: p, min_eig });
            }
        }
        let g_inv = field_inverse(&g, [Upper, Upper])?;
        let omega_inv = field_inverse(&omega, [Upper, Upper])?;
        Ok(Self {
            grid,
            g,
            j,
            omega,
            g_inv,
            omega_inv,
        })
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Move one slot between variances by contracting with `g` or `g⁻¹`;
    /// the slot stays in place.
    pub fn raise_lower(
        &self,
        f: &TensorField<S>,
        slot: usize,
        to: Variance,
    ) -> Result<TensorField<S>> {
        if slot >= f.rank() {
            return Err(AkError::Type(format!(
                "slot {slot} out of range for rank {}",
                f.rank()
            )));
        }
        if f.variance()[slot] == to {
            return Err(AkError::Type(format!(
                "slot {slot} already has variance {to:?}"
            )));
        }
        let metric = match to {
            Upper => &self.g_inv,
            Lower => &self.g,
        };
        let dim = self.grid.dim();
        let rank = f.rank();
        let comps = f.comps();
        let stride = dim.pow((rank - 1 - slot) as u32);
        let mut variance = f.variance().to_vec();
        variance[slot] = to;
        let mut out = TensorField::zeros(&self.grid, &variance);
        for p in 0..self.grid.points() {
            let base = p * comps;
            for c in 0..comps {
                let idx_here = (c / stride) % dim;
                let c0 = c - idx_here * stride;
                let mut acc = S::zero();
                for s in 0..dim {
                    // both g and g⁻¹ are symmetric, slot order is immaterial
                    acc = acc
                        + metric.raw()[p * dim * dim + idx_here * dim + s]
                            * f.raw()[base + c0 + s * stride];
                }
                out.raw_mut()[base + c] = acc;
            }
        }
        Ok(out)
    }

    /// `(1,1)` or `(2,0)+(0,2)` projection of a slot pair of equal variance:
    /// `A^{2,0+0,2}_{ij} = ½(A_{ij} - J_i^s J_j^u A_{su})` and its mirror for
    /// upper pairs; `A^{1,1} = A - A^{2,0+0,2}`.
    pub fn project_type(
        &self,
        f: &TensorField<S>,
        pair: (usize, usize),
        kind: ProjKind,
    ) -> Result<TensorField<S>> {
        let (a, b) = pair;
        if a == b || a >= f.rank() || b >= f.rank() {
            return Err(AkError::Type(format!(
                "invalid projection pair ({a}, {b}) for rank {}",
                f.rank()
            )));
        }
        let va = f.variance()[a];
        if va != f.variance()[b] {
            return Err(AkError::Type(
                "projection pair must have equal variance".into(),
            ));
        }
        let dim = self.grid.dim();
        let rank = f.rank();
        let comps = f.comps();
        let stride_a = dim.pow((rank - 1 - a) as u32);
        let stride_b = dim.pow((rank - 1 - b) as u32);
        let jm = self.j.raw();
        let mut out = TensorField::zeros(&self.grid, f.variance());
        let half = S::from_f64(0.5);
        for p in 0..self.grid.points() {
            let base = p * comps;
            let jbase = p * dim * dim;
            for c in 0..comps {
                let ia = (c / stride_a) % dim;
                let ib = (c / stride_b) % dim;
                let c0 = c - ia * stride_a - ib * stride_b;
                let mut twisted = S::zero();
                for s in 0..dim {
                    for u in 0..dim {
                        // lower pair: J_i^s J_j^u A_{su}; upper pair: J_s^i J_u^j A^{su}
                        let (jas, jbu) = match va {
                            Lower => (jm[jbase + ia * dim + s], jm[jbase + ib * dim + u]),
                            Upper => (jm[jbase + s * dim + ia], jm[jbase + u * dim + ib]),
                        };
                        twisted = twisted + jas * jbu * f.raw()[base + c0 + s * stride_a + u * stride_b];
                    }
                }
                let anti = half * (f.raw()[base + c] - twisted);
                out.raw_mut()[base + c] = match kind {
                    ProjKind::TwoZero => anti,
                    ProjKind::OneOne => f.raw()[base + c] - anti,
                };
            }
        }
        Ok(out)
    }

    /// Full `g`-norm squared as a scalar field: lowers/raises slots as
    /// needed and contracts the field against itself.
    pub fn norm2(&self, f: &TensorField<S>) -> TensorField<S> {
        let mut raised = f.clone();
        let mut lowered = f.clone();
        for slot in 0..f.rank() {
            match f.variance()[slot] {
                Lower => raised = self.raise_lower(&raised, slot, Upper).unwrap(),
                Upper => lowered = self.raise_lower(&lowered, slot, Lower).unwrap(),
            }
        }
        raised.dot_componentwise(&lowered)
    }

    /// Pointwise inner product `⟨A, B⟩ = g^{..} A B` of two equally-shaped
    /// fields, as a scalar field.
    pub fn inner(&self, a: &TensorField<S>, b: &TensorField<S>) -> TensorField<S> {
        let mut raised = a.clone();
        for slot in 0..a.rank() {
            if a.variance()[slot] == Lower {
                raised = self.raise_lower(&raised, slot, Upper).unwrap();
            }
        }
        let mut lowered = b.clone();
        for slot in 0..b.rank() {
            if b.variance()[slot] == Upper {
                lowered = self.raise_lower(&lowered, slot, Lower).unwrap();
            }
        }
        raised.dot_componentwise(&lowered)
    }

    /// Export the principal values (drops jet derivatives).
    pub fn values(&self) -> AlmostKahler<f64> {
        AlmostKahler {
            grid: self.grid.clone(),
            g: self.g.map(|v| v.val()),
            j: self.j.map(|v| v.val()),
            omega: self.omega.map(|v| v.val()),
            g_inv: self.g_inv.map(|v| v.val()),
            omega_inv: self.omega_inv.map(|v| v.val()),
        }
    }
}

/// The orientation of `J₀` is pinned by requiring that `g_{ij} = J_i^s ω_{js}`
/// reproduces the identity metric against the standard `ω₀`; asserted at
/// runtime so the choice survives any convention change elsewhere.
fn pinned_orientation(dim: usize) -> f64 {
    let w = standard_omega(dim);
    for orientation in [1.0, -1.0] {
        let j_op = standard_j_operator(dim, orientation);
        // g_{ij} = J_i^s ω_{js} with J_i^s = j_op[s][i]
        let mut ok = true;
        'outer: for i in 0..dim {
            for jx in 0..dim {
                let mut s_acc = 0.0;
                for s in 0..dim {
                    s_acc += j_op[s * dim + i] * w[jx * dim + s];
                }
                let want = if i == jx { 1.0 } else { 0.0 };
                if libm::fabs(s_acc - want) > 1e-14 {
                    ok = false;
                    break 'outer;
                }
            }
        }
        if ok {
            return orientation;
        }
    }
    unreachable!("one of the two standard orientations must recover g = delta")
}

fn transpose_mat(m: &[f64], dim: usize) -> Vec<f64> {
    let mut t = alloc::vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            t[i * dim + j] = m[j * dim + i];
        }
    }
    t
}

/// Residuals of the structure identities, all as sup norms over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `J_i^a J_a^k + δ_i^k`
    pub j_square: f64,
    /// `g_{ij} - J_i^a J_j^b g_{ab}`
    pub g_compat: f64,
    /// `ω_{ij} - J_i^a g_{ja}`
    pub omega_def: f64,
    /// worst of the six coordinate identities tying `g`, `J`, `ω` together
    pub identity_list: f64,
    /// discrete `dω`
    pub d_omega: f64,
    /// symmetry of the metric
    pub g_symmetry: f64,
    /// minimum eigenvalue of `g` across the grid
    pub min_eig: f64,
    /// location of the worst structure residual
    pub worst_point: usize,
}

impl ValidationReport {
    pub fn max_residual(&self) -> f64 {
        self.j_square
            .max(self.g_compat)
            .max(self.omega_def)
            .max(self.identity_list)
            .max(self.d_omega)
            .max(self.g_symmetry)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol && self.min_eig > 0.0
    }
}

impl AlmostKahler<f64> {
    /// Check every structure invariant and report the residuals.
    pub fn validate(&self, deriv: &Deriv) -> ValidationReport {
        let j = &self.j;
        let delta = TensorField::kronecker(&self.grid);
        let j2 = einsum("ia,ak->ik", &[j, j]);
        let j2_id = &einsum("ki->ik", &[&delta]) + &j2; // J² + δ  (δ^k_i reindexed)
        let g_compat = &self.g - &einsum("ia,jb,ab->ij", &[j, j, &self.g]);
        let omega_def = &self.omega - &einsum("ia,ja->ij", &[j, &self.g]);

        let idents = [
            &self.g - &einsum("is,js->ij", &[j, &self.omega]),
            &self.g_inv - &einsum("si,js->ij", &[j, &self.omega_inv]),
            &self.omega_inv - &einsum("si,js->ij", &[j, &self.g_inv]),
            &j.clone() - &einsum("js,is->ij", &[&self.omega_inv, &self.g]),
            &j.clone() - &einsum("is,js->ij", &[&self.omega, &self.g_inv]),
            &delta.clone() - &einsum("ac,cb->ab", &[&self.omega_inv, &self.omega]),
        ];
        let identity_list = idents.iter().map(|f| f.max_abs()).fold(0.0, f64::max);

        let dw = deriv.grad(&self.omega);
        let d_omega_field = &(&dw + &einsum("jki->ijk", &[&dw])) + &einsum("kij->ijk", &[&dw]);
        let g_symmetry = (&self.g - &einsum("ji->ij", &[&self.g])).max_abs();

        let dim = self.grid.dim();
        let comps = dim * dim;
        let mut min_eig = f64::INFINITY;
        for p in 0..self.grid.points() {
            let m = &self.g.raw()[p * comps..(p + 1) * comps];
            min_eig = min_eig.min(sym_eig_min(m, dim));
        }

        let (worst_point, _) = j2_id.argmax_abs();
        ValidationReport {
            j_square: j2_id.max_abs(),
            g_compat: g_compat.max_abs(),
            omega_def: omega_def.max_abs(),
            identity_list,
            d_omega: d_omega_field.max_abs(),
            g_symmetry,
            min_eig,
            worst_point,
        }
    }
}

/// Exact-jet family constructor, seeded along the profile axis.
pub fn family_jets(grid: &Arc<PeriodicGrid>, params: &FamilyParams) -> Result<AlmostKahler<Jet>> {
    AlmostKahler::<Jet>::conjugation_family(grid, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid4(n: usize) -> Arc<PeriodicGrid> {
        Arc::new(PeriodicGrid::new(4, &[n, 1, 1, 1], 4).unwrap())
    }

    #[test]
    fn flat_structure_is_exact() {
        let ak = AlmostKahler::<f64>::flat(&grid4(8));
        let rep = ak.validate(&Deriv::Fd);
        assert!(rep.max_residual() <= 1e-14, "{rep:?}");
        assert!(rep.min_eig > 0.99);
    }

    #[test]
    fn family_at_zero_amplitude_is_flat() {
        let grid = grid4(8);
        let params = FamilyParams::default_for_dim(4, 0.0);
        let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let flat = AlmostKahler::<f64>::flat(&grid);
        assert_eq!((&fam.j - &flat.j).max_abs(), 0.0);
        assert_eq!((&fam.g - &flat.g).max_abs(), 0.0);
    }

    #[test]
    fn family_passes_validation() {
        let grid = grid4(16);
        let params = FamilyParams::default_for_dim(4, 0.1);
        let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let rep = fam.validate(&Deriv::Fd);
        assert!(rep.passes(1e-10), "{rep:?}");
    }

    #[test]
    fn non_symplectic_generator_is_rejected() {
        let grid = grid4(8);
        let mut params = FamilyParams::default_for_dim(4, 0.1);
        params.generator[0] += 0.5; // breaks Aᵀω + ωA = 0
        match AlmostKahler::<f64>::conjugation_family(&grid, &params) {
            Err(AkError::NotSymplectic { residual }) => assert!(residual > 0.1),
            other => panic!("expected symplectic rejection, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_j_fails_validation() {
        let grid = grid4(8);
        let params = FamilyParams::default_for_dim(4, 0.1);
        let mut fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let c = fam.j.comps();
        fam.j.raw_mut()[3 * c] += 1e-3;
        let rep = fam.validate(&Deriv::Fd);
        assert!(!rep.passes(1e-10));
        assert!(rep.j_square > 5e-4 && rep.j_square < 5e-3, "{rep:?}");
    }

    #[test]
    fn raise_then_lower_roundtrips() {
        let grid = grid4(12);
        let params = FamilyParams::default_for_dim(4, 0.1);
        let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let f = TensorField::from_fn(&grid, &[Lower, Lower], |p, idx| {
            libm::sin(grid.coord(p, 0)) + (idx[0] * 4 + idx[1]) as f64 * 0.1
        });
        let up = fam.raise_lower(&f, 1, Upper).unwrap();
        let back = fam.raise_lower(&up, 1, Lower).unwrap();
        let scale = f.max_abs();
        assert!((&back - &f).max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn flat_raising_is_a_no_op_on_values() {
        let grid = grid4(8);
        let flat = AlmostKahler::<f64>::flat(&grid);
        let f = TensorField::from_fn(&grid, &[Lower, Lower], |p, idx| {
            (p + idx[0] * 2 + idx[1]) as f64
        });
        let up = flat.raise_lower(&f, 0, Upper).unwrap();
        for p in 0..grid.points() {
            for a in 0..4 {
                for b in 0..4 {
                    assert_eq!(up.get(p, &[a, b]), f.get(p, &[a, b]));
                }
            }
        }
    }

    #[test]
    fn projections_partition_and_are_idempotent() {
        let grid = grid4(8);
        let params = FamilyParams::default_for_dim(4, 0.1);
        let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let f = TensorField::from_fn(&grid, &[Lower, Lower], |p, idx| {
            libm::sin(grid.coord(p, 0) + idx[0] as f64) + 0.3 * idx[1] as f64
        });
        let anti = fam.project_type(&f, (0, 1), ProjKind::TwoZero).unwrap();
        let inv = fam.project_type(&f, (0, 1), ProjKind::OneOne).unwrap();
        let scale = f.max_abs();
        assert!((&(&anti + &inv) - &f).max_abs() <= 1e-12 * scale);
        let anti2 = fam.project_type(&anti, (0, 1), ProjKind::TwoZero).unwrap();
        assert!((&anti2 - &anti).max_abs() <= 1e-12 * scale);
        // g is type (1,1)
        let g_anti = fam.project_type(&fam.g, (0, 1), ProjKind::TwoZero).unwrap();
        assert!(g_anti.max_abs() <= 1e-10);
    }

    #[test]
    fn norm2_of_zero_field_vanishes() {
        let grid = grid4(8);
        let fam = AlmostKahler::<f64>::flat(&grid);
        let z = TensorField::zeros(&grid, &[Lower, Lower, Lower]);
        assert_eq!(fam.norm2(&z).max_abs(), 0.0);
    }

    #[test]
    fn jet_family_values_match_f64_family() {
        let grid = grid4(16);
        let params = FamilyParams::default_for_dim(4, 0.1);
        let fam = AlmostKahler::<f64>::conjugation_family(&grid, &params).unwrap();
        let jets = family_jets(&grid, &params).unwrap();
        let diff = (&jets.values().j - &fam.j).max_abs();
        assert!(diff <= 1e-15, "jet values drifted: {diff}");
    }
}
