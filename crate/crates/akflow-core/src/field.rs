//! Dense multi-index tensor fields over a periodic grid, with pointwise
//! Einstein-summation algebra and periodic central differences.
//!
//! Storage is point-major: `values[p * dim^rank + c]` where `c` is the
//! row-major multi-index over the tensor slots. Each slot carries a variance
//! flag so that contractions are checked to pair an upper with a lower index.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{AkError, Result};
use crate::grid::PeriodicGrid;
use crate::scalar::{central_coeffs, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Upper,
    Lower,
}

pub use Variance::{Lower, Upper};

#[derive(Debug, Clone)]
pub struct TensorField<S: Scalar = f64> {
    grid: Arc<PeriodicGrid>,
    variance: Vec<Variance>,
    values: Vec<S>,
}

impl<S: Scalar> TensorField<S> {
    pub fn zeros(grid: &Arc<PeriodicGrid>, variance: &[Variance]) -> Self {
        let comps = grid.dim().pow(variance.len() as u32);
        Self {
            grid: grid.clone(),
            variance: variance.to_vec(),
            values: alloc::vec![S::zero(); grid.points() * comps],
        }
    }

    /// Build a field from a closure over (point index, tensor multi-index).
    pub fn from_fn(
        grid: &Arc<PeriodicGrid>,
        variance: &[Variance],
        mut f: impl FnMut(usize, &[usize]) -> S,
    ) -> Self {
        let dim = grid.dim();
        let rank = variance.len();
        let comps = dim.pow(rank as u32);
        let mut values = Vec::with_capacity(grid.points() * comps);
        let mut multi = alloc::vec![0usize; rank];
        for p in 0..grid.points() {
            multi.iter_mut().for_each(|m| *m = 0);
            for _ in 0..comps {
                values.push(f(p, &multi));
                for q in (0..rank).rev() {
                    multi[q] += 1;
                    if multi[q] < dim {
                        break;
                    }
                    multi[q] = 0;
                }
            }
        }
        Self {
            grid: grid.clone(),
            variance: variance.to_vec(),
            values,
        }
    }

    /// Constant rank-2 field from a row-major `dim x dim` matrix of values.
    pub fn constant_matrix(grid: &Arc<PeriodicGrid>, variance: [Variance; 2], m: &[S]) -> Self {
        let dim = grid.dim();
        assert_eq!(m.len(), dim * dim);
        Self::from_fn(grid, &variance, |_, idx| m[idx[0] * dim + idx[1]])
    }

    /// Kronecker delta with the mixed variance of an identity endomorphism.
    pub fn kronecker(grid: &Arc<PeriodicGrid>) -> Self {
        Self::from_fn(grid, &[Upper, Lower], |_, idx| {
            if idx[0] == idx[1] {
                S::one()
            } else {
                S::zero()
            }
        })
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    pub fn comps(&self) -> usize {
        self.grid.dim().pow(self.rank() as u32)
    }

    pub fn raw(&self) -> &[S] {
        &self.values
    }

    pub fn raw_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn comp_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.rank());
        let dim = self.grid.dim();
        multi.iter().fold(0, |acc, &i| acc * dim + i)
    }

    pub fn get(&self, point: usize, multi: &[usize]) -> S {
        self.values[point * self.comps() + self.comp_index(multi)]
    }

    pub fn set(&mut self, point: usize, multi: &[usize], v: S) {
        let c = point * self.comps() + self.comp_index(multi);
        self.values[c] = v;
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> TensorField<T> {
        TensorField {
            grid: self.grid.clone(),
            variance: self.variance.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        let c = S::from_f64(c);
        self.map(|v| v * c)
    }

    /// Reorder slots; `perm[new_slot] = old_slot`.
    pub fn transpose(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank());
        let dim = self.grid.dim();
        let rank = self.rank();
        let comps = self.comps();
        let variance: Vec<Variance> = perm.iter().map(|&q| self.variance[q]).collect();
        // old-slot strides in the flat component index
        let stride = |slot: usize| dim.pow((rank - 1 - slot) as u32);
        let mut values = alloc::vec![S::zero(); self.values.len()];
        let mut multi = alloc::vec![0usize; rank];
        for p in 0..self.grid.points() {
            multi.iter_mut().for_each(|m| *m = 0);
            for c_new in 0..comps {
                let mut c_old = 0;
                for (new_slot, &old_slot) in perm.iter().enumerate() {
                    c_old += multi[new_slot] * stride(old_slot);
                }
                values[p * comps + c_new] = self.values[p * comps + c_old];
                for q in (0..rank).rev() {
                    multi[q] += 1;
                    if multi[q] < dim {
                        break;
                    }
                    multi[q] = 0;
                }
            }
        }
        Self {
            grid: self.grid.clone(),
            variance,
            values,
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.grid == other.grid && self.variance == other.variance
    }

    fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert!(
            self.same_shape(other),
            "tensor shape mismatch: {:?} vs {:?}",
            self.variance,
            other.variance
        );
        Self {
            grid: self.grid.clone(),
            variance: self.variance.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Derivative along every axis at once: rank+1 with a new leading lower
    /// slot indexed by the direction.
    pub fn fd_grad(&self) -> Self {
        let dim = self.grid.dim();
        let comps = self.comps();
        let points = self.grid.points();
        let mut variance = alloc::vec![Lower];
        variance.extend_from_slice(&self.variance);
        let mut values = alloc::vec![S::zero(); points * dim * comps];
        let coeffs = central_coeffs(self.grid.fd_order());
        for axis in 0..dim {
            if self.grid.resolutions()[axis] == 1 {
                continue;
            }
            let inv_h = 1.0 / self.grid.spacing(axis);
            for p in 0..points {
                for (k, &ck) in coeffs.iter().enumerate() {
                    let off = k as isize + 1;
                    let w = S::from_f64(ck * inv_h);
                    let fwd = self.grid.shift(p, axis, off) * comps;
                    let bwd = self.grid.shift(p, axis, -off) * comps;
                    let out = (p * dim + axis) * comps;
                    for c in 0..comps {
                        let d = (self.values[fwd + c] - self.values[bwd + c]) * w;
                        values[out + c] = values[out + c] + d;
                    }
                }
            }
        }
        Self {
            grid: self.grid.clone(),
            variance,
            values,
        }
    }

    /// Exact-jet analogue of [`Self::fd_grad`]: the column along `jet_axis`
    /// is the formal jet shift, all other columns vanish.
    pub fn jet_grad(&self, jet_axis: usize) -> Self {
        let dim = self.grid.dim();
        let comps = self.comps();
        let mut variance = alloc::vec![Lower];
        variance.extend_from_slice(&self.variance);
        let mut values = alloc::vec![S::zero(); self.grid.points() * dim * comps];
        for p in 0..self.grid.points() {
            let out = (p * dim + jet_axis) * comps;
            for c in 0..comps {
                values[out + c] = self.values[p * comps + c].shift();
            }
        }
        Self {
            grid: self.grid.clone(),
            variance,
            values,
        }
    }

    /// Pointwise full contraction of two equally-shaped fields (no metric).
    pub fn dot_componentwise(&self, other: &Self) -> Self {
        assert!(self.grid == other.grid && self.rank() == other.rank());
        let comps = self.comps();
        let mut values = Vec::with_capacity(self.grid.points());
        for p in 0..self.grid.points() {
            let mut acc = S::zero();
            for c in 0..comps {
                acc = acc + self.values[p * comps + c] * other.values[p * comps + c];
            }
            values.push(acc);
        }
        Self {
            grid: self.grid.clone(),
            variance: Vec::new(),
            values,
        }
    }
}

impl<S: Scalar> core::ops::Add for &TensorField<S> {
    type Output = TensorField<S>;
    fn add(self, rhs: Self) -> TensorField<S> {
        self.zip(rhs, |a, b| a + b)
    }
}

impl<S: Scalar> core::ops::Sub for &TensorField<S> {
    type Output = TensorField<S>;
    fn sub(self, rhs: Self) -> TensorField<S> {
        self.zip(rhs, |a, b| a - b)
    }
}

impl<S: Scalar> core::ops::Neg for &TensorField<S> {
    type Output = TensorField<S>;
    fn neg(self) -> TensorField<S> {
        self.map(|v| -v)
    }
}

impl TensorField<f64> {
    /// Sup norm over all points and components.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| {
            let a = libm::fabs(v);
            if a > m {
                a
            } else {
                m
            }
        })
    }

    /// Root mean square over all points and components.
    pub fn l2_mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let s: f64 = self.values.iter().map(|&v| v * v).sum();
        libm::sqrt(s / self.values.len() as f64)
    }

    /// Location and value of the largest-magnitude entry.
    pub fn argmax_abs(&self) -> (usize, f64) {
        let comps = self.comps().max(1);
        let mut best = (0usize, 0.0f64);
        for (i, &v) in self.values.iter().enumerate() {
            if libm::fabs(v) > libm::fabs(best.1) {
                best = (i / comps, v);
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Single-axis partial derivative, embedded in a rank+1 field whose new
/// leading lower slot is the direction index (only `[axis]` is populated, so
/// summing the op over all axes assembles the gradient).
pub fn partial<S: Scalar>(f: &TensorField<S>, axis: usize) -> Result<TensorField<S>> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(AkError::Config(format!(
            "axis {axis} out of range for dimension {}",
            grid.dim()
        )));
    }
    let res = grid.resolutions()[axis];
    if res > 1 && res <= grid.fd_order() {
        return Err(AkError::Config(format!(
            "axis {axis}: resolution {res} does not fit an order-{} stencil",
            grid.fd_order()
        )));
    }
    let dim = grid.dim();
    let comps = f.comps();
    let mut out = TensorField::zeros(grid, &{
        let mut v = alloc::vec![Lower];
        v.extend_from_slice(f.variance());
        v
    });
    if res == 1 {
        return Ok(out); // constant along this axis
    }
    let coeffs = central_coeffs(grid.fd_order());
    let inv_h = 1.0 / grid.spacing(axis);
    let points = grid.points();
    for p in 0..points {
        for (k, &ck) in coeffs.iter().enumerate() {
            let off = k as isize + 1;
            let w = S::from_f64(ck * inv_h);
            let fwd = grid.shift(p, axis, off) * comps;
            let bwd = grid.shift(p, axis, -off) * comps;
            let base = (p * dim + axis) * comps;
            for c in 0..comps {
                let d = (f.raw()[fwd + c] - f.raw()[bwd + c]) * w;
                out.raw_mut()[base + c] = out.raw_mut()[base + c] + d;
            }
        }
    }
    Ok(out)
}

/// Pointwise Einstein contraction of two slots of opposite variance.
pub fn contract<S: Scalar>(
    f: &TensorField<S>,
    slot_a: usize,
    slot_b: usize,
) -> Result<TensorField<S>> {
    let rank = f.rank();
    if slot_a == slot_b || slot_a >= rank || slot_b >= rank {
        return Err(AkError::Type(format!(
            "cannot contract slots {slot_a}, {slot_b} of a rank-{rank} tensor"
        )));
    }
    if f.variance()[slot_a] == f.variance()[slot_b] {
        return Err(AkError::Type(format!(
            "contracted slots must pair an upper with a lower index (slots {slot_a}, {slot_b} are both {:?})",
            f.variance()[slot_a]
        )));
    }
    let dim = f.grid().dim();
    let (lo, hi) = if slot_a < slot_b {
        (slot_a, slot_b)
    } else {
        (slot_b, slot_a)
    };
    let variance: Vec<Variance> = f
        .variance()
        .iter()
        .enumerate()
        .filter(|(q, _)| *q != lo && *q != hi)
        .map(|(_, &v)| v)
        .collect();
    let out_rank = rank - 2;
    let mut out = TensorField::zeros(f.grid(), &variance);
    let comps_out = out.comps();
    let stride = |slot: usize| dim.pow((rank - 1 - slot) as u32);
    let mut multi = alloc::vec![0usize; out_rank];
    for p in 0..f.grid().points() {
        multi.iter_mut().for_each(|m| *m = 0);
        for c_out in 0..comps_out {
            // rebuild the source component with the contracted pair on the diagonal
            let mut base = 0usize;
            let mut q_out = 0usize;
            for q in 0..rank {
                if q == lo || q == hi {
                    continue;
                }
                base += multi[q_out] * stride(q);
                q_out += 1;
            }
            let mut acc = S::zero();
            for s in 0..dim {
                acc = acc + f.raw()[p * f.comps() + base + s * (stride(lo) + stride(hi))];
            }
            out.raw_mut()[p * comps_out + c_out] = acc;
            for q in (0..out_rank).rev() {
                multi[q] += 1;
                if multi[q] < dim {
                    break;
                }
                multi[q] = 0;
            }
        }
    }
    Ok(out)
}

/// Einstein summation over explicit index letters, e.g.
/// `einsum("kl,ijl->kij", &[&g_inv, &dg])`.
///
/// Every letter absent from the output must occur exactly twice with opposite
/// variance (a contraction, possibly within one operand); letters present in
/// the output agree in variance across occurrences. Panics on malformed
/// specs: call sites are static formulas, not user input.
pub fn einsum<S: Scalar>(spec: &str, ops: &[&TensorField<S>]) -> TensorField<S> {
    let (input_part, output_part) = spec
        .split_once("->")
        .unwrap_or_else(|| panic!("einsum spec {spec:?} lacks '->'"));
    let inputs: Vec<&str> = input_part.split(',').collect();
    assert_eq!(
        inputs.len(),
        ops.len(),
        "einsum {spec:?}: {} index groups for {} operands",
        inputs.len(),
        ops.len()
    );
    let grid = ops
        .first()
        .unwrap_or_else(|| panic!("einsum {spec:?}: no operands"))
        .grid()
        .clone();
    let output: Vec<u8> = output_part.bytes().collect();

    struct Op<S: Scalar> {
        letters: Vec<u8>,
        variance: Vec<Variance>,
        values: Vec<S>,
    }

    let mut work: Vec<Op<S>> = Vec::with_capacity(ops.len());
    for (k, (&f, letters)) in ops.iter().zip(&inputs).enumerate() {
        assert_eq!(
            letters.len(),
            f.rank(),
            "einsum {spec:?}: operand {k} has rank {} but {} letters",
            f.rank(),
            letters.len()
        );
        assert!(
            *f.grid() == grid,
            "einsum {spec:?}: operand {k} lives on a different grid"
        );
        work.push(Op {
            letters: letters.bytes().collect(),
            variance: f.variance().to_vec(),
            values: f.raw().to_vec(),
        });
    }

    // Global variance check.
    {
        let mut seen: Vec<(u8, Vec<Variance>)> = Vec::new();
        for op in &work {
            for (q, &l) in op.letters.iter().enumerate() {
                match seen.iter_mut().find(|(c, _)| *c == l) {
                    Some((_, vs)) => vs.push(op.variance[q]),
                    None => seen.push((l, alloc::vec![op.variance[q]])),
                }
            }
        }
        for (l, vs) in &seen {
            let in_output = output.contains(l);
            if in_output {
                assert!(
                    vs.windows(2).all(|w| w[0] == w[1]),
                    "einsum {spec:?}: output letter {} occurs with mixed variance",
                    *l as char
                );
            } else {
                assert!(
                    vs.len() == 2 && vs[0] != vs[1],
                    "einsum {spec:?}: contracted letter {} must occur exactly twice with opposite variance",
                    *l as char
                );
            }
        }
        for l in &output {
            assert!(
                seen.iter().any(|(c, _)| c == l),
                "einsum {spec:?}: output letter {} missing from inputs",
                *l as char
            );
        }
        let mut sorted = output.clone();
        sorted.sort_unstable();
        assert!(
            sorted.windows(2).all(|w| w[0] != w[1]),
            "einsum {spec:?}: repeated output letter"
        );
    }

    let dim = grid.dim();
    let points = grid.points();

    // Stage 1: collapse traces within a single operand.
    for op in &mut work {
        while let Some((a, b)) = find_repeat(&op.letters) {
            let rank = op.letters.len();
            let stride = |slot: usize| dim.pow((rank - 1 - slot) as u32);
            let keep: Vec<usize> = (0..rank).filter(|&q| q != a && q != b).collect();
            let out_rank = rank - 2;
            let comps_in = dim.pow(rank as u32);
            let comps_out = dim.pow(out_rank as u32);
            let mut values = alloc::vec![S::zero(); points * comps_out];
            let mut multi = alloc::vec![0usize; out_rank];
            for p in 0..points {
                multi.iter_mut().for_each(|m| *m = 0);
                for c_out in 0..comps_out {
                    let mut base = 0usize;
                    for (q_out, &q) in keep.iter().enumerate() {
                        base += multi[q_out] * stride(q);
                    }
                    let mut acc = S::zero();
                    for s in 0..dim {
                        acc = acc + op.values[p * comps_in + base + s * (stride(a) + stride(b))];
                    }
                    values[p * comps_out + c_out] = acc;
                    bump(&mut multi, dim);
                }
            }
            op.letters = keep.iter().map(|&q| op.letters[q]).collect();
            op.variance = keep.iter().map(|&q| op.variance[q]).collect();
            op.values = values;
        }
    }

    // Stage 2: left-fold pairwise contractions.
    let mut acc = work.remove(0);
    let mut rest = work;
    while !rest.is_empty() {
        let op = rest.remove(0);
        // letters still needed after this contraction
        let mut future: Vec<u8> = output.clone();
        for later in &rest {
            future.extend_from_slice(&later.letters);
        }
        let summed: Vec<u8> = acc
            .letters
            .iter()
            .copied()
            .filter(|l| op.letters.contains(l) && !future.contains(l))
            .collect();

        let mut out_letters: Vec<u8> = Vec::new();
        let mut out_variance: Vec<Variance> = Vec::new();
        for (q, &l) in acc.letters.iter().enumerate() {
            if !summed.contains(&l) {
                out_letters.push(l);
                out_variance.push(acc.variance[q]);
            }
        }
        for (q, &l) in op.letters.iter().enumerate() {
            if !summed.contains(&l) && !out_letters.contains(&l) {
                out_letters.push(l);
                out_variance.push(op.variance[q]);
            }
        }

        // strides of each loop letter into the two operands
        let all_letters: Vec<u8> = out_letters
            .iter()
            .chain(summed.iter())
            .copied()
            .collect();
        let stride_into = |o: &Op<S>| -> Vec<usize> {
            let rank = o.letters.len();
            all_letters
                .iter()
                .map(|l| {
                    o.letters
                        .iter()
                        .position(|c| c == l)
                        .map(|q| dim.pow((rank - 1 - q) as u32))
                        .unwrap_or(0)
                })
                .collect()
        };
        let sa = stride_into(&acc);
        let sb = stride_into(&op);
        let in_a: Vec<bool> = all_letters.iter().map(|l| acc.letters.contains(l)).collect();
        let in_b: Vec<bool> = all_letters.iter().map(|l| op.letters.contains(l)).collect();

        let n_out = out_letters.len();
        let n_sum = summed.len();
        let comps_out = dim.pow(n_out as u32);
        let comps_a = dim.pow(acc.letters.len() as u32);
        let comps_b = dim.pow(op.letters.len() as u32);
        let mut values = alloc::vec![S::zero(); points * comps_out];
        let mut assign = alloc::vec![0usize; n_out + n_sum];
        for p in 0..points {
            let base_a = p * comps_a;
            let base_b = p * comps_b;
            assign.iter_mut().for_each(|m| *m = 0);
            for c_out in 0..comps_out {
                let mut total = S::zero();
                loop {
                    let mut ca = 0usize;
                    let mut cb = 0usize;
                    for (t, &v) in assign.iter().enumerate() {
                        if in_a[t] {
                            ca += v * sa[t];
                        }
                        if in_b[t] {
                            cb += v * sb[t];
                        }
                    }
                    total = total + acc.values[base_a + ca] * op.values[base_b + cb];
                    // bump only the summed tail
                    let mut done = true;
                    for t in (n_out..n_out + n_sum).rev() {
                        assign[t] += 1;
                        if assign[t] < dim {
                            done = false;
                            break;
                        }
                        assign[t] = 0;
                    }
                    if done {
                        break;
                    }
                }
                values[p * comps_out + c_out] = total;
                bump(&mut assign[..n_out], dim);
            }
        }
        acc = Op {
            letters: out_letters,
            variance: out_variance,
            values,
        };
    }

    // Residual single-operand contractions can only be missing-from-output
    // letters that never found a partner; ruled out by validation.
    assert_eq!(
        {
            let mut a = acc.letters.clone();
            a.sort_unstable();
            a
        },
        {
            let mut o = output.clone();
            o.sort_unstable();
            o
        },
        "einsum {spec:?}: internal letter bookkeeping failure"
    );

    let result = TensorField {
        grid,
        variance: acc.variance.clone(),
        values: acc.values,
    };
    if acc.letters == output {
        result
    } else {
        let perm: Vec<usize> = output
            .iter()
            .map(|l| acc.letters.iter().position(|c| c == l).unwrap())
            .collect();
        result.transpose(&perm)
    }
}

fn find_repeat(letters: &[u8]) -> Option<(usize, usize)> {
    for i in 0..letters.len() {
        for j in i + 1..letters.len() {
            if letters[i] == letters[j] {
                return Some((i, j));
            }
        }
    }
    None
}

fn bump(multi: &mut [usize], dim: usize) {
    for q in (0..multi.len()).rev() {
        multi[q] += 1;
        if multi[q] < dim {
            return;
        }
        multi[q] = 0;
    }
}

/// Largest sup-norm among a set of fields; used to normalise identity
/// residuals by the magnitude of the terms entering them.
pub fn scale_of(terms: &[&TensorField<f64>]) -> f64 {
    terms.iter().fold(0.0, |m, t| {
        let a = t.max_abs();
        if a > m {
            a
        } else {
            m
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Deriv;
    use core::f64::consts::TAU;

    fn grid1d(n: usize, order: usize) -> Arc<PeriodicGrid> {
        Arc::new(PeriodicGrid::new(2, &[n, 1], order).unwrap())
    }

    fn sin_field(grid: &Arc<PeriodicGrid>) -> TensorField {
        TensorField::from_fn(grid, &[], |p, _| libm::sin(grid.coord(p, 0)))
    }

    #[test]
    fn constant_derivative_is_zero() {
        let g = grid1d(16, 4);
        let f = TensorField::from_fn(&g, &[], |_, _| 3.25);
        assert_eq!(partial(&f, 0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn resolution_one_axis_derivative_is_zero() {
        let g = grid1d(16, 4);
        let f = sin_field(&g);
        assert_eq!(partial(&f, 1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sin_derivative_converges_at_stencil_order() {
        // d/dx sin = cos with error <= C h^4, dropping ~16x from N=64 to N=128
        let mut errs = alloc::vec![];
        for n in [64usize, 128] {
            let g = grid1d(n, 4);
            let df = partial(&sin_field(&g), 0).unwrap();
            let mut worst = 0.0f64;
            for p in 0..g.points() {
                let exact = libm::cos(g.coord(p, 0));
                let got = df.get(p, &[0]);
                worst = worst.max(libm::fabs(got - exact));
            }
            errs.push(worst);
        }
        let h = TAU / 64.0;
        assert!(errs[0] <= 10.0 * h.powi(4), "error {} too large", errs[0]);
        let ratio = errs[0] / errs[1];
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio} not ~16");
    }

    #[test]
    fn partials_commute_across_axes() {
        let g = Arc::new(PeriodicGrid::new(2, &[24, 24], 4).unwrap());
        let f = TensorField::from_fn(&g, &[], |p, _| {
            libm::sin(g.coord(p, 0)) * libm::cos(2.0 * g.coord(p, 1))
        });
        let dxy = partial(&partial(&f, 0).unwrap(), 1).unwrap();
        let dyx = partial(&partial(&f, 1).unwrap(), 0).unwrap();
        let scale = dxy.max_abs().max(1.0);
        for p in 0..g.points() {
            let a = dxy.get(p, &[1, 0]);
            let b = dyx.get(p, &[0, 1]);
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn partial_is_linear() {
        let g = grid1d(32, 4);
        let f1 = sin_field(&g);
        let f2 = TensorField::from_fn(&g, &[], |p, _| libm::cos(2.0 * g.coord(p, 0)));
        let combo = &f1.scale(2.5) + &f2.scale(-0.75);
        let lhs = partial(&combo, 0).unwrap();
        let rhs = &partial(&f1, 0).unwrap().scale(2.5) + &partial(&f2, 0).unwrap().scale(-0.75);
        assert!((&lhs - &rhs).max_abs() <= 1e-13 * lhs.max_abs().max(1.0));
    }

    #[test]
    fn trace_of_identity_is_dim() {
        let g = Arc::new(PeriodicGrid::new(4, &[3, 1, 1, 1], 2).unwrap());
        let delta = TensorField::<f64>::kronecker(&g);
        let tr = contract(&delta, 0, 1).unwrap();
        for p in 0..g.points() {
            assert_eq!(tr.get(p, &[]), 4.0);
        }
    }

    #[test]
    fn contracting_j_with_itself_gives_minus_delta() {
        let g = Arc::new(PeriodicGrid::new(4, &[6, 1, 1, 1], 4).unwrap());
        let ak = crate::structure::AlmostKahler::<f64>::flat(&g);
        // J ⊗ J with the middle pair contracted: J_i^a J_a^k = -δ_i^k
        let prod = einsum("ia,kb->iakb", &[&ak.j, &ak.j]);
        let sq = contract(&prod, 1, 2).unwrap();
        for p in 0..g.points() {
            for i in 0..4 {
                for k in 0..4 {
                    let want = if i == k { -1.0 } else { 0.0 };
                    assert_eq!(sq.get(p, &[i, k]), want);
                }
            }
        }
    }

    #[test]
    fn contracting_metric_with_inverse_gives_delta() {
        let g = Arc::new(PeriodicGrid::new(4, &[12, 1, 1, 1], 4).unwrap());
        let params = crate::structure::FamilyParams::default_for_dim(4, 0.1);
        let ak = crate::structure::AlmostKahler::<f64>::conjugation_family(&g, &params).unwrap();
        let prod = einsum("ij,kl->ijkl", &[&ak.g, &ak.g_inv]);
        let id = contract(&prod, 1, 2).unwrap();
        for p in 0..g.points() {
            for i in 0..4 {
                for k in 0..4 {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((id.get(p, &[i, k]) - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn max_abs_of_ones_is_one() {
        let g = grid1d(8, 2);
        let f = TensorField::from_fn(&g, &[Lower, Upper], |_, _| 1.0);
        assert_eq!(f.max_abs(), 1.0);
        assert_eq!(f.l2_mean(), 1.0);
        assert_eq!(TensorField::<f64>::zeros(&g, &[Lower]).max_abs(), 0.0);
    }

    #[test]
    fn contract_rejects_equal_variance() {
        let g = grid1d(8, 2);
        let f = TensorField::from_fn(&g, &[Lower, Lower], |_, _| 1.0);
        assert!(matches!(contract(&f, 0, 1), Err(AkError::Type(_))));
    }

    #[test]
    fn einsum_matches_hand_contraction() {
        let g = grid1d(5, 2);
        let a = TensorField::from_fn(&g, &[Upper, Lower], |p, idx| {
            (p + 1) as f64 * (idx[0] * 2 + idx[1] + 1) as f64
        });
        let b = TensorField::from_fn(&g, &[Upper, Lower], |p, idx| {
            (p + 2) as f64 + (idx[0] + 3 * idx[1]) as f64
        });
        let prod = einsum("ij,jk->ik", &[&a, &b]);
        for p in 0..g.points() {
            for i in 0..2 {
                for k in 0..2 {
                    let want: f64 = (0..2).map(|j| a.get(p, &[i, j]) * b.get(p, &[j, k])).sum();
                    assert!((prod.get(p, &[i, k]) - want).abs() < 1e-14);
                }
            }
        }
        // trace within one operand
        let tr = einsum("ii->", &[&a]);
        for p in 0..g.points() {
            let want = a.get(p, &[0, 0]) + a.get(p, &[1, 1]);
            assert!((tr.get(p, &[]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn einsum_three_operands_and_permutation() {
        let g = grid1d(3, 2);
        let a = TensorField::from_fn(&g, &[Lower, Lower], |p, idx| {
            1.0 + p as f64 + (idx[0] + 2 * idx[1]) as f64
        });
        let ginv = TensorField::from_fn(&g, &[Upper, Upper], |_, idx| {
            if idx[0] == idx[1] {
                2.0
            } else {
                0.5
            }
        });
        let lhs = einsum("ab,ai,bj->ji", &[&a, &ginv, &ginv]);
        for p in 0..g.points() {
            for i in 0..2 {
                for j in 0..2 {
                    let mut want = 0.0;
                    for x in 0..2 {
                        for y in 0..2 {
                            want += a.get(p, &[x, y]) * ginv.get(p, &[x, i]) * ginv.get(p, &[y, j]);
                        }
                    }
                    assert!((lhs.get(p, &[j, i]) - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    #[should_panic(expected = "opposite variance")]
    fn einsum_rejects_bad_contraction() {
        let g = grid1d(3, 2);
        let a = TensorField::from_fn(&g, &[Lower, Lower], |_, _| 1.0);
        let b = TensorField::from_fn(&g, &[Lower, Lower], |_, _| 1.0);
        let _ = einsum("ij,jk->ik", &[&a, &b]);
    }

    #[test]
    fn grad_assembles_all_axes() {
        let g = Arc::new(PeriodicGrid::new(2, &[16, 16], 2).unwrap());
        let f = TensorField::from_fn(&g, &[], |p, _| {
            libm::sin(g.coord(p, 0)) + libm::cos(g.coord(p, 1))
        });
        let grad = Deriv::Fd.grad(&f);
        assert_eq!(grad.rank(), 1);
        let dx = partial(&f, 0).unwrap();
        let dy = partial(&f, 1).unwrap();
        for p in 0..g.points() {
            assert!((grad.get(p, &[0]) - dx.get(p, &[0])).abs() < 1e-14);
            assert!((grad.get(p, &[1]) - dy.get(p, &[1])).abs() < 1e-14);
        }
    }
}
