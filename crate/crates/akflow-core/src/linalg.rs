//! Small dense matrix kernels used pointwise on rank-2 tensor fields.
//!
//! Matrices are row-major `dim x dim` slices; the row is always the first
//! tensor slot, so a field inverse satisfies `inv[a][c] * f[c][b] = delta`.

use alloc::vec::Vec;

use crate::error::{AkError, Result};
use crate::field::{TensorField, Variance};
use crate::scalar::Scalar;

/// Invert a row-major matrix by Gauss-Jordan with partial pivoting on the
/// value parts (jets pivot on their principal values).
pub fn mat_inverse<S: Scalar>(m: &[S], dim: usize) -> Option<Vec<S>> {
    let mut a = m.to_vec();
    let mut inv: Vec<S> = (0..dim * dim)
        .map(|i| {
            if i / dim == i % dim {
                S::one()
            } else {
                S::zero()
            }
        })
        .collect();
    for col in 0..dim {
        let mut pivot = col;
        let mut best = libm::fabs(a[col * dim + col].val());
        for r in col + 1..dim {
            let cand = libm::fabs(a[r * dim + col].val());
            if cand > best {
                best = cand;
                pivot = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if pivot != col {
            for c in 0..dim {
                a.swap(pivot * dim + c, col * dim + c);
                inv.swap(pivot * dim + c, col * dim + c);
            }
        }
        let d = a[col * dim + col];
        for c in 0..dim {
            a[col * dim + c] = a[col * dim + c] / d;
            inv[col * dim + c] = inv[col * dim + c] / d;
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = a[r * dim + col];
            if f == S::zero() {
                continue;
            }
            for c in 0..dim {
                a[r * dim + c] = a[r * dim + c] - f * a[col * dim + c];
                inv[r * dim + c] = inv[r * dim + c] - f * inv[col * dim + c];
            }
        }
    }
    Some(inv)
}

pub fn mat_mul<S: Scalar>(a: &[S], b: &[S], dim: usize) -> Vec<S> {
    let mut out = alloc::vec![S::zero(); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == S::zero() {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] = out[i * dim + j] + aik * b[k * dim + j];
            }
        }
    }
    out
}

/// Matrix exponential by scaling-and-squaring with a Taylor series carried
/// to machine precision; exact for nilpotent generators.
pub fn mat_exp<S: Scalar>(m: &[S], dim: usize) -> Vec<S> {
    let norm: f64 = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| libm::fabs(m[i * dim + j].val()))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0f64;
    while norm * scale > 0.5 {
        squarings += 1;
        scale *= 0.5;
    }
    let ms: Vec<S> = m.iter().map(|&v| v * S::from_f64(scale)).collect();
    let mut result: Vec<S> = (0..dim * dim)
        .map(|i| {
            if i / dim == i % dim {
                S::one()
            } else {
                S::zero()
            }
        })
        .collect();
    let mut term = result.clone();
    for k in 1..=24 {
        term = mat_mul(&term, &ms, dim);
        let c = S::from_f64(1.0 / k as f64);
        term.iter_mut().for_each(|t| *t = *t * c);
        let mut max = 0.0f64;
        for (r, &t) in result.iter_mut().zip(term.iter()) {
            *r = *r + t;
            max = max.max(libm::fabs(t.val()));
        }
        if max < 1e-300 {
            break;
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result, dim);
    }
    result
}

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
pub fn sym_eig_min(m: &[f64], dim: usize) -> f64 {
    let mut a = m.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..dim {
            for q in p + 1..dim {
                off += a[p * dim + q] * a[p * dim + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..dim).map(|i| a[i * dim + i]).fold(f64::INFINITY, f64::min)
}

/// Inverse square root of a near-identity SPD matrix by Newton-Schulz
/// iteration; used to retract a drifted almost complex structure.
pub fn inv_sqrt_near_identity(m: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut y: Vec<f64> = (0..dim * dim)
        .map(|i| if i / dim == i % dim { 1.0 } else { 0.0 })
        .collect();
    for _ in 0..32 {
        // y <- y (3 I - M y^2) / 2
        let y2 = mat_mul(&y, &y, dim);
        let my2 = mat_mul(m, &y2, dim);
        let mut corr = alloc::vec![0.0; dim * dim];
        let mut residual = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let id = if i == j { 1.0 } else { 0.0 };
                corr[i * dim + j] = 1.5 * id - 0.5 * my2[i * dim + j];
                residual = residual.max(libm::fabs(my2[i * dim + j] - id));
            }
        }
        y = mat_mul(&y, &corr, dim);
        if residual < 1e-15 {
            return Some(y);
        }
        if !residual.is_finite() || residual > 1e3 {
            return None;
        }
    }
    Some(y)
}

/// Pointwise inverse of a rank-2 field; `out_variance` states the slot
/// variance of the result (e.g. `[Upper, Upper]` for a metric inverse).
pub fn field_inverse<S: Scalar>(
    f: &TensorField<S>,
    out_variance: [Variance; 2],
) -> Result<TensorField<S>> {
    if f.rank() != 2 {
        return Err(AkError::Type(alloc::format!(
            "matrix inverse needs a rank-2 field, got rank {}",
            f.rank()
        )));
    }
    let dim = f.grid().dim();
    let mut out = TensorField::zeros(f.grid(), &out_variance);
    let comps = dim * dim;
    for p in 0..f.grid().points() {
        let m = &f.raw()[p * comps..(p + 1) * comps];
        let inv = mat_inverse(m, dim).ok_or(AkError::NotPositiveDefinite {
            point: p,
            min_eig: 0.0,
        })?;
        out.raw_mut()[p * comps..(p + 1) * comps].copy_from_slice(&inv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Jet;

    #[test]
    fn inverse_of_known_matrix() {
        let m = [4.0, 7.0, 2.0, 6.0];
        let inv = mat_inverse(&m, 2).unwrap();
        let prod = mat_mul(&inv, &m, 2);
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 2 + j] - id).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jet_inverse_propagates_derivative() {
        // M(x) = [[1 + x^2-ish jet, 0], [0, 2]]: (M^{-1})' = -M^{-1} M' M^{-1}
        let e = Jet::new(1.5, 0.7, 0.3);
        let m = [e, Jet::constant(0.0), Jet::constant(0.0), Jet::constant(2.0)];
        let inv = mat_inverse(&m, 2).unwrap();
        assert!((inv[0].v - 1.0 / 1.5).abs() < 1e-14);
        assert!((inv[0].d1 + 0.7 / (1.5 * 1.5)).abs() < 1e-14);
        let d2 = (2.0 * 0.7 * 0.7 - 1.5 * 0.3) / (1.5f64.powi(3));
        assert!((inv[0].d2 - d2).abs() < 1e-14);
    }

    #[test]
    fn exponential_of_nilpotent_is_exact() {
        // A^2 = 0 so exp(A) = I + A
        let a = [0.0, 1.0, 0.0, 0.0];
        let e = mat_exp(&a, 2);
        assert_eq!(e, alloc::vec![1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn exponential_of_rotation_generator() {
        let t = 0.3;
        let a = [0.0, -t, t, 0.0];
        let e = mat_exp(&a, 2);
        assert!((e[0] - t.cos()).abs() < 1e-14);
        assert!((e[1] + t.sin()).abs() < 1e-14);
        assert!((e[2] - t.sin()).abs() < 1e-14);
        assert!((e[3] - t.cos()).abs() < 1e-14);
    }

    #[test]
    fn eig_min_of_diagonal() {
        let m = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0];
        assert!((sym_eig_min(&m, 3) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn inv_sqrt_squares_back() {
        let m = [1.1, 0.02, 0.02, 0.93];
        let y = inv_sqrt_near_identity(&m, 2).unwrap();
        let y2 = mat_mul(&y, &y, 2);
        let p = mat_mul(&m, &y2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((p[i * 2 + j] - id).abs() < 1e-12);
            }
        }
    }
}
