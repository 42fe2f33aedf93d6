//! Dense linear-algebra kernels shared by the POD, SINDy, and analysis
//! modules: a cyclic Jacobi eigensolver for symmetric matrices, an LU solver
//! with partial pivoting, and a few orthogonality helpers.
//!
//! Everything here is deterministic: fixed sweep orders, no randomized
//! pivoting, so repeated calls on identical inputs are bit-identical.

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Frobenius norm.
pub fn frobenius<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching orthonormal
/// eigenvector columns. The input is symmetrized as `(A + Aᵀ)/2` before
/// sweeping, so tiny roundoff asymmetry in the caller's matrix is harmless.
pub fn jacobi_eigh<T: Scalar>(a: &Array2<T>) -> Result<(Array1<T>, Array2<T>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric eigendecomposition"));
    }

    let half = T::of(0.5);
    let mut w = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            w[[i, j]] = (a[[i, j]] + a[[j, i]]) * half;
        }
    }
    let mut v = Array2::<T>::eye(n);

    // Numerical-Recipes-style cyclic sweeps with an initial coarse threshold.
    let hundred = T::of(100.0);
    for sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[[p, q]].abs();
            }
        }
        if off == T::zero() {
            break;
        }
        let thresh = if sweep < 3 {
            T::of(0.2) * off / T::of((n * n) as f64)
        } else {
            T::zero()
        };
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = w[[p, q]];
                let g = hundred * apq.abs();
                // Entries already negligible against both diagonals are
                // flushed to exact zero after the warm-up sweeps.
                if sweep > 3
                    && w[[p, p]].abs() + g == w[[p, p]].abs()
                    && w[[q, q]].abs() + g == w[[q, q]].abs()
                {
                    w[[p, q]] = T::zero();
                    w[[q, p]] = T::zero();
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = w[[q, q]] - w[[p, p]];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = half * h / apq;
                    let mut t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        t = -t;
                    }
                    t
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);
                let hpq = t * apq;

                w[[p, p]] -= hpq;
                w[[q, q]] += hpq;
                w[[p, q]] = T::zero();
                w[[q, p]] = T::zero();
                for i in 0..n {
                    if i != p && i != q {
                        let aip = w[[i, p]];
                        let aiq = w[[i, q]];
                        w[[i, p]] = aip - s * (aiq + tau * aip);
                        w[[i, q]] = aiq + s * (aip - tau * aiq);
                        w[[p, i]] = w[[i, p]];
                        w[[q, i]] = w[[i, q]];
                    }
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip - s * (viq + tau * vip);
                    v[[i, q]] = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[[i, i]].partial_cmp(&w[[j, j]]).expect("finite eigenvalues"));
    let mut values = Array1::<T>::zeros(n);
    let mut vectors = Array2::<T>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = w[[src, src]];
        for i in 0..n {
            vectors[[i, dst]] = v[[i, src]];
        }
    }
    Ok((values, vectors))
}

/// Flips each column whose largest-magnitude entry is negative (first
/// occurrence wins ties), returning the flip mask so a paired matrix can be
/// flipped consistently.
pub fn dominant_sign_flips<T: Scalar>(m: &Array2<T>) -> Vec<bool> {
    let (rows, cols) = m.dim();
    (0..cols)
        .map(|j| {
            let mut best = T::zero();
            let mut sign_negative = false;
            for i in 0..rows {
                let v = m[[i, j]];
                if v.abs() > best {
                    best = v.abs();
                    sign_negative = v < T::zero();
                }
            }
            sign_negative
        })
        .collect()
}

/// Negates the masked columns in place.
pub fn flip_columns<T: Scalar>(m: &mut Array2<T>, flips: &[bool]) {
    for (j, &flip) in flips.iter().enumerate() {
        if flip {
            for i in 0..m.nrows() {
                m[[i, j]] = -m[[i, j]];
            }
        }
    }
}

/// Replaces the listed columns with vectors completing the remaining columns
/// to an orthonormal set, via Gram-Schmidt over canonical basis vectors.
pub fn complete_orthonormal<T: Scalar>(m: &mut Array2<T>, deficient: &[usize]) {
    let (rows, cols) = m.dim();
    for &j in deficient {
        let mut accepted = false;
        for cand in 0..rows {
            let mut w = Array1::<T>::zeros(rows);
            w[cand] = T::one();
            // Two orthogonalization passes keep the completion orthogonal to
            // every live column at machine precision.
            for _ in 0..2 {
                for other in 0..cols {
                    if other == j || deficient.contains(&other) && other > j {
                        continue;
                    }
                    let mut dot = T::zero();
                    for i in 0..rows {
                        dot += m[[i, other]] * w[i];
                    }
                    for i in 0..rows {
                        w[i] -= dot * m[[i, other]];
                    }
                }
            }
            let norm = w.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::of(0.5) {
                for i in 0..rows {
                    m[[i, j]] = w[i] / norm;
                }
                accepted = true;
                break;
            }
        }
        debug_assert!(accepted, "orthonormal completion always finds a candidate");
    }
}

/// LU factorization with partial pivoting.
pub struct LuFactors<T> {
    lu: Array2<T>,
    perm: Vec<usize>,
}

/// Factors a square matrix, failing on (numerical) singularity.
pub fn lu_factor<T: Scalar>(a: &Array2<T>) -> Result<LuFactors<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "LU needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = max_abs(a);
    let tol = scale * T::epsilon() * T::of(n as f64);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[[col, col]].abs();
        for r in (col + 1)..n {
            if lu[[r, col]].abs() > pivot_val {
                pivot_val = lu[[r, col]].abs();
                pivot_row = r;
            }
        }
        if pivot_val <= tol {
            return Err(Error::Singular { pivot: col });
        }
        if pivot_row != col {
            perm.swap(col, pivot_row);
            for j in 0..n {
                let tmp = lu[[col, j]];
                lu[[col, j]] = lu[[pivot_row, j]];
                lu[[pivot_row, j]] = tmp;
            }
        }
        let inv = T::one() / lu[[col, col]];
        for r in (col + 1)..n {
            let factor = lu[[r, col]] * inv;
            lu[[r, col]] = factor;
            for j in (col + 1)..n {
                let upd = lu[[col, j]];
                lu[[r, j]] -= factor * upd;
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

impl<T: Scalar> LuFactors<T> {
    /// Solves `A x = b` for one right-hand side.
    pub fn solve(&self, b: &Array1<T>) -> Array1<T> {
        let n = self.perm.len();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut x = Array1::<T>::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc / self.lu[[i, i]];
        }
        x
    }
}

/// One-shot linear solve.
pub fn solve<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    Ok(lu_factor(a)?.solve(b))
}
