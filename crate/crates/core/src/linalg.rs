//! Small dense linear algebra: enough for polynomial surface fits and the
//! Levenberg–Marquardt normal equations. Matrices are row-major `Vec`s.

use crate::num::Scalar;

/// Thin singular value decomposition `A = U diag(s) Vᵀ` of an `m × n`
/// matrix with `m ≥ n`, computed by one-sided Jacobi rotations.
#[derive(Debug, Clone)]
pub struct Svd<F> {
    pub rows: usize,
    pub cols: usize,
    /// `m × n`, orthonormal columns (zero columns for null singular values).
    pub u: Vec<F>,
    pub singular_values: Vec<F>,
    /// `n × n`, orthogonal.
    pub v: Vec<F>,
}

impl<F: Scalar> Svd<F> {
    pub fn new(a: &[F], rows: usize, cols: usize) -> Self {
        assert_eq!(a.len(), rows * cols);
        assert!(rows >= cols, "thin SVD needs rows >= cols");
        let mut u = a.to_vec();
        let mut v = vec![F::zero(); cols * cols];
        for i in 0..cols {
            v[i * cols + i] = F::one();
        }
        let tol = F::epsilon();
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..cols {
                for q in (p + 1)..cols {
                    let (mut alpha, mut beta, mut gamma) = (F::zero(), F::zero(), F::zero());
                    for i in 0..rows {
                        let up = u[i * cols + p];
                        let uq = u[i * cols + q];
                        alpha = alpha + up * up;
                        beta = beta + uq * uq;
                        gamma = gamma + up * uq;
                    }
                    if gamma == F::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (F::lit(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                    let c = F::one() / (F::one() + t * t).sqrt();
                    let s = c * t;
                    for i in 0..rows {
                        let up = u[i * cols + p];
                        let uq = u[i * cols + q];
                        u[i * cols + p] = c * up - s * uq;
                        u[i * cols + q] = s * up + c * uq;
                    }
                    for i in 0..cols {
                        let vp = v[i * cols + p];
                        let vq = v[i * cols + q];
                        v[i * cols + p] = c * vp - s * vq;
                        v[i * cols + q] = s * vp + c * vq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut singular_values = vec![F::zero(); cols];
        for j in 0..cols {
            let norm = (0..rows)
                .map(|i| u[i * cols + j] * u[i * cols + j])
                .sum::<F>()
                .sqrt();
            singular_values[j] = norm;
            if norm > F::zero() {
                for i in 0..rows {
                    u[i * cols + j] = u[i * cols + j] / norm;
                }
            }
        }
        Self { rows, cols, u, singular_values, v }
    }

    /// Ratio of largest to smallest singular value (infinite when singular).
    pub fn condition_number(&self) -> F {
        let max = self.singular_values.iter().fold(F::zero(), |m, &s| m.max(s));
        let min = self.singular_values.iter().fold(F::infinity(), |m, &s| m.min(s));
        if min == F::zero() {
            F::infinity()
        } else {
            max / min
        }
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`, ignoring singular
    /// values below `rcond · s_max`.
    pub fn solve(&self, b: &[F], rcond: F) -> Vec<F> {
        assert_eq!(b.len(), self.rows);
        let n = self.cols;
        let s_max = self.singular_values.iter().fold(F::zero(), |m, &s| m.max(s));
        let cutoff = rcond * s_max;
        let mut coef = vec![F::zero(); n];
        for j in 0..n {
            let s = self.singular_values[j];
            if s <= cutoff || s == F::zero() {
                continue;
            }
            let dot: F = (0..self.rows).map(|i| self.u[i * n + j] * b[i]).sum();
            coef[j] = dot / s;
        }
        (0..n)
            .map(|i| (0..n).map(|j| self.v[i * n + j] * coef[j]).sum())
            .collect()
    }
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` for a (numerically) singular matrix.
pub fn solve_square<F: Scalar>(a: &[F], b: &[F]) -> Option<Vec<F>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    if scale == F::zero() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if m[pivot * n + col].abs() <= scale * F::epsilon() * F::lit(n as f64) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] / diag;
            if factor == F::zero() {
                continue;
            }
            for k in col..n {
                m[row * n + k] = m[row * n + k] - factor * m[col * n + k];
            }
            x[row] = x[row] - factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in (col + 1)..n {
            acc = acc - m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
