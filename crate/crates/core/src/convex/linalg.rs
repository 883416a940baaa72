//! Dense symmetric positive definite solves for the reduced Newton system.

use crate::scalar::Scalar;

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![S::zero(); n * n] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    /// Adds `w·u·uᵀ` for sparse `u` given as `(index, value)` terms.
    pub fn add_outer(&mut self, terms: &[(usize, S)], w: S) {
        for &(i, a) in terms {
            for &(j, b) in terms {
                self.add(i, j, w * a * b);
            }
        }
    }

    /// Solves `self · x = rhs` by Cholesky factorization, consuming the matrix.
    /// Tiny non-positive pivots get a relative diagonal shift; returns `None`
    /// when the matrix is far from positive definite.
    pub fn solve(mut self, rhs: &[S]) -> Option<Vec<S>> {
        let n = self.n;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(S::zero(), S::max).max(S::min_positive_value());
        let floor = scale * S::epsilon() * S::lit(16.0);
        for j in 0..n {
            let mut d = self.data[j * n + j];
            for k in 0..j {
                let l = self.data[j * n + k];
                d = d - l * l;
            }
            if !(d > floor) {
                if d < -scale * S::lit(1e-6) || d.is_nan() {
                    return None;
                }
                d = floor;
            }
            let d = d.sqrt();
            self.data[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self.data[i * n + j];
                for k in 0..j {
                    s = s - self.data[i * n + k] * self.data[j * n + k];
                }
                self.data[i * n + j] = s / d;
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.data[i * n + k] * y[k];
            }
            y[i] = s / self.data[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.data[k * n + i] * y[k];
            }
            y[i] = s / self.data[i * n + i];
        }
        Some(y)
    }
}
