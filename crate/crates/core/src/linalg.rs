//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RpspError};
use crate::scalar::Scalar;

/// Kronecker product of two vectors, `out[i * b.len() + j] = a[i] * b[j]`.
pub fn kron<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let nb = b.len();
    let mut out = DVector::zeros(a.len() * nb);
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * nb + j] = ai * bj;
        }
    }
    out
}

/// Row-major view of a vector as a `rows x cols` matrix.
pub fn unflatten<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    debug_assert_eq!(v.len(), rows * cols);
    DMatrix::from_row_slice(rows, cols, v.as_slice())
}

/// Row-major flattening of a matrix.
pub fn flatten<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let (rows, cols) = m.shape();
    DVector::from_fn(rows * cols, |idx, _| m[(idx / cols, idx % cols)])
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm1<T: Scalar>(m: &DMatrix<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Inverts a square matrix via LU and reports its 1-norm condition number.
///
/// Returns `None` when LU fails outright (exactly singular).
pub fn inverse_with_condition<T: Scalar>(m: &DMatrix<T>) -> Option<(DMatrix<T>, T)> {
    let inv = m.clone().lu().try_inverse()?;
    if !inv.iter().all(|x| x.is_finite()) {
        return None;
    }
    let cond = norm1(m) * norm1(&inv);
    Some((inv, cond))
}

/// Streaming accumulator for a weighted ridge least-squares fit `y ≈ W x`.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator<T: Scalar> {
    xtx: DMatrix<T>,
    ytx: DMatrix<T>,
    samples: usize,
    weight_sum: T,
}

impl<T: Scalar> RidgeAccumulator<T> {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(input_dim, input_dim),
            ytx: DMatrix::zeros(output_dim, input_dim),
            samples: 0,
            weight_sum: T::zero(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.xtx.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.ytx.nrows()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn add(&mut self, x: &DVector<T>, y: &DVector<T>, weight: T) {
        self.xtx.ger(weight, x, x, T::one());
        self.ytx.ger(weight, y, x, T::one());
        self.samples += 1;
        self.weight_sum += weight;
    }

    /// Weighted `Σ x xᵀ`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.xtx
    }

    /// Weighted `Σ y xᵀ`.
    pub fn cross(&self) -> &DMatrix<T> {
        &self.ytx
    }

    pub fn weight_sum(&self) -> T {
        self.weight_sum
    }

    /// Adds the sufficient statistics of another accumulator of the same shape.
    pub fn merge(&mut self, other: &Self) {
        self.xtx += &other.xtx;
        self.ytx += &other.ytx;
        self.samples += other.samples;
        self.weight_sum += other.weight_sum;
    }

    /// Ridge solve with the penalty scaled by the total sample weight, so that
    /// `ridge` acts on mean rather than summed statistics.
    pub fn solve_mean(&self, ridge: T) -> Result<DMatrix<T>> {
        self.solve(ridge * self.weight_sum)
    }

    /// Residual cross-moment `Σ w (y - W x) xᵀ`, zero at the unregularized optimum.
    pub fn residual_cross_moment(&self, w: &DMatrix<T>) -> DMatrix<T> {
        &self.ytx - w * &self.xtx
    }

    /// Solves `W (XᵀX + ridge·I) = YᵀX` for `W` (`output_dim x input_dim`).
    pub fn solve(&self, ridge: T) -> Result<DMatrix<T>> {
        if ridge < T::zero() {
            return Err(RpspError::InvalidArgument("ridge must be non-negative".into()));
        }
        let p = self.input_dim();
        let mut gram = self.xtx.clone();
        for i in 0..p {
            gram[(i, i)] += ridge;
        }
        let chol = gram.cholesky().ok_or_else(|| {
            RpspError::Singular(format!("{p}x{p} normal equations are not positive definite"))
        })?;
        if ridge == T::zero() {
            let diag = chol.l_dirty().diagonal();
            let max = diag.iter().fold(T::zero(), |a, &b| a.max(b * b));
            let min = diag.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b * b));
            if min <= max * T::epsilon() * T::of_usize(p.max(1)) * T::of(10.0) {
                return Err(RpspError::Singular(format!(
                    "{p}x{p} normal equations are rank deficient"
                )));
            }
        }
        // W = YᵀX · G⁻¹  <=>  G Wᵀ = (YᵀX)ᵀ
        let wt = chol.solve(&self.ytx.transpose());
        Ok(wt.transpose())
    }
}

/// Prepends a constant 1 to a vector.
pub fn with_bias<T: Scalar>(x: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(x.len() + 1);
    out[0] = T::one();
    out.rows_mut(1, x.len()).copy_from(x);
    out
}
