//! Jittered Cholesky factorization and the handful of dense helpers built on it.
//!
//! Every determinant and inverse in the crate goes through [`CholeskyFactor`].
//! The factorization is first attempted on the matrix as given; if that fails,
//! `eps * mean(diag) * I` is added with `eps` stepping from 1e-10 up to 1e-4 by
//! factors of ten before giving up.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "{what}: expected square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::not_pd(format!("{what} (non-finite entries)")));
        }
        if let Some(chol) = a.clone().cholesky() {
            return Ok(Self {
                l: chol.unpack(),
                jitter: 0.0,
            });
        }
        let n = a.nrows();
        let mean_diag = a.diagonal().sum() / n as f64;
        if !(mean_diag > 0.0) {
            return Err(Error::not_pd(what));
        }
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-12) {
            let jitter = eps * mean_diag;
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += jitter;
            }
            if let Some(chol) = b.cholesky() {
                return Ok(Self {
                    l: chol.unpack(),
                    jitter,
                });
            }
            eps *= 10.0;
        }
        Err(Error::not_pd(what))
    }

    /// Wraps an existing lower-triangular factor with a positive diagonal.
    pub(crate) fn from_lower(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() || l.diagonal().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::not_pd("triangular factor"));
        }
        Ok(Self { l, jitter: 0.0 })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal jitter that had to be added (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `L⁻¹ B`
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `A⁻¹ B`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.solve_lower(b);
        self.l
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let z = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let w = lower_inverse(&self.l);
        symmetrize(w.transpose() * &w)
    }

    /// The factored matrix `L Lᵀ` (including any jitter).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// Inverse of a lower-triangular matrix with a nonzero diagonal. Splits
/// `L = [A 0; B C]` so that `L⁻¹ = [A⁻¹ 0; −C⁻¹BA⁻¹ C⁻¹]`, which puts most of
/// the work into matrix products.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut w = DMatrix::zeros(n, n);
    if n <= 48 {
        for j in 0..n {
            w[(j, j)] = 1.0 / l[(j, j)];
            for i in j + 1..n {
                let s: f64 = (j..i).map(|k| l[(i, k)] * w[(k, j)]).sum();
                w[(i, j)] = -s / l[(i, i)];
            }
        }
        return w;
    }
    let h = n / 2;
    let a_inv = lower_inverse(&l.view((0, 0), (h, h)).into_owned());
    let c_inv = lower_inverse(&l.view((h, h), (n - h, n - h)).into_owned());
    let off = -(&c_inv * l.view((h, 0), (n - h, h)) * &a_inv);
    w.view_mut((0, 0), (h, h)).copy_from(&a_inv);
    w.view_mut((h, h), (n - h, n - h)).copy_from(&c_inv);
    w.view_mut((h, 0), (n - h, h)).copy_from(&off);
    w
}

/// `ln det(I + A)` for symmetric positive semidefinite `A`, via
/// `Σ ln(1 + λᵢ)` so it keeps full relative accuracy when `A` is tiny.
pub fn ln_det_unit_plus(a: &DMatrix<f64>, what: &str) -> Result<f64> {
    let eig = symmetrize(a.clone()).symmetric_eigenvalues();
    let mut acc = 0.0;
    for &l in eig.iter() {
        // PSD up to rounding
        if !(l > -0.5) || !l.is_finite() {
            return Err(Error::not_pd(what));
        }
        acc += l.max(0.0).ln_1p();
    }
    Ok(acc)
}

pub fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(1e-300);
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Row-major vectorization, i.e. `vec(Xᵀ)`.
pub fn vec_rows(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.nrows() * x.ncols(),
        (0..x.nrows()).flat_map(|i| (0..x.ncols()).map(move |j| x[(i, j)])),
    )
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}
