//! Dense linear-algebra primitives and the shared data model.
//!
//! Matrices are `nalgebra` column-major dense matrices. Vectors of length `n`
//! live in observation space, vectors of length `p` in coefficient space.
//! Column indices are zero-based throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition number above which a symmetric matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Response vector and design matrix of a linear model `Y = Xβ + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    x: Matrix,
    y: Vector,
}

impl DesignData {
    pub fn new(x: Matrix, y: Vector) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::dim("design matrix must have at least one row and column"));
        }
        if y.len() != x.nrows() {
            return Err(Error::dim(format!(
                "response has length {} but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn gram(&self) -> GramMatrix {
        gram_unchecked(&self.x)
    }

    /// `XᵀY / n`.
    pub fn xty(&self) -> Vector {
        self.x.tr_mul(&self.y) / self.n() as f64
    }

    /// `Y - Xβ`.
    pub fn residual(&self, beta: &Vector) -> Vector {
        &self.y - &self.x * beta
    }

    pub fn into_parts(self) -> (Matrix, Vector) {
        (self.x, self.y)
    }
}

/// Normalized Gram matrix `Σ̂ = XᵀX / n`, stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Matrix);

impl GramMatrix {
    /// Wraps a symmetric positive semi-definite matrix. The upper triangle is
    /// mirrored after validation so that the stored matrix is exactly symmetric.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::dim("Gram matrix must be square and non-empty"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gram matrix"));
        }
        let scale = m.amax().max(1.0);
        let p = m.nrows();
        for j in 0..p {
            for k in (j + 1)..p {
                if (m[(j, k)] - m[(k, j)]).abs() > 1e-10 * scale {
                    return Err(Error::domain(format!("Gram matrix is not symmetric at ({j}, {k})")));
                }
            }
        }
        let g = Self(mirror_upper(m));
        let tol = 1e-10 * scale * p as f64;
        if g.min_eigenvalue() < -tol {
            return Err(Error::domain("Gram matrix is not positive semi-definite"));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vector {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().max()
    }

    /// `βᵀΣ̂β`.
    pub fn quadratic_form(&self, beta: &Vector) -> f64 {
        beta.dot(&(&self.0 * beta))
    }

    /// Inverse of `Σ̂`; fails when the condition number exceeds [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<Matrix> {
        invert_symmetric(&self.0)
    }
}

/// Sorted set of distinct zero-based column indices in `0..p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    members: Vec<usize>,
    p: usize,
}

impl IndexSet {
    pub fn new(members: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        if let Some(&last) = members.last() {
            if last >= p {
                return Err(Error::domain(format!("index {last} out of range for p = {p}")));
            }
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("duplicate index in index set"));
        }
        Ok(Self { members, p })
    }

    pub fn full(p: usize) -> Self {
        Self { members: (0..p).collect(), p }
    }

    pub fn empty(p: usize) -> Self {
        Self { members: Vec::new(), p }
    }

    /// Active set `{j : β_j ≠ 0}`.
    pub fn support(beta: &Vector) -> Self {
        Self {
            members: beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect(),
            p: beta.len(),
        }
    }

    pub fn complement(&self) -> Self {
        let mut it = self.members.iter().peekable();
        let mut out = Vec::with_capacity(self.p - self.members.len());
        for j in 0..self.p {
            if it.peek() == Some(&&j) {
                it.next();
            } else {
                out.push(j);
            }
        }
        Self { members: out, p: self.p }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }
}

/// `‖v‖_n = √(vᵀv / n)`.
pub fn norm_n(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::dim("norm_n of an empty vector"));
    }
    Ok((v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `Σ̂ = XᵀX / n`, upper triangle computed and mirrored.
pub fn gram(x: &Matrix) -> Result<GramMatrix> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::dim("design matrix must be non-empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    Ok(gram_unchecked(x))
}

pub(crate) fn gram_unchecked(x: &Matrix) -> GramMatrix {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let mut g = Matrix::zeros(p, p);
    for j in 0..p {
        let xj = x.column(j);
        for k in j..p {
            let v = xj.dot(&x.column(k)) / n;
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    GramMatrix(g)
}

/// `|||A|||₁ = max_j Σ_k |A_{k,j}|`, the maximum absolute column sum.
pub fn l1_operator_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Entrywise `‖A‖_∞ = max_{k,j} |A_{k,j}|`.
pub fn sup_norm(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `β_S`: zero outside `S`.
pub fn restrict(beta: &Vector, s: &IndexSet) -> Result<Vector> {
    if s.p() != beta.len() {
        return Err(Error::dim(format!(
            "index set over p = {} applied to vector of length {}",
            s.p(),
            beta.len()
        )));
    }
    let mut out = Vector::zeros(beta.len());
    for j in s.iter() {
        out[j] = beta[j];
    }
    Ok(out)
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Copies the upper triangle onto the lower one.
pub fn mirror_upper(mut m: Matrix) -> Matrix {
    let p = m.nrows();
    for j in 0..p {
        for k in (j + 1)..p {
            m[(k, j)] = m[(j, k)];
        }
    }
    m
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition,
/// rejecting condition numbers above [`MAX_CONDITION`].
pub fn invert_symmetric(m: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 || max / min >= MAX_CONDITION {
        let cond = if min <= 0.0 { f64::INFINITY } else { max / min };
        return Err(Error::Singular(cond));
    }
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::Singular(max / min))?;
    Ok(mirror_upper(chol.inverse()))
}
