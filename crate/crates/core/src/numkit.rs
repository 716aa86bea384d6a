//! Dense real-matrix primitives: numerical rank, Moore–Penrose inverse,
//! matrix exponential and characteristic polynomial.
//!
//! Exact rank and zero tests do not survive floating point, so every
//! consumer passes a [`Tolerance`] that pins the cutoffs in one place.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical thresholds shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Relative singular-value cutoff: σ counts when σ > rank_rel · σ_max · max(rows, cols).
    pub rank_rel: f64,
    /// Absolute residual floor.
    pub residual_abs: f64,
    /// Residual floor relative to the magnitude of the compared quantity.
    pub residual_rel: f64,
    /// Absolute floor below which an impulse-response sample is zero.
    pub nonzero_abs: f64,
    /// A Markov parameter or impulse sample is significant only above
    /// `impulse_rel` times the peak magnitude of the same channel.
    pub impulse_rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rank_rel: 1e-9,
            residual_abs: 1e-9,
            residual_rel: 1e-9,
            nonzero_abs: 1e-12,
            impulse_rel: 1e-2,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rank_rel", self.rank_rel),
            ("residual_abs", self.residual_abs),
            ("residual_rel", self.residual_rel),
            ("nonzero_abs", self.nonzero_abs),
            ("impulse_rel", self.impulse_rel),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_rank_rel(mut self, v: f64) -> Self {
        self.rank_rel = v;
        self
    }

    pub fn with_residual(mut self, abs: f64, rel: f64) -> Self {
        self.residual_abs = abs;
        self.residual_rel = rel;
        self
    }

    pub fn with_impulse_rel(mut self, v: f64) -> Self {
        self.impulse_rel = v;
        self
    }

    /// Threshold above which a sample of a channel with peak magnitude
    /// `peak` counts as nonzero.
    pub fn significance(&self, peak: f64) -> f64 {
        self.nonzero_abs.max(self.impulse_rel * peak)
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Build a matrix from row slices. Rows must have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("ragged rows".into()));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn rank_cutoff(m: &Matrix, sigma_max: f64, tol: &Tolerance) -> f64 {
    tol.rank_rel * sigma_max * m.nrows().max(m.ncols()) as f64
}

fn nonempty(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput("matrix is empty".into()));
    }
    Ok(())
}

/// Number of singular values above the relative cutoff. Zero for the zero matrix.
pub fn numerical_rank(m: &Matrix, tol: &Tolerance) -> Result<usize> {
    nonempty(m)?;
    ensure_finite(m, "matrix")?;
    let sv = m.clone().svd(false, false).singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    let cutoff = rank_cutoff(m, sigma_max, tol);
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

/// Truncated Moore–Penrose pseudo-inverse. Singular values at or below the
/// rank cutoff are treated as zero. Returns the inverse and the rank used.
pub fn pseudo_inverse(m: &Matrix, tol: &Tolerance) -> Result<(Matrix, usize)> {
    nonempty(m)?;
    ensure_finite(m, "matrix")?;
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let mut pinv = Matrix::zeros(m.ncols(), m.nrows());
    if sigma_max == 0.0 {
        return Ok((pinv, 0));
    }
    let cutoff = rank_cutoff(m, sigma_max, tol);
    let mut rank = 0;
    for (k, &s) in sv.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            // pinv += v_k · u_kᵀ / σ_k
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            pinv += (vk * uk.transpose()) / s;
        }
    }
    Ok((pinv, rank))
}

/// Minimum-norm right inverse of a full-row-rank matrix.
pub fn pseudo_right_inverse(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let (pinv, rank) = pseudo_inverse(m, tol)?;
    if rank < m.nrows() {
        return Err(Error::RankDeficient {
            observed: rank,
            required: m.nrows(),
        });
    }
    Ok(pinv)
}

fn norm_one(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const EXPM_TERMS: usize = 20;

/// e^M by scaling and squaring: scale until ‖M/2^s‖₁ ≤ 1/2, sum the Taylor
/// series through the 20th term, then square s times.
pub fn matrix_exponential(m: &Matrix) -> Result<Matrix> {
    ensure_square(m, "matrix_exponential argument")?;
    ensure_finite(m, "matrix_exponential argument")?;
    let n = m.nrows();
    let norm = norm_one(m);
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > 0.5 {
        scaled_norm /= 2.0;
        squarings += 1;
    }
    let x = m / 2f64.powi(squarings as i32);

    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=EXPM_TERMS {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Coefficients a₀..a_{n−1} of the monic characteristic polynomial
/// λⁿ + a_{n−1}λ^{n−1} + … + a₀, via the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(m: &Matrix) -> Result<Vec<f64>> {
    ensure_square(m, "characteristic_polynomial argument")?;
    ensure_finite(m, "characteristic_polynomial argument")?;
    let n = m.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let identity = Matrix::identity(n, n);
    let mut mk = Matrix::zeros(n, n);
    for k in 1..=n {
        mk = m * &mk + &identity * coeffs[n - k + 1];
        coeffs[n - k] = -(m * &mk).trace() / k as f64;
    }
    coeffs.truncate(n);
    Ok(coeffs)
}

/// ‖Aⁿ + Σ aᵢAⁱ‖_max for the given coefficients.
pub fn cayley_hamilton_residual(m: &Matrix, coeffs: &[f64]) -> f64 {
    let n = m.nrows();
    let mut power = Matrix::identity(n, n);
    let mut acc = Matrix::zeros(n, n);
    for &a in coeffs {
        acc += &power * a;
        power = &power * m;
    }
    acc += power;
    max_abs(&acc)
}

/// Square-matrix power by repeated multiplication.
pub fn matrix_power(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}
