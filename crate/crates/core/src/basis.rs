//! B-spline bases and the two penalty families.
//!
//! Smoothed effects use a clamped B-spline basis with interior knots at
//! empirical quantiles of the covariate and a difference penalty on the
//! coefficients. Functional effects use equally spaced interior knots over
//! the functional grid and a mixture of the zeroth- and second-derivative
//! Gram matrices.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 3;

/// Clamped B-spline basis on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BSplineBasis {
    degree: usize,
    interior_knots: Vec<f64>,
    lo: f64,
    hi: f64,
    /// Full knot vector with the boundary knots repeated `degree + 1` times.
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(degree: usize, interior_knots: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "basis boundary must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        let mut prev = lo;
        for &k in &interior_knots {
            if !(k > prev) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "interior knots must be strictly increasing inside ({lo}, {hi})"
                )));
            }
            prev = k;
        }
        if !(prev < hi) {
            return Err(Error::InvalidArgument(alloc::format!(
                "last interior knot {prev} must lie below {hi}"
            )));
        }
        let mut knots = Vec::with_capacity(interior_knots.len() + 2 * (degree + 1));
        knots.extend(core::iter::repeat(lo).take(degree + 1));
        knots.extend_from_slice(&interior_knots);
        knots.extend(core::iter::repeat(hi).take(degree + 1));
        Ok(Self { degree, interior_knots, lo, hi, knots })
    }

    /// Basis with `num_basis` functions and interior knots at equally spaced
    /// positions on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, num_basis: usize, degree: usize) -> Result<Self> {
        let n_int = interior_count(num_basis, degree)?;
        let step = (hi - lo) / (n_int + 1) as f64;
        let interior = (1..=n_int).map(|j| lo + step * j as f64).collect();
        Self::new(degree, interior, lo, hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn num_basis(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    /// Number of `xs` that fall outside `[lo, hi]` and would be clamped.
    pub fn count_out_of_range(&self, xs: &[f64]) -> usize {
        xs.iter().filter(|&&x| x < self.lo || x > self.hi).count()
    }

    fn span(&self, x: f64) -> usize {
        let last = self.num_basis() - 1;
        if x >= self.hi {
            return last;
        }
        if x <= self.lo {
            return self.degree;
        }
        // first index with knots[idx] > x, minus one
        let idx = self.knots[self.degree..=last + 1].partition_point(|&k| k <= x) + self.degree;
        idx - 1
    }

    /// Nonzero basis functions and their derivatives up to `order` at `x`
    /// (clamped to the boundary). Row `d` of the result holds the `d`-th
    /// derivatives of basis functions `span - degree ..= span`.
    fn local_derivatives(&self, x: f64, order: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree;
        let x = x.clamp(self.lo, self.hi);
        let span = self.span(x);
        let u = &self.knots;

        // ndu holds basis values (upper triangle) and knot differences (lower).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        for (j, d0) in ders[0].iter_mut().enumerate() {
            *d0 = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=order.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                core::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().take(order.min(p) + 1).skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        (span, ders)
    }

    /// Row of all `num_basis` basis functions (or their `deriv`-th derivative) at `x`.
    pub fn row(&self, x: f64, deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        self.fill_row(x, deriv, &mut out);
        out
    }

    fn fill_row(&self, x: f64, deriv: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if deriv > self.degree {
            return;
        }
        let (span, ders) = self.local_derivatives(x, deriv);
        let first = span - self.degree;
        for (j, v) in ders[deriv].iter().enumerate() {
            out[first + j] = *v;
        }
    }

    /// `n x num_basis` matrix of basis values at `xs`; points outside
    /// `[lo, hi]` are clamped to the boundary.
    pub fn evaluate(&self, xs: &[f64]) -> DMatrix<f64> {
        self.evaluate_derivative(xs, 0)
    }

    pub fn evaluate_derivative(&self, xs: &[f64], deriv: usize) -> DMatrix<f64> {
        let k = self.num_basis();
        let mut m = DMatrix::zeros(xs.len(), k);
        let mut row = vec![0.0; k];
        for (i, &x) in xs.iter().enumerate() {
            self.fill_row(x, deriv, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

fn interior_count(num_basis: usize, degree: usize) -> Result<usize> {
    if num_basis <= degree {
        return Err(Error::InvalidArgument(alloc::format!(
            "number of basis functions ({num_basis}) must exceed the degree ({degree})"
        )));
    }
    Ok(num_basis - degree - 1)
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Basis for a smoothed effect: interior knots at empirical quantiles of
/// `x_values`, boundary knots at the sample minimum and maximum. Falls back
/// to equally spaced knots when ties make the quantiles collide.
pub fn make_basis(x_values: &[f64], num_basis: usize, degree: usize) -> Result<BSplineBasis> {
    let n_int = interior_count(num_basis, degree)?;
    if x_values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(alloc::string::String::from("covariate values")));
    }
    let mut sorted = x_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) if lo < hi => (lo, hi),
        _ => return Err(Error::DegenerateCovariate(alloc::string::String::from("x"))),
    };
    let interior: Vec<f64> = (1..=n_int)
        .map(|j| quantile_sorted(&sorted, j as f64 / (n_int + 1) as f64))
        .collect();
    BSplineBasis::new(degree, interior, lo, hi).or_else(|_| BSplineBasis::uniform(lo, hi, num_basis, degree))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PenaltyKind {
    Difference { order: usize },
    DerivativeMixture { xi_pen: f64 },
}

/// Symmetric positive semidefinite penalty acting as a prior precision scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: PenaltyKind,
}

impl PenaltyMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `D' D` where `D` is the `order`-th forward difference operator on
/// `num_basis` coefficients.
pub fn difference_penalty(num_basis: usize, order: usize) -> Result<PenaltyMatrix> {
    if order == 0 || order >= num_basis {
        return Err(Error::InvalidArgument(alloc::format!(
            "difference order {order} must be in 1..{num_basis}"
        )));
    }
    let mut d = DMatrix::<f64>::identity(num_basis, num_basis);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        let next = DMatrix::from_fn(rows, num_basis, |i, j| d[(i + 1, j)] - d[(i, j)]);
        d = next;
    }
    Ok(PenaltyMatrix { matrix: d.tr_mul(&d), kind: PenaltyKind::Difference { order } })
}

/// Trapezoid weights for a sorted grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let t = grid.len();
    let mut w = vec![0.0; t];
    if t < 2 {
        return w;
    }
    for j in 0..t - 1 {
        let h = 0.5 * (grid[j + 1] - grid[j]);
        w[j] += h;
        w[j + 1] += h;
    }
    w
}

/// Gram matrix of the `deriv_order`-th derivatives of the basis functions,
/// integrated over `grid` with the trapezoid rule.
pub fn derivative_penalty(basis: &BSplineBasis, grid: &[f64], deriv_order: usize) -> Result<DMatrix<f64>> {
    if deriv_order > basis.degree() {
        return Err(Error::InvalidArgument(alloc::format!(
            "derivative order {deriv_order} exceeds spline degree {}",
            basis.degree()
        )));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(alloc::string::String::from(
            "derivative penalty grid must be strictly increasing with at least two points",
        )));
    }
    let b = basis.evaluate_derivative(grid, deriv_order);
    let w = trapezoid_weights(grid);
    let weighted = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * w[i]);
    let gram = b.tr_mul(&weighted);
    Ok(symmetrize(gram))
}

/// `xi_pen * delta0 + (1 - xi_pen) * delta2`.
pub fn functional_penalty(delta0: &DMatrix<f64>, delta2: &DMatrix<f64>, xi_pen: f64) -> Result<PenaltyMatrix> {
    if !(0.0..=1.0).contains(&xi_pen) {
        return Err(Error::Domain { what: "penalty mixture weight must lie in [0, 1]", value: xi_pen });
    }
    if delta0.shape() != delta2.shape() || delta0.nrows() != delta0.ncols() {
        return Err(Error::DimensionMismatch {
            what: alloc::string::String::from("derivative penalty matrices"),
            expected: delta0.nrows(),
            found: delta2.nrows(),
        });
    }
    let matrix = if xi_pen == 1.0 {
        delta0.clone()
    } else if xi_pen == 0.0 {
        delta2.clone()
    } else {
        symmetrize(delta0 * xi_pen + delta2 * (1.0 - xi_pen))
    };
    Ok(PenaltyMatrix { matrix, kind: PenaltyKind::DerivativeMixture { xi_pen } })
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}
