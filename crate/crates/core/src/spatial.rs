//! Uniform 1-D grid on `(0, L)` with homogeneous Dirichlet boundary values.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("field has {found} values, grid has {expected} interior nodes")]
pub struct GridMismatch {
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid length must be positive and finite, got {0}")]
    Length(f64),
    #[error("grid needs at least one interior node")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid1D {
    length: f64,
    n_interior: usize,
    spacing: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    length: f64,
    n_interior: usize,
}

impl TryFrom<GridSpec> for Grid1D {
    type Error = GridError;

    fn try_from(s: GridSpec) -> Result<Self, GridError> {
        Grid1D::new(s.length, s.n_interior)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec {
            length: g.length,
            n_interior: g.n_interior,
        }
    }
}

impl Grid1D {
    pub fn new(length: f64, n_interior: usize) -> Result<Self, GridError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(GridError::Length(length));
        }
        if n_interior == 0 {
            return Err(GridError::Empty);
        }
        Ok(Grid1D {
            length,
            n_interior,
            spacing: length / (n_interior + 1) as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Coordinate of interior node `i` (0-based), i.e. `(i + 1) h`.
    pub fn x(&self, i: usize) -> f64 {
        self.spacing * (i + 1) as f64
    }

    pub fn check(&self, w: &Field) -> Result<(), GridMismatch> {
        if w.len() == self.n_interior {
            Ok(())
        } else {
            Err(GridMismatch {
                expected: self.n_interior,
                found: w.len(),
            })
        }
    }

    /// `k`-th Dirichlet eigenvalue of `-Δ_h`: `(4/h²) sin²(kπh/(2L))`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let s = (k as f64 * std::f64::consts::PI * self.spacing / (2.0 * self.length)).sin();
        4.0 * s * s / (self.spacing * self.spacing)
    }

    /// Eigenvector `sin(kπx_i/L)` matching [`Grid1D::eigenvalue`].
    pub fn eigenvector(&self, k: usize) -> Field {
        Field::from_fn(self, |x| (k as f64 * std::f64::consts::PI * x / self.length).sin())
    }
}

/// Values at the interior nodes; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(grid: &Grid1D) -> Self {
        Field(vec![0.0; grid.n_interior()])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Field((0..grid.n_interior()).map(|i| f(grid.x(i))).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn linf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (y, x) in self.0.iter_mut().zip(&x.0) {
            *y += a * x;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field(self.0.iter().map(|x| a * x).collect())
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Discrete inner product `h Σ w_i z_i`.
pub fn inner(grid: &Grid1D, w: &[f64], z: &[f64]) -> f64 {
    grid.spacing() * w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
}

/// Discrete `|w|_H`.
pub fn l2(grid: &Grid1D, w: &[f64]) -> f64 {
    inner(grid, w, w).sqrt()
}

/// Three-point Dirichlet Laplacian.
pub fn laplacian(grid: &Grid1D, w: &Field) -> Result<Field, GridMismatch> {
    grid.check(w)?;
    let n = w.len();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    Ok(Field(
        (0..n)
            .map(|i| {
                let left = if i > 0 { w[i - 1] } else { 0.0 };
                let right = if i + 1 < n { w[i + 1] } else { 0.0 };
                (left - 2.0 * w[i] + right) * inv_h2
            })
            .collect(),
    ))
}

/// `(αI - βΔ)w` with the three-point Laplacian.
pub fn apply_helmholtz(grid: &Grid1D, alpha: f64, beta: f64, w: &Field) -> Result<Field, GridMismatch> {
    let lap = laplacian(grid, w)?;
    Ok(Field(w.iter().zip(lap.iter()).map(|(w, l)| alpha * w - beta * l).collect()))
}

/// Factored `(αI - βΔ)` for repeated solves (Thomas algorithm).
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    off: f64,
    /// Modified upper-diagonal coefficients of the forward sweep.
    c_prime: Vec<f64>,
    /// Reciprocals of the modified pivots.
    inv_pivot: Vec<f64>,
}

impl HelmholtzSolver {
    pub fn new(grid: &Grid1D, alpha: f64, beta: f64) -> Self {
        assert!(alpha > 0.0 && beta >= 0.0, "need alpha > 0 and beta >= 0");
        let n = grid.n_interior();
        let r = beta / (grid.spacing() * grid.spacing());
        let diag = alpha + 2.0 * r;
        let off = -r;
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = diag - off * prev_c;
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = off / pivot;
            prev_c = c_prime[i];
        }
        HelmholtzSolver {
            off,
            c_prime,
            inv_pivot,
        }
    }

    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        debug_assert_eq!(n, self.c_prime.len());
        let mut prev = 0.0;
        for i in 0..n {
            prev = (rhs[i] - self.off * prev) * self.inv_pivot[i];
            out[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            out[i] -= self.c_prime[i] * out[i + 1];
        }
    }

    pub fn solve(&self, rhs: &Field) -> Field {
        let mut out = Field(vec![0.0; rhs.len()]);
        self.solve_into(rhs, &mut out);
        out
    }
}

/// Solves `(αI - βΔ)w = rhs`.
pub fn solve_helmholtz(grid: &Grid1D, alpha: f64, beta: f64, rhs: &Field) -> Result<Field, GridMismatch> {
    grid.check(rhs)?;
    Ok(HelmholtzSolver::new(grid, alpha, beta).solve(rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2_h: f64,
    pub h1_semi: f64,
    pub linf: f64,
}

/// `|∇w|_H` including the two boundary differences.
pub fn grad_norm(grid: &Grid1D, w: &[f64]) -> f64 {
    let h = grid.spacing();
    let n = w.len();
    let mut sum = 0.0;
    for k in 0..=n {
        let left = if k > 0 { w[k - 1] } else { 0.0 };
        let right = if k < n { w[k] } else { 0.0 };
        let d = (right - left) / h;
        sum += d * d;
    }
    (h * sum).sqrt()
}

pub fn norms(grid: &Grid1D, w: &Field) -> Result<Norms, GridMismatch> {
    grid.check(w)?;
    Ok(Norms {
        l2_h: l2(grid, w),
        h1_semi: grad_norm(grid, w),
        linf: w.linf(),
    })
}

/// Best constant in `|w|²_H ≤ C_P |∇w|²_H`, i.e. the reciprocal of the
/// smallest Dirichlet eigenvalue of the discrete Laplacian.
pub fn poincare_constant(grid: &Grid1D) -> f64 {
    1.0 / grid.eigenvalue(1)
}
