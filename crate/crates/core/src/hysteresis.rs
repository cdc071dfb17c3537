//! Scalar and nodewise calculus of the hysteresis constraint `f_*(u) ≤ v ≤ f^*(u)`.

use serde::Serialize;

use crate::curves::BoundaryCurves;
use crate::spatial::{Field, Grid1D, GridMismatch};

/// The five shapes the subdifferential of the interval indicator can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SubdiffBranch {
    /// `v` outside the interval.
    Empty,
    /// `[0, ∞)`: `v` on the upper curve, interval nondegenerate.
    UpperRay,
    /// `{0}`: strictly inside.
    Zero,
    /// `(-∞, 0]`: `v` on the lower curve, interval nondegenerate.
    LowerRay,
    /// All of ℝ: `v = f_*(u) = f^*(u)`.
    FullLine,
}

pub fn subdiff_branch(curves: &dyn BoundaryCurves, u: f64, v: f64) -> SubdiffBranch {
    let (lo, hi) = curves.bounds(u);
    if v < lo || v > hi {
        SubdiffBranch::Empty
    } else if lo == hi {
        SubdiffBranch::FullLine
    } else if v == hi {
        SubdiffBranch::UpperRay
    } else if v == lo {
        SubdiffBranch::LowerRay
    } else {
        SubdiffBranch::Zero
    }
}

/// Yosida regularization `(1/λ)[v - f^*(u)]^+ - (1/λ)[f_*(u) - v]^+`.
pub fn yosida(curves: &dyn BoundaryCurves, lambda: f64, u: f64, v: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    let (lo, hi) = curves.bounds(u);
    yosida_with_bounds(lo, hi, lambda, v)
}

#[inline]
pub fn yosida_with_bounds(lo: f64, hi: f64, lambda: f64, v: f64) -> f64 {
    (v - hi).max(0.0) / lambda - (lo - v).max(0.0) / lambda
}

/// Projection of `v` onto `[f_*(u), f^*(u)]`.
pub fn project(curves: &dyn BoundaryCurves, u: f64, v: f64) -> f64 {
    let (lo, hi) = curves.bounds(u);
    v.min(hi).max(lo)
}

/// Nodewise Yosida regularization of a field pair.
pub fn yosida_field(
    grid: &Grid1D,
    curves: &dyn BoundaryCurves,
    lambda: f64,
    u: &Field,
    v: &Field,
) -> Result<Field, GridMismatch> {
    grid.check(u)?;
    grid.check(v)?;
    Ok(Field::from_vec(
        u.iter().zip(v.iter()).map(|(&u, &v)| yosida(curves, lambda, u, v)).collect(),
    ))
}

/// `(1/2λ)|[v - f^*(u)]^+|²_H + (1/2λ)|[f_*(u) - v]^+|²_H`.
pub fn yosida_energy(
    grid: &Grid1D,
    curves: &dyn BoundaryCurves,
    lambda: f64,
    u: &Field,
    v: &Field,
) -> Result<f64, GridMismatch> {
    grid.check(u)?;
    grid.check(v)?;
    let sum: f64 = u
        .iter()
        .zip(v.iter())
        .map(|(&u, &v)| {
            let (lo, hi) = curves.bounds(u);
            let up = (v - hi).max(0.0);
            let down = (lo - v).max(0.0);
            up * up + down * down
        })
        .sum();
    Ok(grid.spacing() * sum / (2.0 * lambda))
}

/// The pairing `S = (ξ_j - ξ_i)(v_j - v_i)` of two Yosida values and the
/// magnitude `δ` of its lower bound, `S ≥ -δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectPair {
    pub s_value: f64,
    pub delta: f64,
}

impl DefectPair {
    pub fn holds(&self, slack: f64) -> bool {
        self.s_value >= -self.delta - slack
    }
}

/// One side of a defect evaluation: regularization parameter and state.
#[derive(Debug, Clone, Copy)]
pub struct DefectSide {
    pub lambda: f64,
    pub u: f64,
    pub v: f64,
}

pub fn monotonicity_defect(curves: &dyn BoundaryCurves, j: DefectSide, i: DefectSide) -> DefectPair {
    let (lo_j, hi_j) = curves.bounds(j.u);
    let (lo_i, hi_i) = curves.bounds(i.u);
    let xi_j = yosida_with_bounds(lo_j, hi_j, j.lambda, j.v);
    let xi_i = yosida_with_bounds(lo_i, hi_i, i.lambda, i.v);
    let s_value = (xi_j - xi_i) * (j.v - i.v);
    let delta = (j.lambda + i.lambda) * xi_j.abs() * xi_i.abs()
        + (xi_j.abs() + xi_i.abs()) * ((hi_j - hi_i).abs() + (lo_j - lo_i).abs());
    DefectPair { s_value, delta }
}

/// Position of `v` relative to the constraint, as used to enumerate the
/// nine sign configurations of the defect estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Above,
    Inside,
    Below,
}

/// Region of the `j` side: above means `v ≥ f^*`, below means `v ≤ f_*`
/// (checked after above, so a degenerate interval counts as above).
pub fn region_j(curves: &dyn BoundaryCurves, u: f64, v: f64) -> Region {
    let (lo, hi) = curves.bounds(u);
    if v >= hi {
        Region::Above
    } else if v <= lo {
        Region::Below
    } else {
        Region::Inside
    }
}

/// Region of the `i` side: above means `v ≥ f^*`, below means `v < f_*`.
pub fn region_i(curves: &dyn BoundaryCurves, u: f64, v: f64) -> Region {
    let (lo, hi) = curves.bounds(u);
    if v >= hi {
        Region::Above
    } else if v < lo {
        Region::Below
    } else {
        Region::Inside
    }
}
