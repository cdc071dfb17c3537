//! Hysteresis boundary curves `f_* ≤ f^*` and their mollifications.
//!
//! All curves are truncated: the argument is clamped to `[-B, B]` before
//! evaluation, which makes every admissible curve bounded and globally
//! Lipschitz.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{self, Expr, LipschitzProbe, Var};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve `{which}` failed to evaluate at u = {u}: {source}")]
    Eval {
        which: &'static str,
        u: f64,
        #[source]
        source: exprlang::EvalError,
    },
    #[error("curve `{which}` references `{var}`; curves may only depend on `u`")]
    BadVariable { which: &'static str, var: &'static str },
    #[error("lower curve exceeds upper curve at u = {u} ({lower} > {upper})")]
    Order { u: f64, lower: f64, upper: f64 },
    #[error("curves differ at u = {u}, outside the coincidence interval ({a}, {b})")]
    Coincidence { u: f64, a: f64, b: f64 },
    #[error("coincidence interval must satisfy a < b (got a = {a}, b = {b})")]
    Interval { a: f64, b: f64 },
    #[error("invalid curve parameter: {0}")]
    Parameter(String),
}

/// Anything that yields the admissible interval `[lower(u), upper(u)]`.
pub trait BoundaryCurves: Send + Sync {
    fn bounds(&self, u: f64) -> (f64, f64);

    /// Common Lipschitz constant of both curves.
    fn lipschitz(&self) -> f64;
}

/// One boundary curve, before truncation.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarCurve {
    /// `clamp(u + shift, -level, level)`
    ShiftedClamp { shift: f64, level: f64 },
    Constant(f64),
    Expr(Expr),
}

impl ScalarCurve {
    fn eval_raw(&self, u: f64) -> Result<f64, exprlang::EvalError> {
        match self {
            ScalarCurve::ShiftedClamp { shift, level } => Ok((u + shift).clamp(-level, *level)),
            ScalarCurve::Constant(c) => Ok(*c),
            ScalarCurve::Expr(e) => e.eval(0.0, u, 0.0),
        }
    }
}

/// The pair `(f_*, f^*)` with its Lipschitz constant `L0`, coincidence
/// interval `(a, b)` and the sup bound of both curves over the truncation box.
///
/// Construct through [`CurvePair::new`], which validates ordering and
/// coincidence on a dense sample and rejects expressions that fail to evaluate.
#[derive(Debug, Clone)]
pub struct CurvePair {
    lower: ScalarCurve,
    upper: ScalarCurve,
    pub lipschitz_l0: f64,
    pub coincide_a: f64,
    pub coincide_b: f64,
    pub sup_bound: f64,
    pub truncation: f64,
    pub lipschitz_estimated: bool,
}

const VALIDATION_SAMPLES: usize = 100_001;
const LIPSCHITZ_PAIRS: usize = 100_000;

impl CurvePair {
    /// `lipschitz`: `None` estimates `L0` by sampling difference quotients.
    pub fn new(
        lower: ScalarCurve,
        upper: ScalarCurve,
        coincide_a: f64,
        coincide_b: f64,
        lipschitz: Option<f64>,
        truncation: f64,
    ) -> Result<Self, CurveError> {
        if !(coincide_a < coincide_b) {
            return Err(CurveError::Interval {
                a: coincide_a,
                b: coincide_b,
            });
        }
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(CurveError::Parameter(format!(
                "truncation radius must be positive, got {truncation}"
            )));
        }
        for (which, c) in [("lower", &lower), ("upper", &upper)] {
            if let ScalarCurve::Expr(e) = c {
                for var in [Var::T, Var::V] {
                    if e.uses_var(var) {
                        let var = if var == Var::T { "t" } else { "v" };
                        return Err(CurveError::BadVariable { which, var });
                    }
                }
            }
        }
        let mut pair = CurvePair {
            lower,
            upper,
            lipschitz_l0: 0.0,
            coincide_a,
            coincide_b,
            sup_bound: 0.0,
            truncation,
            lipschitz_estimated: lipschitz.is_none(),
        };

        // Dense validation sweep over the truncation box. Evaluation failures,
        // ordering and coincidence are all checked here so that later
        // evaluations can be infallible.
        let b = truncation;
        let step = 2.0 * b / (VALIDATION_SAMPLES - 1) as f64;
        let mut sup: f64 = 0.0;
        for k in 0..VALIDATION_SAMPLES {
            let u = -b + step * k as f64;
            let lo = pair
                .lower
                .eval_raw(u)
                .map_err(|source| CurveError::Eval { which: "lower", u, source })?;
            let hi = pair
                .upper
                .eval_raw(u)
                .map_err(|source| CurveError::Eval { which: "upper", u, source })?;
            if lo > hi {
                return Err(CurveError::Order { u, lower: lo, upper: hi });
            }
            if (u <= coincide_a || u >= coincide_b) && lo != hi {
                return Err(CurveError::Coincidence {
                    u,
                    a: coincide_a,
                    b: coincide_b,
                });
            }
            sup = sup.max(lo.abs()).max(hi.abs());
        }

        pair.lipschitz_l0 = match lipschitz {
            Some(l) if l >= 0.0 && l.is_finite() => l,
            Some(l) => {
                return Err(CurveError::Parameter(format!(
                    "Lipschitz constant must be nonnegative, got {l}"
                )))
            }
            None => pair.estimate_lipschitz(),
        };
        // Between samples a Lipschitz function moves by at most L0 * step / 2.
        pair.sup_bound = match (&pair.lower, &pair.upper) {
            (ScalarCurve::ShiftedClamp { .. } | ScalarCurve::Constant(_), ScalarCurve::ShiftedClamp { .. } | ScalarCurve::Constant(_)) => sup,
            _ => sup + 0.5 * pair.lipschitz_l0 * step,
        };
        Ok(pair)
    }

    /// The truncated play pair `f_* = clamp(u - w, -c, c)`, `f^* = clamp(u + w, -c, c)`.
    /// Coincides outside `(-(c + w), c + w)`, Lipschitz constant 1.
    pub fn truncated_play(width: f64, level: f64, truncation: f64) -> Result<Self, CurveError> {
        if !(width > 0.0 && level > 0.0) {
            return Err(CurveError::Parameter(format!(
                "truncated_play needs width > 0 and level > 0 (got {width}, {level})"
            )));
        }
        let edge = level + width;
        CurvePair::new(
            ScalarCurve::ShiftedClamp { shift: -width, level },
            ScalarCurve::ShiftedClamp { shift: width, level },
            -edge,
            edge,
            Some(1.0),
            truncation,
        )
    }

    /// `f_* = f^* = curve`: the constraint pins `v` to a single value.
    pub fn coincident(curve: ScalarCurve, lipschitz: Option<f64>, truncation: f64) -> Result<Self, CurveError> {
        CurvePair::new(curve.clone(), curve, -1.0, 1.0, lipschitz, truncation)
    }

    /// The pair used throughout the examples and tests: width 1, level 1, `a = -2`, `b = 2`.
    pub fn canonical() -> Self {
        CurvePair::truncated_play(1.0, 1.0, 10.0).expect("canonical pair is valid")
    }

    /// `(f_*(u), f^*(u))`.
    pub fn eval_pair(&self, u: f64) -> (f64, f64) {
        let u = u.clamp(-self.truncation, self.truncation);
        // validated on construction; a failure here can only come from a
        // point strictly between two validation samples
        let lo = self.lower.eval_raw(u).unwrap_or(f64::NAN);
        let hi = self.upper.eval_raw(u).unwrap_or(f64::NAN);
        (lo, hi)
    }

    fn estimate_lipschitz(&self) -> f64 {
        let b = self.truncation;
        let mut best: f64 = 0.0;
        for c in [&self.lower, &self.upper] {
            let l = match c {
                ScalarCurve::ShiftedClamp { .. } => 1.0,
                ScalarCurve::Constant(_) => 0.0,
                ScalarCurve::Expr(e) => exprlang::estimate_lipschitz(
                    e,
                    &LipschitzProbe {
                        var: Var::U,
                        u_range: (-b, b),
                        v_range: (0.0, 0.0),
                        t_range: (0.0, 0.0),
                        samples: LIPSCHITZ_PAIRS,
                        seed: 0x5eed,
                    },
                ),
            };
            best = best.max(l);
        }
        best
    }

    pub fn describe(&self) -> (String, String) {
        fn show(c: &ScalarCurve) -> String {
            match c {
                ScalarCurve::ShiftedClamp { shift, level } => {
                    format!("clamp(u + {shift:?}, -{level:?}, {level:?})")
                }
                ScalarCurve::Constant(c) => format!("{c:?}"),
                ScalarCurve::Expr(e) => e.to_string(),
            }
        }
        (show(&self.lower), show(&self.upper))
    }
}

impl BoundaryCurves for CurvePair {
    fn bounds(&self, u: f64) -> (f64, f64) {
        self.eval_pair(u)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz_l0
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Unnormalized bump `exp(-1/(1-s^2))` on `(-1, 1)`.
pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Convolution against `ρ_ε(s) = ρ(s/ε)/ε` with the standard bump `ρ`,
/// evaluated by Gauss–Legendre quadrature on the kernel support.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub epsilon: f64,
    pub quadrature_order: usize,
    /// Normalization so that the quadrature of `ρ` equals one.
    pub kernel_scale: f64,
    nodes: Vec<f64>,
    /// Quadrature weight times kernel value; sums to one.
    mass: Vec<f64>,
}

pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

impl Mollifier {
    pub fn new(epsilon: f64, quadrature_order: usize) -> Result<Self, CurveError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CurveError::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if quadrature_order == 0 {
            return Err(CurveError::Parameter("quadrature order must be positive".into()));
        }
        let (nodes, weights) = gauss_legendre(quadrature_order);
        let raw: Vec<f64> = nodes.iter().zip(&weights).map(|(&s, &w)| w * bump(s)).collect();
        let total: f64 = raw.iter().sum();
        let mass = raw.iter().map(|m| m / total).collect();
        Ok(Mollifier {
            epsilon,
            quadrature_order,
            kernel_scale: 1.0 / total,
            nodes,
            mass,
        })
    }

    /// Normalized kernel `c·exp(-1/(1-s^2))`.
    pub fn kernel(&self, s: f64) -> f64 {
        self.kernel_scale * bump(s)
    }

    /// Quadrature of the normalized kernel over `[-1, 1]`.
    pub fn kernel_integral(&self) -> f64 {
        let (nodes, weights) = gauss_legendre(self.quadrature_order);
        nodes.iter().zip(&weights).map(|(&s, &w)| w * self.kernel(s)).sum()
    }

    /// `∫ f(u - ε s) ρ(s) ds` for a scalar function `f`.
    pub fn apply(&self, f: impl Fn(f64) -> f64, u: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.mass)
            .map(|(&s, &m)| m * f(u - self.epsilon * s))
            .sum()
    }

    /// `(f_{*ε}(u), f^*_ε(u))`.
    pub fn mollify(&self, curves: &CurvePair, u: f64) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (&s, &m) in self.nodes.iter().zip(&self.mass) {
            let (a, b) = curves.eval_pair(u - self.epsilon * s);
            lo += m * a;
            hi += m * b;
        }
        (lo, hi)
    }
}

/// A curve pair mollified on the fly by quadrature.
#[derive(Debug, Clone)]
pub struct MollifiedPair {
    pub base: Arc<CurvePair>,
    pub mollifier: Mollifier,
}

impl BoundaryCurves for MollifiedPair {
    fn bounds(&self, u: f64) -> (f64, f64) {
        self.mollifier.mollify(&self.base, u)
    }

    fn lipschitz(&self) -> f64 {
        self.base.lipschitz_l0
    }
}

/// Piecewise-linear interpolant of another curve pair on a uniform table over
/// `[-B - ε, B + ε]`, constant beyond.
///
/// Linear interpolation of samples preserves ordering, the sup bound and the
/// Lipschitz constant of the tabulated pair, so the table may stand in for
/// the mollified pair inside the time stepper.
#[derive(Debug, Clone)]
pub struct TabulatedPair {
    start: f64,
    spacing: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lipschitz: f64,
}

pub const DEFAULT_TABLE_INTERVALS: usize = 1 << 15;

impl TabulatedPair {
    pub fn new(source: &dyn BoundaryCurves, lo: f64, hi: f64, intervals: usize) -> Self {
        assert!(hi > lo && intervals >= 1);
        let spacing = (hi - lo) / intervals as f64;
        let (lower, upper) = (0..=intervals)
            .map(|k| source.bounds(lo + spacing * k as f64))
            .unzip();
        TabulatedPair {
            start: lo,
            spacing,
            lower,
            upper,
            lipschitz: source.lipschitz(),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

impl BoundaryCurves for TabulatedPair {
    fn bounds(&self, u: f64) -> (f64, f64) {
        let last = self.lower.len() - 1;
        let x = (u - self.start) / self.spacing;
        if !(x > 0.0) {
            return (self.lower[0], self.upper[0]);
        }
        if x >= last as f64 {
            return (self.lower[last], self.upper[last]);
        }
        let k = (x.floor() as usize).min(last - 1);
        let w = x - k as f64;
        (
            self.lower[k] + w * (self.lower[k + 1] - self.lower[k]),
            self.upper[k] + w * (self.upper[k + 1] - self.upper[k]),
        )
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Serializable description of a curve pair, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CurveSpec {
    Builtin {
        builtin: BuiltinCurve,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        level: f64,
        /// Value for the `coincident` builtin.
        #[serde(default)]
        value: Option<String>,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
    Expressions {
        lower: String,
        upper: String,
        a: f64,
        b: f64,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinCurve {
    TruncatedPlay,
    Coincident,
}

fn one() -> f64 {
    1.0
}

impl Default for CurveSpec {
    fn default() -> Self {
        CurveSpec::Builtin {
            builtin: BuiltinCurve::TruncatedPlay,
            width: 1.0,
            level: 1.0,
            value: None,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CurveSpecError {
    #[error("{key}: {source}")]
    Syntax {
        key: &'static str,
        #[source]
        source: exprlang::SyntaxError,
    },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

impl CurveSpec {
    pub fn build(&self, truncation: f64) -> Result<CurvePair, CurveSpecError> {
        let parse = |key: &'static str, src: &str| {
            Expr::parse(src).map_err(|source| CurveSpecError::Syntax { key, source })
        };
        Ok(match self {
            CurveSpec::Builtin {
                builtin: BuiltinCurve::TruncatedPlay,
                width,
                level,
                ..
            } => CurvePair::truncated_play(*width, *level, truncation)?,
            CurveSpec::Builtin {
                builtin: BuiltinCurve::Coincident,
                value,
                lipschitz,
                ..
            } => {
                let curve = match value {
                    None => ScalarCurve::Constant(0.0),
                    Some(src) => match parse("curves.value", src)?.fold_constants() {
                        Expr::Num(c) => ScalarCurve::Constant(c),
                        e => ScalarCurve::Expr(e),
                    },
                };
                CurvePair::coincident(curve, *lipschitz, truncation)?
            }
            CurveSpec::Expressions {
                lower,
                upper,
                a,
                b,
                lipschitz,
            } => CurvePair::new(
                ScalarCurve::Expr(parse("curves.lower", lower)?),
                ScalarCurve::Expr(parse("curves.upper", upper)?),
                *a,
                *b,
                *lipschitz,
                truncation,
            )?,
        })
    }
}
