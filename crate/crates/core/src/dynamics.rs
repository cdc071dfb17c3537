//! Semi-implicit time stepping of the regularized phase-field system
//!
//! ```text
//! u' - Δu            = h(t, u, v)
//! v' - κΔv + ξ_λ(u;v) = g(t, u, v),   ξ_λ = (v - J_u v)/λ
//! ```
//!
//! with homogeneous Dirichlet data. The linear coercive part
//! `(-Δu, -κΔv + v/λ)` is taken implicitly and the Lipschitz remainder
//! `(h, g + J_u v/λ)` explicitly, so each step costs two tridiagonal solves.

use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curves::{
    self, BoundaryCurves, CurvePair, Mollifier, MollifiedPair, TabulatedPair, DEFAULT_TABLE_INTERVALS,
};
use crate::exprlang::{self, Expr, LipschitzProbe, Var};
use crate::spatial::{self, Field, Grid1D, GridMismatch, HelmholtzSolver};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error(transparent)]
    Curve(#[from] crate::curves::CurveError),
}

fn invalid(key: &'static str, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("non-finite state at t = {t}; reduce dt")]
    NonFinite { t: f64 },
    #[error("evaluating `{which}` at t = {t}: {source}")]
    Eval {
        which: &'static str,
        t: f64,
        #[source]
        source: exprlang::EvalError,
    },
    #[error("initial state must start at t = 0 (got t = {0})")]
    InitialTime(f64),
    #[error(transparent)]
    Grid(#[from] GridMismatch),
}

/// Plain model parameters, validated by [`ModelConfig::new`].
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub kappa: f64,
    /// `None` switches the Yosida term off.
    pub lambda: Option<f64>,
    /// `0` uses the curves unmollified.
    pub epsilon: f64,
    pub period: f64,
    pub dt: f64,
    pub grid: Grid1D,
    pub curves: CurvePair,
    pub h: Expr,
    pub g: Expr,
    /// Lipschitz constant of `g` in `u`; estimated when `None`.
    pub lipschitz_g_u: Option<f64>,
    /// Lipschitz constant of `g` in `v`; estimated when `None`.
    pub lipschitz_g_v: Option<f64>,
    pub truncation: f64,
    pub quadrature_order: usize,
}

impl ModelParams {
    /// Reference setup: truncated-play curves, `κ = 1` on `(0, 1)` with 128
    /// interior nodes, `h = sin 2πt`, `g = 12 + 6 cos 2πt + 2u - v/2`,
    /// `λ = 10⁻²`, `ε = 0.05`, `dt = 10⁻³`, `T = 1`.
    pub fn canonical() -> Self {
        ModelParams {
            kappa: 1.0,
            lambda: Some(1e-2),
            epsilon: 0.05,
            period: 1.0,
            dt: 1e-3,
            grid: Grid1D::new(1.0, 128).expect("valid grid"),
            curves: CurvePair::canonical(),
            h: Expr::parse("sin(2*pi*t)").expect("valid expression"),
            g: Expr::parse("12 + 6*cos(2*pi*t) + 2*u - 0.5*v").expect("valid expression"),
            lipschitz_g_u: Some(2.0),
            lipschitz_g_v: Some(0.5),
            truncation: 10.0,
            quadrature_order: curves::DEFAULT_QUADRATURE_ORDER,
        }
    }
}

/// Validated model with the per-step machinery (factored solvers and the
/// effective constraint curves) prepared.
#[derive(Clone)]
pub struct ModelConfig {
    params: ModelParams,
    steps: usize,
    lipschitz_g_u: f64,
    lipschitz_g_v: f64,
    poincare: f64,
    effective: Arc<dyn BoundaryCurves>,
    u_solver: HelmholtzSolver,
    v_solver: HelmholtzSolver,
    warnings: Vec<String>,
    digest: String,
}

impl std::fmt::Debug for ModelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelConfig")
            .field("params", &self.params)
            .field("steps", &self.steps)
            .field("digest", &self.digest)
            .finish_non_exhaustive()
    }
}

const LIPSCHITZ_SAMPLES: usize = 100_000;

impl ModelConfig {
    pub fn new(params: ModelParams) -> Result<Self, ModelError> {
        let p = &params;
        if !(p.kappa > 0.0 && p.kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be positive, got {}", p.kappa)));
        }
        if let Some(l) = p.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("lambda", format!("must be positive or \"off\", got {l}")));
            }
        }
        if !(p.epsilon >= 0.0 && p.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be nonnegative, got {}", p.epsilon)));
        }
        if !(p.period > 0.0 && p.period.is_finite()) {
            return Err(invalid("period", format!("must be positive, got {}", p.period)));
        }
        if !(p.dt > 0.0 && p.dt <= p.period) {
            return Err(invalid("dt", format!("must lie in (0, period], got {}", p.dt)));
        }
        let ratio = p.period / p.dt;
        let steps = ratio.round() as usize;
        if (steps as f64 * p.dt - p.period).abs() > 1e-12 * p.period.max(1.0) {
            return Err(invalid(
                "dt",
                format!("must divide the period (period/dt = {ratio})"),
            ));
        }
        if !(p.truncation > 0.0 && p.truncation.is_finite()) {
            return Err(invalid("truncation", format!("must be positive, got {}", p.truncation)));
        }
        if p.quadrature_order == 0 {
            return Err(invalid("quadrature_order", "must be positive"));
        }
        for (key, e) in [("h", &p.h), ("g", &p.g)] {
            if let Err(err) = e.eval(0.0, 0.0, 0.0) {
                if !matches!(err, exprlang::EvalError::DivisionByZero) {
                    return Err(invalid(key, format!("does not evaluate at the origin: {err}")));
                }
            }
        }

        let mut warnings = Vec::new();
        let b = p.truncation;
        let estimate = |var: Var| {
            exprlang::estimate_lipschitz(
                &p.g,
                &LipschitzProbe {
                    var,
                    u_range: (-b, b),
                    v_range: (-b, b),
                    t_range: (0.0, p.period),
                    samples: LIPSCHITZ_SAMPLES,
                    seed: 0x9e37_79b9,
                },
            )
        };
        let lipschitz_g_u = match p.lipschitz_g_u {
            Some(l) if l >= 0.0 => l,
            Some(l) => return Err(invalid("lipschitz_g_u", format!("must be nonnegative, got {l}"))),
            None => {
                let l = estimate(Var::U);
                warnings.push(format!("lipschitz_g_u not given; sampled estimate {l:.6} used"));
                l
            }
        };
        let lipschitz_g_v = match p.lipschitz_g_v {
            Some(l) if l >= 0.0 => l,
            Some(l) => return Err(invalid("lipschitz_g_v", format!("must be nonnegative, got {l}"))),
            None => {
                let l = estimate(Var::V);
                warnings.push(format!("lipschitz_g_v not given; sampled estimate {l:.6} used"));
                l
            }
        };
        if p.curves.lipschitz_estimated {
            warnings.push(format!(
                "curve Lipschitz constant not given; sampled estimate {:.6} used",
                p.curves.lipschitz_l0
            ));
        }

        let poincare = spatial::poincare_constant(&p.grid);
        if lipschitz_g_v >= p.kappa / poincare {
            warnings.push(format!(
                "(H1) violated: L_* = {lipschitz_g_v} >= kappa/C_P = {}; contraction of v-differences is not guaranteed",
                p.kappa / poincare
            ));
        }

        let base = Arc::new(p.curves.clone());
        let effective: Arc<dyn BoundaryCurves> = if p.epsilon > 0.0 {
            let moll = MollifiedPair {
                base: base.clone(),
                mollifier: Mollifier::new(p.epsilon, p.quadrature_order)?,
            };
            let reach = p.curves.truncation + p.epsilon;
            Arc::new(TabulatedPair::new(&moll, -reach, reach, DEFAULT_TABLE_INTERVALS))
        } else {
            base
        };

        let dt = p.dt;
        let u_solver = HelmholtzSolver::new(&p.grid, 1.0, dt);
        let v_alpha = 1.0 + p.lambda.map_or(0.0, |l| dt / l);
        let v_solver = HelmholtzSolver::new(&p.grid, v_alpha, dt * p.kappa);

        let mut cfg = ModelConfig {
            params,
            steps,
            lipschitz_g_u,
            lipschitz_g_v,
            poincare,
            effective,
            u_solver,
            v_solver,
            warnings,
            digest: String::new(),
        };
        cfg.digest = digest_of(&cfg.describe());
        Ok(cfg)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid1D {
        &self.params.grid
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn lambda(&self) -> Option<f64> {
        self.params.lambda
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn period(&self) -> f64 {
        self.params.period
    }

    /// Number of steps per period.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.params.dt
    }

    pub fn curves(&self) -> &CurvePair {
        &self.params.curves
    }

    /// The curves entering the dynamics: mollified when `epsilon > 0`.
    pub fn effective_curves(&self) -> &dyn BoundaryCurves {
        self.effective.as_ref()
    }

    pub fn lipschitz_g_u(&self) -> f64 {
        self.lipschitz_g_u
    }

    pub fn lipschitz_g_v(&self) -> f64 {
        self.lipschitz_g_v
    }

    pub fn poincare_constant(&self) -> f64 {
        self.poincare
    }

    /// Decay rate `κ/C_P - L_*` of v-differences.
    pub fn c0(&self) -> f64 {
        self.params.kappa / self.poincare - self.lipschitz_g_v
    }

    pub fn h1_holds(&self) -> bool {
        self.c0() > 0.0
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn rebuild(&self, edit: impl FnOnce(&mut ModelParams)) -> Result<ModelConfig, ModelError> {
        let mut p = self.params.clone();
        edit(&mut p);
        ModelConfig::new(p)
    }

    /// JSON echo of every parameter that influences a run.
    pub fn describe(&self) -> serde_json::Value {
        let p = &self.params;
        let (lower, upper) = p.curves.describe();
        json!({
            "kappa": p.kappa,
            "lambda": p.lambda.map_or(json!("off"), |l| json!(l)),
            "epsilon": p.epsilon,
            "period": p.period,
            "dt": p.dt,
            "steps": self.steps,
            "grid": p.grid,
            "curves": {
                "lower": lower,
                "upper": upper,
                "a": p.curves.coincide_a,
                "b": p.curves.coincide_b,
                "lipschitz_l0": p.curves.lipschitz_l0,
                "sup_bound": p.curves.sup_bound,
            },
            "h": p.h.to_string(),
            "g": p.g.to_string(),
            "lipschitz_g_u": self.lipschitz_g_u,
            "lipschitz_g_v": self.lipschitz_g_v,
            "truncation": p.truncation,
            "quadrature_order": p.quadrature_order,
            "poincare_constant": self.poincare,
            "c0": self.c0(),
        })
    }

    /// Explicit load `F(z) = (h, g + J_u v/λ)` at time `t`, with `(u, v)`
    /// clamped to the truncation box before the nonlinearities are evaluated.
    pub fn load(&self, t: f64, u: &[f64], v: &[f64]) -> Result<(Field, Field), DynamicsError> {
        let n = u.len();
        let mut fu = vec![0.0; n];
        let mut fv = vec![0.0; n];
        self.load_into(t, u, v, &mut fu, &mut fv)?;
        Ok((Field::from_vec(fu), Field::from_vec(fv)))
    }

    fn load_into(
        &self,
        t: f64,
        u: &[f64],
        v: &[f64],
        fu: &mut [f64],
        fv: &mut [f64],
    ) -> Result<(), DynamicsError> {
        let b = self.params.truncation;
        let curves = self.effective.as_ref();
        for i in 0..u.len() {
            let uc = u[i].clamp(-b, b);
            let vc = v[i].clamp(-b, b);
            fu[i] = self
                .params
                .h
                .eval(t, uc, vc)
                .map_err(|source| DynamicsError::Eval { which: "h", t, source })?;
            let mut gv = self
                .params
                .g
                .eval(t, uc, vc)
                .map_err(|source| DynamicsError::Eval { which: "g", t, source })?;
            if let Some(lambda) = self.params.lambda {
                let (lo, hi) = curves.bounds(u[i]);
                gv += v[i].min(hi).max(lo) / lambda;
            }
            fv[i] = gv;
        }
        Ok(())
    }

    /// Implicit half of a step: solves
    /// `(I - dtΔ)u⁺ = u + dt·f_u` and `((1 + dt/λ)I - dtκΔ)v⁺ = v + dt·f_v`.
    pub fn implicit_step(&self, u: &[f64], v: &[f64], fu: &[f64], fv: &[f64]) -> (Field, Field) {
        let dt = self.params.dt;
        let rhs_u: Vec<f64> = u.iter().zip(fu).map(|(u, f)| u + dt * f).collect();
        let rhs_v: Vec<f64> = v.iter().zip(fv).map(|(v, f)| v + dt * f).collect();
        let mut nu = vec![0.0; u.len()];
        let mut nv = vec![0.0; v.len()];
        self.u_solver.solve_into(&rhs_u, &mut nu);
        self.v_solver.solve_into(&rhs_v, &mut nv);
        (Field::from_vec(nu), Field::from_vec(nv))
    }

    /// Coefficients `(α, β)` of the implicit v-operator `αI - βΔ`.
    pub fn v_operator(&self) -> (f64, f64) {
        let dt = self.params.dt;
        (1.0 + self.params.lambda.map_or(0.0, |l| dt / l), dt * self.params.kappa)
    }
}

fn digest_of(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("json values serialize");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl SystemState {
    pub fn zero(grid: &Grid1D) -> Self {
        SystemState {
            t: 0.0,
            u: Field::zeros(grid),
            v: Field::zeros(grid),
        }
    }

    /// `|z|_𝐇 = (|u|²_H + |v|²_H)^{1/2}`.
    pub fn norm(&self, grid: &Grid1D) -> f64 {
        (spatial::l2(grid, &self.u).powi(2) + spatial::l2(grid, &self.v).powi(2)).sqrt()
    }

    pub fn distance(&self, other: &SystemState, grid: &Grid1D) -> f64 {
        let du = self.u.sub(&other.u);
        let dv = self.v.sub(&other.v);
        (spatial::l2(grid, &du).powi(2) + spatial::l2(grid, &dv).powi(2)).sqrt()
    }

    /// Largest nodal difference in either component.
    pub fn sup_distance(&self, other: &SystemState) -> f64 {
        self.u.sub(&other.u).linf().max(self.v.sub(&other.v).linf())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn from_slice(t: f64, x: &[f64]) -> Self {
        let n = x.len() / 2;
        SystemState {
            t,
            u: Field::from_vec(x[..n].to_vec()),
            v: Field::from_vec(x[n..].to_vec()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub dt: f64,
    pub config_digest: String,
}

impl Trajectory {
    pub fn first(&self) -> &SystemState {
        &self.states[0]
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// One semi-implicit Euler step.
pub fn step(state: &SystemState, cfg: &ModelConfig) -> Result<SystemState, DynamicsError> {
    let grid = cfg.grid();
    grid.check(&state.u)?;
    grid.check(&state.v)?;
    let (fu, fv) = cfg.load(state.t, &state.u, &state.v)?;
    let (u, v) = cfg.implicit_step(&state.u, &state.v, &fu, &fv);
    let t = state.t + cfg.dt();
    if !(u.is_finite() && v.is_finite()) {
        return Err(DynamicsError::NonFinite { t });
    }
    Ok(SystemState { t, u, v })
}

/// Integrates one period from `z0` (which must sit at `t = 0`).
pub fn integrate(z0: &SystemState, cfg: &ModelConfig) -> Result<Trajectory, DynamicsError> {
    if z0.t != 0.0 {
        return Err(DynamicsError::InitialTime(z0.t));
    }
    let mut states = Vec::with_capacity(cfg.steps() + 1);
    states.push(z0.clone());
    for n in 0..cfg.steps() {
        let mut next = step(&states[n], cfg)?;
        // avoid drift from repeated addition
        next.t = cfg.time(n + 1);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        dt: cfg.dt(),
        config_digest: cfg.digest().to_string(),
    })
}

/// Endpoint of one period without storing the trajectory.
pub fn integrate_endpoint(z0: &SystemState, cfg: &ModelConfig) -> Result<SystemState, DynamicsError> {
    let grid = cfg.grid();
    grid.check(&z0.u)?;
    grid.check(&z0.v)?;
    let n = grid.n_interior();
    let mut u = z0.u.to_vec();
    let mut v = z0.v.to_vec();
    let mut fu = vec![0.0; n];
    let mut fv = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let dt = cfg.dt();
    for k in 0..cfg.steps() {
        let t = cfg.time(k);
        cfg.load_into(t, &u, &v, &mut fu, &mut fv)?;
        for i in 0..n {
            rhs[i] = u[i] + dt * fu[i];
        }
        cfg.u_solver.solve_into(&rhs, &mut u);
        for i in 0..n {
            rhs[i] = v[i] + dt * fv[i];
        }
        cfg.v_solver.solve_into(&rhs, &mut v);
    }
    if !(u.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
        return Err(DynamicsError::NonFinite { t: cfg.period() });
    }
    Ok(SystemState {
        t: cfg.period(),
        u: Field::from_vec(u),
        v: Field::from_vec(v),
    })
}

/// `max |((1 + dt/λ)I - dtκΔ)v⁺ - (v + dt(g + J_u v/λ))|`: how far a step
/// is from the discrete v-equation it is supposed to solve.
pub fn splitting_residual(prev: &SystemState, next: &SystemState, cfg: &ModelConfig) -> Result<f64, DynamicsError> {
    let (alpha, beta) = cfg.v_operator();
    let lhs = spatial::apply_helmholtz(cfg.grid(), alpha, beta, &next.v)?;
    let (_, fv) = cfg.load(prev.t, &prev.u, &prev.v)?;
    let dt = cfg.dt();
    Ok(lhs
        .iter()
        .zip(prev.v.iter().zip(fv.iter()))
        .map(|(l, (v, f))| (l - (v + dt * f)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hysteresis;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(n: usize, h: &str, g: &str, lambda: Option<f64>) -> ModelParams {
        ModelParams {
            kappa: 1.0,
            lambda,
            epsilon: 0.0,
            period: 1.0,
            dt: 1e-3,
            grid: Grid1D::new(1.0, n).unwrap(),
            curves: CurvePair::canonical(),
            h: Expr::parse(h).unwrap(),
            g: Expr::parse(g).unwrap(),
            lipschitz_g_u: Some(0.0),
            lipschitz_g_v: Some(0.0),
            truncation: 10.0,
            quadrature_order: 64,
        }
    }

    #[test]
    fn validation() {
        let mut p = params(8, "0", "0", None);
        p.dt = 0.3;
        assert!(matches!(ModelConfig::new(p), Err(ModelError::Invalid { key: "dt", .. })));
        let mut p = params(8, "0", "0", Some(-1.0));
        p.lambda = Some(-1.0);
        assert!(matches!(ModelConfig::new(p), Err(ModelError::Invalid { key: "lambda", .. })));
        let mut p = params(8, "0", "0", None);
        p.kappa = 0.0;
        assert!(matches!(ModelConfig::new(p), Err(ModelError::Invalid { key: "kappa", .. })));
        let cfg = ModelConfig::new(params(8, "0", "0", None)).unwrap();
        assert_eq!(cfg.steps(), 1000);
        assert!(cfg.warnings().is_empty());
    }

    #[test]
    fn h1_warning_and_estimates() {
        let mut p = params(8, "0", "20*v + u", None);
        p.lipschitz_g_u = None;
        p.lipschitz_g_v = None;
        let cfg = ModelConfig::new(p).unwrap();
        assert!((cfg.lipschitz_g_v() - 21.0).abs() < 1e-6);
        assert!((cfg.lipschitz_g_u() - 1.05).abs() < 1e-6);
        assert!(!cfg.h1_holds());
        assert!(cfg.warnings().iter().any(|w| w.contains("(H1)")));
    }

    #[test]
    fn zero_state_is_fixed() {
        let cfg = ModelConfig::new(params(16, "0", "0", Some(0.1))).unwrap();
        let z = SystemState::zero(cfg.grid());
        let next = step(&z, &cfg).unwrap();
        assert_eq!(next.u, z.u);
        assert_eq!(next.v, z.v);
        assert!((next.t - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn eigenvector_decays_by_implicit_factor() {
        let cfg = ModelConfig::new(params(32, "0", "0", None)).unwrap();
        let grid = *cfg.grid();
        let e = grid.eigenvector(1);
        let z = SystemState {
            t: 0.0,
            u: e.clone(),
            v: e.clone(),
        };
        let next = step(&z, &cfg).unwrap();
        let factor = 1.0 / (1.0 + cfg.dt() * grid.eigenvalue(1));
        assert!(next.u.sub(&e.scaled(factor)).linf() < 1e-14);
        assert!(next.v.sub(&e.scaled(factor)).linf() < 1e-14);
    }

    /// Dense reference: assemble the implicit matrices and solve directly.
    fn dense_step(z: &SystemState, cfg: &ModelConfig, curves: &CurvePair) -> (DVector<f64>, DVector<f64>) {
        let grid = cfg.grid();
        let n = grid.n_interior();
        let h2 = grid.spacing().powi(2);
        let dt = cfg.dt();
        let lambda = cfg.lambda().unwrap();
        let kappa = cfg.kappa();
        let lap = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -2.0 / h2
            } else if i.abs_diff(j) == 1 {
                1.0 / h2
            } else {
                0.0
            }
        });
        let id = DMatrix::<f64>::identity(n, n);
        let au = &id - &lap * dt;
        let av = &id * (1.0 + dt / lambda) - &lap * (dt * kappa);
        let p = cfg.params();
        let mut ru = DVector::zeros(n);
        let mut rv = DVector::zeros(n);
        for i in 0..n {
            let (u, v) = (z.u[i], z.v[i]);
            let (lo, hi) = curves.eval_pair(u);
            let j = v.min(hi).max(lo);
            ru[i] = u + dt * p.h.eval(z.t, u, v).unwrap();
            rv[i] = v + dt * (p.g.eval(z.t, u, v).unwrap() + j / lambda);
        }
        (au.lu().solve(&ru).unwrap(), av.lu().solve(&rv).unwrap())
    }

    #[test]
    fn step_matches_dense_reference() {
        let mut p = params(4, "sin(2*pi*t) + 0.3*u*v", "2 - 0.5*v + u", Some(0.05));
        p.dt = 0.01;
        let cfg = ModelConfig::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let z = SystemState {
                t: rng.gen_range(0.0..1.0),
                u: Field::from_vec((0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()),
                v: Field::from_vec((0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()),
            };
            let next = step(&z, &cfg).unwrap();
            let (du, dv) = dense_step(&z, &cfg, cfg.curves());
            for i in 0..4 {
                assert!((next.u[i] - du[i]).abs() < 1e-12);
                assert!((next.v[i] - dv[i]).abs() < 1e-12);
            }
            assert!(splitting_residual(&z, &next, &cfg).unwrap() < 1e-12);
        }
    }

    #[test]
    fn j_form_matches_yosida_form() {
        let mut p = params(16, "0", "0", Some(0.01));
        p.epsilon = 0.1;
        let cfg = ModelConfig::new(p).unwrap();
        let lambda = cfg.lambda().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let u: f64 = rng.gen_range(-4.0..4.0);
            let v: f64 = rng.gen_range(-4.0..4.0);
            let (_, fv) = cfg.load(0.0, &[u], &[v]).unwrap();
            let j_form = (v - lambda * fv[0]) / lambda;
            let y = hysteresis::yosida(cfg.effective_curves(), lambda, u, v);
            assert!((j_form - y).abs() < 1e-12 * (1.0 + y.abs()) / lambda.min(1.0), "{j_form} vs {y}");
        }
    }

    #[test]
    fn pure_decay_is_monotone() {
        let cfg = ModelConfig::new(params(32, "0", "0", None)).unwrap();
        let grid = *cfg.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z0 = SystemState {
            t: 0.0,
            u: Field::from_vec((0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            v: Field::zeros(&grid),
        };
        let traj = integrate(&z0, &cfg).unwrap();
        assert_eq!(traj.len(), 1001);
        assert_eq!(traj.last().t, 1.0);
        let norms: Vec<f64> = traj.states.iter().map(|s| spatial::l2(&grid, &s.u)).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        let end = integrate_endpoint(&z0, &cfg).unwrap();
        assert!(end.sup_distance(traj.last()) < 1e-15);
        assert!(matches!(
            integrate(&SystemState { t: 0.5, ..z0 }, &cfg),
            Err(DynamicsError::InitialTime(_))
        ));
    }

    #[test]
    fn eval_errors_surface() {
        let cfg = ModelConfig::new(params(4, "1/(v - 0.25)", "0", None)).unwrap();
        let z = SystemState {
            t: 0.0,
            u: Field::zeros(cfg.grid()),
            v: Field::from_vec(vec![0.25; 4]),
        };
        assert!(matches!(step(&z, &cfg), Err(DynamicsError::Eval { which: "h", .. })));
    }

    #[test]
    fn endpoint_converges_at_first_order() {
        let ends: Vec<SystemState> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let mut p = params(32, "sin(2*pi*t) + 0.5*u", "cos(2*pi*t) - 0.5*v", None);
                p.dt = dt;
                let cfg = ModelConfig::new(p).unwrap();
                let z0 = SystemState {
                    t: 0.0,
                    u: Field::from_fn(cfg.grid(), |x| (PI * x).sin()),
                    v: Field::from_fn(cfg.grid(), |x| (2.0 * PI * x).sin()),
                };
                integrate_endpoint(&z0, &cfg).unwrap()
            })
            .collect();
        let g = Grid1D::new(1.0, 32).unwrap();
        let ratio = ends[0].distance(&ends[1], &g) / ends[1].distance(&ends[2], &g);
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn canonical_endpoint_fixture() {
        let mut p = ModelParams::canonical();
        p.grid = Grid1D::new(1.0, 64).unwrap();
        let cfg = ModelConfig::new(p).unwrap();
        let end = integrate_endpoint(&SystemState::zero(cfg.grid()), &cfg).unwrap();
        let fixture = [
            (spatial::l2(cfg.grid(), &end.u), 4.161590253881522e-2),
            (spatial::l2(cfg.grid(), &end.v), 8.662518381711896e-1),
            (end.u[31], -5.849699321468961e-2),
            (end.v[31], 1.085330010190707),
            (end.v[9], 7.142291574245131e-1),
        ];
        for (got, want) in fixture {
            assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
        }
        assert_eq!(integrate(&SystemState::zero(cfg.grid()), &cfg).unwrap().last().u, end.u);
    }

    #[test]
    fn digest_tracks_parameters() {
        let a = ModelConfig::new(params(8, "0", "0", Some(0.1))).unwrap();
        let b = ModelConfig::new(params(8, "0", "0", Some(0.1))).unwrap();
        let c = ModelConfig::new(params(8, "0", "0", Some(0.2))).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 16);
    }
}
