//! Time-periodic solutions.
//!
//! Two constructions are provided. [`find_periodic`] iterates the period map
//! `z(0) ↦ z(T)` of the full stepper. [`schauder_outer`] follows the
//! two-level route: freeze the nonlinear load `f(t)`, solve the linear
//! periodic problem `z' + ∂φ(z) = f`, re-evaluate `f ← F(z)` and repeat.
//! Both share the same discrete recurrence, so their fixed points coincide.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, ModelConfig, SystemState, Trajectory};
use crate::spatial::{self, Field};

#[derive(Debug, Error)]
pub enum PeriodicError {
    #[error("no periodic solution within {} iterations (last residual {:e})", .0.iterations, .0.residual_history.last().copied().unwrap_or(f64::NAN))]
    NotConverged(Box<PeriodicReport>),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    Anderson,
    Schauder,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicReport {
    pub method: Method,
    pub iterations: usize,
    /// `|z(T) - z(0)|_𝐇` per period-map evaluation, or for the two-level
    /// method the `L²(0,T;𝐇)` distance between successive loads.
    pub residual_history: Vec<f64>,
    /// Geometric mean of successive residual ratios.
    pub contraction_estimate: Option<f64>,
    /// `κ/C_P - L_*`.
    pub c0: f64,
    pub converged: bool,
    pub tolerance: f64,
    pub final_state: SystemState,
    pub warnings: Vec<String>,
    /// Two-level method only: largest `|F(z(t))|_𝐇` seen, and the a-priori bound `R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_load_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_bound: Option<f64>,
    pub config_digest: String,
}

impl PeriodicReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `0` disables Anderson acceleration.
    pub anderson_window: usize,
    pub anderson_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 500,
            anderson_window: 0,
            anderson_damping: 1.0,
        }
    }
}

/// `z(0) ↦ z(T)`, with the time reset to zero.
pub fn period_map(z0: &SystemState, cfg: &ModelConfig) -> Result<SystemState, DynamicsError> {
    if z0.t != 0.0 {
        return Err(DynamicsError::InitialTime(z0.t));
    }
    let mut end = dynamics::integrate_endpoint(z0, cfg)?;
    end.t = 0.0;
    Ok(end)
}

/// Anderson mixing (type II) over a sliding window of residual differences.
#[derive(Debug, Clone)]
pub struct Anderson {
    window: usize,
    damping: f64,
    d_residual: VecDeque<Vec<f64>>,
    d_image: VecDeque<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    pub fn new(window: usize, damping: f64) -> Self {
        Anderson {
            window,
            damping,
            d_residual: VecDeque::new(),
            d_image: VecDeque::new(),
            prev: None,
        }
    }

    /// Given an iterate `x` and its image `gx = G(x)`, proposes the next iterate.
    pub fn next(&mut self, x: &[f64], gx: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = gx.iter().zip(x).map(|(g, x)| g - x).collect();
        if let Some((pf, pg)) = self.prev.take() {
            self.d_residual.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            self.d_image.push_back(gx.iter().zip(&pg).map(|(a, b)| a - b).collect());
            if self.d_residual.len() > self.window {
                self.d_residual.pop_front();
                self.d_image.pop_front();
            }
        }
        self.prev = Some((f.clone(), gx.to_vec()));
        let m = self.d_residual.len();
        if m == 0 {
            return x.iter().zip(&f).map(|(x, f)| x + self.damping * f).collect();
        }
        let n = f.len();
        let df = DMatrix::from_fn(n, m, |i, j| self.d_residual[j][i]);
        let rhs = DVector::from_column_slice(&f);
        let gamma = match df.clone().svd(true, true).solve(&rhs, 1e-12) {
            Ok(g) => g,
            Err(_) => DVector::zeros(m),
        };
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut xg = gx[i];
            let mut xx = x[i];
            for j in 0..m {
                xg -= gamma[j] * self.d_image[j][i];
                // ΔX = ΔG - ΔF
                xx -= gamma[j] * (self.d_image[j][i] - self.d_residual[j][i]);
            }
            out[i] = (1.0 - self.damping) * xx + self.damping * xg;
        }
        out
    }
}

fn geometric_ratio(history: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> = history
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    if ratios.is_empty() {
        None
    } else {
        Some((ratios.iter().sum::<f64>() / ratios.len() as f64).exp())
    }
}

fn monotonicity_warnings(history: &[f64], c0: f64) -> Vec<String> {
    let mut warnings = Vec::new();
    if c0 > 0.0 && history.len() > 2 {
        if let Some(k) = (2..history.len()).find(|&k| history[k] > history[k - 1]) {
            warnings.push(format!(
                "residual increased at iteration {} ({:e} -> {:e}) although c0 = {c0} > 0",
                k + 1,
                history[k - 1],
                history[k]
            ));
        }
    }
    warnings
}

/// Iterates the period map until `|z(T) - z(0)|_𝐇 ≤ tol`.
pub fn find_periodic(
    cfg: &ModelConfig,
    z_init: &SystemState,
    opts: &SolverOptions,
) -> Result<PeriodicReport, PeriodicError> {
    if !(opts.tol > 0.0) {
        return Err(PeriodicError::Input(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = cfg.grid();
    let mut z = SystemState {
        t: 0.0,
        ..z_init.clone()
    };
    let mut mixer = (opts.anderson_window > 0).then(|| Anderson::new(opts.anderson_window, opts.anderson_damping));
    let mut history = Vec::new();
    let mut converged = false;
    let mut last = z.clone();
    for _ in 0..opts.max_iter.max(1) {
        let pz = period_map(&z, cfg)?;
        let r = pz.distance(&z, grid);
        history.push(r);
        last = pz;
        if r <= opts.tol {
            converged = true;
            break;
        }
        z = match mixer.as_mut() {
            Some(m) => SystemState::from_slice(0.0, &m.next(&z.to_vec(), &last.to_vec())),
            None => last.clone(),
        };
    }
    let c0 = cfg.c0();
    let mut warnings = cfg.warnings().to_vec();
    if mixer.is_none() {
        warnings.extend(monotonicity_warnings(&history, c0));
    }
    let report = PeriodicReport {
        method: if mixer.is_some() { Method::Anderson } else { Method::Picard },
        iterations: history.len(),
        contraction_estimate: geometric_ratio(&history),
        residual_history: history,
        c0,
        converged,
        tolerance: opts.tol,
        final_state: last,
        warnings,
        sup_load_norm: None,
        load_bound: None,
        config_digest: cfg.digest().to_string(),
    };
    if converged {
        Ok(report)
    } else {
        Err(PeriodicError::NotConverged(Box::new(report)))
    }
}

/// A load sampled at the step times `t_0, …, t_{M-1}` of one period.
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub u: Vec<Field>,
    pub v: Vec<Field>,
}

impl Load {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let z = Field::zeros(cfg.grid());
        Load {
            u: vec![z.clone(); cfg.steps()],
            v: vec![z; cfg.steps()],
        }
    }

    pub fn constant(cfg: &ModelConfig, fu: &Field, fv: &Field) -> Self {
        Load {
            u: vec![fu.clone(); cfg.steps()],
            v: vec![fv.clone(); cfg.steps()],
        }
    }

    /// `F(z(t_n))` along a trajectory.
    pub fn from_trajectory(traj: &Trajectory, cfg: &ModelConfig) -> Result<Self, DynamicsError> {
        let mut u = Vec::with_capacity(cfg.steps());
        let mut v = Vec::with_capacity(cfg.steps());
        for (n, s) in traj.states.iter().take(cfg.steps()).enumerate() {
            let (fu, fv) = cfg.load(cfg.time(n), &s.u, &s.v)?;
            u.push(fu);
            v.push(fv);
        }
        Ok(Load { u, v })
    }

    /// `(Σ_n dt |f^n - g^n|²_𝐇)^{1/2}`.
    pub fn distance(&self, other: &Load, cfg: &ModelConfig) -> f64 {
        let grid = cfg.grid();
        let sum: f64 = (0..self.u.len())
            .map(|n| {
                spatial::l2(grid, &self.u[n].sub(&other.u[n])).powi(2)
                    + spatial::l2(grid, &self.v[n].sub(&other.v[n])).powi(2)
            })
            .sum();
        (cfg.dt() * sum).sqrt()
    }

    /// `max_n |f^n|_𝐇`.
    pub fn sup_norm(&self, cfg: &ModelConfig) -> f64 {
        let grid = cfg.grid();
        (0..self.u.len())
            .map(|n| (spatial::l2(grid, &self.u[n]).powi(2) + spatial::l2(grid, &self.v[n]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    fn to_vec(&self) -> Vec<f64> {
        self.u.iter().chain(&self.v).flat_map(|f| f.iter().copied()).collect()
    }

    fn from_vec(x: &[f64], steps: usize, n: usize) -> Self {
        let mut chunks = x.chunks(n).map(|c| Field::from_vec(c.to_vec()));
        let u = chunks.by_ref().take(steps).collect();
        let v = chunks.take(steps).collect();
        Load { u, v }
    }
}

fn linear_pass(z0: &SystemState, load: &Load, cfg: &ModelConfig, keep: bool) -> (SystemState, Vec<SystemState>) {
    let mut states = Vec::new();
    let mut u = z0.u.clone();
    let mut v = z0.v.clone();
    if keep {
        states.push(SystemState { t: 0.0, u: u.clone(), v: v.clone() });
    }
    for n in 0..cfg.steps() {
        let (nu, nv) = cfg.implicit_step(&u, &v, &load.u[n], &load.v[n]);
        u = nu;
        v = nv;
        if keep {
            states.push(SystemState { t: cfg.time(n + 1), u: u.clone(), v: v.clone() });
        }
    }
    (SystemState { t: 0.0, u, v }, states)
}

pub const LINEAR_PERIODIC_TOL: f64 = 1e-10;

/// Periodic solution of the linear problem `z' + ∂φ(z) = f(t)` under the
/// same implicit discretization as the stepper. The affine period map is a
/// strict contraction, so plain iteration converges.
pub fn linear_periodic_solve(
    load: &Load,
    cfg: &ModelConfig,
    z_init: &SystemState,
    tol: f64,
    max_iter: usize,
) -> Result<(Trajectory, usize), PeriodicError> {
    if load.u.len() != cfg.steps() || load.v.len() != cfg.steps() {
        return Err(PeriodicError::Input(format!(
            "load has {} samples, the period has {} steps",
            load.u.len(),
            cfg.steps()
        )));
    }
    let grid = cfg.grid();
    let mut z = SystemState { t: 0.0, ..z_init.clone() };
    let mut history = Vec::new();
    for k in 0..max_iter.max(1) {
        let (end, _) = linear_pass(&z, load, cfg, false);
        let r = end.distance(&z, grid);
        history.push(r);
        if !r.is_finite() {
            return Err(DynamicsError::NonFinite { t: cfg.period() }.into());
        }
        if r <= tol {
            let (_, states) = linear_pass(&z, load, cfg, true);
            return Ok((
                Trajectory {
                    states,
                    dt: cfg.dt(),
                    config_digest: cfg.digest().to_string(),
                },
                k + 1,
            ));
        }
        z = end;
    }
    Err(PeriodicError::NotConverged(Box::new(PeriodicReport {
        method: Method::Picard,
        iterations: history.len(),
        contraction_estimate: geometric_ratio(&history),
        residual_history: history,
        c0: cfg.c0(),
        converged: false,
        tolerance: tol,
        final_state: z,
        warnings: vec!["linear periodic solve did not converge".into()],
        sup_load_norm: None,
        load_bound: None,
        config_digest: cfg.digest().to_string(),
    })))
}

/// `(sup|h|, sup|g|)` over `[0, T]` and the truncation box, taken on a
/// sample lattice that includes the box corners.
pub fn data_sups(cfg: &ModelConfig) -> (f64, f64) {
    let p = cfg.params();
    let b = p.truncation;
    let (nt, nx) = (41usize, 161usize);
    let mut sup_h: f64 = 0.0;
    let mut sup_g: f64 = 0.0;
    for it in 0..nt {
        let t = p.period * it as f64 / (nt - 1) as f64;
        for iu in 0..nx {
            let u = -b + 2.0 * b * iu as f64 / (nx - 1) as f64;
            for iv in 0..nx {
                let v = -b + 2.0 * b * iv as f64 / (nx - 1) as f64;
                if let Ok(x) = p.h.eval(t, u, v) {
                    sup_h = sup_h.max(x.abs());
                }
                if let Ok(x) = p.g.eval(t, u, v) {
                    sup_g = sup_g.max(x.abs());
                }
            }
        }
    }
    (sup_h, sup_g)
}

/// A-priori bound `R ≥ |F(z)|_𝐇` from the data: `|Ω|^{1/2}` times the
/// Euclidean combination of `sup|h|` and `sup|g| + sup|f|/λ`.
pub fn load_bound(cfg: &ModelConfig) -> f64 {
    let p = cfg.params();
    let (sup_h, sup_g) = data_sups(cfg);
    let proj = p.lambda.map_or(0.0, |l| p.curves.sup_bound / l);
    p.grid.length().sqrt() * (sup_h * sup_h + (sup_g + proj).powi(2)).sqrt()
}

/// The two-level construction `f_{k+1} = F(T(f_k))`, started from `f_0 = 0`.
///
/// `residual_history` records `|f_{k+1} - f_k|_{L²(0,T;𝐇)}`; iteration stops
/// once it falls to `opts.tol`.
pub fn schauder_outer(cfg: &ModelConfig, opts: &SolverOptions) -> Result<(PeriodicReport, Trajectory), PeriodicError> {
    if !(opts.tol > 0.0) {
        return Err(PeriodicError::Input(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let bound = load_bound(cfg);
    let inner_tol = LINEAR_PERIODIC_TOL.min(opts.tol);
    let inner_max = 10_000;
    let steps = cfg.steps();
    let n = cfg.grid().n_interior();

    let mut load = Load::zeros(cfg);
    let mut warm = SystemState::zero(cfg.grid());
    let mut mixer = (opts.anderson_window > 0).then(|| Anderson::new(opts.anderson_window, opts.anderson_damping));
    let mut history = Vec::new();
    let mut sup_load: f64 = 0.0;
    let mut converged = false;
    for _ in 0..opts.max_iter.max(1) {
        let (traj, _) = linear_periodic_solve(&load, cfg, &warm, inner_tol, inner_max)?;
        warm = traj.first().clone();
        let next = Load::from_trajectory(&traj, cfg)?;
        sup_load = sup_load.max(next.sup_norm(cfg));
        let d = next.distance(&load, cfg);
        history.push(d);
        if d <= opts.tol {
            load = next;
            converged = true;
            break;
        }
        load = match mixer.as_mut() {
            Some(m) => Load::from_vec(&m.next(&load.to_vec(), &next.to_vec()), steps, n),
            None => next,
        };
    }
    let (traj, _) = linear_periodic_solve(&load, cfg, &warm, inner_tol, inner_max)?;
    let mut warnings = cfg.warnings().to_vec();
    if sup_load > bound {
        warnings.push(format!("sup |F| = {sup_load} exceeds the data bound R = {bound}"));
    }
    let report = PeriodicReport {
        method: Method::Schauder,
        iterations: history.len(),
        contraction_estimate: geometric_ratio(&history),
        residual_history: history,
        c0: cfg.c0(),
        converged,
        tolerance: opts.tol,
        final_state: traj.first().clone(),
        warnings,
        sup_load_norm: Some(sup_load),
        load_bound: Some(bound),
        config_digest: cfg.digest().to_string(),
    };
    if converged {
        Ok((report, traj))
    } else {
        Err(PeriodicError::NotConverged(Box::new(report)))
    }
}
