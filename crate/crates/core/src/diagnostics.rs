//! Post-processing checks on computed trajectories: constraint violation,
//! variational-inequality residual, the energy-derivative inequality, the
//! a-priori norm bundles and the field-level defect bound.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curves::BoundaryCurves;
use crate::dynamics::{ModelConfig, Trajectory};
use crate::hysteresis::{self, DefectPair};
use crate::spatial::{self, Field, Grid1D};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectories differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("trajectories differ at step {step}: {what}")]
    Mismatch { step: usize, what: &'static str },
    #[error("the energy inequality needs a finite λ")]
    NoLambda,
    #[error("trajectory has fewer than {0} states")]
    TooShort(usize),
    #[error("g failed at t = {0}")]
    Eval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBundle {
    pub u_dt_l2: f64,
    pub u_lap_l2: f64,
    pub u_grad_linf: f64,
    pub v_dt_l2: f64,
    pub v_lap_l2: f64,
    pub v_grad_linf: f64,
    pub yosida_l2: f64,
    /// `|v|_{L²(0,T;H)}`.
    pub v_l2: f64,
}

impl NormBundle {
    pub const FIELDS: [&'static str; 8] = [
        "u_dt_l2",
        "u_lap_l2",
        "u_grad_linf",
        "v_dt_l2",
        "v_lap_l2",
        "v_grad_linf",
        "yosida_l2",
        "v_l2",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.u_dt_l2,
            self.u_lap_l2,
            self.u_grad_linf,
            self.v_dt_l2,
            self.v_lap_l2,
            self.v_grad_linf,
            self.yosida_l2,
            self.v_l2,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub sup_upper_violation: f64,
    pub sup_lower_violation: f64,
    pub vi_max_positive: f64,
}

impl ConstraintReport {
    pub fn sup_violation(&self) -> f64 {
        self.sup_upper_violation.max(self.sup_lower_violation)
    }
}

/// Sup over nodes and times of `[v - f^*(u)]^+` and `[f_*(u) - v]^+`.
/// `vi_max_positive` is left at zero; see [`constraint_report`].
pub fn constraint_violation(traj: &Trajectory, curves: &dyn BoundaryCurves) -> ConstraintReport {
    let (up, down) = traj
        .states
        .par_iter()
        .map(|s| {
            s.u.iter().zip(s.v.iter()).fold((0.0f64, 0.0f64), |(a, b), (&u, &v)| {
                let (lo, hi) = curves.bounds(u);
                (a.max(v - hi), b.max(lo - v))
            })
        })
        .reduce(|| (0.0, 0.0), |(a, b), (c, d)| (a.max(c), b.max(d)));
    ConstraintReport {
        sup_upper_violation: up,
        sup_lower_violation: down,
        vi_max_positive: 0.0,
    }
}

/// Violations against the curves the solver enforces plus the VI residual.
pub fn constraint_report(traj: &Trajectory, cfg: &ModelConfig) -> Result<ConstraintReport, DiagnosticsError> {
    let mut r = constraint_violation(traj, cfg.effective_curves());
    r.vi_max_positive = vi_residual(traj, cfg)?;
    Ok(r)
}

/// Largest positive part over interior times of
/// `sup_z ⟨v' - κΔv - g(u, v), v - z⟩_H`, `z` ranging over all admissible
/// fields. The pairing is affine in `z`, so the sup is attained nodewise at
/// `f_*(u)` or `f^*(u)`. `v'` is a centered difference.
pub fn vi_residual(traj: &Trajectory, cfg: &ModelConfig) -> Result<f64, DiagnosticsError> {
    let m = traj.states.len();
    if m < 3 {
        return Err(DiagnosticsError::TooShort(3));
    }
    let grid = cfg.grid();
    let curves = cfg.effective_curves();
    let kappa = cfg.kappa();
    let dt = traj.dt;
    let b = cfg.params().truncation;
    let g = &cfg.params().g;
    let values: Result<Vec<f64>, DiagnosticsError> = (1..m - 1)
        .into_par_iter()
        .map(|n| {
            let s = &traj.states[n];
            let lap = spatial::laplacian(grid, &s.v).expect("trajectory fields match the grid");
            let (prev, next) = (&traj.states[n - 1].v, &traj.states[n + 1].v);
            let mut sum = 0.0;
            for i in 0..s.v.len() {
                let (u, v) = (s.u[i], s.v[i]);
                let gi = g
                    .eval(s.t, u.clamp(-b, b), v.clamp(-b, b))
                    .map_err(|_| DiagnosticsError::Eval(s.t))?;
                let w = (next[i] - prev[i]) / (2.0 * dt) - kappa * lap[i] - gi;
                let (lo, hi) = curves.bounds(u);
                sum += if w >= 0.0 { w * (v - lo) } else { w * (v - hi) };
            }
            Ok(grid.spacing() * sum)
        })
        .collect();
    Ok(values?.into_iter().fold(0.0, f64::max))
}

/// Forward differences in time, right-point sums for `L²(0,T;·)`, max over
/// all stored states for `L∞(0,T;·)`.
pub fn norm_bundle(traj: &Trajectory, cfg: &ModelConfig) -> NormBundle {
    let grid = cfg.grid();
    let dt = traj.dt;
    let states = &traj.states;
    let lambda = cfg.lambda();
    let curves = cfg.effective_curves();
    let sq = |w: &Field| spatial::l2(grid, w).powi(2);
    let per_step: Vec<[f64; 6]> = (1..states.len())
        .into_par_iter()
        .map(|n| {
            let (a, s) = (&states[n - 1], &states[n]);
            let du = sq(&s.u.sub(&a.u)) / (dt * dt);
            let dv = sq(&s.v.sub(&a.v)) / (dt * dt);
            let lu = sq(&spatial::laplacian(grid, &s.u).expect("grid"));
            let lv = sq(&spatial::laplacian(grid, &s.v).expect("grid"));
            let xi = lambda.map_or(0.0, |l| sq(&hysteresis::yosida_field(grid, curves, l, &s.u, &s.v).expect("grid")));
            [du, lu, dv, lv, xi, sq(&s.v)]
        })
        .collect();
    let total = |k: usize| (dt * per_step.iter().map(|r| r[k]).sum::<f64>()).sqrt();
    let sup_grad = |f: fn(&crate::dynamics::SystemState) -> &Field| {
        states.iter().map(|s| spatial::grad_norm(grid, f(s))).fold(0.0, f64::max)
    };
    NormBundle {
        u_dt_l2: total(0),
        u_lap_l2: total(1),
        u_grad_linf: sup_grad(|s| &s.u),
        v_dt_l2: total(2),
        v_lap_l2: total(3),
        v_grad_linf: sup_grad(|s| &s.v),
        yosida_l2: total(4),
        v_l2: total(5),
    }
}

/// Where the Yosida field is sampled on each step of the energy check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyPoint {
    /// `ξ(u⁺, v⁺)`: exact for frozen `u` by convexity of the energy in `v`.
    Right,
    /// `ξ(u, v)`: the explicit variant, off by `O(dt/λ)`.
    Left,
}

/// Largest positive part over steps of
/// `(I⁺ - I)/dt - ⟨ξ, (v⁺ - v)/dt⟩_H - L₀|(u⁺ - u)/dt|_H |ξ|_H`
/// where `I` is the regularized energy and `ξ` the Yosida field at the
/// right endpoint of the step.
pub fn energy_inequality_check(traj: &Trajectory, cfg: &ModelConfig) -> Result<f64, DiagnosticsError> {
    energy_inequality_residual(traj, cfg, EnergyPoint::Right)
}

pub fn energy_inequality_residual(traj: &Trajectory, cfg: &ModelConfig, point: EnergyPoint) -> Result<f64, DiagnosticsError> {
    let lambda = cfg.lambda().ok_or(DiagnosticsError::NoLambda)?;
    if traj.states.len() < 2 {
        return Err(DiagnosticsError::TooShort(2));
    }
    let grid = cfg.grid();
    let curves = cfg.effective_curves();
    let l0 = cfg.curves().lipschitz_l0;
    let dt = traj.dt;
    let states = &traj.states;
    let energy = |s: &crate::dynamics::SystemState| hysteresis::yosida_energy(grid, curves, lambda, &s.u, &s.v).expect("grid");
    let worst = (1..states.len())
        .into_par_iter()
        .map(|n| {
            let (a, s) = (&states[n - 1], &states[n]);
            let at = if point == EnergyPoint::Right { s } else { a };
            let xi = hysteresis::yosida_field(grid, curves, lambda, &at.u, &at.v).expect("grid");
            let dv = s.v.sub(&a.v).scaled(1.0 / dt);
            let du = s.u.sub(&a.u).scaled(1.0 / dt);
            let lhs = (energy(s) - energy(a)) / dt;
            let rhs = spatial::inner(grid, &xi, &dv) + l0 * spatial::l2(grid, &du) * spatial::l2(grid, &xi);
            (lhs - rhs).max(0.0)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Field version of the defect bound: `S = ⟨ξ_j - ξ_i, v_j - v_i⟩_H` and
/// `δ = (λ_j + λ_i)|ξ_j|_H|ξ_i|_H + (|ξ_j|_H + |ξ_i|_H)(|Δf^*|_H + |Δf_*|_H)`.
pub fn defect_fields(
    grid: &Grid1D,
    curves: &dyn BoundaryCurves,
    (lambda_j, u_j, v_j): (f64, &Field, &Field),
    (lambda_i, u_i, v_i): (f64, &Field, &Field),
) -> DefectPair {
    let n = u_j.len();
    let (mut dhi, mut dlo) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut xj, mut xi) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (lo_j, hi_j) = curves.bounds(u_j[k]);
        let (lo_i, hi_i) = curves.bounds(u_i[k]);
        dhi.push(hi_j - hi_i);
        dlo.push(lo_j - lo_i);
        xj.push(hysteresis::yosida_with_bounds(lo_j, hi_j, lambda_j, v_j[k]));
        xi.push(hysteresis::yosida_with_bounds(lo_i, hi_i, lambda_i, v_i[k]));
    }
    let dxi: Vec<f64> = xj.iter().zip(&xi).map(|(a, b)| a - b).collect();
    let s_value = spatial::inner(grid, &dxi, &v_j.sub(v_i));
    let (nj, ni) = (spatial::l2(grid, &xj), spatial::l2(grid, &xi));
    let delta = (lambda_j + lambda_i) * nj * ni + (nj + ni) * (spatial::l2(grid, &dhi) + spatial::l2(grid, &dlo));
    DefectPair { s_value, delta }
}

/// Max over shared times of `[-S - δ]^+` for two trajectories computed with
/// regularization parameters `λ_i` and `λ_j`.
pub fn defect_field_check(
    grid: &Grid1D,
    curves: &dyn BoundaryCurves,
    (lambda_i, traj_i): (f64, &Trajectory),
    (lambda_j, traj_j): (f64, &Trajectory),
) -> Result<f64, DiagnosticsError> {
    if traj_i.states.len() != traj_j.states.len() {
        return Err(DiagnosticsError::Length(traj_i.states.len(), traj_j.states.len()));
    }
    for (step, (a, b)) in traj_i.states.iter().zip(&traj_j.states).enumerate() {
        if (a.t - b.t).abs() > 1e-12 * (1.0 + a.t.abs()) {
            return Err(DiagnosticsError::Mismatch { step, what: "time" });
        }
        if a.u.len() != grid.n_interior() || b.u.len() != grid.n_interior() {
            return Err(DiagnosticsError::Mismatch { step, what: "grid" });
        }
    }
    Ok(traj_i
        .states
        .par_iter()
        .zip(&traj_j.states)
        .map(|(a, b)| {
            let d = defect_fields(grid, curves, (lambda_j, &b.u, &b.v), (lambda_i, &a.u, &a.v));
            (-d.s_value - d.delta).max(0.0)
        })
        .reduce(|| 0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{CurvePair, ScalarCurve};
    use crate::dynamics::{self, ModelParams, SystemState};
    use crate::exprlang::Expr;
    use crate::periodic::{self, SolverOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn config(n: usize, h: &str, g: &str, lambda: Option<f64>, curves: CurvePair, dt: f64) -> ModelConfig {
        ModelConfig::new(ModelParams {
            kappa: 1.0,
            lambda,
            epsilon: 0.0,
            period: 1.0,
            dt,
            grid: Grid1D::new(1.0, n).unwrap(),
            curves,
            h: Expr::parse(h).unwrap(),
            g: Expr::parse(g).unwrap(),
            lipschitz_g_u: Some(0.0),
            lipschitz_g_v: Some(0.0),
            truncation: 10.0,
            quadrature_order: 64,
        })
        .unwrap()
    }

    fn synthetic(cfg: &ModelConfig, f: impl Fn(f64, f64) -> (f64, f64)) -> Trajectory {
        let grid = *cfg.grid();
        let states = (0..=cfg.steps())
            .map(|n| {
                let t = cfg.time(n);
                SystemState {
                    t,
                    u: Field::from_fn(&grid, |x| f(t, x).0),
                    v: Field::from_fn(&grid, |x| f(t, x).1),
                }
            })
            .collect();
        Trajectory {
            states,
            dt: cfg.dt(),
            config_digest: cfg.digest().into(),
        }
    }

    #[test]
    fn violation_examples() {
        let cfg = config(16, "0", "0", Some(0.1), CurvePair::canonical(), 0.01);
        let inside = synthetic(&cfg, |_, x| (x, 0.5 * x));
        let r = constraint_violation(&inside, cfg.curves());
        assert_eq!((r.sup_upper_violation, r.sup_lower_violation), (0.0, 0.0));

        let mut bumped = inside.clone();
        let s = &mut bumped.states[7];
        let hi = cfg.curves().eval_pair(s.u[3]).1;
        let mut v = s.v.clone().into_vec();
        v[3] = hi + 0.01;
        s.v = Field::from_vec(v);
        let r = constraint_violation(&bumped, cfg.curves());
        assert!((r.sup_upper_violation - 0.01).abs() < 1e-15);
        assert_eq!(r.sup_lower_violation, 0.0);
    }

    #[test]
    fn zero_trajectory_bundle_is_zero() {
        let cfg = config(8, "0", "0", Some(0.1), CurvePair::canonical(), 0.01);
        let zero = synthetic(&cfg, |_, _| (0.0, 0.0));
        assert!(norm_bundle(&zero, &cfg).values().iter().all(|&x| x == 0.0));
        assert_eq!(energy_inequality_check(&zero, &cfg).unwrap(), 0.0);
        assert_eq!(vi_residual(&zero, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn bundle_matches_analytic_integrals() {
        let dt = 1e-4;
        let cfg = config(255, "0", "0", None, CurvePair::canonical(), dt);
        let traj = synthetic(&cfg, |t, x| ((-t).exp() * (PI * x).sin(), 0.0));
        let b = norm_bundle(&traj, &cfg);
        let decay = (1.0 - (-2.0f64).exp()) / 2.0;
        // ∫₀¹ e^{-2t} dt · ∫₀¹ sin²(πx) dx
        assert!((b.u_dt_l2.powi(2) - decay * 0.5).abs() < 1e-3, "{}", b.u_dt_l2);
        assert!((b.u_lap_l2.powi(2) - decay * 0.5 * PI.powi(4)).abs() < 1e-3 * PI.powi(4));
        assert!((b.u_grad_linf.powi(2) - 0.5 * PI * PI).abs() < 1e-3 * PI * PI);
        assert_eq!(b.v_dt_l2, 0.0);
        assert_eq!(b.yosida_l2, 0.0);
    }

    #[test]
    fn vi_trivial_cases() {
        let zero = CurvePair::coincident(ScalarCurve::Constant(0.0), Some(0.0), 10.0).unwrap();
        let cfg = config(16, "sin(2*pi*t)", "0", Some(1e-3), zero, 1e-3);
        let traj = dynamics::integrate(&SystemState::zero(cfg.grid()), &cfg).unwrap();
        assert!(traj.states.iter().all(|s| s.v.linf() == 0.0));
        assert_eq!(vi_residual(&traj, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn frozen_u_energy_chain_rule() {
        let cfg = config(32, "0", "2*sin(2*pi*t) + 0.5", Some(0.05), CurvePair::canonical(), 1e-3);
        let z0 = SystemState {
            t: 0.0,
            u: Field::zeros(cfg.grid()),
            v: Field::from_fn(cfg.grid(), |x| 1.5 * (PI * x).sin()),
        };
        let traj = dynamics::integrate(&z0, &cfg).unwrap();
        assert!(traj.states.iter().all(|s| s.u.linf() == 0.0));
        assert!(energy_inequality_check(&traj, &cfg).unwrap() <= 1e-8);
    }

    #[test]
    fn resolvent_cross_check_on_converged_run() {
        let lambda = 1e-3;
        let cfg = config(32, "sin(2*pi*t)", "40*sin(2*pi*t)", Some(lambda), CurvePair::canonical(), 1e-3);
        let rep = periodic::find_periodic(
            &cfg,
            &SystemState::zero(cfg.grid()),
            &SolverOptions { tol: 1e-9, max_iter: 400, ..Default::default() },
        )
        .unwrap();
        let traj = dynamics::integrate(&rep.final_state, &cfg).unwrap();
        let r = constraint_violation(&traj, cfg.effective_curves());
        let sup_xi = traj
            .states
            .iter()
            .map(|s| {
                hysteresis::yosida_field(cfg.grid(), cfg.effective_curves(), lambda, &s.u, &s.v)
                    .unwrap()
                    .linf()
            })
            .fold(0.0, f64::max);
        assert!(r.sup_violation() > 0.0);
        assert!((r.sup_violation() - lambda * sup_xi).abs() <= 1e-12);
    }

    #[test]
    fn identical_trajectories_have_no_defect() {
        let cfg = config(16, "sin(2*pi*t)", "4*cos(2*pi*t)", Some(0.01), CurvePair::canonical(), 0.01);
        let traj = dynamics::integrate(&SystemState::zero(cfg.grid()), &cfg).unwrap();
        for s in &traj.states {
            let d = defect_fields(cfg.grid(), cfg.curves(), (0.01, &s.u, &s.v), (0.01, &s.u, &s.v));
            assert_eq!(d.s_value, 0.0);
            assert!(d.delta >= 0.0);
        }
        assert_eq!(defect_field_check(cfg.grid(), cfg.curves(), (0.01, &traj), (0.01, &traj)).unwrap(), 0.0);
        let short = Trajectory { states: traj.states[..3].to_vec(), ..traj.clone() };
        assert!(defect_field_check(cfg.grid(), cfg.curves(), (0.01, &traj), (0.01, &short)).is_err());
    }

    #[test]
    fn random_field_pairs_satisfy_defect_bound() {
        let grid = Grid1D::new(1.0, 24).unwrap();
        let curves = CurvePair::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let mut draw = |s: f64| Field::from_vec((0..24).map(|_| rng.gen_range(-s..s)).collect());
            let (uj, vj, ui, vi) = (draw(4.0), draw(3.0), draw(4.0), draw(3.0));
            let lj = 10f64.powf(rng.gen_range(-4.0..0.0));
            let li = 10f64.powf(rng.gen_range(-4.0..0.0));
            let d = defect_fields(&grid, &curves, (lj, &uj, &vj), (li, &ui, &vi));
            assert!(d.holds(1e-10 * (1.0 + d.delta)), "{d:?}");
        }
    }
}
