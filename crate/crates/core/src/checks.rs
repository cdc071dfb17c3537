//! Seeded property suites behind `phasehyst check`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::curves::{BoundaryCurves, CurvePair, Mollifier, MollifiedPair, ScalarCurve, DEFAULT_QUADRATURE_ORDER};
use crate::dynamics::{self, ModelConfig, ModelParams, SystemState};
use crate::exprlang::Expr;
use crate::hysteresis::{self, DefectSide, Region};
use crate::periodic::{self, SolverOptions};
use crate::spatial::{self, Field, Grid1D};

pub const SUITES: [&str; 6] = ["curves", "hysteresis", "spatial", "dynamics", "periodic", "all"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl CheckResult {
    fn new(name: &str, passed: bool, details: Value, counterexample: Option<Value>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            details,
            counterexample,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown suite `{0}` (expected one of curves, hysteresis, spatial, dynamics, periodic, all)")]
pub struct UnknownSuite(pub String);

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, UnknownSuite> {
    let checks = match name {
        "curves" => curves_suite(seed),
        "hysteresis" => hysteresis_suite(seed),
        "spatial" => spatial_suite(seed),
        "dynamics" => dynamics_suite(seed),
        "periodic" => periodic_suite(seed),
        "all" => {
            let mut all = curves_suite(seed);
            all.extend(hysteresis_suite(seed));
            all.extend(spatial_suite(seed));
            all.extend(dynamics_suite(seed));
            all.extend(periodic_suite(seed));
            all
        }
        other => return Err(UnknownSuite(other.into())),
    };
    Ok(SuiteReport {
        suite: name.into(),
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub const MOLLIFIER_SAMPLES: usize = 10_000;

/// Lipschitz bound, uniform error `≤ L₀ε` and sup bound of the mollified
/// canonical pair.
pub fn curves_suite(seed: u64) -> Vec<CheckResult> {
    let base = std::sync::Arc::new(CurvePair::canonical());
    let l0 = base.lipschitz_l0;
    let mut out = Vec::new();
    for (k, eps) in [0.1, 0.01].into_iter().enumerate() {
        let m = MollifiedPair {
            base: base.clone(),
            mollifier: Mollifier::new(eps, DEFAULT_QUADRATURE_ORDER).expect("valid mollifier"),
        };
        let mut r = rng(seed, 10 + k as u64);
        let (mut lip, mut err, mut sup): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let mut bad = None;
        for _ in 0..MOLLIFIER_SAMPLES {
            let u1: f64 = r.gen_range(-5.0..5.0);
            // half the pairs close together so the quotient probes the slope
            let u2 = if r.gen_bool(0.5) { u1 + r.gen_range(-1e-3..1e-3) } else { r.gen_range(-5.0..5.0) };
            if u1 == u2 {
                continue;
            }
            let (l1, h1) = m.bounds(u1);
            let (l2, h2) = m.bounds(u2);
            let q = (l1 - l2).abs().max((h1 - h2).abs()) / (u1 - u2).abs();
            let (fl, fh) = base.eval_pair(u1);
            let e = (l1 - fl).abs().max((h1 - fh).abs());
            let s = l1.abs().max(h1.abs());
            lip = lip.max(q);
            err = err.max(e);
            sup = sup.max(s);
            if bad.is_none() && (q > l0 + 1e-9 || e > l0 * eps || s > base.sup_bound) {
                bad = Some(json!({"u1": u1, "u2": u2, "quotient": q, "error": e, "abs": s}));
            }
        }
        out.push(CheckResult::new(
            &format!("mollifier_eps_{eps}"),
            bad.is_none(),
            json!({"epsilon": eps, "samples": MOLLIFIER_SAMPLES, "max_quotient": lip, "l0": l0,
                   "max_uniform_error": err, "sup_abs": sup, "sup_bound": base.sup_bound}),
            bad,
        ));
    }
    let m = Mollifier::new(0.1, DEFAULT_QUADRATURE_ORDER).expect("valid mollifier");
    let mass = m.kernel_integral();
    out.push(CheckResult::new(
        "kernel_unit_mass",
        (mass - 1.0).abs() <= 1e-12,
        json!({"mass": mass}),
        None,
    ));
    out
}

pub const DEFECT_TUPLES: usize = 100_000;
pub const DEFECT_MIN_PER_CASE: usize = 1_000;

fn sample_in_region(r: &mut ChaCha8Rng, lo: f64, hi: f64, region: Region, strict_below: bool) -> Option<f64> {
    match region {
        Region::Above => Some(hi + if r.gen_bool(0.1) { 0.0 } else { r.gen_range(0.0..3.0) }),
        Region::Below => {
            let gap: f64 = r.gen_range(0.0..3.0);
            if strict_below && gap == 0.0 {
                return None;
            }
            Some(lo - gap)
        }
        Region::Inside => (lo < hi).then(|| r.gen_range(lo..hi)),
    }
}

/// One stratified defect tuple per call, cycling through the nine
/// `(region_j, region_i)` cases.
pub fn defect_tuples(seed: u64, count: usize) -> Vec<(DefectSide, DefectSide)> {
    let curves = CurvePair::canonical();
    let regions = [Region::Above, Region::Inside, Region::Below];
    let mut r = rng(seed, 20);
    let mut out = Vec::with_capacity(count);
    let side = |r: &mut ChaCha8Rng, region: Region, strict: bool| loop {
        let u: f64 = r.gen_range(-4.0..4.0);
        let lambda = 10f64.powf(r.gen_range(-4.0..0.0));
        let (lo, hi) = curves.eval_pair(u);
        if let Some(v) = sample_in_region(r, lo, hi, region, strict) {
            return DefectSide { lambda, u, v };
        }
    };
    for k in 0..count {
        let (rj, ri) = (regions[k % 9 / 3], regions[k % 3]);
        let j = side(&mut r, rj, false);
        let i = side(&mut r, ri, true);
        out.push((j, i));
    }
    out
}

pub fn hysteresis_suite(seed: u64) -> Vec<CheckResult> {
    let curves = CurvePair::canonical();
    let mut out = Vec::new();

    let tuples = defect_tuples(seed, DEFECT_TUPLES);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut bad = None;
    let mut worst: f64 = f64::NEG_INFINITY;
    for (j, i) in &tuples {
        let case = format!(
            "{:?}/{:?}",
            hysteresis::region_j(&curves, j.u, j.v),
            hysteresis::region_i(&curves, i.u, i.v)
        );
        *counts.entry(case).or_default() += 1;
        let d = hysteresis::monotonicity_defect(&curves, *j, *i);
        worst = worst.max(-d.s_value - d.delta);
        if bad.is_none() && !d.holds(1e-12) {
            bad = Some(json!({"j": [j.lambda, j.u, j.v], "i": [i.lambda, i.u, i.v], "s": d.s_value, "delta": d.delta}));
        }
    }
    let covered = counts.len() == 9 && counts.values().all(|&c| c >= DEFECT_MIN_PER_CASE);
    out.push(CheckResult::new(
        "defect_inequality",
        bad.is_none() && covered,
        json!({"tuples": tuples.len(), "cases": counts, "max_minus_s_minus_delta": worst}),
        bad,
    ));

    let m = MollifiedPair {
        base: std::sync::Arc::new(curves.clone()),
        mollifier: Mollifier::new(0.1, DEFAULT_QUADRATURE_ORDER).expect("valid mollifier"),
    };
    let mut r = rng(seed, 30);
    let mut worst: f64 = 0.0;
    let mut bad = None;
    for _ in 0..10_000 {
        let u: f64 = r.gen_range(-5.0..5.0);
        let v: f64 = r.gen_range(-5.0..5.0);
        let lambda = 10f64.powf(r.gen_range(-4.0..0.0));
        for c in [&curves as &dyn BoundaryCurves, &m] {
            let e = (lambda * hysteresis::yosida(c, lambda, u, v) - (v - hysteresis::project(c, u, v))).abs();
            worst = worst.max(e);
            if e > 1e-12 && bad.is_none() {
                bad = Some(json!({"u": u, "v": v, "lambda": lambda, "error": e}));
            }
        }
    }
    out.push(CheckResult::new(
        "resolvent_identity",
        bad.is_none(),
        json!({"samples": 10_000, "max_error": worst}),
        bad,
    ));
    out
}

fn dense_laplacian(grid: &Grid1D) -> DMatrix<f64> {
    let n = grid.n_interior();
    let h2 = grid.spacing().powi(2);
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 / h2,
        1 => 1.0 / h2,
        _ => 0.0,
    })
}

pub fn spatial_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let grid = Grid1D::new(1.0, 64).expect("valid grid");

    let mut worst: f64 = 0.0;
    for k in 1..=grid.n_interior() {
        let e = grid.eigenvector(k);
        let lap = spatial::laplacian(&grid, &e).expect("grid");
        let res = lap.iter().zip(e.iter()).map(|(l, e)| (l + grid.eigenvalue(k) * e).abs()).fold(0.0, f64::max);
        worst = worst.max(res / grid.eigenvalue(k));
    }
    out.push(CheckResult::new(
        "eigenpair_identity",
        worst <= 1e-10,
        json!({"n": grid.n_interior(), "max_relative_residual": worst}),
        None,
    ));

    let mut r = rng(seed, 40);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = Field::from_vec((0..64).map(|_| r.gen_range(-1.0..1.0)).collect());
        let lap = spatial::laplacian(&grid, &w).expect("grid");
        let lhs = -spatial::inner(&grid, &lap, &w);
        let rhs = spatial::grad_norm(&grid, &w).powi(2);
        worst = worst.max((lhs - rhs).abs() / rhs.max(1.0));
    }
    out.push(CheckResult::new(
        "summation_by_parts",
        worst <= 1e-10,
        json!({"draws": 100, "max_relative_error": worst}),
        None,
    ));

    let cp = spatial::poincare_constant(&grid);
    let dense = SymmetricEigen::new(-dense_laplacian(&grid));
    let mu1 = dense.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let target = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
    out.push(CheckResult::new(
        "poincare_constant",
        (cp - target).abs() <= 1e-3 && (cp - 1.0 / mu1).abs() <= 1e-10,
        json!({"c_p": cp, "dense_oracle": 1.0 / mu1, "continuum": target}),
        None,
    ));
    out
}

/// One step assembled with dense matrices and solved by LU.
pub fn dense_step(z: &SystemState, cfg: &ModelConfig) -> (DVector<f64>, DVector<f64>) {
    let grid = cfg.grid();
    let n = grid.n_interior();
    let dt = cfg.dt();
    let lap = dense_laplacian(grid);
    let id = DMatrix::<f64>::identity(n, n);
    let (fu, fv) = cfg.load(z.t, &z.u, &z.v).expect("load evaluates");
    let ru = DVector::from_iterator(n, z.u.iter().zip(fu.iter()).map(|(u, f)| u + dt * f));
    let rv = DVector::from_iterator(n, z.v.iter().zip(fv.iter()).map(|(v, f)| v + dt * f));
    let a_u = &id - &lap * dt;
    let alpha = 1.0 + cfg.lambda().map_or(0.0, |l| dt / l);
    let a_v = &id * alpha - &lap * (dt * cfg.kappa());
    (
        a_u.lu().solve(&ru).expect("nonsingular"),
        a_v.lu().solve(&rv).expect("nonsingular"),
    )
}

fn small_model(n: usize, h: &str, g: &str, lambda: Option<f64>, dt: f64) -> ModelConfig {
    ModelConfig::new(ModelParams {
        grid: Grid1D::new(1.0, n).expect("valid grid"),
        h: Expr::parse(h).expect("valid expression"),
        g: Expr::parse(g).expect("valid expression"),
        lambda,
        dt,
        epsilon: 0.0,
        lipschitz_g_u: Some(1.0),
        lipschitz_g_v: Some(0.5),
        ..ModelParams::canonical()
    })
    .expect("valid model")
}

pub fn dynamics_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let cfg = small_model(4, "sin(2*pi*t) + 0.3*u*v", "2 - 0.5*v + u", Some(0.05), 0.01);
    let mut r = rng(seed, 50);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let z = SystemState {
            t: r.gen_range(0.0..1.0),
            u: Field::from_vec((0..4).map(|_| r.gen_range(-2.0..2.0)).collect()),
            v: Field::from_vec((0..4).map(|_| r.gen_range(-2.0..2.0)).collect()),
        };
        let next = dynamics::step(&z, &cfg).expect("finite step");
        let (du, dv) = dense_step(&z, &cfg);
        for i in 0..4 {
            worst = worst.max((next.u[i] - du[i]).abs()).max((next.v[i] - dv[i]).abs());
        }
    }
    out.push(CheckResult::new(
        "dense_step_reference",
        worst <= 1e-12,
        json!({"n": 4, "draws": 50, "max_error": worst}),
        None,
    ));

    let cfg = small_model(32, "0", "0", None, 1e-3);
    let grid = *cfg.grid();
    let e = grid.eigenvector(1);
    let next = dynamics::step(&SystemState { t: 0.0, u: e.clone(), v: e.clone() }, &cfg).expect("finite step");
    let factor = 1.0 / (1.0 + cfg.dt() * grid.eigenvalue(1));
    let err = next.u.sub(&e.scaled(factor)).linf().max(next.v.sub(&e.scaled(factor)).linf());
    out.push(CheckResult::new(
        "eigenvector_decay",
        err <= 1e-14,
        json!({"factor": factor, "max_error": err}),
        None,
    ));

    let lambda = 0.01;
    let cfg = small_model(16, "0", "0", Some(lambda), 1e-3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let u: Vec<f64> = (0..16).map(|_| r.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..16).map(|_| r.gen_range(-3.0..3.0)).collect();
        let (_, fv) = cfg.load(0.0, &u, &v).expect("load evaluates");
        for i in 0..16 {
            let j_form = (v[i] - lambda * fv[i]) / lambda;
            let y = hysteresis::yosida(cfg.effective_curves(), lambda, u[i], v[i]);
            worst = worst.max((j_form - y).abs() * lambda);
        }
    }
    out.push(CheckResult::new(
        "j_form_equals_yosida",
        worst <= 1e-12,
        json!({"max_scaled_error": worst}),
        None,
    ));
    out
}

pub fn periodic_suite(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let cfg = small_model(16, "0", "0", Some(0.1), 1e-3);
    let rep = periodic::find_periodic(&cfg, &SystemState::zero(cfg.grid()), &SolverOptions::default());
    let ok = matches!(&rep, Ok(r) if r.iterations == 1 && r.final_state.norm(cfg.grid()) == 0.0);
    out.push(CheckResult::new("zero_data_one_iteration", ok, json!({"ok": ok}), None));

    let a = 0.5;
    let cfg = small_model(64, "0", "0.5*v", None, 1e-3);
    let grid = *cfg.grid();
    let mut r = rng(seed, 60);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..5 {
        let mut draw = || Field::from_vec((0..64).map(|_| r.gen_range(-1.0..1.0)).collect());
        let z1 = SystemState { t: 0.0, u: Field::zeros(&grid), v: draw() };
        let z2 = SystemState { t: 0.0, u: Field::zeros(&grid), v: draw() };
        let p1 = periodic::period_map(&z1, &cfg).expect("finite");
        let p2 = periodic::period_map(&z2, &cfg).expect("finite");
        let ratio = spatial::l2(&grid, &p1.v.sub(&p2.v)) / spatial::l2(&grid, &z1.v.sub(&z2.v));
        worst_ratio = worst_ratio.max(ratio);
    }
    let dt = cfg.dt();
    let closed = (1.0 + dt * (cfg.kappa() * grid.eigenvalue(1) - a)).powf(-cfg.period() / dt);
    let continuum = (-cfg.c0() * cfg.period()).exp();
    out.push(CheckResult::new(
        "linear_contraction",
        worst_ratio <= closed * 1.05 && worst_ratio <= continuum + 0.05,
        json!({"measured": worst_ratio, "discrete_factor": closed, "exp_minus_c0_t": continuum, "c0": cfg.c0()}),
        None,
    ));

    let zero = CurvePair::coincident(ScalarCurve::Constant(0.0), Some(0.0), 10.0).expect("valid curves");
    let cfg = ModelConfig::new(ModelParams {
        curves: zero,
        ..small_model(32, "1", "0", Some(1e-3), 1e-3).params().clone()
    })
    .expect("valid model");
    let rep = periodic::find_periodic(
        &cfg,
        &SystemState::zero(cfg.grid()),
        &SolverOptions { tol: 1e-12, ..Default::default() },
    );
    let ones = Field::from_vec(vec![1.0; 32]);
    let direct = spatial::solve_helmholtz(cfg.grid(), 1e-300, 1.0, &ones).expect("grid");
    let (ok, err) = match &rep {
        Ok(r) => {
            let e = r.final_state.u.sub(&direct).linf();
            (e <= 1e-6 && r.final_state.v.linf() <= 1e-12, e)
        }
        Err(_) => (false, f64::NAN),
    };
    out.push(CheckResult::new("steady_poisson", ok, json!({"max_error": err}), None));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for name in ["curves", "hysteresis", "spatial", "dynamics", "periodic"] {
            let r = run_suite(name, 7).unwrap();
            for c in &r.checks {
                assert!(c.passed, "{name}/{}: {}", c.name, c.details);
            }
        }
    }

    #[test]
    fn unknown_suite() {
        assert_eq!(run_suite("nope", 0).unwrap_err(), UnknownSuite("nope".into()));
    }

    #[test]
    fn tuples_cover_all_cases() {
        let curves = CurvePair::canonical();
        let mut counts = BTreeMap::new();
        for (j, i) in defect_tuples(3, 9_000) {
            let key = (
                format!("{:?}", hysteresis::region_j(&curves, j.u, j.v)),
                format!("{:?}", hysteresis::region_i(&curves, i.u, i.v)),
            );
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 9);
        assert!(counts.values().all(|&c| c >= 900), "{counts:?}");
    }

    #[test]
    fn deterministic_in_seed() {
        let a = serde_json::to_string(&run_suite("hysteresis", 5).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite("hysteresis", 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
