use std::sync::OnceLock;
use std::time::Instant;

use phasehyst::checks::{self, CheckResult};
use phasehyst::config::{RunConfig, SweepParameter};
use phasehyst::diagnostics::{self, EnergyPoint, NormBundle};
use phasehyst::dynamics::{self, ModelConfig, SystemState, Trajectory};
use phasehyst::periodic::{self, PeriodicReport, SolverOptions};

const SEED: u64 = 0;

const LIPSCHITZ_SLACK: f64 = 1e-9;
const DEFECT_SLACK: f64 = 1e-12;
const DEFECT_TUPLES: u64 = 100_000;
const DEFECT_PER_CASE: u64 = 1_000;
const RESOLVENT_TOL: f64 = 1e-12;
const SPATIAL_TOL: f64 = 1e-10;
const POINCARE_TOL: f64 = 1e-3;
const STEP_TOL: f64 = 1e-12;
const DECAY_TOL: f64 = 1e-14;
const PERIODIC_TOL: f64 = 1e-8;
const SOLVE_TOL: f64 = 1e-10;
const AGREEMENT_TOL: f64 = 1e-6;
const SLOPE_RANGE: (f64, f64) = (0.7, 1.3);
const UNIFORMITY_FACTOR: f64 = 2.0;
const CONTRACTION_SLACK: f64 = 1.05;
const CONTRACTION_MARGIN: f64 = 0.05;
const ENERGY_C: f64 = 1.0;
const HALVING_RANGE: (f64, f64) = (1.5, 2.5);
const VI_FIXTURE_C: f64 = 650.0;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn suite_check(suite: &str, name: &str) -> CheckResult {
    let r = checks::run_suite(suite, SEED).unwrap();
    r.checks.into_iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no check {name}"))
}

fn num(c: &CheckResult, key: &str) -> f64 {
    c.details[key].as_f64().unwrap_or_else(|| panic!("{}: no number at {key}", c.name))
}

fn canonical_at(param: SweepParameter, value: f64) -> ModelConfig {
    RunConfig::canonical().model_at(param, value).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions { tol: SOLVE_TOL, ..Default::default() }
}

fn orbit(cfg: &ModelConfig) -> (PeriodicReport, Trajectory) {
    let rep = periodic::find_periodic(cfg, &SystemState::zero(cfg.grid()), &opts()).expect("converges");
    let traj = dynamics::integrate(&rep.final_state, cfg).expect("finite");
    (rep, traj)
}

fn canonical() -> &'static (ModelConfig, PeriodicReport, Trajectory) {
    static C: OnceLock<(ModelConfig, PeriodicReport, Trajectory)> = OnceLock::new();
    C.get_or_init(|| {
        let cfg = RunConfig::canonical().model().unwrap();
        let (rep, traj) = orbit(&cfg);
        (cfg, rep, traj)
    })
}

#[test]
fn criterion_01_mollification() {
    let t = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for eps in [0.1, 0.01] {
        let c = suite_check("curves", &format!("mollifier_eps_{eps}"));
        let l0 = num(&c, "l0");
        let ok = num(&c, "samples") >= 1e4
            && num(&c, "max_quotient") <= l0 + LIPSCHITZ_SLACK
            && num(&c, "max_uniform_error") <= l0 * eps
            && num(&c, "sup_abs") <= num(&c, "sup_bound");
        pass &= ok && c.passed;
        detail += &format!(
            "eps={eps}: lip={:.6} err={:.3e} sup={:.6}; ",
            num(&c, "max_quotient"),
            num(&c, "max_uniform_error"),
            num(&c, "sup_abs")
        );
    }
    let secs = t.elapsed().as_secs_f64();
    report(1, pass, format!("{detail}{secs:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_02_defect_inequality() {
    let c = suite_check("hysteresis", "defect_inequality");
    let cases = c.details["cases"].as_object().unwrap();
    let min_case = cases.values().map(|v| v.as_u64().unwrap()).min().unwrap();
    let worst = num(&c, "max_minus_s_minus_delta");
    let pass = c.passed
        && c.details["tuples"].as_u64() == Some(DEFECT_TUPLES)
        && cases.len() == 9
        && min_case >= DEFECT_PER_CASE
        && worst <= DEFECT_SLACK;
    report(2, pass, format!("tuples={DEFECT_TUPLES} cases={} min_per_case={min_case} max(-s-delta)={worst:.3e}", cases.len()));
    assert!(pass);
}

#[test]
fn criterion_03_resolvent_identity() {
    let c = suite_check("hysteresis", "resolvent_identity");
    let worst = num(&c, "max_error");
    let pass = c.passed && num(&c, "samples") >= 1e4 && worst <= RESOLVENT_TOL;
    report(3, pass, format!("max |lambda*xi - (v - Jv)| = {worst:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_04_spatial_oracles() {
    let eig = suite_check("spatial", "eigenpair_identity");
    let sbp = suite_check("spatial", "summation_by_parts");
    let cp = suite_check("spatial", "poincare_constant");
    let target = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let pass = num(&eig, "max_relative_residual") <= SPATIAL_TOL
        && num(&sbp, "max_relative_error") <= SPATIAL_TOL
        && (num(&cp, "c_p") - target).abs() <= POINCARE_TOL
        && (num(&cp, "c_p") - num(&cp, "dense_oracle")).abs() <= SPATIAL_TOL;
    report(
        4,
        pass,
        format!(
            "eig={:.3e} sbp={:.3e} C_P={:.6} dense={:.6}",
            num(&eig, "max_relative_residual"),
            num(&sbp, "max_relative_error"),
            num(&cp, "c_p"),
            num(&cp, "dense_oracle")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_stepper_oracle() {
    let step = suite_check("dynamics", "dense_step_reference");
    let decay = suite_check("dynamics", "eigenvector_decay");
    let pass = num(&step, "n") == 4.0 && num(&step, "max_error") <= STEP_TOL && num(&decay, "max_error") <= DECAY_TOL;
    report(
        5,
        pass,
        format!("dense step err={:.3e} decay err={:.3e}", num(&step, "max_error"), num(&decay, "max_error")),
    );
    assert!(pass);
}

#[test]
fn criterion_06_periodicity() {
    let t = Instant::now();
    let (cfg, rep, traj) = canonical();
    let reintegrated = traj.last().distance(traj.first(), cfg.grid());
    let pass = rep.converged && rep.final_residual() <= PERIODIC_TOL && reintegrated <= PERIODIC_TOL;
    report(
        6,
        pass,
        format!(
            "iterations={} residual={:.3e} reintegrated={:.3e} {:.1}s",
            rep.iterations,
            rep.final_residual(),
            reintegrated,
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_method_agreement() {
    let t = Instant::now();
    let (cfg, rep, _) = canonical();
    let (outer, _) = periodic::schauder_outer(cfg, &opts()).expect("two-level iteration converges");
    let dist = outer.final_state.sup_distance(&rep.final_state);
    let sup_f = outer.sup_load_norm.unwrap();
    let bound = outer.load_bound.unwrap();
    let pass = dist <= AGREEMENT_TOL && sup_f <= bound;
    report(
        7,
        pass,
        format!("sup distance={dist:.3e} sup|F|={sup_f:.3} R={bound:.3} outer iterations={} {:.1}s", outer.iterations, t.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_08_lambda_sweep() {
    let t = Instant::now();
    let lambdas = [1e-1, 1e-2, 1e-3, 1e-4];
    let viol: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let cfg = canonical_at(SweepParameter::Lambda, l);
            let (_, traj) = orbit(&cfg);
            diagnostics::constraint_report(&traj, &cfg).unwrap().sup_violation()
        })
        .collect();
    let slope = loglog_slope(&lambdas, &viol);
    let pass = (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope);
    report(8, pass, format!("violations=[{}] slope={slope:.3} {:.1}s", viol.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", "), t.elapsed().as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_09_epsilon_uniformity() {
    let t = Instant::now();
    let bundles: Vec<NormBundle> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&e| {
            let cfg = canonical_at(SweepParameter::Epsilon, e);
            let (_, traj) = orbit(&cfg);
            diagnostics::norm_bundle(&traj, &cfg)
        })
        .collect();
    let mut worst: f64 = 1.0;
    let mut worst_field = "";
    for (k, name) in NormBundle::FIELDS.iter().enumerate() {
        let vals: Vec<f64> = bundles.iter().map(|b| b.values()[k]).collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
        if !(ratio <= worst) {
            worst = ratio;
            worst_field = name;
        }
    }
    let pass = worst <= UNIFORMITY_FACTOR;
    report(9, pass, format!("largest max/min={worst:.4} ({worst_field}) {:.1}s", t.elapsed().as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_10_contraction() {
    let c = suite_check("periodic", "linear_contraction");
    let measured = num(&c, "measured");
    let closed = num(&c, "discrete_factor");
    let cont = num(&c, "exp_minus_c0_t");
    let pass = measured <= closed * CONTRACTION_SLACK && measured <= cont + CONTRACTION_MARGIN;
    report(10, pass, format!("measured={measured:.6} discrete={closed:.6} exp(-c0 T)={cont:.6}"));
    assert!(pass);
}

#[test]
fn criterion_11_energy_inequality() {
    let t = Instant::now();
    let (cfg, _, traj) = canonical();
    let half = canonical_at(SweepParameter::Dt, cfg.dt() / 2.0);
    let (_, traj_half) = orbit(&half);
    let r1 = diagnostics::energy_inequality_check(traj, cfg).unwrap();
    let r2 = diagnostics::energy_inequality_check(&traj_half, &half).unwrap();
    let bound_ok = r1 <= ENERGY_C * cfg.dt() && r2 <= ENERGY_C * half.dt();
    let ratio = r1 / r2;
    let ratio_ok = (HALVING_RANGE.0..=HALVING_RANGE.1).contains(&ratio);
    let l1 = diagnostics::energy_inequality_residual(traj, cfg, EnergyPoint::Left).unwrap();
    let l2 = diagnostics::energy_inequality_residual(&traj_half, &half, EnergyPoint::Left).unwrap();
    let pass = bound_ok && ratio_ok;
    report(
        11,
        pass,
        format!(
            "residual dt={r1:.3e} dt/2={r2:.3e} (bound {}) halving ratio={ratio:.3} (left-point: {l1:.3e} {l2:.3e} ratio {:.3}) {:.1}s",
            if bound_ok { "ok" } else { "exceeded" },
            l1 / l2,
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_12_vi_residual() {
    let t = Instant::now();
    let lambda = 1e-3;
    let cfg = canonical_at(SweepParameter::Lambda, lambda);
    let (rep, traj) = orbit(&cfg);
    let vi = diagnostics::vi_residual(&traj, &cfg).unwrap();
    let bound = VI_FIXTURE_C * (lambda + cfg.dt());
    let pass = rep.converged && vi <= bound;
    report(12, pass, format!("vi={vi:.4} bound={bound:.4} (C={VI_FIXTURE_C}) {:.1}s", t.elapsed().as_secs_f64()));
    assert!(pass);
}
