//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;

use colbreak_core::operator::random_field;
use colbreak_core::reference::{reference_parameters, reference_profile, reference_solution};
use colbreak_core::solver::{default_exponents, physical_to_rescaled, run_to_stationarity_with};
use colbreak_core::verify::{check_l1_identity, check_moment_ode, verify_profile};
use colbreak_core::{
    build_redistribution, compare_with_oracle, make_geometric_grid, self_similar_distance, BreakageLaw,
    CollisionKernel, CollisionOperator, DensityField, EvolutionState, Grid, Mode, SolverConfig, StationaryResult,
    Stepper, Tolerances,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Case {
    name: &'static str,
    lambda1: f64,
    lambda2: f64,
    nu: f64,
    xmax: f64,
}

const CASES: [Case; 3] = [
    Case { name: "(1, 1, 0)", lambda1: 1.0, lambda2: 1.0, nu: 0.0, xmax: 40.0 },
    Case { name: "(0.75, 0.75, 0)", lambda1: 0.75, lambda2: 0.75, nu: 0.0, xmax: 200.0 },
    Case { name: "(0.5, 1, -0.5)", lambda1: 0.5, lambda2: 1.0, nu: -0.5, xmax: 100.0 },
];

const XMIN: f64 = 1e-4;

impl Case {
    fn kernel(&self) -> CollisionKernel {
        CollisionKernel::new(self.lambda1, self.lambda2, 0.0).unwrap()
    }

    fn law(&self) -> BreakageLaw {
        BreakageLaw::power_law(self.nu).unwrap()
    }

    fn grid(&self, cells: usize) -> Arc<Grid> {
        Arc::new(make_geometric_grid(XMIN, self.xmax, cells).unwrap())
    }

    fn operator(&self, grid: &Arc<Grid>, law: &BreakageLaw) -> CollisionOperator {
        CollisionOperator::new(self.kernel(), Arc::new(build_redistribution(grid, law)))
    }

    fn stationary(&self, cells: usize) -> StationaryResult {
        self.stationary_with(cells, &self.law())
    }

    fn stationary_with(&self, cells: usize, law: &BreakageLaw) -> StationaryResult {
        let g = self.grid(cells);
        let u0 = DensityField::from_fn(g.clone(), |x| (-x).exp()).unwrap();
        run_to_stationarity_with(&u0, &SolverConfig::default(), self.operator(&g, law)).unwrap()
    }
}

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn reference_stationary_via_cli() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
        [kernel]
        lambda1 = 1.0
        lambda2 = 1.0
        [breakage]
        variant = "power_law"
        nu = 0.0
        [grid]
        xmin = 1e-4
        xmax = 40.0
        cells = 512
        "#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_colbreak"))
        .args(["find-profile", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let r = &manifest["results"];
    let residual = r["residual"].as_f64().unwrap();
    let err = r["reference_error"].as_f64().unwrap();
    let (profile, _) = DensityField::load(&out.join("profile.csv")).unwrap();
    let recomputed = profile.weighted_l1_to(reference_profile);
    let ok = status.success() && residual < 1e-8 && err < 0.02 && (recomputed - err).abs() < 1e-12;
    (ok, format!("{status}, residual {residual:.3e} < 1e-8, weighted L1 error {err:.5} < 0.02"))
}

fn conservation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for case in &CASES {
        let g = case.grid(512);
        let law = case.law();
        let cfg = SolverConfig::default();
        let mut stepper = Stepper::new(case.operator(&g, &law));
        let u0 = DensityField::from_fn(g.clone(), |x| (-x).exp()).unwrap();

        let m0 = u0.mass();
        let mut state = EvolutionState::new(Mode::Physical, u0.clone(), vec![1.0]);
        let mut drift: f64 = 0.0;
        for _ in 0..10_000 {
            stepper.step(&mut state, &cfg, None).unwrap();
            drift = drift.max((state.field.mass() - m0).abs() / m0);
        }

        let mut state = EvolutionState::new(Mode::Rescaled, u0.normalized().unwrap(), vec![1.0]);
        let mut budget: f64 = 0.0;
        for _ in 0..2_000 {
            let before = state.field.mass();
            let rep = stepper.step(&mut state, &cfg, None).unwrap();
            budget = budget.max((state.field.mass() - before + rep.outflow + rep.clipped).abs() / before);
        }
        ok &= drift <= 1e-10 && budget <= 1e-12;
        parts.push(format!("{}: M1 drift {drift:.1e}, budget {budget:.1e}", case.name));
    }
    (ok, format!("{}; limits 1e-10 / 1e-12", parts.join("; ")))
}

fn l1_identity() -> Outcome {
    let tol = Tolerances::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for case in &CASES {
        let mut errs = Vec::new();
        for (cells, limit) in [(512, 0.01), (1024, 0.005)] {
            let res = case.stationary(cells);
            let c = check_l1_identity(&res.profile, &case.kernel(), &case.law(), &tol);
            let e = (c.computed - c.reference).abs();
            ok &= res.converged && e < limit;
            errs.push(format!("{e:.2e}"));
        }
        parts.push(format!("{}: {}", case.name, errs.join(" / ")));
    }
    (ok, format!("{}; limits 1e-2 at 512, 5e-3 at 1024", parts.join("; ")))
}

fn moment_ode() -> Outcome {
    let (kernel, law) = reference_parameters();
    let case = &CASES[0];
    let cfg = SolverConfig { record_every: 1, ..SolverConfig::default() };
    let tol = Tolerances::default();
    let mut residuals = Vec::new();
    for cells in [512, 1024] {
        let g = case.grid(cells);
        let mut stepper = Stepper::new(case.operator(&g, &law));
        let u0 = DensityField::from_fn(g, |x| (-x).exp()).unwrap().normalized().unwrap();
        let mut state = EvolutionState::new(Mode::Rescaled, u0, default_exponents(&kernel));
        stepper.advance_to(&mut state, 6.0, &cfg).unwrap();
        let r: Vec<f64> = [2.0, 3.0]
            .iter()
            .map(|&k| check_moment_ode(&state.history, Mode::Rescaled, k, &kernel, &law, &tol).computed)
            .collect();
        residuals.push(r);
    }
    let ratios: Vec<f64> = (0..2).map(|i| residuals[0][i] / residuals[1][i]).collect();
    let ok = residuals[0].iter().all(|&r| r < 1e-2) && ratios.iter().all(|&q| (1.4..=2.6).contains(&q));
    (
        ok,
        format!(
            "k=2: {:.2e} -> {:.2e} (ratio {:.2}), k=3: {:.2e} -> {:.2e} (ratio {:.2}); limit 1e-2, ratio 2 +- 30%",
            residuals[0][0], residuals[1][0], ratios[0], residuals[0][1], residuals[1][1], ratios[1]
        ),
    )
}

fn bounds_suite() -> Outcome {
    let tol = Tolerances::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for case in &CASES {
        let res = case.stationary(512);
        let report = verify_profile(&res.profile, &case.kernel(), &case.law(), &tol);
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        ok &= res.converged && failed.is_empty();
        parts.push(if failed.is_empty() {
            format!("{}: {} checks pass", case.name, report.checks.len())
        } else {
            format!("{}: failed {}", case.name, failed.join(","))
        });
    }
    (ok, parts.join("; "))
}

fn oracle() -> Outcome {
    let (kernel, law) = reference_parameters();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut deviations = Vec::new();
    let mut loss = f64::NAN;
    for n in [16, 32, 64] {
        let g = Arc::new(make_geometric_grid(1e-3, 30.0, n).unwrap());
        let fields: Vec<DensityField> = (0..20).map(|_| random_field(&g, &mut rng)).collect();
        let table = build_redistribution(&g, &law);
        let rep = compare_with_oracle(&kernel, &law, &table, &fields).unwrap();
        if n == 32 {
            loss = rep.loss_max_rel_error;
        }
        deviations.push((rep.reference_factor - 1.0).abs());
    }
    let ok = loss <= 1e-12 && deviations[1] <= 0.05 && deviations.windows(2).all(|w| w[1] < w[0]);
    (
        ok,
        format!(
            "loss error {loss:.1e} <= 1e-12; |factor - 1| at x~1: {:.4} / {:.4} / {:.4} for n = 16 / 32 / 64",
            deviations[0], deviations[1], deviations[2]
        ),
    )
}

fn scaling_consistency() -> Outcome {
    let (kernel, law) = reference_parameters();
    let case = &CASES[0];
    let cfg = SolverConfig::default();
    let g = case.grid(512);
    let u0 = DensityField::from_fn(g.clone(), |x| (-x).exp()).unwrap();

    let exact_rescaled = |tau: f64| {
        let t = tau.exp_m1();
        move |x: f64| (-2.0 * tau).exp() * reference_solution(t, x * (-tau).exp())
    };

    let mut ok = true;
    let mut parts = Vec::new();
    let mut phys = Stepper::new(case.operator(&g, &law));
    let mut resc = Stepper::new(case.operator(&g, &law));
    let mut ps = EvolutionState::new(Mode::Physical, u0.clone(), vec![1.0]);
    let mut rs = EvolutionState::new(Mode::Rescaled, u0, vec![1.0]);
    for t in [1.0, 10.0] {
        let tau = f64::ln_1p(t) / kernel.alpha();
        phys.advance_to(&mut ps, t, &cfg).unwrap();
        resc.advance_to(&mut rs, tau, &cfg).unwrap();
        let transformed = physical_to_rescaled(&ps.field, t, &kernel).unwrap();
        let exact = exact_rescaled(tau);
        let e_phys = transformed.weighted_l1_to(exact);
        let e_resc = rs.field.weighted_l1_to(exact);
        let gap = rs.field.weighted_l1_to(|x| transformed.interpolate(x));
        let single = e_phys.max(e_resc);
        ok &= gap <= 2.0 * single;
        parts.push(format!("t={t}: gap {gap:.2e} vs 2 x {single:.2e}"));
    }

    let profile = case.stationary(512).profile;
    let mut d = Vec::new();
    let times: Vec<f64> = (0..=20).map(|i| 100f64.powf(i as f64 / 20.0)).collect();
    let mut ps = EvolutionState::new(Mode::Physical, DensityField::from_fn(g, |x| (-x).exp()).unwrap(), vec![1.0]);
    for &t in &times {
        phys.advance_to(&mut ps, t, &cfg).unwrap();
        d.push(self_similar_distance(&ps, &profile, &kernel, kernel.omega()).unwrap());
    }
    let monotone = d.windows(2).all(|w| w[1] < w[0]);
    ok &= monotone;
    parts.push(format!("d(1) = {:.3e}, d(100) = {:.3e}, monotone on 21 times: {monotone}", d[0], d[20]));
    (ok, parts.join("; "))
}

fn mollified_family() -> Outcome {
    let case = &CASES[0];
    let base = case.law();
    let mut phi_dev = Vec::new();
    let mut dist = Vec::new();
    let mut last = None;
    for delta in [0.2, 0.1, 0.05] {
        let m = base.mollify(delta).unwrap();
        phi_dev.push((m.mollifier_normalization().unwrap() - 1.0).abs());
        dist.push(base.weighted_distance(&m, 1.0).unwrap());
        last = Some(m);
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let smooth = case.stationary_with(512, &last.unwrap());
    let plain = case.stationary(512);
    let gap = smooth.profile.weighted_l1_distance(&plain.profile).unwrap();
    let ok = decreasing(&phi_dev) && decreasing(&dist) && gap < 0.05 && smooth.converged && plain.converged;
    (
        ok,
        format!(
            "{}: |Phi-1| {:.2e} / {:.2e} / {:.2e}, int z|b-b_d| {:.2e} / {:.2e} / {:.2e}, profile gap at 0.05 {gap:.2e} < 0.05",
            case.name, phi_dev[0], phi_dev[1], phi_dev[2], dist[0], dist[1], dist[2]
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("reference stationary profile", reference_stationary_via_cli),
        ("mass conservation and rescaled budget", conservation),
        ("L1 identity", l1_identity),
        ("moment identity along the transient", moment_ode),
        ("bounds suite", bounds_suite),
        ("operator against direct quadrature", oracle),
        ("physical and rescaled runs agree", scaling_consistency),
        ("mollified daughter distributions", mollified_family),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failures += 1;
        }
        println!("{} criterion {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
