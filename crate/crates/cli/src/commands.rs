use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use colbreak_core::operator::random_field;
use colbreak_core::reference::{reference_field, reference_profile, reference_solution};
use colbreak_core::solver::{default_exponents, run_to_stationarity_with};
use colbreak_core::verify::verify_profile;
use colbreak_core::{
    build_redistribution, compare_with_oracle, self_similar_distance, BreakageKind, CollisionOperator, DensityField,
    EvolutionState, Mode, Stepper,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{self, Format, Resolved, SimMode};
use crate::{CliError, Common};

/// Largest grid accepted by `oracle-compare`.
const ORACLE_MAX_CELLS: usize = 64;

fn load(common: &Common) -> Result<(Resolved, PathBuf), CliError> {
    let mut r = config::load(&common.config)?;
    if let Some(n) = common.cells {
        r.config.grid.cells = n;
        r = config::resolve(r.config, &r.base_dir.clone())?;
    }
    let out = match &common.out {
        Some(p) => p.clone(),
        None => r.resolve_path(&r.config.output.directory.clone()),
    };
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok((r, out))
}

fn io(path: &Path) -> impl Fn(colbreak_core::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_manifest(out: &Path, command: &str, r: &Resolved, results: Value) -> Result<(), CliError> {
    let manifest = json!({
        "tool": "colbreak",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": r.config.seed,
        "config": r.config,
        "derived": {
            "alpha": r.kernel.alpha(),
            "omega": r.kernel.omega(),
            "e_beta": r.law.e_beta(),
            "breakage": r.law.to_string(),
        },
        "results": results,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(&out.join("manifest.json"), &text)
}

fn is_reference(r: &Resolved) -> bool {
    let b = &r.config.breakage;
    r.kernel.lambda1() == 1.0
        && r.kernel.lambda2() == 1.0
        && b.variant == BreakageKind::PowerLaw
        && b.nu == Some(0.0)
        && b.mollify_delta.is_none()
}

fn operator(r: &Resolved, grid: &Arc<colbreak_core::Grid>) -> CollisionOperator {
    CollisionOperator::new(r.kernel, Arc::new(build_redistribution(grid, &r.law)))
}

pub fn find_profile(common: &Common, tol: Option<f64>) -> Result<(), CliError> {
    let (mut r, out) = load(common)?;
    if let Some(t) = tol {
        r.config.solver.stationarity_tol = t;
        r.config.solver.validate().map_err(|e| CliError::Config(format!("--tol: {e}")))?;
    }
    let (initial, _) = r.initial()?;
    let op = operator(&r, initial.grid());
    let res = run_to_stationarity_with(&initial, &r.config.solver, op)
        .map_err(|e| CliError::NonConvergence(e.to_string()))?;
    let report = verify_profile(&res.profile, &r.kernel, &r.law, &r.config.tolerances);
    let formats = &r.config.output;
    if formats.wants(Format::Csv) {
        let p = out.join("profile.csv");
        res.profile.save(&p, None).map_err(io(&p))?;
        let p = out.join("history.csv");
        let f = fs::File::create(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        res.history.write_csv(std::io::BufWriter::new(f)).map_err(io(&p))?;
    }
    if formats.wants(Format::Json) {
        let p = out.join("report.json");
        write_text(&p, &report.to_json().map_err(io(&p))?)?;
    }
    let table = report.to_table();
    if formats.wants(Format::Table) {
        write_text(&out.join("report.txt"), &table)?;
    }
    println!("{table}");
    let reference_error = is_reference(&r).then(|| res.profile.weighted_l1_to(reference_profile));
    println!(
        "converged={} residual={:e} iterations={} tau={:.4} cells={}",
        res.converged,
        res.residual,
        res.iterations,
        res.tau,
        res.profile.len()
    );
    if let Some(e) = reference_error {
        println!("weighted L1 distance to 4exp(-2x): {e:.6}");
    }
    write_manifest(
        &out,
        "find-profile",
        &r,
        json!({
            "converged": res.converged,
            "residual": res.residual,
            "iterations": res.iterations,
            "tau": res.tau,
            "final_mass": res.final_mass,
            "outflow": res.outflow,
            "clipped": res.clipped,
            "verification_passed": report.passed(),
            "reference_error": reference_error,
        }),
    )?;
    if !res.converged {
        return Err(CliError::NonConvergence(format!(
            "residual {:e} above {:e} at tau = {}",
            res.residual, r.config.solver.stationarity_tol, res.tau
        )));
    }
    if !report.passed() {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(CliError::Verification(names.join(", ")));
    }
    Ok(())
}

/// Snapshot times strictly after `start`, spaced evenly in `ln(1 + t)`
/// (physical) or in `tau` (rescaled).
fn snapshot_times(mode: SimMode, start: f64, end: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    let mut times: Vec<f64> = (1..=count)
        .map(|k| {
            let s = k as f64 / count as f64;
            match mode {
                SimMode::Physical => (s * end.ln_1p()).exp_m1(),
                SimMode::Rescaled => s * end,
            }
        })
        .filter(|&t| t > start)
        .collect();
    if let Some(last) = times.last_mut() {
        *last = end;
    }
    times
}

pub fn simulate(
    common: &Common,
    mode: Option<SimMode>,
    t_end: Option<f64>,
    resume: Option<PathBuf>,
) -> Result<(), CliError> {
    let (mut r, out) = load(common)?;
    if let Some(m) = mode {
        r.config.simulate.mode = m;
    }
    if let Some(t) = t_end {
        if !(t > 0.0) {
            return Err(CliError::Config("--t-end must be positive".into()));
        }
        r.config.simulate.t_end = t;
    }
    if let Some(p) = resume {
        r.config.initial =
            config::InitialConfig { shape: config::Shape::Csv, path: Some(std::path::absolute(&p).unwrap_or(p)) };
    }
    let sim = r.config.simulate.clone();
    let (initial, start) = r.initial()?;
    if start >= sim.t_end {
        return Err(CliError::Config(format!("initial time {start} is not before t_end = {}", sim.t_end)));
    }
    let grid = initial.grid().clone();
    let op = operator(&r, &grid);
    let core_mode = match sim.mode {
        SimMode::Physical => Mode::Physical,
        SimMode::Rescaled => Mode::Rescaled,
    };
    let profile = match (sim.mode, &sim.profile) {
        (SimMode::Rescaled, _) => None,
        (SimMode::Physical, Some(p)) => {
            let (f, _) = DensityField::load(&r.resolve_path(p))
                .map_err(|e| CliError::Config(format!("profile {}: {e}", p.display())))?;
            Some(f)
        }
        (SimMode::Physical, None) => {
            let seed =
                DensityField::from_fn(grid.clone(), |x| (-x).exp()).map_err(|e| CliError::Config(e.to_string()))?;
            let res = run_to_stationarity_with(&seed, &r.config.solver, op.clone())
                .map_err(|e| CliError::NonConvergence(e.to_string()))?;
            Some(res.profile)
        }
    };
    let mut state = EvolutionState::starting_at(core_mode, initial, default_exponents(&r.kernel), start);
    state.record();
    let mut stepper = Stepper::new(op);
    let wants_csv = r.config.output.wants(Format::Csv);
    let mut distances = Vec::new();
    let mut snapshots = Vec::new();
    for (k, t) in snapshot_times(sim.mode, start, sim.t_end, sim.snapshots).into_iter().enumerate() {
        stepper.advance_to(&mut state, t, &r.config.solver).map_err(|e| CliError::NonConvergence(e.to_string()))?;
        state.record();
        let name = format!("snapshot_{:04}.csv", k + 1);
        if wants_csv {
            let p = out.join(&name);
            state.field.save(&p, Some(state.time)).map_err(io(&p))?;
        }
        snapshots.push(json!({ "file": name, "time": state.time, "mass": state.field.mass() }));
        if let Some(prof) = &profile {
            let d = self_similar_distance(&state, prof, &r.kernel, r.kernel.omega())
                .map_err(|e| CliError::NonConvergence(e.to_string()))?;
            distances.push((state.time, d));
        }
    }
    if wants_csv {
        let p = out.join("history.csv");
        let f = fs::File::create(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        state.history.write_csv(std::io::BufWriter::new(f)).map_err(io(&p))?;
        if !distances.is_empty() {
            let mut text = String::from("time,distance\n");
            for (t, d) in &distances {
                text.push_str(&format!("{t:?},{d:?}\n"));
            }
            write_text(&out.join("distance.csv"), &text)?;
        }
    }
    println!(
        "mode={:?} time={} steps={} mass={:.12} outflow={:e} clipped={:e}",
        sim.mode,
        state.time,
        state.steps,
        state.field.mass(),
        state.outflow,
        state.clipped
    );
    for (t, d) in &distances {
        println!("t={t:.6} d={d:.6e}");
    }
    write_manifest(
        &out,
        "simulate",
        &r,
        json!({
            "mode": sim.mode,
            "start": start,
            "time": state.time,
            "steps": state.steps,
            "mass": state.field.mass(),
            "outflow": state.outflow,
            "clipped": state.clipped,
            "snapshots": snapshots,
            "distances": distances,
        }),
    )
}

pub fn verify(common: &Common, profile: &Path) -> Result<(), CliError> {
    let (r, out) = load(common)?;
    let (field, _) =
        DensityField::load(profile).map_err(|e| CliError::Config(format!("profile {}: {e}", profile.display())))?;
    let grid = r.grid()?;
    if !field.grid().same_as(&grid) {
        let g = field.grid();
        return Err(CliError::Config(format!(
            "profile grid [{:e}, {:e}] with {} cells does not match the configured grid [{:e}, {:e}] with {} cells",
            g.xmin(),
            g.xmax(),
            g.len(),
            grid.xmin(),
            grid.xmax(),
            grid.len()
        )));
    }
    let report = verify_profile(&field, &r.kernel, &r.law, &r.config.tolerances);
    if r.config.output.wants(Format::Json) {
        let p = out.join("report.json");
        write_text(&p, &report.to_json().map_err(io(&p))?)?;
    }
    let table = report.to_table();
    if r.config.output.wants(Format::Table) {
        write_text(&out.join("report.txt"), &table)?;
    }
    println!("{table}");
    write_manifest(
        &out,
        "verify",
        &r,
        json!({ "profile": profile, "passed": report.passed(), "checks": report.checks.len() }),
    )?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Verification(names.join(", ")))
    }
}

pub fn oracle_compare(common: &Common, fields: usize) -> Result<(), CliError> {
    let (r, out) = load(common)?;
    let grid = r.grid()?;
    if grid.len() > ORACLE_MAX_CELLS {
        return Err(CliError::Config(format!(
            "oracle comparison is limited to {ORACLE_MAX_CELLS} cells, got {}",
            grid.len()
        )));
    }
    if fields == 0 {
        return Err(CliError::Config("--fields must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
    let samples: Vec<DensityField> = (0..fields).map(|_| random_field(&grid, &mut rng)).collect();
    let table = build_redistribution(&grid, &r.law);
    let rep = compare_with_oracle(&r.kernel, &r.law, &table, &samples).map_err(|e| CliError::Config(e.to_string()))?;
    println!("cells={} fields={}", rep.cells, rep.fields);
    println!("loss max relative error      {:e}", rep.loss_max_rel_error);
    println!("conservative mass defect     {:e}", rep.conservative_mass_defect);
    println!("oracle rate mass defect      {:e}", rep.oracle_rate_mass_defect);
    println!("gain relative gap            {:e}", rep.gain_rel_gap);
    println!(
        "gain factor at x = {:.4}: {:.6} (oracle mass defect {:e})",
        grid.centers()[rep.reference_cell],
        rep.reference_factor,
        rep.reference_mass_defect
    );
    if r.config.output.wants(Format::Json) {
        let text = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Io(e.to_string()))?;
        write_text(&out.join("oracle.json"), &text)?;
    }
    let ok = rep.loss_max_rel_error <= 1e-12 && rep.conservative_mass_defect <= 1e-12;
    write_manifest(
        &out,
        "oracle-compare",
        &r,
        json!({
            "fields": fields,
            "loss_max_rel_error": rep.loss_max_rel_error,
            "conservative_mass_defect": rep.conservative_mass_defect,
            "reference_factor": rep.reference_factor,
            "passed": ok,
        }),
    )?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Verification("conservative operator disagrees with the oracle".into()))
    }
}

pub fn emit_analytic(common: &Common, time: Option<f64>) -> Result<(), CliError> {
    let (r, out) = load(common)?;
    if !is_reference(&r) {
        return Err(CliError::Config("closed forms exist only for lambda1 = lambda2 = 1 with power_law nu = 0".into()));
    }
    let grid = r.grid()?;
    let p = out.join("analytic_profile.csv");
    reference_field(grid.clone()).and_then(|f| f.save(&p, None)).map_err(io(&p))?;
    let mut files = vec![p.file_name().map(|s| s.to_string_lossy().into_owned())];
    if let Some(t) = time {
        if !(t >= 0.0) {
            return Err(CliError::Config("--time must be nonnegative".into()));
        }
        let p = out.join("analytic_solution.csv");
        DensityField::from_fn(grid, |x| reference_solution(t, x)).and_then(|f| f.save(&p, Some(t))).map_err(io(&p))?;
        files.push(p.file_name().map(|s| s.to_string_lossy().into_owned()));
    }
    println!("wrote {}", out.display());
    write_manifest(&out, "emit-analytic", &r, json!({ "files": files, "time": time }))
}
