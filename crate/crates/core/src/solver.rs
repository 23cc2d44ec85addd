//! Explicit time marching of the physical and rescaled equations.
//!
//! Both modes use the two-stage strong-stability-preserving Runge-Kutta
//! scheme with a step limited by the per-cell drift and collision rates.
//! Scaling variables: `tau = ln(1+t)/alpha`, `X = x (1+t)^(1/alpha)`,
//! `U = (1+t)^(-2/alpha) u`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::DensityField;
use crate::kernels::{BreakageLaw, CollisionKernel};
use crate::operator::{build_redistribution, CollisionOperator};

/// Time-stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Courant factor in (0, 1].
    pub cfl: f64,
    /// Upper bound on the time step.
    pub dt_max: f64,
    /// Rescaled time at which the search for a stationary state gives up.
    pub tau_end: f64,
    /// Threshold on the mass-weighted L1 norm of the rescaled rate.
    pub stationarity_tol: f64,
    /// Steps between history records.
    pub record_every: usize,
    /// Runs abort when the admissible step falls below this value.
    pub dt_min: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { cfl: 0.9, dt_max: 0.1, tau_end: 200.0, stationarity_tol: 1e-8, record_every: 10, dt_min: 1e-12 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(domain(format!("cfl = {} must lie in (0, 1]", self.cfl)));
        }
        for (name, v) in [
            ("dt_max", self.dt_max),
            ("tau_end", self.tau_end),
            ("stationarity_tol", self.stationarity_tol),
            ("dt_min", self.dt_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} = {v} must be positive")));
            }
        }
        if self.record_every == 0 {
            return Err(domain("record_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `du/dt = N(u)` in physical variables.
    Physical,
    /// `dU/dtau = alpha N(U) - X dU/dX - 2U` in scaling variables.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub time: f64,
    pub step: usize,
    /// Moments in the order of [`History::exponents`].
    pub moments: Vec<f64>,
    /// Cumulative mass lost through the right boundary.
    pub outflow: f64,
    /// Cumulative mass removed by clipping negative values.
    pub clipped: f64,
    /// Mass-weighted L1 norm of the rate at the start of the last step.
    pub residual: f64,
}

/// Recorded moment trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub exponents: Vec<f64>,
    pub records: Vec<HistoryRecord>,
}

impl History {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    /// Recorded values of `M_k`, if `k` is tracked.
    pub fn moment_series(&self, k: f64) -> Option<Vec<f64>> {
        let idx = self.exponents.iter().position(|&e| (e - k).abs() < 1e-12)?;
        Some(self.records.iter().map(|r| r.moments[idx]).collect())
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    /// CSV with columns `time,step,M_<k>...,outflow,clipped,residual`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["time".to_string(), "step".to_string()];
        header.extend(self.exponents.iter().map(|k| format!("M_{k}")));
        header.extend(["outflow", "clipped", "residual"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![format!("{:?}", r.time), r.step.to_string()];
            row.extend(r.moments.iter().map(|m| format!("{m:?}")));
            row.extend([r.outflow, r.clipped, r.residual].map(|v| format!("{v:?}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Exponents tracked by default: every moment that enters the moment
/// identities for `k` in {1, 2, 3} together with `k0` and `1 + lambda2`.
pub fn default_exponents(kernel: &CollisionKernel) -> Vec<f64> {
    let (l1, l2) = (kernel.lambda1(), kernel.lambda2());
    let mut e = vec![kernel.k0(), l1, l2, 1.0, 2.0, 3.0];
    for k in [1.0, 2.0, 3.0] {
        e.push(k + l1);
        e.push(k + l2);
    }
    e.sort_by(f64::total_cmp);
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    e
}

/// A single run: current field, time and diagnostics.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub mode: Mode,
    pub time: f64,
    pub steps: usize,
    pub field: DensityField,
    pub outflow: f64,
    pub clipped: f64,
    pub last_residual: f64,
    pub history: History,
}

impl EvolutionState {
    pub fn new(mode: Mode, field: DensityField, exponents: Vec<f64>) -> Self {
        let mut s = Self {
            mode,
            time: 0.0,
            steps: 0,
            field,
            outflow: 0.0,
            clipped: 0.0,
            last_residual: f64::NAN,
            history: History { exponents, records: Vec::new() },
        };
        s.record();
        s
    }

    /// Same as [`EvolutionState::new`] but starting at `time`.
    pub fn starting_at(mode: Mode, field: DensityField, exponents: Vec<f64>, time: f64) -> Self {
        let mut s = Self::new(mode, field, exponents);
        s.time = time;
        s.history.records[0].time = time;
        s
    }

    /// Appends the current state to the history unless it is already the last record.
    pub fn record(&mut self) {
        if self.history.records.last().is_some_and(|r| r.time >= self.time) {
            return;
        }
        let moments = self.history.exponents.iter().map(|&k| self.field.moment(k)).collect();
        self.history.records.push(HistoryRecord {
            time: self.time,
            step: self.steps,
            moments,
            outflow: self.outflow,
            clipped: self.clipped,
            residual: self.last_residual,
        });
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// Mass-weighted L1 norm of the rate before the step.
    pub residual: f64,
    /// Mass that left through the right boundary during the step.
    pub outflow: f64,
    /// Mass removed by clipping.
    pub clipped: f64,
}

/// Reusable buffers for repeated steps with one operator.
#[derive(Debug, Clone)]
pub struct Stepper {
    op: CollisionOperator,
    rate: Vec<f64>,
    stage: Vec<f64>,
    loss: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(op: CollisionOperator) -> Self {
        let n = op.len();
        Self { op, rate: vec![0.0; n], stage: vec![0.0; n], loss: vec![0.0; n], scratch: vec![0.0; n] }
    }

    pub fn operator(&self) -> &CollisionOperator {
        &self.op
    }

    fn eval(&mut self, mode: Mode, u: &[f64], out_stage: bool) -> f64 {
        let out = if out_stage { &mut self.stage } else { &mut self.rate };
        match mode {
            Mode::Physical => {
                self.op.rate_into(u, out, &mut self.loss, &mut self.scratch);
                0.0
            }
            Mode::Rescaled => self.op.rescaled_rate_into(u, out, &mut self.loss, &mut self.scratch),
        }
    }

    /// Mass-weighted L1 norm of the rate at the current state.
    pub fn residual(&mut self, state: &EvolutionState) -> Result<f64> {
        state.field.check_grid(self.op.grid())?;
        let u = state.field.values().to_vec();
        self.eval(state.mode, &u, false);
        Ok(self.rate.iter().zip(self.op.mass_weights()).map(|(r, m)| r.abs() * m).sum())
    }

    /// Advances one step, never past `limit` when given.
    pub fn step(&mut self, state: &mut EvolutionState, cfg: &SolverConfig, limit: Option<f64>) -> Result<StepReport> {
        state.field.check_grid(self.op.grid())?;
        let mode = state.mode;
        let stiff = self.op.stiffness(state.field.values(), mode == Mode::Rescaled, &mut self.scratch);
        let mut dt = if stiff > 0.0 { (cfg.cfl / stiff).min(cfg.dt_max) } else { cfg.dt_max };
        if let Some(t) = limit {
            dt = dt.min(t - state.time);
        }
        if !(dt >= cfg.dt_min) {
            return Err(Error::DtUnderflow { time: state.time, dt });
        }

        let u0 = state.field.values().to_vec();
        let q0 = self.eval(mode, &u0, false);
        let mw = self.op.mass_weights();
        let residual: f64 = self.rate.iter().zip(mw).map(|(r, m)| r.abs() * m).sum();
        let u1: Vec<f64> = u0.iter().zip(&self.rate).map(|(u, r)| u + dt * r).collect();
        let q1 = self.eval(mode, &u1, true);

        let mut clipped = 0.0;
        let mw = self.op.mass_weights();
        let values = state.field.values_mut();
        for i in 0..values.len() {
            let v = 0.5 * u0[i] + 0.5 * (u1[i] + dt * self.stage[i]);
            // Subnormal values are flushed too; they only slow the arithmetic.
            if v < f64::MIN_POSITIVE {
                clipped -= v.min(0.0) * mw[i];
                values[i] = 0.0;
            } else {
                values[i] = v;
            }
        }
        let outflow = 0.5 * dt * (q0 + q1);
        state.time = match limit {
            Some(t) if t - state.time == dt => t,
            _ => state.time + dt,
        };
        state.steps += 1;
        state.outflow += outflow;
        state.clipped += clipped;
        state.last_residual = residual;
        if state.steps.is_multiple_of(cfg.record_every) {
            state.record();
        }
        Ok(StepReport { dt, residual, outflow, clipped })
    }

    /// Steps until `state.time` reaches `target` exactly.
    pub fn advance_to(&mut self, state: &mut EvolutionState, target: f64, cfg: &SolverConfig) -> Result<usize> {
        let mut n = 0;
        while state.time < target {
            self.step(state, cfg, Some(target))?;
            n += 1;
        }
        Ok(n)
    }
}

fn expect_mode(state: &EvolutionState, mode: Mode) -> Result<()> {
    if state.mode == mode {
        Ok(())
    } else {
        Err(Error::Usage(format!("state is in {:?} mode, expected {mode:?}", state.mode)))
    }
}

/// One step of the rescaled equation.
pub fn step_rescaled(state: &mut EvolutionState, cfg: &SolverConfig, op: &CollisionOperator) -> Result<StepReport> {
    expect_mode(state, Mode::Rescaled)?;
    Stepper::new(op.clone()).step(state, cfg, None)
}

/// One step of the physical equation.
pub fn step_physical(state: &mut EvolutionState, cfg: &SolverConfig, op: &CollisionOperator) -> Result<StepReport> {
    expect_mode(state, Mode::Physical)?;
    Stepper::new(op.clone()).step(state, cfg, None)
}

/// Outcome of [`run_to_stationarity`].
#[derive(Debug, Clone)]
pub struct StationaryResult {
    /// Final field rescaled to unit first moment.
    pub profile: DensityField,
    /// Mass-weighted L1 norm of the rescaled rate at the returned profile.
    pub residual: f64,
    pub iterations: usize,
    pub tau: f64,
    pub converged: bool,
    /// First moment before the final normalization.
    pub final_mass: f64,
    /// Mass lost through the right boundary.
    pub outflow: f64,
    /// Mass removed by clipping.
    pub clipped: f64,
    pub history: History,
}

/// Marches the rescaled equation from `initial` (normalized to unit mass)
/// until the rate norm drops below the tolerance or `tau_end` is reached.
pub fn run_to_stationarity(
    initial: &DensityField,
    cfg: &SolverConfig,
    kernel: &CollisionKernel,
    law: &BreakageLaw,
) -> Result<StationaryResult> {
    let table = Arc::new(build_redistribution(initial.grid(), law));
    run_to_stationarity_with(initial, cfg, CollisionOperator::new(*kernel, table))
}

/// [`run_to_stationarity`] with a prebuilt operator.
pub fn run_to_stationarity_with(
    initial: &DensityField,
    cfg: &SolverConfig,
    op: CollisionOperator,
) -> Result<StationaryResult> {
    cfg.validate()?;
    if !initial.is_nonnegative() {
        return Err(domain("initial field must be nonnegative"));
    }
    let start = initial.normalized()?;
    let exps = default_exponents(op.kernel());
    let mut state = EvolutionState::new(Mode::Rescaled, start, exps);
    let mut stepper = Stepper::new(op);
    let mut converged = false;
    while state.time < cfg.tau_end {
        let rep = stepper.step(&mut state, cfg, Some(cfg.tau_end))?;
        if rep.residual < cfg.stationarity_tol {
            converged = true;
            break;
        }
    }
    let residual = stepper.residual(&state)?;
    state.last_residual = residual;
    state.record();
    let final_mass = state.field.mass();
    let profile = state.field.normalized()?;
    Ok(StationaryResult {
        profile,
        residual,
        iterations: state.steps,
        tau: state.time,
        converged: converged && residual < cfg.stationarity_tol,
        final_mass,
        outflow: state.outflow,
        clipped: state.clipped,
        history: state.history,
    })
}

/// Marches `du/dt = N_h(u)` to `t_end`.
pub fn simulate_physical(
    initial: &DensityField,
    t_end: f64,
    cfg: &SolverConfig,
    kernel: &CollisionKernel,
    law: &BreakageLaw,
) -> Result<EvolutionState> {
    cfg.validate()?;
    if !initial.is_nonnegative() {
        return Err(domain("initial field must be nonnegative"));
    }
    let table = Arc::new(build_redistribution(initial.grid(), law));
    let mut stepper = Stepper::new(CollisionOperator::new(*kernel, table));
    let mut state = EvolutionState::new(Mode::Physical, initial.clone(), default_exponents(kernel));
    stepper.advance_to(&mut state, t_end, cfg)?;
    state.record();
    Ok(state)
}

/// Mean size `e(t) = [1 + omega t (lambda - 1)]^(1/(1-lambda))`, solving
/// `e' = -omega e^lambda` with `e(0) = 1`.
pub fn mean_size(t: f64, kernel: &CollisionKernel, omega: f64) -> f64 {
    let lambda = kernel.lambda();
    (1.0 + omega * t * (lambda - 1.0)).powf(1.0 / (1.0 - lambda))
}

/// `(t, x, u) -> (tau, X, U)`.
pub fn to_rescaled(t: f64, x: f64, u: f64, kernel: &CollisionKernel) -> (f64, f64, f64) {
    let a = kernel.alpha();
    let tau = t.ln_1p() / a;
    (tau, x * tau.exp(), u * (-2.0 * tau).exp())
}

/// `(tau, X, U) -> (t, x, u)`.
pub fn from_rescaled(tau: f64, x: f64, u: f64, kernel: &CollisionKernel) -> (f64, f64, f64) {
    let a = kernel.alpha();
    ((a * tau).exp_m1(), x * (-tau).exp(), u * (2.0 * tau).exp())
}

/// Physical field at time `t` expressed in scaling variables.
pub fn physical_to_rescaled(field: &DensityField, t: f64, kernel: &CollisionKernel) -> Result<DensityField> {
    let tau = t.ln_1p() / kernel.alpha();
    field.rescaled((-2.0 * tau).exp(), (-tau).exp())
}

/// Rescaled field at time `tau` expressed in physical variables.
pub fn rescaled_to_physical(field: &DensityField, tau: f64) -> Result<DensityField> {
    field.rescaled((2.0 * tau).exp(), tau.exp())
}

/// `d(t) = int X |e(t)^2 u(t, e(t) X) - eta(X)| dX` on the profile grid.
pub fn self_similar_distance(
    state: &EvolutionState,
    profile: &DensityField,
    kernel: &CollisionKernel,
    omega: f64,
) -> Result<f64> {
    expect_mode(state, Mode::Physical)?;
    if !(state.time > 0.0) {
        return Err(domain("self-similar distance needs t > 0"));
    }
    let e = mean_size(state.time, kernel, omega);
    let scale = e * e;
    Ok(profile.weighted_l1_to(|x| scale * state.field.interpolate(e * x)))
}
