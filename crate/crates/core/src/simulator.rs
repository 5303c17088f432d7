//! Closed-loop simulation: exogenous track, step integration, policies and
//! trajectory export.

use std::fmt::Write as _;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::actuators::{ActuatorKind, ControlInput, CostLedger, NU};
use crate::ad::{Dual, Real};
use crate::climate::{co2_ppm, ClimateModel, ClimateState, ExternalConditions, NX};
use crate::error::{Error, Result};
use crate::external_data::{
    interpolate_carbon, interpolate_weather, to_external_conditions, CarbonIntensitySample, Site, WeatherSample,
};
use crate::integrate::{dopri5, rk4_step, AdaptiveOptions};

/// Default number of fixed RK4 substeps per sampling interval.
pub const DEFAULT_SUBSTEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Adaptive Dormand-Prince with tight tolerances.
    Plant,
    /// Fixed-step RK4, used inside the controller.
    ControlModel,
}

/// Exogenous inputs of one sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInputs {
    /// Seconds since the scenario start.
    pub time: f64,
    /// Conditions held over each substep, evaluated at its midpoint.
    pub substeps: Vec<ExternalConditions>,
    /// Grid carbon intensity over the interval, gCO2eq kWh-1.
    pub intensity: f64,
}

/// Precomputed exogenous inputs on the control grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousTrack {
    pub dt: f64,
    pub substeps: usize,
    pub steps: Vec<StepInputs>,
}

impl ExogenousTrack {
    /// Interpolates hourly series onto `n_steps` intervals of `dt` seconds
    /// starting at `start`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        weather: &[WeatherSample],
        carbon: &[CarbonIntensitySample],
        geometry: &crate::solar::GreenhouseGeometry,
        site: &Site,
        start: DateTime<Utc>,
        dt: f64,
        substeps: usize,
        n_steps: usize,
    ) -> Result<Self> {
        if !(dt > 0.0) || substeps == 0 {
            return Err(Error::validation(
                "sample_time",
                "must be > 0 with at least one substep",
            ));
        }
        let h = dt / substeps as f64;
        let at = |s: f64| start + Duration::microseconds((s * 1e6).round() as i64);
        let mut steps = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let t0 = k as f64 * dt;
            let mut subs = Vec::with_capacity(substeps);
            for j in 0..substeps {
                let tm = at(t0 + (j as f64 + 0.5) * h);
                let w = interpolate_weather(weather, tm)?;
                subs.push(to_external_conditions(&w, geometry, site, tm));
            }
            let intensity = interpolate_carbon(carbon, at(t0 + 0.5 * dt))?;
            steps.push(StepInputs {
                time: t0,
                substeps: subs,
                intensity,
            });
        }
        Ok(Self { dt, substeps, steps })
    }

    /// The same conditions and intensity at every step.
    pub fn constant(p: ExternalConditions, intensity: f64, dt: f64, substeps: usize, n_steps: usize) -> Self {
        let steps = (0..n_steps)
            .map(|k| StepInputs {
                time: k as f64 * dt,
                substeps: vec![p; substeps],
                intensity,
            })
            .collect();
        Self { dt, substeps, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Inputs of `n` steps starting at `k`.
    pub fn window(&self, k: usize, n: usize) -> Result<&[StepInputs]> {
        self.steps
            .get(k..k + n)
            .ok_or_else(|| Error::DataGap(format!("exogenous track ends before step {}", k + n)))
    }
}

/// Floors quantities that cannot be negative.
pub fn clamp_state(x: &mut [f64; NX]) {
    for v in &mut x[7..] {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Advances the state over one sampling interval with constant `u`.
pub fn integrate_step(
    model: &ClimateModel,
    x: &[f64; NX],
    u: &[f64; NU],
    inputs: &StepInputs,
    dt: f64,
    mode: Mode,
    opts: &AdaptiveOptions,
) -> Result<[f64; NX]> {
    let m = inputs.substeps.len();
    if m == 0 || !(dt > 0.0) {
        return Err(Error::validation("dt", "must be > 0 with at least one substep"));
    }
    let h = dt / m as f64;
    let mut y = *x;
    let mut h_next = opts.h_init;
    for p in &inputs.substeps {
        match mode {
            Mode::ControlModel => {
                y = rk4_step(&mut |s: &[f64; NX], d: &mut [f64; NX]| model.rhs(s, u, p, d), &y, h)?;
            }
            Mode::Plant => {
                let o = AdaptiveOptions {
                    h_init: h_next,
                    ..*opts
                };
                let (z, stats) = dopri5(
                    |_, s: &[f64; NX], d: &mut [f64; NX]| model.rhs(s, u, p, d),
                    0.0,
                    h,
                    &y,
                    &o,
                )?;
                y = z;
                h_next = Some(stats.last_h);
            }
        }
    }
    clamp_state(&mut y);
    Ok(y)
}

/// Tangent width of [`step_jacobian`]: the state followed by the command.
pub const NZ: usize = NX + NU;

/// One control-model step with its exact Jacobian. Column `j < NX` of
/// row `i` is d x_next[i] / d x[j]; column `NX + j` is d x_next[i] / d u[j]
/// per percent.
pub fn step_jacobian(
    model: &ClimateModel,
    x: &[f64; NX],
    u: &[f64; NU],
    inputs: &StepInputs,
    dt: f64,
) -> Result<([f64; NX], [[f64; NZ]; NX])> {
    let m = inputs.substeps.len();
    if m == 0 || !(dt > 0.0) {
        return Err(Error::validation("dt", "must be > 0 with at least one substep"));
    }
    let h = dt / m as f64;
    let mut y: [Dual<NZ>; NX] = std::array::from_fn(|i| Dual::var(x[i], i));
    let ud: [Dual<NZ>; NU] = std::array::from_fn(|j| Dual::var(u[j], NX + j));
    for p in &inputs.substeps {
        y = rk4_step(
            &mut |s: &[Dual<NZ>; NX], d: &mut [Dual<NZ>; NX]| model.rhs(s, &ud, p, d),
            &y,
            h,
        )?;
    }
    for v in &mut y[7..] {
        if v.v < 0.0 {
            *v = Dual::cst(0.0);
        }
    }
    Ok((y.map(|v| v.v), y.map(|v| v.d)))
}

/// What a policy returns at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub u: ControlInput,
    /// Wall time spent deciding, s.
    pub solver_seconds: f64,
    pub diagnostics: Option<crate::empc::SolveDiagnostics>,
}

impl Decision {
    pub fn fixed(u: ControlInput) -> Self {
        Self {
            u,
            solver_seconds: 0.0,
            diagnostics: None,
        }
    }
}

pub trait Policy {
    fn name(&self) -> String;
    fn decide(&mut self, step: usize, x: &ClimateState, track: &ExogenousTrack) -> Result<Decision>;
}

/// All actuators off.
pub struct NoControl;

impl Policy for NoControl {
    fn name(&self) -> String {
        "no-control".into()
    }

    fn decide(&mut self, _: usize, _: &ClimateState, _: &ExogenousTrack) -> Result<Decision> {
        Ok(Decision::fixed(ControlInput::OFF))
    }
}

/// A fixed command for the whole run.
pub struct Constant(pub ControlInput);

impl Policy for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn decide(&mut self, _: usize, _: &ClimateState, _: &ExogenousTrack) -> Result<Decision> {
        Ok(Decision::fixed(self.0))
    }
}

/// One actuator switched from off to fully on at `at_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTest {
    pub actuator: Option<ActuatorKind>,
    pub at_step: usize,
}

impl Policy for StepTest {
    fn name(&self) -> String {
        match self.actuator {
            Some(a) => format!("step-{}", a.slug()),
            None => "step-none".into(),
        }
    }

    fn decide(&mut self, step: usize, _: &ClimateState, _: &ExogenousTrack) -> Result<Decision> {
        let u = match self.actuator {
            Some(a) if step >= self.at_step => ControlInput::only(a, 100.0),
            _ => ControlInput::OFF,
        };
        Ok(Decision::fixed(u))
    }
}

/// Simulation output. Row `k` holds the state at `timestamps[k]`, the
/// command applied from then on and the cumulative ledger up to then.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Option<DateTime<Utc>>,
    pub dt: f64,
    pub timestamps: Vec<f64>,
    pub states: Vec<ClimateState>,
    pub inputs: Vec<ControlInput>,
    pub exogenous: Vec<ExternalConditions>,
    pub intensity: Vec<f64>,
    pub ledgers: Vec<CostLedger>,
    pub diagnostics: Vec<Option<crate::empc::SolveDiagnostics>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn final_state(&self) -> &ClimateState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_ledger(&self) -> &CostLedger {
        self.ledgers.last().expect("trajectory holds the initial ledger")
    }

    pub const CSV_COLUMNS: [&'static str; 32] = [
        "step",
        "time_s",
        "t_cover_k",
        "t_air_k",
        "t_veg_k",
        "t_medium_k",
        "t_tray_k",
        "t_floor_k",
        "t_soil_k",
        "c_w_kg_m3",
        "c_co2_kg_m3",
        "x_sdw_g_m2",
        "x_nsdw_g_m2",
        "co2_ppm",
        "u_heater_pct",
        "u_fan_pct",
        "u_humidifier_pct",
        "u_co2_pct",
        "t_ext_k",
        "t_app_k",
        "h_rel_pct",
        "v_wind_m_s",
        "poa_direct_mean_w_m2",
        "poa_diffuse_mean_w_m2",
        "carbon_intensity_g_kwh",
        "lettuce_revenue_eur",
        "energy_cost_eur",
        "co2_cost_eur",
        "solver_energy_cost_eur",
        "co2_emissions_g",
        "total_eur",
        "solver_iterations",
    ];

    /// One row per step in [`Trajectory::CSV_COLUMNS`] order.
    pub fn to_csv(&self, constants: &crate::params::PhysicalConstants) -> String {
        let mut s = Self::CSV_COLUMNS.join(",");
        s.push('\n');
        for k in 0..self.len() {
            let x = self.states[k];
            let u = self.inputs[k];
            let p = self.exogenous[k];
            let l = &self.ledgers[k];
            let _ = write!(s, "{k},{}", self.timestamps[k]);
            for v in x.to_array() {
                let _ = write!(s, ",{v:.10e}");
            }
            let _ = write!(s, ",{:.4}", co2_ppm(x.c_co2, x.t_air, constants));
            for v in u.to_array() {
                let _ = write!(s, ",{v:.6}");
            }
            let mean = |a: &[f64]| a.iter().sum::<f64>() / a.len() as f64;
            let _ = write!(
                s,
                ",{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                p.t_ext,
                p.t_app,
                p.h_rel,
                p.v_wind,
                mean(&p.i_dir),
                mean(&p.i_diff),
                self.intensity[k]
            );
            let its = self.diagnostics[k].as_ref().map_or(0, |d| d.iterations);
            let _ = writeln!(
                s,
                ",{:.8},{:.8},{:.8},{:.8},{:.6},{:.8},{its}",
                l.lettuce_revenue,
                l.energy_cost.iter().sum::<f64>(),
                l.co2_cost.iter().sum::<f64>(),
                l.solver_energy_cost,
                l.total_co2_mass(),
                l.total()
            );
        }
        s
    }
}

/// Scalar economics used to keep the ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerContext {
    /// EUR per g m-2 of dry weight gained: P_L A_c / rho_dw.
    pub revenue_per_gram: f64,
}

impl LedgerContext {
    pub fn from_model(model: &ClimateModel) -> Self {
        let e = &model.params.economics;
        Self {
            revenue_per_gram: e.lettuce_price * model.geometry.cultivated_area / e.rho_dw,
        }
    }
}

/// Where a run stands between steps; enough to resume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub state: ClimateState,
    pub initial: ClimateState,
    pub ledger: CostLedger,
}

/// Options of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub adaptive: AdaptiveOptions,
    /// Count controller wall time in the ledger.
    pub charge_solver: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            adaptive: AdaptiveOptions::default(),
            charge_solver: true,
        }
    }
}

/// Runs `n_steps` of the closed loop from the initial state.
pub fn run_scenario(
    model: &ClimateModel,
    policy: &mut dyn Policy,
    track: &ExogenousTrack,
    x0: ClimateState,
    n_steps: usize,
    opts: &RunOptions,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<Trajectory> {
    let snap = Snapshot {
        step: 0,
        state: x0,
        initial: x0,
        ledger: CostLedger::default(),
    };
    let (t, _) = resume(model, policy, track, &snap, n_steps, opts, progress)?;
    Ok(t)
}

/// Runs `n_steps` more steps from a snapshot. The returned trajectory
/// starts with the snapshot row.
pub fn resume(
    model: &ClimateModel,
    policy: &mut dyn Policy,
    track: &ExogenousTrack,
    snap: &Snapshot,
    n_steps: usize,
    opts: &RunOptions,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<(Trajectory, Snapshot)> {
    if track.len() < snap.step + n_steps {
        return Err(Error::DataGap(format!(
            "exogenous track has {} steps, run needs {}",
            track.len(),
            snap.step + n_steps
        )));
    }
    let dt = track.dt;
    let econ = &model.params.economics;
    let ctx = LedgerContext::from_model(model);
    let row_inputs = |k: usize| {
        let s = track.steps.get(k).or(track.steps.last());
        match s {
            Some(s) => (s.substeps[s.substeps.len() / 2], s.intensity),
            None => (ExternalConditions::dark(0.0, 0.0, 0.0), 0.0),
        }
    };

    let mut traj = Trajectory {
        start: None,
        dt,
        timestamps: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        inputs: Vec::with_capacity(n_steps + 1),
        exogenous: Vec::with_capacity(n_steps + 1),
        intensity: Vec::with_capacity(n_steps + 1),
        ledgers: Vec::with_capacity(n_steps + 1),
        diagnostics: Vec::with_capacity(n_steps + 1),
    };
    let mut x = snap.state.to_array();
    let mut ledger = snap.ledger;
    for i in 0..n_steps {
        let k = snap.step + i;
        let state = ClimateState::from_array(x);
        let clock = Instant::now();
        let decision = policy.decide(k, &state, track).map_err(|e| Error::Controller {
            step: k,
            source: Box::new(e),
        })?;
        let elapsed = clock.elapsed().as_secs_f64();
        let solver_seconds = if decision.solver_seconds > 0.0 {
            decision.solver_seconds
        } else {
            elapsed
        };
        let u = clamp_input(decision.u);
        let charged = decision.diagnostics.is_some();
        let (p, intensity) = row_inputs(k);
        traj.timestamps.push(k as f64 * dt);
        traj.states.push(state);
        traj.inputs.push(u);
        traj.exogenous.push(p);
        traj.intensity.push(intensity);
        traj.ledgers.push(ledger);
        traj.diagnostics.push(decision.diagnostics);

        let inputs = &track.steps[k];
        x = integrate_step(model, &x, &u.to_array(), inputs, dt, Mode::Plant, &opts.adaptive)?;
        ledger.step(&u, dt, &model.actuators, econ, inputs.intensity)?;
        if opts.charge_solver && charged {
            ledger.add_solver(solver_seconds, econ, inputs.intensity);
        }
        ledger.lettuce_revenue =
            ctx.revenue_per_gram * (ClimateState::from_array(x).biomass() - snap.initial.biomass());
        progress(i + 1, n_steps);
    }
    let k = snap.step + n_steps;
    let (p, intensity) = row_inputs(k);
    let state = ClimateState::from_array(x);
    traj.timestamps.push(k as f64 * dt);
    traj.states.push(state);
    traj.inputs.push(ControlInput::OFF);
    traj.exogenous.push(p);
    traj.intensity.push(intensity);
    traj.ledgers.push(ledger);
    traj.diagnostics.push(None);
    let next = Snapshot {
        step: k,
        state,
        initial: snap.initial,
        ledger,
    };
    Ok((traj, next))
}

fn clamp_input(u: ControlInput) -> ControlInput {
    ControlInput::from_array(u.to_array().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 100.0) }))
}
