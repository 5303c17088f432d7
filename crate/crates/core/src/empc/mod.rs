//! Economic nonlinear model predictive control.
//!
//! Single shooting over a horizon of `N` sampling intervals. The decision
//! vector holds every actuator command of the first `control_steps`
//! intervals scaled to `[0, 1]`; later intervals repeat the last move.

mod gradient;
pub mod lbfgs;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gradient::{finite_difference_gradient, GradientMethod};

use crate::actuators::{co2_emissions, energy_cost, ControlInput, NU};
use crate::climate::{co2_ppm, idx, ClimateModel, ClimateState, NX};
use crate::error::{Error, Result};
use crate::integrate::AdaptiveOptions;
use crate::simulator::{integrate_step, Decision, ExogenousTrack, LedgerContext, Mode, Policy, StepInputs};
use lbfgs::{minimize, LbfgsOptions};

/// Soft state bounds enforced through a quadratic penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoftBounds {
    /// Lower temperature bound of air and vegetation, K.
    pub t_min: f64,
    /// Upper temperature bound of air and vegetation, K.
    pub t_max: f64,
    /// Upper CO2 bound, ppm.
    pub co2_max_ppm: f64,
    /// EUR K-2 per sampling interval.
    pub temperature_weight: f64,
    /// EUR ppm-2 per sampling interval.
    pub co2_weight: f64,
}

impl Default for SoftBounds {
    fn default() -> Self {
        Self {
            t_min: 273.15,
            t_max: 313.15,
            co2_max_ppm: 1600.0,
            temperature_weight: 1.0,
            co2_weight: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NempcConfig {
    /// Prediction horizon in sampling intervals.
    pub horizon: usize,
    /// Intervals with their own move; never more than `horizon`.
    pub control_steps: usize,
    /// Sampling interval, s.
    pub sample_time: f64,
    /// RK4 substeps per interval in the prediction model.
    pub substeps: usize,
    pub u_min: [f64; NU],
    pub u_max: [f64; NU],
    /// Price emitted CO2 in the objective.
    pub include_social_cost: bool,
    pub bounds: SoftBounds,
    pub gradient: GradientMethod,
    pub max_iterations: usize,
    /// Projected gradient tolerance relative to the first-iterate gradient.
    pub gradient_tolerance: f64,
    pub objective_tolerance: f64,
    pub memory: usize,
}

impl Default for NempcConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            control_steps: 30,
            sample_time: 120.0,
            substeps: 12,
            u_min: [0.0; NU],
            u_max: [100.0; NU],
            include_social_cost: false,
            bounds: SoftBounds::default(),
            gradient: GradientMethod::Adjoint,
            max_iterations: 30,
            gradient_tolerance: 1e-6,
            objective_tolerance: 1e-9,
            memory: 8,
        }
    }
}

impl NempcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::validation("controller.horizon", "must be at least 1"));
        }
        if self.control_steps == 0 || self.control_steps > self.horizon {
            return Err(Error::validation("controller.control_steps", "must be in 1..=horizon"));
        }
        if !(self.sample_time > 0.0) || self.substeps == 0 {
            return Err(Error::validation(
                "controller.sample_time",
                "must be > 0 with substeps >= 1",
            ));
        }
        for j in 0..NU {
            if !(0.0 <= self.u_min[j] && self.u_min[j] <= self.u_max[j] && self.u_max[j] <= 100.0) {
                return Err(Error::validation("controller.u_max", "need 0 <= u_min <= u_max <= 100"));
            }
        }
        let b = &self.bounds;
        if !(b.t_min < b.t_max) || !(b.co2_max_ppm > 0.0) || b.temperature_weight < 0.0 || b.co2_weight < 0.0 {
            return Err(Error::validation("controller.bounds", "inconsistent soft bounds"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("controller.max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.control_steps * NU
    }
}

/// Cost of actuator use per percent of command in one interval, EUR.
pub fn cost_coefficients(model: &ClimateModel, dt: f64, intensity: f64, social: bool) -> Result<[f64; NU]> {
    let e = &model.params.economics;
    let mut c = [0.0; NU];
    for (j, spec) in model.actuators.0.iter().enumerate() {
        c[j] = energy_cost(1.0, dt, e.energy_price, spec)?;
        if social {
            c[j] += e.co2_price * co2_emissions(1.0, dt, intensity, spec)?;
        }
    }
    Ok(c)
}

/// Quadratic penalty of one predicted state and its state gradient.
pub fn penalty(model: &ClimateModel, b: &SoftBounds, x: &[f64; NX], grad: Option<&mut [f64; NX]>) -> f64 {
    let mut p = 0.0;
    let mut g = [0.0; NX];
    for i in [idx::T_AIR, idx::T_VEG] {
        let hi = x[i] - b.t_max;
        let lo = b.t_min - x[i];
        if hi > 0.0 {
            p += b.temperature_weight * hi * hi;
            g[i] += 2.0 * b.temperature_weight * hi;
        }
        if lo > 0.0 {
            p += b.temperature_weight * lo * lo;
            g[i] -= 2.0 * b.temperature_weight * lo;
        }
    }
    let k = &model.params.constants;
    let ppm = co2_ppm(x[idx::C_CO2], x[idx::T_AIR], k);
    let over = ppm - b.co2_max_ppm;
    if over > 0.0 {
        p += b.co2_weight * over * over;
        // ppm = c * R T / (M P) * 1e6
        let dc = ppm / x[idx::C_CO2].max(f64::MIN_POSITIVE);
        let dt = ppm / x[idx::T_AIR];
        g[idx::C_CO2] += 2.0 * b.co2_weight * over * dc;
        g[idx::T_AIR] += 2.0 * b.co2_weight * over * dt;
    }
    if let Some(out) = grad {
        *out = g;
    }
    p
}

/// Lettuce revenue of the biomass gained since `x0`, EUR.
pub fn revenue(x: &ClimateState, x0: &ClimateState, revenue_per_gram: f64) -> f64 {
    revenue_per_gram * (x.biomass() - x0.biomass())
}

/// One stage of the economic objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCost {
    pub revenue: f64,
    pub actuation: f64,
    pub total: f64,
}

/// Stage cost of applying `u` over one interval. The revenue is that of
/// the state reached at the end of the interval, counted from the
/// horizon start `x0`.
pub fn stage_cost(
    u: &ControlInput,
    coefficients: &[f64; NU],
    x_next: &ClimateState,
    x0: &ClimateState,
    revenue_per_gram: f64,
) -> StageCost {
    let a = u.to_array();
    let actuation: f64 = (0..NU).map(|j| coefficients[j] * a[j]).sum();
    let r = revenue(x_next, x0, revenue_per_gram);
    StageCost {
        revenue: r,
        actuation,
        total: actuation - r,
    }
}

/// The finite-horizon problem posed at one sampling instant.
pub struct Problem<'a> {
    pub model: &'a ClimateModel,
    pub config: &'a NempcConfig,
    pub forecast: &'a [StepInputs],
    pub x0: [f64; NX],
    coefficients: Vec<[f64; NU]>,
    revenue_per_gram: f64,
}

/// Objective split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveParts {
    pub actuator_cost: f64,
    pub revenue: f64,
    pub penalty: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.actuator_cost - self.revenue + self.penalty
    }
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a ClimateModel,
        config: &'a NempcConfig,
        forecast: &'a [StepInputs],
        x0: [f64; NX],
    ) -> Result<Self> {
        config.validate()?;
        if forecast.len() < config.horizon {
            return Err(Error::DataGap(format!(
                "forecast holds {} intervals, horizon needs {}",
                forecast.len(),
                config.horizon
            )));
        }
        let coefficients = forecast[..config.horizon]
            .iter()
            .map(|s| cost_coefficients(model, config.sample_time, s.intensity, config.include_social_cost))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            config,
            forecast,
            x0,
            coefficients,
            revenue_per_gram: LedgerContext::from_model(model).revenue_per_gram,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.config.n_vars()
    }

    /// Command of interval `k` from the scaled decision vector.
    pub fn input(&self, z: &[f64], k: usize) -> [f64; NU] {
        let m = k.min(self.config.control_steps - 1);
        let mut u = [0.0; NU];
        for j in 0..NU {
            u[j] = unscale(z[m * NU + j], self.config, j);
        }
        u
    }

    pub fn step(&self, x: &[f64; NX], u: &[f64; NU], k: usize) -> Result<[f64; NX]> {
        integrate_step(
            self.model,
            x,
            u,
            &self.forecast[k],
            self.config.sample_time,
            Mode::ControlModel,
            &AdaptiveOptions::default(),
        )
    }

    /// Predicted states `x_0 ..= x_N`.
    pub fn rollout(&self, z: &[f64]) -> Result<Vec<[f64; NX]>> {
        let mut xs = Vec::with_capacity(self.config.horizon + 1);
        xs.push(self.x0);
        for k in 0..self.config.horizon {
            let x = self.step(&xs[k], &self.input(z, k), k)?;
            xs.push(x);
        }
        Ok(xs)
    }

    pub fn parts_of(&self, z: &[f64], xs: &[[f64; NX]]) -> ObjectiveParts {
        let mut parts = ObjectiveParts::default();
        let x0 = ClimateState::from_array(xs[0]);
        for k in 0..self.config.horizon {
            let u = ControlInput::from_array(self.input(z, k));
            let s = stage_cost(
                &u,
                &self.coefficients[k],
                &ClimateState::from_array(xs[k + 1]),
                &x0,
                self.revenue_per_gram,
            );
            parts.actuator_cost += s.actuation;
            parts.revenue += s.revenue;
            parts.penalty += penalty(self.model, &self.config.bounds, &xs[k + 1], None);
        }
        parts
    }

    /// Stage costs along the predicted trajectory.
    pub fn stage_costs(&self, z: &[f64]) -> Result<Vec<StageCost>> {
        let xs = self.rollout(z)?;
        let x0 = ClimateState::from_array(xs[0]);
        Ok((0..self.config.horizon)
            .map(|k| {
                let u = ControlInput::from_array(self.input(z, k));
                stage_cost(
                    &u,
                    &self.coefficients[k],
                    &ClimateState::from_array(xs[k + 1]),
                    &x0,
                    self.revenue_per_gram,
                )
            })
            .collect())
    }

    pub fn objective_parts(&self, z: &[f64]) -> Result<ObjectiveParts> {
        let xs = self.rollout(z)?;
        Ok(self.parts_of(z, &xs))
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        Ok(self.objective_parts(z)?.total())
    }

    /// Objective and gradient with respect to the scaled decision vector.
    pub fn objective_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        match self.config.gradient {
            GradientMethod::Adjoint => gradient::adjoint(self, z, grad),
            GradientMethod::FiniteDifference => {
                let f = self.objective(z)?;
                finite_difference_gradient(self, z, grad)?;
                Ok(f)
            }
        }
    }

    fn revenue_gradient(&self) -> [f64; NX] {
        let mut g = [0.0; NX];
        g[idx::SDW] = self.revenue_per_gram;
        g[idx::NSDW] = self.revenue_per_gram;
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_evaluations: usize,
    #[serde(with = "crate::report::nullable")]
    pub objective: f64,
    #[serde(with = "crate::report::nullable")]
    pub initial_objective: f64,
    #[serde(with = "crate::report::nullable")]
    pub projected_gradient: f64,
    pub converged: bool,
    /// The solver failed and the previous plan was applied instead.
    pub degraded: bool,
    pub wall_seconds: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Commands for every horizon interval.
    pub plan: Vec<ControlInput>,
    pub z: Vec<f64>,
    pub parts: ObjectiveParts,
    pub diagnostics: SolveDiagnostics,
}

/// Percent command of a scaled decision, clamped so rounding never
/// leaves the input box.
fn unscale(z: f64, c: &NempcConfig, j: usize) -> f64 {
    (100.0 * z).clamp(c.u_min[j], c.u_max[j])
}

/// Solves one horizon problem from the scaled initial guess `z0`.
pub fn solve(problem: &Problem<'_>, z0: &[f64]) -> Result<Solution> {
    let clock = Instant::now();
    let c = problem.config;
    let n = problem.n_vars();
    if z0.len() != n {
        return Err(Error::validation(
            "warm_start",
            format!("expected {n} values, got {}", z0.len()),
        ));
    }
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for m in 0..c.control_steps {
        for j in 0..NU {
            lo[m * NU + j] = c.u_min[j] / 100.0;
            hi[m * NU + j] = c.u_max[j] / 100.0;
        }
    }
    // tolerance scaled by one interval of full actuation
    let scale = problem
        .coefficients
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0, |a: f64, v| a.max(v.abs()))
        * 100.0;
    let opts = LbfgsOptions {
        memory: c.memory,
        max_iterations: c.max_iterations,
        gradient_tolerance: c.gradient_tolerance * scale.max(1e-12),
        objective_tolerance: c.objective_tolerance,
        ..LbfgsOptions::default()
    };
    let mut out = minimize(
        |z, g| problem.objective_and_gradient(z, g),
        |z| problem.objective(z),
        z0,
        &lo,
        &hi,
        &opts,
    )?;
    // never return worse than holding every actuator at its lower bound
    out.evaluations += 1;
    if let Ok(f_low) = problem.objective(&lo) {
        if f_low < out.f {
            out.x = lo.clone();
            out.f = f_low;
        }
    }
    let parts = problem.objective_parts(&out.x)?;
    let plan = (0..c.horizon)
        .map(|k| ControlInput::from_array(problem.input(&out.x, k)))
        .collect();
    Ok(Solution {
        plan,
        parts,
        diagnostics: SolveDiagnostics {
            iterations: out.iterations,
            evaluations: out.evaluations,
            gradient_evaluations: out.gradient_evaluations,
            objective: out.f,
            initial_objective: out.f_initial,
            projected_gradient: out.projected_gradient,
            converged: out.converged,
            degraded: false,
            wall_seconds: clock.elapsed().as_secs_f64(),
            message: out.message.into(),
        },
        z: out.x,
    })
}

/// Hook that edits the forecast handed to the controller, for example to
/// study forecast errors. Arguments: absolute step index and its inputs.
pub type ForecastHook = Box<dyn Fn(usize, &mut StepInputs) + Send + Sync>;

/// Receding-horizon controller with shifted warm starts.
pub struct NempcController {
    pub config: NempcConfig,
    model: ClimateModel,
    warm: Vec<f64>,
    forecast_hook: Option<ForecastHook>,
    pub last_solution: Option<Solution>,
}

impl NempcController {
    pub fn new(model: ClimateModel, config: NempcConfig) -> Result<Self> {
        config.validate()?;
        let warm = vec![0.0; config.n_vars()];
        Ok(Self {
            config,
            model,
            warm,
            forecast_hook: None,
            last_solution: None,
        })
    }

    pub fn with_forecast_hook(mut self, hook: ForecastHook) -> Self {
        self.forecast_hook = Some(hook);
        self
    }

    /// Current initial guess, scaled to `[0, 1]`.
    pub fn warm_start(&self) -> &[f64] {
        &self.warm
    }

    fn shift(&mut self, z: &[f64]) {
        let n = self.config.n_vars();
        self.warm.copy_from_slice(z);
        if self.config.control_steps > 1 {
            self.warm.copy_within(NU..n, 0);
        }
    }

    /// Solves at state `x` with the forecast starting at `step`.
    pub fn solve_at(&mut self, step: usize, x: &ClimateState, track: &ExogenousTrack) -> Result<Solution> {
        let window = track.window(step, self.config.horizon)?;
        let owned: Vec<StepInputs>;
        let forecast = match &self.forecast_hook {
            Some(h) => {
                owned = window
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let mut s = s.clone();
                        h(step + i, &mut s);
                        s
                    })
                    .collect();
                &owned[..]
            }
            None => window,
        };
        let problem = Problem::new(&self.model, &self.config, forecast, x.to_array())?;
        solve(&problem, &self.warm)
    }
}

impl Policy for NempcController {
    fn name(&self) -> String {
        if self.config.include_social_cost {
            "nempc-social".into()
        } else {
            "nempc".into()
        }
    }

    fn decide(&mut self, step: usize, x: &ClimateState, track: &ExogenousTrack) -> Result<Decision> {
        let clock = Instant::now();
        match self.solve_at(step, x, track) {
            Ok(sol) => {
                let u = sol.plan[0];
                self.shift(&sol.z.clone());
                let d = sol.diagnostics.clone();
                self.last_solution = Some(sol);
                Ok(Decision {
                    u,
                    solver_seconds: clock.elapsed().as_secs_f64(),
                    diagnostics: Some(d),
                })
            }
            Err(e @ Error::DataGap(_)) => Err(e),
            Err(e) => {
                // fall back to the shifted previous plan
                let u = ControlInput::from_array(std::array::from_fn(|j| unscale(self.warm[j], &self.config, j)));
                let z = self.warm.clone();
                self.shift(&z);
                Ok(Decision {
                    u,
                    solver_seconds: clock.elapsed().as_secs_f64(),
                    diagnostics: Some(SolveDiagnostics {
                        iterations: 0,
                        evaluations: 0,
                        gradient_evaluations: 0,
                        objective: f64::NAN,
                        initial_objective: f64::NAN,
                        projected_gradient: f64::NAN,
                        converged: false,
                        degraded: true,
                        wall_seconds: clock.elapsed().as_secs_f64(),
                        message: e.to_string(),
                    }),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests;
