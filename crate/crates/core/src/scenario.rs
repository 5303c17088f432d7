//! Scenario files: location, greenhouse, timing, actuators, economics,
//! controller and data sources in one TOML document.

use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Table;

use crate::actuators::{size_actuators, ActuatorKind, ActuatorSet, NU};
use crate::climate::{ClimateModel, ClimateState};
use crate::empc::{GradientMethod, NempcConfig, NempcController, SoftBounds};
use crate::error::{Error, Result};
use crate::external_data::{
    read_carbon_csv, read_weather_csv, restrict_carbon, restrict_weather, CarbonIntensitySample, DataSource, Site,
    WeatherSample, Window,
};
use crate::params::ParameterSet;
use crate::simulator::{ExogenousTrack, NoControl, Policy, StepTest, DEFAULT_SUBSTEPS};
use crate::solar::GreenhouseGeometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub location: LocationConfig,
    #[serde(default)]
    pub greenhouse: GeometryConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub actuators: ActuatorOverrides,
    #[serde(default)]
    pub economics: EconomicOverrides,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Plain-valued overrides of the default parameter file, keyed like it.
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub parameters: Table,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationConfig {
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
    /// Carbon-intensity zone code.
    #[serde(default = "default_zone")]
    pub carbon_zone: String,
}

fn default_albedo() -> f64 {
    0.2
}

fn default_zone() -> String {
    "SK".into()
}

/// A symmetric gable greenhouse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub length: f64,
    pub width: f64,
    pub eave_height: f64,
    pub ridge_height: f64,
    /// Ridge azimuth, degrees clockwise from north.
    pub orientation: f64,
    pub cultivated_fraction: f64,
    pub transmissivity: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            length: 20.0,
            width: 10.0,
            eave_height: 3.0,
            ridge_height: 4.5,
            orientation: 0.0,
            cultivated_fraction: 0.75,
            transmissivity: 0.7,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<GreenhouseGeometry> {
        GreenhouseGeometry::gable(
            self.length,
            self.width,
            self.eave_height,
            self.ridge_height,
            self.orientation,
            self.cultivated_fraction,
            self.transmissivity,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub start: DateTime<Utc>,
    /// Simulated time, s.
    pub duration: f64,
    /// Sampling interval, s.
    pub sample_time: f64,
    /// Fixed RK4 substeps per interval.
    pub substeps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2024, 10, 11, 0, 0, 0).unwrap(),
            duration: 86_400.0,
            sample_time: 120.0,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

/// Replaces parts of a sized actuator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_unit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Remove the actuator from the controller's reach.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heater: Option<ActuatorOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fan: Option<ActuatorOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humidifier: Option<ActuatorOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co2gen: Option<ActuatorOverride>,
}

impl ActuatorOverrides {
    pub fn get(&self, kind: ActuatorKind) -> Option<&ActuatorOverride> {
        match kind {
            ActuatorKind::Heater => self.heater.as_ref(),
            ActuatorKind::Fan => self.fan.as_ref(),
            ActuatorKind::Humidifier => self.humidifier.as_ref(),
            ActuatorKind::Co2gen => self.co2gen.as_ref(),
        }
    }

    pub fn apply(&self, mut set: ActuatorSet) -> Result<ActuatorSet> {
        for kind in ActuatorKind::ALL {
            if let Some(o) = self.get(kind) {
                let s = &mut set.0[kind.index()];
                if let Some(v) = o.a_max {
                    s.a_max = v;
                }
                if let Some(v) = o.p_unit {
                    s.p_unit = v;
                }
                if let Some(v) = o.eta {
                    s.eta = v;
                }
                s.validate()?;
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co2_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lettuce_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_dw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_power: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    None,
    #[default]
    Nempc,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub objective_tolerance: f64,
    pub memory: usize,
    pub gradient: GradientMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = NempcConfig::default();
        Self {
            max_iterations: d.max_iterations,
            gradient_tolerance: d.gradient_tolerance,
            objective_tolerance: d.objective_tolerance,
            memory: d.memory,
            gradient: d.gradient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub policy: PolicyKind,
    /// Actuator switched fully on by the step policy; none means no step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_actuator: Option<ActuatorKind>,
    /// Step time of the step policy, s.
    pub step_time: f64,
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Span with free moves, s.
    pub control_horizon: f64,
    pub include_social_cost: bool,
    pub u_min: [f64; NU],
    pub u_max: [f64; NU],
    pub bounds: SoftBounds,
    pub solver: SolverConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Nempc,
            step_actuator: None,
            step_time: 0.0,
            horizon: 3600.0,
            control_horizon: 3600.0,
            include_social_cost: false,
            u_min: [0.0; NU],
            u_max: [100.0; NU],
            bounds: SoftBounds::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Fixture files used instead of the data source, relative to the
/// scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weather: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon: Option<PathBuf>,
}

fn multiple_of(a: f64, b: f64) -> bool {
    let r = a / b;
    (r - r.round()).abs() < 1e-9
}

impl ScenarioConfig {
    /// A scenario with defaults everywhere but the location.
    pub fn new(latitude: f64, longitude: f64) -> Self {
        Self {
            name: default_name(),
            location: LocationConfig {
                latitude,
                longitude,
                albedo: default_albedo(),
                carbon_zone: default_zone(),
            },
            greenhouse: GeometryConfig::default(),
            time: TimeConfig::default(),
            actuators: ActuatorOverrides::default(),
            economics: EconomicOverrides::default(),
            control: ControlConfig::default(),
            data: DataConfig::default(),
            parameters: Table::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Stable content hash of the scenario.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.location;
        if !(-90.0..=90.0).contains(&l.latitude) {
            return Err(Error::validation("latitude", "must lie in [-90, 90]"));
        }
        if !(-180.0..=180.0).contains(&l.longitude) {
            return Err(Error::validation("longitude", "must lie in [-180, 180]"));
        }
        if !(0.0..=1.0).contains(&l.albedo) {
            return Err(Error::validation("albedo", "must lie in [0, 1]"));
        }
        let t = &self.time;
        if !(t.sample_time > 0.0) || !t.sample_time.is_finite() {
            return Err(Error::validation("sample_time", "must be > 0"));
        }
        if !(t.duration >= 0.0) || !multiple_of(t.duration, t.sample_time) {
            return Err(Error::validation(
                "duration",
                "must be a nonnegative multiple of sample_time",
            ));
        }
        if t.substeps == 0 {
            return Err(Error::validation("substeps", "must be at least 1"));
        }
        let c = &self.control;
        if !(c.horizon >= t.sample_time) || !multiple_of(c.horizon, t.sample_time) {
            return Err(Error::validation(
                "horizon",
                "must be a positive multiple of sample_time",
            ));
        }
        if !(c.control_horizon >= t.sample_time)
            || !multiple_of(c.control_horizon, t.sample_time)
            || c.control_horizon > c.horizon
        {
            return Err(Error::validation(
                "control_horizon",
                "must be a positive multiple of sample_time no longer than horizon",
            ));
        }
        if c.policy == PolicyKind::Step && !(c.step_time >= 0.0) {
            return Err(Error::validation("step_time", "must be >= 0"));
        }
        self.greenhouse.build()?;
        self.nempc_config().validate()?;
        let p = self.parameter_set()?;
        self.actuators.apply(size_actuators(&self.greenhouse.build()?, &p)?)?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.time.duration / self.time.sample_time).round() as usize
    }

    pub fn horizon_steps(&self) -> usize {
        (self.control.horizon / self.time.sample_time).round() as usize
    }

    /// Controller settings; disabled actuators get a zero upper bound.
    pub fn nempc_config(&self) -> NempcConfig {
        let c = &self.control;
        let mut u_max = c.u_max;
        for kind in ActuatorKind::ALL {
            if self.actuators.get(kind).is_some_and(|o| o.disabled) {
                u_max[kind.index()] = c.u_min[kind.index()];
            }
        }
        NempcConfig {
            horizon: self.horizon_steps(),
            control_steps: (c.control_horizon / self.time.sample_time).round() as usize,
            sample_time: self.time.sample_time,
            substeps: self.time.substeps,
            u_min: c.u_min,
            u_max,
            include_social_cost: c.include_social_cost,
            bounds: c.bounds,
            gradient: c.solver.gradient,
            max_iterations: c.solver.max_iterations,
            gradient_tolerance: c.solver.gradient_tolerance,
            objective_tolerance: c.solver.objective_tolerance,
            memory: c.solver.memory,
        }
    }

    /// Default parameters with the scenario's overrides applied.
    pub fn parameter_set(&self) -> Result<ParameterSet> {
        let mut p = if self.parameters.is_empty() {
            crate::params::default_parameters()
        } else {
            ParameterSet::with_overrides(&self.parameters)?
        };
        let e = &self.economics;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.economics.energy_price, e.energy_price);
        set(&mut p.economics.co2_price, e.co2_price);
        set(&mut p.economics.lettuce_price, e.lettuce_price);
        set(&mut p.economics.rho_dw, e.rho_dw);
        set(&mut p.economics.solver_power, e.solver_power);
        p.validate()?;
        Ok(p)
    }

    pub fn model(&self) -> Result<ClimateModel> {
        let params = self.parameter_set()?;
        let geometry = self.greenhouse.build()?;
        let actuators = self.actuators.apply(size_actuators(&geometry, &params)?)?;
        ClimateModel::with_actuators(params, geometry, actuators)
    }

    pub fn site(&self) -> Site {
        Site {
            latitude: self.location.latitude,
            longitude: self.location.longitude,
            albedo: self.location.albedo,
        }
    }

    /// Hours of exogenous data the run needs, including the last horizon.
    pub fn data_window(&self) -> Window {
        let span = (self.n_steps() + self.horizon_steps()) as f64 * self.time.sample_time;
        Window::covering(self.time.start, span)
    }

    /// Weather and carbon samples over [`Self::data_window`], from the
    /// configured fixture files or else from `source`.
    pub fn load_data(
        &self,
        base: &Path,
        source: &DataSource,
    ) -> Result<(Vec<WeatherSample>, Vec<CarbonIntensitySample>)> {
        let window = self.data_window();
        let weather = match &self.data.weather {
            Some(p) => {
                let path = base.join(p);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                restrict_weather(&read_weather_csv(&text)?.1, &window)?
            }
            None => source.fetch_weather(self.location.latitude, self.location.longitude, &window)?,
        };
        let carbon = match &self.data.carbon {
            Some(p) => {
                let path = base.join(p);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                restrict_carbon(&read_carbon_csv(&text)?.1, &window)?
            }
            None => source.fetch_carbon(&self.location.carbon_zone, &window)?,
        };
        Ok((weather, carbon))
    }

    /// Everything a run needs, resolved.
    pub fn prepare(&self, base: &Path, source: &DataSource) -> Result<PreparedScenario> {
        self.validate()?;
        let (weather, carbon) = self.load_data(base, source)?;
        self.prepare_with(weather, carbon)
    }

    pub fn prepare_with(
        &self,
        weather: Vec<WeatherSample>,
        carbon: Vec<CarbonIntensitySample>,
    ) -> Result<PreparedScenario> {
        let model = self.model()?;
        let n_steps = self.n_steps();
        let track = ExogenousTrack::build(
            &weather,
            &carbon,
            &model.geometry,
            &self.site(),
            self.time.start,
            self.time.sample_time,
            self.time.substeps,
            n_steps + self.horizon_steps(),
        )?;
        let x0 = model.initial_state(&track.steps[0].substeps[0]);
        Ok(PreparedScenario {
            config: self.clone(),
            model,
            track,
            x0,
            n_steps,
            weather,
            carbon,
        })
    }
}

/// A validated scenario with its model and exogenous track.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub model: ClimateModel,
    pub track: ExogenousTrack,
    pub x0: ClimateState,
    pub n_steps: usize,
    pub weather: Vec<WeatherSample>,
    pub carbon: Vec<CarbonIntensitySample>,
}

impl PreparedScenario {
    /// The configured policy.
    pub fn policy(&self) -> Result<Box<dyn Policy + Send>> {
        let c = &self.config.control;
        Ok(match c.policy {
            PolicyKind::None => Box::new(NoControl),
            PolicyKind::Step => Box::new(StepTest {
                actuator: c.step_actuator,
                at_step: (c.step_time / self.config.time.sample_time).ceil() as usize,
            }),
            PolicyKind::Nempc => Box::new(NempcController::new(self.model.clone(), self.config.nempc_config())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[location]
latitude = 48.1486
longitude = 17.1077

[greenhouse]
length = 20.0
";

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.time.sample_time, 120.0);
        assert_eq!(c.control.horizon, 3600.0);
        assert_eq!(c.horizon_steps(), 30);
        assert_eq!(c.nempc_config().control_steps, 30);
        assert_eq!(c.n_steps(), 720);
    }

    #[test]
    fn latitude_out_of_range() {
        let text = MINIMAL.replace("48.1486", "95.0");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "latitude"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duration_must_divide() {
        let text = format!("{MINIMAL}\n[time]\nduration = 1000.0\n");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "duration"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("length = 20.0", "lenght = 20.0");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::Parse(_))));
        let text = format!("{MINIMAL}\n[parameters.economics]\nenergy_prise = 0.3\n");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        c.economics.co2_price = Some(2e-3);
        c.actuators.fan = Some(ActuatorOverride {
            a_max: Some(0.5),
            disabled: true,
            ..Default::default()
        });
        c.data.weather = Some("fixtures/x.csv".into());
        c.control.step_actuator = Some(ActuatorKind::Co2gen);
        let mut t = Table::new();
        t.insert(
            "crop".into(),
            toml::Value::Table(
                [("yield_ch2o".to_string(), toml::Value::Float(0.7))]
                    .into_iter()
                    .collect(),
            ),
        );
        c.parameters = t;
        let text = c.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.time.duration = 7200.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_reach_the_model() {
        let mut c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        c.economics.energy_price = Some(0.5);
        c.actuators.heater = Some(ActuatorOverride {
            a_max: Some(1234.0),
            ..Default::default()
        });
        let m = c.model().unwrap();
        assert_eq!(m.params.economics.energy_price, 0.5);
        assert_eq!(m.actuators.get(ActuatorKind::Heater).a_max, 1234.0);
        c.actuators.heater = Some(ActuatorOverride {
            eta: Some(0.0),
            ..Default::default()
        });
        assert!(c.validate().is_err());
    }

    #[test]
    fn disabled_actuator_is_pinned() {
        let mut c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        c.actuators.co2gen = Some(ActuatorOverride {
            disabled: true,
            ..Default::default()
        });
        assert_eq!(c.nempc_config().u_max[ActuatorKind::Co2gen.index()], 0.0);
    }

    #[test]
    fn data_window_covers_the_last_horizon() {
        let mut c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        c.time.duration = 48.0 * 3600.0;
        assert_eq!(c.data_window().hours().len(), 50);
    }
}
