//! Actuators, their sizing, power draw, energy cost, CO2 emissions and the
//! per-actuator cost ledger.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::climate::saturation_moisture;
use crate::error::{Error, Result};
use crate::params::{EconomicParams, ParameterSet};
use crate::solar::GreenhouseGeometry;

/// Number of actuator commands.
pub const NU: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorKind {
    Heater,
    Fan,
    Humidifier,
    Co2gen,
}

impl ActuatorKind {
    /// Input-vector order.
    pub const ALL: [ActuatorKind; NU] = [
        ActuatorKind::Heater,
        ActuatorKind::Fan,
        ActuatorKind::Humidifier,
        ActuatorKind::Co2gen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Label used in the ledger rows.
    pub fn label(self) -> &'static str {
        match self {
            ActuatorKind::Heater => "Heater",
            ActuatorKind::Fan => "Fan",
            ActuatorKind::Humidifier => "Humidifier",
            ActuatorKind::Co2gen => "CO2 Gen.",
        }
    }

    /// Short lowercase name used in run labels and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            ActuatorKind::Heater => "heater",
            ActuatorKind::Fan => "fan",
            ActuatorKind::Humidifier => "humidifier",
            ActuatorKind::Co2gen => "co2",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ActuatorKind::Heater => "W",
            ActuatorKind::Fan => "m3/s",
            ActuatorKind::Humidifier => "l/h",
            ActuatorKind::Co2gen => "kg/h",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "heater" => Some(ActuatorKind::Heater),
            "fan" => Some(ActuatorKind::Fan),
            "humidifier" => Some(ActuatorKind::Humidifier),
            "co2" | "co2gen" => Some(ActuatorKind::Co2gen),
            _ => None,
        }
    }
}

/// Actuator commands in percent of maximum actuation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub heater: f64,
    pub fan: f64,
    pub humidifier: f64,
    pub co2: f64,
}

impl ControlInput {
    pub const OFF: ControlInput = ControlInput {
        heater: 0.0,
        fan: 0.0,
        humidifier: 0.0,
        co2: 0.0,
    };

    pub fn to_array(self) -> [f64; NU] {
        [self.heater, self.fan, self.humidifier, self.co2]
    }

    pub fn from_array(a: [f64; NU]) -> Self {
        Self {
            heater: a[0],
            fan: a[1],
            humidifier: a[2],
            co2: a[3],
        }
    }

    pub fn get(&self, kind: ActuatorKind) -> f64 {
        self.to_array()[kind.index()]
    }

    /// Full actuation of one actuator, everything else off.
    pub fn only(kind: ActuatorKind, percent: f64) -> Self {
        let mut a = [0.0; NU];
        a[kind.index()] = percent;
        Self::from_array(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub kind: ActuatorKind,
    /// Maximum actuation in the actuator's own unit.
    pub a_max: f64,
    /// Power per unit of actuation, W per unit.
    pub p_unit: f64,
    pub eta: f64,
}

impl ActuatorSpec {
    pub fn validate(&self) -> Result<()> {
        let f = |n: &str| format!("actuators.{:?}.{n}", self.kind).to_lowercase();
        if !(self.a_max > 0.0) {
            return Err(Error::validation(f("a_max"), "must be > 0"));
        }
        if !(self.p_unit >= 0.0) {
            return Err(Error::validation(f("p_unit"), "must be >= 0"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::validation(f("eta"), "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// The four actuators in input-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSet(pub [ActuatorSpec; NU]);

impl ActuatorSet {
    pub fn get(&self, kind: ActuatorKind) -> &ActuatorSpec {
        &self.0[kind.index()]
    }

    /// Electric power of every actuator for a command, W.
    pub fn powers(&self, u: &ControlInput) -> [f64; NU] {
        let a = u.to_array();
        let mut p = [0.0; NU];
        for (k, spec) in self.0.iter().enumerate() {
            p[k] = spec.p_unit / spec.eta * (a[k] / 100.0 * spec.a_max);
        }
        p
    }
}

fn check_percent(u: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&u) {
        return Err(Error::Domain(format!("command {u} % outside [0, 100]")));
    }
    Ok(())
}

/// Actuation produced by a command of `u` percent.
pub fn actuation_level(u: f64, spec: &ActuatorSpec) -> Result<f64> {
    check_percent(u)?;
    Ok(u / 100.0 * spec.a_max)
}

/// Electric power drawn at `u` percent, W.
pub fn power(u: f64, spec: &ActuatorSpec) -> Result<f64> {
    Ok(spec.p_unit / spec.eta * actuation_level(u, spec)?)
}

/// Energy cost of holding `u` for `dt` seconds, EUR.
pub fn energy_cost(u: f64, dt: f64, energy_price: f64, spec: &ActuatorSpec) -> Result<f64> {
    Ok(energy_price * dt / (1000.0 * 3600.0) * power(u, spec)?)
}

/// CO2 emitted by the grid electricity used over `dt`, gCO2eq.
pub fn co2_emissions(u: f64, dt: f64, intensity: f64, spec: &ActuatorSpec) -> Result<f64> {
    Ok(intensity * dt / (1000.0 * 3600.0) * power(u, spec)?)
}

/// Social cost of an emitted CO2 mass, EUR.
pub fn social_cost(emissions: f64, co2_price: f64) -> f64 {
    co2_price * emissions
}

/// Maximum actuation of each actuator derived from the greenhouse volume.
pub fn size_actuators(geometry: &GreenhouseGeometry, params: &ParameterSet) -> Result<ActuatorSet> {
    let s = &params.sizing;
    let c = &params.constants;
    let volume = geometry.volume;
    if !(volume > 0.0) {
        return Err(Error::validation("geometry.volume", "must be > 0"));
    }
    let heater = c.rho_air * c.c_air * volume * s.t_lift * s.q_air / 3600.0;
    let fan = volume * s.acph / 3600.0;
    let sat = saturation_moisture(s.humid_ref_temp_c, c.rho_air)?;
    let phi = (s.humid_rh_high - s.humid_rh_low) * sat;
    // m3 of water per hour, reported in l/h
    let humid = volume * phi / c.rho_water * 1000.0;
    let co2 = s.co2_rate * volume;
    let u = &params.actuators;
    let spec = |kind, a_max: f64, unit: &crate::params::ActuatorUnit| ActuatorSpec {
        kind,
        a_max,
        p_unit: unit.p_unit,
        eta: unit.eta,
    };
    Ok(ActuatorSet([
        spec(ActuatorKind::Heater, heater, &u.heater),
        spec(ActuatorKind::Fan, fan, &u.fan),
        spec(ActuatorKind::Humidifier, humid, &u.humidifier),
        spec(ActuatorKind::Co2gen, co2, &u.co2gen),
    ]))
}

/// Ledger row labels, in table order.
pub const LEDGER_ROWS: [&str; 12] = [
    "Lettuce profit",
    "Energy (Fan)",
    "Energy (Heater)",
    "Energy (Humidifier)",
    "Energy (CO2 Gen.)",
    "Energy (Solver)",
    "CO2 (Fan)",
    "CO2 (Heater)",
    "CO2 (Humidifier)",
    "CO2 (CO2 Gen.)",
    "CO2 (Solver)",
    "Total",
];

/// Cumulative costs. Energy and CO2 costs are stored as positive amounts;
/// the table view negates them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    /// EUR, per actuator in input order.
    pub energy_cost: [f64; NU],
    /// gCO2eq, per actuator.
    pub co2_mass: [f64; NU],
    /// EUR, per actuator.
    pub co2_cost: [f64; NU],
    pub solver_energy_cost: f64,
    pub solver_co2_mass: f64,
    pub solver_co2_cost: f64,
    /// Revenue from biomass gained since the start, EUR.
    pub lettuce_revenue: f64,
}

impl CostLedger {
    /// Add one sampling interval of actuator use.
    pub fn step(
        &mut self,
        u: &ControlInput,
        dt: f64,
        actuators: &ActuatorSet,
        econ: &EconomicParams,
        intensity: f64,
    ) -> Result<()> {
        let a = u.to_array();
        for (k, spec) in actuators.0.iter().enumerate() {
            let e = energy_cost(a[k], dt, econ.energy_price, spec)?;
            let m = co2_emissions(a[k], dt, intensity, spec)?;
            self.energy_cost[k] += e;
            self.co2_mass[k] += m;
            self.co2_cost[k] += social_cost(m, econ.co2_price);
        }
        Ok(())
    }

    /// Add optimiser compute time.
    pub fn add_solver(&mut self, seconds: f64, econ: &EconomicParams, intensity: f64) {
        let kwh = econ.solver_power * seconds / (1000.0 * 3600.0);
        let m = intensity * kwh;
        self.solver_energy_cost += econ.energy_price * kwh;
        self.solver_co2_mass += m;
        self.solver_co2_cost += econ.co2_price * m;
    }

    pub fn total_energy_cost(&self) -> f64 {
        self.energy_cost.iter().sum::<f64>() + self.solver_energy_cost
    }

    pub fn total_co2_cost(&self) -> f64 {
        self.co2_cost.iter().sum::<f64>() + self.solver_co2_cost
    }

    /// Total emitted CO2, gCO2eq.
    pub fn total_co2_mass(&self) -> f64 {
        self.co2_mass.iter().sum::<f64>() + self.solver_co2_mass
    }

    /// Revenue minus every cost row.
    pub fn total(&self) -> f64 {
        self.rows()[..11].iter().sum()
    }

    /// Signed row values in [`LEDGER_ROWS`] order, including the total.
    pub fn rows(&self) -> [f64; 12] {
        use ActuatorKind::*;
        let e = |k: ActuatorKind| 0.0 - self.energy_cost[k.index()];
        let c = |k: ActuatorKind| 0.0 - self.co2_cost[k.index()];
        let mut r = [
            self.lettuce_revenue,
            e(Fan),
            e(Heater),
            e(Humidifier),
            e(Co2gen),
            0.0 - self.solver_energy_cost,
            c(Fan),
            c(Heater),
            c(Humidifier),
            c(Co2gen),
            0.0 - self.solver_co2_cost,
            0.0,
        ];
        r[11] = r[..11].iter().sum();
        r
    }

    /// gCO2eq per row; zero for rows that are not emission rows.
    pub fn emission_rows(&self) -> [f64; 12] {
        use ActuatorKind::*;
        let m = |k: ActuatorKind| self.co2_mass[k.index()];
        let mut r = [0.0; 12];
        r[6] = m(Fan);
        r[7] = m(Heater);
        r[8] = m(Humidifier);
        r[9] = m(Co2gen);
        r[10] = self.solver_co2_mass;
        r[11] = self.total_co2_mass();
        r
    }

    /// CSV with one row per ledger label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,value_eur,emissions_gco2eq\n");
        let rows = self.rows();
        let em = self.emission_rows();
        for (i, label) in LEDGER_ROWS.iter().enumerate() {
            let _ = writeln!(s, "{label},{:.6},{:.6}", rows[i], em[i]);
        }
        s
    }

    /// Parse the output of [`CostLedger::to_csv`] into `(label, eur, gco2eq)`.
    pub fn parse_csv(text: &str) -> Result<Vec<(String, f64, f64)>> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.rsplitn(3, ',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("ledger line {}: `{line}`", n + 1)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("ledger line {}: {e}", n + 1)))
            };
            out.push((cols[2].to_string(), num(cols[1])?, num(cols[0])?));
        }
        Ok(out)
    }
}
