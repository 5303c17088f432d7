//! Parameter registry.
//!
//! All physical constants, material properties, crop coefficients, actuator
//! unit data and prices live in one annotated data file
//! (`data/defaults.toml`). Each entry there carries a value, a unit and a
//! provenance string; [`ParameterSet`] is the typed view of the same tree.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::crop::CropParams;
use crate::error::{Error, Result};

/// Annotated defaults, compiled into the library.
pub const DEFAULTS_TOML: &str = include_str!("../data/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Stefan-Boltzmann constant, W m-2 K-4.
    pub sigma: f64,
    /// Universal gas constant, J mol-1 K-1.
    pub r_gas: f64,
    /// Molar mass of CO2, kg mol-1.
    pub m_co2: f64,
    /// Atmospheric pressure, Pa.
    pub p_atm: f64,
    /// Air density, kg m-3.
    pub rho_air: f64,
    /// Air specific heat, J kg-1 K-1.
    pub c_air: f64,
    /// Air thermal conductivity, W m-1 K-1.
    pub lambda_air: f64,
    /// Water density, kg m-3.
    pub rho_water: f64,
    pub gravity: f64,
    /// Kinematic viscosity of air, m2 s-1.
    pub nu_air: f64,
}

/// The seven thermal compartments, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compartment {
    Cover,
    InternalAir,
    Vegetation,
    Medium,
    Tray,
    Floor,
    Soil,
}

impl Compartment {
    pub const ALL: [Compartment; 7] = [
        Compartment::Cover,
        Compartment::InternalAir,
        Compartment::Vegetation,
        Compartment::Medium,
        Compartment::Tray,
        Compartment::Floor,
        Compartment::Soil,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Compartment::Cover => "cover",
            Compartment::InternalAir => "internal-air",
            Compartment::Vegetation => "vegetation",
            Compartment::Medium => "medium",
            Compartment::Tray => "tray",
            Compartment::Floor => "floor",
            Compartment::Soil => "soil",
        }
    }
}

/// Material data of a solid compartment, per unit area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialProps {
    /// J m-2 K-1.
    pub heat_capacity: f64,
    /// Characteristic length for convection, m.
    pub char_length: f64,
    /// Conducting layer thickness, m.
    pub layer_thickness: f64,
    /// W m-1 K-1.
    pub conductivity: f64,
    pub emissivity: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentTable {
    pub cover: MaterialProps,
    pub vegetation: MaterialProps,
    pub medium: MaterialProps,
    pub tray: MaterialProps,
    pub floor: MaterialProps,
    pub soil: MaterialProps,
}

/// A compartment resolved against a concrete greenhouse geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompartmentProps {
    pub name: Compartment,
    /// J K-1 per m2 of `area`.
    pub heat_capacity: f64,
    pub area: f64,
    pub char_length: f64,
    pub layer_thickness: f64,
    pub conductivity: f64,
    pub emissivity: f64,
    pub reflectivity: f64,
}

impl CompartmentProps {
    pub fn from_material(name: Compartment, m: &MaterialProps, area: f64) -> Self {
        Self {
            name,
            heat_capacity: m.heat_capacity,
            area,
            char_length: m.char_length,
            layer_thickness: m.layer_thickness,
            conductivity: m.conductivity,
            emissivity: m.emissivity,
            reflectivity: m.reflectivity,
        }
    }

    /// Total heat capacity, J K-1.
    pub fn capacity(&self) -> f64 {
        self.heat_capacity * self.area
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("compartments.{}.{f}", self.name.name());
        for (name, v) in [
            ("area", self.area),
            ("char_length", self.char_length),
            ("layer_thickness", self.layer_thickness),
            ("heat_capacity", self.heat_capacity),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(field(name), "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.emissivity) {
            return Err(Error::validation(field("emissivity"), "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::validation(field("reflectivity"), "must lie in [0, 1]"));
        }
        if self.emissivity + self.reflectivity > 1.0 + 1e-12 {
            return Err(Error::validation(
                field("emissivity"),
                "emissivity + reflectivity must not exceed 1",
            ));
        }
        Ok(())
    }
}

/// Closure parameters of the climate model that the governing equations
/// leave open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateParams {
    /// Sky temperature relative to external air, K.
    pub sky_temp_offset: f64,
    pub deep_soil_temp_c: f64,
    /// Infiltration, air changes per hour.
    pub leakage_ach: f64,
    /// Baseline internal air speed, m s-1.
    pub internal_air_speed: f64,
    pub cover_solar_absorptance: f64,
    pub medium_exposed_fraction: f64,
    /// s-1.
    pub condensation_rate: f64,
    /// m s-1.
    pub transpiration_conductance: f64,
    pub view_vegetation_cover: f64,
    pub view_tray_cover: f64,
    pub view_medium_cover: f64,
    pub view_floor_cover: f64,
    pub view_tray_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarParams {
    pub albedo: f64,
    /// Share of transmitted shortwave counted as PAR.
    pub par_fraction: f64,
}

/// Power per unit of actuation and conversion efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorUnit {
    pub p_unit: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorUnits {
    pub heater: ActuatorUnit,
    pub fan: ActuatorUnit,
    pub humidifier: ActuatorUnit,
    pub co2gen: ActuatorUnit,
}

/// Inputs of the actuator sizing rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizingParams {
    /// Heater design lift T_sp - T_ambient, K.
    pub t_lift: f64,
    /// Fan air changes per hour.
    pub acph: f64,
    /// Heater fresh-air exchange rate, h-1.
    pub q_air: f64,
    pub humid_rh_high: f64,
    pub humid_rh_low: f64,
    pub humid_ref_temp_c: f64,
    /// Desired CO2 density change rate, kg m-3 h-1.
    pub co2_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicParams {
    /// EUR kWh-1.
    pub energy_price: f64,
    /// Social cost of CO2, EUR gCO2eq-1.
    pub co2_price: f64,
    /// EUR per gram fresh weight.
    pub lettuce_price: f64,
    /// Dry-to-wet mass ratio.
    pub rho_dw: f64,
    /// Power drawn while the optimiser runs, W.
    pub solver_power: f64,
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("energy_price", self.energy_price),
            ("co2_price", self.co2_price),
            ("lettuce_price", self.lettuce_price),
            ("solver_power", self.solver_power),
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation(format!("economics.{name}"), "must be >= 0"));
            }
        }
        if !(self.rho_dw > 0.0 && self.rho_dw < 1.0) {
            return Err(Error::validation("economics.rho_dw", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialParams {
    pub sdw: f64,
    pub nsdw: f64,
    pub humidity_fraction: f64,
}

/// The full typed parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSet {
    pub constants: PhysicalConstants,
    pub compartments: CompartmentTable,
    pub climate: ClimateParams,
    pub solar: SolarParams,
    pub crop: CropParams,
    pub actuators: ActuatorUnits,
    pub sizing: SizingParams,
    pub economics: EconomicParams,
    pub initial: InitialParams,
}

impl Default for ParameterSet {
    fn default() -> Self {
        default_parameters()
    }
}

/// One annotated entry of the defaults file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEntry {
    pub key: String,
    pub value: f64,
    pub unit: String,
    pub source: String,
}

/// The compiled-in default parameter set.
pub fn default_parameters() -> ParameterSet {
    ParameterSet::from_annotated(DEFAULTS_TOML, None).expect("bundled defaults are valid")
}

/// Every annotated entry of the bundled defaults, in file order of tables.
pub fn default_entries() -> Vec<ParameterEntry> {
    let table: Table = DEFAULTS_TOML.parse().expect("bundled defaults parse");
    let mut out = Vec::new();
    collect_entries(&table, "", &mut out);
    out
}

fn collect_entries(table: &Table, prefix: &str, out: &mut Vec<ParameterEntry>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        if let Some(t) = v.as_table() {
            if let Some(value) = t.get("value") {
                out.push(ParameterEntry {
                    key,
                    value: as_f64(value).unwrap_or(f64::NAN),
                    unit: t.get("unit").and_then(Value::as_str).unwrap_or("").into(),
                    source: t.get("source").and_then(Value::as_str).unwrap_or("").into(),
                });
            } else {
                collect_entries(t, &key, out);
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Replace every `{ value, unit, source }` leaf by its bare value.
fn strip_annotations(table: &Table) -> Result<Table> {
    let mut out = Table::new();
    for (k, v) in table {
        let plain = match v.as_table() {
            Some(t) if t.contains_key("value") => {
                if t.get("source").and_then(Value::as_str).is_none() {
                    return Err(Error::Parse(format!("parameter `{k}` has no provenance")));
                }
                t["value"].clone()
            }
            Some(t) => Value::Table(strip_annotations(t)?),
            None => v.clone(),
        };
        out.insert(k.clone(), plain);
    }
    Ok(out)
}

/// Overlay `over` onto `base`; nested tables merge, scalars replace.
pub(crate) fn merge_tables(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge_tables(b, o),
            _ => {
                let v = match v {
                    Value::Integer(i) => Value::Float(*i as f64),
                    other => other.clone(),
                };
                base.insert(k.clone(), v);
            }
        }
    }
}

impl ParameterSet {
    /// Build from an annotated parameter file, optionally overlaying plain
    /// override values.
    pub fn from_annotated(text: &str, overrides: Option<&Table>) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let mut plain = strip_annotations(&table)?;
        if let Some(o) = overrides {
            merge_tables(&mut plain, o);
        }
        let set: ParameterSet = Value::Table(plain)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// Defaults with plain-valued overrides, as found in a scenario's
    /// `[parameters]` table.
    pub fn with_overrides(overrides: &Table) -> Result<Self> {
        Self::from_annotated(DEFAULTS_TOML, Some(overrides))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.constants;
        for (name, v) in [
            ("sigma", c.sigma),
            ("r_gas", c.r_gas),
            ("m_co2", c.m_co2),
            ("p_atm", c.p_atm),
            ("rho_air", c.rho_air),
            ("c_air", c.c_air),
            ("lambda_air", c.lambda_air),
            ("rho_water", c.rho_water),
            ("gravity", c.gravity),
            ("nu_air", c.nu_air),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("constants.{name}"), "must be > 0"));
            }
        }
        if ((c.sigma - 5.670e-8) / 5.670e-8).abs() > 0.01 {
            return Err(Error::validation("constants.sigma", "must be within 1% of 5.670e-8"));
        }
        let t = &self.compartments;
        for (name, m) in [
            (Compartment::Cover, &t.cover),
            (Compartment::Vegetation, &t.vegetation),
            (Compartment::Medium, &t.medium),
            (Compartment::Tray, &t.tray),
            (Compartment::Floor, &t.floor),
            (Compartment::Soil, &t.soil),
        ] {
            CompartmentProps::from_material(name, m, 1.0).validate()?;
        }
        let k = &self.climate;
        for (name, v) in [
            ("leakage_ach", k.leakage_ach),
            ("internal_air_speed", k.internal_air_speed),
            ("condensation_rate", k.condensation_rate),
            ("transpiration_conductance", k.transpiration_conductance),
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation(format!("climate.{name}"), "must be >= 0"));
            }
        }
        for (name, v) in [
            ("cover_solar_absorptance", k.cover_solar_absorptance),
            ("medium_exposed_fraction", k.medium_exposed_fraction),
            ("view_vegetation_cover", k.view_vegetation_cover),
            ("view_tray_cover", k.view_tray_cover),
            ("view_medium_cover", k.view_medium_cover),
            ("view_floor_cover", k.view_floor_cover),
            ("view_tray_floor", k.view_tray_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("climate.{name}"), "must lie in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.solar.albedo) {
            return Err(Error::validation("solar.albedo", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.solar.par_fraction) {
            return Err(Error::validation("solar.par_fraction", "must lie in [0, 1]"));
        }
        self.crop.validate()?;
        let a = &self.actuators;
        for (name, u) in [
            ("heater", &a.heater),
            ("fan", &a.fan),
            ("humidifier", &a.humidifier),
            ("co2gen", &a.co2gen),
        ] {
            if !(u.p_unit >= 0.0) {
                return Err(Error::validation(format!("actuators.{name}.p_unit"), "must be >= 0"));
            }
            if !(u.eta > 0.0 && u.eta <= 1.0) {
                return Err(Error::validation(format!("actuators.{name}.eta"), "must lie in (0, 1]"));
            }
        }
        let s = &self.sizing;
        if !(s.humid_rh_low <= s.humid_rh_high) {
            return Err(Error::validation(
                "sizing.humid_rh_low",
                "must not exceed humid_rh_high",
            ));
        }
        for (name, v) in [
            ("t_lift", s.t_lift),
            ("acph", s.acph),
            ("q_air", s.q_air),
            ("co2_rate", s.co2_rate),
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation(format!("sizing.{name}"), "must be >= 0"));
            }
        }
        self.economics.validate()?;
        let i = &self.initial;
        if !(i.sdw >= 0.0 && i.nsdw >= 0.0) {
            return Err(Error::validation("initial", "seedling weights must be >= 0"));
        }
        if !(0.0..=1.0).contains(&i.humidity_fraction) {
            return Err(Error::validation("initial.humidity_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Equation symbols and the parameter key each one resolves to.
///
/// Symbols that are state, input or exogenous variables are not listed;
/// geometry-derived symbols resolve to `geometry.*`.
pub const SYMBOL_MANIFEST: &[(&str, &str)] = &[
    ("sigma", "constants.sigma"),
    ("R", "constants.r_gas"),
    ("M_c", "constants.m_co2"),
    ("P_atm", "constants.p_atm"),
    ("rho_air", "constants.rho_air"),
    ("c_air", "constants.c_air"),
    ("lambda_air", "constants.lambda_air"),
    ("rho_water", "constants.rho_water"),
    ("g", "constants.gravity"),
    ("nu_air", "constants.nu_air"),
    ("d_c[cover]", "compartments.cover.char_length"),
    ("d_c[vegetation]", "compartments.vegetation.char_length"),
    ("d_c[medium]", "compartments.medium.char_length"),
    ("d_c[tray]", "compartments.tray.char_length"),
    ("d_c[floor]", "compartments.floor.char_length"),
    ("d_c[soil]", "compartments.soil.char_length"),
    ("d_l[cover]", "compartments.cover.layer_thickness"),
    ("d_l[vegetation]", "compartments.vegetation.layer_thickness"),
    ("d_l[medium]", "compartments.medium.layer_thickness"),
    ("d_l[tray]", "compartments.tray.layer_thickness"),
    ("d_l[floor]", "compartments.floor.layer_thickness"),
    ("d_l[soil]", "compartments.soil.layer_thickness"),
    ("lambda_c[cover]", "compartments.cover.conductivity"),
    ("lambda_c[vegetation]", "compartments.vegetation.conductivity"),
    ("lambda_c[medium]", "compartments.medium.conductivity"),
    ("lambda_c[tray]", "compartments.tray.conductivity"),
    ("lambda_c[floor]", "compartments.floor.conductivity"),
    ("lambda_c[soil]", "compartments.soil.conductivity"),
    ("eps[cover]", "compartments.cover.emissivity"),
    ("eps[vegetation]", "compartments.vegetation.emissivity"),
    ("eps[medium]", "compartments.medium.emissivity"),
    ("eps[tray]", "compartments.tray.emissivity"),
    ("eps[floor]", "compartments.floor.emissivity"),
    ("eps[soil]", "compartments.soil.emissivity"),
    ("rho_r[cover]", "compartments.cover.reflectivity"),
    ("rho_r[vegetation]", "compartments.vegetation.reflectivity"),
    ("rho_r[medium]", "compartments.medium.reflectivity"),
    ("rho_r[tray]", "compartments.tray.reflectivity"),
    ("rho_r[floor]", "compartments.floor.reflectivity"),
    ("rho_r[soil]", "compartments.soil.reflectivity"),
    ("C[cover]", "compartments.cover.heat_capacity"),
    ("C[vegetation]", "compartments.vegetation.heat_capacity"),
    ("C[medium]", "compartments.medium.heat_capacity"),
    ("C[tray]", "compartments.tray.heat_capacity"),
    ("C[floor]", "compartments.floor.heat_capacity"),
    ("C[soil]", "compartments.soil.heat_capacity"),
    ("T_sky_offset", "climate.sky_temp_offset"),
    ("T_deep", "climate.deep_soil_temp_c"),
    ("ACH_leak", "climate.leakage_ach"),
    ("v_internal", "climate.internal_air_speed"),
    ("alpha_cover", "climate.cover_solar_absorptance"),
    ("phi_medium", "climate.medium_exposed_fraction"),
    ("k_cond", "climate.condensation_rate"),
    ("g_transp", "climate.transpiration_conductance"),
    ("F[vegetation,cover]", "climate.view_vegetation_cover"),
    ("F[tray,cover]", "climate.view_tray_cover"),
    ("F[floor,cover]", "climate.view_floor_cover"),
    ("F[tray,floor]", "climate.view_tray_floor"),
    ("F[medium,cover]", "climate.view_medium_cover"),
    ("albedo", "solar.albedo"),
    ("f_par", "solar.par_fraction"),
    ("c_CH2O/CO2", "crop.c_ch2o_co2"),
    ("Y_CH2O/CO2", "crop.yield_ch2o"),
    ("r_gr_max", "crop.r_gr_max"),
    ("gamma", "crop.gamma"),
    ("Q10_gr", "crop.q10_gr"),
    ("T_ref_gr", "crop.t_ref_gr_c"),
    ("resp_shoot", "crop.resp_shoot"),
    ("resp_root", "crop.resp_root"),
    ("tau_root", "crop.tau_root"),
    ("Q10_resp", "crop.q10_resp"),
    ("T_ref_resp", "crop.t_ref_resp_c"),
    ("k_ext", "crop.k_ext"),
    ("lar", "crop.lar"),
    ("eps_light", "crop.eps_light"),
    ("g_bnd", "crop.g_bnd"),
    ("g_stm", "crop.g_stm"),
    ("c_car1", "crop.c_car1"),
    ("c_car2", "crop.c_car2"),
    ("c_car3", "crop.c_car3"),
    ("Gamma", "crop.gamma_co2"),
    ("Q10_Gamma", "crop.q10_gamma"),
    ("eps_nsdw", "crop.nsdw_ramp"),
    ("p_unit[heater]", "actuators.heater.p_unit"),
    ("eta[heater]", "actuators.heater.eta"),
    ("p_unit[fan]", "actuators.fan.p_unit"),
    ("eta[fan]", "actuators.fan.eta"),
    ("p_unit[humidifier]", "actuators.humidifier.p_unit"),
    ("eta[humidifier]", "actuators.humidifier.eta"),
    ("p_unit[co2gen]", "actuators.co2gen.p_unit"),
    ("eta[co2gen]", "actuators.co2gen.eta"),
    ("T_sp - T_ambient", "sizing.t_lift"),
    ("ACPH", "sizing.acph"),
    ("Q_air", "sizing.q_air"),
    ("RH_80", "sizing.humid_rh_high"),
    ("RH_40", "sizing.humid_rh_low"),
    ("T_humid_ref", "sizing.humid_ref_temp_c"),
    ("c_dot_co2", "sizing.co2_rate"),
    ("E_cost", "economics.energy_price"),
    ("C_CO2cost", "economics.co2_price"),
    ("P_L", "economics.lettuce_price"),
    ("rho_dw", "economics.rho_dw"),
    ("P_solver", "economics.solver_power"),
    ("x_sdw(0)", "initial.sdw"),
    ("x_nsdw(0)", "initial.nsdw"),
    ("RH(0)", "initial.humidity_fraction"),
];
