//! Lettuce growth: structural (SDW) and non-structural (NSDW) dry weight.
//!
//! Closed forms follow the Van Henten (1994) lettuce model. Weights are in
//! g m-2 of cultivated area, rates in g m-2 s-1.

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::climate::co2_density_from_ppm;
use crate::error::{Error, Result};
use crate::params::PhysicalConstants;

const T0: f64 = 273.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropParams {
    /// g CH2O per g CO2.
    pub c_ch2o_co2: f64,
    /// Yield of structural material from CH2O.
    pub yield_ch2o: f64,
    /// s-1
    pub r_gr_max: f64,
    pub gamma: f64,
    pub q10_gr: f64,
    pub t_ref_gr_c: f64,
    /// s-1
    pub resp_shoot: f64,
    /// s-1
    pub resp_root: f64,
    pub tau_root: f64,
    pub q10_resp: f64,
    pub t_ref_resp_c: f64,
    pub k_ext: f64,
    /// m2 g-1
    pub lar: f64,
    /// g J-1
    pub eps_light: f64,
    /// m s-1
    pub g_bnd: f64,
    /// m s-1
    pub g_stm: f64,
    pub c_car1: f64,
    pub c_car2: f64,
    pub c_car3: f64,
    /// CO2 compensation point at 20 C, ppm.
    pub gamma_co2: f64,
    pub q10_gamma: f64,
    /// Width of the band over which growth and respiration fade out as the
    /// NSDW reservoir empties, g m-2.
    pub nsdw_ramp: f64,
}

impl CropParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("r_gr_max", self.r_gr_max),
            ("gamma", self.gamma),
            ("resp_shoot", self.resp_shoot),
            ("resp_root", self.resp_root),
            ("k_ext", self.k_ext),
            ("lar", self.lar),
            ("eps_light", self.eps_light),
            ("g_bnd", self.g_bnd),
            ("g_stm", self.g_stm),
            ("gamma_co2", self.gamma_co2),
            ("c_ch2o_co2", self.c_ch2o_co2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("crop.{name}"), "must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("q10_gr", self.q10_gr),
            ("q10_resp", self.q10_resp),
            ("q10_gamma", self.q10_gamma),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("crop.{name}"), "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau_root) {
            return Err(Error::validation("crop.tau_root", "must lie in [0, 1]"));
        }
        if !(self.yield_ch2o > 0.0 && self.yield_ch2o <= 1.0) {
            return Err(Error::validation("crop.yield_ch2o", "must lie in (0, 1]"));
        }
        if !(self.nsdw_ramp > 0.0) {
            return Err(Error::validation("crop.nsdw_ramp", "must be > 0"));
        }
        Ok(())
    }

    /// Leaf area index of the canopy for a given SDW.
    pub fn lai<T: Real>(&self, x_sdw: T) -> T {
        x_sdw.max0() * (self.lar * (1.0 - self.tau_root))
    }

    /// Fraction of incoming light intercepted by the canopy.
    pub fn interception<T: Real>(&self, x_sdw: T) -> T {
        T::cst(1.0) - (self.lai(x_sdw) * -self.k_ext).exp()
    }
}

/// Crop inputs taken from the greenhouse climate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropDrivers<T = f64> {
    /// Air temperature, K.
    pub t_air: T,
    /// CO2 density, kg m-3.
    pub c_co2: T,
    /// PAR at canopy level, W m-2.
    pub par: f64,
}

/// Crop derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CropRates<T = f64> {
    pub d_sdw: T,
    pub d_nsdw: T,
    /// Gross CO2 assimilation, g m-2 s-1.
    pub f_phot: T,
    /// CO2 removed from the greenhouse air, kg m-3 s-1.
    pub co2_sink: T,
}

impl<T: Real> CropRates<T> {
    pub fn value(&self) -> CropRates {
        CropRates {
            d_sdw: self.d_sdw.value(),
            d_nsdw: self.d_nsdw.value(),
            f_phot: self.f_phot.value(),
            co2_sink: self.co2_sink.value(),
        }
    }
}

/// r_gr = r_max * nsdw / (gamma * sdw + nsdw) * Q10^((T - T_ref) / 10)
pub fn specific_growth_rate<T: Real>(p: &CropParams, t_air: T, x_sdw: T, x_nsdw: T) -> T {
    let x_sdw = x_sdw.max0();
    let x_nsdw = x_nsdw.max0();
    let denom = x_sdw * p.gamma + x_nsdw;
    if x_nsdw.value() == 0.0 || denom.value() <= 0.0 {
        return T::zero();
    }
    let q = ((t_air - T0 - p.t_ref_gr_c) / 10.0).exp_base(p.q10_gr);
    x_nsdw / denom * q * p.r_gr_max
}

/// Shoot and root maintenance respiration, g CH2O m-2 s-1.
pub fn maintenance_respiration<T: Real>(p: &CropParams, t_air: T, x_sdw: T) -> T {
    let coeff = p.resp_shoot * (1.0 - p.tau_root) + p.resp_root * p.tau_root;
    x_sdw.max0() * coeff * ((t_air - T0 - p.t_ref_resp_c) / 10.0).exp_base(p.q10_resp)
}

/// Carboxylation conductance, m s-1, quadratic in temperature (C).
pub fn carboxylation_conductance<T: Real>(p: &CropParams, t_air: T) -> T {
    let t = t_air - T0;
    (t * t * p.c_car1 + t * p.c_car2 + p.c_car3).max0()
}

/// Boundary layer, stomatal and carboxylation conductances in series.
pub fn canopy_conductance<T: Real>(p: &CropParams, t_air: T) -> T {
    let (a, b, c) = (p.g_bnd, p.g_stm, carboxylation_conductance(p, t_air));
    let den = c * b + c * a + a * b;
    if den.value() <= 0.0 {
        T::zero()
    } else {
        c * (a * b) / den
    }
}

/// CO2 compensation point as a density, kg m-3.
pub fn compensation_density<T: Real>(p: &CropParams, k: &PhysicalConstants, t_air: T) -> T {
    let ppm = ((t_air - T0 - 20.0) / 10.0).exp_base(p.q10_gamma) * p.gamma_co2;
    co2_density_from_ppm(ppm, t_air, k)
}

/// Gross canopy CO2 assimilation, g CO2 m-2 s-1.
///
/// Light-limited rate eps * PAR and CO2-limited rate g * (C - Gamma) combine
/// as a non-rectangular hyperbola, scaled by canopy light interception.
pub fn gross_photosynthesis<T: Real>(
    p: &CropParams,
    k: &PhysicalConstants,
    c_co2: T,
    t_air: T,
    par: f64,
    x_sdw: T,
) -> T {
    let light = p.eps_light * par.max(0.0);
    let dc = (c_co2 - compensation_density(p, k, t_air)).max0();
    let carbon = canopy_conductance(p, t_air) * dc * 1000.0;
    if light <= 0.0 || carbon.value() <= 0.0 {
        return T::zero();
    }
    p.interception(x_sdw) * carbon * light / (carbon + light)
}

/// C1 ramp from 0 at z <= 0 to 1 at z >= 1.
fn smooth_step<T: Real>(z: T) -> T {
    if z.value() <= 0.0 {
        T::zero()
    } else if z.value() >= 1.0 {
        T::cst(1.0)
    } else {
        z * z * (T::cst(3.0) - z * 2.0)
    }
}

/// Crop derivatives; `area_per_volume` is A_c / volume in m-1.
pub fn crop_rhs<T: Real>(
    p: &CropParams,
    k: &PhysicalConstants,
    x_sdw: T,
    x_nsdw: T,
    d: CropDrivers<T>,
    area_per_volume: f64,
) -> CropRates<T> {
    let ramp = smooth_step(x_nsdw / p.nsdw_ramp);
    let r_gr = ramp * specific_growth_rate(p, d.t_air, x_sdw, x_nsdw);
    let resp = ramp * maintenance_respiration(p, d.t_air, x_sdw);
    let f_phot = gross_photosynthesis(p, k, d.c_co2, d.t_air, d.par, x_sdw);
    let growth = r_gr * x_sdw.max0();
    CropRates {
        d_sdw: growth,
        d_nsdw: f_phot * p.c_ch2o_co2 - growth - resp - growth * ((1.0 - p.yield_ch2o) / p.yield_ch2o),
        f_phot,
        co2_sink: f_phot * (1e-3 * area_per_volume),
    }
}
