//! Sun position and plane-of-array transposition onto the greenhouse planes.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of greenhouse planes carried in the exogenous vector.
pub const N_PLANES: usize = 8;

/// Surface names of the default gable decomposition, in vector order.
pub const GABLE_SURFACES: [&str; N_PLANES] = [
    "roof-a",
    "roof-b",
    "side-wall-a",
    "side-wall-b",
    "gable-wall-front",
    "gable-wall-back",
    "gable-triangle-front",
    "gable-triangle-back",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plane {
    /// m2.
    pub area: f64,
    /// Degrees from horizontal, 0..=180.
    pub tilt: f64,
    /// Degrees clockwise from north, 0..360.
    pub azimuth: f64,
    pub transmissivity: f64,
}

impl Plane {
    pub fn validate(&self, idx: usize) -> Result<()> {
        let f = |n: &str| format!("geometry.surfaces[{idx}].{n}");
        if !(self.area > 0.0) {
            return Err(Error::validation(f("area"), "must be > 0"));
        }
        if !(0.0..=180.0).contains(&self.tilt) {
            return Err(Error::validation(f("tilt"), "must lie in [0, 180]"));
        }
        if !(0.0..360.0).contains(&self.azimuth) {
            return Err(Error::validation(f("azimuth"), "must lie in [0, 360)"));
        }
        if !(0.0..=1.0).contains(&self.transmissivity) {
            return Err(Error::validation(f("transmissivity"), "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Resolved greenhouse geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenhouseGeometry {
    pub surfaces: [Plane; N_PLANES],
    /// Air volume, m3.
    pub volume: f64,
    /// Cultivated (bench) area, m2.
    pub cultivated_area: f64,
    /// Floor footprint, m2.
    pub footprint: f64,
    /// Cross-section swept by the fan flow, m2.
    pub cross_section: f64,
}

impl GreenhouseGeometry {
    /// A symmetric gable greenhouse.
    ///
    /// The ridge runs along `orientation` (degrees clockwise from north); the
    /// "a" sides face `orientation + 90`, the front gable faces `orientation`.
    pub fn gable(
        length: f64,
        width: f64,
        eave_height: f64,
        ridge_height: f64,
        orientation: f64,
        cultivated_fraction: f64,
        transmissivity: f64,
    ) -> Result<Self> {
        for (name, v) in [("length", length), ("width", width), ("eave_height", eave_height)] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("geometry.{name}"), "must be > 0"));
            }
        }
        if !(ridge_height > eave_height) {
            return Err(Error::validation("geometry.ridge_height", "must exceed eave_height"));
        }
        if !(cultivated_fraction > 0.0 && cultivated_fraction <= 1.0) {
            return Err(Error::validation("geometry.cultivated_fraction", "must lie in (0, 1]"));
        }
        let rise = ridge_height - eave_height;
        let half = 0.5 * width;
        let slope_len = (half * half + rise * rise).sqrt();
        let pitch = rise.atan2(half).to_degrees();
        let az = |off: f64| (orientation + off).rem_euclid(360.0);
        let plane = |area, tilt, azimuth| Plane {
            area,
            tilt,
            azimuth,
            transmissivity,
        };
        let surfaces = [
            plane(length * slope_len, pitch, az(90.0)),
            plane(length * slope_len, pitch, az(270.0)),
            plane(length * eave_height, 90.0, az(90.0)),
            plane(length * eave_height, 90.0, az(270.0)),
            plane(width * eave_height, 90.0, az(0.0)),
            plane(width * eave_height, 90.0, az(180.0)),
            plane(0.5 * width * rise, 90.0, az(0.0)),
            plane(0.5 * width * rise, 90.0, az(180.0)),
        ];
        let footprint = length * width;
        let g = Self {
            surfaces,
            volume: footprint * eave_height + 0.5 * width * rise * length,
            cultivated_area: cultivated_fraction * footprint,
            footprint,
            cross_section: width * eave_height,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.surfaces.iter().enumerate() {
            p.validate(i)?;
        }
        if !(self.volume > 0.0) {
            return Err(Error::validation("geometry.volume", "must be > 0"));
        }
        if !(self.cultivated_area > 0.0 && self.cultivated_area <= self.footprint) {
            return Err(Error::validation(
                "geometry.cultivated_area",
                "must be > 0 and not exceed the footprint",
            ));
        }
        if !(self.cross_section > 0.0) {
            return Err(Error::validation("geometry.cross_section", "must be > 0"));
        }
        Ok(())
    }

    /// Total cover area, m2.
    pub fn cover_area(&self) -> f64 {
        self.surfaces.iter().map(|p| p.area).sum()
    }

    /// The same greenhouse rotated by `degrees` about the vertical axis.
    pub fn rotated(&self, degrees: f64) -> Self {
        let mut g = self.clone();
        for p in &mut g.surfaces {
            p.azimuth = (p.azimuth + degrees).rem_euclid(360.0);
        }
        g
    }
}

/// Solar position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    pub zenith: f64,
    /// Degrees clockwise from north.
    pub azimuth: f64,
}

impl SunPosition {
    pub fn is_night(&self) -> bool {
        self.zenith >= 90.0
    }
}

/// Geometric solar zenith and azimuth.
///
/// Low-precision ephemeris in the NOAA solar calculator form (Meeus
/// chapter 25): about 0.01 degrees between 1950 and 2050.
pub fn sun_position(time: DateTime<Utc>, lat: f64, lon: f64) -> SunPosition {
    let unix = time.timestamp() as f64 + time.timestamp_subsec_nanos() as f64 * 1e-9;
    let jd = unix / 86_400.0 + 2_440_587.5;
    let t = (jd - 2_451_545.0) / 36_525.0;

    let l0 = (280.46646 + t * (36000.76983 + t * 0.0003032)).rem_euclid(360.0);
    let m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
    let e = 0.016_708_634 - t * (0.000_042_037 + 0.000_000_126_7 * t);
    let m_r = m.to_radians();
    let center = m_r.sin() * (1.914_602 - t * (0.004_817 + 0.000_014 * t))
        + (2.0 * m_r).sin() * (0.019_993 - 0.000_101 * t)
        + (3.0 * m_r).sin() * 0.000_289;
    let true_long = l0 + center;
    let omega = (125.04 - 1934.136 * t).to_radians();
    let app_long = (true_long - 0.005_69 - 0.004_78 * omega.sin()).to_radians();
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.000_59 - t * 0.001_813))) / 60.0) / 60.0;
    let eps = (eps0 + 0.002_56 * omega.cos()).to_radians();
    let decl = (eps.sin() * app_long.sin()).asin();

    let y = (eps / 2.0).tan().powi(2);
    let l0_r = l0.to_radians();
    let eot_min = 4.0
        * (y * (2.0 * l0_r).sin() - 2.0 * e * m_r.sin() + 4.0 * e * y * m_r.sin() * (2.0 * l0_r).cos()
            - 0.5 * y * y * (4.0 * l0_r).sin()
            - 1.25 * e * e * (2.0 * m_r).sin())
        .to_degrees();

    let minutes = (unix.rem_euclid(86_400.0)) / 60.0;
    let true_solar = (minutes + eot_min + 4.0 * lon).rem_euclid(1440.0);
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();

    let lat_r = lat.to_radians();
    let cos_zen = (lat_r.sin() * decl.sin() + lat_r.cos() * decl.cos() * hour_angle.cos()).clamp(-1.0, 1.0);
    let zenith = cos_zen.acos().to_degrees();
    let az = hour_angle
        .sin()
        .atan2(hour_angle.cos() * lat_r.sin() - decl.tan() * lat_r.cos());
    let azimuth = (az.to_degrees() + 180.0).rem_euclid(360.0);
    SunPosition { zenith, azimuth }
}

/// Horizontal and normal irradiance components, W m-2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Irradiance {
    pub ghi: f64,
    pub dni: f64,
    pub dhi: f64,
}

/// Direct and diffuse irradiance on one plane, isotropic sky plus a
/// ground-reflected term.
pub fn transpose(sun: &SunPosition, irr: &Irradiance, albedo: f64, plane: &Plane) -> (f64, f64) {
    if sun.is_night() {
        return (0.0, 0.0);
    }
    let zen = sun.zenith.to_radians();
    let tilt = plane.tilt.to_radians();
    let cos_aoi = zen.cos() * tilt.cos() + zen.sin() * tilt.sin() * (sun.azimuth - plane.azimuth).to_radians().cos();
    let direct = irr.dni.max(0.0) * cos_aoi.max(0.0);
    let sky = irr.dhi.max(0.0) * 0.5 * (1.0 + tilt.cos());
    let ground = irr.ghi.max(0.0) * albedo * 0.5 * (1.0 - tilt.cos());
    (direct, (sky + ground).max(0.0))
}

/// Plane-of-array vectors over all eight surfaces, in surface order.
pub fn poa_vector(
    sun: &SunPosition,
    irr: &Irradiance,
    albedo: f64,
    geometry: &GreenhouseGeometry,
) -> ([f64; N_PLANES], [f64; N_PLANES]) {
    let mut dir = [0.0; N_PLANES];
    let mut diff = [0.0; N_PLANES];
    for (k, p) in geometry.surfaces.iter().enumerate() {
        let (a, b) = transpose(sun, irr, albedo, p);
        dir[k] = a;
        diff[k] = b;
    }
    (dir, diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn geometry() -> GreenhouseGeometry {
        GreenhouseGeometry::gable(20.0, 10.0, 3.0, 4.5, 0.0, 0.75, 0.7).unwrap()
    }

    #[test]
    fn equator_equinox_noon_is_overhead() {
        // 2024-03-20 03:06 UTC equinox; solar noon at lon 0 is near 12:07 UTC
        let t = Utc.with_ymd_and_hms(2024, 3, 20, 12, 7, 0).unwrap();
        let s = sun_position(t, 0.0, 0.0);
        assert!(s.zenith < 1.0, "{s:?}");
    }

    #[test]
    fn local_midnight_is_night() {
        let t = Utc.with_ymd_and_hms(2024, 10, 11, 23, 0, 0).unwrap();
        let s = sun_position(t, 48.15, 17.11);
        assert!(s.is_night(), "{s:?}");
        let t = Utc.with_ymd_and_hms(2024, 6, 21, 0, 0, 0).unwrap();
        assert!(sun_position(t, -33.9, 151.2 - 180.0).zenith > 90.0);
    }

    #[test]
    fn bratislava_mid_october_noon_matches_reference() {
        // Reference: NREL SPA (pvlib 0.15.2, method="nrel_numpy"), geometric
        // zenith and azimuth for 2024-10-11 12:00 UTC at 48.15 N, 17.11 E.
        let t = Utc.with_ymd_and_hms(2024, 10, 11, 12, 0, 0).unwrap();
        let s = sun_position(t, 48.15, 17.11);
        assert!((s.zenith - REF_ZENITH).abs() < 0.05, "{s:?}");
        assert!((s.azimuth - REF_AZIMUTH).abs() < 0.1, "{s:?}");
    }

    const REF_ZENITH: f64 = 58.321_197;
    const REF_AZIMUTH: f64 = 204.042_56;

    #[test]
    fn night_transposes_to_zero() {
        let sun = SunPosition {
            zenith: 95.0,
            azimuth: 10.0,
        };
        let irr = Irradiance {
            ghi: 100.0,
            dni: 100.0,
            dhi: 100.0,
        };
        assert_eq!(transpose(&sun, &irr, 0.2, &geometry().surfaces[0]), (0.0, 0.0));
    }

    #[test]
    fn horizontal_plane_diffuse_is_dhi() {
        let sun = SunPosition {
            zenith: 40.0,
            azimuth: 180.0,
        };
        let irr = Irradiance {
            ghi: 500.0,
            dni: 0.0,
            dhi: 100.0,
        };
        let p = Plane {
            area: 1.0,
            tilt: 0.0,
            azimuth: 0.0,
            transmissivity: 1.0,
        };
        let (_, diff) = transpose(&sun, &irr, 0.7, &p);
        assert!((diff - 100.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_plane_diffuse_hand_value() {
        let sun = SunPosition {
            zenith: 40.0,
            azimuth: 180.0,
        };
        let irr = Irradiance {
            ghi: 200.0,
            dni: 0.0,
            dhi: 100.0,
        };
        let p = Plane {
            area: 1.0,
            tilt: 90.0,
            azimuth: 90.0,
            transmissivity: 1.0,
        };
        let (_, diff) = transpose(&sun, &irr, 0.2, &p);
        // 100 * 0.5 + 200 * 0.2 * 0.5
        assert!((diff - 70.0).abs() / 70.0 < 1e-9, "{diff}");
    }

    #[test]
    fn zero_irradiance_gives_zero_vectors() {
        let sun = SunPosition {
            zenith: 30.0,
            azimuth: 170.0,
        };
        let (d, f) = poa_vector(&sun, &Irradiance::default(), 0.2, &geometry());
        assert!(d.iter().chain(f.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_gable_at_solar_noon() {
        let sun = SunPosition {
            zenith: 55.0,
            azimuth: 180.0,
        };
        let irr = Irradiance {
            ghi: 450.0,
            dni: 600.0,
            dhi: 110.0,
        };
        let (d, f) = poa_vector(&sun, &irr, 0.2, &geometry());
        let east = d[0] + f[0];
        let west = d[1] + f[1];
        assert!((east - west).abs() <= 1e-9 * east.abs().max(1e-300), "{east} {west}");
    }

    #[test]
    fn gable_geometry_areas() {
        let g = geometry();
        assert!((g.footprint - 200.0).abs() < 1e-12);
        assert!((g.volume - (600.0 + 0.5 * 10.0 * 1.5 * 20.0)).abs() < 1e-9);
        assert!((g.cultivated_area - 150.0).abs() < 1e-12);
        assert_eq!(g.surfaces.len(), N_PLANES);
    }

    proptest! {
        #[test]
        fn poa_direct_bounded_and_nonnegative(
            zen in 0.0f64..120.0, saz in 0.0f64..360.0,
            dni in 0.0f64..1000.0, dhi in 0.0f64..400.0, ghi in 0.0f64..1100.0,
            orient in 0.0f64..360.0, albedo in 0.0f64..1.0,
        ) {
            let g = geometry().rotated(orient);
            let sun = SunPosition { zenith: zen, azimuth: saz };
            let irr = Irradiance { ghi, dni, dhi };
            let (d, f) = poa_vector(&sun, &irr, albedo, &g);
            for k in 0..N_PLANES {
                prop_assert!(d[k] >= 0.0 && d[k] <= dni + 1e-9);
                prop_assert!(f[k] >= 0.0);
            }
        }

        #[test]
        fn full_rotation_is_identity(orient in 0.0f64..360.0, zen in 0.0f64..89.0, saz in 0.0f64..360.0) {
            let g = geometry().rotated(orient);
            let sun = SunPosition { zenith: zen, azimuth: saz };
            let irr = Irradiance { ghi: 500.0, dni: 700.0, dhi: 100.0 };
            let a = poa_vector(&sun, &irr, 0.2, &g);
            let b = poa_vector(&sun, &irr, 0.2, &g.rotated(360.0));
            for k in 0..N_PLANES {
                prop_assert!((a.0[k] - b.0[k]).abs() < 1e-9);
                prop_assert!((a.1[k] - b.1[k]).abs() < 1e-9);
            }
        }

        #[test]
        fn poa_is_continuous_in_time(secs in 0i64..86_400) {
            let t0 = Utc.with_ymd_and_hms(2024, 10, 11, 0, 0, 0).unwrap() + chrono::Duration::seconds(secs);
            let t1 = t0 + chrono::Duration::seconds(1);
            let g = geometry();
            let irr = Irradiance { ghi: 400.0, dni: 600.0, dhi: 100.0 };
            let a = poa_vector(&sun_position(t0, 48.15, 17.11), &irr, 0.2, &g);
            let b = poa_vector(&sun_position(t1, 48.15, 17.11), &irr, 0.2, &g);
            let night_edge = sun_position(t0, 48.15, 17.11).is_night() != sun_position(t1, 48.15, 17.11).is_night();
            if !night_edge {
                for k in 0..N_PLANES {
                    prop_assert!((a.0[k] - b.0[k]).abs() < 1.0);
                    prop_assert!((a.1[k] - b.1[k]).abs() < 1.0);
                }
            }
        }
    }
}
