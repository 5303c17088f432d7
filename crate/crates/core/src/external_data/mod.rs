//! Hourly weather and grid carbon-intensity series: sample types, fixture
//! files, HTTP clients and conversion to the model's exogenous vector.

mod client;
mod fixture;

pub use client::{
    is_offline, parse_carbon, parse_forecast, CarbonClient, DataSource, HttpResponse, RetryPolicy, Transport,
    UreqTransport, WeatherClient, CARBON_KEY_ENV, CARBON_URL_ENV, OFFLINE_ENV, WEATHER_URL_ENV,
};
pub use fixture::{
    read_carbon_csv, read_weather_csv, write_carbon_csv, write_weather_csv, FixtureHeader, FixtureStore,
};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::climate::ExternalConditions;
use crate::error::{Error, Result};
use crate::solar::{poa_vector, sun_position, GreenhouseGeometry, Irradiance};

const T0: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub time: DateTime<Utc>,
    /// K
    pub t_ext: f64,
    /// K
    pub t_app: f64,
    /// %
    pub h_rel: f64,
    /// m s-1
    pub v_wind: f64,
    pub ghi: f64,
    pub dni: f64,
    pub dhi: f64,
}

impl WeatherSample {
    pub fn validate(&self) -> Result<()> {
        let at = self.time.to_rfc3339();
        if !(0.0..=100.0).contains(&self.h_rel) {
            return Err(Error::Schema(format!(
                "{at}: relative humidity {} outside [0, 100]",
                self.h_rel
            )));
        }
        if !(self.v_wind >= 0.0) {
            return Err(Error::Schema(format!("{at}: negative wind speed")));
        }
        if !(self.ghi >= 0.0 && self.dni >= 0.0 && self.dhi >= 0.0) {
            return Err(Error::Schema(format!("{at}: negative irradiance")));
        }
        if !(self.t_ext > 0.0 && self.t_app > 0.0) {
            return Err(Error::Schema(format!("{at}: non-physical temperature")));
        }
        Ok(())
    }

    /// Relative mismatch between `dni cos(zenith) + dhi` and `ghi`, when the
    /// sun is up and the irradiance is large enough to compare.
    pub fn closure_error(&self, lat: f64, lon: f64) -> Option<f64> {
        let sun = sun_position(self.time, lat, lon);
        if sun.is_night() || self.ghi < 50.0 {
            return None;
        }
        let rebuilt = self.dni * sun.zenith.to_radians().cos() + self.dhi;
        Some((rebuilt - self.ghi).abs() / self.ghi)
    }

    fn lerp(&self, other: &Self, w: f64, time: DateTime<Utc>) -> Self {
        let l = |a: f64, b: f64| a + w * (b - a);
        Self {
            time,
            t_ext: l(self.t_ext, other.t_ext),
            t_app: l(self.t_app, other.t_app),
            h_rel: l(self.h_rel, other.h_rel),
            v_wind: l(self.v_wind, other.v_wind),
            ghi: l(self.ghi, other.ghi),
            dni: l(self.dni, other.dni),
            dhi: l(self.dhi, other.dhi),
        }
    }
}

/// Timestamps whose irradiance components disagree with GHI by more than
/// 30 %. Flagged, not rejected.
pub fn closure_flags(samples: &[WeatherSample], lat: f64, lon: f64) -> Vec<DateTime<Utc>> {
    samples
        .iter()
        .filter(|s| s.closure_error(lat, lon).is_some_and(|e| e > 0.3))
        .map(|s| s.time)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensitySample {
    pub time: DateTime<Utc>,
    /// gCO2eq kWh-1
    pub intensity: f64,
}

/// Inclusive hourly window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end <= start {
            return Err(Error::validation("window", "end must be after start"));
        }
        Ok(Self { start, end })
    }

    /// The whole hours covering `[start, start + seconds]`.
    pub fn covering(start: DateTime<Utc>, seconds: f64) -> Self {
        let s = floor_hour(start);
        let e = start + Duration::milliseconds((seconds * 1000.0).ceil() as i64);
        let mut end = floor_hour(e);
        if end < e {
            end += Duration::hours(1);
        }
        if end <= s {
            end = s + Duration::hours(1);
        }
        Self { start: s, end }
    }

    /// Hourly timestamps, both ends included.
    pub fn hours(&self) -> Vec<DateTime<Utc>> {
        let mut out = Vec::new();
        let mut t = floor_hour(self.start);
        if t < self.start {
            t += Duration::hours(1);
        }
        while t <= self.end {
            out.push(t);
            t += Duration::hours(1);
        }
        out
    }

    pub fn contains(&self, other: &Window) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

fn floor_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp(t.timestamp().div_euclid(3600) * 3600, 0).expect("in range")
}

/// Keeps the samples inside `window` and checks every hour is present.
pub fn restrict_weather(samples: &[WeatherSample], window: &Window) -> Result<Vec<WeatherSample>> {
    restrict(samples, window, |s| s.time)
}

pub fn restrict_carbon(samples: &[CarbonIntensitySample], window: &Window) -> Result<Vec<CarbonIntensitySample>> {
    restrict(samples, window, |s| s.time)
}

fn restrict<T: Copy>(samples: &[T], window: &Window, time: impl Fn(&T) -> DateTime<Utc>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for h in window.hours() {
        match samples.iter().find(|s| time(s) == h) {
            Some(s) => out.push(*s),
            None => return Err(Error::CoverageGap(fixture::format_time(h))),
        }
    }
    Ok(out)
}

/// Checks consecutive samples are at most an hour apart and ordered.
pub fn check_spacing<T>(samples: &[T], time: impl Fn(&T) -> DateTime<Utc>) -> Result<()> {
    for w in samples.windows(2) {
        let (a, b) = (time(&w[0]), time(&w[1]));
        if b <= a {
            return Err(Error::Schema(format!(
                "timestamps not increasing at {}",
                b.to_rfc3339()
            )));
        }
        if b - a > Duration::hours(1) {
            return Err(Error::CoverageGap(format!(
                "{} (gap after {})",
                fixture::format_time(a + Duration::hours(1)),
                fixture::format_time(a)
            )));
        }
    }
    Ok(())
}

/// Location parameters needed to turn weather into model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
    pub albedo: f64,
}

/// The model's exogenous vector for a weather sample at `time`.
pub fn to_external_conditions(
    w: &WeatherSample,
    geometry: &GreenhouseGeometry,
    site: &Site,
    time: DateTime<Utc>,
) -> ExternalConditions {
    let sun = sun_position(time, site.latitude, site.longitude);
    let irr = Irradiance {
        ghi: w.ghi,
        dni: w.dni,
        dhi: w.dhi,
    };
    let (i_dir, i_diff) = poa_vector(&sun, &irr, site.albedo, geometry);
    ExternalConditions {
        t_ext: w.t_ext,
        t_app: w.t_app,
        v_wind: w.v_wind,
        h_rel: w.h_rel,
        i_dir,
        i_diff,
    }
}

/// Linear interpolation of an ordered weather series at `time`.
pub fn interpolate_weather(samples: &[WeatherSample], time: DateTime<Utc>) -> Result<WeatherSample> {
    let (i, w) = bracket(samples.len(), |k| samples[k].time, time)?;
    if w == 0.0 {
        return Ok(WeatherSample { time, ..samples[i] });
    }
    Ok(samples[i].lerp(&samples[i + 1], w, time))
}

/// Linear interpolation of an ordered carbon-intensity series at `time`.
pub fn interpolate_carbon(samples: &[CarbonIntensitySample], time: DateTime<Utc>) -> Result<f64> {
    let (i, w) = bracket(samples.len(), |k| samples[k].time, time)?;
    if w == 0.0 {
        return Ok(samples[i].intensity);
    }
    Ok(samples[i].intensity + w * (samples[i + 1].intensity - samples[i].intensity))
}

fn bracket(n: usize, time: impl Fn(usize) -> DateTime<Utc>, t: DateTime<Utc>) -> Result<(usize, f64)> {
    if n == 0 || t < time(0) || t > time(n - 1) {
        return Err(Error::DataGap(format!("no samples around {}", t.to_rfc3339())));
    }
    let hi = (0..n).position(|k| time(k) >= t).expect("bounded");
    if time(hi) == t {
        return Ok((hi, 0.0));
    }
    let lo = hi - 1;
    let span = (time(hi) - time(lo)).num_milliseconds() as f64;
    let w = (t - time(lo)).num_milliseconds() as f64 / span;
    Ok((lo, w))
}
