//! HTTP clients for hourly weather forecasts and grid carbon intensity.
//!
//! Wire formats follow the public Open-Meteo forecast API and the
//! Electricity Maps carbon-intensity API. Both clients ignore unknown
//! fields and sit behind a [`Transport`] so tests can replay responses.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::fixture::{format_time, write_carbon_csv, write_weather_csv, FixtureHeader, FixtureStore};
use super::{restrict_carbon, restrict_weather, CarbonIntensitySample, WeatherSample, Window, T0};
use crate::error::{Error, Result};

/// Set to `1`/`true` to forbid all network access.
pub const OFFLINE_ENV: &str = "GREENHOUSE_OFFLINE";
pub const WEATHER_URL_ENV: &str = "GREENHOUSE_WEATHER_URL";
pub const CARBON_URL_ENV: &str = "GREENHOUSE_CARBON_URL";
pub const CARBON_KEY_ENV: &str = "GREENHOUSE_CARBON_API_KEY";

pub fn is_offline() -> bool {
    std::env::var(OFFLINE_ENV)
        .is_ok_and(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    /// A GET request. Transport-level failures are returned as
    /// [`Error::Network`]; HTTP error statuses are returned as responses.
    fn get(&self, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse>;
}

/// Blocking transport over `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let mut resp = req.call().map_err(|e| Error::Network(format!("GET {url}: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Network(format!("GET {url}: {e}")))?;
        Ok(HttpResponse { status, body })
    }
}

/// Exponential backoff for transient failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }

    fn run(&self, transport: &dyn Transport, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse> {
        let mut last = Error::Network(format!("GET {url}: no attempt made"));
        for attempt in 0..self.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.delay(attempt - 1));
            }
            match transport.get(url, headers) {
                Ok(r) if r.status == 429 || r.status >= 500 => {
                    last = Error::Network(format!("GET {url}: HTTP {}", r.status));
                }
                Ok(r) => return Ok(r),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

fn hour_param(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M").to_string()
}

#[derive(Deserialize)]
struct ForecastBody {
    #[serde(default)]
    hourly_units: HashMap<String, String>,
    hourly: HourlyBody,
}

#[derive(Deserialize)]
struct HourlyBody {
    time: Vec<String>,
    temperature_2m: Vec<Option<f64>>,
    apparent_temperature: Vec<Option<f64>>,
    relative_humidity_2m: Vec<Option<f64>>,
    wind_speed_10m: Vec<Option<f64>>,
    shortwave_radiation: Vec<Option<f64>>,
    direct_normal_irradiance: Vec<Option<f64>>,
    diffuse_radiation: Vec<Option<f64>>,
}

pub struct WeatherClient {
    pub base_url: String,
    pub transport: Arc<dyn Transport>,
    pub retry: RetryPolicy,
}

impl WeatherClient {
    pub const DEFAULT_URL: &'static str = "https://api.open-meteo.com";

    pub fn new(base_url: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            base_url: base_url.into(),
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn url(&self, lat: f64, lon: f64, window: &Window) -> String {
        format!(
            "{}/v1/forecast?latitude={lat}&longitude={lon}&hourly=temperature_2m,apparent_temperature,\
             relative_humidity_2m,wind_speed_10m,shortwave_radiation,direct_normal_irradiance,diffuse_radiation\
             &start_hour={}&end_hour={}&timezone=UTC&wind_speed_unit=ms",
            self.base_url.trim_end_matches('/'),
            hour_param(window.start),
            hour_param(window.end)
        )
    }

    /// Hourly samples covering the window, both ends included.
    pub fn fetch(&self, lat: f64, lon: f64, window: &Window) -> Result<Vec<WeatherSample>> {
        let url = self.url(lat, lon, window);
        let r = self.retry.run(self.transport.as_ref(), &url, &[])?;
        if r.status != 200 {
            return Err(Error::Network(format!("weather: HTTP {} from {url}", r.status)));
        }
        let samples = parse_forecast(&r.body)?;
        restrict_weather(&samples, window)
    }
}

/// Decodes a forecast response body into samples in model units.
pub fn parse_forecast(body: &str) -> Result<Vec<WeatherSample>> {
    let b: ForecastBody = serde_json::from_str(body).map_err(|e| Error::Schema(format!("weather response: {e}")))?;
    let h = &b.hourly;
    let n = h.time.len();
    let cols = [
        &h.temperature_2m,
        &h.apparent_temperature,
        &h.relative_humidity_2m,
        &h.wind_speed_10m,
        &h.shortwave_radiation,
        &h.direct_normal_irradiance,
        &h.diffuse_radiation,
    ];
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Schema("weather response: hourly arrays differ in length".into()));
    }
    let unit = |k: &str| b.hourly_units.get(k).map(String::as_str).unwrap_or("");
    let wind_scale = match unit("wind_speed_10m") {
        "km/h" => 1.0 / 3.6,
        "mp/h" | "mph" => 0.44704,
        "kn" => 0.514444,
        _ => 1.0,
    };
    let to_k = |v: f64, k: &str| {
        if unit(k).contains('F') {
            (v - 32.0) / 1.8 + T0
        } else {
            v + T0
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let time = super::fixture::parse_time(&h.time[i])?;
        let get = |c: &Vec<Option<f64>>| c[i].ok_or_else(|| Error::CoverageGap(format_time(time)));
        let s = WeatherSample {
            time,
            t_ext: to_k(get(&h.temperature_2m)?, "temperature_2m"),
            t_app: to_k(get(&h.apparent_temperature)?, "apparent_temperature"),
            h_rel: get(&h.relative_humidity_2m)?,
            v_wind: get(&h.wind_speed_10m)? * wind_scale,
            ghi: get(&h.shortwave_radiation)?,
            dni: get(&h.direct_normal_irradiance)?,
            dhi: get(&h.diffuse_radiation)?,
        };
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CarbonBody {
    data: Vec<CarbonPoint>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CarbonPoint {
    datetime: String,
    carbon_intensity: Option<f64>,
}

pub struct CarbonClient {
    pub base_url: String,
    pub api_key: Option<String>,
    pub transport: Arc<dyn Transport>,
    pub retry: RetryPolicy,
}

impl CarbonClient {
    pub const DEFAULT_URL: &'static str = "https://api.electricitymap.org";

    pub fn new(base_url: impl Into<String>, api_key: Option<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn url(&self, zone: &str, window: &Window) -> String {
        format!(
            "{}/v3/carbon-intensity/past-range?zone={zone}&start={}&end={}",
            self.base_url.trim_end_matches('/'),
            format_time(window.start),
            format_time(window.end)
        )
    }

    pub fn fetch(&self, zone: &str, window: &Window) -> Result<Vec<CarbonIntensitySample>> {
        let url = self.url(zone, window);
        let headers: Vec<(&str, &str)> = self.api_key.iter().map(|k| ("auth-token", k.as_str())).collect();
        let r = self.retry.run(self.transport.as_ref(), &url, &headers)?;
        if r.status == 404 || (r.status == 400 && r.body.to_ascii_lowercase().contains("zone")) {
            return Err(Error::UnsupportedZone(zone.to_string()));
        }
        if r.status != 200 {
            return Err(Error::Network(format!(
                "carbon intensity: HTTP {} from {url}",
                r.status
            )));
        }
        let samples = parse_carbon(&r.body)?;
        if samples.is_empty() {
            return Err(Error::UnsupportedZone(zone.to_string()));
        }
        restrict_carbon(&samples, window)
    }
}

pub fn parse_carbon(body: &str) -> Result<Vec<CarbonIntensitySample>> {
    let b: CarbonBody = serde_json::from_str(body).map_err(|e| Error::Schema(format!("carbon response: {e}")))?;
    let mut out = Vec::with_capacity(b.data.len());
    for p in b.data {
        let time = super::fixture::parse_time(&p.datetime)?;
        let intensity = p
            .carbon_intensity
            .ok_or_else(|| Error::CoverageGap(format_time(time)))?;
        if !(intensity >= 0.0) {
            return Err(Error::Schema(format!("{}: negative carbon intensity", p.datetime)));
        }
        out.push(CarbonIntensitySample { time, intensity });
    }
    Ok(out)
}

/// Fixture store first, network second; fetched series are cached back
/// into the store.
pub struct DataSource {
    pub store: FixtureStore,
    pub weather: Option<WeatherClient>,
    pub carbon: Option<CarbonClient>,
    pub offline: bool,
}

impl DataSource {
    /// Replays fixtures only.
    pub fn offline(store: FixtureStore) -> Self {
        Self {
            store,
            weather: None,
            carbon: None,
            offline: true,
        }
    }

    /// Clients configured from the environment; offline when
    /// [`OFFLINE_ENV`] is set.
    pub fn from_env(store: FixtureStore) -> Self {
        if is_offline() {
            return Self::offline(store);
        }
        let transport: Arc<dyn Transport> = Arc::new(UreqTransport::default());
        let env = |k: &str, d: &str| std::env::var(k).unwrap_or_else(|_| d.to_string());
        Self {
            store,
            weather: Some(WeatherClient::new(
                env(WEATHER_URL_ENV, WeatherClient::DEFAULT_URL),
                transport.clone(),
            )),
            carbon: Some(CarbonClient::new(
                env(CARBON_URL_ENV, CarbonClient::DEFAULT_URL),
                std::env::var(CARBON_KEY_ENV).ok(),
                transport,
            )),
            offline: false,
        }
    }

    pub fn fetch_weather(&self, lat: f64, lon: f64, window: &Window) -> Result<Vec<WeatherSample>> {
        let cached = self.store.weather(lat, lon, window);
        match (&cached, self.offline, &self.weather) {
            (Ok(Some(_)), _, _) => return Ok(cached?.expect("checked")),
            (Err(_), true, _) | (Err(_), _, None) => return cached.map(|s| s.unwrap_or_default()),
            (Ok(None), true, _) | (Ok(None), _, None) => {
                return Err(Error::CoverageGap(format!(
                    "{} (no weather fixture at {lat},{lon} in {})",
                    format_time(window.start),
                    self.store.dir.display()
                )))
            }
            _ => {}
        }
        let client = self.weather.as_ref().expect("checked");
        let samples = client.fetch(lat, lon, window)?;
        let mut h = FixtureHeader::default();
        h.set("kind", "weather");
        h.set("source", client.base_url.clone());
        h.set("location", format!("{lat},{lon}"));
        h.set(
            "window",
            format!("{}/{}", format_time(window.start), format_time(window.end)),
        );
        h.set("retrieved", format_time(Utc::now()));
        let name = format!(
            "weather_{lat:.4}_{lon:.4}_{}_{}.csv",
            window.start.format("%Y%m%dT%H"),
            window.end.format("%Y%m%dT%H")
        );
        self.store.put(&name, &write_weather_csv(&h, &samples)?)?;
        Ok(samples)
    }

    pub fn fetch_carbon(&self, zone: &str, window: &Window) -> Result<Vec<CarbonIntensitySample>> {
        let cached = self.store.carbon(zone, window);
        match (&cached, self.offline, &self.carbon) {
            (Ok(Some(_)), _, _) => return Ok(cached?.expect("checked")),
            (Err(_), true, _) | (Err(_), _, None) => return cached.map(|s| s.unwrap_or_default()),
            (Ok(None), true, _) | (Ok(None), _, None) => return Err(Error::UnsupportedZone(zone.to_string())),
            _ => {}
        }
        let client = self.carbon.as_ref().expect("checked");
        let samples = client.fetch(zone, window)?;
        let mut h = FixtureHeader::default();
        h.set("kind", "carbon-intensity");
        h.set("source", client.base_url.clone());
        h.set("zone", zone);
        h.set(
            "window",
            format!("{}/{}", format_time(window.start), format_time(window.end)),
        );
        h.set("retrieved", format_time(Utc::now()));
        let name = format!(
            "carbon_{zone}_{}_{}.csv",
            window.start.format("%Y%m%dT%H"),
            window.end.format("%Y%m%dT%H")
        );
        self.store.put(&name, &write_carbon_csv(&h, &samples)?)?;
        Ok(samples)
    }
}
