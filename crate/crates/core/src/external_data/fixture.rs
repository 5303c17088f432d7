//! CSV fixture files with a `#`-prefixed header block.
//!
//! ```text
//! # kind: weather
//! # source: ...
//! # location: 48.1486,17.1077
//! # window: 2024-10-11T00:00:00Z/2024-10-13T00:00:00Z
//! # retrieved: 2024-10-14T08:00:00Z
//! time,t_ext_c,t_app_c,h_rel,v_wind,ghi,dni,dhi
//! ```
//! Weather temperatures are stored in degrees Celsius and converted to
//! kelvin on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{check_spacing, CarbonIntensitySample, WeatherSample, Window, T0};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureHeader {
    pub fields: BTreeMap<String, String>,
}

impl FixtureHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.fields.insert(key.to_string(), value.into());
    }

    pub fn kind(&self) -> Option<&str> {
        self.get("kind")
    }

    pub fn location(&self) -> Option<(f64, f64)> {
        let (a, b) = self.get("location")?.split_once(',')?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    }

    pub fn window(&self) -> Option<Window> {
        let (a, b) = self.get("window")?.split_once('/')?;
        Some(Window {
            start: parse_time(a).ok()?,
            end: parse_time(b).ok()?,
        })
    }

    pub fn parse(text: &str) -> Self {
        let mut h = Self::default();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            if let Some((k, v)) = rest.split_once(':') {
                h.set(k.trim(), v.trim());
            }
        }
        h
    }

    fn render(&self) -> String {
        self.fields.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

pub(crate) fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
        .map(|n| n.and_utc())
        .map_err(|e| Error::Parse(format!("timestamp `{s}`: {e}")))
}

pub(crate) fn format_time(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct WeatherRow {
    time: String,
    t_ext_c: f64,
    t_app_c: f64,
    h_rel: f64,
    v_wind: f64,
    ghi: f64,
    dni: f64,
    dhi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CarbonRow {
    time: String,
    intensity: f64,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub fn read_weather_csv(text: &str) -> Result<(FixtureHeader, Vec<WeatherSample>)> {
    let header = FixtureHeader::parse(text);
    let mut out = Vec::new();
    for row in reader(text).deserialize::<WeatherRow>() {
        let r = row.map_err(|e| Error::Parse(format!("weather fixture: {e}")))?;
        let s = WeatherSample {
            time: parse_time(&r.time)?,
            t_ext: r.t_ext_c + T0,
            t_app: r.t_app_c + T0,
            h_rel: r.h_rel,
            v_wind: r.v_wind,
            ghi: r.ghi,
            dni: r.dni,
            dhi: r.dhi,
        };
        s.validate()?;
        out.push(s);
    }
    check_spacing(&out, |s| s.time)?;
    Ok((header, out))
}

pub fn write_weather_csv(header: &FixtureHeader, samples: &[WeatherSample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(WeatherRow {
            time: format_time(s.time),
            t_ext_c: round(s.t_ext - T0),
            t_app_c: round(s.t_app - T0),
            h_rel: s.h_rel,
            v_wind: s.v_wind,
            ghi: s.ghi,
            dni: s.dni,
            dhi: s.dhi,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    finish(header, w)
}

pub fn read_carbon_csv(text: &str) -> Result<(FixtureHeader, Vec<CarbonIntensitySample>)> {
    let header = FixtureHeader::parse(text);
    let mut out = Vec::new();
    for row in reader(text).deserialize::<CarbonRow>() {
        let r = row.map_err(|e| Error::Parse(format!("carbon-intensity fixture: {e}")))?;
        if !(r.intensity >= 0.0) {
            return Err(Error::Schema(format!("{}: negative carbon intensity", r.time)));
        }
        out.push(CarbonIntensitySample {
            time: parse_time(&r.time)?,
            intensity: r.intensity,
        });
    }
    check_spacing(&out, |s| s.time)?;
    Ok((header, out))
}

pub fn write_carbon_csv(header: &FixtureHeader, samples: &[CarbonIntensitySample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(CarbonRow {
            time: format_time(s.time),
            intensity: s.intensity,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    finish(header, w)
}

fn finish(header: &FixtureHeader, w: csv::Writer<Vec<u8>>) -> Result<String> {
    let body = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(header.render() + &body)
}

// Celsius values are stored with a fixed number of decimals so a load and
// save cycle reproduces the file byte for byte.
fn round(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// A directory of fixture files that doubles as the client cache.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    pub dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn entries(&self) -> Result<Vec<(PathBuf, String)>> {
        let mut out = Vec::new();
        let Ok(rd) = fs::read_dir(&self.dir) else {
            return Ok(out);
        };
        for e in rd {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.clone(), fs::read_to_string(&p)?));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Weather samples for the window from the first fixture recorded at
    /// this location that covers it.
    pub fn weather(&self, lat: f64, lon: f64, window: &Window) -> Result<Option<Vec<WeatherSample>>> {
        let mut partial = None;
        for (path, text) in self.entries()? {
            let h = FixtureHeader::parse(&text);
            if h.kind() != Some("weather") || !h.location().is_some_and(|(a, b)| near(a, lat) && near(b, lon)) {
                continue;
            }
            let (_, samples) = read_weather_csv(&text).map_err(|e| annotate(&path, e))?;
            match super::restrict_weather(&samples, window) {
                Ok(s) => return Ok(Some(s)),
                Err(e) => partial = Some(e),
            }
        }
        partial.map_or(Ok(None), Err)
    }

    /// Carbon-intensity samples for the zone and window.
    pub fn carbon(&self, zone: &str, window: &Window) -> Result<Option<Vec<CarbonIntensitySample>>> {
        let mut partial = None;
        for (path, text) in self.entries()? {
            let h = FixtureHeader::parse(&text);
            if h.kind() != Some("carbon-intensity") || h.get("zone") != Some(zone) {
                continue;
            }
            let (_, samples) = read_carbon_csv(&text).map_err(|e| annotate(&path, e))?;
            match super::restrict_carbon(&samples, window) {
                Ok(s) => return Ok(Some(s)),
                Err(e) => partial = Some(e),
            }
        }
        partial.map_or(Ok(None), Err)
    }

    /// Writes a new fixture file; existing files are never replaced.
    pub fn put(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                f.write_all(contents.as_bytes())?;
                Ok(path)
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(path),
            Err(e) => Err(e.into()),
        }
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-3
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    }
}
