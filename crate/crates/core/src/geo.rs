//! NMEA GGA parsing and offline reverse geocoding.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// The world-cities table shipped with the crate.
pub const DEFAULT_CITY_CSV: &str = include_str!("../data/cities.csv");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("checksum mismatch: sentence says {stated:02X}, computed {computed:02X}")]
    Integrity { stated: u8, computed: u8 },
    #[error("receiver reports no fix")]
    NoFix,
    #[error("city table: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub utc_time: NaiveTime,
    pub fix_quality: u8,
    pub satellites: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub city: String,
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityEntry {
    pub city: String,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
}

/// XOR of every byte between `$` and `*`.
pub fn nmea_checksum(body: &str) -> u8 {
    body.bytes().fold(0, |acc, b| acc ^ b)
}

/// Converts an NMEA `ddmm.mmmm` / `dddmm.mmmm` field to signed decimal degrees.
pub fn ddmm_to_degrees(field: &str, hemisphere: char) -> Result<f64, GeoError> {
    let bad = || GeoError::Parse(format!("malformed coordinate {field:?}"));
    let (int_part, frac_part) = field.split_once('.').ok_or_else(bad)?;
    let deg_digits = match (int_part.len(), hemisphere) {
        (4, 'N' | 'S') => 2,
        (5, 'E' | 'W') => 3,
        (_, 'N' | 'S' | 'E' | 'W') => return Err(bad()),
        _ => return Err(GeoError::Parse(format!("bad hemisphere {hemisphere:?}"))),
    };
    if frac_part.is_empty()
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let degrees: f64 = int_part[..deg_digits].parse().map_err(|_| bad())?;
    let minutes: f64 = field[deg_digits..].parse().map_err(|_| bad())?;
    if minutes >= 60.0 {
        return Err(bad());
    }
    let value = degrees + minutes / 60.0;
    let limit = if deg_digits == 2 { 90.0 } else { 180.0 };
    if value > limit {
        return Err(bad());
    }
    Ok(match hemisphere {
        'S' | 'W' => -value,
        _ => value,
    })
}

fn parse_utc(field: &str) -> Result<NaiveTime, GeoError> {
    let bad = || GeoError::Parse(format!("malformed time {field:?}"));
    if field.len() < 6 || !field[..6].bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let h: u32 = field[0..2].parse().map_err(|_| bad())?;
    let m: u32 = field[2..4].parse().map_err(|_| bad())?;
    let s: u32 = field[4..6].parse().map_err(|_| bad())?;
    let millis = match field.get(6..) {
        None | Some("") => 0,
        Some(frac) => {
            let frac = frac.strip_prefix('.').ok_or_else(bad)?;
            let secs: f64 = format!("0.{frac}").parse().map_err(|_| bad())?;
            (secs * 1000.0).round() as u32
        }
    };
    NaiveTime::from_hms_milli_opt(h, m, s, millis.min(999)).ok_or_else(bad)
}

/// Parses a `$xxGGA` sentence. The checksum is verified before any field is read.
pub fn parse_gga(line: &str) -> Result<GeoFix, GeoError> {
    let line = line.trim_end();
    let rest = line
        .strip_prefix('$')
        .ok_or_else(|| GeoError::Parse("sentence must start with '$'".into()))?;
    let (body, stated) = rest
        .rsplit_once('*')
        .ok_or_else(|| GeoError::Parse("missing '*' checksum delimiter".into()))?;
    if stated.len() != 2 {
        return Err(GeoError::Parse(format!("checksum must be two hex digits, got {stated:?}")));
    }
    let stated = u8::from_str_radix(stated, 16)
        .map_err(|_| GeoError::Parse(format!("checksum {stated:?} is not hex")))?;
    let computed = nmea_checksum(body);
    if stated != computed {
        return Err(GeoError::Integrity { stated, computed });
    }

    let fields: Vec<&str> = body.split(',').collect();
    if fields.len() < 8 {
        return Err(GeoError::Parse(format!("GGA needs at least 8 fields, got {}", fields.len())));
    }
    if fields[0].len() != 5 || !fields[0].ends_with("GGA") {
        return Err(GeoError::Parse(format!("not a GGA sentence: {}", fields[0])));
    }
    let fix_quality: u8 = fields[6]
        .parse()
        .map_err(|_| GeoError::Parse(format!("bad fix quality {:?}", fields[6])))?;
    if fix_quality == 0 {
        return Err(GeoError::NoFix);
    }
    if fix_quality > 8 {
        return Err(GeoError::Parse(format!("fix quality {fix_quality} out of range")));
    }
    let hemi = |f: &str| -> Result<char, GeoError> {
        let mut chars = f.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(GeoError::Parse(format!("bad hemisphere field {f:?}"))),
        }
    };
    let lat_hemi = hemi(fields[3])?;
    let lon_hemi = hemi(fields[5])?;
    if !matches!(lat_hemi, 'N' | 'S') || !matches!(lon_hemi, 'E' | 'W') {
        return Err(GeoError::Parse("hemisphere letters out of place".into()));
    }
    Ok(GeoFix {
        latitude_deg: ddmm_to_degrees(fields[2], lat_hemi)?,
        longitude_deg: ddmm_to_degrees(fields[4], lon_hemi)?,
        utc_time: parse_utc(fields[1])?,
        fix_quality,
        satellites: fields[7]
            .parse()
            .map_err(|_| GeoError::Parse(format!("bad satellite count {:?}", fields[7])))?,
    })
}

fn degrees_to_ddmm(value: f64, deg_width: usize) -> String {
    let abs = value.abs();
    let mut deg = abs.trunc() as u32;
    let mut minutes = (abs - f64::from(deg)) * 60.0;
    // Rounding to 4 places can carry into the next degree.
    if (minutes * 10_000.0).round() >= 600_000.0 {
        deg += 1;
        minutes = 0.0;
    }
    format!("{deg:0deg_width$}{minutes:07.4}")
}

/// Renders a fix as a checksummed GGA sentence (minutes to 4 decimals).
pub fn render_gga(fix: &GeoFix) -> String {
    let t = fix.utc_time;
    let centis = t.nanosecond() / 10_000_000;
    let mut body = String::new();
    let _ = write!(
        body,
        "GPGGA,{:02}{:02}{:02}.{:02},{},{},{},{},{},{:02},0.9,545.4,M,46.9,M,,",
        t.hour(),
        t.minute(),
        t.second(),
        centis.min(99),
        degrees_to_ddmm(fix.latitude_deg, 2),
        if fix.latitude_deg < 0.0 { 'S' } else { 'N' },
        degrees_to_ddmm(fix.longitude_deg, 3),
        if fix.longitude_deg < 0.0 { 'W' } else { 'E' },
        fix.fix_quality,
        fix.satellites,
    );
    format!("${body}*{:02X}", nmea_checksum(&body))
}

/// Great-circle distance in meters.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

fn unit_vector(lat: f64, lon: f64) -> [f64; 3] {
    let (lat, lon) = (lat.to_radians(), lon.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Immutable nearest-city lookup table.
#[derive(Debug, Clone)]
pub struct CityTable {
    entries: Vec<CityEntry>,
    // Unit vectors; squared chord length orders entries the same way as arc length.
    points: Vec<[f64; 3]>,
}

impl CityTable {
    pub fn new(entries: Vec<CityEntry>) -> Result<Self, GeoError> {
        if entries.is_empty() {
            return Err(GeoError::Config("table is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if e.city.is_empty() || e.country.is_empty() {
                return Err(GeoError::Config(format!("blank name in row {e:?}")));
            }
            if !(-90.0..=90.0).contains(&e.lat) || !(-180.0..=180.0).contains(&e.lon) {
                return Err(GeoError::Config(format!("{}, {} has out-of-range coordinates", e.city, e.country)));
            }
            if !seen.insert((e.city.as_str(), e.country.as_str())) {
                return Err(GeoError::Config(format!("duplicate entry {}, {}", e.city, e.country)));
            }
        }
        let points = entries.iter().map(|e| unit_vector(e.lat, e.lon)).collect();
        Ok(Self { entries, points })
    }

    pub fn from_csv_str(text: &str) -> Result<Self, GeoError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| GeoError::Config(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["city", "country", "lat", "lon"] {
            return Err(GeoError::Config("header must be city,country,lat,lon".into()));
        }
        let entries = reader
            .deserialize()
            .collect::<Result<Vec<CityEntry>, _>>()
            .map_err(|e| GeoError::Config(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeoError::Config(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn builtin() -> Self {
        Self::from_csv_str(DEFAULT_CITY_CSV).expect("bundled city table is valid")
    }

    pub fn entries(&self) -> &[CityEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the nearest entry; the first of equally near entries wins.
    pub fn nearest_index(&self, lat: f64, lon: f64) -> usize {
        let q = unit_vector(lat, lon);
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Pluggable place resolution; the offline table is the default.
pub trait Geocoder: Send + Sync {
    fn reverse(&self, fix: &GeoFix) -> Result<Place, GeoError>;
}

impl Geocoder for CityTable {
    fn reverse(&self, fix: &GeoFix) -> Result<Place, GeoError> {
        reverse_geocode(fix, self)
    }
}

pub fn reverse_geocode(fix: &GeoFix, table: &CityTable) -> Result<Place, GeoError> {
    if table.is_empty() {
        return Err(GeoError::Config("table is empty".into()));
    }
    let e = &table.entries[table.nearest_index(fix.latitude_deg, fix.longitude_deg)];
    Ok(Place {
        city: e.city.clone(),
        country: e.country.clone(),
    })
}
