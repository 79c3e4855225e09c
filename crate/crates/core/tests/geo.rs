use chrono::NaiveTime;
use ets_core::geo::{
    ddmm_to_degrees, haversine_m, nmea_checksum, parse_gga, render_gga, reverse_geocode, CityTable, GeoError, GeoFix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fix(lat: f64, lon: f64) -> GeoFix {
    GeoFix {
        latitude_deg: lat,
        longitude_deg: lon,
        utc_time: NaiveTime::from_hms_opt(12, 35, 19).unwrap(),
        fix_quality: 1,
        satellites: 8,
    }
}

#[test]
fn ddmm_examples() {
    assert!((ddmm_to_degrees("4807.038", 'N').unwrap() - 48.1173).abs() < 1e-6);
    assert!((ddmm_to_degrees("01131.000", 'E').unwrap() - 11.516_666_7).abs() < 1e-6);
    assert!((ddmm_to_degrees("3352.128", 'S').unwrap() + 33.8688).abs() < 1e-6);
    assert!(ddmm_to_degrees("4865.000", 'N').is_err());
}

#[test]
fn pole_to_pole_and_zero_distance() {
    let d = haversine_m((90.0, 0.0), (-90.0, 0.0));
    assert!((d - 20_015_086.8).abs() < 1.0, "{d}");
    assert_eq!(haversine_m((48.1, 11.5), (48.1, 11.5)), 0.0);
    // Equator quarter turn = pi/2 R.
    let q = haversine_m((0.0, 0.0), (0.0, 90.0));
    assert!((q - 10_007_543.4).abs() < 1.0, "{q}");
}

#[test]
fn munich_sentence() {
    let line = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47";
    let f = parse_gga(line).unwrap();
    assert!((f.latitude_deg - 48.1173).abs() < 1e-6);
    assert_eq!(f.satellites, 8);
    let bad = line.replace("*47", "*48");
    assert!(matches!(parse_gga(&bad), Err(GeoError::Integrity { stated: 0x48, computed: 0x47 })));
    let nofix_body = "GPGGA,123519,4807.038,N,01131.000,E,0,00,,,M,,M,,";
    let nofix = format!("${nofix_body}*{:02X}", nmea_checksum(nofix_body));
    assert!(matches!(parse_gga(&nofix), Err(GeoError::NoFix)));
}

fn brute_force(table: &CityTable, lat: f64, lon: f64) -> &str {
    let mut best = (f64::INFINITY, "");
    for e in table.entries() {
        let d = haversine_m((lat, lon), (e.lat, e.lon));
        if d < best.0 {
            best = (d, &e.city);
        }
    }
    best.1
}

#[test]
fn reverse_geocode_matches_brute_force_on_1000_fixes() {
    let table = CityTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let lat = rng.random_range(-90.0..=90.0);
        let lon = rng.random_range(-180.0..180.0);
        let place = reverse_geocode(&fix(lat, lon), &table).unwrap();
        assert_eq!(place.city, brute_force(&table, lat, lon), "({lat}, {lon})");
    }
}

#[test]
fn city_centres_resolve_to_themselves() {
    let table = CityTable::builtin();
    assert!(table.len() >= 200);
    for e in table.entries() {
        let p = reverse_geocode(&fix(e.lat, e.lon), &table).unwrap();
        assert_eq!((p.city.as_str(), p.country.as_str()), (e.city.as_str(), e.country.as_str()));
    }
}

fn coord() -> impl Strategy<Value = (f64, f64)> {
    (-89.9..89.9f64, -179.9..179.9f64)
}

proptest! {
    #[test]
    fn render_parse_round_trip(
        (lat, lon) in coord(),
        h in 0u32..24, m in 0u32..60, s in 0u32..60,
        q in 1u8..=8, sats in 0u32..=24,
    ) {
        let f = GeoFix {
            latitude_deg: lat,
            longitude_deg: lon,
            utc_time: NaiveTime::from_hms_opt(h, m, s).unwrap(),
            fix_quality: q,
            satellites: sats,
        };
        let back = parse_gga(&render_gga(&f)).unwrap();
        // Four decimal minutes: at most 0.00005' = 8.3e-7 degrees.
        prop_assert!((back.latitude_deg - lat).abs() <= 1e-6);
        prop_assert!((back.longitude_deg - lon).abs() <= 1e-6);
        prop_assert_eq!(back.utc_time, f.utc_time);
        prop_assert_eq!((back.fix_quality, back.satellites), (q, sats));
    }

    #[test]
    fn haversine_symmetric_and_triangle(a in coord(), b in coord(), c in coord()) {
        let ab = haversine_m(a, b);
        prop_assert!((ab - haversine_m(b, a)).abs() < 1e-6);
        prop_assert!((0.0..=20_015_087.0).contains(&ab));
        prop_assert!(ab <= haversine_m(a, c) + haversine_m(c, b) + 1e-6);
    }
}
