//! ADS-B track ingest.
//!
//! Delimited text with a header row. Columns, in any order:
//!
//! | column      | unit                | required |
//! |-------------|---------------------|----------|
//! | `timestamp` | s (any fixed epoch) | yes      |
//! | `flight_id` | –                   | yes      |
//! | `lat`       | deg                 | yes      |
//! | `lon`       | deg                 | yes      |
//! | `alt_m`     | m, WGS-84 ellipsoid | yes      |
//! | `gs_mps`    | m/s                 | no       |
//!
//! One flight per file. Rows with out-of-range values are dropped and counted; the rest are
//! stably sorted by time and repeated timestamps keep their first row.

use std::io::Write;

use serde::Serialize;

use super::TuningError;

const COLUMNS: [&str; 6] = ["timestamp", "flight_id", "lat", "lon", "alt_m", "gs_mps"];
const ALT_RANGE_M: (f64, f64) = (-1_000.0, 30_000.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdsbSample {
    pub t: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub ground_speed: Option<f64>,
}

impl AdsbSample {
    fn in_range(&self) -> bool {
        self.t.is_finite()
            && (-90.0..=90.0).contains(&self.latitude)
            && (-180.0..=180.0).contains(&self.longitude)
            && (ALT_RANGE_M.0..=ALT_RANGE_M.1).contains(&self.altitude)
            && self.ground_speed.map_or(true, |g| g.is_finite() && g >= 0.0)
    }
}

/// A validated track: non-empty, timestamps strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct AdsbTrack {
    flight_id: String,
    samples: Vec<AdsbSample>,
}

impl AdsbTrack {
    /// Sorts stably by time and drops repeated timestamps (first wins).
    pub fn new(flight_id: impl Into<String>, samples: Vec<AdsbSample>) -> Result<Self, TuningError> {
        let flight_id = flight_id.into();
        let (track, _) = Self::normalize(flight_id, samples)?;
        Ok(track)
    }

    fn normalize(
        flight_id: String,
        mut samples: Vec<AdsbSample>,
    ) -> Result<(Self, (bool, usize)), TuningError> {
        if samples.is_empty() {
            return Err(TuningError::EmptyTrack(flight_id));
        }
        let reordered = samples.windows(2).any(|w| w[1].t < w[0].t);
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let before = samples.len();
        samples.dedup_by(|b, a| a.t == b.t);
        let duplicates = before - samples.len();
        Ok((Self { flight_id, samples }, (reordered, duplicates)))
    }

    pub fn flight_id(&self) -> &str {
        &self.flight_id
    }

    pub fn samples(&self) -> &[AdsbSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// What ingest did to the raw rows.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub flight_id: String,
    pub rows: usize,
    pub dropped_out_of_range: usize,
    pub duplicates_removed: usize,
    /// Rows arrived out of time order and were sorted.
    pub reordered: bool,
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or("").trim()
}

/// Parses one flight's track.
pub fn parse_adsb(raw: &str) -> Result<(AdsbTrack, IngestReport), TuningError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| TuningError::Malformed { line: 1, msg: e.to_string() })?
        .clone();
    let mut index = [None; 6];
    for (i, h) in headers.iter().enumerate() {
        match COLUMNS.iter().position(|c| *c == h) {
            Some(c) if index[c].is_none() => index[c] = Some(i),
            Some(_) => return Err(TuningError::Malformed { line: 1, msg: format!("duplicate column {h:?}") }),
            None => return Err(TuningError::UnknownColumn(h.to_string())),
        }
    }
    let col = |c: usize| index[c].ok_or(TuningError::MissingColumn(COLUMNS[c]));
    let (it, iid, ilat, ilon, ialt) = (col(0)?, col(1)?, col(2)?, col(3)?, col(4)?);
    let igs = index[5];

    let mut flight_id: Option<String> = None;
    let mut samples = Vec::new();
    let mut rows = 0;
    let mut dropped = 0;
    for (n, record) in reader.records().enumerate() {
        let line = n + 2;
        let record = record.map_err(|e| TuningError::Malformed { line, msg: e.to_string() })?;
        rows += 1;
        let num = |idx: usize, name: &str| -> Result<f64, TuningError> {
            field(&record, idx).parse::<f64>().map_err(|_| TuningError::Malformed {
                line,
                msg: format!("{name} {:?} is not a number", field(&record, idx)),
            })
        };
        let id = field(&record, iid);
        match &flight_id {
            None => flight_id = Some(id.to_string()),
            Some(f) if f != id => {
                return Err(TuningError::MixedFlights { first: f.clone(), other: id.to_string() })
            }
            Some(_) => {}
        }
        let ground_speed = match igs.map(|i| field(&record, i)) {
            None | Some("") => None,
            Some(_) => Some(num(igs.unwrap(), "gs_mps")?),
        };
        let s = AdsbSample {
            t: num(it, "timestamp")?,
            latitude: num(ilat, "lat")?,
            longitude: num(ilon, "lon")?,
            altitude: num(ialt, "alt_m")?,
            ground_speed,
        };
        if s.in_range() {
            samples.push(s);
        } else {
            dropped += 1;
        }
    }
    let flight_id = flight_id.unwrap_or_default();
    if dropped > 0 {
        log::warn!("{flight_id}: dropped {dropped} out-of-range rows");
    }
    let (track, (reordered, duplicates)) = AdsbTrack::normalize(flight_id.clone(), samples)?;
    if reordered {
        log::warn!("{flight_id}: timestamps were out of order and have been sorted");
    }
    Ok((
        track,
        IngestReport {
            flight_id,
            rows,
            dropped_out_of_range: dropped,
            duplicates_removed: duplicates,
            reordered,
        },
    ))
}

/// Writes a track in the ingest format, ground speed included when every sample has one.
pub fn write_adsb_csv<W: Write>(track: &AdsbTrack, out: W) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    let with_gs = track.samples.iter().all(|s| s.ground_speed.is_some());
    let mut header = vec!["timestamp", "flight_id", "lat", "lon", "alt_m"];
    if with_gs {
        header.push("gs_mps");
    }
    w.write_record(&header)?;
    for s in &track.samples {
        let mut row = vec![
            format!("{:.3}", s.t),
            track.flight_id.clone(),
            format!("{:.9}", s.latitude),
            format!("{:.9}", s.longitude),
            format!("{:.3}", s.altitude),
        ];
        if with_gs {
            row.push(format!("{:.3}", s.ground_speed.unwrap_or_default()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "timestamp,flight_id,lat,lon,alt_m,gs_mps\n\
        100,N1,40.0,-105.0,1800,30\n\
        101,N1,40.0003,-105.0,1801,30\n\
        102,N1,40.0006,-105.0,1802,\n";

    #[test]
    fn well_formed_rows() {
        let (track, report) = parse_adsb(THREE).unwrap();
        assert_eq!(track.len(), 3);
        assert_eq!(track.flight_id(), "N1");
        assert_eq!(track.samples()[0].ground_speed, Some(30.0));
        assert_eq!(track.samples()[2].ground_speed, None);
        assert_eq!(report.dropped_out_of_range, 0);
        assert!(!report.reordered);
    }

    #[test]
    fn drops_out_of_range_rows() {
        let raw = format!("{THREE}103,N1,999,-105.0,1800,30\n104,N1,40.0,-200,1800,30\n");
        let (track, report) = parse_adsb(&raw).unwrap();
        assert_eq!(track.len(), 3);
        assert_eq!(report.dropped_out_of_range, 2);
        assert_eq!(report.rows, 5);
    }

    #[test]
    fn sorts_stably_and_dedups() {
        let raw = "flight_id,timestamp,lat,lon,alt_m\n\
            N1,5,40.0,-105.0,1\n\
            N1,3,40.1,-105.0,2\n\
            N1,5,40.2,-105.0,3\n\
            N1,4,40.3,-105.0,4\n";
        let (track, report) = parse_adsb(raw).unwrap();
        let t: Vec<f64> = track.samples().iter().map(|s| s.t).collect();
        assert_eq!(t, vec![3.0, 4.0, 5.0]);
        // first row with t = 5 wins
        assert_eq!(track.samples()[2].altitude, 1.0);
        assert!(report.reordered);
        assert_eq!(report.duplicates_removed, 1);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon,alt_m,squawk\n"),
            Err(TuningError::UnknownColumn(c)) if c == "squawk"
        ));
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon\n1,N1,40,-105\n"),
            Err(TuningError::MissingColumn("alt_m"))
        ));
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon,alt_m\n"),
            Err(TuningError::EmptyTrack(_))
        ));
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon,alt_m\n1,N1,999,0,0\n"),
            Err(TuningError::EmptyTrack(_))
        ));
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon,alt_m\n1,N1,0,0,0\n2,N2,0,0,0\n"),
            Err(TuningError::MixedFlights { .. })
        ));
        assert!(matches!(
            parse_adsb("timestamp,flight_id,lat,lon,alt_m\nx,N1,0,0,0\n"),
            Err(TuningError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_parse() {
        let (track, _) = parse_adsb(THREE).unwrap();
        let mut buf = Vec::new();
        write_adsb_csv(&track, &mut buf).unwrap();
        let (again, _) = parse_adsb(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again.len(), 3);
        assert_eq!(again.samples()[1].latitude, 40.0003);
    }
}
