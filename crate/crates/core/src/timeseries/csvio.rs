use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{HvacMode, Trace, TraceColumns};
use crate::{Error, Result, STEP_SECONDS};

pub const TRACE_HEADER: [&str; 8] = [
    "timestamp",
    "t_in",
    "t_out",
    "t_setheat",
    "t_setcool",
    "hvac_mode",
    "motion",
    "humidity",
];

fn parse_opt<T, F>(raw: &str, line: usize, name: &str, parse: F) -> Result<Option<T>>
where
    F: FnOnce(&str) -> std::result::Result<T, String>,
{
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    parse(raw).map(Some).map_err(|e| Error::Parse {
        line,
        message: format!("{name}: {e}"),
    })
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not a decimal number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_motion(s: &str) -> std::result::Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("`{other}` is not 0 or 1")),
    }
}

fn parse_humidity(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} outside [0, 1]"))
    }
}

/// Reads a trace CSV and places it on a uniform 5-minute grid anchored at
/// the first timestamp. Grid points without a row become missing samples.
pub fn ingest_trace<R: Read>(source: R, home_id: &str) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let step = STEP_SECONDS as i64;
    let mut columns = TraceColumns::default();
    let mut start: Option<DateTime<Utc>> = None;
    let mut last: Option<DateTime<Utc>> = None;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != TRACE_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 fields, found {}", record.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(record[0].trim())
            .map_err(|e| Error::Parse {
                line,
                message: format!("timestamp: {e}"),
            })?
            .with_timezone(&Utc);

        if let Some(prev) = last {
            if ts == prev {
                return Err(Error::Duplicate { line });
            }
            if ts < prev {
                return Err(Error::Ordering { line });
            }
        }
        let origin = *start.get_or_insert(ts);
        let offset = (ts - origin).num_seconds();
        if offset % step != 0 || (ts - origin).subsec_nanos() != 0 {
            return Err(Error::Parse {
                line,
                message: "timestamp is off the 5-minute grid".into(),
            });
        }
        let index = (offset / step) as usize;
        while columns.t_in.len() < index {
            columns.push_missing();
        }

        columns
            .t_in
            .push(parse_opt(&record[1], line, "t_in", parse_f64)?);
        columns
            .t_out
            .push(parse_opt(&record[2], line, "t_out", parse_f64)?);
        columns
            .t_setheat
            .push(parse_opt(&record[3], line, "t_setheat", parse_f64)?);
        columns
            .t_setcool
            .push(parse_opt(&record[4], line, "t_setcool", parse_f64)?);
        columns
            .hvac_mode
            .push(parse_opt(&record[5], line, "hvac_mode", |s| {
                s.parse::<HvacMode>()
            })?);
        columns
            .motion
            .push(parse_opt(&record[6], line, "motion", parse_motion)?);
        columns
            .humidity
            .push(parse_opt(&record[7], line, "humidity", parse_humidity)?);
        last = Some(ts);
    }

    let start = start.ok_or(Error::EmptyInput)?;
    Trace::new(home_id, start, columns)
}

pub fn read_trace_file(path: impl AsRef<Path>, home_id: &str) -> Result<Trace> {
    let file = std::fs::File::open(path)?;
    ingest_trace(std::io::BufReader::new(file), home_id)
}

fn fmt_opt(v: Option<f64>) -> String {
    // Debug formatting is the shortest representation that parses back to
    // the same f64.
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes a trace in the ingest schema; missing samples become empty fields.
pub fn write_trace<W: Write>(trace: &Trace, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRACE_HEADER)?;
    let c = trace.columns();
    for i in 0..trace.len() {
        w.write_record([
            trace
                .timestamp(i)
                .to_rfc3339_opts(SecondsFormat::Secs, true),
            fmt_opt(c.t_in[i]),
            fmt_opt(c.t_out[i]),
            fmt_opt(c.t_setheat[i]),
            fmt_opt(c.t_setcool[i]),
            c.hvac_mode[i]
                .map(|m| m.as_str().to_string())
                .unwrap_or_default(),
            c.motion[i]
                .map(|m| if m { "1" } else { "0" }.to_string())
                .unwrap_or_default(),
            fmt_opt(c.humidity[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "timestamp,t_in,t_out,t_setheat,t_setcool,hvac_mode,motion,humidity\n";

    fn csv(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn three_complete_rows() {
        let data = csv(&[
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,heat,0,0.41",
            "2019-01-01T00:05:00Z,68.2,20.4,68,75,heat,1,0.41",
            "2019-01-01T00:10:00Z,68.3,20.1,68,75,heat,0,0.42",
        ]);
        let t = ingest_trace(data.as_bytes(), "a").unwrap();
        assert_eq!(t.len(), 3);
        assert!(!t.has_missing());
        assert_eq!(t.columns().hvac_mode[0], Some(HvacMode::Heat));
        assert_eq!(t.columns().t_in[0].unwrap().to_bits(), 68.0f64.to_bits());
    }

    #[test]
    fn grid_gap_is_marked_missing() {
        let data = csv(&[
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,heat,0,0.41",
            "2019-01-01T00:10:00Z,68.3,20.1,68,75,heat,0,0.42",
        ]);
        let t = ingest_trace(data.as_bytes(), "a").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.columns().t_in[1], None);
        assert_eq!(t.columns().hvac_mode[1], None);
        assert!(t.has_missing());
    }

    #[test]
    fn rejects_duplicates_and_disorder() {
        let dup = csv(&[
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,heat,0,0.41",
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,heat,0,0.41",
        ]);
        assert!(matches!(
            ingest_trace(dup.as_bytes(), "a"),
            Err(Error::Duplicate { line: 3 })
        ));
        let back = csv(&[
            "2019-01-01T00:10:00Z,68.0,20.5,68,75,heat,0,0.41",
            "2019-01-01T00:05:00Z,68.0,20.5,68,75,heat,0,0.41",
        ]);
        assert!(matches!(
            ingest_trace(back.as_bytes(), "a"),
            Err(Error::Ordering { line: 3 })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let bad = csv(&[
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,heat,0,0.41",
            "2019-01-01T00:05:00Z,warm,20.5,68,75,heat,0,0.41",
        ]);
        match ingest_trace(bad.as_bytes(), "a") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let mode = csv(&[
            "2019-01-01T00:00:00Z,68.0,20.5,68,75,fan,0,0.41",
            "2019-01-01T00:05:00Z,68,1,1,1,off,0,0",
        ]);
        assert!(matches!(
            ingest_trace(mode.as_bytes(), "a"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_wrong_header() {
        let data = "time,t_in\n2019-01-01T00:00:00Z,1\n";
        assert!(matches!(
            ingest_trace(data.as_bytes(), "a"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_fields_are_missing() {
        let data = csv(&[
            "2019-01-01T00:00:00Z,68.0,,68,75,,,",
            "2019-01-01T00:05:00Z,68.2,20.4,68,75,heat,1,0.41",
        ]);
        let t = ingest_trace(data.as_bytes(), "a").unwrap();
        let c = t.columns();
        assert_eq!(
            (c.t_out[0], c.hvac_mode[0], c.motion[0], c.humidity[0]),
            (None, None, None, None)
        );
    }

    proptest! {
        #[test]
        fn write_then_ingest_is_bit_exact(
            vals in proptest::collection::vec((-40.0f64..110.0, proptest::option::of(-40.0f64..110.0), 0.0f64..=1.0, any::<bool>()), 2..40)
        ) {
            let n = vals.len();
            let columns = TraceColumns {
                t_in: vals.iter().map(|v| Some(v.0)).collect(),
                t_out: vals.iter().map(|v| v.1).collect(),
                t_setheat: vec![Some(67.5); n],
                t_setcool: vec![Some(74.25); n],
                hvac_mode: vals.iter().map(|v| Some(if v.3 { HvacMode::Auto } else { HvacMode::Off })).collect(),
                motion: vals.iter().map(|v| Some(v.3)).collect(),
                humidity: vals.iter().map(|v| Some(v.2)).collect(),
            };
            let trace = Trace::new("p", crate::timeseries::test_support::start(), columns).unwrap();
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).unwrap();
            let back = ingest_trace(buf.as_slice(), "p").unwrap();
            prop_assert_eq!(back.len(), trace.len());
            for (a, b) in back.columns().t_in.iter().zip(&trace.columns().t_in) {
                prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
            for (a, b) in back.columns().t_out.iter().zip(&trace.columns().t_out) {
                prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
            prop_assert_eq!(back, trace);
        }
    }
}
