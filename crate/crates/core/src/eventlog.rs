//! Event log ingestion: CSV parsing, case grouping, inter-event durations,
//! and trace-level train/test/validation splitting.

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp '{value}' with format '{format}'")]
    UnparseableTimestamp {
        row: usize,
        value: String,
        format: String,
    },
    #[error("row {row}: {0}", .source)]
    MalformedRow {
        row: usize,
        #[source]
        source: csv::Error,
    },
    #[error("event log contains no events")]
    EmptyLog,
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
}

/// Maps the log's semantic columns onto CSV header names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            case: "CaseID".into(),
            activity: "ActivityID".into(),
            timestamp: "CompleteTimestamp".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: NaiveDateTime,
    /// days elapsed since the previous event of the same case; 0 for the first
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.activity.as_str()).collect()
    }
}

/// Sum of inter-event durations, in days.
pub fn cycle_time(trace: &Trace) -> f64 {
    trace.events.iter().map(|e| e.duration).sum()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
}

impl EventLog {
    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    /// Distinct activity labels across all events, sorted.
    pub fn activity_universe(&self) -> BTreeSet<String> {
        self.traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.activity.clone()))
            .collect()
    }

    pub fn max_trace_len(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }

    pub fn mean_cycle_time(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(cycle_time).sum::<f64>() / self.traces.len() as f64
    }
}

/// Builds an event log from (case, activity, timestamp) rows: groups by case
/// in first-appearance order, sorts each case by timestamp (stable, so file
/// order wins on ties) and computes durations in days.
pub fn from_rows(rows: Vec<(String, String, NaiveDateTime)>) -> Result<EventLog, EventLogError> {
    if rows.is_empty() {
        return Err(EventLogError::EmptyLog);
    }
    let mut case_order: Vec<String> = Vec::new();
    let mut grouped: std::collections::HashMap<String, Vec<(String, NaiveDateTime)>> =
        std::collections::HashMap::new();
    for (case, activity, ts) in rows {
        grouped
            .entry(case.clone())
            .or_insert_with(|| {
                case_order.push(case.clone());
                Vec::new()
            })
            .push((activity, ts));
    }
    let mut traces = Vec::with_capacity(case_order.len());
    for case_id in case_order {
        let mut events = grouped.remove(&case_id).unwrap();
        events.sort_by_key(|(_, ts)| *ts);
        let mut prev_ts: Option<NaiveDateTime> = None;
        let events = events
            .into_iter()
            .map(|(activity, timestamp)| {
                let duration = match prev_ts {
                    None => 0.0,
                    Some(prev) => {
                        (timestamp - prev).num_milliseconds() as f64 / (SECONDS_PER_DAY * 1000.0)
                    }
                };
                prev_ts = Some(timestamp);
                Event {
                    case_id: case_id.clone(),
                    activity,
                    timestamp,
                    duration,
                }
            })
            .collect();
        traces.push(Trace { case_id, events });
    }
    Ok(EventLog { traces })
}

pub fn parse_csv(
    path: &Path,
    column_map: &ColumnMap,
    timestamp_format: &str,
) -> Result<EventLog, EventLogError> {
    let file = std::fs::File::open(path).map_err(|source| EventLogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv_reader(file, column_map, timestamp_format)
}

pub fn parse_csv_reader<R: std::io::Read>(
    reader: R,
    column_map: &ColumnMap,
    timestamp_format: &str,
) -> Result<EventLog, EventLogError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|source| EventLogError::MalformedRow { row: 1, source })?
        .clone();
    let col = |name: &str| -> Result<usize, EventLogError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EventLogError::MissingColumn(name.to_string()))
    };
    let case_idx = col(&column_map.case)?;
    let activity_idx = col(&column_map.activity)?;
    let ts_idx = col(&column_map.timestamp)?;

    let mut rows = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let row = i + 2; // 1-based, after header
        let record = record.map_err(|source| EventLogError::MalformedRow { row, source })?;
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let timestamp = NaiveDateTime::parse_from_str(raw_ts, timestamp_format).map_err(|_| {
            EventLogError::UnparseableTimestamp {
                row,
                value: raw_ts.to_string(),
                format: timestamp_format.to_string(),
            }
        })?;
        rows.push((
            record.get(case_idx).unwrap_or("").to_string(),
            record.get(activity_idx).unwrap_or("").to_string(),
            timestamp,
        ));
    }
    from_rows(rows)
}

/// Writes the log back out in the same CSV schema it is parsed from.
pub fn write_csv<W: Write>(
    log: &EventLog,
    writer: W,
    column_map: &ColumnMap,
    timestamp_format: &str,
) -> Result<(), EventLogError> {
    let mut out = csv::Writer::from_writer(writer);
    let io_err = |source: csv::Error| EventLogError::MalformedRow { row: 0, source };
    out.write_record([&column_map.case, &column_map.activity, &column_map.timestamp])
        .map_err(io_err)?;
    for trace in &log.traces {
        for event in &trace.events {
            out.write_record([
                event.case_id.as_str(),
                event.activity.as_str(),
                &event.timestamp.format(timestamp_format).to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(|source| EventLogError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Trace-level shuffle-and-partition. Sizes are floor(n * ratio) with the
/// remainder assigned to train, so no case leaks across partitions and the
/// result is deterministic for a fixed seed.
pub fn split_log(
    log: &EventLog,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(EventLog, EventLog, EventLog), EventLogError> {
    let (train_r, test_r, val_r) = ratios;
    let sum = train_r + test_r + val_r;
    if train_r <= 0.0 || test_r <= 0.0 || val_r <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(EventLogError::InvalidRatios([train_r, test_r, val_r]));
    }
    let n = log.traces.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let n_test = (n as f64 * test_r).floor() as usize;
    let n_val = (n as f64 * val_r).floor() as usize;
    let n_train = n - n_test - n_val;

    let pick = |slice: &[usize]| EventLog {
        traces: slice.iter().map(|&i| log.traces[i].clone()).collect(),
    };
    let train = pick(&indices[..n_train]);
    let test = pick(&indices[n_train..n_train + n_test]);
    let val = pick(&indices[n_train + n_test..]);
    Ok((train, test, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(day: u32, hour: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, day)
            .unwrap()
            .and_hms_opt(hour, 0, 0)
            .unwrap()
    }

    #[test]
    fn durations_from_timestamps() {
        let log = from_rows(vec![
            ("c1".into(), "a".into(), ts(1, 0)),
            ("c1".into(), "b".into(), ts(2, 0)),
            ("c1".into(), "c".into(), ts(4, 0)),
        ])
        .unwrap();
        assert_eq!(log.traces.len(), 1);
        let durations: Vec<f64> = log.traces[0].events.iter().map(|e| e.duration).collect();
        assert_eq!(durations, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn interleaved_cases_are_grouped_and_ordered() {
        // 6-row fixture, sorted and grouped by hand: c1 = a(d1) c(d3) e(d5),
        // c2 = b(d2) d(d4) f(d6)
        let log = from_rows(vec![
            ("c1".into(), "a".into(), ts(1, 0)),
            ("c2".into(), "b".into(), ts(2, 0)),
            ("c1".into(), "c".into(), ts(3, 0)),
            ("c2".into(), "d".into(), ts(4, 0)),
            ("c2".into(), "f".into(), ts(6, 0)),
            ("c1".into(), "e".into(), ts(5, 0)),
        ])
        .unwrap();
        assert_eq!(log.traces.len(), 2);
        assert_eq!(log.traces[0].labels(), ["a", "c", "e"]);
        assert_eq!(log.traces[1].labels(), ["b", "d", "f"]);
        for trace in &log.traces {
            assert_eq!(trace.events[0].duration, 0.0);
            for pair in trace.events.windows(2) {
                assert!(pair[0].timestamp <= pair[1].timestamp);
            }
        }
    }

    #[test]
    fn timestamp_ties_preserve_file_order() {
        let log = from_rows(vec![
            ("c".into(), "x".into(), ts(1, 0)),
            ("c".into(), "y".into(), ts(1, 0)),
            ("c".into(), "z".into(), ts(1, 0)),
        ])
        .unwrap();
        assert_eq!(log.traces[0].labels(), ["x", "y", "z"]);
    }

    #[test]
    fn cycle_time_matches_timestamp_span() {
        let log = from_rows(vec![
            ("c".into(), "a".into(), ts(1, 0)),
            ("c".into(), "b".into(), ts(3, 12)),
        ])
        .unwrap();
        let trace = &log.traces[0];
        let span_days = (trace.events.last().unwrap().timestamp - trace.events[0].timestamp)
            .num_seconds() as f64
            / SECONDS_PER_DAY;
        assert!((cycle_time(trace) - span_days).abs() < 1.0 / SECONDS_PER_DAY);
        assert!((cycle_time(trace) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn single_event_trace_has_zero_cycle_time() {
        let log = from_rows(vec![("c".into(), "a".into(), ts(1, 0))]).unwrap();
        assert_eq!(cycle_time(&log.traces[0]), 0.0);
    }

    #[test]
    fn parse_csv_round_trip() {
        let csv_text = "\
CaseID,ActivityID,CompleteTimestamp
c1,a,2020-01-01 08:00:00
c1,b,2020-01-02 08:00:00
c2,a,2020-01-01 09:30:00
c2,c,2020-01-03 09:30:00
";
        let map = ColumnMap::default();
        let log = parse_csv_reader(csv_text.as_bytes(), &map, DEFAULT_TIMESTAMP_FORMAT).unwrap();
        assert_eq!(log.traces.len(), 2);
        assert_eq!(log.n_events(), 4);
        assert_eq!(
            log.activity_universe().into_iter().collect::<Vec<_>>(),
            ["a", "b", "c"]
        );

        let mut buf = Vec::new();
        write_csv(&log, &mut buf, &map, DEFAULT_TIMESTAMP_FORMAT).unwrap();
        let reparsed = parse_csv_reader(&buf[..], &map, DEFAULT_TIMESTAMP_FORMAT).unwrap();
        assert_eq!(log, reparsed);
    }

    #[test]
    fn parse_csv_missing_column() {
        let csv_text = "CaseID,ActivityID\nc1,a\n";
        let err = parse_csv_reader(
            csv_text.as_bytes(),
            &ColumnMap::default(),
            DEFAULT_TIMESTAMP_FORMAT,
        )
        .unwrap_err();
        assert!(matches!(err, EventLogError::MissingColumn(ref c) if c == "CompleteTimestamp"));
    }

    #[test]
    fn parse_csv_bad_timestamp_reports_row() {
        let csv_text = "\
CaseID,ActivityID,CompleteTimestamp
c1,a,2020-01-01 08:00:00
c1,b,not-a-date
";
        let err = parse_csv_reader(
            csv_text.as_bytes(),
            &ColumnMap::default(),
            DEFAULT_TIMESTAMP_FORMAT,
        )
        .unwrap_err();
        assert!(matches!(err, EventLogError::UnparseableTimestamp { row: 3, .. }));
    }

    #[test]
    fn parse_csv_empty_log() {
        let csv_text = "CaseID,ActivityID,CompleteTimestamp\n";
        let err = parse_csv_reader(
            csv_text.as_bytes(),
            &ColumnMap::default(),
            DEFAULT_TIMESTAMP_FORMAT,
        )
        .unwrap_err();
        assert!(matches!(err, EventLogError::EmptyLog));
    }

    fn synthetic_log(n: usize) -> EventLog {
        let rows = (0..n)
            .flat_map(|i| {
                vec![
                    (format!("c{i}"), "a".to_string(), ts(1, 0)),
                    (format!("c{i}"), "b".to_string(), ts(2, 0)),
                ]
            })
            .collect();
        from_rows(rows).unwrap()
    }

    #[test]
    fn split_exact_ratios() {
        let log = synthetic_log(100);
        let (train, test, val) = split_log(&log, (0.8, 0.15, 0.05), 1).unwrap();
        assert_eq!(
            (train.traces.len(), test.traces.len(), val.traces.len()),
            (80, 15, 5)
        );
    }

    #[test]
    fn split_remainder_goes_to_train() {
        let log = synthetic_log(101);
        let (train, test, val) = split_log(&log, (0.8, 0.15, 0.05), 1).unwrap();
        assert_eq!(
            (train.traces.len(), test.traces.len(), val.traces.len()),
            (81, 15, 5)
        );
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let log = synthetic_log(37);
        let a = split_log(&log, (0.8, 0.15, 0.05), 42).unwrap();
        let b = split_log(&log, (0.8, 0.15, 0.05), 42).unwrap();
        assert_eq!(a, b);

        let mut case_ids: Vec<&str> = Vec::new();
        for part in [&a.0, &a.1, &a.2] {
            case_ids.extend(part.traces.iter().map(|t| t.case_id.as_str()));
        }
        assert_eq!(case_ids.len(), 37);
        let unique: BTreeSet<&str> = case_ids.iter().copied().collect();
        assert_eq!(unique.len(), 37);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let log = synthetic_log(10);
        assert!(matches!(
            split_log(&log, (0.5, 0.5, 0.5), 0),
            Err(EventLogError::InvalidRatios(_))
        ));
        assert!(matches!(
            split_log(&log, (1.0, 0.0, 0.0), 0),
            Err(EventLogError::InvalidRatios(_))
        ));
    }
}
