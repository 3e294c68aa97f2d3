//! Parse an event log from CSV, inspect its traces and split it into
//! train/test/validation partitions.
//!
//! ```bash
//! cargo run --example parse_event_log
//! ```

use suffixgan::eventlog::{cycle_time, parse_csv_reader, split_log, ColumnMap, DEFAULT_TIMESTAMP_FORMAT};

const CSV: &str = "\
CaseID,ActivityID,CompleteTimestamp
c1,register,2024-01-01 09:00:00
c1,triage,2024-01-02 09:00:00
c1,close,2024-01-04 21:00:00
c2,register,2024-01-03 10:00:00
c2,triage,2024-01-03 22:00:00
c2,analyze,2024-01-05 10:00:00
c2,close,2024-01-06 10:00:00
c3,register,2024-01-05 08:00:00
c3,close,2024-01-05 20:00:00
";

fn main() {
    let log = parse_csv_reader(
        CSV.as_bytes(),
        &ColumnMap::default(),
        DEFAULT_TIMESTAMP_FORMAT,
    )
    .expect("well-formed CSV");

    println!("{} traces, {} events", log.traces.len(), log.n_events());
    println!("activities: {:?}", log.activity_universe());
    for trace in &log.traces {
        println!(
            "  {}: {:?} cycle time {:.2} days",
            trace.case_id,
            trace.labels(),
            cycle_time(trace)
        );
    }

    let (train, test, val) = split_log(&log, (0.4, 0.4, 0.2), 7).unwrap();
    println!(
        "split -> train {} / test {} / val {} traces (seeded, trace-level)",
        train.traces.len(),
        test.traces.len(),
        val.traces.len()
    );
}
