//! Prepares the Rotterdam breast cancer data for the bundled configs.
//!
//! Reads `data/rotterdam.csv` (the raw export with columns `pid, age,
//! grade, rtime, recur, dtime, death`, times in days) and writes
//!
//! * `data/rotterdam_death.csv`: time since surgery to death in years.
//!   Patients whose recurrence time precedes their death time without a
//!   recorded recurrence are treated as censored at the recurrence time.
//! * `data/rotterdam_competing.csv`: time to the first of recurrence and
//!   death without recurrence, with the cause of the first event.
//!
//! Run from the workspace root:
//! `cargo run -p twoscale-cli --example rotterdam_prepare`

use std::error::Error;
use std::path::PathBuf;

const DAYS_PER_YEAR: f64 = 365.25;

#[derive(serde::Deserialize)]
struct Raw {
    pid: u32,
    age: f64,
    grade: u32,
    rtime: f64,
    recur: u8,
    dtime: f64,
    death: u8,
}

fn main() -> Result<(), Box<dyn Error>> {
    let data = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let mut reader = csv::Reader::from_path(data.join("rotterdam.csv"))?;
    let mut death = csv::Writer::from_path(data.join("rotterdam_death.csv"))?;
    let mut competing = csv::Writer::from_path(data.join("rotterdam_competing.csv"))?;
    death.write_record(["pid", "age", "grade", "rtimey", "dtimey", "death"])?;
    competing.write_record(["pid", "age", "grade", "fetimey", "first_event"])?;

    let mut corrected = 0;
    for row in reader.deserialize() {
        let r: Raw = row?;
        let (mut dtime, mut died) = (r.dtime, r.death);
        if r.rtime < r.dtime && r.recur == 0 {
            dtime = r.rtime;
            died = 0;
            corrected += 1;
        }
        let rtimey = r.rtime / DAYS_PER_YEAR;
        let dtimey = dtime / DAYS_PER_YEAR;
        death.write_record(&[
            r.pid.to_string(),
            r.age.to_string(),
            r.grade.to_string(),
            rtimey.to_string(),
            dtimey.to_string(),
            died.to_string(),
        ])?;

        let first_event = if r.recur == 1 {
            "recurrence"
        } else if died == 1 {
            "death"
        } else {
            "censored"
        };
        competing.write_record(&[
            r.pid.to_string(),
            r.age.to_string(),
            r.grade.to_string(),
            rtimey.min(dtimey).to_string(),
            first_event.to_string(),
        ])?;
    }
    death.flush()?;
    competing.flush()?;
    eprintln!("censored {corrected} deaths at the recurrence time");
    Ok(())
}
