//! Per-epoch metrics log: comma-separated, one header line, one row per epoch.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "epoch,cycle,actor_loss,critic_loss,train_return,test_success_rate,test_collision_rate,test_fail_rate,wall_clock_s";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Cycles completed within the epoch when the row was written.
    pub cycle: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Mean undiscounted return of the exploration rollouts.
    pub train_return: f64,
    pub test_success_rate: f64,
    pub test_collision_rate: f64,
    pub test_fail_rate: f64,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.cycle,
            self.actor_loss,
            self.critic_loss,
            self.train_return,
            self.test_success_rate,
            self.test_collision_rate,
            self.test_fail_rate,
            self.wall_clock_s
        )
        .expect("writing to a String");
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Log(format!(
                "expected 9 fields, got {}: {line:?}",
                fields.len()
            )));
        }
        let int = |i: usize| {
            fields[i]
                .parse::<usize>()
                .map_err(|e| Error::Log(format!("field {i} {:?}: {e}", fields[i])))
        };
        let float = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Log(format!("field {i} {:?}: {e}", fields[i])))
        };
        Ok(Self {
            epoch: int(0)?,
            cycle: int(1)?,
            actor_loss: float(2)?,
            critic_loss: float(3)?,
            train_return: float(4)?,
            test_success_rate: float(5)?,
            test_collision_rate: float(6)?,
            test_fail_rate: float(7)?,
            wall_clock_s: float(8)?,
        })
    }
}

/// Appends rows to the log, writing the header when the file is new or empty.
pub fn append_rows(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(HEADER);
        buf.push('\n');
    }
    for r in rows {
        buf.push_str(&r.to_csv_line());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_log(&text)
}

/// Parses a log and checks its bookkeeping invariants.
pub fn parse_log(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HEADER => {}
        Some(h) => return Err(Error::Log(format!("unexpected header {h:?}"))),
        None => return Err(Error::Log("empty log".into())),
    }
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRow::parse_csv_line)
        .collect::<Result<Vec<_>>>()?;
    for w in rows.windows(2) {
        if w[1].epoch <= w[0].epoch {
            return Err(Error::Log(format!(
                "epoch {} follows epoch {}",
                w[1].epoch, w[0].epoch
            )));
        }
    }
    for r in &rows {
        if r.wall_clock_s < 0.0 {
            return Err(Error::Log(format!(
                "negative wall clock at epoch {}",
                r.epoch
            )));
        }
    }
    Ok(rows)
}

/// Tidy per-epoch table for plotting: the logged columns plus percentages.
pub fn plot_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push_str(",test_success_pct,test_collision_pct,test_fail_pct\n");
    for r in rows {
        out.push_str(&r.to_csv_line());
        let _ = writeln!(
            out,
            ",{:.3},{:.3},{:.3}",
            100.0 * r.test_success_rate,
            100.0 * r.test_collision_rate,
            100.0 * r.test_fail_rate
        );
    }
    out
}
