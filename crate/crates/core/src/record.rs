//! Run records and their CSV form: `# key=value` metadata lines, a fixed
//! column header, then one row per recorded iteration. Numeric columns are
//! serialized with 17 significant digits so re-parsing is exact.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,epoch,wall_seconds,subopt,grad_map_norm,refreshes";

/// Metadata keys a record may carry; anything else is rejected on parse.
pub const KNOWN_META_KEYS: &[&str] = &[
    "algo",
    "sampling",
    "loss",
    "n",
    "d",
    "data",
    "tau",
    "p",
    "lambda1",
    "lambda2",
    "seed",
    "epochs",
    "cadence",
    "lazy",
    "lazy_requested",
    "step_size",
    "theta1",
    "theta2",
    "big_l",
    "l1",
    "l2",
    "l3",
    "l_f",
    "l_bar",
    "p_star",
    "ref_converged",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub iter: u64,
    pub epoch: f64,
    pub wall_seconds: f64,
    pub subopt: f64,
    pub grad_map_norm: f64,
    pub refreshes: u64,
}

/// Time-stamped metric rows plus the metadata needed to reproduce the run
/// (every column except wall time is deterministic given the seed).
#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<RunRow>,
}

/// Shortest-exact decimal for a float: 17 significant digits round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunRecord {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KNOWN_META_KEYS.contains(&key), "unknown meta key {key}");
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter,
                fmt_f64(r.epoch),
                fmt_f64(r.wall_seconds),
                fmt_f64(r.subopt),
                fmt_f64(r.grad_map_norm),
                r.refreshes
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut record = RunRecord::default();
        let mut saw_header = false;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                let (key, value) = rest.split_once('=').ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "metadata line is not key=value".into(),
                })?;
                if !KNOWN_META_KEYS.contains(&key) {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown metadata key '{key}'"),
                    });
                }
                record.meta.push((key.to_string(), value.to_string()));
                continue;
            }
            if !saw_header {
                if trimmed != CSV_HEADER {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected header '{CSV_HEADER}'"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 6 columns, found {}", fields.len()),
                });
            }
            let parse_u = |s: &str| {
                s.parse::<u64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid integer '{s}'"),
                })
            };
            let parse_f = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid number '{s}'"),
                })
            };
            record.rows.push(RunRow {
                iter: parse_u(fields[0])?,
                epoch: parse_f(fields[1])?,
                wall_seconds: parse_f(fields[2])?,
                subopt: parse_f(fields[3])?,
                grad_map_norm: parse_f(fields[4])?,
                refreshes: parse_u(fields[5])?,
            });
        }
        if !saw_header {
            return Err(Error::Parse {
                line: 0,
                msg: "missing column header".into(),
            });
        }
        Ok(record)
    }
}
