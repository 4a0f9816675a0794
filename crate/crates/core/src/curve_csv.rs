//! Learning-curve CSV I/O.
//!
//! Format: header `epoch,train_acc,val_acc,objective,seed`, one row per
//! epoch, reals printed with 17 significant digits so a reload is lossless
//! and a rerun is byte-comparable.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{EpochRecord, LearningCurve};

pub const CURVE_HEADER: &str = "epoch,train_acc,val_acc,objective,seed";

fn fmt_real(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn curve_to_string(curve: &LearningCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in &curve.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            fmt_real(r.train_acc),
            fmt_real(r.val_acc),
            fmt_real(r.objective),
            curve.seed
        ));
    }
    out
}

pub fn write_curve(path: impl AsRef<Path>, curve: &LearningCurve) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, curve_to_string(curve)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<LearningCurve> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_curve(&path.display().to_string(), &text)
}

pub fn parse_curve(path: &str, text: &str) -> Result<LearningCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_string(),
                line: 1,
                msg: format!("expected header {CURVE_HEADER:?}"),
            })
        }
    }
    let mut seed = 0u64;
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: format!("bad real {s:?}"),
            })
        };
        records.push(EpochRecord {
            epoch: fields[0].parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: format!("bad epoch {:?}", fields[0]),
            })?,
            train_acc: parse_f(fields[1])?,
            val_acc: parse_f(fields[2])?,
            objective: parse_f(fields[3])?,
        });
        seed = fields[4].parse().map_err(|_| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            msg: format!("bad seed {:?}", fields[4]),
        })?;
    }
    Ok(LearningCurve { seed, records })
}

pub const MERGED_HEADER: &str = "series,epoch,accuracy,role,linestyle";

/// Merge every curve CSV in `run_dir` into one long-format table for
/// plotting. Accuracy fields are copied verbatim from the source files, not
/// re-rounded.
pub fn merge_curves(run_dir: impl AsRef<Path>) -> Result<String> {
    let run_dir = run_dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && fs::read_to_string(p)
                    .map(|t| t.starts_with(CURVE_HEADER))
                    .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no curve CSVs found in {}",
            run_dir.display()
        )));
    }
    let mut out = String::from(MERGED_HEADER);
    out.push('\n');
    for p in &paths {
        let series = p.file_stem().unwrap().to_string_lossy().into_owned();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    path: p.display().to_string(),
                    line: 0,
                    msg: "malformed curve row".into(),
                });
            }
            out.push_str(&format!(
                "{series},{},{},train,dashed\n",
                fields[0], fields[1]
            ));
            out.push_str(&format!(
                "{series},{},{},val,solid\n",
                fields[0], fields[2]
            ));
        }
    }
    Ok(out)
}
