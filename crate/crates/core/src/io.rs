//! CSV and JSON artifacts: datasets, curve tables and sidecar records.
//!
//! Text outputs begin with `#` comment lines carrying the schema version and,
//! for run outputs, the resolved configuration. Readers skip such lines.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::GridConfig;
use crate::error::{PscError, Result};
use crate::estimands::PsCurve;
use crate::model::Dataset;
use crate::SCHEMA_VERSION;

/// Comment header: schema version, artifact kind and an optional JSON config.
pub fn write_comment_header<W: Write>(w: &mut W, kind: &str, config_json: Option<&str>) -> Result<()> {
    writeln!(w, "# psc {kind} schema_version={SCHEMA_VERSION}")?;
    if let Some(c) = config_json {
        writeln!(w, "# config={c}")?;
    }
    Ok(())
}

/// Reads the `# config=` comment line of a text output, if any.
pub fn read_config_comment(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config="))
}

pub fn write_dataset_csv<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    write_comment_header(&mut w, "dataset", None)?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["y".to_string(), "s".to_string(), "t".to_string()];
    header.extend((1..=data.p()).map(|k| format!("x{k}")));
    out.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![data.y[i].to_string(), data.s_obs[i].to_string(), data.t_obs[i].to_string()];
        row.extend(data.x.row(i).iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset_csv(BufWriter::new(File::create(path)?), data)
}

fn parse_error(source: &str, line: u64, message: impl Into<String>) -> PscError {
    PscError::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses `y,s,t,x1..xp` rows. `source` names the input in error messages,
/// which also carry the offending line number.
pub fn read_dataset_csv<R: Read>(reader: R, source: &str, grid: &GridConfig) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(source, 1, e.to_string()))?.clone();
    let header_line = header.position().map_or(1, |p| p.line());
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != ["y", "s", "t"] {
        return Err(parse_error(source, header_line, format!("header must start with y,s,t; got {}", names.join(","))));
    }
    let p = names.len() - 3;
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(parse_error(source, header_line, format!("expected column x{} but found {name:?}", k + 1)));
        }
    }
    let (mut y, mut s, mut t, mut x) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_error(source, line, format!("expected {} fields, found {}", names.len(), rec.len())));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(source, line, format!("column {name}: cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_error(source, line, format!("column {name}: value {field:?} is not finite")));
            }
            vals.push(v);
        }
        y.push(vals[0]);
        s.push(vals[1]);
        t.push(vals[2]);
        x.extend_from_slice(&vals[3..]);
    }
    if y.is_empty() {
        return Err(parse_error(source, header_line, "no data rows"));
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, p, &x);
    let grid = grid.resolve(&t)?;
    Dataset::new(y, s, t, x, grid)
}

pub fn load_dataset(path: &Path, grid: &GridConfig) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset_csv(std::io::BufReader::new(file), &path.display().to_string(), grid)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PscError::Config(format!("{}: {e}", path.display())))
}

/// `t,mean,lo95,hi95,avg_stratum_fraction` rows.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &PsCurve, config_json: Option<&str>) -> Result<()> {
    write_comment_header(&mut w, "curve", config_json)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "mean", "lo95", "hi95", "avg_stratum_fraction"])?;
    for k in 0..curve.t.len() {
        out.write_record([
            curve.t[k].to_string(),
            curve.mean[k].to_string(),
            curve.lo95[k].to_string(),
            curve.hi95[k].to_string(),
            curve.avg_stratum_fraction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
