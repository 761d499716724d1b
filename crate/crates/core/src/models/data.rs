use std::io::Read;
use std::path::Path;

use super::{ModelError, PkData, PkPatient};

/// Covariates and responses for GP-style models.
#[derive(Clone, Debug, PartialEq)]
pub struct GpData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

fn open(path: &Path) -> Result<std::fs::File, ModelError> {
    std::fs::File::open(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse(rec: &csv::StringRecord, col: usize, name: &str) -> Result<f64, ModelError> {
    let field = rec.get(col).unwrap_or("").trim();
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ModelError::Load {
            line: line_of(rec),
            message: format!("column `{name}`: `{field}` is not a finite number"),
        })
}

fn csv_error(e: csv::Error) -> ModelError {
    let line = e.position().map_or(0, |p| p.line());
    ModelError::Load {
        line,
        message: e.to_string(),
    }
}

/// Reads `patient_id,time,amount` rows. Patients keep the order in which they
/// first appear; every patient receives `dose` into the gut at t = 0.
pub fn load_pk_csv(path: &Path, dose: f64) -> Result<PkData, ModelError> {
    read_pk(open(path)?, dose)
}

pub(crate) fn read_pk<R: Read>(reader: R, dose: f64) -> Result<PkData, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["patient_id", "time", "amount"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(ModelError::Load {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut patients: Vec<PkPatient> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(ModelError::Load {
                line: line_of(&rec),
                message: "empty patient_id".into(),
            });
        }
        let t = parse(&rec, 1, "time")?;
        let y = parse(&rec, 2, "amount")?;
        if t < 0.0 {
            return Err(ModelError::Load {
                line: line_of(&rec),
                message: format!("negative time {t}"),
            });
        }
        match patients.iter_mut().find(|p| p.id == id) {
            Some(p) => {
                p.times.push(t);
                p.amounts.push(y);
            }
            None => patients.push(PkPatient {
                id,
                dose,
                times: vec![t],
                amounts: vec![y],
            }),
        }
    }
    if patients.is_empty() {
        return Err(ModelError::Load {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(PkData { patients })
}

/// Reads rows of covariates followed by a final `y` column, e.g.
/// `x1,x2,y`. Any number (≥ 1) of covariate columns is accepted.
pub fn load_gp_csv(path: &Path) -> Result<GpData, ModelError> {
    read_gp(open(path)?)
}

pub(crate) fn read_gp<R: Read>(reader: R) -> Result<GpData, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols: Vec<String> = header.iter().map(str::to_string).collect();
    if cols.len() < 2 || cols.last().map(String::as_str) != Some("y") {
        return Err(ModelError::Load {
            line: 1,
            message: "expected covariate columns followed by `y`".into(),
        });
    }
    let d = cols.len() - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let row = (0..d)
            .map(|k| parse(&rec, k, &cols[k]))
            .collect::<Result<Vec<_>, _>>()?;
        y.push(parse(&rec, d, "y")?);
        x.push(row);
    }
    if y.is_empty() {
        return Err(ModelError::Load {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(GpData { x, y })
}
