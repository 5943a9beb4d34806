//! Long-format CSV ingestion.
//!
//! One row per `(subject, time)` cell with columns for the subject id, time
//! id, index variable, response and regressors. Rows may come in any order;
//! they are pivoted to `N x T` arrays ordered by sorted subject and time ids
//! (numerically when every id parses as a number).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::panel::{validate_panel, PanelData, RawPanel, Support};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongCsvSchema {
    pub id: String,
    pub time: String,
    pub u: String,
    pub y: String,
    pub x: Vec<String>,
    pub delimiter: char,
}

impl Default for LongCsvSchema {
    fn default() -> Self {
        LongCsvSchema {
            id: "id".into(),
            time: "t".into(),
            u: "u".into(),
            y: "y".into(),
            x: vec!["x1".into()],
            delimiter: ',',
        }
    }
}

/// Ids sort numerically when they all parse, else lexicographically.
fn sorted_ids(ids: &BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = ids.iter().cloned().collect();
    if v.iter().all(|s| s.trim().parse::<f64>().is_ok()) {
        v.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    }
    v
}

pub fn load_long_csv(path: &Path, schema: &LongCsvSchema) -> Result<PanelData> {
    let file = std::fs::File::open(path)?;
    read_long_csv(file, schema, None)
}

/// Reads long-format rows from any reader; `support` overrides the empirical one.
pub fn read_long_csv<R: std::io::Read>(
    reader: R,
    schema: &LongCsvSchema,
    support: Option<Support>,
) -> Result<PanelData> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::Parse {
            row: 0,
            message: "delimiter must be ASCII".into(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let id_col = column(&schema.id)?;
    let t_col = column(&schema.time)?;
    let u_col = column(&schema.u)?;
    let y_col = column(&schema.y)?;
    let x_cols = schema.x.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    if x_cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "schema lists no regressor columns".into(),
        });
    }

    // (u, y, x...) per cell
    let mut cells: HashMap<(String, String), Vec<f64>> = HashMap::new();
    let mut subjects = BTreeSet::new();
    let mut times = BTreeSet::new();
    for (k, rec) in rdr.records().enumerate() {
        // data rows are numbered from 2 (the header is row 1)
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| {
            field(c).parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("'{}' in column '{}' is not a number", field(c), &headers[c]),
            })
        };
        let mut values = vec![num(u_col)?, num(y_col)?];
        for &c in &x_cols {
            values.push(num(c)?);
        }
        let key = (field(id_col).to_string(), field(t_col).to_string());
        subjects.insert(key.0.clone());
        times.insert(key.1.clone());
        if cells.contains_key(&key) {
            return Err(Error::DuplicateCell {
                subject: key.0,
                time: key.1,
                row,
            });
        }
        cells.insert(key, values);
    }
    let subjects = sorted_ids(&subjects);
    let times = sorted_ids(&times);
    let (n, t, p) = (subjects.len(), times.len(), x_cols.len());
    let mut u = DMatrix::zeros(n, t);
    let mut y = DMatrix::zeros(n, t);
    let mut x = vec![DMatrix::zeros(n, t); p];
    for (i, sid) in subjects.iter().enumerate() {
        for (s, tid) in times.iter().enumerate() {
            let vals = cells
                .get(&(sid.clone(), tid.clone()))
                .ok_or_else(|| Error::UnbalancedPanel {
                    subject: sid.clone(),
                    time: tid.clone(),
                })?;
            u[(i, s)] = vals[0];
            y[(i, s)] = vals[1];
            for k in 0..p {
                x[k][(i, s)] = vals[2 + k];
            }
        }
    }
    validate_panel(RawPanel { y, x, u, support })
}
