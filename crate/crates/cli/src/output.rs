//! Files written by the commands.
//!
//! Every artifact is rendered in memory first and only then written, so a
//! failing command leaves no partial outputs behind.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vcpanel::{BootstrapBands, McReport};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SELECTION_FILE: &str = "selection.json";
pub const MC_TABLE_FILE: &str = "mc_table.csv";
pub const MC_REPORT_FILE: &str = "mc_report.json";

pub struct Artifact {
    pub name: &'static str,
    pub contents: Vec<u8>,
}

pub fn json_artifact<T: Serialize>(name: &'static str, value: &T) -> Artifact {
    let mut contents = serde_json::to_vec_pretty(value).expect("summaries serialize");
    contents.push(b'\n');
    Artifact { name, contents }
}

/// Writes every artifact into `dir`, creating it if needed.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> CliResult<Vec<PathBuf>> {
    let fail = |path: &Path, source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(a.name);
        let tmp = dir.join(format!(".{}.partial", a.name));
        std::fs::write(&tmp, &a.contents).map_err(|e| fail(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| fail(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn csv_artifact(name: &'static str, rows: Vec<Vec<String>>) -> Artifact {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    Artifact {
        name,
        contents: w.into_inner().expect("in-memory flush"),
    }
}

/// One row per coefficient and grid point; band columns empty without a bootstrap.
pub fn curves_csv(grid: &[f64], point: &[Vec<f64>], bands: Option<&BootstrapBands>) -> Artifact {
    let mut rows = vec![["coefficient", "u", "estimate", "variance", "lower", "upper"]
        .iter()
        .map(|s| s.to_string())
        .collect()];
    for (k, curve) in point.iter().enumerate() {
        for (j, (&u, &b)) in grid.iter().zip(curve).enumerate() {
            let band = |v: Option<&Vec<Vec<f64>>>| v.map_or(String::new(), |m| m[k][j].to_string());
            rows.push(vec![
                (k + 1).to_string(),
                u.to_string(),
                b.to_string(),
                band(bands.map(|b| &b.variance)),
                band(bands.map(|b| &b.lower)),
                band(bands.map(|b| &b.upper)),
            ]);
        }
    }
    csv_artifact(CURVES_FILE, rows)
}

/// `N, T` followed by one mean-AMSE column per estimator and coefficient.
pub fn mc_table_csv(reports: &[McReport]) -> Artifact {
    let p = reports
        .iter()
        .flat_map(|r| r.rows.iter())
        .map(|row| row.mean_amse.len())
        .max()
        .unwrap_or(0);
    let mut header = vec!["N".to_string(), "T".to_string()];
    for r in reports {
        for k in 0..p {
            header.push(format!("{}_beta{}", r.estimator.label(), k + 1));
        }
    }
    let mut rows = vec![header];
    let sizes = reports.first().map_or(0, |r| r.rows.len());
    for s in 0..sizes {
        let first = &reports[0].rows[s];
        let mut row = vec![first.n.to_string(), first.t.to_string()];
        for r in reports {
            for k in 0..p {
                row.push(r.rows[s].mean_amse.get(k).map_or(String::new(), |v| v.to_string()));
            }
        }
        rows.push(row);
    }
    csv_artifact(MC_TABLE_FILE, rows)
}
