//! CSV tables and JSON summaries for probe results.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::probes::cost::{cost_model, CostMethod, CostParams};
use crate::probes::SCHEMA_VERSION;

/// One method of the cost comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub schema_version: u32,
    pub method: CostMethod,
    pub flops: f64,
    pub per_pt: f64,
    pub ratio_vs_ppo: f64,
    pub ratio_rounded: f64,
}

pub fn cost_table(params: &CostParams) -> Result<Vec<CostRow>> {
    CostMethod::ALL
        .iter()
        .map(|&m| {
            let e = cost_model(params, m)?;
            Ok(CostRow {
                schema_version: SCHEMA_VERSION,
                method: m,
                flops: e.flops,
                per_pt: e.per_pt,
                ratio_vs_ppo: e.ratio_vs_ppo,
                ratio_rounded: e.ratio_rounded,
            })
        })
        .collect()
}

/// Writes `rows` with a header line taken from the row fields.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: u32,
    probe: &'a str,
    rows: &'a T,
}

/// Pretty JSON object `{schema_version, probe, rows}`.
pub fn write_summary<T: Serialize>(path: &Path, probe: &str, rows: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let s = Summary {
        schema_version: SCHEMA_VERSION,
        probe,
        rows,
    };
    serde_json::to_writer_pretty(&mut w, &s).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
