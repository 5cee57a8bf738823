//! Numeric CSV tables whose first column holds row ids.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id_header: String,
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        bail!("{}: missing header row", path.display());
    }
    let id_header = header[0].trim().to_string();
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), row + 1))?;
        if rec.len() != names.len() + 1 {
            bail!("{}: row {} has {} fields, expected {}", path.display(), row + 1, rec.len(), names.len() + 1);
        }
        ids.push(rec[0].trim().to_string());
        for (k, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().with_context(|| {
                format!("{}: row {}, column {:?}: not a number: {cell:?}", path.display(), row + 1, names[k])
            })?;
            flat.push(v);
        }
    }
    if ids.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let values = Array2::from_shape_vec((ids.len(), names.len()), flat)?;
    Ok(Table { id_header, ids, names, values })
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec![table.id_header.clone()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.ids.iter().zip(table.values.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Single-column name list such as a node ordering or a group map.
pub fn read_column_map(path: &Path, key: &str, value: Option<&str>) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing column {name:?}", path.display()))
    };
    let kc = col(key)?;
    let vc = value.map(col).transpose()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let k = rec.get(kc).unwrap_or("").trim().to_string();
        let v = vc.map(|c| rec.get(c).unwrap_or("").trim().to_string()).unwrap_or_default();
        out.push((k, v));
    }
    Ok(out)
}
