//! CSV ingestion and output, keyed by node name.
//!
//! Row numbers in errors count data rows from 1 (the header is not counted).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dag::DagSpec;
use crate::data::ObservedData;
use crate::error::{Error, Result};

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::DataFile(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::DataFile(format!("{}: empty file", path.display())));
    }
    let mut seen = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if seen.insert(h.as_str(), i).is_some() {
            return Err(Error::DataFile(format!("{}: duplicate column `{h}`", path.display())));
        }
    }
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::DataFile(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable { header, rows })
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::Data {
        row,
        column: column.to_string(),
        message: format!("non-numeric value `{raw}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            row,
            column: column.to_string(),
            message: format!("non-finite value `{raw}`"),
        });
    }
    Ok(v)
}

/// Reads the listed columns (by name, in the given order) into a matrix.
fn extract(table: &RawTable, columns: &[&str]) -> Result<DMatrix<f64>> {
    let index: HashMap<&str, usize> =
        table.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let positions: Vec<usize> = columns
        .iter()
        .map(|c| index.get(c).copied().ok_or_else(|| Error::MissingColumn(c.to_string())))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(table.rows.len(), columns.len());
    for (i, rec) in table.rows.iter().enumerate() {
        for (j, &pos) in positions.iter().enumerate() {
            let raw = rec.get(pos).unwrap_or("");
            m[(i, j)] = parse_cell(raw, i + 1, columns[j])?;
        }
    }
    Ok(m)
}

fn check_no_extra(table: &RawTable, dag: &DagSpec) -> Result<()> {
    if let Some(extra) = table.header.iter().find(|h| dag.index_of(h).is_err()) {
        return Err(Error::DataFile(format!("column `{extra}` is not a node of the DAG")));
    }
    Ok(())
}

/// Fully observed source data, columns realigned to DAG node order.
pub fn read_source_csv(path: &Path, dag: &DagSpec) -> Result<DMatrix<f64>> {
    let table = read_table(path)?;
    check_no_extra(&table, dag)?;
    let names: Vec<&str> = dag.names().iter().map(String::as_str).collect();
    extract(&table, &names)
}

/// Target-domain data: every node but `target`. The target column must be
/// absent or entirely empty; a partially filled target column is rejected.
pub fn read_target_csv(path: &Path, dag: &DagSpec, target: usize) -> Result<ObservedData> {
    let table = read_table(path)?;
    check_no_extra(&table, dag)?;
    let t_name = dag.name(target);
    if let Some(pos) = table.header.iter().position(|h| h == t_name) {
        let filled: Vec<usize> = table
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.get(pos).unwrap_or("").is_empty())
            .map(|(i, _)| i + 1)
            .collect();
        if let Some(&first) = filled.first() {
            return Err(Error::Data {
                row: first,
                column: t_name.to_string(),
                message: format!(
                    "target column must be absent or empty; {} of {} rows are filled",
                    filled.len(),
                    table.rows.len()
                ),
            });
        }
    }
    let names: Vec<&str> = dag
        .names()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != target)
        .map(|(_, n)| n.as_str())
        .collect();
    let m = extract(&table, &names)?;
    ObservedData::new(target, dag.node_count(), m)
}

/// A single numeric column: `column` if given, else the only column.
pub fn read_vector_csv(path: &Path, column: Option<&str>) -> Result<DVector<f64>> {
    let table = read_table(path)?;
    let name = match column {
        Some(c) => c.to_string(),
        None if table.header.len() == 1 => table.header[0].clone(),
        None => {
            return Err(Error::DataFile(format!(
                "{}: expected a single column, found {}",
                path.display(),
                table.header.len()
            )))
        }
    };
    let m = extract(&table, &[name.as_str()])?;
    Ok(m.column(0).clone_owned())
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector_csv(path: &Path, name: &str, v: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for x in v.iter() {
        w.write_record([x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes observed target data with node names as header (target omitted).
pub fn write_observed_csv(path: &Path, dag: &DagSpec, data: &ObservedData) -> Result<()> {
    let header: Vec<String> = data
        .observed_nodes()
        .into_iter()
        .map(|k| dag.name(k).to_string())
        .collect();
    write_matrix_csv(path, &header, data.matrix())
}
