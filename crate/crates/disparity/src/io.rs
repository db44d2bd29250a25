//! Long-format CSV in and out.
//!
//! Fixed columns: `person_id, visit_id, cluster_id, time_unit, R,
//! Y`. Covariates follow under their own names. Columns not named by
//! the schema are ignored on load.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use disparity_core::data_model::{ColumnMeta, ObservationTable, OutcomeKind, Record};
use disparity_core::Error;

use crate::error::{CliError, Result};

pub const FIXED_COLUMNS: [&str; 6] = ["person_id", "visit_id", "cluster_id", "time_unit", "R", "Y"];

/// Which covariate columns to load and how to read them.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub covariates: Vec<ColumnMeta>,
    pub outcome: OutcomeKind,
}

/// Extra columns appended on write, one value per record.
pub type ExtraColumn = (String, Vec<String>);

pub fn load_observations(path: &Path, schema: &Schema) -> Result<ObservationTable> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_observations(file, schema)
}

pub fn read_observations<R: Read>(reader: R, schema: &Schema) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let fixed: Vec<usize> = FIXED_COLUMNS.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let covs: Vec<usize> = schema.covariates.iter().map(|c| find(&c.name)).collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |k: usize, name: &str| -> Result<&str, Error> {
            let v = rec.get(k).unwrap_or("");
            if v.is_empty() {
                Err(Error::MissingValue { column: name.to_string(), row })
            } else {
                Ok(v)
            }
        };
        let bad = |name: &str, detail: String| Error::BadValue { column: name.to_string(), row, detail };
        let num = |k: usize, name: &str| -> Result<f64, Error> {
            let s = cell(k, name)?;
            s.parse::<f64>().map_err(|_| bad(name, format!("`{s}` is not a number")))
        };
        let time = cell(fixed[3], "time_unit")?;
        let time_unit = time.parse::<i64>().map_err(|_| bad("time_unit", format!("`{time}` is not an integer")))?;
        let group = match cell(fixed[4], "R")? {
            "0" => 0,
            "1" => 1,
            g => return Err(bad("R", format!("`{g}` is not 0 or 1")).into()),
        };
        let values =
            schema.covariates.iter().zip(&covs).map(|(c, &k)| num(k, &c.name)).collect::<Result<Vec<_>, _>>()?;
        records.push(Record {
            person_id: cell(fixed[0], "person_id")?.to_string(),
            visit_id: cell(fixed[1], "visit_id")?.to_string(),
            cluster_id: cell(fixed[2], "cluster_id")?.to_string(),
            time_unit,
            group,
            outcome: num(fixed[5], "Y")?,
            values,
            flags: None,
            standard: None,
        });
    }
    Ok(ObservationTable::new(schema.covariates.clone(), schema.outcome, records)?)
}

/// Shortest text that parses back to the same f64.
pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn write_observations<W: Write>(writer: W, table: &ObservationTable, extra: &[ExtraColumn]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(table.columns.iter().map(|c| c.name.as_str()));
    header.extend(extra.iter().map(|(n, _)| n.as_str()));
    w.write_record(&header)?;
    for (i, r) in table.records.iter().enumerate() {
        let mut row = vec![
            r.person_id.clone(),
            r.visit_id.clone(),
            r.cluster_id.clone(),
            r.time_unit.to_string(),
            r.group.to_string(),
            fmt_num(r.outcome),
        ];
        row.extend(r.values.iter().map(|&v| fmt_num(v)));
        row.extend(extra.iter().map(|(_, vals)| vals[i].clone()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_observations(path: &Path, table: &ObservationTable, extra: &[ExtraColumn]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_observations(std::io::BufWriter::new(file), table, extra)
}

/// A schema covering every covariate column of `table`.
pub fn schema_of(table: &ObservationTable) -> Schema {
    Schema { covariates: table.columns.clone(), outcome: table.outcome_kind }
}

/// One row per replicate, one column per estimator; failed replicates are
/// left empty.
pub fn write_replicates<W: Write>(writer: W, columns: &[(&str, Vec<Option<f64>>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["replicate"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    let rows = columns.first().map_or(0, |(_, v)| v.len());
    for b in 0..rows {
        let mut row = vec![b.to_string()];
        row.extend(columns.iter().map(|(_, v)| v[b].map(fmt_num).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
