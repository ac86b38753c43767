//! CSV ingestion. Each call is all-or-nothing: a batch is fully validated
//! before any row is appended, and only a successful call bumps the
//! ingestion generation.

use std::collections::HashMap;

use super::{AttributeDef, Dataset, Row};
use crate::error::{Error, Result};
use crate::value::{Kind, Value};

struct CsvBatch {
    records: Vec<csv::StringRecord>,
    /// For each expected column, its position in the CSV records.
    positions: Vec<usize>,
}

fn read_batch(table: &str, expected: &[&str], content: &str) -> Result<CsvBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(content.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::HeaderMismatch {
            table: table.to_string(),
            message: e.to_string(),
        })?
        .clone();
    let header_names: Vec<&str> = header.iter().collect();

    let mismatch = |message: String| Error::HeaderMismatch {
        table: table.to_string(),
        message,
    };
    if header_names.len() != expected.len() {
        return Err(mismatch(format!(
            "expected columns {:?}, found {:?}",
            expected, header_names
        )));
    }
    let mut positions = Vec::with_capacity(expected.len());
    for name in expected {
        let matches: Vec<usize> = header_names
            .iter()
            .enumerate()
            .filter(|(_, h)| h.trim().eq_ignore_ascii_case(name))
            .map(|(i, _)| i)
            .collect();
        match matches.as_slice() {
            [i] => positions.push(*i),
            [] => return Err(mismatch(format!("missing column `{name}`"))),
            _ => return Err(mismatch(format!("column `{name}` appears more than once"))),
        }
    }

    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest {
            table: table.to_string(),
            row: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(CsvBatch { records, positions })
}

fn parse_cell(table: &str, row: usize, attr: &AttributeDef, cell: &str) -> Result<Value> {
    Value::parse_cell(cell, attr.kind).map_err(|message| Error::Ingest {
        table: table.to_string(),
        row,
        message: format!("column `{}`: {message}", attr.name),
    })
}

impl Dataset {
    /// Appends the rows of a dimension CSV. Returns the number of rows ingested.
    pub fn ingest_dimension(&mut self, dim_name: &str, csv: &str) -> Result<usize> {
        let d = self
            .dimension_index(dim_name)
            .ok_or_else(|| Error::UnknownDimension(dim_name.to_string()))?;
        let dim = &self.dimensions[d];
        let names: Vec<&str> = dim.attributes.iter().map(|a| a.name.as_str()).collect();
        let batch = read_batch(&dim.name, &names, csv)?;

        let key_pos = dim.key_position();
        let mut new_keys: HashMap<Value, usize> = HashMap::new();
        let mut rows = Vec::with_capacity(batch.records.len());
        for (i, record) in batch.records.iter().enumerate() {
            let row_no = i + 1;
            let values = dim
                .attributes
                .iter()
                .zip(&batch.positions)
                .map(|(attr, &p)| parse_cell(&dim.name, row_no, attr, &record[p]))
                .collect::<Result<Vec<_>>>()?;
            let key = &values[key_pos];
            if key.is_null() {
                return Err(Error::Ingest {
                    table: dim.name.clone(),
                    row: row_no,
                    message: format!("key `{}` is null", dim.key_attribute().name),
                });
            }
            if dim.lookup(key).is_some() || new_keys.contains_key(key) {
                return Err(Error::Ingest {
                    table: dim.name.clone(),
                    row: row_no,
                    message: format!("duplicate key {}", key.to_literal()),
                });
            }
            new_keys.insert(key.clone(), row_no);
            rows.push(Row::new(values));
        }

        let count = rows.len();
        let dim = &mut self.dimensions[d];
        for row in rows {
            let ordinal = dim.rows.len() as u32;
            dim.key_index.insert(row.values[key_pos].clone(), ordinal);
            dim.rows.push(row);
        }
        self.ingest_generation += 1;
        Ok(count)
    }

    /// Appends the rows of the fact CSV. Every foreign key must resolve to an
    /// already ingested dimension row.
    pub fn ingest_fact(&mut self, csv: &str) -> Result<usize> {
        let fact = &self.fact;
        let fk_kinds: Vec<Kind> = fact
            .fk_dimensions
            .iter()
            .map(|&d| self.dimensions[d].key_attribute().kind)
            .collect();
        let mut names: Vec<&str> = fact.foreign_keys.iter().map(|fk| fk.column.as_str()).collect();
        names.extend(fact.measures.iter().map(|m| m.name.as_str()));
        let batch = read_batch(&fact.name, &names, csv)?;
        let fk_count = fact.foreign_keys.len();

        let mut fk_columns: Vec<Vec<u32>> = vec![Vec::with_capacity(batch.records.len()); fk_count];
        let mut measure_columns: Vec<Vec<Value>> =
            vec![Vec::with_capacity(batch.records.len()); fact.measures.len()];
        for (i, record) in batch.records.iter().enumerate() {
            let row_no = i + 1;
            for (fk, column) in fk_columns.iter_mut().enumerate() {
                let cell = &record[batch.positions[fk]];
                let def = &fact.foreign_keys[fk];
                let key = Value::parse_cell(cell, fk_kinds[fk]).map_err(|message| Error::Ingest {
                    table: fact.name.clone(),
                    row: row_no,
                    message: format!("column `{}`: {message}", def.column),
                })?;
                let dim = &self.dimensions[fact.fk_dimensions[fk]];
                let ordinal = dim.lookup(&key).ok_or_else(|| Error::Ingest {
                    table: fact.name.clone(),
                    row: row_no,
                    message: format!(
                        "dangling foreign key `{}` = {} (no such {} row)",
                        def.column,
                        key.to_literal(),
                        dim.name
                    ),
                })?;
                column.push(ordinal);
            }
            for (m, column) in measure_columns.iter_mut().enumerate() {
                let cell = &record[batch.positions[fk_count + m]];
                column.push(parse_cell(&fact.name, row_no, &fact.measures[m], cell)?);
            }
        }

        let count = batch.records.len();
        let fact = &mut self.fact;
        for (dst, src) in fact.fk_columns.iter_mut().zip(fk_columns) {
            dst.extend(src);
        }
        for (dst, src) in fact.measure_columns.iter_mut().zip(measure_columns) {
            dst.extend(src);
        }
        fact.len += count;
        self.ingest_generation += 1;
        Ok(count)
    }

    /// Ingests `csv` into whichever table `table` names (fact or dimension).
    pub fn ingest(&mut self, table: &str, csv: &str) -> Result<usize> {
        if self.is_fact(table) {
            self.ingest_fact(csv)
        } else if self.dimension_index(table).is_some() {
            self.ingest_dimension(table, csv)
        } else {
            Err(Error::UnknownTable(table.to_string()))
        }
    }

    /// Appends already typed fact rows. `dimension_rows[fk]` holds the
    /// referenced dimension ordinal. Used by generators that build large
    /// warehouses without a CSV round trip.
    pub fn append_fact_rows(
        &mut self,
        dimension_rows: Vec<Vec<u32>>,
        measures: Vec<Vec<Value>>,
    ) -> Result<usize> {
        let fact = &self.fact;
        if dimension_rows.len() != fact.foreign_keys.len() || measures.len() != fact.measures.len() {
            return Err(Error::Schema("column count does not match the fact table".into()));
        }
        let count = dimension_rows.first().map_or_else(
            || measures.first().map_or(0, Vec::len),
            Vec::len,
        );
        for (fk, column) in dimension_rows.iter().enumerate() {
            let dim = &self.dimensions[fact.fk_dimensions[fk]];
            if column.len() != count {
                return Err(Error::Schema("ragged fact columns".into()));
            }
            if let Some(pos) = column.iter().position(|&o| o as usize >= dim.len()) {
                return Err(Error::Ingest {
                    table: fact.name.clone(),
                    row: pos + 1,
                    message: format!("dangling reference into `{}`", dim.name),
                });
            }
        }
        for (m, column) in measures.iter().enumerate() {
            if column.len() != count {
                return Err(Error::Schema("ragged fact columns".into()));
            }
            let kind = fact.measures[m].kind;
            if let Some(pos) = column.iter().position(|v| v.kind().is_some_and(|k| k != kind)) {
                return Err(Error::Ingest {
                    table: fact.name.clone(),
                    row: pos + 1,
                    message: format!("measure `{}` expects {kind}", fact.measures[m].name),
                });
            }
        }
        let fact = &mut self.fact;
        for (dst, src) in fact.fk_columns.iter_mut().zip(dimension_rows) {
            dst.extend(src);
        }
        for (dst, src) in fact.measure_columns.iter_mut().zip(measures) {
            dst.extend(src);
        }
        fact.len += count;
        self.ingest_generation += 1;
        Ok(count)
    }
}
