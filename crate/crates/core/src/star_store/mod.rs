//! The star-schema warehouse: one fact table keyed into n dimension tables.
//!
//! Dimension rows are addressed by their ordinal in ingestion order. The fact
//! table is stored column-wise: every foreign key column is kept as resolved
//! dimension row ordinals, so a star join never has to hash keys again.

mod ingest;
mod join;
mod schema;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Kind, Value};

pub use join::{fact_rows_matching, star_join, DimFilter, JoinedRows};
pub use schema::{load_schema, SchemaDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Key,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: Kind,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::Attribute
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub values: Vec<Value>,
}

impl Row {
    pub fn new(values: Vec<Value>) -> Self {
        Row { values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionTable {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
    pub rows: Vec<Row>,
    key_position: usize,
    key_index: HashMap<Value, u32>,
}

impl DimensionTable {
    pub(crate) fn new(name: String, attributes: Vec<AttributeDef>, key_position: usize) -> Self {
        DimensionTable {
            name,
            attributes,
            rows: Vec::new(),
            key_position,
            key_index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn key_attribute(&self) -> &AttributeDef {
        &self.attributes[self.key_position]
    }

    pub fn key_position(&self) -> usize {
        self.key_position
    }

    /// Case-insensitive attribute lookup.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes
            .iter()
            .position(|a| a.name.eq_ignore_ascii_case(name))
    }

    /// Row ordinal holding `key`.
    pub fn lookup(&self, key: &Value) -> Option<u32> {
        self.key_index.get(key).copied()
    }

    pub fn row(&self, id: u32) -> &Row {
        &self.rows[id as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub dimension: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactTable {
    pub name: String,
    pub foreign_keys: Vec<ForeignKey>,
    pub measures: Vec<AttributeDef>,
    /// Dimension position (in `Dataset::dimensions`) of each foreign key.
    fk_dimensions: Vec<usize>,
    /// One column per foreign key, holding the referenced dimension row ordinal.
    fk_columns: Vec<Vec<u32>>,
    measure_columns: Vec<Vec<Value>>,
    len: usize,
}

impl FactTable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn measure_index(&self, name: &str) -> Option<usize> {
        self.measures
            .iter()
            .position(|m| m.name.eq_ignore_ascii_case(name))
    }

    pub fn measure(&self, row: u32, measure: usize) -> &Value {
        &self.measure_columns[measure][row as usize]
    }

    /// Dimension row ordinal referenced by foreign key `fk` of fact row `row`.
    pub fn dimension_row(&self, fk: usize, row: u32) -> u32 {
        self.fk_columns[fk][row as usize]
    }

    pub fn fk_column(&self, fk: usize) -> &[u32] {
        &self.fk_columns[fk]
    }

    /// Position in `Dataset::dimensions` of the dimension behind foreign key `fk`.
    pub fn fk_dimension(&self, fk: usize) -> usize {
        self.fk_dimensions[fk]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub fact: FactTable,
    pub dimensions: Vec<DimensionTable>,
    ingest_generation: u64,
}

impl Dataset {
    pub fn ingest_generation(&self) -> u64 {
        self.ingest_generation
    }

    /// Case-insensitive dimension lookup.
    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dimensions
            .iter()
            .position(|d| d.name.eq_ignore_ascii_case(name))
    }

    pub fn dimension(&self, name: &str) -> Result<&DimensionTable> {
        self.dimension_index(name)
            .map(|i| &self.dimensions[i])
            .ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    /// Foreign key position joining dimension `dim` into the star, if any.
    pub fn fk_for_dimension(&self, dim: usize) -> Option<usize> {
        self.fact.fk_dimensions.iter().position(|&d| d == dim)
    }

    pub fn is_fact(&self, name: &str) -> bool {
        self.fact.name.eq_ignore_ascii_case(name)
    }

    /// Column names of a star-join row: measures bare, then `Dimension.attribute`
    /// for every dimension in foreign-key order.
    pub fn star_columns(&self) -> Vec<String> {
        let mut columns: Vec<String> = self.fact.measures.iter().map(|m| m.name.clone()).collect();
        for &d in &self.fact.fk_dimensions {
            let dim = &self.dimensions[d];
            for attr in &dim.attributes {
                columns.push(format!("{}.{}", dim.name, attr.name));
            }
        }
        columns
    }
}

#[cfg(test)]
mod tests {
    use crate::fixtures;

    #[test]
    fn key_index_agrees_with_linear_scan() {
        let ds = fixtures::cars_mini();
        for dim in &ds.dimensions {
            for (i, row) in dim.rows.iter().enumerate() {
                let key = &row.values[dim.key_position()];
                let scanned = dim
                    .rows
                    .iter()
                    .position(|r| &r.values[dim.key_position()] == key)
                    .unwrap();
                assert_eq!(dim.lookup(key), Some(scanned as u32));
                assert_eq!(scanned, i);
            }
        }
    }

    #[test]
    fn star_columns_prefix_dimension_attributes() {
        let ds = fixtures::cars_mini();
        let columns = ds.star_columns();
        assert_eq!(columns[0], "euro_sold");
        assert!(columns.contains(&"Car.color".to_string()));
        assert!(columns.contains(&"Advertisement.region".to_string()));
    }
}
