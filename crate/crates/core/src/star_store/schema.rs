use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AttributeDef, Dataset, DimensionTable, FactTable, ForeignKey, Role};
use crate::error::{Error, Result};
use crate::value::Kind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub fact: FactDoc,
    #[serde(default)]
    pub dimensions: Vec<DimensionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactDoc {
    pub name: String,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default)]
    pub measures: Vec<MeasureDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDoc {
    pub name: String,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionDoc {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(s: &str) -> Result<()> {
    if is_identifier(s) {
        Ok(())
    } else {
        Err(Error::Schema(format!("`{s}` is not a valid identifier")))
    }
}

/// Parses a schema document and builds an empty dataset from it.
pub fn load_schema(doc: &str) -> Result<Dataset> {
    let doc: SchemaDoc = serde_json::from_str(doc)?;
    Dataset::from_schema(doc)
}

impl Dataset {
    pub fn from_schema(doc: SchemaDoc) -> Result<Dataset> {
        let mut table_names = HashSet::new();
        check_identifier(&doc.fact.name)?;
        table_names.insert(doc.fact.name.to_ascii_lowercase());

        let mut dimensions = Vec::with_capacity(doc.dimensions.len());
        for dim in doc.dimensions {
            check_identifier(&dim.name)?;
            if !table_names.insert(dim.name.to_ascii_lowercase()) {
                return Err(Error::Schema(format!("duplicate table name `{}`", dim.name)));
            }
            let mut attr_names = HashSet::new();
            for attr in &dim.attributes {
                check_identifier(&attr.name)?;
                if !attr_names.insert(attr.name.to_ascii_lowercase()) {
                    return Err(Error::Schema(format!(
                        "duplicate attribute `{}` in `{}`",
                        attr.name, dim.name
                    )));
                }
            }
            let keys: Vec<usize> = dim
                .attributes
                .iter()
                .enumerate()
                .filter(|(_, a)| a.role == Role::Key)
                .map(|(i, _)| i)
                .collect();
            if keys.len() != 1 {
                return Err(Error::Schema(format!(
                    "dimension `{}` must declare exactly one key attribute, found {}",
                    dim.name,
                    keys.len()
                )));
            }
            dimensions.push(DimensionTable::new(dim.name, dim.attributes, keys[0]));
        }

        let mut fact_columns = HashSet::new();
        let mut fk_dimensions = Vec::with_capacity(doc.fact.foreign_keys.len());
        for fk in &doc.fact.foreign_keys {
            check_identifier(&fk.column)?;
            let d = dimensions
                .iter()
                .position(|t| t.name.eq_ignore_ascii_case(&fk.dimension))
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "fact `{}` references undeclared dimension `{}`",
                        doc.fact.name, fk.dimension
                    ))
                })?;
            if fk_dimensions.contains(&d) {
                return Err(Error::Schema(format!(
                    "dimension `{}` is referenced by more than one foreign key",
                    fk.dimension
                )));
            }
            if !fact_columns.insert(fk.column.to_ascii_lowercase()) {
                return Err(Error::Schema(format!("duplicate fact column `{}`", fk.column)));
            }
            fk_dimensions.push(d);
        }

        let mut measures = Vec::with_capacity(doc.fact.measures.len());
        for m in doc.fact.measures {
            check_identifier(&m.name)?;
            if !m.kind.is_numeric() {
                return Err(Error::Schema(format!(
                    "measure `{}` must be integer or decimal, not {}",
                    m.name, m.kind
                )));
            }
            if !fact_columns.insert(m.name.to_ascii_lowercase()) {
                return Err(Error::Schema(format!("duplicate fact column `{}`", m.name)));
            }
            measures.push(AttributeDef {
                name: m.name,
                kind: m.kind,
                role: Role::Attribute,
            });
        }

        let foreign_keys: Vec<ForeignKey> = doc
            .fact
            .foreign_keys
            .into_iter()
            .zip(&fk_dimensions)
            .map(|(fk, &d)| ForeignKey {
                dimension: dimensions[d].name.clone(),
                column: fk.column,
            })
            .collect();

        Ok(Dataset {
            fact: FactTable {
                name: doc.fact.name,
                fk_columns: vec![Vec::new(); foreign_keys.len()],
                measure_columns: vec![Vec::new(); measures.len()],
                foreign_keys,
                measures,
                fk_dimensions,
                len: 0,
            },
            dimensions,
            ingest_generation: 0,
        })
    }

    /// Reconstructs the schema document (used when persisting a warehouse).
    pub fn schema_doc(&self) -> SchemaDoc {
        SchemaDoc {
            fact: FactDoc {
                name: self.fact.name.clone(),
                foreign_keys: self.fact.foreign_keys.clone(),
                measures: self
                    .fact
                    .measures
                    .iter()
                    .map(|m| MeasureDoc {
                        name: m.name.clone(),
                        kind: m.kind,
                    })
                    .collect(),
            },
            dimensions: self
                .dimensions
                .iter()
                .map(|d| DimensionDoc {
                    name: d.name.clone(),
                    attributes: d.attributes.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn cars_schema_loads() {
        let ds = load_schema(fixtures::CARS_MINI_SCHEMA).unwrap();
        assert_eq!(ds.fact.name, "Sales");
        assert_eq!(ds.dimensions.len(), 3);
        assert_eq!(ds.fact.measures.len(), 1);
        assert_eq!(ds.fact.measures[0].name, "euro_sold");
        assert_eq!(ds.ingest_generation(), 0);
        assert!(ds.fact.is_empty());
        assert!(ds.dimensions.iter().all(|d| d.is_empty()));
    }

    #[test]
    fn zero_dimensions_is_a_degenerate_star() {
        let ds = load_schema(r#"{"fact": {"name": "F", "measures": [{"name": "m", "kind": "integer"}]}, "dimensions": []}"#)
            .unwrap();
        assert!(ds.dimensions.is_empty());
        assert_eq!(ds.star_columns(), vec!["m"]);
    }

    #[test]
    fn undeclared_dimension_is_rejected() {
        let doc = r#"{"fact": {"name": "Sales", "foreign_keys": [{"dimension": "Dealer", "column": "dealer_id"}], "measures": []}, "dimensions": []}"#;
        let err = load_schema(doc).unwrap_err();
        assert!(err.to_string().contains("Dealer"), "{err}");
    }

    #[test]
    fn duplicate_table_names_are_rejected() {
        let doc = r#"{"fact": {"name": "Sales"}, "dimensions": [
            {"name": "Car", "attributes": [{"name": "id", "kind": "integer", "role": "key"}]},
            {"name": "car", "attributes": [{"name": "id", "kind": "integer", "role": "key"}]}]}"#;
        assert!(matches!(load_schema(doc), Err(Error::Schema(_))));
        let doc = r#"{"fact": {"name": "Car"}, "dimensions": [
            {"name": "Car", "attributes": [{"name": "id", "kind": "integer", "role": "key"}]}]}"#;
        assert!(matches!(load_schema(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn key_count_must_be_one() {
        let none = r#"{"fact": {"name": "F"}, "dimensions": [
            {"name": "D", "attributes": [{"name": "a", "kind": "integer", "role": "attribute"}]}]}"#;
        let two = r#"{"fact": {"name": "F"}, "dimensions": [
            {"name": "D", "attributes": [{"name": "a", "kind": "integer", "role": "key"}, {"name": "b", "kind": "text", "role": "key"}]}]}"#;
        assert!(matches!(load_schema(none), Err(Error::Schema(_))));
        assert!(matches!(load_schema(two), Err(Error::Schema(_))));
    }

    #[test]
    fn measures_must_be_numeric() {
        let doc = r#"{"fact": {"name": "F", "measures": [{"name": "m", "kind": "text"}]}, "dimensions": []}"#;
        assert!(matches!(load_schema(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn attribute_names_are_unique_case_insensitively() {
        let doc = r#"{"fact": {"name": "F"}, "dimensions": [
            {"name": "D", "attributes": [{"name": "id", "kind": "integer", "role": "key"}, {"name": "ID", "kind": "text"}]}]}"#;
        assert!(matches!(load_schema(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn schema_doc_round_trips() {
        let ds = load_schema(fixtures::CARS_MINI_SCHEMA).unwrap();
        let again = Dataset::from_schema(ds.schema_doc()).unwrap();
        assert_eq!(ds, again);
    }
}
