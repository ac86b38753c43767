use std::collections::{BTreeMap, BTreeSet};

use super::{Dataset, Row};
use crate::error::{Error, Result};

/// Per-dimension sets of allowed dimension row ordinals. A dimension that is
/// absent from the map is unrestricted.
pub type DimFilter = BTreeMap<String, BTreeSet<u32>>;

/// Output of a star join: one row per surviving fact row, in fact row order.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRows {
    pub columns: Vec<String>,
    pub fact_ids: Vec<u32>,
    pub rows: Vec<Row>,
}

/// Resolves a filter into one membership mask per foreign key (`None` = all).
fn fk_masks(ds: &Dataset, filters: &DimFilter) -> Result<Vec<Option<Vec<bool>>>> {
    let mut masks = vec![None; ds.fact.foreign_keys.len()];
    for (name, ids) in filters {
        let d = ds
            .dimension_index(name)
            .ok_or_else(|| Error::UnknownDimension(name.clone()))?;
        let dim = &ds.dimensions[d];
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= dim.len()) {
            return Err(Error::Schema(format!(
                "row ordinal {bad} out of range for `{}` ({} rows)",
                dim.name,
                dim.len()
            )));
        }
        // Dimensions outside the star do not restrict fact rows.
        if let Some(fk) = ds.fk_for_dimension(d) {
            let mut mask = vec![false; dim.len()];
            for &id in ids {
                mask[id as usize] = true;
            }
            masks[fk] = Some(mask);
        }
    }
    Ok(masks)
}

/// Fact row ids whose every foreign key lands inside its dimension's filter
/// set, ascending.
pub fn fact_rows_matching(ds: &Dataset, filters: &DimFilter) -> Result<Vec<u32>> {
    let masks = fk_masks(ds, filters)?;
    let active: Vec<(&[u32], &[bool])> = masks
        .iter()
        .enumerate()
        .filter_map(|(fk, m)| m.as_deref().map(|m| (ds.fact.fk_column(fk), m)))
        .collect();
    let n = ds.fact.len() as u32;
    Ok((0..n)
        .filter(|&f| {
            active
                .iter()
                .all(|(column, mask)| mask[column[f as usize] as usize])
        })
        .collect())
}

impl Dataset {
    /// The star-join row of fact row `f`: measures then every joined
    /// dimension's attributes, aligned with [`Dataset::star_columns`].
    pub fn joined_row(&self, f: u32) -> Row {
        let mut values = Vec::with_capacity(self.star_width());
        for m in 0..self.fact.measures.len() {
            values.push(self.fact.measure(f, m).clone());
        }
        for fk in 0..self.fact.foreign_keys.len() {
            let dim = &self.dimensions[self.fact.fk_dimension(fk)];
            values.extend(dim.row(self.fact.dimension_row(fk, f)).values.iter().cloned());
        }
        Row::new(values)
    }

    pub fn star_width(&self) -> usize {
        self.fact.measures.len()
            + (0..self.fact.foreign_keys.len())
                .map(|fk| self.dimensions[self.fact.fk_dimension(fk)].attributes.len())
                .sum::<usize>()
    }
}

/// Joins the fact table with every dimension it references, keeping only
/// fact rows whose dimension rows pass `filters`.
pub fn star_join(ds: &Dataset, filters: Option<&DimFilter>) -> Result<JoinedRows> {
    let fact_ids = match filters {
        Some(filters) => fact_rows_matching(ds, filters)?,
        None => (0..ds.fact.len() as u32).collect(),
    };
    let rows = fact_ids.iter().map(|&f| ds.joined_row(f)).collect();
    Ok(JoinedRows {
        columns: ds.star_columns(),
        fact_ids,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::value::Value;

    /// Nested loops over fact x Car x Owner x Advertisement, matching keys by
    /// value rather than through the resolved ordinals.
    fn nested_loop_join(ds: &Dataset, allowed_cars: &BTreeSet<u32>) -> Vec<Row> {
        let mut out = Vec::new();
        let columns = ds.star_columns();
        let fk_names: Vec<_> = ds.fact.foreign_keys.iter().map(|fk| fk.column.clone()).collect();
        let sales_csv = fixtures::CARS_MINI_SALES;
        let mut reader = csv::Reader::from_reader(sales_csv.as_bytes());
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        for record in reader.records() {
            let record = record.unwrap();
            let cell = |name: &str| record[header.iter().position(|h| h == name).unwrap()].to_string();
            let mut joined = vec![Value::parse_cell(&cell("euro_sold"), crate::value::Kind::Decimal).unwrap()];
            let mut keep = true;
            for (fk, col) in fk_names.iter().enumerate() {
                let dim = &ds.dimensions[ds.fact.fk_dimension(fk)];
                let key: i64 = cell(col).parse().unwrap();
                let mut found = false;
                for (i, row) in dim.rows.iter().enumerate() {
                    if row.values[dim.key_position()] == Value::Integer(key) {
                        if dim.name == "Car" && !allowed_cars.contains(&(i as u32)) {
                            keep = false;
                        }
                        joined.extend(row.values.iter().cloned());
                        found = true;
                    }
                }
                assert!(found);
            }
            if keep {
                assert_eq!(joined.len(), columns.len());
                out.push(Row::new(joined));
            }
        }
        out
    }

    #[test]
    fn unfiltered_join_is_lossless() {
        let ds = fixtures::cars_mini();
        let joined = star_join(&ds, None).unwrap();
        assert_eq!(joined.rows.len(), 12);
        assert_eq!(joined.fact_ids, (0..12).collect::<Vec<_>>());
        let all: BTreeSet<u32> = (0..8).collect();
        assert_eq!(joined.rows, nested_loop_join(&ds, &all));
    }

    #[test]
    fn empty_filter_annihilates() {
        let ds = fixtures::cars_mini();
        let filters = DimFilter::from([("Car".to_string(), BTreeSet::new())]);
        assert!(star_join(&ds, Some(&filters)).unwrap().rows.is_empty());
    }

    #[test]
    fn black_car_filter_matches_nested_loop_oracle() {
        let ds = fixtures::cars_mini();
        let car = ds.dimension("Car").unwrap();
        let color = car.attribute_index("color").unwrap();
        let black: BTreeSet<u32> = car
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.values[color] == Value::from("black"))
            .map(|(i, _)| i as u32)
            .collect();
        let filters = DimFilter::from([("car".to_string(), black.clone())]);
        let joined = star_join(&ds, Some(&filters)).unwrap();
        assert_eq!(joined.rows, nested_loop_join(&ds, &black));
        assert!(!joined.rows.is_empty() && joined.rows.len() < 12);
    }

    #[test]
    fn unknown_dimension_in_filter() {
        let ds = fixtures::cars_mini();
        let filters = DimFilter::from([("Dealer".to_string(), BTreeSet::new())]);
        assert!(matches!(star_join(&ds, Some(&filters)), Err(Error::UnknownDimension(_))));
    }

    #[test]
    fn out_of_range_ordinal_is_rejected() {
        let ds = fixtures::cars_mini();
        let filters = DimFilter::from([("Car".to_string(), BTreeSet::from([99]))]);
        assert!(star_join(&ds, Some(&filters)).is_err());
    }
}
