//! Reference implementation for tests: personalized query answers computed by
//! brute force, sharing no code with view building or query evaluation.
//!
//! Everything here works by name lookups and nested loops over the stored
//! tables. It is slow on purpose and only meant for small instances.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::preference::{PrefValue, Preference};
use crate::query::{AnsweredFrom, Aggregate, ColumnRef, Projection, Query, QueryResult, SelectItem, Source};
use crate::star_store::Dataset;
use crate::value::{Kind, Value};

/// Ordering of two non-null cells, with an integer literal promoted when
/// compared against a decimal cell. `None` when the pair is not comparable.
fn order(cell: &Value, literal: &Value) -> Option<Ordering> {
    match (cell, literal) {
        (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
        (Value::Decimal(a), Value::Decimal(b)) => Some(a.total_cmp(b)),
        (Value::Decimal(a), Value::Integer(b)) => Some(a.total_cmp(&(*b as f64))),
        (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
        (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
        _ => None,
    }
}

fn satisfies(cell: &Value, op: crate::operator::Operator, literal: &Value) -> Result<bool> {
    use crate::operator::Operator::*;
    if cell.is_null() || literal.is_null() {
        return Ok(false);
    }
    let Some(o) = order(cell, literal) else {
        return Err(Error::KindMismatch {
            context: "oracle comparison".into(),
            expected: cell.kind().unwrap_or(Kind::Text),
            found: literal.kind().unwrap_or(Kind::Text),
        });
    };
    Ok(match op {
        Eq => o == Ordering::Equal,
        Neq => o != Ordering::Equal,
        Lt => o == Ordering::Less,
        Lte => o != Ordering::Greater,
        Gt => o == Ordering::Greater,
        Gte => o != Ordering::Less,
    })
}

fn same(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

fn find_dimension(ds: &Dataset, name: &str) -> Result<usize> {
    (0..ds.dimensions.len())
        .find(|&d| same(&ds.dimensions[d].name, name))
        .ok_or_else(|| Error::UnknownDimension(name.to_string()))
}

fn find_attribute(ds: &Dataset, d: usize, name: &str) -> Result<usize> {
    let dim = &ds.dimensions[d];
    (0..dim.attributes.len())
        .find(|&a| same(&dim.attributes[a].name, name))
        .ok_or_else(|| Error::unknown_attribute(&dim.name, name))
}

fn find_fk(ds: &Dataset, d: usize) -> Option<usize> {
    ds.fact
        .foreign_keys
        .iter()
        .position(|fk| same(&fk.dimension, &ds.dimensions[d].name))
}

/// Allowed rows of each dimension: all rows without preferences, the rows
/// meeting every preference, or else the rows meeting more than half.
fn allowed_rows(ds: &Dataset, prefs: &[Preference]) -> Result<Vec<Vec<bool>>> {
    for p in prefs {
        let d = find_dimension(ds, &p.dimension)?;
        find_attribute(ds, d, &p.attribute)?;
    }
    let mut allowed = Vec::new();
    for d in 0..ds.dimensions.len() {
        let dim = &ds.dimensions[d];
        let mine: Vec<&Preference> = prefs.iter().filter(|p| same(&p.dimension, &dim.name)).collect();
        let mut counts = vec![0usize; dim.rows.len()];
        for p in &mine {
            let a = find_attribute(ds, d, &p.attribute)?;
            for (r, row) in dim.rows.iter().enumerate() {
                let hit = match &p.value {
                    PrefValue::All => true,
                    PrefValue::Value(lit) => satisfies(&row.values[a], p.operator, lit)?,
                };
                if hit {
                    counts[r] += 1;
                }
            }
        }
        let n = mine.len();
        let every: Vec<bool> = counts.iter().map(|&c| c == n).collect();
        if every.iter().any(|&b| b) {
            allowed.push(every);
        } else {
            allowed.push(counts.iter().map(|&c| c * 2 > n).collect());
        }
    }
    Ok(allowed)
}

/// A record being queried: a fact row (with its joined dimension rows) or a
/// dimension row.
#[derive(Clone, Copy)]
enum Record {
    Fact(u32),
    Dim(usize, u32),
}

fn cell(ds: &Dataset, rec: Record, c: &ColumnRef) -> Result<Value> {
    match rec {
        Record::Fact(f) => {
            if same(&c.table, &ds.fact.name) {
                let m = ds
                    .fact
                    .measures
                    .iter()
                    .position(|m| same(&m.name, &c.name))
                    .ok_or_else(|| Error::unknown_attribute(&c.table, &c.name))?;
                return Ok(ds.fact.measure(f, m).clone());
            }
            let d = find_dimension(ds, &c.table)?;
            let a = find_attribute(ds, d, &c.name)?;
            let fk = find_fk(ds, d).ok_or_else(|| Error::InvalidQuery(format!("`{}` is not joined", c.table)))?;
            Ok(ds.dimensions[d].rows[ds.fact.dimension_row(fk, f) as usize].values[a].clone())
        }
        Record::Dim(d, r) => {
            if !same(&c.table, &ds.dimensions[d].name) {
                return Err(Error::InvalidQuery(format!("`{c}` is not reachable")));
            }
            let a = find_attribute(ds, d, &c.name)?;
            Ok(ds.dimensions[d].rows[r as usize].values[a].clone())
        }
    }
}

fn label(ds: &Dataset, c: &ColumnRef) -> String {
    if same(&c.table, &ds.fact.name) {
        c.name.clone()
    } else {
        format!("{}.{}", c.table, c.name)
    }
}

/// Answers `q` as if over the view of `prefs`, by brute force.
pub fn oracle_evaluate(q: &Query, prefs: &[Preference], ds: &Dataset) -> Result<QueryResult> {
    let allowed = allowed_rows(ds, prefs)?;

    let mut records = Vec::new();
    match &q.source {
        Source::Star => {
            for f in 0..ds.fact.len() as u32 {
                let mut keep = true;
                for fk in 0..ds.fact.foreign_keys.len() {
                    let d = find_dimension(ds, &ds.fact.foreign_keys[fk].dimension)?;
                    if !allowed[d][ds.fact.dimension_row(fk, f) as usize] {
                        keep = false;
                    }
                }
                if keep {
                    records.push(Record::Fact(f));
                }
            }
        }
        Source::Dimension(name) => {
            let d = find_dimension(ds, name)?;
            for r in 0..ds.dimensions[d].rows.len() as u32 {
                if allowed[d][r as usize] {
                    records.push(Record::Dim(d, r));
                }
            }
        }
    }

    let mut kept = Vec::new();
    for rec in records {
        let mut pass = true;
        for p in &q.predicates {
            if !satisfies(&cell(ds, rec, &p.column)?, p.operator, &p.value)? {
                pass = false;
            }
        }
        if pass {
            kept.push(rec);
        }
    }

    let answered_from = if prefs.is_empty() {
        AnsweredFrom::FullWarehouse
    } else {
        AnsweredFrom::UserView
    };
    let items: Vec<SelectItem> = match &q.projection {
        Projection::Items(items) => items.clone(),
        Projection::All => {
            let mut cols = Vec::new();
            match &q.source {
                Source::Star => {
                    for m in &ds.fact.measures {
                        cols.push(ColumnRef { table: ds.fact.name.clone(), name: m.name.clone() });
                    }
                    for fk in &ds.fact.foreign_keys {
                        let dim = &ds.dimensions[find_dimension(ds, &fk.dimension)?];
                        for a in &dim.attributes {
                            cols.push(ColumnRef { table: dim.name.clone(), name: a.name.clone() });
                        }
                    }
                }
                Source::Dimension(name) => {
                    let dim = &ds.dimensions[find_dimension(ds, name)?];
                    for a in &dim.attributes {
                        cols.push(ColumnRef { table: dim.name.clone(), name: a.name.clone() });
                    }
                }
            }
            cols.into_iter().map(SelectItem::Column).collect()
        }
    };
    let columns: Vec<String> = items
        .iter()
        .map(|i| match i {
            SelectItem::Column(c) => label(ds, c),
            SelectItem::Aggregate(a, c) => format!("{}({})", a.as_str(), c.name),
        })
        .collect();

    let grouped = !q.group_by.is_empty() || items.iter().any(|i| matches!(i, SelectItem::Aggregate(..)));
    if !grouped {
        let mut rows = Vec::new();
        for rec in kept {
            let mut row = Vec::new();
            for i in &items {
                if let SelectItem::Column(c) = i {
                    row.push(cell(ds, rec, c)?);
                }
            }
            rows.push(row);
        }
        return Ok(QueryResult { columns, rows, answered_from });
    }

    // Groups in first-seen order; callers compare results as multisets.
    let mut groups: Vec<(Vec<Value>, Vec<Record>)> = Vec::new();
    if q.group_by.is_empty() {
        groups.push((Vec::new(), Vec::new()));
    }
    for rec in kept {
        let key = q.group_by.iter().map(|g| cell(ds, rec, g)).collect::<Result<Vec<_>>>()?;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(rec),
            None => groups.push((key, vec![rec])),
        }
    }

    let mut rows = Vec::new();
    for (key, members) in groups {
        let mut row = Vec::new();
        for item in &items {
            match item {
                SelectItem::Column(c) => {
                    let k = q.group_by.iter().position(|g| g == c).ok_or_else(|| {
                        Error::InvalidQuery(format!("`{c}` must appear in GROUP BY"))
                    })?;
                    row.push(key[k].clone());
                }
                SelectItem::Aggregate(a, c) => {
                    let values = members.iter().map(|&r| cell(ds, r, c)).collect::<Result<Vec<_>>>()?;
                    row.push(aggregate(*a, &values, &columns[row.len()])?);
                }
            }
        }
        rows.push(row);
    }
    Ok(QueryResult { columns, rows, answered_from })
}

fn aggregate(a: Aggregate, values: &[Value], name: &str) -> Result<Value> {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_null()).collect();
    if a == Aggregate::Count {
        return Ok(Value::Integer(values.len() as i64));
    }
    if present.is_empty() {
        return Ok(Value::Null);
    }
    let as_f64 = |v: &Value| match v {
        Value::Integer(i) => *i as f64,
        Value::Decimal(d) => *d,
        _ => f64::NAN,
    };
    Ok(match a {
        Aggregate::Count => unreachable!(),
        Aggregate::Sum => match present[0] {
            Value::Integer(_) => {
                let total: i128 = present.iter().map(|v| if let Value::Integer(i) = v { *i as i128 } else { 0 }).sum();
                Value::Integer(i64::try_from(total).map_err(|_| Error::Overflow(name.to_string()))?)
            }
            _ => Value::Decimal(present.iter().map(|v| as_f64(v)).sum()),
        },
        Aggregate::Avg => Value::Decimal(present.iter().map(|v| as_f64(v)).sum::<f64>() / present.len() as f64),
        Aggregate::Min | Aggregate::Max => {
            let mut best = present[0];
            for v in &present[1..] {
                let o = order(v, best).unwrap_or(Ordering::Equal);
                if (a == Aggregate::Min && o == Ordering::Less) || (a == Aggregate::Max && o == Ordering::Greater) {
                    best = v;
                }
            }
            best.clone()
        }
    })
}

/// Relative tolerance for decimal aggregates, which may be summed in a
/// different order.
pub const DECIMAL_TOLERANCE: f64 = 1e-9;

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Decimal(x), Value::Decimal(y)) => {
            x.to_bits() == y.to_bits() || (x - y).abs() <= DECIMAL_TOLERANCE * x.abs().max(y.abs()).max(1.0)
        }
        _ => a == b,
    }
}

fn row_cmp(a: &[Value], b: &[Value]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.sort_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Compares two results as multisets of rows. Columns must match exactly;
/// decimal cells may differ by [`DECIMAL_TOLERANCE`]. The source a result
/// was answered from is not compared.
pub fn compare_results(actual: &QueryResult, expected: &QueryResult) -> std::result::Result<(), String> {
    if actual.columns != expected.columns {
        return Err(format!("columns differ: {:?} vs {:?}", actual.columns, expected.columns));
    }
    if actual.rows.len() != expected.rows.len() {
        return Err(format!("row counts differ: {} vs {}", actual.rows.len(), expected.rows.len()));
    }
    let mut a = actual.rows.clone();
    let mut e = expected.rows.clone();
    a.sort_by(|x, y| row_cmp(x, y));
    e.sort_by(|x, y| row_cmp(x, y));
    for (x, y) in a.iter().zip(&e) {
        if x.len() != y.len() || !x.iter().zip(y).all(|(p, q)| close(p, q)) {
            return Err(format!("row mismatch: {x:?} vs {y:?}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::preference::normalize_profile;
    use crate::query::{evaluate, parse_query, Target};
    use crate::view::{build_view, ViewMode};

    #[test]
    fn empty_profile_matches_the_warehouse() {
        let ds = fixtures::cars_mini();
        for text in [
            fixtures::WIDE_QUERY,
            "SELECT * FROM Sales WHERE Owner.seller_type = 'dealer'",
            "SELECT Owner.city, avg(euro_sold), max(euro_sold) FROM Sales GROUP BY Owner.city",
        ] {
            let q = parse_query(text, &ds).unwrap();
            let a = evaluate(&q, &ds, Target::Warehouse).unwrap();
            let b = oracle_evaluate(&q, &[], &ds).unwrap();
            compare_results(&a, &b).unwrap();
        }
    }

    #[test]
    fn car_buyer_view_matches() {
        let ds = fixtures::cars_mini();
        let (profile, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
        let view = build_view(&ds, &profile, ViewMode::Ids).unwrap();
        for text in [fixtures::WIDE_QUERY, fixtures::NARROW_QUERY, "SELECT * FROM Sales"] {
            let q = parse_query(text, &ds).unwrap();
            let a = evaluate(&q, &ds, Target::View(&view)).unwrap();
            let b = oracle_evaluate(&q, &profile.preferences, &ds).unwrap();
            compare_results(&a, &b).unwrap();
        }
    }

    #[test]
    fn compare_detects_differences() {
        let r = |rows: Vec<Vec<Value>>| QueryResult {
            columns: vec!["x".into()],
            rows,
            answered_from: AnsweredFrom::FullWarehouse,
        };
        assert!(compare_results(&r(vec![vec![1.into()], vec![2.into()]]), &r(vec![vec![2.into()], vec![1.into()]])).is_ok());
        assert!(compare_results(&r(vec![vec![1.into()]]), &r(vec![vec![2.into()]])).is_err());
        assert!(compare_results(&r(vec![vec![1.into()]]), &r(vec![])).is_err());
        assert!(compare_results(&r(vec![vec![0.1.into()]]), &r(vec![vec![(0.1 + 1e-13).into()]])).is_ok());
        assert!(compare_results(&r(vec![vec![0.1.into()]]), &r(vec![vec![0.2.into()]])).is_err());
    }
}
