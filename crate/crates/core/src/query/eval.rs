use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{column_label, ColumnRef, Aggregate, Projection, Query, SelectItem, Source};
use crate::error::{Error, Result};
use crate::star_store::{Dataset, Row};
use crate::value::{Kind, Value};
use crate::view::{MaterializedView, ViewMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnsweredFrom {
    FullWarehouse,
    UserView,
    GroupView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub answered_from: AnsweredFrom,
}

impl QueryResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Value::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "answered_from": self.answered_from,
        })
    }
}

/// What a query scans.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Warehouse,
    View(&'a MaterializedView),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Col {
    Measure(usize),
    Dim { dim: usize, attr: usize },
}

/// Row-at-a-time access to whatever the query scans.
trait RowSource {
    fn len(&self) -> usize;
    fn value(&self, i: usize, col: Col) -> &Value;
}

/// Star rows resolved through the base tables, optionally restricted to a
/// subset of fact ids.
struct BaseStar<'a> {
    ds: &'a Dataset,
    fact_ids: Option<&'a [u32]>,
    fk_of_dim: Vec<Option<usize>>,
}

impl RowSource for BaseStar<'_> {
    fn len(&self) -> usize {
        self.fact_ids.map_or(self.ds.fact.len(), <[u32]>::len)
    }

    fn value(&self, i: usize, col: Col) -> &Value {
        let f = self.fact_ids.map_or(i as u32, |ids| ids[i]);
        match col {
            Col::Measure(m) => self.ds.fact.measure(f, m),
            Col::Dim { dim, attr } => {
                let fk = self.fk_of_dim[dim].expect("star column resolved to a joined dimension");
                &self.ds.dimensions[dim].row(self.ds.fact.dimension_row(fk, f)).values[attr]
            }
        }
    }
}

/// Pre-joined rows of a `Full` view.
struct JoinedStar<'a> {
    rows: &'a [Row],
    dim_offset: Vec<Option<usize>>,
}

impl RowSource for JoinedStar<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn value(&self, i: usize, col: Col) -> &Value {
        let pos = match col {
            Col::Measure(m) => m,
            Col::Dim { dim, attr } => self.dim_offset[dim].expect("star column resolved to a joined dimension") + attr,
        };
        &self.rows[i].values[pos]
    }
}

struct DimRows<'a> {
    ds: &'a Dataset,
    dim: usize,
    ids: Option<Vec<u32>>,
}

impl RowSource for DimRows<'_> {
    fn len(&self) -> usize {
        self.ids.as_ref().map_or(self.ds.dimensions[self.dim].len(), Vec::len)
    }

    fn value(&self, i: usize, col: Col) -> &Value {
        let Col::Dim { attr, .. } = col else {
            unreachable!("dimension queries only reference their own attributes")
        };
        let id = self.ids.as_ref().map_or(i as u32, |ids| ids[i]);
        &self.ds.dimensions[self.dim].row(id).values[attr]
    }
}

fn resolve(ds: &Dataset, c: &ColumnRef) -> Result<(Col, Kind)> {
    if ds.is_fact(&c.table) {
        let m = ds
            .fact
            .measure_index(&c.name)
            .ok_or_else(|| Error::unknown_attribute(&c.table, &c.name))?;
        return Ok((Col::Measure(m), ds.fact.measures[m].kind));
    }
    let dim = ds
        .dimension_index(&c.table)
        .ok_or_else(|| Error::UnknownTable(c.table.clone()))?;
    let attr = ds.dimensions[dim]
        .attribute_index(&c.name)
        .ok_or_else(|| Error::unknown_attribute(&c.table, &c.name))?;
    Ok((Col::Dim { dim, attr }, ds.dimensions[dim].attributes[attr].kind))
}

fn check_reachable(ds: &Dataset, q: &Query, col: Col, c: &ColumnRef) -> Result<()> {
    let ok = match (&q.source, col) {
        (Source::Star, Col::Measure(_)) => true,
        (Source::Star, Col::Dim { dim, .. }) => ds.fk_for_dimension(dim).is_some(),
        (Source::Dimension(name), Col::Dim { dim, .. }) => ds.dimensions[dim].name.eq_ignore_ascii_case(name),
        (Source::Dimension(_), Col::Measure(_)) => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidQuery(format!("`{c}` is not reachable from `{}`", q.table)))
    }
}

/// Evaluates `q` over the warehouse or over a materialized view.
///
/// Rows of ungrouped queries come out in source order (fact row order for
/// star queries, dimension row order otherwise). Grouped rows come out
/// ascending by group key.
pub fn evaluate(q: &Query, ds: &Dataset, target: Target<'_>) -> Result<QueryResult> {
    q.validate(ds)?;
    let answered_from = match target {
        Target::Warehouse => AnsweredFrom::FullWarehouse,
        Target::View(v) if v.is_group_view() => AnsweredFrom::GroupView,
        Target::View(_) => AnsweredFrom::UserView,
    };
    let (columns, rows) = match &q.source {
        Source::Star => {
            let fk_of_dim: Vec<Option<usize>> = (0..ds.dimensions.len()).map(|d| ds.fk_for_dimension(d)).collect();
            match target {
                Target::View(v) if v.mode == ViewMode::Full => {
                    let mut dim_offset = vec![None; ds.dimensions.len()];
                    let mut offset = ds.fact.measures.len();
                    for fk in 0..ds.fact.foreign_keys.len() {
                        let d = ds.fact.fk_dimension(fk);
                        dim_offset[d] = Some(offset);
                        offset += ds.dimensions[d].attributes.len();
                    }
                    if v.rows.len() != v.fact_ids.len() {
                        return Err(Error::InvalidQuery(format!("view for `{}` has no joined rows", v.owner)));
                    }
                    run(q, ds, &JoinedStar { rows: &v.rows, dim_offset })?
                }
                Target::View(v) => run(q, ds, &BaseStar { ds, fact_ids: Some(&v.fact_ids), fk_of_dim })?,
                Target::Warehouse => run(q, ds, &BaseStar { ds, fact_ids: None, fk_of_dim })?,
            }
        }
        Source::Dimension(name) => {
            let dim = ds.dimension_index(name).ok_or_else(|| Error::UnknownTable(name.clone()))?;
            let ids = match target {
                Target::Warehouse => None,
                Target::View(v) => v.vector(name).map(|vec| vec.ids.iter().copied().collect()),
            };
            run(q, ds, &DimRows { ds, dim, ids })?
        }
    };
    Ok(QueryResult {
        columns,
        rows,
        answered_from,
    })
}

type Output = (Vec<String>, Vec<Vec<Value>>);

fn run(q: &Query, ds: &Dataset, src: &dyn RowSource) -> Result<Output> {
    let mut preds = Vec::with_capacity(q.predicates.len());
    for p in &q.predicates {
        let (col, kind) = resolve(ds, &p.column)?;
        check_reachable(ds, q, col, &p.column)?;
        let literal = p.value.bind_literal(kind, &format!("predicate on `{}`", p.column))?;
        preds.push((col, p.operator, literal));
    }
    let selected: Vec<usize> = (0..src.len())
        .filter(|&i| {
            preds.iter().all(|(col, op, lit)| {
                // Same kind after binding, so only null can make this `None`.
                matches!(src.value(i, *col).compare(lit), Ok(Some(ord)) if op.holds(ord))
            })
        })
        .collect();

    if !q.is_grouped() {
        let (columns, cols) = projected_columns(q, ds)?;
        let rows = selected
            .iter()
            .map(|&i| cols.iter().map(|&c| src.value(i, c).clone()).collect())
            .collect();
        return Ok((columns, rows));
    }
    grouped(q, ds, src, &selected)
}

fn projected_columns(q: &Query, ds: &Dataset) -> Result<(Vec<String>, Vec<Col>)> {
    let refs: Vec<ColumnRef> = match &q.projection {
        Projection::All => all_columns(q, ds),
        Projection::Items(items) => items
            .iter()
            .map(|i| match i {
                SelectItem::Column(c) => Ok(c.clone()),
                SelectItem::Aggregate(..) => Err(Error::InvalidQuery("unexpected aggregate".into())),
            })
            .collect::<Result<_>>()?,
    };
    let mut cols = Vec::with_capacity(refs.len());
    for c in &refs {
        let (col, _) = resolve(ds, c)?;
        check_reachable(ds, q, col, c)?;
        cols.push(col);
    }
    Ok((refs.iter().map(|c| column_label(c, ds)).collect(), cols))
}

/// `SELECT *` columns: the star layout, or every attribute of the dimension.
fn all_columns(q: &Query, ds: &Dataset) -> Vec<ColumnRef> {
    let dim_attrs = |d: usize| {
        let dim = &ds.dimensions[d];
        dim.attributes.iter().map(move |a| ColumnRef {
            table: dim.name.clone(),
            name: a.name.clone(),
        })
    };
    match &q.source {
        Source::Star => ds
            .fact
            .measures
            .iter()
            .map(|m| ColumnRef {
                table: ds.fact.name.clone(),
                name: m.name.clone(),
            })
            .chain((0..ds.fact.foreign_keys.len()).flat_map(|fk| dim_attrs(ds.fact.fk_dimension(fk))))
            .collect(),
        Source::Dimension(name) => dim_attrs(ds.dimension_index(name).expect("validated source")).collect(),
    }
}

/// Group key with the total order of [`Value::sort_cmp`].
#[derive(Debug, Clone, PartialEq, Eq)]
struct GroupKey(Vec<Value>);

impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.sort_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| self.0.len().cmp(&other.0.len()))
    }
}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Acc {
    Count(i64),
    IntSum(Option<i64>),
    DecSum(Option<f64>),
    Avg { sum: f64, n: u64 },
    Min(Option<Value>),
    Max(Option<Value>),
}

impl Acc {
    fn new(agg: Aggregate, kind: Kind) -> Acc {
        match (agg, kind) {
            (Aggregate::Count, _) => Acc::Count(0),
            (Aggregate::Sum, Kind::Integer) => Acc::IntSum(None),
            (Aggregate::Sum, _) => Acc::DecSum(None),
            (Aggregate::Avg, _) => Acc::Avg { sum: 0.0, n: 0 },
            (Aggregate::Min, _) => Acc::Min(None),
            (Aggregate::Max, _) => Acc::Max(None),
        }
    }

    fn add(&mut self, v: &Value, label: &str) -> Result<()> {
        match self {
            Acc::Count(n) => *n += 1,
            _ if v.is_null() => {}
            Acc::IntSum(s) => {
                let Value::Integer(x) = v else { unreachable!("integer measure") };
                *s = Some(
                    s.unwrap_or(0)
                        .checked_add(*x)
                        .ok_or_else(|| Error::Overflow(label.to_string()))?,
                );
            }
            Acc::DecSum(s) => *s = Some(s.unwrap_or(0.0) + as_f64(v)),
            Acc::Avg { sum, n } => {
                *sum += as_f64(v);
                *n += 1;
            }
            Acc::Min(m) => {
                if m.as_ref().is_none_or(|cur| v.sort_cmp(cur).is_lt()) {
                    *m = Some(v.clone());
                }
            }
            Acc::Max(m) => {
                if m.as_ref().is_none_or(|cur| v.sort_cmp(cur).is_gt()) {
                    *m = Some(v.clone());
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Value {
        match self {
            Acc::Count(n) => Value::Integer(n),
            Acc::IntSum(s) => s.map_or(Value::Null, Value::Integer),
            Acc::DecSum(s) => s.map_or(Value::Null, Value::Decimal),
            Acc::Avg { n: 0, .. } => Value::Null,
            Acc::Avg { sum, n } => Value::Decimal(sum / n as f64),
            Acc::Min(m) | Acc::Max(m) => m.unwrap_or(Value::Null),
        }
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Integer(i) => *i as f64,
        Value::Decimal(d) => *d,
        _ => unreachable!("measures are numeric"),
    }
}

enum OutCol {
    Key(usize),
    Agg(usize),
}

fn grouped(q: &Query, ds: &Dataset, src: &dyn RowSource, selected: &[usize]) -> Result<Output> {
    let Projection::Items(items) = &q.projection else {
        return Err(Error::InvalidQuery("SELECT * cannot be combined with GROUP BY".into()));
    };
    let mut key_cols = Vec::with_capacity(q.group_by.len());
    for g in &q.group_by {
        let (col, _) = resolve(ds, g)?;
        check_reachable(ds, q, col, g)?;
        key_cols.push(col);
    }
    let mut aggs = Vec::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        match item {
            SelectItem::Column(c) => {
                let k = q.group_by.iter().position(|g| g == c).expect("validated grouping");
                out.push(OutCol::Key(k));
            }
            SelectItem::Aggregate(a, c) => {
                let (col, kind) = resolve(ds, c)?;
                check_reachable(ds, q, col, c)?;
                out.push(OutCol::Agg(aggs.len()));
                aggs.push((*a, col, kind, item.label(ds)));
            }
        }
    }
    let fresh = || aggs.iter().map(|(a, _, kind, _)| Acc::new(*a, *kind)).collect::<Vec<_>>();

    let mut groups: BTreeMap<GroupKey, Vec<Acc>> = BTreeMap::new();
    if q.group_by.is_empty() {
        // One row even over empty input.
        groups.insert(GroupKey(Vec::new()), fresh());
    }
    for &i in selected {
        let key = GroupKey(key_cols.iter().map(|&c| src.value(i, c).clone()).collect());
        let accs = groups.entry(key).or_insert_with(fresh);
        for (acc, (_, col, _, label)) in accs.iter_mut().zip(&aggs) {
            acc.add(src.value(i, *col), label)?;
        }
    }

    let columns = items.iter().map(|i| i.label(ds)).collect();
    let rows = groups
        .into_iter()
        .map(|(key, accs)| {
            let finished: Vec<Value> = accs.into_iter().map(Acc::finish).collect();
            out.iter()
                .map(|o| match o {
                    OutCol::Key(k) => key.0[*k].clone(),
                    OutCol::Agg(a) => finished[*a].clone(),
                })
                .collect()
        })
        .collect();
    Ok((columns, rows))
}
