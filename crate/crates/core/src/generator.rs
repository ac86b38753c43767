//! Seeded random warehouses, profiles and queries for equivalence testing
//! and benchmarks. The same seed always yields the same instance.

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::Result;
use crate::operator::Operator;
use crate::preference::{normalize_profile, PrefValue, Preference, Profile};
use crate::query::{Aggregate, ColumnRef, Predicate, Projection, Query, SelectItem, Source};
use crate::star_store::{load_schema, Dataset};
use crate::value::{Kind, Value, DATE_FORMAT};

pub const MAX_DIMENSIONS: usize = 5;
pub const MAX_DIMENSION_ROWS: usize = 50;
pub const MAX_FACT_ROWS: usize = 1000;
pub const MAX_PREFERENCES: usize = 6;
pub const DEGREES: [f64; 3] = [0.0, 0.5, 1.0];

const TEXTS: [&str; 5] = ["red", "blue", "green", "black", "o'neil"];
const FACT: &str = "F";

/// One random test case.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub dataset: Dataset,
    pub profile: Profile,
    pub degree: f64,
    pub queries: Vec<Query>,
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date")
}

/// A value drawn from a deliberately small domain so that preferences and
/// predicates hit some rows and miss others.
fn random_value(rng: &mut impl Rng, kind: Kind) -> Value {
    match kind {
        Kind::Integer => Value::Integer(rng.random_range(0..10)),
        Kind::Decimal => Value::Decimal(rng.random_range(0..20) as f64 * 0.25),
        Kind::Text => Value::Text(TEXTS.choose(rng).expect("non-empty").to_string()),
        Kind::Date => Value::Date(base_date() + Duration::days(rng.random_range(0..10))),
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Text(s) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::Date(d) => d.format(DATE_FORMAT).to_string(),
        Value::Decimal(d) => crate::value::format_decimal(*d),
        Value::Integer(i) => i.to_string(),
    }
}

const KINDS: [Kind; 4] = [Kind::Integer, Kind::Decimal, Kind::Text, Kind::Date];

/// Builds a random star with up to [`MAX_DIMENSIONS`] dimensions, each
/// holding up to [`MAX_DIMENSION_ROWS`] rows, and up to `max_facts` facts.
/// Data goes through the CSV ingestion path.
pub fn random_dataset(rng: &mut impl Rng, max_facts: usize) -> Result<Dataset> {
    let n_dims = rng.random_range(1..=MAX_DIMENSIONS);
    let mut dims = Vec::new();
    for d in 0..n_dims {
        let n_attrs = rng.random_range(1..=4);
        let mut attrs = vec![json!({"name": "id", "kind": "integer", "role": "key"})];
        let mut kinds = vec![Kind::Integer];
        for a in 0..n_attrs {
            let kind = *KINDS.choose(rng).expect("non-empty");
            attrs.push(json!({"name": format!("a{a}"), "kind": kind}));
            kinds.push(kind);
        }
        dims.push((format!("D{d}"), attrs, kinds));
    }
    let schema = json!({
        "fact": {
            "name": FACT,
            "foreign_keys": dims.iter().enumerate().map(|(d, (name, _, _))| json!({"dimension": name, "column": format!("k{d}")})).collect::<Vec<_>>(),
            "measures": [{"name": "qty", "kind": "integer"}, {"name": "amount", "kind": "decimal"}],
        },
        "dimensions": dims.iter().map(|(name, attrs, _)| json!({"name": name, "attributes": attrs})).collect::<Vec<_>>(),
    });
    let mut ds = load_schema(&schema.to_string())?;

    let mut sizes = Vec::new();
    for (name, _, kinds) in &dims {
        // Mostly non-empty; an empty dimension forces an empty star.
        let rows = if rng.random_bool(0.03) { 0 } else { rng.random_range(1..=MAX_DIMENSION_ROWS) };
        let header: Vec<String> = std::iter::once("id".to_string())
            .chain((0..kinds.len() - 1).map(|a| format!("a{a}")))
            .collect();
        let mut csv = header.join(",") + "\n";
        for r in 0..rows {
            let mut cells = vec![(r + 1).to_string()];
            for &kind in &kinds[1..] {
                let v = if rng.random_bool(0.05) { Value::Null } else { random_value(rng, kind) };
                cells.push(csv_cell(&v));
            }
            csv += &(cells.join(",") + "\n");
        }
        ds.ingest_dimension(name, &csv)?;
        sizes.push(rows);
    }

    let facts = if sizes.contains(&0) { 0 } else { rng.random_range(0..=max_facts) };
    let header: Vec<String> = (0..dims.len()).map(|d| format!("k{d}")).chain(["qty".into(), "amount".into()]).collect();
    let mut csv = header.join(",") + "\n";
    for _ in 0..facts {
        let mut cells: Vec<String> = sizes.iter().map(|&s| rng.random_range(1..=s).to_string()).collect();
        cells.push(csv_cell(&if rng.random_bool(0.05) { Value::Null } else { Value::Integer(rng.random_range(-5..100)) }));
        cells.push(csv_cell(&if rng.random_bool(0.05) {
            Value::Null
        } else {
            Value::Decimal(rng.random_range(0..100_000) as f64 / 100.0)
        }));
        csv += &(cells.join(",") + "\n");
    }
    ds.ingest_fact(&csv)?;
    Ok(ds)
}

fn random_attribute(rng: &mut impl Rng, ds: &Dataset) -> (String, String, Kind) {
    let dim = ds.dimensions.choose(rng).expect("at least one dimension");
    let attr = dim.attributes.choose(rng).expect("at least one attribute");
    (dim.name.clone(), attr.name.clone(), attr.kind)
}

/// A literal for an attribute of `kind`; decimal attributes sometimes get an
/// integer literal, which binds by promotion.
fn random_literal(rng: &mut impl Rng, kind: Kind) -> Value {
    match kind {
        Kind::Decimal if rng.random_bool(0.2) => Value::Integer(rng.random_range(0..5)),
        Kind::Integer if rng.random_bool(0.2) => Value::Integer(rng.random_range(-2..60)),
        k => random_value(rng, k),
    }
}

/// Up to [`MAX_PREFERENCES`] preferences, including `all` values and, at
/// times, a deliberately contradictory pair.
pub fn random_preferences(rng: &mut impl Rng, ds: &Dataset) -> Vec<Preference> {
    let n = rng.random_range(0..=MAX_PREFERENCES);
    let mut prefs = Vec::new();
    while prefs.len() < n {
        let (dim, attr, kind) = random_attribute(rng, ds);
        if rng.random_bool(0.1) {
            prefs.push(Preference::new(&dim, &attr, Operator::Eq, PrefValue::All).expect("all with ="));
            continue;
        }
        if prefs.len() + 2 <= n && rng.random_bool(0.15) {
            let v = random_value(rng, kind);
            prefs.push(Preference::new(&dim, &attr, Operator::Gt, PrefValue::Value(v.clone())).expect("valid"));
            prefs.push(Preference::new(&dim, &attr, Operator::Lt, PrefValue::Value(v)).expect("valid"));
            continue;
        }
        let op = *Operator::ALL.choose(rng).expect("non-empty");
        let v = random_literal(rng, kind);
        prefs.push(Preference::new(&dim, &attr, op, PrefValue::Value(v)).expect("valid"));
    }
    prefs
}

fn random_predicates(rng: &mut impl Rng, ds: &Dataset, only_dim: Option<&str>) -> Vec<Predicate> {
    let n = rng.random_range(0..=2);
    (0..n)
        .map(|_| {
            let (table, name, kind) = match only_dim {
                Some(d) => {
                    let dim = ds.dimension(d).expect("known dimension");
                    let a = dim.attributes.choose(rng).expect("non-empty");
                    (dim.name.clone(), a.name.clone(), a.kind)
                }
                None if rng.random_bool(0.2) => {
                    let m = ds.fact.measures.choose(rng).expect("measures");
                    let v = match m.kind {
                        Kind::Integer => Value::Integer(rng.random_range(0..100)),
                        _ => Value::Decimal(rng.random_range(0..1000) as f64),
                    };
                    return Predicate {
                        column: ColumnRef { table: ds.fact.name.clone(), name: m.name.clone() },
                        operator: *Operator::ALL.choose(rng).expect("non-empty"),
                        value: v,
                    };
                }
                None => random_attribute(rng, ds),
            };
            Predicate {
                column: ColumnRef { table, name },
                operator: *Operator::ALL.choose(rng).expect("non-empty"),
                value: random_literal(rng, kind),
            }
        })
        .collect()
}

/// A random valid query: a dimension scan, a star projection or a grouped
/// aggregate.
pub fn random_query(rng: &mut impl Rng, ds: &Dataset) -> Query {
    match rng.random_range(0..3) {
        0 => {
            let dim = ds.dimensions.choose(rng).expect("dimensions").name.clone();
            Query {
                table: dim.clone(),
                source: Source::Dimension(dim.clone()),
                projection: Projection::All,
                predicates: random_predicates(rng, ds, Some(&dim)),
                group_by: Vec::new(),
            }
        }
        1 => {
            let projection = if rng.random_bool(0.5) {
                Projection::All
            } else {
                let mut items = Vec::new();
                for _ in 0..rng.random_range(1..=3) {
                    let (table, name, _) = random_attribute(rng, ds);
                    items.push(SelectItem::Column(ColumnRef { table, name }));
                }
                items.push(SelectItem::Column(ColumnRef { table: ds.fact.name.clone(), name: "amount".into() }));
                Projection::Items(items)
            };
            Query {
                table: ds.fact.name.clone(),
                source: Source::Star,
                projection,
                predicates: random_predicates(rng, ds, None),
                group_by: Vec::new(),
            }
        }
        _ => {
            let mut group_by: Vec<ColumnRef> = Vec::new();
            for _ in 0..rng.random_range(0..=2) {
                let (table, name, _) = random_attribute(rng, ds);
                let c = ColumnRef { table, name };
                if !group_by.contains(&c) {
                    group_by.push(c);
                }
            }
            let mut items: Vec<SelectItem> = group_by.iter().cloned().map(SelectItem::Column).collect();
            for _ in 0..rng.random_range(1..=3) {
                let agg = *Aggregate::ALL.choose(rng).expect("non-empty");
                let m = ds.fact.measures.choose(rng).expect("measures");
                items.push(SelectItem::Aggregate(agg, ColumnRef { table: ds.fact.name.clone(), name: m.name.clone() }));
            }
            Query {
                table: ds.fact.name.clone(),
                source: Source::Star,
                projection: Projection::Items(items),
                predicates: random_predicates(rng, ds, None),
                group_by,
            }
        }
    }
}

/// The instance for `seed`: dataset, profile, degree and three queries.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = random_dataset(&mut rng, MAX_FACT_ROWS).expect("generated data is well formed");
    let prefs = random_preferences(&mut rng, &dataset);
    let (profile, _) = normalize_profile(&format!("user{seed}"), prefs);
    let degree = *DEGREES.choose(&mut rng).expect("non-empty");
    let queries = (0..3).map(|_| random_query(&mut rng, &dataset)).collect();
    Instance {
        seed,
        dataset,
        profile,
        degree,
        queries,
    }
}

/// Synthetic warehouse shaped like cars-mini for benchmarks: `facts` sales
/// rows over 1000 cars, 100 owners and 100 advertisements. The Car
/// dimension has an attribute `segment` in 0..100, so a preference
/// `Car.segment = 0` keeps about 1% of the facts.
pub fn benchmark_dataset(seed: u64, facts: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = load_schema(
        &json!({
            "fact": {
                "name": "Sales",
                "foreign_keys": [
                    {"dimension": "Car", "column": "car_id"},
                    {"dimension": "Owner", "column": "owner_id"},
                    {"dimension": "Advertisement", "column": "ad_id"},
                ],
                "measures": [{"name": "euro_sold", "kind": "decimal"}],
            },
            "dimensions": [
                {"name": "Car", "attributes": [
                    {"name": "car_id", "kind": "integer", "role": "key"},
                    {"name": "model", "kind": "text"},
                    {"name": "year", "kind": "integer"},
                    {"name": "color", "kind": "text"},
                    {"name": "segment", "kind": "integer"},
                ]},
                {"name": "Owner", "attributes": [
                    {"name": "owner_id", "kind": "integer", "role": "key"},
                    {"name": "city", "kind": "text"},
                ]},
                {"name": "Advertisement", "attributes": [
                    {"name": "ad_id", "kind": "integer", "role": "key"},
                    {"name": "region", "kind": "text"},
                ]},
            ],
        })
        .to_string(),
    )?;
    const MODELS: [&str; 4] = ["BMW", "Mercedes", "Renault", "Peugeot"];
    let mut car = String::from("car_id,model,year,color,segment\n");
    for i in 0..1000 {
        car += &format!(
            "{},{},{},{},{}\n",
            i + 1,
            MODELS[i % 4],
            2000 + (i % 12),
            TEXTS[i % 4],
            i % 100
        );
    }
    ds.ingest_dimension("Car", &car)?;
    let owner: String = std::iter::once("owner_id,city\n".to_string())
        .chain((0..100).map(|i| format!("{},city{}\n", i + 1, i % 10)))
        .collect();
    ds.ingest_dimension("Owner", &owner)?;
    let ad: String = std::iter::once("ad_id,region\n".to_string())
        .chain((0..100).map(|i| format!("{},region{}\n", i + 1, i % 5)))
        .collect();
    ds.ingest_dimension("Advertisement", &ad)?;

    let car_col: Vec<u32> = (0..facts).map(|_| rng.random_range(0..1000)).collect();
    let owner_col: Vec<u32> = (0..facts).map(|_| rng.random_range(0..100)).collect();
    let ad_col: Vec<u32> = (0..facts).map(|_| rng.random_range(0..100)).collect();
    let euro: Vec<Value> = (0..facts)
        .map(|_| Value::Decimal(rng.random_range(500_000..3_000_000) as f64 / 100.0))
        .collect();
    ds.append_fact_rows(vec![car_col, owner_col, ad_col], vec![euro])?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_bounded() {
        for seed in 0..20 {
            let a = random_instance(seed);
            let b = random_instance(seed);
            assert_eq!(a.dataset, b.dataset);
            assert_eq!(a.profile, b.profile);
            assert_eq!(a.queries, b.queries);
            assert!(a.dataset.dimensions.len() <= MAX_DIMENSIONS);
            assert!(a.dataset.dimensions.iter().all(|d| d.len() <= MAX_DIMENSION_ROWS));
            assert!(a.dataset.fact.len() <= MAX_FACT_ROWS);
            assert!(a.profile.preferences.len() <= MAX_PREFERENCES);
            for q in &a.queries {
                q.validate(&a.dataset).unwrap();
                let reparsed = crate::query::parse_query(&q.to_string(), &a.dataset).unwrap();
                assert_eq!(&reparsed, q);
            }
        }
    }

    #[test]
    fn benchmark_selectivity_is_about_one_percent() {
        let ds = benchmark_dataset(7, 20_000).unwrap();
        let car = ds.dimension("Car").unwrap();
        let seg = car.attribute_index("segment").unwrap();
        let hits = (0..ds.fact.len() as u32)
            .filter(|&f| car.row(ds.fact.dimension_row(0, f)).values[seg] == Value::Integer(0))
            .count();
        let share = hits as f64 / ds.fact.len() as f64;
        assert!((0.005..0.015).contains(&share), "{share}");
    }
}
