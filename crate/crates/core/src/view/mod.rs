//! Per-user materialized views of the warehouse.
//!
//! Each dimension gets a vector of the row ordinals that satisfy the user's
//! preferences on it. The view is the star join of the fact table with those
//! vectors: a fact row belongs to the view iff every one of its foreign keys
//! lands inside the corresponding vector. A view is stored either with its
//! joined rows (`Full`) or as fact row ids only (`Ids`); both answer every
//! query identically.

mod envelope;
mod group;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::{Preference, Profile};
use crate::star_store::{fact_rows_matching, DimFilter, Dataset, DimensionTable, Row};

pub use envelope::ViewEnvelope;
pub use group::{group_id, group_profile, is_group_owner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    /// No preference targets the dimension: every row is kept.
    NoPrefsAll,
    /// Rows satisfying all of the dimension's preferences.
    Conjunction,
    /// Nothing satisfies all preferences; rows satisfying a strict majority.
    MajorityFallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionVector {
    pub dimension: String,
    pub ids: BTreeSet<u32>,
    pub rule_applied: Rule,
}

/// Computes the vector of `dim` for the preferences that target it.
///
/// With no preferences every row is kept. Otherwise the vector holds the rows
/// satisfying every preference; if there are none, it falls back to rows
/// satisfying strictly more than half of them (which may still be empty).
pub fn dimension_vector(dim: &DimensionTable, prefs: &[Preference]) -> Result<DimensionVector> {
    if prefs.is_empty() {
        return Ok(DimensionVector {
            dimension: dim.name.clone(),
            ids: (0..dim.len() as u32).collect(),
            rule_applied: Rule::NoPrefsAll,
        });
    }
    if let Some(p) = prefs.iter().find(|p| !p.dimension.eq_ignore_ascii_case(&dim.name)) {
        return Err(Error::InvalidQuery(format!(
            "preference `{p}` does not target dimension `{}`",
            dim.name
        )));
    }
    let bound = prefs.iter().map(|p| p.bind(dim)).collect::<Result<Vec<_>>>()?;
    let satisfied: Vec<usize> = dim
        .rows
        .iter()
        .map(|row| bound.iter().filter(|b| b.matches(row)).count())
        .collect();

    let select = |pred: &dyn Fn(usize) -> bool| -> BTreeSet<u32> {
        satisfied
            .iter()
            .enumerate()
            .filter(|(_, &n)| pred(n))
            .map(|(i, _)| i as u32)
            .collect()
    };
    let all = select(&|n| n == prefs.len());
    if !all.is_empty() {
        return Ok(DimensionVector {
            dimension: dim.name.clone(),
            ids: all,
            rule_applied: Rule::Conjunction,
        });
    }
    Ok(DimensionVector {
        dimension: dim.name.clone(),
        ids: select(&|n| 2 * n > prefs.len()),
        rule_applied: Rule::MajorityFallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViewMode {
    Full,
    Ids,
}

impl std::str::FromStr for ViewMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ViewMode::Full),
            "ids" => Ok(ViewMode::Ids),
            other => Err(format!("unknown view mode `{other}` (expected full or ids)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedView {
    pub owner: String,
    pub mode: ViewMode,
    /// Keyed by the dimension's schema name; covers every dimension.
    pub dim_vectors: BTreeMap<String, DimensionVector>,
    /// Fact row ids in the view, ascending. Kept in both modes.
    pub fact_ids: Vec<u32>,
    /// Star-join rows aligned with `fact_ids`; empty in `Ids` mode.
    pub rows: Vec<Row>,
    pub profile_hash: String,
    pub built_generation: u64,
    pub stale: bool,
    pub build_time: Option<Duration>,
}

impl MaterializedView {
    pub fn is_stale(&self, current_generation: u64) -> bool {
        self.stale || self.built_generation < current_generation
    }

    /// True when the view was built for exactly this owner and profile. A
    /// group sharing a member's preferences still needs its own view.
    pub fn serves(&self, profile: &Profile) -> bool {
        self.owner == profile.user_id && self.profile_hash == profile.profile_hash
    }

    pub fn is_group_view(&self) -> bool {
        is_group_owner(&self.owner)
    }

    pub fn vector(&self, dimension: &str) -> Option<&DimensionVector> {
        self.dim_vectors
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(dimension))
            .map(|(_, v)| v)
    }

    /// Filter restricting a star join to this view's vectors.
    pub fn filter(&self) -> DimFilter {
        self.dim_vectors
            .iter()
            .map(|(name, v)| (name.clone(), v.ids.clone()))
            .collect()
    }
}

fn group_by_dimension(ds: &Dataset, prefs: &[Preference]) -> Result<Vec<Vec<Preference>>> {
    let mut per_dim: Vec<Vec<Preference>> = vec![Vec::new(); ds.dimensions.len()];
    for p in prefs {
        let d = ds
            .dimension_index(&p.dimension)
            .ok_or_else(|| Error::UnknownDimension(p.dimension.clone()))?;
        per_dim[d].push(p.clone());
    }
    Ok(per_dim)
}

/// Builds `profile`'s view over `ds`.
pub fn build_view(ds: &Dataset, profile: &Profile, mode: ViewMode) -> Result<MaterializedView> {
    let started = Instant::now();
    let per_dim = group_by_dimension(ds, &profile.preferences)?;

    let mut dim_vectors = BTreeMap::new();
    let mut filter = DimFilter::new();
    for (dim, prefs) in ds.dimensions.iter().zip(&per_dim) {
        let vector = dimension_vector(dim, prefs)?;
        if vector.rule_applied != Rule::NoPrefsAll {
            filter.insert(dim.name.clone(), vector.ids.clone());
        }
        dim_vectors.insert(dim.name.clone(), vector);
    }

    let fact_ids = fact_rows_matching(ds, &filter)?;
    let rows = match mode {
        ViewMode::Full => fact_ids.iter().map(|&f| ds.joined_row(f)).collect(),
        ViewMode::Ids => Vec::new(),
    };
    Ok(MaterializedView {
        owner: profile.user_id.clone(),
        mode,
        dim_vectors,
        fact_ids,
        rows,
        profile_hash: profile.profile_hash.clone(),
        built_generation: ds.ingest_generation(),
        stale: false,
        build_time: Some(started.elapsed()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub dimension: String,
    pub kept: usize,
    pub total: usize,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub owner: String,
    pub profile_hash: String,
    pub mode: ViewMode,
    pub fact_rows_in_view: usize,
    pub fact_rows_total: usize,
    pub dimensions: Vec<DimensionStats>,
    pub build_time_ms: Option<f64>,
    pub built_generation: u64,
    pub stale: bool,
}

pub fn view_stats(v: &MaterializedView, ds: &Dataset) -> ViewStats {
    let dimensions = ds
        .dimensions
        .iter()
        .map(|dim| {
            let vector = v.vector(&dim.name);
            DimensionStats {
                dimension: dim.name.clone(),
                kept: vector.map_or(dim.len(), |vec| vec.ids.len()),
                total: dim.len(),
                rule: vector.map_or(Rule::NoPrefsAll, |vec| vec.rule_applied),
            }
        })
        .collect();
    ViewStats {
        owner: v.owner.clone(),
        profile_hash: v.profile_hash.clone(),
        mode: v.mode,
        fact_rows_in_view: v.fact_ids.len(),
        fact_rows_total: ds.fact.len(),
        dimensions,
        build_time_ms: v.build_time.map(|d| d.as_secs_f64() * 1e3),
        built_generation: v.built_generation,
        stale: v.is_stale(ds.ingest_generation()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::preference::{normalize_profile, parse_preference};
    use crate::star_store::{load_schema, star_join};

    fn prefs(texts: &[&str]) -> Vec<Preference> {
        texts.iter().map(|t| parse_preference(t).unwrap()).collect()
    }

    /// Checks each row against each preference triple by hand, without
    /// binding: looks the attribute up by name and compares raw values.
    fn triple_check_oracle(dim: &DimensionTable, texts: &[&str]) -> (Vec<u32>, Vec<u32>) {
        let ps = prefs(texts);
        let mut all = Vec::new();
        let mut majority = Vec::new();
        for (i, row) in dim.rows.iter().enumerate() {
            let mut hits = 0;
            for p in &ps {
                let a = dim.attributes.iter().position(|a| a.name == p.attribute).unwrap();
                let crate::preference::PrefValue::Value(lit) = &p.value else {
                    hits += 1;
                    continue;
                };
                let holds = match (&row.values[a], lit) {
                    (crate::value::Value::Integer(x), crate::value::Value::Integer(y)) => p.operator.holds(x.cmp(y)),
                    (crate::value::Value::Text(x), crate::value::Value::Text(y)) => p.operator.holds(x.cmp(y)),
                    _ => false,
                };
                hits += usize::from(holds);
            }
            if hits == ps.len() {
                all.push(i as u32);
            }
            if 2 * hits > ps.len() {
                majority.push(i as u32);
            }
        }
        (all, majority)
    }

    #[test]
    fn no_preferences_keeps_every_row() {
        let ds = fixtures::cars_mini();
        let v = dimension_vector(ds.dimension("Car").unwrap(), &[]).unwrap();
        assert_eq!(v.ids, (0..8).collect());
        assert_eq!(v.rule_applied, Rule::NoPrefsAll);
    }

    #[test]
    fn conjunction_matches_triple_check_oracle() {
        let ds = fixtures::cars_mini();
        let car = ds.dimension("Car").unwrap();
        let texts = ["Car.year > 2007", "Car.price < 20000", "Car.color = 'black'"];
        let v = dimension_vector(car, &prefs(&texts)).unwrap();
        let (expected, _) = triple_check_oracle(car, &texts);
        assert_eq!(v.rule_applied, Rule::Conjunction);
        assert_eq!(v.ids.iter().copied().collect::<Vec<_>>(), expected);
        // car_ids 1, 3, 6 and 8.
        assert_eq!(expected, vec![0, 2, 5, 7]);
    }

    #[test]
    fn majority_fallback_without_purple_cars() {
        let ds = fixtures::cars_mini();
        let car = ds.dimension("Car").unwrap();
        let texts = ["Car.year > 2007", "Car.price < 20000", "Car.color = 'purple'"];
        let v = dimension_vector(car, &prefs(&texts)).unwrap();
        let (all, majority) = triple_check_oracle(car, &texts);
        assert!(all.is_empty());
        assert_eq!(v.rule_applied, Rule::MajorityFallback);
        assert_eq!(v.ids.iter().copied().collect::<Vec<_>>(), majority);
        // Cars satisfying both year > 2007 and price < 20000: ids 1, 3, 5, 6, 8.
        assert_eq!(majority, vec![0, 2, 4, 5, 7]);
    }

    #[test]
    fn empty_majority_on_two_colors() {
        let mut ds = load_schema(
            r#"{"fact": {"name": "F"}, "dimensions": [{"name": "Car", "attributes": [
                {"name": "id", "kind": "integer", "role": "key"}, {"name": "color", "kind": "text"}]}]}"#,
        )
        .unwrap();
        ds.ingest_dimension("Car", "id,color\n1,black\n2,red\n").unwrap();
        let car = ds.dimension("Car").unwrap();
        let texts = ["Car.color = 'black'", "Car.color = 'red'"];
        let v = dimension_vector(car, &prefs(&texts)).unwrap();
        assert_eq!(triple_check_oracle(car, &texts), (vec![], vec![]));
        assert_eq!(v.rule_applied, Rule::MajorityFallback);
        assert!(v.ids.is_empty());
    }

    #[test]
    fn foreign_preference_is_rejected() {
        let ds = fixtures::cars_mini();
        let car = ds.dimension("Car").unwrap();
        assert!(dimension_vector(car, &prefs(&["Owner.city = 'Lyon'"])).is_err());
    }

    #[test]
    fn empty_profile_view_is_the_whole_star() {
        let ds = fixtures::cars_mini();
        let (profile, _) = normalize_profile("alice", vec![]);
        let view = build_view(&ds, &profile, ViewMode::Full).unwrap();
        assert_eq!(view.rows, star_join(&ds, None).unwrap().rows);
        assert!(view.dim_vectors.values().all(|v| v.rule_applied == Rule::NoPrefsAll));
        let stats = view_stats(&view, &ds);
        assert_eq!((stats.fact_rows_in_view, stats.fact_rows_total), (12, 12));
        assert!(stats.dimensions.iter().all(|d| d.kept == d.total));
    }

    #[test]
    fn car_buyer_view() {
        let ds = fixtures::cars_mini();
        let (profile, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
        let full = build_view(&ds, &profile, ViewMode::Full).unwrap();
        let ids = build_view(&ds, &profile, ViewMode::Ids).unwrap();

        // Nested loops: keep fact rows whose car and advertisement pass.
        let car = ds.dimension("Car").unwrap();
        let (cars, _) = triple_check_oracle(car, &fixtures::CAR_BUYER_PREFERENCES[..3]);
        let ad = ds.dimension("Advertisement").unwrap();
        let (ads, _) = triple_check_oracle(ad, &fixtures::CAR_BUYER_PREFERENCES[3..]);
        let car_fk = ds.fk_for_dimension(ds.dimension_index("Car").unwrap()).unwrap();
        let ad_fk = ds.fk_for_dimension(ds.dimension_index("Advertisement").unwrap()).unwrap();
        let expected: Vec<u32> = (0..ds.fact.len() as u32)
            .filter(|&f| {
                cars.contains(&ds.fact.dimension_row(car_fk, f)) && ads.contains(&ds.fact.dimension_row(ad_fk, f))
            })
            .collect();
        assert_eq!(expected, vec![0, 2, 7, 9, 10]);
        assert_eq!(full.fact_ids, expected);
        assert_eq!(ids.fact_ids, expected);
        assert!(ids.rows.is_empty());
        assert_eq!(full.vector("Owner").unwrap().rule_applied, Rule::NoPrefsAll);

        let filter = full.filter();
        assert_eq!(full.rows, star_join(&ds, Some(&filter)).unwrap().rows);

        let stats = view_stats(&ids, &ds);
        let kept: Vec<_> = stats.dimensions.iter().map(|d| (d.dimension.as_str(), d.kept, d.total)).collect();
        assert_eq!(kept, vec![("Car", cars.len(), 8), ("Owner", 4, 4), ("Advertisement", ads.len(), 5)]);
    }

    #[test]
    fn unknown_preference_target() {
        let ds = fixtures::cars_mini();
        let (profile, _) = normalize_profile("alice", prefs(&["Dealer.name = 'x'"]));
        assert!(matches!(build_view(&ds, &profile, ViewMode::Ids), Err(Error::UnknownDimension(_))));
        let (profile, _) = normalize_profile("alice", prefs(&["Car.horsepower > 1"]));
        assert!(matches!(build_view(&ds, &profile, ViewMode::Ids), Err(Error::UnknownAttribute { .. })));
    }

    #[test]
    fn empty_warehouse_stats_are_zero() {
        let ds = load_schema(fixtures::CARS_MINI_SCHEMA).unwrap();
        let (profile, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
        let view = build_view(&ds, &profile, ViewMode::Ids).unwrap();
        let stats = view_stats(&view, &ds);
        assert_eq!((stats.fact_rows_in_view, stats.fact_rows_total), (0, 0));
        assert!(stats.dimensions.iter().all(|d| d.kept == 0 && d.total == 0));
    }

    #[test]
    fn staleness_follows_generation() {
        let mut ds = fixtures::cars_mini();
        let (profile, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
        let view = build_view(&ds, &profile, ViewMode::Ids).unwrap();
        assert!(!view.is_stale(ds.ingest_generation()));
        ds.ingest_fact("car_id,owner_id,ad_id,euro_sold\n1,1,1,1.0\n").unwrap();
        assert!(view.is_stale(ds.ingest_generation()));
        assert!(view_stats(&view, &ds).stale);
    }
}
