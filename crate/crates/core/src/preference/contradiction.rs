//! Detection of preference sets that no value can satisfy, such as
//! `year > 2010` together with `year < 2000`. Contradictions are reported,
//! never rejected: they legitimately yield an empty dimension vector.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use super::{PrefValue, Preference};
use crate::operator::Operator;
use crate::value::{Kind, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Contradiction {
    pub dimension: String,
    pub attribute: String,
    /// Textual forms of the preferences on that attribute, in profile order.
    pub preferences: Vec<String>,
}

#[derive(Clone)]
struct Bound {
    value: Value,
    inclusive: bool,
}

fn cmp(a: &Value, b: &Value) -> Ordering {
    a.compare(b).ok().flatten().unwrap_or(Ordering::Equal)
}

/// Successor / predecessor on discrete domains. `None` at the domain edge.
fn step(v: &Value, up: bool) -> Option<Value> {
    match v {
        Value::Integer(i) => if up { i.checked_add(1) } else { i.checked_sub(1) }.map(Value::Integer),
        Value::Date(d) => if up { d.succ_opt() } else { d.pred_opt() }.map(Value::Date),
        _ => None,
    }
}

fn is_discrete(kind: Kind) -> bool {
    matches!(kind, Kind::Integer | Kind::Date)
}

/// Whether some value of the literals' kind satisfies every constraint.
/// Integers and dates are treated as discrete domains, decimals and text as
/// dense ones.
fn satisfiable(constraints: &[(Operator, &Value)]) -> bool {
    let kind = match constraints.first().and_then(|(_, v)| v.kind()) {
        Some(k) => k,
        None => return true,
    };
    let discrete = is_discrete(kind);
    let mut lower: Option<Bound> = None;
    let mut upper: Option<Bound> = None;
    let mut equal: Option<&Value> = None;
    let mut excluded: Vec<&Value> = Vec::new();

    for &(op, v) in constraints {
        let (bound, is_lower) = match op {
            Operator::Eq => {
                if equal.is_some_and(|e| e != v) {
                    return false;
                }
                equal = Some(v);
                continue;
            }
            Operator::Neq => {
                excluded.push(v);
                continue;
            }
            Operator::Gt | Operator::Gte => (Bound { value: v.clone(), inclusive: op == Operator::Gte }, true),
            Operator::Lt | Operator::Lte => (Bound { value: v.clone(), inclusive: op == Operator::Lte }, false),
        };
        // Strict bounds on discrete domains become inclusive ones.
        let bound = if discrete && !bound.inclusive {
            match step(&bound.value, is_lower) {
                Some(value) => Bound { value, inclusive: true },
                None => return false,
            }
        } else {
            bound
        };
        let slot = if is_lower { &mut lower } else { &mut upper };
        let tighter = match slot {
            None => true,
            Some(cur) => {
                let ord = cmp(&bound.value, &cur.value);
                let ord = if is_lower { ord } else { ord.reverse() };
                ord == Ordering::Greater || (ord == Ordering::Equal && !bound.inclusive)
            }
        };
        if tighter {
            *slot = Some(bound);
        }
    }

    let within = |v: &Value| {
        lower.as_ref().is_none_or(|l| match cmp(v, &l.value) {
            Ordering::Greater => true,
            Ordering::Equal => l.inclusive,
            Ordering::Less => false,
        }) && upper.as_ref().is_none_or(|u| match cmp(v, &u.value) {
            Ordering::Less => true,
            Ordering::Equal => u.inclusive,
            Ordering::Greater => false,
        })
    };

    if let Some(e) = equal {
        return within(e) && !excluded.contains(&e);
    }
    let (Some(l), Some(u)) = (&lower, &upper) else {
        return true;
    };
    match cmp(&l.value, &u.value) {
        Ordering::Greater => false,
        Ordering::Equal => l.inclusive && u.inclusive && !excluded.contains(&&l.value),
        Ordering::Less if discrete => {
            // Both bounds are inclusive here; the range is empty only if the
            // exclusions cover every point of it.
            let mut candidate = l.value.clone();
            for _ in 0..=excluded.len() {
                if !excluded.contains(&&candidate) {
                    return true;
                }
                match step(&candidate, true) {
                    Some(next) if within(&next) => candidate = next,
                    _ => return false,
                }
            }
            true
        }
        Ordering::Less => true,
    }
}

/// One entry per (dimension, attribute) whose preferences cannot all hold.
pub(crate) fn find_contradictions(prefs: &[Preference]) -> Vec<Contradiction> {
    let mut groups: BTreeMap<(String, String), Vec<&Preference>> = BTreeMap::new();
    let mut order = Vec::new();
    for p in prefs {
        let key = (p.dimension.to_ascii_lowercase(), p.attribute.to_ascii_lowercase());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(p);
    }

    let mut out = Vec::new();
    for key in order {
        let group = &groups[&key];
        let constraints: Vec<(Operator, &Value)> = group
            .iter()
            .filter_map(|p| match &p.value {
                PrefValue::All => None,
                PrefValue::Value(v) if v.is_null() => None,
                PrefValue::Value(v) => Some((p.operator, v)),
            })
            .collect();
        if constraints.len() < 2 {
            continue;
        }
        let kind = constraints[0].1.kind();
        if constraints.iter().any(|(_, v)| v.kind() != kind) {
            // Mixed kinds surface as kind errors once bound to a schema.
            continue;
        }
        if !satisfiable(&constraints) {
            out.push(Contradiction {
                dimension: group[0].dimension.clone(),
                attribute: group[0].attribute.clone(),
                preferences: group.iter().map(|p| p.text()).collect(),
            });
        }
    }
    out
}
