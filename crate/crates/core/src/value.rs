//! Scalar values stored in warehouse tables and used as predicate literals.
//!
//! Values of different kinds never compare with each other: `Value::compare`
//! reports a [`Error::KindMismatch`] instead of coercing. Any comparison that
//! involves `Null` is unknown and callers treat it as false. Decimals use
//! exact bit semantics (`f64::total_cmp`), so `0.1 + 0.2 != 0.3` here just as
//! it does in IEEE arithmetic.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Integer,
    Decimal,
    Text,
    Date,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Integer | Kind::Decimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Integer => "integer",
            Kind::Decimal => "decimal",
            Kind::Text => "text",
            Kind::Date => "date",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Integer(i64),
    Decimal(f64),
    Text(String),
    Date(NaiveDate),
    Null,
}

impl Value {
    /// `None` for `Null`.
    pub fn kind(&self) -> Option<Kind> {
        match self {
            Value::Integer(_) => Some(Kind::Integer),
            Value::Decimal(_) => Some(Kind::Decimal),
            Value::Text(_) => Some(Kind::Text),
            Value::Date(_) => Some(Kind::Date),
            Value::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Compares two values of the same kind. `Ok(None)` when either side is
    /// null.
    pub fn compare(&self, other: &Value) -> Result<Option<Ordering>> {
        let ord = match (self, other) {
            (Value::Null, _) | (_, Value::Null) => return Ok(None),
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Decimal(a), Value::Decimal(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (a, b) => {
                return Err(Error::KindMismatch {
                    context: "comparison".into(),
                    expected: a.kind().unwrap(),
                    found: b.kind().unwrap(),
                })
            }
        };
        Ok(Some(ord))
    }

    /// Total order used for sorting group keys and result rows: nulls first,
    /// then by kind, then by value.
    pub fn sort_cmp(&self, other: &Value) -> Ordering {
        match (self.kind(), other.kind()) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) if a != b => a.cmp(&b),
            _ => self.compare(other).ok().flatten().unwrap_or(Ordering::Equal),
        }
    }

    /// Parses one CSV cell of the given kind. The empty cell is null.
    pub fn parse_cell(cell: &str, kind: Kind) -> std::result::Result<Value, String> {
        if cell.is_empty() {
            return Ok(Value::Null);
        }
        match kind {
            Kind::Integer => cell
                .trim()
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| format!("`{cell}` is not an integer")),
            Kind::Decimal => match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Decimal(v)),
                _ => Err(format!("`{cell}` is not a finite decimal")),
            },
            Kind::Text => Ok(Value::Text(cell.to_string())),
            Kind::Date => NaiveDate::parse_from_str(cell.trim(), DATE_FORMAT)
                .map(Value::Date)
                .map_err(|_| format!("`{cell}` is not a YYYY-MM-DD date")),
        }
    }

    /// Adapts a literal to the kind of the attribute it is compared with.
    /// The only accepted adaptation is an integer literal against a decimal
    /// attribute (`price < 20000` on a decimal `price`); everything else
    /// must already match.
    pub fn bind_literal(&self, target: Kind, context: &str) -> Result<Value> {
        match (self, target) {
            (Value::Integer(i), Kind::Decimal) => Ok(Value::Decimal(*i as f64)),
            (v, k) if v.kind() == Some(k) => Ok(v.clone()),
            (Value::Null, _) => Ok(Value::Null),
            (v, k) => Err(Error::KindMismatch {
                context: context.to_string(),
                expected: k,
                found: v.kind().unwrap(),
            }),
        }
    }

    /// Literal text as accepted by the preference and query grammars.
    pub fn to_literal(&self) -> String {
        match self {
            Value::Integer(i) => i.to_string(),
            Value::Decimal(d) => format_decimal(*d),
            Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
            Value::Date(d) => d.format(DATE_FORMAT).to_string(),
            Value::Null => "null".to_string(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Integer(i) => serde_json::Value::from(*i),
            Value::Decimal(d) => serde_json::Number::from_f64(*d)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Date(d) => serde_json::Value::String(d.format(DATE_FORMAT).to_string()),
            Value::Null => serde_json::Value::Null,
        }
    }
}

/// Shortest representation that parses back to the same bits and is still
/// recognisable as a decimal (always has a `.` or an exponent).
pub fn format_decimal(d: f64) -> String {
    let s = format!("{d:?}");
    if s.contains(['.', 'e', 'E']) || !d.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (Value::Decimal(a), Value::Decimal(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Date(a), Value::Date(b)) => a == b,
            (Value::Null, Value::Null) => true,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Integer(i) => i.hash(state),
            Value::Decimal(d) => d.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
            Value::Date(d) => d.hash(state),
            Value::Null => {}
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            other => f.write_str(&other.to_literal()),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Decimal(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<NaiveDate> for Value {
    fn from(v: NaiveDate) -> Self {
        Value::Date(v)
    }
}
