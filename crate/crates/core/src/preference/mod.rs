//! Hard preferences on dimension attributes.
//!
//! A preference is a `(Dimension.attribute, operator, value)` triple; the
//! value may be the distinguished `all`, meaning the user accepts any value
//! of that attribute. The textual form is `Car.year > 2007`,
//! `Car.color = 'black'` or `Car.color = all`.

mod contradiction;
mod profile;

use std::fmt;

use crate::error::{Error, Result};
use crate::lexer::{tokenize, Token, TokenKind};
use crate::operator::Operator;
use crate::star_store::{Dataset, DimensionTable, Row};
use crate::value::Value;

pub use contradiction::Contradiction;
pub use profile::{effective_profile, normalize_profile, Profile, ProfileDoc};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PrefValue {
    /// Any value is accepted.
    All,
    Value(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Preference {
    pub dimension: String,
    pub attribute: String,
    pub operator: Operator,
    pub value: PrefValue,
    /// 1 is the most important. `None` until the profile assigns one.
    pub priority: Option<u32>,
}

impl Preference {
    pub fn new(dimension: &str, attribute: &str, operator: Operator, value: PrefValue) -> Result<Self> {
        if value == PrefValue::All && operator != Operator::Eq {
            return Err(Error::InvalidQuery(format!(
                "`all` is only allowed with `=`, not `{operator}`"
            )));
        }
        Ok(Preference {
            dimension: dimension.to_string(),
            attribute: attribute.to_string(),
            operator,
            value,
            priority: None,
        })
    }

    /// The triple as text, without priority. Two preferences are duplicates
    /// iff their texts are byte-identical.
    pub fn text(&self) -> String {
        self.to_string()
    }

    pub fn is_all(&self) -> bool {
        self.value == PrefValue::All
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = Some(priority);
        self
    }

    /// Resolves the preference against `dim`'s attributes and adapts the
    /// literal to the attribute kind.
    pub fn bind(&self, dim: &DimensionTable) -> Result<BoundPreference> {
        let attr = dim
            .attribute_index(&self.attribute)
            .ok_or_else(|| Error::unknown_attribute(&dim.name, &self.attribute))?;
        let value = match &self.value {
            PrefValue::All => None,
            PrefValue::Value(v) => {
                let context = format!("{}.{}", dim.name, dim.attributes[attr].name);
                Some(v.bind_literal(dim.attributes[attr].kind, &context)?)
            }
        };
        Ok(BoundPreference {
            attribute: attr,
            operator: self.operator,
            value,
        })
    }

    /// Checks that the preference names an existing dimension attribute of a
    /// compatible kind.
    pub fn check(&self, ds: &Dataset) -> Result<()> {
        let dim = ds.dimension(&self.dimension)?;
        self.bind(dim).map(|_| ())
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let value = match &self.value {
            PrefValue::All => "all".to_string(),
            PrefValue::Value(v) => v.to_literal(),
        };
        write!(f, "{}.{} {} {}", self.dimension, self.attribute, self.operator, value)
    }
}

/// A preference resolved against one dimension table.
#[derive(Debug, Clone)]
pub struct BoundPreference {
    attribute: usize,
    operator: Operator,
    /// `None` is `all`.
    value: Option<Value>,
}

impl BoundPreference {
    /// Never fails: kinds were checked at bind time.
    pub fn matches(&self, row: &Row) -> bool {
        match &self.value {
            None => true,
            Some(v) => match row.values[self.attribute].compare(v) {
                Ok(Some(ord)) => self.operator.holds(ord),
                _ => false,
            },
        }
    }
}

/// Parses `Dimension.attribute op literal`, where the literal is a number,
/// a quoted text, a `YYYY-MM-DD` date or the keyword `all`.
pub fn parse_preference(text: &str) -> Result<Preference> {
    let tokens = tokenize(text)?;
    let mut it = tokens.iter();
    let mut next = || it.next().expect("token stream ends with Eof");

    let expect_ident = |tok: &Token, what: &str| match &tok.kind {
        TokenKind::Ident(s) => Ok(s.clone()),
        _ => Err(Error::Syntax {
            position: tok.position,
            message: format!("expected {what}"),
        }),
    };
    let dimension = expect_ident(next(), "a dimension name")?;
    let dot = next();
    if dot.kind != TokenKind::Dot {
        return Err(Error::Syntax {
            position: dot.position,
            message: "expected `.` between dimension and attribute".into(),
        });
    }
    let attribute = expect_ident(next(), "an attribute name")?;
    let op_tok = next();
    let operator = match op_tok.kind {
        TokenKind::Op(op) => op,
        _ => {
            return Err(Error::Syntax {
                position: op_tok.position,
                message: "expected one of = != < <= > >=".into(),
            })
        }
    };
    let lit = next();
    let value = match &lit.kind {
        TokenKind::Literal(v) => PrefValue::Value(v.clone()),
        TokenKind::Ident(s) if s.eq_ignore_ascii_case("all") => PrefValue::All,
        _ => {
            return Err(Error::Syntax {
                position: lit.position,
                message: "expected a literal or `all`".into(),
            })
        }
    };
    let end = next();
    if end.kind != TokenKind::Eof {
        return Err(Error::Syntax {
            position: end.position,
            message: "unexpected trailing input".into(),
        });
    }
    if value == PrefValue::All && operator != Operator::Eq {
        return Err(Error::Syntax {
            position: op_tok.position,
            message: format!("`all` requires `=`, found `{operator}`"),
        });
    }
    Preference::new(&dimension, &attribute, operator, value)
}

/// Whether `row` of `dim` satisfies `p`. Null attribute values never
/// satisfy a preference unless its value is `all`.
pub fn evaluate_predicate(p: &Preference, dim: &DimensionTable, row: &Row) -> Result<bool> {
    Ok(p.bind(dim)?.matches(row))
}
