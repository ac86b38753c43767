//! Preference-driven personalization of a star-schema data warehouse.
//!
//! A user's profile is an ordered list of hard preferences on dimension
//! attributes. From it the crate derives one row vector per dimension and a
//! materialized view of the fact table; personalized queries are answered
//! from that view instead of the whole warehouse.

pub mod error;
pub mod fixtures;
pub mod generator;
pub mod golden;
pub mod metadata;
pub mod operator;
pub mod oracle;
pub mod preference;
pub mod query;
pub mod star_store;
pub mod value;
pub mod view;
pub mod warehouse;

mod lexer;

pub use error::{Error, Result};
pub use operator::Operator;
pub use preference::{effective_profile, normalize_profile, parse_preference, PrefValue, Preference, Profile};
pub use query::{evaluate, parse_query, route, AnsweredFrom, Query, QueryResult, Session, Target};
pub use star_store::{load_schema, star_join, Dataset};
pub use value::{Kind, Value};
pub use view::{build_view, dimension_vector, MaterializedView, Rule, ViewEnvelope, ViewMode};
