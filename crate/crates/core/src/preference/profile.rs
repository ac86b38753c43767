use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::contradiction::{find_contradictions, Contradiction};
use super::{PrefValue, Preference};
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::star_store::Dataset;
use crate::value::{Kind, Value};

/// A user's identity plus an ordered set of hard preferences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub user_id: String,
    /// Sorted by priority; ties keep insertion order. Every priority is set.
    pub preferences: Vec<Preference>,
    pub profile_hash: String,
}

impl Profile {
    pub fn is_empty(&self) -> bool {
        self.preferences.is_empty()
    }

    /// Kind-checks every preference against the warehouse schema.
    pub fn check(&self, ds: &Dataset) -> Result<()> {
        self.preferences.iter().try_for_each(|p| p.check(ds))
    }

    pub fn to_doc(&self) -> ProfileDoc {
        ProfileDoc {
            user_id: self.user_id.clone(),
            preferences: self.preferences.iter().map(PreferenceDoc::from).collect(),
        }
    }

    pub fn from_doc(doc: ProfileDoc) -> Result<(Profile, Vec<Contradiction>)> {
        let prefs = doc
            .preferences
            .into_iter()
            .map(Preference::try_from)
            .collect::<Result<Vec<_>>>()?;
        Ok(normalize_profile(&doc.user_id, prefs))
    }

    pub fn from_json(text: &str) -> Result<(Profile, Vec<Contradiction>)> {
        Profile::from_doc(serde_json::from_str(text)?)
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self.to_doc()).expect("profile serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("profile serializes");
        out.push('\n');
        out
    }
}

fn profile_hash(prefs: &[Preference]) -> String {
    let mut hasher = Sha256::new();
    for p in prefs {
        hasher.update(p.priority.unwrap_or(0).to_string().as_bytes());
        hasher.update(b"\t");
        hasher.update(p.text().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Builds a profile: drops duplicates (first occurrence wins), assigns
/// priority `i + 1` to the i-th preference when unset, orders by priority and
/// hashes the result. Contradictory preferences are kept and reported.
pub fn normalize_profile(user_id: &str, prefs: Vec<Preference>) -> (Profile, Vec<Contradiction>) {
    let mut seen = HashSet::new();
    let mut kept: Vec<Preference> = Vec::with_capacity(prefs.len());
    for p in prefs {
        if seen.insert(p.text()) {
            kept.push(p);
        }
    }
    for (i, p) in kept.iter_mut().enumerate() {
        if p.priority.is_none() {
            p.priority = Some(i as u32 + 1);
        }
    }
    kept.sort_by_key(|p| p.priority);
    let warnings = find_contradictions(&kept);
    let profile = Profile {
        user_id: user_id.to_string(),
        profile_hash: profile_hash(&kept),
        preferences: kept,
    };
    (profile, warnings)
}

/// The first `ceil(degree * n)` preferences in priority order.
pub fn effective_profile(p: &Profile, degree: f64) -> Result<Vec<Preference>> {
    if !(0.0..=1.0).contains(&degree) {
        return Err(Error::DegreeOutOfRange(degree));
    }
    let n = p.preferences.len();
    // The epsilon absorbs representation error such as 0.7 * 10 = 7.000000000000001.
    let take = ((degree * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    Ok(p.preferences[..take].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub user_id: String,
    #[serde(default)]
    pub preferences: Vec<PreferenceDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDoc {
    pub dimension: String,
    pub attribute: String,
    pub operator: Operator,
    pub value: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
}

impl From<&Preference> for PreferenceDoc {
    fn from(p: &Preference) -> Self {
        let (value, kind) = match &p.value {
            PrefValue::All => (serde_json::Value::from("all"), None),
            PrefValue::Value(v @ Value::Date(_)) => (v.to_json(), Some(Kind::Date)),
            PrefValue::Value(Value::Text(s)) if s == "all" => (serde_json::Value::from("all"), Some(Kind::Text)),
            PrefValue::Value(Value::Decimal(d)) if d.fract() == 0.0 => {
                // Keep the decimal marker so it does not read back as an integer.
                (Value::Decimal(*d).to_json(), Some(Kind::Decimal))
            }
            PrefValue::Value(v) => (v.to_json(), None),
        };
        PreferenceDoc {
            dimension: p.dimension.clone(),
            attribute: p.attribute.clone(),
            operator: p.operator,
            value,
            kind,
            priority: p.priority,
        }
    }
}

impl TryFrom<PreferenceDoc> for Preference {
    type Error = Error;

    fn try_from(doc: PreferenceDoc) -> Result<Self> {
        let bad = |msg: String| Error::InvalidQuery(format!("{}.{}: {msg}", doc.dimension, doc.attribute));
        let value = match (&doc.value, doc.kind) {
            (serde_json::Value::String(s), None) if s == "all" => PrefValue::All,
            (serde_json::Value::String(s), Some(Kind::Date)) => PrefValue::Value(
                Value::parse_cell(s, Kind::Date).map_err(bad)?,
            ),
            (serde_json::Value::String(s), None | Some(Kind::Text)) => PrefValue::Value(Value::Text(s.clone())),
            (serde_json::Value::Number(n), kind) => {
                let v = match (n.as_i64(), kind) {
                    (Some(i), None | Some(Kind::Integer)) => Value::Integer(i),
                    (_, None | Some(Kind::Decimal)) => Value::Decimal(n.as_f64().ok_or_else(|| bad("number out of range".into()))?),
                    (_, Some(k)) => return Err(bad(format!("number given for kind {k}"))),
                };
                PrefValue::Value(v)
            }
            (other, kind) => {
                return Err(bad(format!(
                    "unsupported value {other}{}",
                    kind.map(|k| format!(" for kind {k}")).unwrap_or_default()
                )))
            }
        };
        let mut p = Preference::new(&doc.dimension, &doc.attribute, doc.operator, value)?;
        p.priority = doc.priority;
        if p.priority == Some(0) {
            return Err(bad("priority must be a positive integer".into()));
        }
        Ok(p)
    }
}
