//! On-disk form of a view. Only identifiers are persisted: joined rows of a
//! `Full` view are re-derived from `fact_ids` when it is loaded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DimensionVector, MaterializedView, Rule, ViewMode};
use crate::error::{Error, Result};
use crate::star_store::Dataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEnvelope {
    pub owner: String,
    pub mode: ViewMode,
    pub profile_hash: String,
    pub built_generation: u64,
    pub dim_vectors: BTreeMap<String, Vec<u32>>,
    pub dim_rules: BTreeMap<String, Rule>,
    pub fact_ids: Vec<u32>,
}

impl ViewEnvelope {
    pub fn from_view(view: &MaterializedView) -> Self {
        ViewEnvelope {
            owner: view.owner.clone(),
            mode: view.mode,
            profile_hash: view.profile_hash.clone(),
            built_generation: view.built_generation,
            dim_vectors: view
                .dim_vectors
                .iter()
                .map(|(k, v)| (k.clone(), v.ids.iter().copied().collect()))
                .collect(),
            dim_rules: view
                .dim_vectors
                .iter()
                .map(|(k, v)| (k.clone(), v.rule_applied))
                .collect(),
            fact_ids: view.fact_ids.clone(),
        }
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("envelope serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("envelope serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuilds the in-memory view against `ds`.
    pub fn into_view(self, ds: &Dataset) -> Result<MaterializedView> {
        let mut dim_vectors = BTreeMap::new();
        for (name, ids) in self.dim_vectors {
            let dim = ds.dimension(&name)?;
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= dim.len()) {
                return Err(Error::Schema(format!("view references missing `{name}` row {bad}")));
            }
            let rule_applied = self.dim_rules.get(&name).copied().unwrap_or(Rule::Conjunction);
            dim_vectors.insert(
                dim.name.clone(),
                DimensionVector {
                    dimension: dim.name.clone(),
                    ids: ids.into_iter().collect(),
                    rule_applied,
                },
            );
        }
        if let Some(&bad) = self.fact_ids.iter().find(|&&f| f as usize >= ds.fact.len()) {
            return Err(Error::Schema(format!("view references missing fact row {bad}")));
        }
        let rows = match self.mode {
            ViewMode::Full => self.fact_ids.iter().map(|&f| ds.joined_row(f)).collect(),
            ViewMode::Ids => Vec::new(),
        };
        Ok(MaterializedView {
            stale: self.built_generation < ds.ingest_generation(),
            owner: self.owner,
            mode: self.mode,
            dim_vectors,
            fact_ids: self.fact_ids,
            rows,
            profile_hash: self.profile_hash,
            built_generation: self.built_generation,
            build_time: None,
        })
    }
}
