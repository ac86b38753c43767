//! Golden files: reference answers produced by the brute-force oracle and
//! committed next to the tests. `pw oracle-run` rewrites them; the test
//! suites regenerate them in memory and compare byte for byte.

use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::generator::random_instance;
use crate::metadata::write_atomic;
use crate::oracle::oracle_evaluate;
use crate::preference::{effective_profile, normalize_profile};
use crate::query::{parse_query, QueryResult};
use crate::value::Value;
use crate::view::{build_view, ViewEnvelope, ViewMode};

/// Number of random instances in the regression corpus.
pub const CORPUS_SIZE: u64 = 200;
/// Results with at most this many rows are stored verbatim, larger ones only
/// as a row count and digest.
const INLINE_ROWS: usize = 12;

fn pretty(value: &serde_json::Value) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("json value serializes");
    out.push('\n');
    out
}

/// Rendering of a query answer used in golden files.
pub fn result_json(query: &str, r: &QueryResult) -> String {
    let mut doc = r.to_json();
    doc["query"] = json!(query);
    pretty(&doc)
}

fn sort_rows(rows: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.sort_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Order-insensitive sha256 over the rows' literal forms.
pub fn rows_digest(rows: &[Vec<Value>]) -> String {
    let mut h = Sha256::new();
    for row in sort_rows(rows) {
        let line: Vec<String> = row.iter().map(Value::to_literal).collect();
        h.update(line.join("\t").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// The motivating car-buyer scenario: profile, view envelope and the
/// answers to the wide and narrow queries.
pub fn motivating_files() -> Result<Vec<(String, String)>> {
    let ds = fixtures::cars_mini();
    let (profile, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
    let view = build_view(&ds, &profile, ViewMode::Ids)?;
    let mut files = vec![
        ("motivating/profile.json".to_string(), profile.to_json()),
        ("motivating/view.json".to_string(), ViewEnvelope::from_view(&view).to_json()),
    ];
    for (name, text) in [("wide", fixtures::WIDE_QUERY), ("narrow", fixtures::NARROW_QUERY)] {
        let q = parse_query(text, &ds)?;
        let r = oracle_evaluate(&q, &profile.preferences, &ds)?;
        files.push((format!("motivating/{name}.json"), result_json(text, &r)));
    }
    Ok(files)
}

pub fn corpus_file_name(seed: u64) -> String {
    format!("corpus/case-{seed:03}.json")
}

/// Oracle answers for every query of random instance `seed`.
pub fn corpus_case(seed: u64) -> Result<String> {
    let inst = random_instance(seed);
    let prefs = effective_profile(&inst.profile, inst.degree)?;
    let mut queries = Vec::new();
    for q in &inst.queries {
        let text = q.to_string();
        let entry = match oracle_evaluate(q, &prefs, &inst.dataset) {
            Ok(r) => {
                let mut e = json!({
                    "text": text,
                    "columns": r.columns,
                    "row_count": r.rows.len(),
                    "rows_sha256": rows_digest(&r.rows),
                });
                if r.rows.len() <= INLINE_ROWS {
                    e["rows"] = sort_rows(&r.rows)
                        .iter()
                        .map(|row| row.iter().map(Value::to_json).collect::<Vec<_>>())
                        .collect();
                }
                e
            }
            Err(err) => json!({"text": text, "error": err.to_string()}),
        };
        queries.push(entry);
    }
    Ok(pretty(&json!({
        "seed": seed,
        "degree": inst.degree,
        "fact_rows": inst.dataset.fact.len(),
        "dimensions": inst.dataset.dimensions.iter().map(|d| json!({"name": d.name, "rows": d.len()})).collect::<Vec<_>>(),
        "profile_hash": inst.profile.profile_hash,
        "preferences": inst.profile.preferences.iter().map(|p| p.text()).collect::<Vec<_>>(),
        "effective_preferences": prefs.len(),
        "queries": queries,
    })))
}

/// Every golden file as (relative path, contents).
pub fn all_files() -> Result<Vec<(String, String)>> {
    let mut files = motivating_files()?;
    for seed in 0..CORPUS_SIZE {
        files.push((corpus_file_name(seed), corpus_case(seed)?));
    }
    Ok(files)
}

/// Writes every golden file under `dir`; returns how many were written.
pub fn write_all(dir: &Path) -> Result<usize> {
    let files = all_files()?;
    for (rel, contents) in &files {
        let path = dir.join(rel);
        let parent = path.parent().expect("relative path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        write_atomic(&path, contents.as_bytes())?;
    }
    Ok(files.len())
}

/// Relative paths of golden files under `dir` that are missing or differ
/// from a fresh regeneration.
pub fn stale_files(dir: &Path) -> Result<Vec<String>> {
    Ok(all_files()?
        .into_iter()
        .filter(|(rel, contents)| fs::read_to_string(dir.join(rel)).ok().as_deref() != Some(contents.as_str()))
        .map(|(rel, _)| rel)
        .collect())
}
