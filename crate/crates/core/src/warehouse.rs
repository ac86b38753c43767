//! On-disk warehouse: the schema plus an append-only log of ingested CSV
//! batches. Opening replays the log, so the ingest generation of a reopened
//! warehouse equals the number of logged batches.
//!
//! ```text
//! schema.json
//! ingest/000001-Car.csv
//! ingest/000002-Sales.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::metadata::write_atomic;
use crate::star_store::{load_schema, Dataset};

const SCHEMA_FILE: &str = "schema.json";
const INGEST_DIR: &str = "ingest";

/// The dataset is shared: readers keep the snapshot they started with while
/// an ingest swaps in a new one.
pub struct Warehouse {
    root: PathBuf,
    dataset: Arc<Dataset>,
}

impl Warehouse {
    /// Creates a warehouse at `root` from a schema document. Fails if one
    /// already exists there.
    pub fn init(root: impl Into<PathBuf>, schema: &str) -> Result<Self> {
        let root = root.into();
        let dataset = load_schema(schema)?;
        let schema_path = root.join(SCHEMA_FILE);
        if schema_path.exists() {
            return Err(Error::Schema(format!("{} already exists", schema_path.display())));
        }
        let ingest = root.join(INGEST_DIR);
        fs::create_dir_all(&ingest).map_err(|e| Error::io(&ingest, e))?;
        write_atomic(&schema_path, schema.as_bytes())?;
        Ok(Warehouse {
            root,
            dataset: Arc::new(dataset),
        })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let schema_path = root.join(SCHEMA_FILE);
        let schema = fs::read_to_string(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
        let mut dataset = load_schema(&schema)?;
        for (table, path) in logged_batches(&root.join(INGEST_DIR))? {
            let csv = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            dataset.ingest(&table, &csv)?;
        }
        Ok(Warehouse {
            root,
            dataset: Arc::new(dataset),
        })
    }

    pub fn exists(root: &Path) -> bool {
        root.join(SCHEMA_FILE).is_file()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn snapshot(&self) -> Arc<Dataset> {
        Arc::clone(&self.dataset)
    }

    pub fn into_dataset(self) -> Dataset {
        Arc::unwrap_or_clone(self.dataset)
    }

    /// Ingests a batch into a copy of the dataset and, once it is accepted,
    /// logs it and swaps the copy in. A rejected batch changes nothing.
    pub fn ingest(&mut self, table: &str, csv: &str) -> Result<usize> {
        let mut next = Dataset::clone(&self.dataset);
        let rows = next.ingest(table, csv)?;
        let canonical = if next.is_fact(table) {
            next.fact.name.clone()
        } else {
            next.dimension(table)?.name.clone()
        };
        let name = format!("{:06}-{canonical}.csv", next.ingest_generation());
        write_atomic(&self.root.join(INGEST_DIR).join(name), csv.as_bytes())?;
        self.dataset = Arc::new(next);
        Ok(rows)
    }
}

fn logged_batches(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut batches: Vec<(u64, String, PathBuf)> = Vec::new();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(stem) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".csv")) else {
            continue;
        };
        let Some((seq, table)) = stem.split_once('-') else {
            continue;
        };
        let Ok(seq) = seq.parse::<u64>() else {
            continue;
        };
        batches.push((seq, table.to_string(), path));
    }
    batches.sort_by_key(|(seq, _, _)| *seq);
    Ok(batches.into_iter().map(|(_, t, p)| (t, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn reopen_replays_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Warehouse::init(dir.path(), fixtures::CARS_MINI_SCHEMA).unwrap();
        w.ingest("car", fixtures::CARS_MINI_CAR).unwrap();
        w.ingest("Owner", fixtures::CARS_MINI_OWNER).unwrap();
        w.ingest("Advertisement", fixtures::CARS_MINI_ADVERTISEMENT).unwrap();
        w.ingest("Sales", fixtures::CARS_MINI_SALES).unwrap();
        assert!(w.ingest("Sales", "car_id,owner_id,ad_id,euro_sold\n99,1,1,1.0\n").is_err());
        let reopened = Warehouse::open(dir.path()).unwrap();
        assert_eq!(reopened.dataset(), w.dataset());
        assert_eq!(reopened.dataset(), &fixtures::cars_mini());
        assert_eq!(reopened.dataset().ingest_generation(), 4);
        assert!(Warehouse::init(dir.path(), fixtures::CARS_MINI_SCHEMA).is_err());
    }
}
