//! CSV row types shared by the writers and `report`.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SHARING_CSV: &str = "sharing.csv";
pub const RATES_CSV: &str = "rates.csv";
pub const SUBSYSTEMS_CSV: &str = "subsystems.csv";
pub const SCORE_CSV: &str = "score.csv";
pub const MAPPING_CSV: &str = "mapping.csv";
pub const META_JSON: &str = "meta.json";

/// One row per pair and run; the last two columns are pair-level figures
/// repeated on each of the pair's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingRow {
    pub workload_a: String,
    pub workload_b: String,
    pub run: u32,
    pub shared_count: usize,
    pub avg_shared_count: String,
    pub cumulative_shared_rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub lock_name: String,
    pub function: String,
    pub file: String,
    pub class: String,
    pub rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemRow {
    pub subsystem: String,
    pub cumulative_rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair: String,
    pub p_shared: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRow {
    pub lock_name: String,
    pub function: String,
    pub file: String,
    pub object_name: String,
    pub confidence: String,
}

pub trait Columns {
    const COLUMNS: &'static [&'static str];
}

macro_rules! columns {
    ($($ty:ty => [$($col:literal),*];)*) => {
        $(impl Columns for $ty {
            const COLUMNS: &'static [&'static str] = &[$($col),*];
        })*
    };
}

columns! {
    SharingRow => ["workload_a", "workload_b", "run", "shared_count", "avg_shared_count", "cumulative_shared_rate"];
    RateRow => ["lock_name", "function", "file", "class", "rate"];
    SubsystemRow => ["subsystem", "cumulative_rate"];
    ScoreRow => ["pair", "p_shared"];
    MappingRow => ["lock_name", "function", "file", "object_name", "confidence"];
}

/// Writes the header explicitly so an empty table still carries its schema.
pub fn write_csv<T: Serialize + Columns>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(T::COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}
