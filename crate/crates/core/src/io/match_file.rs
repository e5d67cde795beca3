//! Match file: one "query_id,database_id,confidence" line per local match;
//! repeated pairs append to the same confidence list. '#' lines and blank
//! lines are skipped.

use std::fs;
use std::path::Path;

use crate::data::{ItemCatalog, MatchRecordSet};
use crate::error::{Error, Result};

pub fn read_match_file(
    path: &Path,
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
) -> Result<MatchRecordSet> {
    let text = fs::read_to_string(path)?;
    let mut records = MatchRecordSet::new(query_catalog.len(), db_catalog.len());
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Format {
                what: "fields",
                message: format!(
                    "line {}: expected 'query_id,database_id,confidence'",
                    lineno + 1
                ),
            });
        }
        let query = query_catalog.index_of(fields[0]).ok_or(Error::UnknownItem {
            line: lineno + 1,
            item: fields[0].to_string(),
        })?;
        let database = db_catalog.index_of(fields[1]).ok_or(Error::UnknownItem {
            line: lineno + 1,
            item: fields[1].to_string(),
        })?;
        let confidence: f64 = fields[2].parse().map_err(|_| Error::Format {
            what: "confidence",
            message: format!("line {}: cannot parse '{}'", lineno + 1, fields[2]),
        })?;
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Range(format!(
                "line {}: confidence {confidence} outside [0, 1]",
                lineno + 1
            )));
        }
        records.add(query, database, confidence)?;
    }
    Ok(records)
}

/// Serialize in deterministic pair order, one line per confidence.
pub fn write_match_file(
    path: &Path,
    records: &MatchRecordSet,
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
) -> Result<()> {
    let (nq, nd) = records.bounds();
    if nq > query_catalog.len() || nd > db_catalog.len() {
        return Err(Error::Shape(format!(
            "record set bounded {nq}x{nd} exceeds catalogs {}x{}",
            query_catalog.len(),
            db_catalog.len()
        )));
    }
    let mut out = String::new();
    for (&(q, d), confidences) in records.iter() {
        for c in confidences {
            out.push_str(query_catalog.item_id(q));
            out.push(',');
            out.push_str(db_catalog.item_id(d));
            out.push(',');
            out.push_str(&format!("{c}"));
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}
