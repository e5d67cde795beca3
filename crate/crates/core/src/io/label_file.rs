//! Label file: one "item_id,identity_id" line per item; line order defines
//! the catalog index order. '#' lines and blank lines are skipped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::data::{ItemCatalog, Role};
use crate::error::{Error, Result};

pub fn read_label_file(path: &Path, role: Role) -> Result<ItemCatalog> {
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let (item_id, identity_id) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Format {
                    what: "fields",
                    message: format!(
                        "line {}: expected 'item_id,identity_id'",
                        lineno + 1
                    ),
                })
            }
        };
        if item_id.is_empty() || identity_id.is_empty() {
            return Err(Error::Format {
                what: "fields",
                message: format!("line {}: empty item or identity id", lineno + 1),
            });
        }
        if !seen.insert(item_id.to_string()) {
            return Err(Error::Format {
                what: "duplicate",
                message: format!("line {}: duplicate item id '{item_id}'", lineno + 1),
            });
        }
        entries.push((item_id.to_string(), identity_id.to_string()));
    }
    ItemCatalog::new(role, entries)
}

pub fn write_label_file(path: &Path, catalog: &ItemCatalog) -> Result<()> {
    let mut out = String::new();
    for item in catalog.items() {
        out.push_str(&item.item_id);
        out.push(',');
        out.push_str(&item.identity_id);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.labels");
        let catalog = ItemCatalog::new(
            Role::Database,
            vec![
                ("b".into(), "ID1".into()),
                ("a".into(), "ID2".into()),
                ("c".into(), "ID1".into()),
            ],
        )
        .unwrap();
        write_label_file(&path, &catalog).unwrap();
        let back = read_label_file(&path, Role::Database).unwrap();
        assert_eq!(back.items(), catalog.items());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.labels");
        std::fs::write(&path, "# header\n\na,ID1\n").unwrap();
        let catalog = read_label_file(&path, Role::Query).unwrap();
        assert_eq!(catalog.len(), 1);
        assert_eq!(catalog.item_id(0), "a");
    }

    #[test]
    fn duplicate_ids_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.labels");
        std::fs::write(&path, "a,ID1\na,ID2\n").unwrap();
        let err = read_label_file(&path, Role::Query).unwrap_err();
        assert!(matches!(err, Error::Format { what: "duplicate", message } if message.contains("line 2")));
    }

    #[test]
    fn malformed_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.labels");
        std::fs::write(&path, "justonefield\n").unwrap();
        assert!(matches!(
            read_label_file(&path, Role::Query),
            Err(Error::Format { what: "fields", .. })
        ));
    }
}
