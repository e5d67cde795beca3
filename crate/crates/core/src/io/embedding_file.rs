//! Binary embedding file: magic "FEMB", u32 LE version, u64 LE rows and
//! dims, then rows*dims f32 LE values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FEMB";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

/// Write the matrix; in-memory doubles are narrowed to f32 on disk.
pub fn write_embedding_file(path: &Path, matrix: &EmbeddingMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.dims() as u64).to_le_bytes())?;
    for &v in matrix.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read and validate an embedding file.
pub fn read_embedding_file(path: &Path) -> Result<EmbeddingMatrix> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_header(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            what: "magic",
            message: format!(
                "expected 'FEMB', found '{}'",
                String::from_utf8_lossy(&magic)
            ),
        });
    }
    let mut buf4 = [0u8; 4];
    read_header(&mut r, &mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::Format {
            what: "version",
            message: format!("unsupported embedding file version {version}"),
        });
    }
    let mut buf8 = [0u8; 8];
    read_header(&mut r, &mut buf8)?;
    let rows = u64::from_le_bytes(buf8);
    read_header(&mut r, &mut buf8)?;
    let dims = u64::from_le_bytes(buf8);

    let payload = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format {
            what: "length",
            message: format!("{rows}x{dims} payload overflows"),
        })?;
    let expected = HEADER_LEN + payload;
    if file_len != expected {
        return Err(Error::Format {
            what: "length",
            message: format!(
                "file is {file_len} bytes but header declares {expected} ({rows}x{dims} f32)"
            ),
        });
    }

    let count = (rows * dims) as usize;
    let mut values = Vec::with_capacity(count);
    let mut chunk = [0u8; 4];
    for _ in 0..count {
        r.read_exact(&mut chunk)?;
        values.push(f64::from(f32::from_le_bytes(chunk)));
    }
    Ok(
        EmbeddingMatrix::new(rows as usize, dims as usize, values)?
            .with_catalog_ref(path.display().to_string()),
    )
}

fn read_header(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format {
        what: "length",
        message: "file too short for header".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_is_value_identical() {
        let dir = tmp();
        let path = dir.path().join("e.femb");
        // Values representable in f32 so the disk narrowing is lossless.
        let m = EmbeddingMatrix::new(2, 3, vec![1.0, 0.5, -0.25, 2.0, -1.5, 0.125]).unwrap();
        write_embedding_file(&path, &m).unwrap();
        let back = read_embedding_file(&path).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.rows(), 2);
        assert_eq!(back.dims(), 3);
    }

    #[test]
    fn bad_magic() {
        let dir = tmp();
        let path = dir.path().join("bad.femb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"XEMB");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = read_embedding_file(&path).unwrap_err();
        assert!(matches!(err, Error::Format { what: "magic", .. }));
    }

    #[test]
    fn truncated_payload() {
        let dir = tmp();
        let path = dir.path().join("short.femb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&10u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        // 9 rows instead of the declared 10.
        bytes.extend(std::iter::repeat_n(0x3fu8, 9 * 2 * 4));
        std::fs::write(&path, bytes).unwrap();
        let err = read_embedding_file(&path).unwrap_err();
        assert!(matches!(err, Error::Format { what: "length", .. }));
    }

    #[test]
    fn zero_norm_row_is_rejected_with_row_index() {
        let dir = tmp();
        let path = dir.path().join("zero.femb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for v in [1.0f32, 0.5, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let err = read_embedding_file(&path).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(m) if m.contains("row 1")));
    }
}
