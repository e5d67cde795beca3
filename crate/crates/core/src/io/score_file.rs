//! Binary score-matrix intermediate: magic "FSCM", u32 LE version, u32 LE
//! kind tag, u64 LE n_query and n_database, then f64 LE values row-major.
//! Used to persist per-stage results so long experiments are resumable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FSCM";
const VERSION: u32 = 1;

fn kind_tag(kind: ScoreKind) -> u32 {
    match kind {
        ScoreKind::RawGlobal => 0,
        ScoreKind::RawLocal => 1,
        ScoreKind::Calibrated => 2,
        ScoreKind::Fused => 3,
    }
}

fn tag_kind(tag: u32) -> Result<ScoreKind> {
    Ok(match tag {
        0 => ScoreKind::RawGlobal,
        1 => ScoreKind::RawLocal,
        2 => ScoreKind::Calibrated,
        3 => ScoreKind::Fused,
        other => {
            return Err(Error::Format {
                what: "kind",
                message: format!("unknown score kind tag {other}"),
            })
        }
    })
}

pub fn write_score_file(path: &Path, matrix: &ScoreMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&kind_tag(matrix.kind()).to_le_bytes())?;
    w.write_all(&(matrix.n_query() as u64).to_le_bytes())?;
    w.write_all(&(matrix.n_database() as u64).to_le_bytes())?;
    for &v in matrix.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_score_file(path: &Path) -> Result<ScoreMatrix> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format {
        what: "length",
        message: "file too short for header".into(),
    })?;
    if &magic != MAGIC {
        return Err(Error::Format {
            what: "magic",
            message: format!(
                "expected 'FSCM', found '{}'",
                String::from_utf8_lossy(&magic)
            ),
        });
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    if u32::from_le_bytes(buf4) != VERSION {
        return Err(Error::Format {
            what: "version",
            message: "unsupported score file version".into(),
        });
    }
    r.read_exact(&mut buf4)?;
    let kind = tag_kind(u32::from_le_bytes(buf4))?;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let n_query = u64::from_le_bytes(buf8);
    r.read_exact(&mut buf8)?;
    let n_database = u64::from_le_bytes(buf8);
    const HEADER_LEN: u64 = 4 + 4 + 4 + 8 + 8;
    let payload = n_query
        .checked_mul(n_database)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format {
            what: "length",
            message: "payload size overflows".into(),
        })?;
    if file_len != HEADER_LEN + payload {
        return Err(Error::Format {
            what: "length",
            message: format!(
                "file is {file_len} bytes but header declares {}",
                HEADER_LEN + payload
            ),
        });
    }
    let count = (n_query * n_database) as usize;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf8)?;
        values.push(f64::from_le_bytes(buf8));
    }
    ScoreMatrix::new(kind, n_query as usize, n_database as usize, values)
}
