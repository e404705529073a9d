//! Versioned binary checkpoint container shared by the translation model and
//! the style classifier.
//!
//! Layout: magic `RSTY`, format version (u32 LE), kind byte, JSON header
//! (u64 LE length prefix), then each parameter matrix as rows/cols (u64 LE)
//! followed by row-major f64 bits (LE). Saving the result of a load writes
//! identical bytes, so round-trips are exact.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"RSTY";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {found}, expected {expected}")]
    BadVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: this is a {found} checkpoint, expected a {expected} checkpoint")]
    WrongKind {
        path: PathBuf,
        expected: CheckpointKind,
        found: CheckpointKind,
    },
    #[error("{path}: unknown checkpoint kind tag {tag}")]
    UnknownKind { path: PathBuf, tag: u8 },
    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },
    #[error("{path}: truncated or corrupt parameter block")]
    CorruptParams { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Model,
    Classifier,
}

impl CheckpointKind {
    fn tag(self) -> u8 {
        match self {
            CheckpointKind::Model => 1,
            CheckpointKind::Classifier => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(CheckpointKind::Model),
            2 => Some(CheckpointKind::Classifier),
            _ => None,
        }
    }
}

impl std::fmt::Display for CheckpointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointKind::Model => f.write_str("model"),
            CheckpointKind::Classifier => f.write_str("classifier"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes a checkpoint to bytes; [`save`] is this plus a file write.
pub fn encode(
    kind: CheckpointKind,
    header: &impl Serialize,
    params: &[&Array2<f64>],
) -> Result<Vec<u8>, CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.write_all(MAGIC).expect("vec write");
    buf.write_u32::<LittleEndian>(VERSION).expect("vec write");
    buf.write_u8(kind.tag()).expect("vec write");
    let header_bytes = serde_json::to_vec(header).map_err(|e| CheckpointError::CorruptHeader {
        path: PathBuf::from("<memory>"),
        reason: e.to_string(),
    })?;
    buf.write_u64::<LittleEndian>(header_bytes.len() as u64)
        .expect("vec write");
    buf.write_all(&header_bytes).expect("vec write");
    buf.write_u64::<LittleEndian>(params.len() as u64)
        .expect("vec write");
    for p in params {
        buf.write_u64::<LittleEndian>(p.nrows() as u64).expect("vec write");
        buf.write_u64::<LittleEndian>(p.ncols() as u64).expect("vec write");
        for v in p.iter() {
            buf.write_u64::<LittleEndian>(v.to_bits()).expect("vec write");
        }
    }
    Ok(buf)
}

pub fn save(
    path: impl AsRef<Path>,
    kind: CheckpointKind,
    header: &impl Serialize,
    params: &[&Array2<f64>],
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let buf = encode(kind, header, params)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn load<H: DeserializeOwned>(
    path: impl AsRef<Path>,
    expected: CheckpointKind,
) -> Result<(H, Vec<Array2<f64>>), CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut cur = Cursor::new(bytes.as_slice());

    let mut magic = [0u8; 4];
    std::io::Read::read_exact(&mut cur, &mut magic)
        .map_err(|_| CheckpointError::BadMagic { path: path.to_path_buf() })?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { path: path.to_path_buf() });
    }
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion {
            path: path.to_path_buf(),
            found: version,
            expected: VERSION,
        });
    }
    let tag = cur
        .read_u8()
        .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?;
    let kind = CheckpointKind::from_tag(tag).ok_or(CheckpointError::UnknownKind {
        path: path.to_path_buf(),
        tag,
    })?;
    if kind != expected {
        return Err(CheckpointError::WrongKind {
            path: path.to_path_buf(),
            expected,
            found: kind,
        });
    }

    let header_len = cur
        .read_u64::<LittleEndian>()
        .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?
        as usize;
    let start = cur.position() as usize;
    let end = start + header_len;
    if end > bytes.len() {
        return Err(CheckpointError::CorruptHeader {
            path: path.to_path_buf(),
            reason: "header length past end of file".into(),
        });
    }
    let header: H =
        serde_json::from_slice(&bytes[start..end]).map_err(|e| CheckpointError::CorruptHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    cur.set_position(end as u64);

    let nparams = cur
        .read_u64::<LittleEndian>()
        .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?;
    let mut params = Vec::with_capacity(nparams as usize);
    for _ in 0..nparams {
        let rows = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?
            as usize;
        let cols = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?
            as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let bits = cur
                .read_u64::<LittleEndian>()
                .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?;
            data.push(f64::from_bits(bits));
        }
        let arr = Array2::from_shape_vec((rows, cols), data)
            .map_err(|_| CheckpointError::CorruptParams { path: path.to_path_buf() })?;
        params.push(arr);
    }
    Ok((header, params))
}
