//! IDX container parsing (the MNIST distribution format).
//!
//! ```text
//! images: 0x00000803  count:u32  rows:u32  cols:u32  count*rows*cols bytes
//! labels: 0x00000801  count:u32                      count bytes
//! ```
//! All header integers are big-endian. The parser is strict: the magic must
//! match the requested kind, images must be 28x28, and the stream must end
//! exactly where the header says it does.

use std::fs;
use std::path::Path;

use super::{RawImageSet, IMAGE_SIDE, N_LABELS, PIXELS};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX stream: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX image dimensions {rows}x{cols}, expected 28x28")]
    DimensionMismatch { rows: u32, cols: u32 },
    #[error("{extra} trailing bytes after declared IDX payload")]
    TrailingBytes { extra: usize },
    #[error("label value {value} at index {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, value: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxKind {
    Images,
    Labels,
}

/// Payload of one IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxFragment {
    /// `count` images, row-major, `PIXELS` bytes each.
    Images { count: usize, pixels: Vec<u8> },
    Labels(Vec<u8>),
}

impl IdxFragment {
    pub fn len(&self) -> usize {
        match self {
            IdxFragment::Images { count, .. } => *count,
            IdxFragment::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated { expected: at + 4, found: bytes.len() })
}

fn check_len(bytes: &[u8], expected: usize) -> Result<(), IdxError> {
    match bytes.len() {
        n if n < expected => Err(IdxError::Truncated { expected, found: n }),
        n if n > expected => Err(IdxError::TrailingBytes { extra: n - expected }),
        _ => Ok(()),
    }
}

pub fn parse_idx(bytes: &[u8], kind: IdxKind) -> Result<IdxFragment, IdxError> {
    let magic = be_u32(bytes, 0)?;
    let expected_magic = match kind {
        IdxKind::Images => IMAGES_MAGIC,
        IdxKind::Labels => LABELS_MAGIC,
    };
    if magic != expected_magic {
        return Err(IdxError::BadMagic { expected: expected_magic, found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    match kind {
        IdxKind::Images => {
            let rows = be_u32(bytes, 8)?;
            let cols = be_u32(bytes, 12)?;
            if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
                return Err(IdxError::DimensionMismatch { rows, cols });
            }
            check_len(bytes, 16 + count * PIXELS)?;
            Ok(IdxFragment::Images { count, pixels: bytes[16..].to_vec() })
        }
        IdxKind::Labels => {
            check_len(bytes, 8 + count)?;
            let labels = bytes[8..].to_vec();
            if let Some((index, &value)) =
                labels.iter().enumerate().find(|(_, &v)| v as usize >= N_LABELS)
            {
                return Err(IdxError::LabelOutOfRange { index, value });
            }
            Ok(IdxFragment::Labels(labels))
        }
    }
}

/// Serialize images back into an IDX stream.
pub fn encode_images(count: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

/// Combine an image file and a label file into one set.
pub fn load_pair(images: &Path, labels: &Path) -> Result<RawImageSet, IdxError> {
    let imgs = parse_idx(&read(images)?, IdxKind::Images)?;
    let labs = parse_idx(&read(labels)?, IdxKind::Labels)?;
    match (imgs, labs) {
        (IdxFragment::Images { count, pixels }, IdxFragment::Labels(labels)) => {
            if count != labels.len() {
                return Err(IdxError::CountMismatch { images: count, labels: labels.len() });
            }
            Ok(RawImageSet::from_parts(pixels, labels).expect("validated IDX payload"))
        }
        _ => unreachable!("parse_idx returns the requested kind"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Load the standard file pair for `split` from `dir` (uncompressed names).
pub fn load_mnist(dir: &Path, split: Split) -> Result<RawImageSet, IdxError> {
    let (img, lab) = match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    };
    load_pair(&dir.join(img), &dir.join(lab))
}
