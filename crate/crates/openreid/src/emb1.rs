//! EMB1: a 13-byte header (`"EMB1"`, version byte `0x01`, row count and
//! width as little-endian `u32`) followed by the row-major little-endian
//! `f32` payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use openreid_core::Matrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 13;

pub fn encode(matrix: &Matrix) -> Result<Vec<u8>> {
    let n = u32::try_from(matrix.rows()).map_err(|_| Error::Usage("row count exceeds u32".into()))?;
    let d = u32::try_from(matrix.cols()).map_err(|_| Error::Usage("width exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a whole EMB1 buffer. `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
    let (n, d) = (word(5), word(9));
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header size overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Matrix::new(n, d, data)?)
}

pub fn write(path: &Path, matrix: &Matrix) -> Result<()> {
    let bytes = encode(matrix)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Matrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads only the header: `(rows, cols)`.
pub fn read_header(path: &Path) -> Result<(usize, usize)> {
    let mut head = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    f.read_exact(&mut head).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::format(path, "truncated header"),
        _ => Error::io(path, e),
    })?;
    if &head[..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let n = u32::from_le_bytes([head[5], head[6], head[7], head[8]]) as usize;
    let d = u32::from_le_bytes([head[9], head[10], head[11], head[12]]) as usize;
    Ok((n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_arithmetic() {
        let m = Matrix::new(3, 4, (0..12).map(|i| i as f32).collect()).unwrap();
        let b = encode(&m).unwrap();
        assert_eq!(b.len(), 13 + 48);
        assert_eq!(&b[..5], b"EMB1\x01");
        assert_eq!(&b[5..9], &3u32.to_le_bytes());
        assert_eq!(&b[9..13], &4u32.to_le_bytes());
        assert_eq!(decode(&b, Path::new("x")).unwrap(), m);
    }

    #[test]
    fn empty_matrix_keeps_width() {
        let m = Matrix::zeros(0, 768);
        let b = encode(&m).unwrap();
        assert_eq!(b.len(), 13);
        let back = decode(&b, Path::new("x")).unwrap();
        assert_eq!((back.rows(), back.cols()), (0, 768));
    }

    #[test]
    fn rejects_bad_magic_version_and_length() {
        let m = Matrix::zeros(2, 2);
        let mut b = encode(&m).unwrap();
        let p = Path::new("x");
        let mut bad = b.clone();
        bad[..4].copy_from_slice(b"XEMB");
        assert!(decode(&bad, p).unwrap_err().to_string().contains("bad magic"));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(decode(&bad, p).unwrap_err().to_string().contains("version"));
        b.pop();
        assert!(decode(&b, p).is_err());
        assert!(decode(b"EMB", p).is_err());
    }
}
