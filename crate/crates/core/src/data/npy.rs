//! Minimal `.npy` (format 1.0) reader and writer for 2-D little-endian
//! float arrays in C order.

use std::io::Write;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Descr {
    F4,
    F8,
}

impl Descr {
    fn width(self) -> usize {
        match self {
            Descr::F4 => 4,
            Descr::F8 => 8,
        }
    }
}

struct Header {
    descr: Descr,
    rows: usize,
    cols: usize,
}

/// Decodes an npy buffer into `(rows, cols, row-major values)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.is_empty() {
        return Err(Error::Empty("npy file"));
    }
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("bad magic string".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Npy(format!("unsupported format version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let start = 10 + header_len;
    if bytes.len() < start {
        return Err(Error::Npy("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..start])
        .map_err(|_| Error::Npy("header is not ascii".into()))?;
    let header = parse_header(header)?;

    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or_else(|| Error::Npy("shape overflows".into()))?;
    let payload = &bytes[start..];
    let expected = count * header.descr.width();
    if payload.len() < expected {
        return Err(Error::Npy("truncated payload".into()));
    }
    if payload.len() > expected {
        return Err(Error::Npy("trailing bytes after payload".into()));
    }
    let values = match header.descr {
        Descr::F4 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        Descr::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    Ok((header.rows, header.cols, values))
}

fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let at = header
        .find(&pat)
        .ok_or_else(|| Error::Npy(format!("header missing '{key}'")))?;
    Ok(header[at + pat.len()..].trim_start())
}

fn parse_header(header: &str) -> Result<Header> {
    let header = header.trim();
    if !header.starts_with('{') || !header.ends_with('}') {
        return Err(Error::Npy("header is not a dict".into()));
    }

    let descr = dict_value(header, "descr")?;
    let descr = if descr.starts_with("'<f8'") {
        Descr::F8
    } else if descr.starts_with("'<f4'") {
        Descr::F4
    } else {
        let end = descr.find(',').unwrap_or(descr.len());
        return Err(Error::Npy(format!("unsupported descr {}", &descr[..end])));
    };

    let fortran = dict_value(header, "fortran_order")?;
    if fortran.starts_with("True") {
        return Err(Error::Npy("fortran_order arrays are not supported".into()));
    } else if !fortran.starts_with("False") {
        return Err(Error::Npy("malformed fortran_order".into()));
    }

    let shape = dict_value(header, "shape")?;
    let close = shape
        .find(')')
        .filter(|_| shape.starts_with('('))
        .ok_or_else(|| Error::Npy("malformed shape".into()))?;
    let dims = shape[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::Npy(format!("bad shape entry {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != 2 {
        return Err(Error::Npy(format!("expected a 2-D array, found {}-D", dims.len())));
    }
    Ok(Header {
        descr,
        rows: dims[0],
        cols: dims[1],
    })
}

/// Encodes a row-major matrix as npy 1.0 with `'<f8'` dtype.
pub fn encode(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    debug_assert_eq!(rows * cols, values.len());
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    // magic + version + len + dict + newline padded to a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len() + values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for v in values {
        out.write_all(&v.to_le_bytes()).expect("write to vec");
    }
    out
}
