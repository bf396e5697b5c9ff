//! Minimal reader for uncompressed MATLAB level-5 files.
//!
//! Only what the UCI cuff-less export needs is supported: real 2-D numeric
//! matrices, possibly nested inside cell arrays. Compressed elements, sparse,
//! struct, object and complex data are rejected or skipped.

use super::IngestError;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const MX_CELL: u8 = 1;

/// A real matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    endian: Endian,
}

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedFile(msg.into())
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed("truncated MAT element"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b: [u8; 4] = self.take(4)?.try_into().unwrap();
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        })
    }

    /// Reads a tag and returns (type, payload); handles the packed small-element form.
    fn element(&mut self) -> Result<(u32, &'a [u8]), IngestError> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            let nbytes = (first >> 16) as usize;
            let ty = first & 0xffff;
            if nbytes > 4 {
                return Err(malformed("small data element larger than 4 bytes"));
            }
            let payload = self.take(4)?;
            return Ok((ty, &payload[..nbytes]));
        }
        let nbytes = self.u32()? as usize;
        let payload = self.take(nbytes)?;
        let pad = (8 - nbytes % 8) % 8;
        if self.pos + pad <= self.buf.len() {
            self.pos += pad;
        } else {
            self.pos = self.buf.len();
        }
        Ok((first, payload))
    }
}

fn decode_numeric(ty: u32, bytes: &[u8], endian: Endian) -> Result<Vec<f64>, IngestError> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {{
            if bytes.len() % $n != 0 {
                return Err(malformed("numeric payload not a multiple of element size"));
            }
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let a: [u8; $n] = c.try_into().unwrap();
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(a),
                        Endian::Big => <$t>::from_be_bytes(a),
                    }) as f64
                })
                .collect()
        }};
    }
    Ok(match ty {
        MI_INT8 => conv!(i8, 1),
        MI_UINT8 => conv!(u8, 1),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        MI_INT64 => conv!(i64, 8),
        MI_UINT64 => conv!(u64, 8),
        other => return Err(malformed(format!("unsupported MAT data type {other}"))),
    })
}

fn parse_matrix(
    payload: &[u8],
    endian: Endian,
    out: &mut Vec<MatMatrix>,
) -> Result<(), IngestError> {
    // scipy writes empty miMATRIX elements for empty cells
    if payload.is_empty() {
        return Ok(());
    }
    let mut c = Cursor { buf: payload, pos: 0, endian };
    let (ty, flags) = c.element()?;
    if ty != MI_UINT32 || flags.len() < 4 {
        return Err(malformed("bad array flags"));
    }
    let flag_word = decode_numeric(MI_UINT32, &flags[..4], endian)?[0] as u32;
    let class = (flag_word & 0xff) as u8;
    let complex = flag_word & 0x0800 != 0;

    let (ty, dims_raw) = c.element()?;
    let dims: Vec<usize> = decode_numeric(ty, dims_raw, endian)?
        .into_iter()
        .map(|d| d as usize)
        .collect();
    let (_, name_raw) = c.element()?;
    let name = String::from_utf8_lossy(name_raw).into_owned();

    if class == MX_CELL {
        let count: usize = dims.iter().product();
        for _ in 0..count {
            let (ty, sub) = c.element()?;
            if ty != MI_MATRIX {
                return Err(malformed("cell entry is not a matrix"));
            }
            parse_matrix(sub, endian, out)?;
        }
        return Ok(());
    }
    // numeric classes are 6..=15
    if !(6..=15).contains(&class) || complex || dims.len() != 2 {
        log::debug!("skipping MAT variable {name:?} (class {class})");
        return Ok(());
    }
    let (ty, real) = c.element()?;
    let data = decode_numeric(ty, real, endian)?;
    if data.len() != dims[0] * dims[1] {
        return Err(malformed(format!(
            "matrix {name:?} has {} values for dims {}x{}",
            data.len(),
            dims[0],
            dims[1]
        )));
    }
    out.push(MatMatrix {
        name,
        rows: dims[0],
        cols: dims[1],
        data,
    });
    Ok(())
}

/// Returns every real 2-D numeric matrix in the file, in storage order.
pub fn read_matrices(bytes: &[u8]) -> Result<Vec<MatMatrix>, IngestError> {
    if bytes.len() < 128 {
        return Err(malformed("file shorter than MAT-v5 header"));
    }
    let endian = match &bytes[126..128] {
        b"IM" => Endian::Little,
        b"MI" => Endian::Big,
        _ => return Err(malformed("missing MAT-v5 endian indicator")),
    };
    let mut c = Cursor {
        buf: bytes,
        pos: 128,
        endian,
    };
    let mut out = Vec::new();
    while c.pos + 8 <= bytes.len() {
        let (ty, payload) = c.element()?;
        match ty {
            MI_MATRIX => parse_matrix(payload, endian, &mut out)?,
            MI_COMPRESSED => {
                return Err(malformed(
                    "compressed MAT elements are not supported; re-save with -v6 or do_compression=False",
                ))
            }
            other => log::debug!("skipping top-level MAT element type {other}"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le_tag(ty: u32, n: u32) -> Vec<u8> {
        let mut v = ty.to_le_bytes().to_vec();
        v.extend(n.to_le_bytes());
        v
    }

    fn pad(v: &mut Vec<u8>) {
        while v.len() % 8 != 0 {
            v.push(0);
        }
    }

    fn header() -> Vec<u8> {
        let mut h = vec![b' '; 116];
        h.extend([0u8; 8]);
        h.extend([0x00, 0x01]);
        h.extend(b"IM");
        h
    }

    fn matrix_elem(rows: u32, cols: u32, vals: &[f64], compact_name: bool) -> Vec<u8> {
        let mut body = le_tag(MI_UINT32, 8);
        body.extend(6u32.to_le_bytes());
        body.extend(0u32.to_le_bytes());
        body.extend(le_tag(MI_INT32, 8));
        body.extend((rows as i32).to_le_bytes());
        body.extend((cols as i32).to_le_bytes());
        if compact_name {
            body.extend(((1u32 << 16) | MI_INT8).to_le_bytes());
            body.extend([b'x', 0, 0, 0]);
        } else {
            body.extend(le_tag(MI_INT8, 5));
            body.extend(b"xname");
            pad(&mut body);
        }
        body.extend(le_tag(MI_DOUBLE, (vals.len() * 8) as u32));
        for v in vals {
            body.extend(v.to_le_bytes());
        }
        let mut e = le_tag(MI_MATRIX, body.len() as u32);
        e.extend(body);
        e
    }

    #[test]
    fn reads_hand_built_matrix() {
        let mut f = header();
        f.extend(matrix_elem(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true));
        let m = read_matrices(&f).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].name, "x");
        assert_eq!(m[0].row(0), vec![1.0, 3.0, 5.0]);
        assert_eq!(m[0].row(1), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn long_name_is_padded() {
        let mut f = header();
        f.extend(matrix_elem(1, 2, &[7.0, 8.0], false));
        f.extend(matrix_elem(1, 1, &[9.0], true));
        let m = read_matrices(&f).unwrap();
        assert_eq!(m[0].name, "xname");
        assert_eq!(m[1].data, vec![9.0]);
    }

    #[test]
    fn compressed_is_rejected() {
        let mut f = header();
        f.extend(le_tag(MI_COMPRESSED, 8));
        f.extend([0u8; 8]);
        assert!(matches!(
            read_matrices(&f),
            Err(IngestError::MalformedFile(_))
        ));
    }

    #[test]
    fn missing_header_is_malformed() {
        assert!(read_matrices(&[0u8; 10]).is_err());
    }
}
