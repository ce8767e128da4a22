//! Reader and writer for the NPY array layout (version 1.0, little-endian
//! `<f4` / `<f8`, C order). Raw buffers may have 1 to 4 dimensions; grids and
//! tensors use 2 or 3.

use std::fs;
use std::path::Path;

use crate::error::{Error, NpyError, Result};
use crate::grid::{Grid2D, Tensor3D};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
}

impl NpyDtype {
    fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }
}

/// A decoded array before it is lifted into a [`Tensor3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: NpyDtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Minimal parser for the Python dict literal in an NPY header.
struct HeaderParser<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> HeaderParser<'a> {
    fn err(&self, reason: impl Into<String>) -> NpyError {
        NpyError::MalformedHeader { offset: self.base + self.pos, reason: reason.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<(), NpyError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", ch as char)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected string literal")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn integer(&mut self) -> Result<usize, NpyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("integer out of range"))
    }

    fn value(&mut self) -> Result<Literal, NpyError> {
        match self.peek() {
            Some(b'\'' | b'"') => Ok(Literal::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => {
                            dims.push(self.integer()?);
                            match self.peek() {
                                Some(b',') => self.pos += 1,
                                Some(b')') => {}
                                _ => return Err(self.err("expected ',' or ')' in shape")),
                            }
                        }
                        None => return Err(self.err("unterminated tuple")),
                    }
                }
                Ok(Literal::Tuple(dims))
            }
            _ => {
                let rest = &self.src[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Literal::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Literal::Bool(false))
                } else {
                    Err(self.err("unsupported header value"))
                }
            }
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, Literal)>, NpyError> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            entries.push((key, value));
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        Ok(entries)
    }
}

/// Decodes an NPY byte buffer.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let offset = bytes
            .iter()
            .zip(MAGIC.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(bytes.len().min(MAGIC.len()));
        return Err(NpyError::BadMagic { offset });
    }
    if bytes.len() < 8 {
        return Err(NpyError::MalformedHeader { offset: bytes.len(), reason: "truncated version".into() });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_start, header_len) = match (major, minor) {
        (1, 0) => {
            if bytes.len() < 10 {
                return Err(NpyError::MalformedHeader { offset: 8, reason: "truncated header length".into() });
            }
            (10, u16::from_le_bytes([bytes[8], bytes[9]]) as usize)
        }
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(NpyError::MalformedHeader { offset: 8, reason: "truncated header length".into() });
            }
            (12, u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize)
        }
        _ => return Err(NpyError::UnsupportedVersion { major, minor, offset: 6 }),
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(NpyError::MalformedHeader {
            offset: bytes.len(),
            reason: format!("header claims {header_len} bytes"),
        });
    }

    let mut parser = HeaderParser { src: &bytes[header_start..payload_start], pos: 0, base: header_start };
    let entries = parser.dict()?;
    let lookup = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v);
    let missing = |key: &str| NpyError::MalformedHeader {
        offset: header_start,
        reason: format!("missing or mistyped key '{key}'"),
    };

    let dtype = match lookup("descr") {
        Some(Literal::Str(d)) if d == "<f4" => NpyDtype::F32,
        Some(Literal::Str(d)) if d == "<f8" => NpyDtype::F64,
        Some(Literal::Str(d)) => return Err(NpyError::UnsupportedDtype(d.clone())),
        _ => return Err(missing("descr")),
    };
    match lookup("fortran_order") {
        Some(Literal::Bool(false)) => {}
        Some(Literal::Bool(true)) => return Err(NpyError::FortranOrder),
        _ => return Err(missing("fortran_order")),
    }
    let shape = match lookup("shape") {
        Some(Literal::Tuple(s)) => s.clone(),
        _ => return Err(missing("shape")),
    };
    if !(1..=4).contains(&shape.len()) || shape.contains(&0) {
        return Err(NpyError::UnsupportedShape(shape));
    }

    let count: usize = shape.iter().product();
    let payload = &bytes[payload_start..];
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(NpyError::PayloadMismatch { expected, actual: payload.len() });
    }
    let data = match dtype {
        NpyDtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        NpyDtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
            .collect(),
    };
    Ok(NpyArray { dtype, shape, data })
}

/// Encodes values of the given shape as an NPY v1.0 buffer.
pub fn encode_npy(shape: &[usize], data: &[f64], dtype: NpyDtype) -> Vec<u8> {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!("({})", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}", dtype.descr());
    // magic(6) + version(2) + len(2) + header + '\n' padded to ALIGN
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((ALIGN - unpadded % ALIGN) % ALIGN));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match dtype {
        NpyDtype::F32 => data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        NpyDtype::F64 => data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

/// Loads a 2-D or 3-D array file; 2-D arrays become a single-channel tensor.
pub fn load_array(path: impl AsRef<Path>) -> Result<Tensor3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let arr = parse_npy(&bytes)?;
    let (a, h, w) = match arr.shape[..] {
        [h, w] => (1, h, w),
        [a, h, w] => (a, h, w),
        _ => return Err(NpyError::UnsupportedShape(arr.shape).into()),
    };
    Tensor3D::from_vec(a, h, w, arr.data)
}

/// Loads any supported array without imposing a rank.
pub fn load_raw(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_npy(&bytes)?)
}

/// Writes raw values with an explicit shape.
pub fn save_raw(shape: &[usize], data: &[f64], path: impl AsRef<Path>, dtype: NpyDtype) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::invalid(format!("shape {shape:?} does not hold {} values", data.len())));
    }
    write_bytes(path.as_ref(), &encode_npy(shape, data, dtype))
}

/// Writes a tensor as a 3-D `<f4` array.
pub fn save_array(t: &Tensor3D, path: impl AsRef<Path>) -> Result<()> {
    save_array_as(t, path, NpyDtype::F32)
}

pub fn save_array_as(t: &Tensor3D, path: impl AsRef<Path>, dtype: NpyDtype) -> Result<()> {
    let (a, h, w) = t.shape();
    write_bytes(path.as_ref(), &encode_npy(&[a, h, w], t.as_slice(), dtype))
}

/// Writes a grid as a 2-D array.
pub fn save_grid(g: &Grid2D, path: impl AsRef<Path>, dtype: NpyDtype) -> Result<()> {
    let (h, w) = g.dims();
    write_bytes(path.as_ref(), &encode_npy(&[h, w], g.as_slice(), dtype))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
