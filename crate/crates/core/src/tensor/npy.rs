//! Reading and writing little-endian `float32` arrays in the numpy npy format.
//!
//! Versions 1.0 and 2.0 are read; files are always written as 1.0 with the
//! header padded so that the data starts on a 64-byte boundary. Only C-order
//! arrays with descriptor `<f4` are accepted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use crate::error::{Error, Result};

/// The npy magic string.
pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

const ALIGNMENT: usize = 64;

/// Parsed header dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
    /// Offset of the first data byte from the start of the file.
    pub data_offset: usize,
}

/// Reads an npy file into a dynamically shaped `f32` array.
pub fn read_npy(path: &Path) -> Result<ArrayD<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_npy(&bytes, path)
}

/// Decodes an in-memory npy image. `path` is only used for error messages.
pub fn decode_npy(bytes: &[u8], path: &Path) -> Result<ArrayD<f32>> {
    let header = parse_header(bytes, path)?;
    let err = |offset: usize, reason: String| Error::NpyParse {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    if header.descr != "<f4" {
        return Err(err(
            header.data_offset,
            format!("unsupported dtype descriptor '{}', expected '<f4'", header.descr),
        ));
    }
    if header.fortran_order {
        return Err(err(
            header.data_offset,
            "Fortran-order arrays are not supported".to_string(),
        ));
    }
    let count: usize = header.shape.iter().product();
    let payload = &bytes[header.data_offset..];
    if payload.len() != count * 4 {
        return Err(err(
            header.data_offset,
            format!(
                "data section has {} bytes, shape {:?} needs {}",
                payload.len(),
                header.shape,
                count * 4
            ),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&header.shape), values)
        .map_err(|e| err(header.data_offset, e.to_string()))
}

/// Parses the preamble and header dictionary of an npy image.
pub fn parse_header(bytes: &[u8], path: &Path) -> Result<NpyHeader> {
    let err = |offset: usize, reason: &str| Error::NpyParse {
        path: path.to_path_buf(),
        offset,
        reason: reason.to_string(),
    };
    if bytes.len() < 10 {
        return Err(err(bytes.len(), "file shorter than the npy preamble"));
    }
    if bytes[..6] != MAGIC {
        return Err(err(0, "missing \\x93NUMPY magic string"));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err(err(bytes.len(), "truncated version 2.0 preamble"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(err(6, &format!("unsupported npy major version {v}"))),
    };
    let header_end = header_start + header_len;
    if bytes.len() < header_end {
        return Err(err(bytes.len(), "header length runs past end of file"));
    }
    let text = std::str::from_utf8(&bytes[header_start..header_end])
        .map_err(|e| err(header_start + e.valid_up_to(), "header is not valid UTF-8"))?;
    let mut parser = DictParser {
        text: text.as_bytes(),
        pos: 0,
        base: header_start,
        path,
    };
    let (descr, fortran_order, shape) = parser.parse()?;
    Ok(NpyHeader {
        descr,
        fortran_order,
        shape,
        data_offset: header_end,
    })
}

/// Writes `data` as a version 1.0 npy file.
pub fn save_array_npy(data: &ArrayViewD<'_, f32>, path: &Path) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "refusing to write an empty tensor".to_string(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_npy(&mut writer, data).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Encodes `data` as npy 1.0 into any writer.
pub fn write_npy<W: Write>(writer: &mut W, data: &ArrayViewD<'_, f32>) -> std::io::Result<()> {
    writer.write_all(&encode_header(data.shape()))?;
    // Iteration over an ndarray view is always logical (C) order.
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)
}

/// Builds the preamble plus padded header for a C-order `<f4` array.
pub fn encode_header(shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [single] => format!("({single},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_str}, }}");
    // preamble is 10 bytes; header text ends with '\n'
    let unpadded = 10 + dict.len() + 1;
    let padding = (ALIGNMENT - unpadded % ALIGNMENT) % ALIGNMENT;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

struct DictParser<'a> {
    text: &'a [u8],
    pos: usize,
    base: usize,
    path: &'a Path,
}

enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl DictParser<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::NpyParse {
            path: self.path.to_path_buf(),
            offset: self.base + self.pos,
            reason: reason.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected '{}'", c as char))
        }
    }

    fn parse(&mut self) -> Result<(String, bool, Vec<usize>)> {
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;
        self.expect(b'{')?;
        loop {
            self.skip_ws();
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key_pos = self.pos;
            let key = match self.literal()? {
                Literal::Str(s) => s,
                _ => {
                    self.pos = key_pos;
                    return self.fail("dictionary keys must be strings");
                }
            };
            self.expect(b':')?;
            self.skip_ws();
            let value_pos = self.pos;
            let value = self.literal()?;
            match (key.as_str(), value) {
                ("descr", Literal::Str(s)) => descr = Some(s),
                ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
                ("shape", Literal::Tuple(t)) => shape = Some(t),
                ("descr" | "fortran_order" | "shape", _) => {
                    self.pos = value_pos;
                    return self.fail(format!("wrong value type for key '{key}'"));
                }
                _ => {
                    self.pos = key_pos;
                    return self.fail(format!("unexpected key '{key}'"));
                }
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return self.fail("expected ',' or '}'"),
            }
        }
        let end = self.pos;
        let (Some(descr), Some(fortran), Some(shape)) = (descr, fortran, shape) else {
            self.pos = end;
            return self.fail("header must define 'descr', 'fortran_order' and 'shape'");
        };
        Ok((descr, fortran, shape))
    }

    fn literal(&mut self) -> Result<Literal> {
        self.skip_ws();
        match self.peek() {
            Some(q @ (b'\'' | b'"')) => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.text.len() && self.text[self.pos] != q {
                    self.pos += 1;
                }
                if self.pos >= self.text.len() {
                    self.pos = start;
                    return self.fail("unterminated string literal");
                }
                let s = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
                self.pos += 1;
                Ok(Literal::Str(s))
            }
            Some(b'T') if self.text[self.pos..].starts_with(b"True") => {
                self.pos += 4;
                Ok(Literal::Bool(true))
            }
            Some(b'F') if self.text[self.pos..].starts_with(b"False") => {
                self.pos += 5;
                Ok(Literal::Bool(false))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) if c.is_ascii_digit() => {
                            let start = self.pos;
                            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                                self.pos += 1;
                            }
                            let digits = std::str::from_utf8(&self.text[start..self.pos])
                                .expect("ascii digits");
                            match digits.parse::<usize>() {
                                Ok(d) => dims.push(d),
                                Err(_) => {
                                    self.pos = start;
                                    return self.fail("shape dimension out of range");
                                }
                            }
                            self.skip_ws();
                            match self.peek() {
                                Some(b',') => self.pos += 1,
                                Some(b')') => {}
                                _ => return self.fail("expected ',' or ')' in shape tuple"),
                            }
                        }
                        _ => return self.fail("invalid character in shape tuple"),
                    }
                }
                Ok(Literal::Tuple(dims))
            }
            _ => self.fail("expected a string, boolean or tuple literal"),
        }
    }
}
