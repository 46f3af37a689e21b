//! Binary PGM (P5) images with maxval 255.

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl Cursor<'_> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or_default();
        text.parse().map_err(|_| {
            self.pos = start;
            self.fail(format!("{what} {text} is out of range"))
        })
    }
}

/// Parses P5 bytes. `file` is only used in error messages.
pub fn decode(bytes: &[u8], file: &str) -> Result<GrayImage> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        file,
    };
    if !bytes.starts_with(b"P5") {
        return Err(cur.fail("missing P5 magic number"));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        cur.pos = maxval_at;
        return Err(cur.fail(format!("maxval {maxval} is not 255")));
    }
    if width == 0 || height == 0 {
        return Err(cur.fail(format!("image size {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.fail("expected a single whitespace byte before the raster")),
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| cur.fail("image dimensions overflow"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        cur.pos = bytes.len();
        return Err(cur.fail(format!(
            "raster has {} bytes, expected {need}",
            raster.len()
        )));
    }
    GrayImage::new(width, height, raster[..need].to_vec())
}

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read(path: &Path) -> Result<GrayImage> {
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::Parse {
        file: name.clone(),
        offset: 0,
        message: e.to_string(),
    })?;
    decode(&bytes, &name)
}

pub fn write(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode(img)).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        offset: 0,
        message: e.to_string(),
    })
}
