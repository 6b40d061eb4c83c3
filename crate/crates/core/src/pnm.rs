//! Minimal PGM/PPM reading and writing.
//!
//! Grids are stored with row 0 at the top, i.e. pixel `(col, row)` holds
//! grid node `(i, j) = (col, height - 1 - row)`.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Row-major, top row first.
    pub data: Vec<u32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u32) -> Self {
        Self {
            width,
            height,
            maxval,
            data: vec![0; width * height],
        }
    }

    /// Image of a `width × height` grid indexed `(i, j)` with `j` growing upward.
    pub fn from_grid(width: usize, height: usize, maxval: u32, value: impl Fn(usize, usize) -> u32) -> Self {
        let mut img = Self::new(width, height, maxval);
        for row in 0..height {
            let j = height - 1 - row;
            for i in 0..width {
                img.data[row * width + i] = value(i, j);
            }
        }
        img
    }

    /// Value at grid node `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> u32 {
        self.data[(self.height - 1 - j) * self.width + i]
    }

    /// Binary PGM (P5). Only valid for `maxval <= 65535`.
    pub fn to_p5(&self) -> Result<Vec<u8>> {
        if self.maxval == 0 || self.maxval > 65535 {
            return Err(Error::Format(format!("P5 maxval {} out of range", self.maxval)));
        }
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|&v| v as u8));
        } else {
            for &v in &self.data {
                out.extend_from_slice(&(v as u16).to_be_bytes());
            }
        }
        Ok(out)
    }

    /// Plain PGM (P2). Accepts any positive maxval, so label grids with more
    /// than 65535 labels survive a round trip.
    pub fn to_p2(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4 + 32);
        let _ = write!(out, "P2\n{} {}\n{}\n", self.width, self.height, self.maxval.max(1));
        for row in self.data.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = next_token(bytes, &mut pos)?;
        let width = parse_num(next_token(bytes, &mut pos)?)? as usize;
        let height = parse_num(next_token(bytes, &mut pos)?)? as usize;
        let maxval = parse_num(next_token(bytes, &mut pos)?)?;
        if maxval == 0 {
            return Err(Error::Format("PGM maxval must be positive".into()));
        }
        let count = width * height;
        let mut data = Vec::with_capacity(count);
        match magic {
            b"P2" => {
                for _ in 0..count {
                    let v = parse_num(next_token(bytes, &mut pos)?)?;
                    if v > maxval {
                        return Err(Error::Format(format!("pixel {v} exceeds maxval {maxval}")));
                    }
                    data.push(v);
                }
            }
            b"P5" => {
                pos += 1;
                let wide = maxval > 255;
                let need = count * if wide { 2 } else { 1 };
                let body = bytes
                    .get(pos..pos + need)
                    .ok_or_else(|| Error::Format("truncated P5 body".into()))?;
                if wide {
                    data.extend(body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32));
                } else {
                    data.extend(body.iter().map(|&b| b as u32));
                }
            }
            other => {
                return Err(Error::Format(format!(
                    "unsupported image magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        }
        Ok(Self {
            width,
            height,
            maxval,
            data,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0; 3]; width * height],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, rgb: [u8; 3]) {
        let row = self.height - 1 - j;
        self.data[row * self.width + i] = rgb;
    }

    pub fn to_p6(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in &self.data {
            out.extend_from_slice(px);
        }
        out
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of image header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_num(tok: &[u8]) -> Result<u32> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad number {:?}", String::from_utf8_lossy(tok))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let img = GrayImage::from_grid(3, 2, 300, |i, j| (i + 10 * j) as u32);
        assert_eq!(img.at(2, 1), 12);
        assert_eq!(img.data[0], 10);
        assert_eq!(GrayImage::parse(&img.to_p5().unwrap()).unwrap(), img);
        assert_eq!(GrayImage::parse(&img.to_p2()).unwrap(), img);
        let big = GrayImage::from_grid(2, 1, 100_000, |i, _| 99_999 * i as u32);
        assert!(big.to_p5().is_err());
        assert_eq!(GrayImage::parse(&big.to_p2()).unwrap(), big);
    }

    #[test]
    fn header_comments_and_errors() {
        let parsed = GrayImage::parse(b"P2\n# note\n2 1\n# another\n5\n1 5\n").unwrap();
        assert_eq!(parsed.data, vec![1, 5]);
        assert!(GrayImage::parse(b"P2\n2 1\n5\n1 6\n").is_err());
        assert!(GrayImage::parse(b"P7\n1 1\n1\n0").is_err());
        assert!(GrayImage::parse(b"P5\n4 4\n255\n\x00").is_err());
    }
}
