use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_raw(width, height, vec![0; width * height])
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image must be non-empty"));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "pixel buffer has {} bytes, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    /// Reads a binary (`P5`) portable graymap with `maxval <= 255`.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = Vec::new();
        let mut tokens: Vec<String> = Vec::new();
        // Collect the four header tokens, skipping comments.
        while tokens.len() < 4 {
            header.clear();
            let mut byte = [0u8; 1];
            // Skip whitespace and comments.
            loop {
                if r.read(&mut byte)? == 0 {
                    return Err(Error::Format("truncated PGM header".into()));
                }
                if byte[0] == b'#' {
                    let mut sink = Vec::new();
                    r.read_until(b'\n', &mut sink)?;
                } else if !byte[0].is_ascii_whitespace() {
                    header.push(byte[0]);
                    break;
                }
            }
            loop {
                if r.read(&mut byte)? == 0 {
                    break;
                }
                if byte[0].is_ascii_whitespace() {
                    break;
                }
                header.push(byte[0]);
            }
            tokens.push(String::from_utf8_lossy(&header).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(Error::Format(format!("unsupported PGM magic '{}'", tokens[0])));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad PGM header field '{s}'")))
        };
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        let mut data = vec![0u8; w * h];
        r.read_exact(&mut data)
            .map_err(|_| Error::Format("truncated PGM pixel data".into()))?;
        if maxval != 255 {
            for v in &mut data {
                *v = ((*v as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
            }
        }
        Self::from_raw(w, h, data)
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    /// Image rotated by 90° counter-clockwise (as displayed, y down):
    /// pixel `(x, y)` moves to `(y, width - 1 - x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (y, w - 1 - x);
                out[ny * h + nx] = self.get(x, y);
            }
        }
        Self {
            width: h,
            height: w,
            data: out,
        }
    }

    /// One 2:1 Gaussian-pyramid level: 5-tap binomial blur, then decimation.
    pub fn pyr_down(&self) -> Self {
        const K: [u32; 5] = [1, 4, 6, 4, 1];
        let (w, h) = (self.width, self.height);
        let reflect = |i: i64, n: usize| -> usize {
            let n = n as i64;
            let mut i = i;
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
            i.clamp(0, n - 1) as usize
        };
        let mut tmp = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0;
                for (k, c) in K.iter().enumerate() {
                    acc += c * self.get(reflect(x as i64 + k as i64 - 2, w), y) as u32;
                }
                tmp[y * w + x] = acc;
            }
        }
        let (nw, nh) = ((w + 1) / 2, (h + 1) / 2);
        let mut out = Vec::with_capacity(nw * nh);
        for y in 0..nh {
            for x in 0..nw {
                let mut acc = 0;
                for (k, c) in K.iter().enumerate() {
                    acc += c * tmp[reflect(2 * y as i64 + k as i64 - 2, h) * w + 2 * x];
                }
                out.push(((acc + 128) / 256) as u8);
            }
        }
        Self {
            width: nw,
            height: nh,
            data: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(7, 5, |x, y| (x * 30 + y) as u8).unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = GrayImage::read_pgm(&buf[..]).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pgm_with_comments_and_maxval() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# c\n15\n".to_vec();
        bytes.extend_from_slice(&[0, 15]);
        let img = GrayImage::read_pgm(&bytes[..]).unwrap();
        assert_eq!(img.as_raw(), &[0, 255]);
    }

    #[test]
    fn pgm_rejects_ascii_and_truncation() {
        assert!(GrayImage::read_pgm(&b"P2\n1 1\n255\n0\n"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P5\n4 4\n255\n\x00\x01"[..]).is_err());
    }

    #[test]
    fn empty_image_rejected() {
        assert!(GrayImage::new(0, 3).is_err());
    }

    #[test]
    fn pyr_down_halves_and_preserves_constant() {
        let img = GrayImage::from_fn(9, 6, |_, _| 77).unwrap();
        let d = img.pyr_down();
        assert_eq!((d.width(), d.height()), (5, 3));
        assert!(d.as_raw().iter().all(|&v| v == 77));
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let img = GrayImage::from_fn(6, 4, |x, y| (x * 10 + y) as u8).unwrap();
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (4, 6));
        assert_eq!(r.rotate90().rotate90().rotate90(), img);
    }
}
