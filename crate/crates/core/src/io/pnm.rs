//! Binary netpbm codecs: PGM (`P5`) and PPM (`P6`) with maxval 255.

use std::path::Path;

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown magic number; expected P5 or P6")]
    BadMagic,
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0}; only 255 is accepted")]
    UnsupportedMaxval(u64),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image of {channels} channels cannot be written as PGM or PPM")]
    Channels { channels: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// 8-bit image with interleaved samples, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFile {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageFile {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, PnmError> {
        if channels != 1 && channels != 3 {
            return Err(PnmError::Channels { channels });
        }
        if width == 0 || height == 0 {
            return Err(PnmError::MalformedHeader("zero image dimension"));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(PnmError::Truncated {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Channel-first `[C, H, W]` tensor with samples mapped to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (c, plane) = (self.channels, self.width * self.height);
        Tensor::from_fn(&[c, self.height, self.width], |i| {
            let (ch, p) = (i / plane, i % plane);
            self.data[p * c + ch] as f64 / 255.0
        })
        .expect("validated dimensions")
    }

    /// Inverse of [`ImageFile::to_tensor`]: values are clamped to `[0, 1]`
    /// and rounded to the nearest 8-bit level.
    pub fn from_tensor(t: &Tensor) -> Result<Self, PnmError> {
        let (c, h, w) = t.chw()?;
        if c != 1 && c != 3 {
            return Err(PnmError::Channels { channels: c });
        }
        let plane = h * w;
        let src = t.data();
        let mut data = vec![0u8; c * plane];
        for ch in 0..c {
            for p in 0..plane {
                data[p * c + ch] = (src[ch * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        Self::new(w, h, c, data)
    }
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.buf.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u64, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::MalformedHeader(what));
        }
        // at most 10 digits keeps the value well inside u64
        if self.pos - start > 10 {
            return Err(PnmError::MalformedHeader("header value too large"));
        }
        let s = std::str::from_utf8(&self.buf[start..self.pos]).expect("ascii digits");
        Ok(s.parse().expect("ascii digits"))
    }
}

/// Upper bound on `width * height`; guards allocation on hostile headers.
pub const MAX_PIXELS: u64 = 1 << 28;

pub fn decode_pnm(buf: &[u8]) -> Result<ImageFile, PnmError> {
    let channels = match buf.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(PnmError::BadMagic),
    };
    let mut hdr = Header { buf, pos: 2 };
    if !hdr.buf.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(PnmError::MalformedHeader("missing separator after magic"));
    }
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader("zero image dimension"));
    }
    if width * height > MAX_PIXELS {
        return Err(PnmError::MalformedHeader("image dimensions too large"));
    }
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    match buf.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        Some(_) => return Err(PnmError::MalformedHeader("missing separator before payload")),
        None => {
            return Err(PnmError::Truncated {
                expected: (width * height) as usize * channels,
                found: 0,
            })
        }
    }
    let expected = (width * height) as usize * channels;
    let payload = &buf[hdr.pos..];
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    ImageFile::new(width as usize, height as usize, channels, payload[..expected].to_vec())
}

pub fn encode_pnm(img: &ImageFile) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<ImageFile, PnmError> {
    decode_pnm(&std::fs::read(path)?)
}

pub fn write_pnm(img: &ImageFile, path: impl AsRef<Path>) -> Result<(), PnmError> {
    std::fs::write(path, encode_pnm(img))?;
    Ok(())
}

/// Reads a PGM/PPM straight into a `[C, H, W]` tensor.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor, PnmError> {
    Ok(read_pnm(path)?.to_tensor())
}

pub fn write_image(t: &Tensor, path: impl AsRef<Path>) -> Result<(), PnmError> {
    write_pnm(&ImageFile::from_tensor(t)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_built_ppm() {
        let mut buf = b"P6 2 2 255\n".to_vec();
        buf.extend(0u8..12);
        let img = decode_pnm(&buf).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 3));
        assert_eq!(img.data, (0u8..12).collect::<Vec<_>>());
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[3, 2, 2]);
        // red plane holds samples 0, 3, 6, 9
        assert_eq!(t.get(&[0, 1, 0]).unwrap(), 6.0 / 255.0);
        assert_eq!(t.get(&[2, 1, 1]).unwrap(), 11.0 / 255.0);
    }

    #[test]
    fn comments_in_header() {
        let mut buf = b"P5\n# made by hand\n3 1\n# depth\n255\n".to_vec();
        buf.extend([1, 2, 3]);
        assert_eq!(decode_pnm(&buf).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn random_rgb_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<u8> = (0..16 * 16 * 3).map(|_| rng.random()).collect();
        let img = ImageFile::new(16, 16, 3, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        write_pnm(&img, &path).unwrap();
        assert_eq!(read_pnm(&path).unwrap(), img);
        assert_eq!(ImageFile::from_tensor(&img.to_tensor()).unwrap(), img);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_pnm(b"P3 1 1 255\n1 2 3"), Err(PnmError::BadMagic)));
        assert!(matches!(decode_pnm(b"P5 1"), Err(PnmError::MalformedHeader(_))));
        assert!(matches!(decode_pnm(b"P5 1 1 65535\n\0\0"), Err(PnmError::UnsupportedMaxval(65535))));
        assert!(matches!(
            decode_pnm(b"P6 2 2 255\n\0\0\0"),
            Err(PnmError::Truncated { expected: 12, found: 3 })
        ));
        assert!(matches!(decode_pnm(b"P5 0 4 255\n"), Err(PnmError::MalformedHeader(_))));
        assert!(matches!(
            decode_pnm(b"P5 99999999 99999999 255\n"),
            Err(PnmError::MalformedHeader(_))
        ));
        assert!(matches!(
            ImageFile::from_tensor(&Tensor::zeros(&[2, 2, 2]).unwrap()),
            Err(PnmError::Channels { channels: 2 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_pnm(&bytes);
        }

        #[test]
        fn mutated_headers_never_panic(
            magic in prop::sample::select(vec!["P5", "P6", "P4", "p5", ""]),
            w in 0u32..5, h in 0u32..5, maxval in prop::sample::select(vec![0u32, 1, 255, 256]),
            sep in prop::sample::select(vec![" ", "\n", "#c\n", "", "\t"]),
            payload in prop::collection::vec(any::<u8>(), 0..80),
        ) {
            let mut buf = format!("{magic}{sep}{w}{sep}{h}{sep}{maxval}{sep}").into_bytes();
            buf.extend(payload);
            if let Ok(img) = decode_pnm(&buf) {
                prop_assert_eq!(img.data.len(), img.width * img.height * img.channels);
            }
        }
    }
}
