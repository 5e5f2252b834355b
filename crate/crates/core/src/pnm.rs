//! Binary PGM (P5) / PPM (P6) I/O with maxval 255.
//!
//! Image tensors live in `[-1, 1]`; bytes map as `round((v+1)/2·255)`,
//! clamped, and back as `p/255·2 − 1`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Raw decoded netpbm raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub fn to_byte(v: f64) -> u8 {
    ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn from_byte(p: u8) -> f64 {
    p as f64 / 255.0 * 2.0 - 1.0
}

fn header_tokens(bytes: &[u8]) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        if i >= bytes.len() {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        let c = bytes[i];
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
                i += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
        }
    }
    // exactly one whitespace byte separates the header from the raster
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::Format(
            "missing whitespace after netpbm header".into(),
        ));
    }
    Ok((tokens, i + 1))
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let (tok, offset) = header_tokens(bytes)?;
    let channels = match tok[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported netpbm magic {other:?}"))),
    };
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {what} {s:?}")))
    };
    let width = num(&tok[1], "width")?;
    let height = num(&tok[2], "height")?;
    let maxval = num(&tok[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero-sized netpbm image".into()));
    }
    if maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {maxval} unsupported (need 255)"
        )));
    }
    let n = width * height * channels;
    let data = &bytes[offset..];
    if data.len() < n {
        return Err(Error::Format(format!(
            "raster has {} of {n} bytes",
            data.len()
        )));
    }
    Ok(Raster {
        width,
        height,
        channels,
        pixels: data[..n].to_vec(),
    })
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.pixels);
    out
}

/// Encodes an `[H,W]` or `[H,W,1|3]` tensor.
pub fn encode_image(img: &Tensor) -> Result<Vec<u8>> {
    let (height, width, channels) = match img.shape() {
        [h, w] => (*h, *w, 1),
        [h, w, c] if *c == 1 || *c == 3 => (*h, *w, *c),
        s => {
            return Err(Error::InvalidShape {
                shape: s.to_vec(),
                reason: "expected HxW or HxWxC image".into(),
            })
        }
    };
    Ok(encode(&Raster {
        width,
        height,
        channels,
        pixels: img.data().iter().map(|&v| to_byte(v)).collect(),
    }))
}

pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    let r = decode(bytes)?;
    let data = r.pixels.iter().map(|&p| from_byte(p)).collect();
    let shape = if r.channels == 1 {
        vec![r.height, r.width]
    } else {
        vec![r.height, r.width, r.channels]
    };
    Tensor::new(shape, data)
}

pub fn write_image(img: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_image(img)?)?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_image(&std::fs::read(path)?)
}

/// Binary `{0,1}` mask written as black/white PGM.
pub fn encode_mask(mask: &Tensor) -> Result<Vec<u8>> {
    encode_image(&mask.map(|v| if v > 0.5 { 1.0 } else { -1.0 }))
}
