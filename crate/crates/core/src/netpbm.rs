//! Binary netpbm image files: P5 (grayscale) for 1-channel images and
//! P6 (RGB) for 3-channel images, maxval 255 only.
//!
//! In-memory images are channel-planar; P6 pixel data is interleaved, so
//! encode and decode transpose between the two layouts. Encoding then
//! decoding reproduces the image bit for bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const MAX_DIM: usize = 1 << 15;

/// Serialize an 8-bit 1- or 3-channel image to netpbm bytes.
pub fn encode_image(image: &ImageTensor) -> Result<Vec<u8>> {
    let (channels, height, width) = image.shape();
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        other => {
            return Err(Error::rejected(format!(
                "netpbm supports 1 or 3 channels, image has {other}"
            )))
        }
    };
    if !image.is_8bit() {
        return Err(Error::rejected("netpbm encoding requires an 8-bit image"));
    }
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    let plane = height * width;
    let pixels = image.pixels();
    for i in 0..plane {
        for ch in 0..channels {
            out.push(pixels[ch * plane + i] as u8);
        }
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.token("magic")?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::parse(
                "magic",
                format!("expected P5 or P6, found `{other}`"),
            ))
        }
    };
    let width = cursor.dimension("width")?;
    let height = cursor.dimension("height")?;
    let maxval = cursor.token("maxval")?;
    if maxval != "255" {
        return Err(Error::parse(
            "maxval",
            format!("only maxval 255 is supported, found {maxval}"),
        ));
    }
    cursor.raster_separator()?;
    let plane = height * width;
    let expected = plane * channels;
    let raster = cursor.rest();
    if raster.len() < expected {
        return Err(Error::parse(
            "pixels",
            format!("expected {expected} raster bytes, found {}", raster.len()),
        ));
    }
    if raster.len() > expected {
        return Err(Error::parse(
            "pixels",
            format!("{} trailing bytes after raster", raster.len() - expected),
        ));
    }
    let mut data = vec![0.0; expected];
    for i in 0..plane {
        for ch in 0..channels {
            data[ch * plane + i] = raster[i * channels + ch] as f64;
        }
    }
    ImageTensor::new(channels, height, width, data)
}

pub fn save_image(image: &ImageTensor, path: &Path) -> Result<()> {
    let bytes = encode_image(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// File extension the encoder will use for this image.
pub fn extension_for(image: &ImageTensor) -> &'static str {
    if image.shape().0 == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited header token, skipping `#` comments.
    fn token(&mut self, field: &str) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::parse(field, "unexpected end of header")),
            }
        }
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        String::from_utf8(self.bytes[start..self.pos].to_vec())
            .map_err(|_| Error::parse(field, "header token is not ASCII"))
    }

    fn dimension(&mut self, field: &str) -> Result<usize> {
        let token = self.token(field)?;
        let value: usize = token
            .parse()
            .map_err(|_| Error::parse(field, format!("`{token}` is not a number")))?;
        if value == 0 || value > MAX_DIM {
            return Err(Error::parse(
                field,
                format!("{value} outside supported range 1..={MAX_DIM}"),
            ));
        }
        Ok(value)
    }

    /// Exactly one whitespace byte separates the maxval from the raster.
    fn raster_separator(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::parse("pixels", "missing separator before raster")),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
