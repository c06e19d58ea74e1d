//! Model file format: a text header describing the architecture followed by
//! a binary blob of 64-bit little-endian floats in declared layer order.
//!
//! ```text
//! pgdimp-model v1
//! input_shape <channels> <height> <width>
//! num_classes <n>
//! layers <count>
//! layer dense <rows> <cols>
//! layer conv2d <out_c> <in_c> <kh> <kw>
//! layer relu
//! layer flatten
//! blob_bytes <n>
//! <blob>
//! ```
//!
//! The blob holds, per parameterized layer in order: dense weights row-major
//! then bias; conv2d kernels in [out_c][in_c][kh][kw] order then bias.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Layer, Model};
use crate::tensor::Tensor;

const MAGIC: &str = "pgdimp-model v1";

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    let (c, h, w) = model.input_shape();
    header.push_str(&format!("input_shape {c} {h} {w}\n"));
    header.push_str(&format!("num_classes {}\n", model.num_classes()));
    header.push_str(&format!("layers {}\n", model.layers().len()));

    let mut blob: Vec<u8> = Vec::new();
    for layer in model.layers() {
        match layer {
            Layer::Dense { weights, bias } => {
                header.push_str(&format!(
                    "layer dense {} {}\n",
                    weights.shape[0], weights.shape[1]
                ));
                push_floats(&mut blob, &weights.data);
                push_floats(&mut blob, bias);
            }
            Layer::Conv2d { kernels, bias } => {
                header.push_str(&format!(
                    "layer conv2d {} {} {} {}\n",
                    kernels.shape[0], kernels.shape[1], kernels.shape[2], kernels.shape[3]
                ));
                push_floats(&mut blob, &kernels.data);
                push_floats(&mut blob, bias);
            }
            Layer::Relu => header.push_str("layer relu\n"),
            Layer::Flatten => header.push_str("layer flatten\n"),
        }
    }
    header.push_str(&format!("blob_bytes {}\n", blob.len()));

    let mut out = header.into_bytes();
    out.extend_from_slice(&blob);
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_model(&bytes)
}

fn parse_model(bytes: &[u8]) -> Result<Model> {
    let mut lines = HeaderLines { bytes, pos: 0 };

    let magic = lines.next_line("magic")?;
    if magic != MAGIC {
        return Err(Error::parse(
            "magic",
            format!("expected `{MAGIC}`, got `{magic}`"),
        ));
    }

    let shape_line = lines.next_line("input_shape")?;
    let shape_fields = expect_prefix(&shape_line, "input_shape", 3)?;
    let input_shape = (
        parse_usize(shape_fields[0], "input_shape.channels")?,
        parse_usize(shape_fields[1], "input_shape.height")?,
        parse_usize(shape_fields[2], "input_shape.width")?,
    );

    let classes_line = lines.next_line("num_classes")?;
    let num_classes = parse_usize(
        expect_prefix(&classes_line, "num_classes", 1)?[0],
        "num_classes",
    )?;

    let layers_line = lines.next_line("layers")?;
    let layer_count = parse_usize(expect_prefix(&layers_line, "layers", 1)?[0], "layers")?;

    // Layer descriptors: kind plus shape numbers; weights arrive in the blob.
    enum Desc {
        Dense(usize, usize),
        Conv(usize, usize, usize, usize),
        Relu,
        Flatten,
    }
    let mut descs = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let field = format!("layer[{i}]");
        let line = lines.next_line(&field)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.first() != Some(&"layer") || parts.len() < 2 {
            return Err(Error::parse(
                field,
                format!("malformed layer line `{line}`"),
            ));
        }
        let desc = match parts[1] {
            "dense" => {
                if parts.len() != 4 {
                    return Err(Error::parse(field, "dense expects `layer dense rows cols`"));
                }
                Desc::Dense(
                    parse_usize(parts[2], &format!("{field}.rows"))?,
                    parse_usize(parts[3], &format!("{field}.cols"))?,
                )
            }
            "conv2d" => {
                if parts.len() != 6 {
                    return Err(Error::parse(
                        field,
                        "conv2d expects `layer conv2d out_c in_c kh kw`",
                    ));
                }
                Desc::Conv(
                    parse_usize(parts[2], &format!("{field}.out_c"))?,
                    parse_usize(parts[3], &format!("{field}.in_c"))?,
                    parse_usize(parts[4], &format!("{field}.kh"))?,
                    parse_usize(parts[5], &format!("{field}.kw"))?,
                )
            }
            "relu" => Desc::Relu,
            "flatten" => Desc::Flatten,
            other => {
                return Err(Error::parse(field, format!("unknown layer kind `{other}`")));
            }
        };
        descs.push(desc);
    }

    let blob_line = lines.next_line("blob_bytes")?;
    let declared = parse_usize(expect_prefix(&blob_line, "blob_bytes", 1)?[0], "blob_bytes")?;
    let blob = &bytes[lines.pos..];
    if blob.len() != declared {
        return Err(Error::parse(
            "blob",
            format!(
                "header declares {declared} bytes, file holds {}",
                blob.len()
            ),
        ));
    }

    let mut reader = BlobReader { blob, pos: 0 };
    let mut layers = Vec::with_capacity(descs.len());
    for (i, desc) in descs.into_iter().enumerate() {
        let field = format!("layer[{i}].weights");
        let layer = match desc {
            Desc::Dense(rows, cols) => {
                let w = reader.take_floats(rows * cols, &field)?;
                let b = reader.take_floats(rows, &field)?;
                Layer::dense(Tensor::new(vec![rows, cols], w)?, b)?
            }
            Desc::Conv(oc, ic, kh, kw) => {
                let k = reader.take_floats(oc * ic * kh * kw, &field)?;
                let b = reader.take_floats(oc, &field)?;
                Layer::conv2d(Tensor::new(vec![oc, ic, kh, kw], k)?, b)?
            }
            Desc::Relu => Layer::Relu,
            Desc::Flatten => Layer::Flatten,
        };
        layers.push(layer);
    }
    if reader.pos != blob.len() {
        return Err(Error::parse(
            "blob",
            format!(
                "{} trailing bytes after the declared layer weights",
                blob.len() - reader.pos
            ),
        ));
    }

    Model::new(layers, input_shape, num_classes)
}

struct HeaderLines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderLines<'_> {
    fn next_line(&mut self, field: &str) -> Result<String> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(field, "unexpected end of header"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(field, "header line is not UTF-8"))?;
        self.pos += end + 1;
        Ok(line.to_string())
    }
}

fn expect_prefix<'a>(line: &'a str, key: &str, values: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.first() != Some(&key) || parts.len() != values + 1 {
        return Err(Error::parse(
            key,
            format!("expected `{key}` with {values} value(s), got `{line}`"),
        ));
    }
    Ok(parts[1..].to_vec())
}

fn parse_usize(text: &str, field: &str) -> Result<usize> {
    text.parse::<usize>()
        .map_err(|_| Error::parse(field, format!("`{text}` is not a non-negative integer")))
}

fn push_floats(blob: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

struct BlobReader<'a> {
    blob: &'a [u8],
    pos: usize,
}

impl BlobReader<'_> {
    fn take_floats(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let need = count * 8;
        if self.pos + need > self.blob.len() {
            return Err(Error::parse(
                field,
                format!(
                    "blob truncated: need {need} bytes, {} remain",
                    self.blob.len() - self.pos
                ),
            ));
        }
        let out = self.blob[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += need;
        Ok(out)
    }
}
