//! Text model file format.
//!
//! ```text
//! olmodel v1
//! # comment lines and blank lines are ignored
//! input flat 600                       | input image <h> <w> <c>
//! layer dense <rows> <cols>            followed by <rows> weight rows, one bias row
//! layer conv2d <filters> <kh> <kw> <in_channels> <valid|same>
//!                                      followed by <filters> rows of kh*kw*in_channels
//!                                      values ([ky][kx][channel]), one bias row
//! layer relu | softmax | flatten | maxpool2x2
//! layer dropout <rate>
//! head <n> <m> <label_1> ... <label_n> followed by <n> weight rows, one bias row
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frozen::{validate_label, Conv2d, FrozenModel, HeadSeed, Layer, Padding, Shape};
use crate::math::Matrix;

pub const MODEL_MAGIC: &str = "olmodel v1";

/// Significant (non-blank, non-comment) lines with their 1-based numbers.
pub(crate) struct Lines<'a> {
    source: String,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(source: impl Into<String>, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self {
            source: source.into(),
            lines,
            pos: 0,
        }
    }

    pub(crate) fn error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.source.clone(), line, msg)
    }

    pub(crate) fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    pub(crate) fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.get(self.pos) {
            Some(&l) => {
                self.pos += 1;
                Ok(l)
            }
            None => {
                let last = self.lines.last().map_or(0, |l| l.0);
                Err(self.error(last + 1, format!("unexpected end of file, expected {what}")))
            }
        }
    }

    pub(crate) fn floats(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let (line, text) = self.next_line(what)?;
        let mut out = Vec::with_capacity(expected);
        for (field, tok) in text.split_whitespace().enumerate() {
            let v: f32 = tok
                .parse()
                .map_err(|_| self.error(line, format!("{what}: field {} ({tok:?}) is not a number", field + 1)))?;
            if !v.is_finite() {
                return Err(self.error(line, format!("{what}: field {} is not finite", field + 1)));
            }
            out.push(v);
        }
        if out.len() != expected {
            return Err(self.error(line, format!("{what}: expected {expected} values, found {}", out.len())));
        }
        Ok(out)
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(self.floats(cols, &format!("{what} row {r}"))?);
        }
        Matrix::from_vec(rows, cols, data)
    }

    pub(crate) fn usize_field(&self, line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
        let tok = tok.ok_or_else(|| self.error(line, format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.error(line, format!("{what}: {tok:?} is not a non-negative integer")))
    }

    pub(crate) fn expect_end(&self, line: usize, mut rest: std::str::SplitWhitespace<'_>) -> Result<()> {
        match rest.next() {
            Some(extra) => Err(self.error(line, format!("unexpected trailing field {extra:?}"))),
            None => Ok(()),
        }
    }
}

fn parse_input(lines: &mut Lines<'_>) -> Result<Shape> {
    let (line, text) = lines.next_line("input line")?;
    let mut it = text.split_whitespace();
    if it.next() != Some("input") {
        return Err(lines.error(line, "expected `input <shape>`"));
    }
    let shape = match it.next() {
        Some("flat") => Shape::Flat(lines.usize_field(line, it.next(), "input length")?),
        Some("image") => Shape::Image {
            height: lines.usize_field(line, it.next(), "height")?,
            width: lines.usize_field(line, it.next(), "width")?,
            channels: lines.usize_field(line, it.next(), "channels")?,
        },
        other => return Err(lines.error(line, format!("unknown input kind {other:?}"))),
    };
    lines.expect_end(line, it)?;
    if shape.is_empty() {
        return Err(lines.error(line, "input shape must be nonempty"));
    }
    Ok(shape)
}

fn parse_layer(lines: &mut Lines<'_>, line: usize, text: &str) -> Result<Layer> {
    let mut it = text.split_whitespace();
    it.next(); // "layer"
    let kind = it.next().ok_or_else(|| lines.error(line, "missing layer kind"))?;
    let layer = match kind {
        "dense" => {
            let rows = lines.usize_field(line, it.next(), "dense rows")?;
            let cols = lines.usize_field(line, it.next(), "dense cols")?;
            lines.expect_end(line, it)?;
            let weights = lines.matrix(rows, cols, "dense weights")?;
            let bias = lines.floats(rows, "dense bias")?;
            return Ok(Layer::Dense { weights, bias });
        }
        "conv2d" => {
            let filters = lines.usize_field(line, it.next(), "filters")?;
            let kernel_height = lines.usize_field(line, it.next(), "kernel height")?;
            let kernel_width = lines.usize_field(line, it.next(), "kernel width")?;
            let in_channels = lines.usize_field(line, it.next(), "input channels")?;
            let padding = match it.next() {
                Some("valid") => Padding::Valid,
                Some("same") => Padding::Same,
                other => return Err(lines.error(line, format!("padding must be valid or same, got {other:?}"))),
            };
            lines.expect_end(line, it)?;
            if kernel_height == 0 || kernel_width == 0 {
                return Err(lines.error(line, "conv2d kernel dims must be >= 1"));
            }
            let flen = kernel_height * kernel_width * in_channels;
            let kernel = lines.matrix(filters, flen, "conv2d kernel")?.as_slice().to_vec();
            let bias = lines.floats(filters, "conv2d bias")?;
            return Ok(Layer::Conv2d(Conv2d {
                filters,
                kernel_height,
                kernel_width,
                in_channels,
                padding,
                kernel,
                bias,
            }));
        }
        "relu" => Layer::Relu,
        "softmax" => Layer::Softmax,
        "flatten" => Layer::Flatten,
        "maxpool2x2" => Layer::MaxPool2x2,
        "dropout" => {
            let tok = it.next().ok_or_else(|| lines.error(line, "missing dropout rate"))?;
            let rate: f32 = tok
                .parse()
                .map_err(|_| lines.error(line, format!("dropout rate {tok:?} is not a number")))?;
            if !(0.0..1.0).contains(&rate) {
                return Err(lines.error(line, "dropout rate must be in [0, 1)"));
            }
            Layer::Dropout { rate }
        }
        other => return Err(lines.error(line, format!("unknown layer kind {other:?}"))),
    };
    lines.expect_end(line, it)?;
    Ok(layer)
}

pub(crate) fn parse_head_block(lines: &mut Lines<'_>) -> Result<HeadSeed> {
    let (line, text) = lines.next_line("head block")?;
    let mut it = text.split_whitespace();
    if it.next() != Some("head") {
        return Err(lines.error(line, "expected `head <n> <m> <labels...>`"));
    }
    let n = lines.usize_field(line, it.next(), "head rows")?;
    let m = lines.usize_field(line, it.next(), "head cols")?;
    let labels: Vec<String> = it.map(str::to_owned).collect();
    if labels.len() != n {
        return Err(lines.error(
            line,
            format!("head declares {n} rows but lists {} labels", labels.len()),
        ));
    }
    let weights = lines.matrix(n, m, "head weights")?;
    let biases = if n == 0 {
        Vec::new()
    } else {
        lines.floats(n, "head bias")?
    };
    let seed = HeadSeed {
        weights,
        biases,
        labels,
    };
    seed.validate().map_err(|e| lines.error(line, e.to_string()))?;
    Ok(seed)
}

/// Parses model text. `source` names the input in error messages.
pub fn parse_model(source: &str, text: &str) -> Result<(FrozenModel, HeadSeed)> {
    let mut lines = Lines::new(source, text);
    let (line, magic) = lines.next_line("header")?;
    if magic != MODEL_MAGIC {
        return Err(lines.error(line, format!("expected header {MODEL_MAGIC:?}, found {magic:?}")));
    }
    let input = parse_input(&mut lines)?;
    let mut layers = Vec::new();
    while let Some((line, text)) = lines.peek() {
        if !text.starts_with("layer") {
            break;
        }
        lines.pos += 1;
        layers.push(parse_layer(&mut lines, line, text)?);
    }
    let head_line = lines.peek().map_or(0, |l| l.0);
    let head = parse_head_block(&mut lines)?;
    if let Some((line, text)) = lines.peek() {
        return Err(lines.error(line, format!("unexpected content after head block: {text:?}")));
    }
    let model = FrozenModel::new(input, layers)?;
    if head.feature_len() != model.feature_len() {
        return Err(lines.error(
            head_line,
            format!(
                "head expects {} features but the model produces {}",
                head.feature_len(),
                model.feature_len()
            ),
        ));
    }
    Ok((model, head))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(FrozenModel, HeadSeed)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&path.display().to_string(), &text)
}

fn write_row(out: &mut String, row: &[f32]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub(crate) fn write_head_block(out: &mut String, head: &HeadSeed) {
    let _ = write!(out, "head {} {}", head.weights.rows(), head.weights.cols());
    for label in &head.labels {
        let _ = write!(out, " {label}");
    }
    out.push('\n');
    for i in 0..head.weights.rows() {
        write_row(out, head.weights.row(i));
    }
    if !head.biases.is_empty() {
        write_row(out, &head.biases);
    }
}

pub fn write_model(model: &FrozenModel, head: &HeadSeed) -> Result<String> {
    head.validate()?;
    for l in &head.labels {
        validate_label(l)?;
    }
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "input {}", model.input_shape());
    for layer in model.layers() {
        match layer {
            Layer::Dense { weights, bias } => {
                let _ = writeln!(out, "layer dense {} {}", weights.rows(), weights.cols());
                for i in 0..weights.rows() {
                    write_row(&mut out, weights.row(i));
                }
                write_row(&mut out, bias);
            }
            Layer::Conv2d(c) => {
                let _ = writeln!(
                    out,
                    "layer conv2d {} {} {} {} {}",
                    c.filters,
                    c.kernel_height,
                    c.kernel_width,
                    c.in_channels,
                    c.padding.as_str()
                );
                for filter in c.kernel.chunks(c.filter_len()) {
                    write_row(&mut out, filter);
                }
                write_row(&mut out, &c.bias);
            }
            Layer::Dropout { rate } => {
                let _ = writeln!(out, "layer dropout {rate}");
            }
            other => {
                let _ = writeln!(out, "layer {}", other.kind());
            }
        }
    }
    write_head_block(&mut out, head);
    Ok(out)
}

pub fn save_model(path: impl AsRef<Path>, model: &FrozenModel, head: &HeadSeed) -> Result<()> {
    let path = path.as_ref();
    let text = write_model(model, head)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
