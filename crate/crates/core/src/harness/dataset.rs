//! Labelled sample collections and their on-disk formats.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen::{validate_label, Shape};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    FlatVector,
    ImagePlane,
    PrecomputedFeatures,
}

impl InputKind {
    /// Raw inputs go through the frozen model; precomputed ones skip it.
    pub fn is_raw(self) -> bool {
        !matches!(self, InputKind::PrecomputedFeatures)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f32>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub kind: InputKind,
    pub shape: Shape,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(id: impl Into<String>, kind: InputKind, shape: Shape, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.input.len() != shape.len() {
                return Err(Error::shape(
                    "dataset",
                    shape,
                    "sample",
                    format!("#{i} len {}", s.input.len()),
                ));
            }
            validate_label(&s.label)?;
        }
        Ok(Self {
            id: id.into(),
            kind,
            shape,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.label.as_str()))
            .map(|s| s.label.clone())
            .collect()
    }

    /// Keeps only samples whose label is in `keep`.
    pub fn filtered(&self, keep: &BTreeSet<String>) -> Self {
        Self {
            id: self.id.clone(),
            kind: self.kind,
            shape: self.shape,
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(&s.label))
                .cloned()
                .collect(),
        }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            source_name: name.to_owned(),
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses IDX image bytes into `(rows, cols, pixels scaled to [0, 1])`.
pub fn parse_idx_images(name: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<f32>>)> {
    let magic = read_u32_be(bytes, 0, name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            source_name: name.to_owned(),
            offset: 0,
            message: format!("bad magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(bytes, 4, name)? as usize;
    let rows = read_u32_be(bytes, 8, name)? as usize;
    let cols = read_u32_be(bytes, 12, name)? as usize;
    let plane = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * plane {
        return Err(Error::Format {
            source_name: name.to_owned(),
            offset: (16 + payload.len()) as u64,
            message: format!(
                "truncated payload: {count} images of {rows}x{cols} need {} bytes",
                count * plane
            ),
        });
    }
    let images = payload[..count * plane]
        .chunks_exact(plane.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| f32::from(p) / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(name: &str, bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            source_name: name.to_owned(),
            offset: 0,
            message: format!("bad magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(bytes, 4, name)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format {
            source_name: name.to_owned(),
            offset: (8 + payload.len()) as u64,
            message: format!("truncated payload: {count} labels declared"),
        });
    }
    Ok(payload[..count].to_vec())
}

/// Loads an IDX image/label pair, keeping only the digits in `keep` (as
/// strings, e.g. `"7"`). Pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, keep: &BTreeSet<String>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let img_name = images.display().to_string();
    let lbl_name = labels.display().to_string();
    let (rows, cols, planes) = parse_idx_images(&img_name, &read_file(images)?)?;
    let digits = parse_idx_labels(&lbl_name, &read_file(labels)?)?;
    if planes.len() != digits.len() {
        return Err(Error::Format {
            source_name: lbl_name,
            offset: 4,
            message: format!("{} labels for {} images in {img_name}", digits.len(), planes.len()),
        });
    }
    if keep.is_empty() {
        log::warn!("empty keep set: {img_name} yields an empty dataset");
    }
    let samples = planes
        .into_iter()
        .zip(digits)
        .map(|(input, d)| Sample {
            input,
            label: d.to_string(),
        })
        .filter(|s| keep.contains(&s.label))
        .collect();
    let mut keep_ids: Vec<&str> = keep.iter().map(String::as_str).collect();
    keep_ids.sort_unstable();
    Dataset::new(
        format!(
            "mnist:{}:{}",
            images
                .file_name()
                .map_or(img_name.clone(), |f| f.to_string_lossy().into_owned()),
            keep_ids.join("")
        ),
        InputKind::ImagePlane,
        Shape::Image {
            height: rows,
            width: cols,
            channels: 1,
        },
        samples,
    )
}

/// Reads a `label,f0,...,f{m-1}` CSV as precomputed features.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv_as(path, InputKind::PrecomputedFeatures)
}

/// Reads the same CSV layout with an explicit input kind (flat raw vectors
/// use [`InputKind::FlatVector`]).
pub fn load_csv_as(path: impl AsRef<Path>, kind: InputKind) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_feature_csv(&name, file, kind)
}

pub fn parse_feature_csv(name: &str, reader: impl std::io::Read, kind: InputKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(name, 1, e.to_string()))?.clone();
    if headers.get(0) != Some("label") {
        return Err(Error::parse(name, 1, "first header column must be `label`"));
    }
    let m = headers.len() - 1;
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::parse(
                name,
                1,
                format!("header column {} is {h:?}, expected \"f{j}\"", j + 2),
            ));
        }
    }
    if m == 0 {
        return Err(Error::parse(name, 1, "header declares no feature columns"));
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != m + 1 {
            return Err(Error::parse(
                name,
                line,
                format!("expected {} fields, found {}", m + 1, record.len()),
            ));
        }
        let label = record[0].to_owned();
        validate_label(&label).map_err(|e| Error::parse(name, line, e.to_string()))?;
        let input = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, cell)| match cell.trim().parse::<f32>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(
                    name,
                    line,
                    format!("column f{j}: {cell:?} is not a finite number"),
                )),
            })
            .collect::<Result<Vec<f32>>>()?;
        samples.push(Sample { input, label });
    }
    Dataset::new(format!("csv:{name}"), kind, Shape::Flat(m), samples)
}

/// Writes samples in the feature CSV layout. Values use shortest round-trip
/// formatting, so reading back is lossless.
pub fn write_feature_csv(writer: impl std::io::Write, samples: &[Sample]) -> Result<()> {
    let m = samples.first().map_or(0, |s| s.input.len());
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    let mut header = vec!["label".to_owned()];
    header.extend((0..m).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(to_err)?;
    let mut row = Vec::with_capacity(m + 1);
    for s in samples {
        if s.input.len() != m {
            return Err(Error::shape(
                "csv",
                format!("m = {m}"),
                "sample",
                format!("len {}", s.input.len()),
            ));
        }
        row.clear();
        row.push(s.label.clone());
        row.extend(s.input.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv flush failed: {e}")))
}

pub fn save_feature_csv(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_csv(std::io::BufWriter::new(file), samples)
}
