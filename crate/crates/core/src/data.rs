//! Labelled datasets and the CSV / IDX readers that produce them.

use std::path::Path;

use crate::{Error, Result};

/// Samples stored contiguously, each with shape `(channels, height, width)`.
/// Flat feature vectors use shape `(features, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: [usize; 3],
    features: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(
        sample_shape: [usize; 3],
        features: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let per = sample_shape.iter().product::<usize>();
        if per == 0 {
            return Err(Error::config(format!("empty sample shape {sample_shape:?}")));
        }
        if features.len() != per * labels.len() {
            return Err(Error::config(format!(
                "{} feature values do not fit {} samples of shape {:?}",
                features.len(),
                labels.len(),
                sample_shape
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature in sample {}",
                bad / per
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::validation(format!("label {l} out of range for {classes} classes")));
        }
        Ok(Dataset { sample_shape, features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    /// New dataset holding the given samples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.sample_len();
        let mut features = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        Dataset {
            sample_shape: self.sample_shape,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Reinterprets each sample with a new shape of equal size.
    pub fn reshape(mut self, shape: [usize; 3]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.sample_len() {
            return Err(Error::config(format!(
                "shape {shape:?} does not match {} features per sample",
                self.sample_len()
            )));
        }
        self.sample_shape = shape;
        Ok(self)
    }

    /// Min-max rescales all features to `[0, upper]`. A constant dataset maps
    /// to zero.
    pub fn normalized_to(&self, upper: f64) -> Dataset {
        let (lo, hi) = self
            .features
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let features = if span > 0.0 {
            self.features.iter().map(|&v| (v - lo) / span * upper).collect()
        } else {
            vec![0.0; self.features.len()]
        };
        Dataset { features, ..self.clone() }
    }
}

/// Parses a `CxHxW` shape string.
pub fn parse_shape(s: &str) -> Result<[usize; 3]> {
    let dims: Vec<&str> = s.split(['x', 'X']).collect();
    let bad = || Error::config(format!("shape must look like CxHxW, got `{s}`"));
    if dims.len() != 3 {
        return Err(bad());
    }
    let mut out = [0usize; 3];
    for (o, d) in out.iter_mut().zip(dims) {
        *o = d.trim().parse().map_err(|_| bad())?;
        if *o == 0 {
            return Err(bad());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV

/// Parses CSV text: one sample per row, features first, integer class label
/// last. Blank lines are skipped. No header.
pub fn parse_csv_dataset(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse_line(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::parse_line(line, "need at least one feature and a label"));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::parse_line(
                    line,
                    format!("expected {w} columns, found {}", record.len()),
                ));
            }
            _ => {}
        }
        let last = record.len() - 1;
        for (col, field) in record.iter().take(last).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse_line(line, format!("column {}: `{field}` is not a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse_line(line, format!("column {}: non-finite value", col + 1)));
            }
            features.push(v);
        }
        let raw = &record[last];
        let label = raw.parse::<usize>().map_err(|_| {
            Error::validation(format!("line {line}: label `{raw}` is not a non-negative integer"))
        })?;
        labels.push(label);
    }
    let Some(width) = width else {
        return Err(Error::parse_line(1, "no samples"));
    };
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new([width - 1, 1, 1], features, labels, classes)
}

// ---------------------------------------------------------------------------
// IDX

/// Element type byte of an IDX header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => IdxType::U8,
            0x09 => IdxType::I8,
            0x0B => IdxType::I16,
            0x0C => IdxType::I32,
            0x0D => IdxType::F32,
            0x0E => IdxType::F64,
            _ => return None,
        })
    }

    fn code(self) -> u8 {
        match self {
            IdxType::U8 => 0x08,
            IdxType::I8 => 0x09,
            IdxType::I16 => 0x0B,
            IdxType::I32 => 0x0C,
            IdxType::F32 => 0x0D,
            IdxType::F64 => 0x0E,
        }
    }

    fn width(self) -> usize {
        match self {
            IdxType::U8 | IdxType::I8 => 1,
            IdxType::I16 => 2,
            IdxType::I32 | IdxType::F32 => 4,
            IdxType::F64 => 8,
        }
    }
}

/// A decoded IDX array, values widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub elem: IdxType,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Magic number of a 3-d unsigned-byte IDX file (image stacks).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of a 1-d unsigned-byte IDX file (labels).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Decodes an IDX byte stream (big-endian header, big-endian payload).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::parse_offset(bytes.len(), "truncated magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::parse_offset(0, format!(
            "bad magic number 0x{:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let elem = IdxType::from_code(bytes[2])
        .ok_or_else(|| Error::parse_offset(2, format!("unknown element type 0x{:02x}", bytes[2])))?;
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::parse_offset(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::parse_offset(bytes.len(), "truncated dimension header"));
    }
    let mut dims = Vec::with_capacity(ndims);
    let mut count: usize = 1;
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let v = u32::from_be_bytes(bytes[off..off + 4].try_into().expect("4-byte slice")) as usize;
        count = count
            .checked_mul(v)
            .ok_or_else(|| Error::parse_offset(off, "dimension product overflows"))?;
        dims.push(v);
    }
    let payload = &bytes[header..];
    let needed = count
        .checked_mul(elem.width())
        .ok_or_else(|| Error::parse_offset(header, "payload size overflows"))?;
    if payload.len() != needed {
        return Err(Error::parse_offset(
            header + payload.len().min(needed),
            format!("payload has {} bytes, header implies {needed}", payload.len()),
        ));
    }
    let w = elem.width();
    let data = payload
        .chunks_exact(w)
        .map(|c| match elem {
            IdxType::U8 => c[0] as f64,
            IdxType::I8 => c[0] as i8 as f64,
            IdxType::I16 => i16::from_be_bytes([c[0], c[1]]) as f64,
            IdxType::I32 => i32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
            IdxType::F32 => f32::from_be_bytes([c[0], c[1], c[2], c[3]]) as f64,
            IdxType::F64 => f64::from_be_bytes(c.try_into().expect("8-byte chunk")),
        })
        .collect();
    Ok(IdxArray { elem, dims, data })
}

/// Encodes an unsigned-byte IDX array.
pub fn encode_idx_u8(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, IdxType::U8.code(), dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Builds a dataset from an image IDX array (`n x H x W` or `n x C x H x W`)
/// and a 1-d label IDX array.
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray) -> Result<Dataset> {
    let shape = match images.dims[..] {
        [_, h, w] => [1, h, w],
        [_, c, h, w] => [c, h, w],
        _ => {
            return Err(Error::validation(format!(
                "image file must have 3 or 4 dimensions, found {}",
                images.dims.len()
            )))
        }
    };
    let n = images.dims[0];
    if labels.dims.len() != 1 || labels.dims[0] != n {
        return Err(Error::validation(format!(
            "label file has shape {:?}, expected [{n}]",
            labels.dims
        )));
    }
    let mut out = Vec::with_capacity(n);
    for (i, &l) in labels.data.iter().enumerate() {
        if l < 0.0 || l.fract() != 0.0 || l > u32::MAX as f64 {
            return Err(Error::validation(format!("label {l} of sample {i} is not a class index")));
        }
        out.push(l as usize);
    }
    if images.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite pixel value"));
    }
    let classes = out.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(shape, images.data.clone(), out, classes)
}

/// On-disk dataset formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Csv(std::path::PathBuf),
    /// Image file and label file.
    Idx(std::path::PathBuf, std::path::PathBuf),
}

impl DataSource {
    /// `a.csv` is CSV; `images,labels` is an IDX pair.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.split_once(',') {
            Some((img, lbl)) if !img.is_empty() && !lbl.is_empty() => {
                Ok(DataSource::Idx(img.into(), lbl.into()))
            }
            Some(_) => Err(Error::config(format!("bad IDX pair `{spec}`"))),
            None => Ok(DataSource::Csv(spec.into())),
        }
    }

    /// Short name used in reports: the file stem of the (image) file.
    pub fn name(&self) -> String {
        let p = match self {
            DataSource::Csv(p) | DataSource::Idx(p, _) => p,
        };
        p.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
    }
}

/// Loads a dataset; `shape` reshapes CSV rows, `normalize_to` min-max
/// rescales the features to `[0, normalize_to]`.
pub fn load_dataset(
    source: &DataSource,
    shape: Option<[usize; 3]>,
    normalize_to: Option<f64>,
) -> Result<Dataset> {
    let mut data = match source {
        DataSource::Csv(path) => parse_csv_dataset(&read_text(path)?)?,
        DataSource::Idx(img, lbl) => {
            let images = parse_idx(&read_bytes(img)?)?;
            let labels = parse_idx(&read_bytes(lbl)?)?;
            dataset_from_idx(&images, &labels)?
        }
    };
    if let Some(shape) = shape {
        data = data.reshape(shape)?;
    }
    if let Some(upper) = normalize_to {
        data = data.normalized_to(upper);
    }
    Ok(data)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
    })
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| {
        Error::Parse {
            location: crate::Location::Source(path.display().to_string()),
            message: format!("not UTF-8 (byte {})", e.utf8_error().valid_up_to()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_two_samples() {
        let d = parse_csv_dataset("1.0,2.0,0\n3.0,4.0,1").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sample_shape(), [2, 1, 1]);
        assert_eq!(d.classes(), 2);
        assert_eq!(d.sample(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv_dataset(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv_dataset("\n\n"), Err(Error::Parse { .. })));
        let e = parse_csv_dataset("1,2,0\n1,x,1").unwrap_err();
        assert!(matches!(e, Error::Parse { location: crate::Location::Line(2), .. }), "{e}");
        assert!(matches!(parse_csv_dataset("1,2,0\n1,1"), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv_dataset("1,2,-1"), Err(Error::Validation(_))));
        assert!(matches!(parse_csv_dataset("1,2,0.5"), Err(Error::Validation(_))));
        assert!(matches!(parse_csv_dataset("5"), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv_dataset("inf,0"), Err(Error::Parse { .. })));
    }

    #[test]
    fn idx_round_trip_and_magic() {
        let bytes = encode_idx_u8(&[2, 2, 3], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255]);
        assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()), IDX_IMAGES_MAGIC);
        let a = parse_idx(&bytes).unwrap();
        assert_eq!(a.dims, vec![2, 2, 3]);
        assert_eq!(a.data[11], 255.0);

        let labels = parse_idx(&encode_idx_u8(&[2], &[1, 0])).unwrap();
        let d = dataset_from_idx(&a, &labels).unwrap();
        assert_eq!(d.sample_shape(), [1, 2, 3]);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn idx_wider_types() {
        let mut bytes = vec![0, 0, 0x0B, 1, 0, 0, 0, 2];
        bytes.extend_from_slice(&(-3i16).to_be_bytes());
        bytes.extend_from_slice(&(300i16).to_be_bytes());
        assert_eq!(parse_idx(&bytes).unwrap().data, vec![-3.0, 300.0]);

        let mut bytes = vec![0, 0, 0x0E, 1, 0, 0, 0, 1];
        bytes.extend_from_slice(&1.25f64.to_be_bytes());
        assert_eq!(parse_idx(&bytes).unwrap().data, vec![1.25]);
    }

    #[test]
    fn idx_rejects_malformed() {
        assert!(parse_idx(&[]).is_err());
        assert!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]).is_err());
        assert!(parse_idx(&[0, 0, 7, 1, 0, 0, 0, 0]).is_err());
        assert!(parse_idx(&[0, 0, 8, 0]).is_err());
        assert!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 1]).is_err());
        // declares 2 elements, carries 1
        assert!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 9]).is_err());
        // overflowing dimension product
        let mut huge = vec![0, 0, 8, 3];
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        assert!(parse_idx(&huge).is_err());
    }

    #[test]
    fn idx_label_count_mismatch() {
        let a = parse_idx(&encode_idx_u8(&[2, 1, 1], &[0, 1])).unwrap();
        let l = parse_idx(&encode_idx_u8(&[3], &[0, 1, 2])).unwrap();
        assert!(matches!(dataset_from_idx(&a, &l), Err(Error::Validation(_))));
    }

    #[test]
    fn shapes_and_normalization() {
        assert_eq!(parse_shape("1x16x16").unwrap(), [1, 16, 16]);
        assert!(parse_shape("1x16").is_err());
        assert!(parse_shape("0x2x2").is_err());
        let d = parse_csv_dataset("2,4,0\n6,10,1").unwrap();
        let n = d.normalized_to(255.0);
        assert_eq!(n.features(), &[0.0, 255.0 * 2.0 / 8.0, 255.0 * 4.0 / 8.0, 255.0]);
        assert!(d.clone().reshape([1, 1, 2]).is_ok());
        assert!(d.reshape([3, 1, 1]).is_err());
    }

    #[test]
    fn source_spec() {
        assert_eq!(DataSource::parse("a/b.csv").unwrap(), DataSource::Csv("a/b.csv".into()));
        assert_eq!(
            DataSource::parse("img.idx,lbl.idx").unwrap(),
            DataSource::Idx("img.idx".into(), "lbl.idx".into())
        );
        assert_eq!(DataSource::parse("x/digits.csv").unwrap().name(), "digits");
        assert!(DataSource::parse(",x").is_err());
    }
}
