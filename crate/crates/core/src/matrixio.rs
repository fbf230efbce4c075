//! Plain-text formats for every artifact the toolkit reads or writes.
//!
//! Matrix files start with a `<rows> <cols>` header followed by `rows`
//! lines of `cols` whitespace-separated decimals. Lines beginning with `#`
//! before the header are comments (head files use one to document the bias
//! column). Floats are written with the shortest decimal that parses back
//! to the same bits, so `parse(format(m)) == m` holds exactly.
//!
//! Label files hold one `<index>\t<label>[\t<synset_id>]` line per class.
//! Prediction files are CSV with header `sample_id,target_class,predicted_source`.
//! Feature files start with `<n_samples> <dim>`, then one
//! `<target_class> <v1> ... <v_dim>` line per sample.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                line: pos / cols + 2,
                token: data[pos].to_string(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be at least 1x1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }
}

/// Shortest decimal rendering that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::BadNumber {
        line,
        token: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            line,
            token: token.to_string(),
        });
    }
    Ok(v)
}

fn parse_count(token: &str, line: usize) -> Result<usize> {
    token.parse().map_err(|_| Error::MalformedHeader {
        line,
        reason: format!("`{token}` is not a non-negative integer"),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a `<a> <b>` header line into two counts.
fn parse_header(line_no: usize, line: &str) -> Result<(usize, usize)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(Error::MalformedHeader {
            line: line_no,
            reason: format!("expected two counts, found {} tokens", tokens.len()),
        });
    }
    Ok((
        parse_count(tokens[0], line_no)?,
        parse_count(tokens[1], line_no)?,
    ))
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = numbered_lines(text).skip_while(|(_, l)| l.trim_start().starts_with('#'));
    let (line_no, header) = lines.next().ok_or(Error::MalformedHeader {
        line: 1,
        reason: "missing header".into(),
    })?;
    let (rows, cols) = parse_header(line_no, header)?;
    if rows == 0 || cols == 0 {
        return Err(Error::MalformedHeader {
            line: line_no,
            reason: format!("dimensions must be positive, got {rows}x{cols}"),
        });
    }

    let mut data = Vec::with_capacity(rows * cols);
    let mut row_lengths = Vec::with_capacity(rows);
    for (n, line) in lines {
        let before = data.len();
        for token in line.split_whitespace() {
            data.push(parse_f64(token, n)?);
        }
        row_lengths.push((n, data.len() - before));
    }
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            found: data.len(),
        });
    }
    if let Some(&(line, found)) = row_lengths.iter().find(|(_, len)| *len != cols) {
        return Err(Error::RaggedRow {
            line,
            expected: cols,
            found,
        });
    }
    Matrix::new(rows, cols, data)
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", m.rows, m.cols).unwrap();
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix(&read_text(path.as_ref())?)
}

pub fn write_matrix(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_matrix(m))
}

/// Writes a matrix preceded by `# `-prefixed comment lines.
pub fn write_matrix_with_comment(m: &Matrix, comment: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for line in comment.lines() {
        writeln!(text, "# {line}").unwrap();
    }
    text.push_str(&format_matrix(m));
    write_text(path.as_ref(), &text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub index: usize,
    pub label: String,
    pub synset: Option<String>,
}

/// Class labels ordered by their 0-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    entries: Vec<Label>,
}

impl LabelSet {
    /// Validates that indices are exactly `0..n` and labels are non-empty.
    pub fn new(mut entries: Vec<Label>) -> Result<Self> {
        entries.sort_by_key(|e| e.index);
        if let Some(pair) = entries.windows(2).find(|p| p[0].index == p[1].index) {
            return Err(Error::DuplicateIndex {
                index: pair[0].index,
            });
        }
        for (expected, e) in entries.iter().enumerate() {
            if e.index != expected {
                return Err(Error::IndexGap { missing: expected });
            }
            if e.label.trim().is_empty() {
                return Err(Error::EmptyLabel { line: expected + 1 });
            }
        }
        Ok(LabelSet { entries })
    }

    /// Labels without synset ids, indexed in order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        LabelSet::new(
            names
                .iter()
                .enumerate()
                .map(|(index, n)| Label {
                    index,
                    label: n.as_ref().to_string(),
                    synset: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Label] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&Label> {
        self.entries.get(index)
    }
}

pub fn parse_labels(text: &str) -> Result<LabelSet> {
    let mut entries = Vec::new();
    for (n, line) in numbered_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::MalformedRecord {
                line: n,
                reason: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let index = fields[0].trim().parse().map_err(|_| Error::MalformedRecord {
            line: n,
            reason: format!("`{}` is not a class index", fields[0]),
        })?;
        let label = fields[1].trim();
        if label.is_empty() {
            return Err(Error::EmptyLabel { line: n });
        }
        let synset = fields
            .get(2)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        entries.push(Label {
            index,
            label: label.to_string(),
            synset,
        });
    }
    LabelSet::new(entries)
}

pub fn format_labels(labels: &LabelSet) -> String {
    let mut out = String::new();
    for e in &labels.entries {
        match &e.synset {
            Some(s) => writeln!(out, "{}\t{}\t{}", e.index, e.label, s),
            None => writeln!(out, "{}\t{}", e.index, e.label),
        }
        .unwrap();
    }
    out
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    parse_labels(&read_text(path.as_ref())?)
}

pub fn write_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_labels(labels))
}

/// Which source output fired for one target sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub target_class: usize,
    pub predicted_source: usize,
}

const PREDICTION_HEADER: [&str; 3] = ["sample_id", "target_class", "predicted_source"];

pub fn parse_predictions(
    text: &str,
    n_sources: usize,
    n_targets: usize,
) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::MalformedHeader {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(Error::MalformedHeader {
            line: 1,
            reason: format!("expected `{}`", PREDICTION_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if row.len() != 3 {
            return Err(Error::MalformedRecord {
                line,
                reason: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let index = |field: &str| -> Result<usize> {
            field.parse().map_err(|_| Error::MalformedRecord {
                line,
                reason: format!("`{field}` is not a class index"),
            })
        };
        let target_class = index(&row[1])?;
        let predicted_source = index(&row[2])?;
        if target_class >= n_targets {
            return Err(Error::IndexOutOfRange {
                what: "target class",
                index: target_class,
                size: n_targets,
            });
        }
        if predicted_source >= n_sources {
            return Err(Error::IndexOutOfRange {
                what: "source class",
                index: predicted_source,
                size: n_sources,
            });
        }
        out.push(PredictionRecord {
            sample_id: row[0].to_string(),
            target_class,
            predicted_source,
        });
    }
    Ok(out)
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::from("sample_id,target_class,predicted_source\n");
    for r in records {
        writeln!(out, "{},{},{}", r.sample_id, r.target_class, r.predicted_source).unwrap();
    }
    out
}

pub fn read_predictions(
    path: impl AsRef<Path>,
    source: &LabelSet,
    target: &LabelSet,
) -> Result<Vec<PredictionRecord>> {
    parse_predictions(&read_text(path.as_ref())?, source.len(), target.len())
}

pub fn write_predictions(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_predictions(records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class: usize,
}

/// Fixed-dimension feature vectors, each tagged with a target class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    samples: Vec<Sample>,
}

impl FeatureDataset {
    pub fn new(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::RaggedRow {
                    line: i + 2,
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if let Some(v) = s.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    line: i + 2,
                    token: v.to_string(),
                });
            }
        }
        Ok(FeatureDataset { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One past the largest class index present.
    pub fn n_classes(&self) -> usize {
        self.samples.iter().map(|s| s.class + 1).max().unwrap_or(0)
    }

    /// Number of samples of each class in `0..n_classes`.
    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for s in &self.samples {
            if s.class < n_classes {
                counts[s.class] += 1;
            }
        }
        counts
    }

    /// Checks class indices are in range and every class has a sample.
    pub fn require_classes(&self, n_classes: usize) -> Result<()> {
        if let Some(s) = self.samples.iter().find(|s| s.class >= n_classes) {
            return Err(Error::IndexOutOfRange {
                what: "target class",
                index: s.class,
                size: n_classes,
            });
        }
        if let Some(missing) = self.class_counts(n_classes).iter().position(|&c| c == 0) {
            return Err(Error::InvalidConfig(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(())
    }
}

pub fn parse_features(text: &str) -> Result<FeatureDataset> {
    let mut lines = numbered_lines(text);
    let (line_no, header) = lines.next().ok_or(Error::MalformedHeader {
        line: 1,
        reason: "missing header".into(),
    })?;
    let (n_samples, dim) = parse_header(line_no, header)?;
    if dim == 0 {
        return Err(Error::MalformedHeader {
            line: line_no,
            reason: "dimension must be positive".into(),
        });
    }

    let mut samples = Vec::with_capacity(n_samples);
    for (n, line) in lines {
        let mut tokens = line.split_whitespace();
        let class_token = tokens.next().unwrap_or_default();
        let class = class_token.parse().map_err(|_| Error::MalformedRecord {
            line: n,
            reason: format!("`{class_token}` is not a class index"),
        })?;
        let features = tokens
            .map(|t| parse_f64(t, n))
            .collect::<Result<Vec<_>>>()?;
        if features.len() != dim {
            return Err(Error::RaggedRow {
                line: n,
                expected: dim,
                found: features.len(),
            });
        }
        samples.push(Sample { features, class });
    }
    if samples.len() != n_samples {
        return Err(Error::DimensionMismatch {
            expected: n_samples,
            found: samples.len(),
        });
    }
    FeatureDataset::new(dim, samples)
}

pub fn format_features(data: &FeatureDataset) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", data.samples.len(), data.dim).unwrap();
    for s in &data.samples {
        out.push_str(&s.class.to_string());
        for &v in &s.features {
            out.push(' ');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    parse_features(&read_text(path.as_ref())?)
}

pub fn write_features(data: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_features(data))
}
