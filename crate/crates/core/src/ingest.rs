//! Record loading, fixed-window segmentation and z-score normalization.
//!
//! Record files are UTF-8 CSV:
//!
//! ```text
//! id,<text>
//! rate,<int>
//! n,<int>
//! <sample 0>
//! <sample 1>
//! ...
//! ```
//!
//! A manifest CSV with columns `record_path,segment_index,label_code` assigns
//! one class to each labelled window.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },
    #[error("{path}: line {line}: cannot parse sample {text:?}")]
    BadSample { path: PathBuf, line: usize, text: String },
    #[error("{path}: sample count mismatch: header declares {declared}, body has {actual}")]
    SampleCountMismatch {
        path: PathBuf,
        declared: usize,
        actual: usize,
    },
    #[error("record {0} has no samples")]
    EmptyRecord(String),
    #[error("sampling rate must be positive")]
    ZeroRate,
    #[error("window of {seconds} s at {rate} Hz holds no samples")]
    EmptyWindow { seconds: f64, rate: u32 },
    #[error("no samples to compute normalization statistics from")]
    NoSamples,
    #[error("zero variance: every sample equals {mean}, cannot normalize")]
    ZeroVariance { mean: f64 },
    #[error("segment from {0} is already normalized")]
    AlreadyNormalized(String),
    #[error("unknown class code {code:?}; scheme is {scheme}")]
    UnknownClass { code: String, scheme: String },
    #[error("invalid label scheme: {0}")]
    BadScheme(String),
    #[error("{path}: line {line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },
    #[error("manifest references window {index} of {record}, which has only {windows} windows")]
    ManifestMismatch {
        record: String,
        index: usize,
        windows: usize,
    },
}

/// A class as seen by the network: dense index plus one-letter code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId {
    pub index: usize,
    pub code: char,
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code)
    }
}

/// Ordered set of class codes; position in the list is the class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    codes: Vec<char>,
}

impl LabelScheme {
    pub fn new(codes: Vec<char>) -> Result<Self, IngestError> {
        if codes.is_empty() || codes.len() > u8::MAX as usize {
            return Err(IngestError::BadScheme(format!("{} classes", codes.len())));
        }
        for (i, c) in codes.iter().enumerate() {
            if codes[..i].contains(c) {
                return Err(IngestError::BadScheme(format!("duplicate code {c:?}")));
            }
        }
        Ok(Self { codes })
    }

    /// N, V, L, R, A.
    pub fn mit_bih() -> Self {
        Self::new(vec!['N', 'V', 'L', 'R', 'A']).unwrap()
    }

    /// N, A (normal vs atrial fibrillation).
    pub fn af_binary() -> Self {
        Self::new(vec!['N', 'A']).unwrap()
    }

    /// Parses a comma-separated code list such as `N,V,L,R,A`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let codes = text
            .split(',')
            .map(|s| {
                let s = s.trim();
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(IngestError::BadScheme(format!("{s:?} is not a single character"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(codes)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[char] {
        &self.codes
    }

    pub fn class(&self, index: usize) -> Option<ClassId> {
        self.codes.get(index).map(|&code| ClassId { index, code })
    }

    pub fn lookup(&self, code: &str) -> Result<ClassId, IngestError> {
        let mut chars = code.trim().chars();
        let found = match (chars.next(), chars.next()) {
            (Some(c), None) => self.codes.iter().position(|&k| k == c),
            _ => None,
        };
        found
            .map(|index| ClassId {
                index,
                code: self.codes[index],
            })
            .ok_or_else(|| IngestError::UnknownClass {
                code: code.to_string(),
                scheme: self.to_string(),
            })
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let joined: Vec<String> = self.codes.iter().map(char::to_string).collect();
        f.write_str(&joined.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelTrack {
    /// Every window of the record carries this class.
    PerRecord(ClassId),
    /// Class per window index; windows without an entry are unlabelled.
    PerWindow(BTreeMap<usize, ClassId>),
}

impl LabelTrack {
    fn label_for(&self, window: usize) -> Option<ClassId> {
        match self {
            LabelTrack::PerRecord(c) => Some(*c),
            LabelTrack::PerWindow(map) => map.get(&window).copied(),
        }
    }
}

/// One lead of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    pub sampling_rate_hz: u32,
    pub samples: Vec<f64>,
    pub label_track: Option<LabelTrack>,
}

impl EcgRecord {
    pub fn new(id: impl Into<String>, sampling_rate_hz: u32, samples: Vec<f64>) -> Result<Self, IngestError> {
        let id = id.into();
        if sampling_rate_hz == 0 {
            return Err(IngestError::ZeroRate);
        }
        if samples.is_empty() {
            return Err(IngestError::EmptyRecord(id));
        }
        Ok(Self {
            id,
            sampling_rate_hz,
            samples,
            label_track: None,
        })
    }

    pub fn with_labels(mut self, track: LabelTrack) -> Self {
        self.label_track = Some(track);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub source_id: String,
    pub values: Vec<f64>,
    pub label: ClassId,
    pub normalized: bool,
}

/// Pooled mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Which segments the normalization statistics are pooled over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormScope {
    /// Every segment of the dataset, test folds included.
    #[default]
    All,
    /// Only the training portion of each cross-validation fold.
    TrainOnly,
}

impl std::str::FromStr for NormScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" => Ok(Self::All),
            "train_only" => Ok(Self::TrainOnly),
            other => Err(format!("unknown norm scope {other:?} (expected all or train_only)")),
        }
    }
}

impl fmt::Display for NormScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::TrainOnly => "train_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
}

pub fn load_record(path: &Path, format: RecordFormat) -> Result<EcgRecord, IngestError> {
    match format {
        RecordFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse_csv_record(&text, path)
        }
    }
}

fn header_field<'a>(line: Option<&'a str>, key: &str, path: &Path) -> Result<&'a str, IngestError> {
    let malformed = |detail: String| IngestError::MalformedHeader {
        path: path.to_path_buf(),
        detail,
    };
    let line = line.ok_or_else(|| malformed(format!("missing `{key}` line")))?;
    let (k, v) = line
        .split_once(',')
        .ok_or_else(|| malformed(format!("expected `{key},<value>`, got {line:?}")))?;
    if k.trim() != key {
        return Err(malformed(format!("expected key `{key}`, got {:?}", k.trim())));
    }
    Ok(v.trim())
}

fn parse_csv_record(text: &str, path: &Path) -> Result<EcgRecord, IngestError> {
    let mut lines = text.lines();
    let id = header_field(lines.next(), "id", path)?.to_string();
    let malformed = |detail: String| IngestError::MalformedHeader {
        path: path.to_path_buf(),
        detail,
    };
    let rate: u32 = header_field(lines.next(), "rate", path)?
        .parse()
        .map_err(|e| malformed(format!("rate: {e}")))?;
    let declared: usize = header_field(lines.next(), "n", path)?
        .parse()
        .map_err(|e| malformed(format!("n: {e}")))?;

    let mut samples = Vec::with_capacity(declared);
    for (i, line) in lines.enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| IngestError::BadSample {
            path: path.to_path_buf(),
            line: i + 4,
            text: t.to_string(),
        })?;
        samples.push(v);
    }
    if samples.len() != declared {
        return Err(IngestError::SampleCountMismatch {
            path: path.to_path_buf(),
            declared,
            actual: samples.len(),
        });
    }
    EcgRecord::new(id, rate, samples)
}

/// Serializes a record in the CSV record format.
pub fn write_record(path: &Path, record: &EcgRecord) -> Result<(), IngestError> {
    let mut out = format!(
        "id,{}\nrate,{}\nn,{}\n",
        record.id,
        record.sampling_rate_hz,
        record.samples.len()
    );
    for v in &record.samples {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Samples per window: `round(window_seconds × rate)`.
pub fn window_len(sampling_rate_hz: u32, window_seconds: f64) -> Result<usize, IngestError> {
    let n = (window_seconds * sampling_rate_hz as f64).round();
    if n.is_nan() || n < 1.0 {
        return Err(IngestError::EmptyWindow {
            seconds: window_seconds,
            rate: sampling_rate_hz,
        });
    }
    Ok(n as usize)
}

/// Number of complete windows in a record.
pub fn window_count(record: &EcgRecord, window_seconds: f64) -> Result<usize, IngestError> {
    Ok(record.samples.len() / window_len(record.sampling_rate_hz, window_seconds)?)
}

/// Cuts the record into consecutive non-overlapping windows starting at
/// sample 0, dropping any trailing remainder. Windows without a label in the
/// record's label track are skipped; a record with no track yields nothing.
pub fn segment(record: &EcgRecord, window_seconds: f64) -> Result<Vec<Segment>, IngestError> {
    let len = window_len(record.sampling_rate_hz, window_seconds)?;
    let Some(track) = &record.label_track else {
        return Ok(Vec::new());
    };
    Ok(record
        .samples
        .chunks_exact(len)
        .enumerate()
        .filter_map(|(i, chunk)| {
            track.label_for(i).map(|label| Segment {
                source_id: record.id.clone(),
                values: chunk.to_vec(),
                label,
                normalized: false,
            })
        })
        .collect())
}

pub fn compute_norm_stats<'a, I>(segments: I) -> Result<NormStats, IngestError>
where
    I: IntoIterator<Item = &'a Segment>,
    I::IntoIter: Clone,
{
    let iter = segments.into_iter();
    let (mut n, mut sum) = (0usize, 0.0f64);
    for s in iter.clone() {
        n += s.values.len();
        sum += s.values.iter().sum::<f64>();
    }
    if n == 0 {
        return Err(IngestError::NoSamples);
    }
    let mean = sum / n as f64;
    let ss: f64 = iter
        .flat_map(|s| s.values.iter())
        .map(|&v| (v - mean) * (v - mean))
        .sum();
    Ok(NormStats {
        mean,
        std: (ss / n as f64).sqrt(),
    })
}

/// `(x − mean) / std` for every sample.
pub fn normalize(segment: &Segment, stats: &NormStats) -> Result<Segment, IngestError> {
    if segment.normalized {
        return Err(IngestError::AlreadyNormalized(segment.source_id.clone()));
    }
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Err(IngestError::ZeroVariance { mean: stats.mean });
    }
    Ok(Segment {
        source_id: segment.source_id.clone(),
        values: segment.values.iter().map(|&x| (x - stats.mean) / stats.std).collect(),
        label: segment.label,
        normalized: true,
    })
}

pub fn denormalize(segment: &Segment, stats: &NormStats) -> Segment {
    Segment {
        source_id: segment.source_id.clone(),
        values: segment.values.iter().map(|&x| x * stats.std + stats.mean).collect(),
        label: segment.label,
        normalized: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub record_path: String,
    pub segment_index: usize,
    pub label: ClassId,
}

/// Parses a manifest CSV. The header row is required.
pub fn parse_manifest(text: &str, path: &Path, scheme: &LabelScheme) -> Result<Vec<ManifestEntry>, IngestError> {
    let err = |line: usize, detail: String| IngestError::Manifest {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "record_path,segment_index,label_code" => {}
        other => {
            return Err(err(
                1,
                format!(
                    "expected header `record_path,segment_index,label_code`, got {:?}",
                    other.map(|(_, l)| l)
                ),
            ))
        }
    }
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [record_path, index, code] = fields[..] else {
                return Err(err(i + 1, format!("expected 3 fields, got {}", fields.len())));
            };
            let segment_index = index
                .parse()
                .map_err(|e| err(i + 1, format!("segment_index {index:?}: {e}")))?;
            let label = scheme.lookup(code)?;
            Ok(ManifestEntry {
                record_path: record_path.to_string(),
                segment_index,
                label,
            })
        })
        .collect()
}

pub fn load_manifest(path: &Path, scheme: &LabelScheme) -> Result<Vec<ManifestEntry>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path, scheme)
}

/// Groups manifest entries into a per-window label track for each record
/// path, in first-appearance order.
pub fn label_tracks(entries: &[ManifestEntry]) -> Vec<(String, LabelTrack)> {
    let mut order: Vec<String> = Vec::new();
    let mut maps: BTreeMap<String, BTreeMap<usize, ClassId>> = BTreeMap::new();
    for e in entries {
        if !maps.contains_key(&e.record_path) {
            order.push(e.record_path.clone());
        }
        maps.entry(e.record_path.clone())
            .or_default()
            .insert(e.segment_index, e.label);
    }
    order
        .into_iter()
        .map(|p| {
            let m = maps.remove(&p).unwrap();
            (p, LabelTrack::PerWindow(m))
        })
        .collect()
}

/// Loads every record named in `entries` (paths relative to `data_dir`),
/// attaches its manifest labels and segments it. Segments come out record by
/// record in manifest order, windows ascending.
pub fn segment_manifest(data_dir: &Path, entries: &[ManifestEntry], window_seconds: f64) -> Result<Vec<Segment>, IngestError> {
    let mut out = Vec::new();
    for (rel, track) in label_tracks(entries) {
        let record = load_record(&data_dir.join(&rel), RecordFormat::Csv)?;
        let windows = window_count(&record, window_seconds)?;
        if let LabelTrack::PerWindow(map) = &track {
            if let Some(&index) = map.keys().find(|&&i| i >= windows) {
                return Err(IngestError::ManifestMismatch {
                    record: rel,
                    index,
                    windows,
                });
            }
        }
        out.extend(segment(&record.with_labels(track), window_seconds)?);
    }
    Ok(out)
}

/// Window labels for a beat-annotated record: each window takes the most
/// frequent beat class among beats whose sample position falls inside it
/// (ties go to the lower class index). Windows without beats get no label.
pub fn majority_window_labels(beats: &[(usize, ClassId)], window_len: usize, windows: usize) -> BTreeMap<usize, ClassId> {
    let mut tallies: BTreeMap<usize, BTreeMap<ClassId, usize>> = BTreeMap::new();
    for &(pos, class) in beats {
        let w = pos / window_len;
        if w < windows {
            *tallies.entry(w).or_default().entry(class).or_default() += 1;
        }
    }
    tallies
        .into_iter()
        .filter_map(|(w, counts)| {
            let best = counts.values().copied().max()?;
            counts.into_iter().find(|&(_, n)| n == best).map(|(c, _)| (w, c))
        })
        .collect()
}
