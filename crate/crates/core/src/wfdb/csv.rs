//! CSV fallback record format.
//!
//! A record is two files:
//!
//! * signal: one `sample_index,mV` row per sample, indices `0..n` in order;
//! * annotations: one `sample_index,symbol` row per annotation, where the
//!   symbol is a WFDB mnemonic (`N`, `V`, `+`, ...).
//!
//! A leading header row and `#` comment lines are ignored. The record is
//! presented as a single-channel record with the MIT-BIH nominal calibration.

use std::io::Write;
use std::path::Path;

use super::{
    read_file, Annotation, Record, RecordHeader, Result, SignalSpec, WfdbError, DEFAULT_BASELINE,
    DEFAULT_GAIN,
};

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes)
}

fn malformed(line: usize, reason: impl Into<String>) -> WfdbError {
    WfdbError::MalformedCsv {
        line,
        reason: reason.into(),
    }
}

fn rows(bytes: &[u8]) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, row) in reader(bytes).records().enumerate() {
        let row = row.map_err(|e| malformed(i + 1, e.to_string()))?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        if row.len() != 2 {
            return Err(malformed(line, format!("expected 2 columns, got {}", row.len())));
        }
        out.push((line, row[0].to_string(), row[1].to_string()));
    }
    // Tolerate a header row.
    if let Some((_, first, _)) = out.first() {
        if first.parse::<u64>().is_err() {
            out.remove(0);
        }
    }
    Ok(out)
}

/// Parses signal CSV text into millivolt samples.
pub fn parse_signal_csv(bytes: &[u8]) -> Result<Vec<f64>> {
    let rows = rows(bytes)?;
    let mut samples = Vec::with_capacity(rows.len());
    for (expected, (line, idx, mv)) in rows.into_iter().enumerate() {
        let idx: usize = idx
            .parse()
            .map_err(|_| malformed(line, format!("bad sample index {idx:?}")))?;
        if idx != expected {
            return Err(malformed(line, format!("expected sample index {expected}, got {idx}")));
        }
        let v: f64 = mv
            .parse()
            .map_err(|_| malformed(line, format!("bad millivolt value {mv:?}")))?;
        if !v.is_finite() {
            return Err(malformed(line, "non-finite sample value"));
        }
        samples.push(v);
    }
    Ok(samples)
}

/// Parses annotation CSV text.
pub fn parse_annotation_csv(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out: Vec<Annotation> = Vec::new();
    for (line, idx, sym) in rows(bytes)? {
        let idx: u64 = idx
            .parse()
            .map_err(|_| malformed(line, format!("bad sample index {idx:?}")))?;
        let mut chars = sym.chars();
        let symbol = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(malformed(line, format!("symbol must be one character, got {sym:?}"))),
        };
        if out.last().is_some_and(|prev| prev.sample_index > idx) {
            return Err(malformed(line, "annotation indices must be nondecreasing"));
        }
        out.push(Annotation::from_symbol(idx, symbol)?);
    }
    Ok(out)
}

/// Loads a CSV fallback record; the record name is the signal file stem.
pub fn load_csv_record(
    signal_path: &Path,
    annotation_path: &Path,
    sampling_rate: f64,
) -> Result<(Record, Vec<Annotation>)> {
    let samples = parse_signal_csv(&read_file(signal_path)?).map_err(|e| e.in_file(signal_path))?;
    let annotations = parse_annotation_csv(&read_file(annotation_path)?)
        .map_err(|e| e.in_file(annotation_path))?;
    let name = signal_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let header = RecordHeader {
        record_name: name.clone(),
        sampling_rate,
        n_samples: Some(samples.len()),
        signals: vec![SignalSpec {
            file_name: signal_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            format_code: 212,
            byte_offset: 0,
            gain: DEFAULT_GAIN,
            baseline: DEFAULT_BASELINE,
            units: "mV".into(),
            description: String::new(),
        }],
    };
    let record = Record::new(header, vec![samples]).map_err(|e| e.in_file(signal_path))?;
    Ok((record, annotations))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WfdbError + '_ {
    move |source| WfdbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a single channel plus annotations in the CSV fallback layout.
pub fn write_csv_record(
    samples: &[f64],
    annotations: &[Annotation],
    signal_path: &Path,
    annotation_path: &Path,
) -> Result<()> {
    let mut sig = String::with_capacity(samples.len() * 16);
    sig.push_str("sample_index,mv\n");
    for (i, v) in samples.iter().enumerate() {
        sig.push_str(&format!("{i},{v:.5}\n"));
    }
    std::fs::File::create(signal_path)
        .and_then(|mut f| f.write_all(sig.as_bytes()))
        .map_err(io_err(signal_path))?;
    let mut ann = String::from("sample_index,symbol\n");
    for a in annotations {
        ann.push_str(&format!("{},{}\n", a.sample_index, a.symbol));
    }
    std::fs::File::create(annotation_path)
        .and_then(|mut f| f.write_all(ann.as_bytes()))
        .map_err(io_err(annotation_path))?;
    Ok(())
}
