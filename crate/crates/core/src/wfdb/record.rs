use std::path::Path;

use super::{
    decode_212_samples, parse_annotations, parse_header, read_file, Annotation, RecordHeader,
    Result, WfdbError,
};

/// Converts a raw ADC value to millivolts.
#[inline]
pub fn adu_to_mv(raw: i32, gain: f64, baseline: i32) -> f64 {
    f64::from(raw - baseline) / gain
}

/// A calibrated record: one millivolt sequence per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    header: RecordHeader,
    signals: Vec<Vec<f64>>,
}

impl Record {
    pub fn new(mut header: RecordHeader, signals: Vec<Vec<f64>>) -> Result<Self> {
        if signals.is_empty() || header.signals.is_empty() {
            return Err(WfdbError::ChannelMissing(0));
        }
        if signals.len() != header.signals.len() {
            return Err(WfdbError::MalformedHeader {
                line: 0,
                reason: format!(
                    "header declares {} signals, record has {}",
                    header.signals.len(),
                    signals.len()
                ),
            });
        }
        let n = signals[0].len();
        if let Some(bad) = signals.iter().position(|s| s.len() != n) {
            return Err(WfdbError::TruncatedData {
                offset: 0,
                reason: format!("channel {bad} length differs from channel 0 ({n})"),
            });
        }
        if let Some(declared) = header.n_samples {
            if declared != n {
                return Err(WfdbError::TruncatedData {
                    offset: 0,
                    reason: format!("header declares {declared} samples, signal has {n}"),
                });
            }
        }
        if signals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(WfdbError::MalformedCsv {
                line: 0,
                reason: "signal contains non-finite values".into(),
            });
        }
        header.n_samples = Some(n);
        Ok(Record { header, signals })
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn name(&self) -> &str {
        &self.header.record_name
    }

    pub fn n_samples(&self) -> usize {
        self.signals[0].len()
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn channel(&self, index: usize) -> Result<&[f64]> {
        self.signals
            .get(index)
            .map(Vec::as_slice)
            .ok_or(WfdbError::ChannelMissing(index))
    }
}

/// Decodes the signal bytes of a 212 record described by `header`.
pub fn decode_record(header: &RecordHeader, dat: &[u8]) -> Result<Record> {
    let n_sig = header.n_signals();
    if n_sig == 0 {
        return Err(WfdbError::ChannelMissing(0));
    }
    let offset = header.signals[0].byte_offset;
    let body = dat.get(offset..).ok_or_else(|| WfdbError::TruncatedData {
        offset: dat.len(),
        reason: format!("byte offset {offset} is past the end of the signal file"),
    })?;
    let n = match header.n_samples {
        Some(n) => n,
        None => (body.len() / 3) * 2 / n_sig,
    };
    let flat = decode_212_samples(body, n * n_sig)?;
    let mut signals = vec![Vec::with_capacity(n); n_sig];
    for frame in flat.chunks_exact(n_sig) {
        for (ch, (raw, spec)) in frame.iter().zip(&header.signals).enumerate() {
            signals[ch].push(adu_to_mv(i32::from(*raw), spec.gain, spec.baseline));
        }
    }
    Record::new(header.clone(), signals)
}

/// Loads and calibrates a record from its header, signal and annotation files.
pub fn load_record(
    header_path: &Path,
    signal_path: &Path,
    annotation_path: &Path,
) -> Result<(Record, Vec<Annotation>)> {
    let text = String::from_utf8_lossy(&read_file(header_path)?).into_owned();
    let header = parse_header(&text).map_err(|e| e.in_file(header_path))?;
    let dat = read_file(signal_path)?;
    let record = decode_record(&header, &dat).map_err(|e| e.in_file(signal_path))?;
    let atr = read_file(annotation_path)?;
    let annotations = parse_annotations(&atr).map_err(|e| e.in_file(annotation_path))?;
    Ok((record, annotations))
}

/// Loads `<base>.hea`, `<base>.dat` and `<base>.atr`.
pub fn load_record_from_base(base: &Path) -> Result<(Record, Vec<Annotation>)> {
    let with = |ext: &str| {
        let mut p = base.as_os_str().to_owned();
        p.push(".");
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    load_record(&with("hea"), &with("dat"), &with("atr"))
}
