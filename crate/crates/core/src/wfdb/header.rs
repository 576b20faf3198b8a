use super::{Result, WfdbError};

/// Gain used when a signal line omits it (or declares 0), in adu per mV.
pub const DEFAULT_GAIN: f64 = 200.0;
/// Baseline used when neither a baseline nor an ADC zero is declared.
pub const DEFAULT_BASELINE: i32 = 1024;
/// Sampling frequency assumed by WFDB when the record line omits it.
const DEFAULT_FS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format_code: u32,
    pub byte_offset: usize,
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_rate: f64,
    /// Samples per channel; `None` when the header leaves it to the signal file.
    pub n_samples: Option<usize>,
    pub signals: Vec<SignalSpec>,
}

impl RecordHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.signals.iter().map(|s| s.gain).collect()
    }

    pub fn baselines(&self) -> Vec<i32> {
        self.signals.iter().map(|s| s.baseline).collect()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> WfdbError {
    WfdbError::MalformedHeader {
        line,
        reason: reason.into(),
    }
}

/// Parses the text of a WFDB `.hea` file.
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lineno, record_line) = lines
        .next()
        .ok_or_else(|| malformed(0, "header is empty"))?;
    let mut fields = record_line.split_whitespace();
    let name = fields.next().ok_or_else(|| malformed(lineno, "missing record name"))?;
    if name.contains('/') {
        return Err(malformed(lineno, "multi-segment records are not supported"));
    }
    let n_signals: usize = fields
        .next()
        .ok_or_else(|| malformed(lineno, "missing signal count"))?
        .parse()
        .map_err(|_| malformed(lineno, "signal count is not an integer"))?;
    if n_signals == 0 {
        return Err(malformed(lineno, "record declares no signals"));
    }
    let sampling_rate = match fields.next() {
        Some(tok) => {
            // "360", "360/...": counter frequency and base counter are ignored.
            let fs_tok = tok.split('/').next().unwrap_or(tok);
            fs_tok
                .parse::<f64>()
                .map_err(|_| malformed(lineno, format!("bad sampling frequency {tok:?}")))?
        }
        None => DEFAULT_FS,
    };
    if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
        return Err(malformed(lineno, "sampling frequency must be positive"));
    }
    let n_samples = fields
        .next()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| malformed(lineno, format!("bad sample count {tok:?}")))
        })
        .transpose()?;

    let mut signals = Vec::with_capacity(n_signals);
    for (lineno, line) in lines.by_ref().take(n_signals) {
        signals.push(parse_signal_line(lineno, line)?);
    }
    if signals.len() != n_signals {
        return Err(malformed(
            lineno,
            format!("declares {n_signals} signals but has {} signal lines", signals.len()),
        ));
    }
    Ok(RecordHeader {
        record_name: name.to_string(),
        sampling_rate,
        n_samples,
        signals,
    })
}

fn parse_signal_line(lineno: usize, line: &str) -> Result<SignalSpec> {
    let mut fields = line.split_whitespace();
    let file_name = fields
        .next()
        .ok_or_else(|| malformed(lineno, "missing file name"))?
        .to_string();
    let fmt_tok = fields
        .next()
        .ok_or_else(|| malformed(lineno, "missing signal format"))?;
    let (format_code, byte_offset) = parse_format(lineno, fmt_tok)?;
    if format_code != 212 {
        return Err(WfdbError::UnsupportedFormat(format_code));
    }

    let mut gain = DEFAULT_GAIN;
    let mut baseline: Option<i32> = None;
    let mut units = String::from("mV");
    if let Some(tok) = fields.next() {
        let (g, b, u) = parse_gain(lineno, tok)?;
        if g > 0.0 {
            gain = g;
        }
        baseline = b;
        if let Some(u) = u {
            units = u;
        }
    }
    let _adc_resolution = fields.next();
    let adc_zero = fields
        .next()
        .map(|tok| {
            tok.parse::<i32>()
                .map_err(|_| malformed(lineno, format!("bad ADC zero {tok:?}")))
        })
        .transpose()?;
    let _init_value = fields.next();
    let _checksum = fields.next();
    let _block_size = fields.next();
    let description = fields.collect::<Vec<_>>().join(" ");

    Ok(SignalSpec {
        file_name,
        format_code,
        byte_offset,
        gain,
        // WFDB: an absent baseline defaults to the ADC zero.
        baseline: baseline.or(adc_zero).unwrap_or(DEFAULT_BASELINE),
        units,
        description,
    })
}

/// `212`, `212x1`, `212:3`, `212+512` and combinations of these.
fn parse_format(lineno: usize, tok: &str) -> Result<(u32, usize)> {
    let digits_end = tok.find(|c: char| !c.is_ascii_digit()).unwrap_or(tok.len());
    let code: u32 = tok[..digits_end]
        .parse()
        .map_err(|_| malformed(lineno, format!("bad format field {tok:?}")))?;
    let rest = &tok[digits_end..];
    let mut offset = 0;
    if let Some(pos) = rest.find('+') {
        let off_tok = &rest[pos + 1..];
        offset = off_tok
            .parse()
            .map_err(|_| malformed(lineno, format!("bad byte offset in {tok:?}")))?;
    }
    if let Some(x) = rest.strip_prefix('x') {
        let spf_end = x.find(|c: char| !c.is_ascii_digit()).unwrap_or(x.len());
        if &x[..spf_end] != "1" {
            return Err(malformed(lineno, "multiple samples per frame are not supported"));
        }
    }
    Ok((code, offset))
}

/// `200`, `200(1024)`, `200/mV`, `200(0)/mV`.
fn parse_gain(lineno: usize, tok: &str) -> Result<(f64, Option<i32>, Option<String>)> {
    let (body, units) = match tok.split_once('/') {
        Some((b, u)) => (b, Some(u.to_string())),
        None => (tok, None),
    };
    let (gain_tok, baseline) = match body.split_once('(') {
        Some((g, rest)) => {
            let b = rest
                .strip_suffix(')')
                .ok_or_else(|| malformed(lineno, format!("unclosed baseline in {tok:?}")))?;
            let b = b
                .parse::<i32>()
                .map_err(|_| malformed(lineno, format!("bad baseline in {tok:?}")))?;
            (g, Some(b))
        }
        None => (body, None),
    };
    let gain = gain_tok
        .parse::<f64>()
        .map_err(|_| malformed(lineno, format!("bad gain {tok:?}")))?;
    if !gain.is_finite() || gain < 0.0 {
        return Err(malformed(lineno, format!("gain must be non-negative, got {tok:?}")));
    }
    Ok((gain, baseline, units))
}
