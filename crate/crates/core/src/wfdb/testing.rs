//! Synthetic writers used to exercise the parsers.

use super::Annotation;

/// Packs 12-bit samples in format 212 (inverse of `decode_212_samples`).
///
/// Values are truncated to their low 12 bits. An odd count produces a
/// 2-byte trailing group.
pub fn encode_212(samples: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 3 / 2 + 2);
    for pair in samples.chunks(2) {
        let a = (pair[0] & 0x0FFF) as u16;
        out.push((a & 0xFF) as u8);
        match pair.get(1) {
            Some(&b) => {
                let b = (b & 0x0FFF) as u16;
                out.push((((a >> 8) & 0x0F) | ((b >> 4) & 0xF0)) as u8);
                out.push((b & 0xFF) as u8);
            }
            None => out.push(((a >> 8) & 0x0F) as u8),
        }
    }
    out
}

/// Writes an MIT-format annotation stream, using SKIP for large gaps.
pub fn write_annotations(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut time = 0u64;
    for a in annotations {
        let mut delta = a.sample_index - time;
        if delta > 0x3FF {
            out.extend_from_slice(&(59u16 << 10).to_le_bytes());
            let skip = delta as u32;
            out.extend_from_slice(&((skip >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((skip & 0xFFFF) as u16).to_le_bytes());
            delta = 0;
        }
        let word = (u16::from(a.raw_code) << 10) | delta as u16;
        out.extend_from_slice(&word.to_le_bytes());
        time = a.sample_index;
    }
    out.extend_from_slice(&[0, 0]);
    out
}

/// Renders a format-212 header for `n_signals` channels stored in `<name>.dat`.
pub fn header_text(name: &str, n_signals: usize, fs: f64, n_samples: usize, gain: f64, baseline: i32) -> String {
    let mut s = format!("{name} {n_signals} {fs} {n_samples}\n");
    for i in 0..n_signals {
        s.push_str(&format!("{name}.dat 212 {gain} 11 {baseline} 0 0 0 ch{i}\n"));
    }
    s
}
