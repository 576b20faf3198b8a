use super::{Result, WfdbError};

pub const SAMPLE_MIN: i16 = -2048;
pub const SAMPLE_MAX: i16 = 2047;

#[inline]
fn sign_extend_12(v: u16) -> i16 {
    ((v << 4) as i16) >> 4
}

/// Decodes `count` consecutive 12-bit samples from a 212 byte stream.
///
/// Each 3-byte group holds two samples:
/// `A = b0 | (b1 & 0x0F) << 8`, `B = b2 | (b1 & 0xF0) << 4`.
/// An odd trailing sample needs only the first two bytes of its group.
pub fn decode_212_samples(bytes: &[u8], count: usize) -> Result<Vec<i16>> {
    let needed = (count / 2) * 3 + if count % 2 == 1 { 2 } else { 0 };
    if bytes.len() < needed {
        return Err(WfdbError::TruncatedData {
            offset: bytes.len(),
            reason: format!("{count} samples need {needed} bytes, have {}", bytes.len()),
        });
    }
    let mut out = Vec::with_capacity(count);
    for frame in bytes[..needed].chunks(3) {
        let b0 = u16::from(frame[0]);
        let b1 = u16::from(frame[1]);
        out.push(sign_extend_12(b0 | ((b1 & 0x0F) << 8)));
        if out.len() == count {
            break;
        }
        let b2 = u16::from(frame[2]);
        out.push(sign_extend_12(b2 | ((b1 & 0xF0) << 4)));
    }
    Ok(out)
}

/// Decodes a two-channel interleaved 212 stream into per-channel samples.
pub fn decode_212(bytes: &[u8], samples_per_channel: usize) -> Result<[Vec<i16>; 2]> {
    let flat = decode_212_samples(bytes, 2 * samples_per_channel)?;
    let mut ch0 = Vec::with_capacity(samples_per_channel);
    let mut ch1 = Vec::with_capacity(samples_per_channel);
    for pair in flat.chunks_exact(2) {
        ch0.push(pair[0]);
        ch1.push(pair[1]);
    }
    Ok([ch0, ch1])
}
