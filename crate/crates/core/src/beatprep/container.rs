//! `ECGB` beat dataset container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ECGB" | version u32 | count u32 |
//! count x ( label u8 | r_index u64 | snr_db f32 (NaN = clean) | 820 x f32 )
//! ```
//!
//! Record names are not stored; beats read back carry an empty name.

use std::io::{Read, Write};
use std::path::Path;

use super::{Beat, BeatError, Label, Result, BEAT_LEN};

const MAGIC: &[u8; 4] = b"ECGB";
const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> BeatError {
    BeatError::Container(msg.into())
}

fn io(e: std::io::Error) -> BeatError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        corrupt("unexpected end of data")
    } else {
        corrupt(e.to_string())
    }
}

pub fn write_beats<W: Write>(mut w: W, beats: &[Beat]) -> Result<()> {
    let count = u32::try_from(beats.len()).map_err(|_| corrupt("too many beats"))?;
    let mut buf = Vec::with_capacity(12 + beats.len() * (13 + 4 * BEAT_LEN));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for b in beats {
        buf.push(b.label.index() as u8);
        buf.extend_from_slice(&b.r_index.to_le_bytes());
        buf.extend_from_slice(&b.snr_db.unwrap_or(f32::NAN).to_le_bytes());
        for v in b.samples() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)
}

pub fn read_beats<R: Read>(mut r: R) -> Result<Vec<Beat>> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(io)?;
    if &head[..4] != MAGIC {
        return Err(corrupt("bad magic, expected ECGB"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut beats = Vec::with_capacity(count.min(1 << 20));
    let mut rec = vec![0u8; 13 + 4 * BEAT_LEN];
    for i in 0..count {
        r.read_exact(&mut rec).map_err(io)?;
        let label = Label::from_index(usize::from(rec[0]))
            .ok_or_else(|| corrupt(format!("beat {i}: bad label byte {}", rec[0])))?;
        let r_index = u64::from_le_bytes(rec[1..9].try_into().unwrap());
        let snr = f32::from_le_bytes(rec[9..13].try_into().unwrap());
        let samples = rec[13..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut beat = Beat::new(samples, label, "", r_index)?;
        beat.snr_db = (!snr.is_nan()).then_some(snr);
        beats.push(beat);
    }
    Ok(beats)
}

pub fn write_beats_file(path: &Path, beats: &[Beat]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| BeatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_beats(std::io::BufWriter::new(f), beats)
}

pub fn read_beats_file(path: &Path) -> Result<Vec<Beat>> {
    let bytes = std::fs::read(path).map_err(|source| BeatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_beats(bytes.as_slice())
}
