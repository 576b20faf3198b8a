//! `ECGI` image dataset container.
//!
//! ```text
//! "ECGI" | version u32 LE | count u32 LE | count x ( label u8 | 65536 x u8 )
//! ```
//!
//! Pixels are row-major 8-bit grayscale: 0 background, 255 waveform.

use std::io::{Read, Write};
use std::path::Path;

use super::{BeatImage, RasterError, Result, IMAGE_PIXELS};
use crate::beatprep::Label;

const MAGIC: &[u8; 4] = b"ECGI";
const VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> RasterError {
    RasterError::Container(msg.into())
}

fn io(e: std::io::Error) -> RasterError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        corrupt("unexpected end of data")
    } else {
        corrupt(e.to_string())
    }
}

pub fn write_images<W: Write>(mut w: W, images: &[BeatImage]) -> Result<()> {
    let count = u32::try_from(images.len()).map_err(|_| corrupt("too many images"))?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&count.to_le_bytes()).map_err(io)?;
    for img in images {
        w.write_all(&[img.label.index() as u8]).map_err(io)?;
        w.write_all(&img.to_gray8(false)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_images<R: Read>(mut r: R) -> Result<Vec<BeatImage>> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head).map_err(io)?;
    if &head[..4] != MAGIC {
        return Err(corrupt("bad magic, expected ECGI"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut buf = vec![0u8; 1 + IMAGE_PIXELS];
    for i in 0..count {
        r.read_exact(&mut buf).map_err(io)?;
        let label = Label::from_index(usize::from(buf[0]))
            .ok_or_else(|| corrupt(format!("image {i}: bad label byte {}", buf[0])))?;
        let pixels = buf[1..]
            .iter()
            .map(|&p| match p {
                0 => Ok(0),
                255 => Ok(1),
                other => Err(corrupt(format!("image {i}: non-binary pixel value {other}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        out.push(BeatImage::from_pixels(pixels, label));
    }
    Ok(out)
}

pub fn write_images_file(path: &Path, images: &[BeatImage]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_images(std::io::BufWriter::new(f), images)
}

pub fn read_images_file(path: &Path) -> Result<Vec<BeatImage>> {
    let bytes = std::fs::read(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_images(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beatprep::{Beat, BEAT_LEN};
    use crate::raster::{rasterize, AxisBounds};

    #[test]
    fn round_trip() {
        let bounds = AxisBounds::new(-2.0, 2.0).unwrap();
        let imgs: Vec<BeatImage> = [Label::Normal, Label::Abnormal]
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let s = (0..BEAT_LEN).map(|i| ((i * (k + 1)) as f32 * 0.02).sin()).collect();
                rasterize(&Beat::new(s, l, "", 0).unwrap(), &bounds)
            })
            .collect();
        let mut buf = Vec::new();
        write_images(&mut buf, &imgs).unwrap();
        assert_eq!(buf.len(), 12 + 2 * (1 + IMAGE_PIXELS));
        let back = read_images(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in imgs.iter().zip(&back) {
            assert_eq!(a.pixels(), b.pixels());
            assert_eq!(a.label, b.label);
        }
        assert!(read_images(&buf[..100]).is_err());
        let mut bad = buf;
        bad[13] = 17;
        assert!(read_images(bad.as_slice()).is_err());
    }
}
