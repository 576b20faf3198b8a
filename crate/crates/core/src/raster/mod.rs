//! Beat-to-image rendering.
//!
//! A beat is drawn as a 1-pixel binary polyline on a 256x256 grid. The time
//! axis spans all columns; the voltage axis uses dataset-wide bounds so that
//! amplitude is comparable across images.

mod container;

pub use container::{read_images, read_images_file, write_images, write_images_file};

use serde::{Deserialize, Serialize};

use crate::beatprep::{Beat, Label, BEAT_LEN};
use crate::neural::Tensor;

pub const IMAGE_SIZE: usize = 256;
pub const IMAGE_PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;
/// Relative margin added above and below the voltage range.
pub const BOUNDS_MARGIN: f64 = 0.05;

pub type Result<T> = std::result::Result<T, RasterError>;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("cannot compute bounds of an empty dataset")]
    EmptyDataset,
    #[error("dataset voltage range is degenerate (min = max = {0})")]
    DegenerateRange(f64),
    #[error("invalid axis bounds lo={lo} hi={hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("unsupported channel count {0}; expected 1 or 3")]
    UnsupportedChannelCount(usize),
    #[error("bad image container: {0}")]
    Container(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Fixed voltage axis, in millivolts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBounds {
    lo: f64,
    hi: f64,
}

impl AxisBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(AxisBounds { lo, hi })
        } else {
            Err(RasterError::InvalidBounds { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Row for a voltage; 0 is the top (`hi`), 255 the bottom (`lo`).
    fn row(&self, v: f64) -> i32 {
        let v = v.clamp(self.lo, self.hi);
        ((self.hi - v) * (IMAGE_SIZE - 1) as f64 / (self.hi - self.lo)).round() as i32
    }
}

/// Global min/max over all samples, widened by [`BOUNDS_MARGIN`] of the range.
pub fn compute_bounds(beats: &[Beat]) -> Result<AxisBounds> {
    if beats.is_empty() {
        return Err(RasterError::EmptyDataset);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in beats.iter().flat_map(|b| b.samples()) {
        lo = lo.min(f64::from(*v));
        hi = hi.max(f64::from(*v));
    }
    let range = hi - lo;
    if range == 0.0 {
        return Err(RasterError::DegenerateRange(lo));
    }
    AxisBounds::new(lo - BOUNDS_MARGIN * range, hi + BOUNDS_MARGIN * range)
}

/// A 256x256 binary rendering of one beat.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatImage {
    /// Row-major, 1 = waveform, 0 = background.
    pixels: Vec<u8>,
    pub label: Label,
    pub r_index: u64,
    pub snr_db: Option<f32>,
}

impl BeatImage {
    pub(crate) fn from_pixels(pixels: Vec<u8>, label: Label) -> Self {
        debug_assert_eq!(pixels.len(), IMAGE_PIXELS);
        BeatImage {
            pixels,
            label,
            r_index: 0,
            snr_db: None,
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn intensity(&self, row: usize, col: usize) -> f32 {
        f32::from(self.pixels[row * IMAGE_SIZE + col])
    }

    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// 8-bit grayscale, foreground 255 (or 0 when `invert`).
    pub fn to_gray8(&self, invert: bool) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| if (p != 0) != invert { 255 } else { 0 })
            .collect()
    }

    /// Writes `channels` replicated planes of intensities into `out`.
    pub fn write_planes(&self, channels: usize, out: &mut [f32]) -> Result<()> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::UnsupportedChannelCount(channels));
        }
        assert_eq!(out.len(), channels * IMAGE_PIXELS, "output buffer size");
        for plane in out.chunks_exact_mut(IMAGE_PIXELS) {
            for (o, &p) in plane.iter_mut().zip(&self.pixels) {
                *o = f32::from(p);
            }
        }
        Ok(())
    }
}

/// Sets every pixel on the Bresenham segment between two points.
pub(crate) fn draw_line(pixels: &mut [u8], (c0, r0): (i32, i32), (c1, r1): (i32, i32)) {
    let dx = (c1 - c0).abs();
    let dy = -(r1 - r0).abs();
    let sx = if c0 < c1 { 1 } else { -1 };
    let sy = if r0 < r1 { 1 } else { -1 };
    let (mut c, mut r) = (c0, r0);
    let mut err = dx + dy;
    loop {
        pixels[r as usize * IMAGE_SIZE + c as usize] = 1;
        if c == c1 && r == r1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            c += sx;
        }
        if e2 <= dx {
            err += dx;
            r += sy;
        }
    }
}

/// Draws a polyline through `values`, spread evenly across all columns.
pub(crate) fn render_polyline(values: &[f32], bounds: &AxisBounds) -> Vec<u8> {
    let mut pixels = vec![0u8; IMAGE_PIXELS];
    let last = values.len().saturating_sub(1).max(1) as f64;
    let point = |t: usize, v: f32| {
        let c = (t as f64 * (IMAGE_SIZE - 1) as f64 / last).round() as i32;
        (c, bounds.row(f64::from(v)))
    };
    let mut prev = point(0, values[0]);
    draw_line(&mut pixels, prev, prev);
    for (t, &v) in values.iter().enumerate().skip(1) {
        let p = point(t, v);
        draw_line(&mut pixels, prev, p);
        prev = p;
    }
    pixels
}

/// Renders a beat with fixed axis bounds.
pub fn rasterize(beat: &Beat, bounds: &AxisBounds) -> BeatImage {
    debug_assert_eq!(beat.samples().len(), BEAT_LEN);
    BeatImage {
        pixels: render_polyline(beat.samples(), bounds),
        label: beat.label,
        r_index: beat.r_index,
        snr_db: beat.snr_db,
    }
}

/// The image as a `channels x 256 x 256` tensor.
pub fn to_input_tensor(image: &BeatImage, channels: usize) -> Result<Tensor<f32>> {
    let mut data = vec![0.0f32; channels.max(1) * IMAGE_PIXELS];
    if channels == 0 {
        return Err(RasterError::UnsupportedChannelCount(0));
    }
    image.write_planes(channels, &mut data)?;
    Ok(Tensor::from_vec(vec![channels, IMAGE_SIZE, IMAGE_SIZE], data).expect("shape matches data"))
}
