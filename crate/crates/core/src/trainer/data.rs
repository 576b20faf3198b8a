use rayon::prelude::*;

use crate::beatprep::{Beat, Label, BEAT_LEN};
use crate::neural::{Network, Result, Tensor};
use crate::raster::{rasterize, AxisBounds, BeatImage, RasterError, IMAGE_SIZE};

/// A labeled dataset that can fill network input buffers.
pub trait Examples: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample input shape without the batch axis.
    fn sample_shape(&self) -> Vec<usize>;

    /// Class index of sample `i`.
    fn class(&self, i: usize) -> usize;

    /// Writes sample `i` into `out` (length = product of `sample_shape`).
    fn write_sample(&self, i: usize, out: &mut [f32]);
}

impl Examples for [Beat] {
    fn len(&self) -> usize {
        <[Beat]>::len(self)
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![1, BEAT_LEN]
    }

    fn class(&self, i: usize) -> usize {
        self[i].label.index()
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        out.copy_from_slice(self[i].samples());
    }
}

impl Examples for Vec<Beat> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.as_slice().sample_shape()
    }

    fn class(&self, i: usize) -> usize {
        self[i].label.index()
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        self.as_slice().write_sample(i, out)
    }
}

/// Images replicated to `channels` identical planes.
pub struct ImageSet<'a> {
    pub images: &'a [BeatImage],
    pub channels: usize,
}

impl Examples for ImageSet<'_> {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![self.channels, IMAGE_SIZE, IMAGE_SIZE]
    }

    fn class(&self, i: usize) -> usize {
        self.images[i].label.index()
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        self.images[i]
            .write_planes(self.channels, out)
            .expect("channel count validated at construction");
    }
}

/// Beats rasterized on demand with fixed bounds; never holds more than one
/// image per worker.
pub struct RenderedBeats<'a> {
    beats: &'a [Beat],
    bounds: AxisBounds,
    channels: usize,
}

impl<'a> RenderedBeats<'a> {
    pub fn new(beats: &'a [Beat], bounds: AxisBounds, channels: usize) -> std::result::Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::UnsupportedChannelCount(channels));
        }
        Ok(RenderedBeats { beats, bounds, channels })
    }
}

impl Examples for RenderedBeats<'_> {
    fn len(&self) -> usize {
        self.beats.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![self.channels, IMAGE_SIZE, IMAGE_SIZE]
    }

    fn class(&self, i: usize) -> usize {
        self.beats[i].label.index()
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        rasterize(&self.beats[i], &self.bounds)
            .write_planes(self.channels, out)
            .expect("channel count validated at construction");
    }
}

/// A view of `inner` restricted to `indices`.
pub struct Subset<'a, E: Examples + ?Sized> {
    pub inner: &'a E,
    pub indices: &'a [usize],
}

impl<E: Examples + ?Sized> Examples for Subset<'_, E> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.inner.sample_shape()
    }

    fn class(&self, i: usize) -> usize {
        self.inner.class(self.indices[i])
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        self.inner.write_sample(self.indices[i], out)
    }
}

/// Gathers samples `idx` into a `[n, shape..]` tensor plus class indices.
pub fn gather<E: Examples + ?Sized>(data: &E, idx: &[usize]) -> (Tensor<f32>, Vec<usize>) {
    let shape = data.sample_shape();
    let len: usize = shape.iter().product();
    let mut buf = vec![0.0f32; idx.len() * len];
    buf.par_chunks_mut(len)
        .zip(idx.par_iter())
        .for_each(|(out, &i)| data.write_sample(i, out));
    let mut full = vec![idx.len()];
    full.extend(shape);
    let labels = idx.iter().map(|&i| data.class(i)).collect();
    (Tensor::from_vec(full, buf).expect("gathered length"), labels)
}

/// Eval-mode class decisions for every example, in `batch`-sized chunks.
pub fn predict_classes<E: Examples + ?Sized>(net: &Network<f32>, data: &E, batch: usize) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in all.chunks(batch.max(1)) {
        let (x, _) = gather(data, chunk);
        out.extend(net.classify(&x)?);
    }
    Ok(out)
}

pub fn classes_of<E: Examples + ?Sized>(data: &E) -> Vec<usize> {
    (0..data.len()).map(|i| data.class(i)).collect()
}

/// Binary labels of class indices; anything but 0 counts as abnormal.
pub fn to_labels(classes: &[usize]) -> Vec<Label> {
    classes
        .iter()
        .map(|&c| if c == Label::Normal.index() { Label::Normal } else { Label::Abnormal })
        .collect()
}

/// Owned samples with arbitrary class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    shape: Vec<usize>,
    data: Vec<f32>,
    classes: Vec<usize>,
}

impl TensorSet {
    pub fn new(shape: Vec<usize>) -> Self {
        TensorSet {
            shape,
            data: Vec::new(),
            classes: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: &[f32], class: usize) {
        assert_eq!(sample.len(), self.shape.iter().product::<usize>(), "sample length");
        self.data.extend_from_slice(sample);
        self.classes.push(class);
    }
}

impl Examples for TensorSet {
    fn len(&self) -> usize {
        self.classes.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn class(&self, i: usize) -> usize {
        self.classes[i]
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.data[i * out.len()..(i + 1) * out.len()]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beatprep::Label;

    fn beats() -> Vec<Beat> {
        (0..3)
            .map(|k| {
                let s = (0..BEAT_LEN).map(|i| ((i + 37 * k) as f32 * 0.05).sin()).collect();
                Beat::new(s, Label::from_index(k % 2).unwrap(), "t", k as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn rendered_beats_match_prerendered_images() {
        let beats = beats();
        let bounds = AxisBounds::new(-1.5, 1.5).unwrap();
        let images: Vec<BeatImage> = beats.iter().map(|b| rasterize(b, &bounds)).collect();
        let lazy = RenderedBeats::new(&beats, bounds, 3).unwrap();
        let eager = ImageSet { images: &images, channels: 3 };
        let idx = [2, 0, 1];
        assert_eq!(gather(&lazy, &idx), gather(&eager, &idx));
        assert!(RenderedBeats::new(&beats, bounds, 2).is_err());
    }

    #[test]
    fn subset_reindexes() {
        let beats = beats();
        let sub = Subset { inner: &beats, indices: &[2, 1] };
        assert_eq!(classes_of(&sub), vec![0, 1]);
        assert_eq!(to_labels(&[0, 1, 2]), vec![Label::Normal, Label::Abnormal, Label::Abnormal]);
    }
}
