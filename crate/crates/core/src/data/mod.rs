//! Unpaired two-domain image data, the augmentation family and single-source
//! augmented batches.

mod augment;
pub mod toy;

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Device, Kind, Tensor};

pub use augment::{
    apply_augmentation, bilinear_resize, sample_augmentation, upscale_size, AugmentParams,
    MAX_ROTATION_DEG, MAX_SHEAR, MAX_TRANSLATE_FRAC, SCALE_RANGE,
};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// A 3-channel square image stored channel-major with values in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    size: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(size: usize, data: Vec<f32>) -> Result<Self> {
        if size == 0 || data.len() != CHANNELS * size * size {
            return Err(Error::Shape(format!(
                "expected {} values for a {size}x{size} image, got {}",
                CHANNELS * size * size,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(Self { size, data })
    }

    pub fn constant(size: usize, value: f32) -> Self {
        assert!((-1.0..=1.0).contains(&value));
        Self {
            size,
            data: vec![value; CHANNELS * size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(CHANNELS * size * size);
        for c in 0..CHANNELS {
            for y in 0..size {
                for x in 0..size {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(size, data)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.size + y) * self.size + x]
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::Shape(format!("image is {w}x{h}, expected square")));
        }
        let size = w as usize;
        let raw = img.as_raw();
        Self::from_fn(size, |c, y, x| raw[(y * size + x) * 3 + c] as f32 / 127.5 - 1.0)
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let s = self.size;
        RgbImage::from_fn(s as u32, s as u32, |x, y| {
            let px = |c| to_u8(self.get(c, y as usize, x as usize));
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    /// Loads a PNG or JPEG, converts to RGB and resizes to `size` when needed.
    pub fn load(path: &Path, size: usize) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rgb = img.to_rgb8();
        if rgb.dimensions() != (size as u32, size as u32) {
            rgb = image::imageops::resize(&rgb, size as u32, size as u32, FilterType::Triangle);
        }
        Self::from_rgb8(&rgb)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f32 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        (sum / self.data.len() as f64) as f32
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Stacks images into an `[n, 3, s, s]` float tensor.
pub fn stack_images(images: &[ImageTensor], kind: Kind) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("cannot stack an empty image list"))?;
    let s = first.size;
    let mut flat = Vec::with_capacity(images.len() * first.data.len());
    for img in images {
        if img.size != s {
            return Err(Error::Shape(format!("mixed image sizes {s} and {}", img.size)));
        }
        flat.extend_from_slice(&img.data);
    }
    Ok(Tensor::from_slice(&flat)
        .view([images.len() as i64, CHANNELS as i64, s as i64, s as i64])
        .to_kind(kind))
}

/// Splits an `[n, 3, s, s]` tensor back into images, clamping into [-1, 1].
pub fn unstack_images(t: &Tensor) -> Result<Vec<ImageTensor>> {
    let dims = t.size();
    if dims.len() != 4 || dims[1] != CHANNELS as i64 || dims[2] != dims[3] {
        return Err(Error::Shape(format!("expected [n, 3, s, s], got {dims:?}")));
    }
    let n = dims[0] as usize;
    let s = dims[2] as usize;
    let flat: Vec<f32> = Vec::try_from(
        t.detach()
            .to_device(Device::Cpu)
            .to_kind(Kind::Float)
            .contiguous()
            .view([-1]),
    )?;
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoded image".into()));
    }
    let per = CHANNELS * s * s;
    (0..n)
        .map(|i| {
            let data = flat[i * per..(i + 1) * per]
                .iter()
                .map(|v| v.clamp(-1.0, 1.0))
                .collect();
            ImageTensor::new(s, data)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    X,
    Y,
}

impl Domain {
    pub fn dir_name(self) -> &'static str {
        match self {
            Domain::X => "domainA",
            Domain::Y => "domainB",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Domain::X => Domain::Y,
            Domain::Y => Domain::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One domain/split of an unpaired dataset, decoded into memory on load and
/// immutable afterwards.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain: Domain,
    pub split: Split,
    pub items: Vec<PathBuf>,
    images: Vec<ImageTensor>,
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
    )
}

impl DomainDataset {
    pub fn split_dir(root: &Path, domain: Domain, split: Split) -> PathBuf {
        root.join(domain.dir_name()).join(split.dir_name())
    }

    /// Reads `<root>/<domainA|domainB>/<train|test>/*.{png,jpg,jpeg}` in
    /// lexicographic file-name order.
    pub fn load(root: &Path, domain: Domain, split: Split, resolution: usize) -> Result<Self> {
        let dir = Self::split_dir(root, domain, split);
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut items = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_file() && is_image_file(&path) {
                items.push(path);
            }
        }
        items.sort();
        let images = items
            .iter()
            .map(|p| ImageTensor::load(p, resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            domain,
            split,
            items,
            images,
        })
    }

    pub fn from_images(domain: Domain, split: Split, images: Vec<ImageTensor>) -> Self {
        let items = (0..images.len())
            .map(|i| PathBuf::from(format!("<memory>/{i:05}")))
            .collect();
        Self {
            domain,
            split,
            items,
            images,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> Result<&ImageTensor> {
        self.images.get(index).ok_or_else(|| {
            Error::invalid(format!(
                "index {index} out of range for {} images",
                self.images.len()
            ))
        })
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn resolution(&self) -> Option<usize> {
        self.images.first().map(|i| i.size())
    }

    /// Visiting order for one epoch; a pure function of `(seed, epoch)`.
    pub fn epoch_order(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng);
        order
    }
}

/// `n` augmented views of one source image together with their parameters.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub source_id: usize,
    pub views: Vec<ImageTensor>,
    pub params: Vec<AugmentParams>,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn to_tensor(&self, kind: Kind) -> Result<Tensor> {
        stack_images(&self.views, kind)
    }
}

pub fn make_batch<R: Rng + ?Sized>(
    dataset: &DomainDataset,
    index: usize,
    n: usize,
    rng: &mut R,
) -> Result<AugmentedBatch> {
    if n < 2 {
        return Err(Error::invalid(format!("batch size must be at least 2, got {n}")));
    }
    let source = dataset.image(index)?;
    let params: Vec<AugmentParams> = (0..n)
        .map(|_| sample_augmentation(rng, source.size()))
        .collect();
    let views = params
        .iter()
        .map(|p| apply_augmentation(source, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedBatch {
        source_id: index,
        views,
        params,
    })
}

/// `n` distinct images drawn uniformly without replacement, each with its own
/// random augmentation: a fair sample of the augmented domain.
pub fn sample_real_batch<R: Rng + ?Sized>(
    dataset: &DomainDataset,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ImageTensor>> {
    if dataset.len() < n {
        return Err(Error::invalid(format!(
            "need {n} images for a real batch, dataset has {}",
            dataset.len()
        )));
    }
    let picks = rand::seq::index::sample(rng, dataset.len(), n).into_vec();
    picks
        .into_iter()
        .map(|i| {
            let img = &dataset.images[i];
            let p = sample_augmentation(rng, img.size());
            apply_augmentation(img, &p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(size: usize, phase: f32) -> ImageTensor {
        ImageTensor::from_fn(size, |c, y, x| {
            ((x as f32 * 0.37 + y as f32 * 0.11 + c as f32 + phase).sin() * 0.9).clamp(-1.0, 1.0)
        })
        .unwrap()
    }

    fn dataset(n: usize) -> DomainDataset {
        let images = (0..n).map(|i| gradient_image(32, i as f32)).collect();
        DomainDataset::from_images(Domain::X, Split::Train, images)
    }

    #[test]
    fn image_tensor_rejects_out_of_range() {
        assert!(ImageTensor::new(2, vec![0.0; 12]).is_ok());
        assert!(ImageTensor::new(2, vec![0.0; 11]).is_err());
        let mut bad = vec![0.0; 12];
        bad[3] = 1.5;
        assert!(ImageTensor::new(2, bad.clone()).is_err());
        bad[3] = f32::NAN;
        assert!(ImageTensor::new(2, bad).is_err());
    }

    #[test]
    fn rgb_round_trip_and_normalization() {
        let img = RgbImage::from_fn(4, 4, |x, y| image::Rgb([(x * 60) as u8, (y * 60) as u8, 255]));
        let t = ImageTensor::from_rgb8(&img).unwrap();
        assert_eq!(t.get(2, 0, 0), 1.0);
        assert_eq!(t.get(0, 0, 0), -1.0);
        assert_eq!(t.to_rgb8(), img);
    }

    #[test]
    fn stack_unstack() {
        let imgs = vec![gradient_image(8, 0.0), gradient_image(8, 1.0)];
        let t = stack_images(&imgs, Kind::Float).unwrap();
        assert_eq!(t.size(), vec![2, 3, 8, 8]);
        assert_eq!(unstack_images(&t).unwrap(), imgs);
    }

    #[test]
    fn make_batch_shares_source_and_differs() {
        let ds = dataset(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = make_batch(&ds, 2, 7, &mut rng).unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b.params.len(), 7);
        assert_eq!(b.source_id, 2);
        for i in 0..7 {
            for j in i + 1..7 {
                assert_ne!(b.views[i], b.views[j]);
                assert_ne!(b.params[i], b.params[j]);
            }
        }
    }

    #[test]
    fn make_batch_errors() {
        let ds = dataset(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(make_batch(&ds, 3, 7, &mut rng).is_err());
        assert!(make_batch(&ds, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn batches_are_reproducible() {
        let ds = dataset(4);
        let a = make_batch(&ds, 1, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_batch(&ds, 1, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.views, b.views);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn epoch_order_is_seeded_permutation() {
        let ds = dataset(10);
        let a = ds.epoch_order(3, 0);
        assert_eq!(a, ds.epoch_order(3, 0));
        assert_ne!(a, ds.epoch_order(3, 1));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn real_batch_uses_distinct_sources() {
        let ds = dataset(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_real_batch(&ds, 7, &mut rng).unwrap();
        assert_eq!(batch.len(), 7);
        assert!(sample_real_batch(&ds, 8, &mut rng).is_err());
    }

    #[test]
    fn load_reads_sorted_png_files() {
        let dir = tempfile::tempdir().unwrap();
        let split = DomainDataset::split_dir(dir.path(), Domain::Y, Split::Test);
        fs::create_dir_all(&split).unwrap();
        for (i, name) in ["b.png", "a.png", "c.jpg"].iter().enumerate() {
            let img = RgbImage::from_pixel(16, 16, image::Rgb([i as u8 * 100, 0, 0]));
            img.save(split.join(name)).unwrap();
        }
        fs::write(split.join("notes.txt"), "skip me").unwrap();
        let ds = DomainDataset::load(dir.path(), Domain::Y, Split::Test, 8).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.items[0].ends_with("a.png"));
        assert_eq!(ds.resolution(), Some(8));
        let missing = DomainDataset::load(dir.path(), Domain::X, Split::Test, 8).unwrap_err();
        assert!(missing.to_string().contains("domainA"));
    }
}
