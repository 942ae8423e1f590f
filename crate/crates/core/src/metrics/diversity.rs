use rand::Rng;
use tch::{Kind, Tensor};

use super::{frechet_distance, FeatureExtractor, FeatureSet};
use crate::data::{apply_augmentation, sample_augmentation, stack_images, ImageTensor};
use crate::error::{Error, Result};
use crate::losses::PerceptualDistance;
use crate::nets::{Generator, StyleCode};

const TRANSLATE_CHUNK: usize = 50;

/// Anything that maps (image, style) pairs to output images.
pub trait Translator {
    fn translate(&self, images: &[ImageTensor], styles: &[StyleCode]) -> Result<Vec<ImageTensor>>;
}

impl Translator for Generator {
    fn translate(&self, images: &[ImageTensor], styles: &[StyleCode]) -> Result<Vec<ImageTensor>> {
        Generator::translate(self, images, styles)
    }
}

fn translate_chunked(t: &dyn Translator, images: &[ImageTensor], styles: &[StyleCode]) -> Result<Vec<ImageTensor>> {
    let mut out = Vec::with_capacity(images.len());
    for (imgs, zs) in images.chunks(TRANSLATE_CHUNK).zip(styles.chunks(TRANSLATE_CHUNK)) {
        let part = t.translate(imgs, zs)?;
        if part.len() != imgs.len() {
            return Err(Error::Shape(format!(
                "translator returned {} images for {} inputs",
                part.len(),
                imgs.len()
            )));
        }
        out.extend(part);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfidResult {
    /// Mean of `per_image`.
    pub value: f64,
    pub per_image: Vec<f64>,
}

/// Diversity FID: for each of the first `n` test images, translate `m`
/// random augmentations with independent styles and measure FID against the
/// real target features; average over images.
pub fn dfid<R: Rng + ?Sized>(
    translator: &dyn Translator,
    test_images: &[ImageTensor],
    m: usize,
    n: usize,
    real: &FeatureSet,
    extractor: &dyn FeatureExtractor,
    rng: &mut R,
) -> Result<DfidResult> {
    if n == 0 || n > test_images.len() {
        return Err(Error::invalid(format!(
            "DFID over {n} images requested, {} available",
            test_images.len()
        )));
    }
    if m < extractor.dim() + 1 {
        return Err(Error::invalid(format!(
            "DFID needs at least {} translations per image for {}-d features, got {m}",
            extractor.dim() + 1,
            extractor.dim()
        )));
    }
    if real.extractor_id != extractor.id() {
        return Err(Error::invalid(format!(
            "real features come from {}, not {}",
            real.extractor_id,
            extractor.id()
        )));
    }
    let mut per_image = Vec::with_capacity(n);
    for img in &test_images[..n] {
        let views = (0..m)
            .map(|_| apply_augmentation(img, &sample_augmentation(rng, img.size())))
            .collect::<Result<Vec<_>>>()?;
        let styles: Vec<StyleCode> = (0..m).map(|_| StyleCode::sample(rng)).collect();
        let outs = translate_chunked(translator, &views, &styles)?;
        let feats = extractor.extract(&outs)?;
        per_image.push(frechet_distance(&feats, real)?);
    }
    Ok(DfidResult {
        value: per_image.iter().sum::<f64>() / n as f64,
        per_image,
    })
}

/// Mean distance over all `k (k - 1) / 2` pairs of outputs generated for
/// one image with independent styles, averaged over the first `n` images.
pub fn pairwise_diversity<R: Rng + ?Sized>(
    translator: &dyn Translator,
    test_images: &[ImageTensor],
    k: usize,
    n: usize,
    distance: &dyn PerceptualDistance,
    rng: &mut R,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid(format!("pairwise diversity needs k >= 2, got {k}")));
    }
    if test_images.is_empty() || n == 0 {
        return Err(Error::invalid("pairwise diversity needs at least one test image"));
    }
    let n = n.min(test_images.len());
    let (ia, ib): (Vec<i64>, Vec<i64>) = (0..k as i64)
        .flat_map(|i| (i + 1..k as i64).map(move |j| (i, j)))
        .unzip();
    let (ia, ib) = (Tensor::from_slice(&ia), Tensor::from_slice(&ib));
    let mut total = 0.0;
    for img in &test_images[..n] {
        let styles: Vec<StyleCode> = (0..k).map(|_| StyleCode::sample(rng)).collect();
        let outs = translate_chunked(translator, &vec![img.clone(); k], &styles)?;
        let t = stack_images(&outs, Kind::Double)?;
        let d = tch::no_grad(|| distance.distance(&t.index_select(0, &ia), &t.index_select(0, &ib)))?;
        total += d.mean(Kind::Double).double_value(&[]);
    }
    Ok(total / n as f64)
}
