use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tch::{Kind, Tensor};

use super::FeatureSet;
use crate::data::{stack_images, ImageTensor, CHANNELS};
use crate::error::{Error, Result};

pub const DEFAULT_EXTRACTOR: &str = "random-conv-64";
const EXTRACT_CHUNK: usize = 64;

/// Maps images to fixed-length feature vectors.
pub trait FeatureExtractor {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, images: &[ImageTensor]) -> Result<FeatureSet>;
}

/// Training-free stand-in for a pretrained backbone: a fixed-seed random
/// convolutional network with global average pooling. Deterministic and
/// resolution-agnostic.
#[derive(Debug)]
pub struct RandomConvExtractor {
    id: String,
    layers: Vec<(Tensor, Tensor)>,
    dim: usize,
}

impl RandomConvExtractor {
    pub fn new(id: &str, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [CHANNELS, 16, 32, dim];
        let layers = widths
            .windows(2)
            .map(|w| {
                let (c_in, c_out) = (w[0] as i64, w[1] as i64);
                let n = (c_out * c_in * 9) as usize;
                let std = (2.0 / (c_in * 9) as f64).sqrt();
                let weight: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect();
                let bias: Vec<f64> = (0..c_out).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
                (
                    Tensor::from_slice(&weight).view([c_out, c_in, 3, 3]),
                    Tensor::from_slice(&bias),
                )
            })
            .collect();
        Self {
            id: id.to_string(),
            layers,
            dim,
        }
    }

    pub fn desk_default() -> Self {
        Self::new(DEFAULT_EXTRACTOR, 64, 0x6e72_6f73)
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for (w, b) in &self.layers {
            h = h.conv2d(w, Some(b), [2, 2], [1, 1], [1, 1], 1).relu();
        }
        h.mean_dim([2i64, 3].as_slice(), false, Kind::Double)
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<FeatureSet> {
        if images.is_empty() {
            return Err(Error::invalid("no images to extract features from"));
        }
        let mut data = Vec::with_capacity(images.len() * self.dim);
        tch::no_grad(|| -> Result<()> {
            for chunk in images.chunks(EXTRACT_CHUNK) {
                let x = stack_images(chunk, Kind::Double)?;
                let f: Vec<f64> = Vec::try_from(self.forward(&x).contiguous().view([-1]))?;
                data.extend(f);
            }
            Ok(())
        })?;
        FeatureSet::new(images.len(), self.dim, self.id.clone(), data)
    }
}

/// Looks up a registered extractor by id.
pub fn extractor_by_id(id: &str) -> Result<Box<dyn FeatureExtractor>> {
    match id {
        DEFAULT_EXTRACTOR => Ok(Box::new(RandomConvExtractor::desk_default())),
        other => Err(Error::invalid(format!(
            "unknown feature extractor {other:?} (available: {DEFAULT_EXTRACTOR})"
        ))),
    }
}
