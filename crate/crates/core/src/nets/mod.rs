//! Encoder, style-modulated decoder and the diversity discriminator.
//!
//! One [`Generator`] (encoder + decoder) and one [`Discriminator`] exist per
//! translation direction; nothing is shared between directions.

pub mod layers;

use rand::Rng;
use tch::{Kind, Tensor};

use gnr_formats::config::{TrainConfig, STYLE_DIM};

pub use layers::{lrelu, EqualConv2d, EqualLinear, ModulatedConv2d, ParamStore};

use crate::data::{stack_images, unstack_images, ImageTensor, CHANNELS};
use crate::error::{Error, Result};

pub const STDDEV_EPS: f64 = 1e-8;

/// Architecture hyper-parameters shared by all four networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub resolution: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    /// Number of 2x downsamplings between the image and the content grid.
    pub depth: usize,
}

impl NetConfig {
    pub fn desk(resolution: usize) -> Self {
        Self {
            resolution,
            base_channels: 8,
            max_channels: 256,
            depth: 2,
        }
    }

    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            resolution: cfg.resolution,
            base_channels: cfg.base_channels,
            max_channels: cfg.max_channels,
            depth: cfg.downsample_depth,
        }
    }

    pub fn channels(&self, level: usize) -> i64 {
        (self.base_channels << level).min(self.max_channels) as i64
    }

    pub fn content_channels(&self) -> i64 {
        self.channels(self.depth)
    }

    pub fn content_size(&self) -> i64 {
        (self.resolution >> self.depth) as i64
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.depth == 0 {
            return Err(Error::invalid("base_channels and depth must be positive"));
        }
        if self.resolution >> (self.depth + 1) < 2 || self.resolution % (1 << (self.depth + 1)) != 0 {
            return Err(Error::invalid(format!(
                "resolution {} incompatible with depth {}",
                self.resolution, self.depth
            )));
        }
        Ok(())
    }
}

/// Spatial content grid for one image, `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCode {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl ContentCode {
    pub fn to_tensor(&self, kind: Kind) -> Tensor {
        Tensor::from_slice(&self.values)
            .view([1, self.channels as i64, self.height as i64, self.width as i64])
            .to_kind(kind)
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        let dims = t.size();
        let values: Vec<f32> = Vec::try_from(t.detach().to_kind(Kind::Float).contiguous().view([-1]))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("content code".into()));
        }
        Ok(Self {
            channels: dims[0] as usize,
            height: dims[1] as usize,
            width: dims[2] as usize,
            values,
        })
    }
}

/// An 8-dimensional style code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleCode(pub [f64; STYLE_DIM]);

impl StyleCode {
    pub fn zeros() -> Self {
        Self([0.0; STYLE_DIM])
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; STYLE_DIM] = v
            .try_into()
            .map_err(|_| Error::Shape(format!("style code needs {STYLE_DIM} values, got {}", v.len())))?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("style code".into()));
        }
        Ok(Self(arr))
    }

    /// A draw from N(0, I).
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut v = [0f64; STYLE_DIM];
        for x in v.iter_mut() {
            *x = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn styles_to_tensor(styles: &[StyleCode], kind: Kind) -> Tensor {
    let flat: Vec<f64> = styles.iter().flat_map(|s| s.0).collect();
    Tensor::from_slice(&flat)
        .view([styles.len() as i64, STYLE_DIM as i64])
        .to_kind(kind)
}

pub fn styles_from_tensor(t: &Tensor) -> Result<Vec<StyleCode>> {
    let dims = t.size();
    if dims.len() != 2 || dims[1] != STYLE_DIM as i64 {
        return Err(Error::Shape(format!("expected [n, {STYLE_DIM}] styles, got {dims:?}")));
    }
    let flat: Vec<f64> = Vec::try_from(t.detach().to_kind(Kind::Double).contiguous().view([-1]))?;
    flat.chunks_exact(STYLE_DIM).map(StyleCode::from_slice).collect()
}

fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.isfinite().all().int64_value(&[]) == 0 {
        return Err(Error::NonFinite(format!("{what} activations (training diverged?)")));
    }
    Ok(())
}

/// Side of the pooled grid feeding the style head; keeping coarse layout
/// lets the style respond to crops and flips before training.
const STYLE_GRID: i64 = 4;

/// Convolutional trunk with a spatial content head and a pooled style head.
#[derive(Debug)]
pub struct Encoder {
    from_rgb: EqualConv2d,
    down: Vec<EqualConv2d>,
    content_head: EqualConv2d,
    style_conv: EqualConv2d,
    style_fc: EqualLinear,
    style_out: EqualLinear,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &NetConfig, rng: &mut R) -> Self {
        let from_rgb = EqualConv2d::new(store, "enc.from_rgb", CHANNELS as i64, cfg.channels(0), 1, 1, true, rng);
        let down = (0..cfg.depth)
            .map(|l| {
                EqualConv2d::new(store, &format!("enc.down{l}"), cfg.channels(l), cfg.channels(l + 1), 3, 1, true, rng)
            })
            .collect();
        let c = cfg.content_channels();
        let content_head = EqualConv2d::new(store, "enc.content", c, c, 3, 1, true, rng);
        let style_conv = EqualConv2d::new(store, "enc.style_conv", c, c, 3, 1, true, rng);
        let style_fc = EqualLinear::new(store, "enc.style_fc", c * STYLE_GRID * STYLE_GRID, c, 0.0, rng);
        let style_out = EqualLinear::new(store, "enc.style_out", c, STYLE_DIM as i64, 0.0, rng);
        Self {
            from_rgb,
            down,
            content_head,
            style_conv,
            style_fc,
            style_out,
        }
    }

    /// `[b, 3, s, s]` -> (content `[b, c, s/2^d, s/2^d]`, style `[b, 8]`).
    pub fn forward(&self, x: &Tensor) -> (Tensor, Tensor) {
        let mut h = lrelu(&self.from_rgb.forward(x));
        for conv in &self.down {
            h = lrelu(&conv.forward(&h)).avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None);
        }
        let content = self.content_head.forward(&h);
        // Average pooling scaled by the root of the cell count keeps the
        // variance of uncorrelated features, so styles start on the prior's scale.
        let cells = (h.size()[2] as f64 / STYLE_GRID as f64).max(1.0);
        let s = lrelu(&self.style_conv.forward(&h)).adaptive_avg_pool2d([STYLE_GRID, STYLE_GRID]) * cells;
        let pooled = s.flatten(1, -1);
        let style = self.style_out.forward(&lrelu(&self.style_fc.forward(&pooled)));
        (content, style)
    }
}

/// Style-modulated convolutional decoder: content grid + style -> image.
#[derive(Debug)]
pub struct Decoder {
    base: ModulatedConv2d,
    up: Vec<ModulatedConv2d>,
    to_rgb: ModulatedConv2d,
    content_channels: i64,
    content_size: i64,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &NetConfig, rng: &mut R) -> Self {
        let sd = STYLE_DIM as i64;
        let c = cfg.content_channels();
        let base = ModulatedConv2d::new(store, "dec.base", c, c, 3, sd, true, rng);
        let up = (0..cfg.depth)
            .rev()
            .map(|l| {
                ModulatedConv2d::new(store, &format!("dec.up{l}"), cfg.channels(l + 1), cfg.channels(l), 3, sd, true, rng)
            })
            .collect();
        let to_rgb = ModulatedConv2d::new(store, "dec.to_rgb", cfg.channels(0), CHANNELS as i64, 1, sd, false, rng);
        Self {
            base,
            up,
            to_rgb,
            content_channels: c,
            content_size: cfg.content_size(),
        }
    }

    pub fn forward(&self, content: &Tensor, style: &Tensor) -> Result<Tensor> {
        let dims = content.size();
        if dims.len() != 4 || dims[1] != self.content_channels || dims[2] != self.content_size || dims[3] != self.content_size {
            return Err(Error::Shape(format!(
                "content code {dims:?} does not match decoder [b, {}, {}, {}]",
                self.content_channels, self.content_size, self.content_size
            )));
        }
        let mut h = lrelu(&self.base.forward(content, style)?);
        for layer in &self.up {
            let size = h.size();
            h = h.upsample_nearest2d([size[2] * 2, size[3] * 2], None, None);
            h = lrelu(&layer.forward(&h, style)?);
        }
        Ok(self.to_rgb.forward(&h, style)?.tanh())
    }

    /// Every modulated layer, input-side first.
    pub fn modulated_layers(&self) -> Vec<&ModulatedConv2d> {
        std::iter::once(&self.base)
            .chain(self.up.iter())
            .chain(std::iter::once(&self.to_rgb))
            .collect()
    }
}

/// Encoder + decoder for one translation direction.
#[derive(Debug)]
pub struct Generator {
    pub params: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub config: NetConfig,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, kind: Kind, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new(kind);
        let encoder = Encoder::new(&mut params, cfg, rng);
        let decoder = Decoder::new(&mut params, cfg, rng);
        Ok(Self {
            params,
            encoder,
            decoder,
            config: *cfg,
        })
    }

    pub fn kind(&self) -> Kind {
        self.params.kind()
    }

    fn check_images(&self, x: &Tensor) -> Result<()> {
        let dims = x.size();
        let s = self.config.resolution as i64;
        if dims.len() != 4 || dims[1] != CHANNELS as i64 || dims[2] != s || dims[3] != s {
            return Err(Error::Shape(format!("expected [b, 3, {s}, {s}] images, got {dims:?}")));
        }
        Ok(())
    }

    /// Batched, differentiable encode.
    pub fn encode_tensor(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_images(x)?;
        Ok(self.encoder.forward(x))
    }

    /// Batched, differentiable decode.
    pub fn decode_tensor(&self, content: &Tensor, style: &Tensor) -> Result<Tensor> {
        self.decoder.forward(content, style)
    }

    pub fn translate_tensor(&self, x: &Tensor, style: &Tensor) -> Result<Tensor> {
        let (c, _) = self.encode_tensor(x)?;
        self.decode_tensor(&c, style)
    }

    pub fn encode(&self, img: &ImageTensor) -> Result<(ContentCode, StyleCode)> {
        tch::no_grad(|| {
            let x = stack_images(std::slice::from_ref(img), self.kind())?;
            let (c, s) = self.encode_tensor(&x)?;
            ensure_finite(&c, "content")?;
            ensure_finite(&s, "style")?;
            let style = styles_from_tensor(&s)?.remove(0);
            Ok((ContentCode::from_tensor(&c.get(0))?, style))
        })
    }

    pub fn decode(&self, content: &ContentCode, style: &StyleCode) -> Result<ImageTensor> {
        tch::no_grad(|| {
            let c = content.to_tensor(self.kind());
            let s = styles_to_tensor(std::slice::from_ref(style), self.kind());
            let out = self.decode_tensor(&c, &s)?;
            ensure_finite(&out, "decoder")?;
            Ok(unstack_images(&out)?.remove(0))
        })
    }

    /// Translates each image with its paired style (no gradient tracking).
    pub fn translate(&self, images: &[ImageTensor], styles: &[StyleCode]) -> Result<Vec<ImageTensor>> {
        if images.len() != styles.len() {
            return Err(Error::Shape(format!(
                "{} images but {} styles",
                images.len(),
                styles.len()
            )));
        }
        if images.is_empty() {
            return Ok(Vec::new());
        }
        tch::no_grad(|| {
            let x = stack_images(images, self.kind())?;
            let s = styles_to_tensor(styles, self.kind());
            let out = self.translate_tensor(&x, &s)?;
            ensure_finite(&out, "decoder")?;
            unstack_images(&out)
        })
    }

    pub fn encode_styles(&self, images: &[ImageTensor]) -> Result<Vec<StyleCode>> {
        tch::no_grad(|| {
            let x = stack_images(images, self.kind())?;
            let (_, s) = self.encode_tensor(&x)?;
            ensure_finite(&s, "style")?;
            styles_from_tensor(&s)
        })
    }
}

/// Per-feature population standard deviation across the batch (rows),
/// `sqrt(mean_i (f_ij - mean_i f_ij)^2 + eps)`.
pub fn minibatch_stddev_features(feats: &Tensor) -> Result<Tensor> {
    let dims = feats.size();
    if dims.len() != 2 {
        return Err(Error::Shape(format!("expected [batch, features], got {dims:?}")));
    }
    if dims[0] < 2 {
        return Err(Error::invalid(format!(
            "batch statistics need at least 2 samples, got {}",
            dims[0]
        )));
    }
    // Reducing over each column in sorted order makes the result exactly
    // independent of batch order, not just up to summation rounding.
    let (sorted, _) = feats.sort(0, false);
    let centred = &sorted - sorted.mean_dim(0, true, feats.kind());
    Ok((centred.square().mean_dim(0, false, feats.kind()) + STDDEV_EPS).sqrt())
}

/// Logits of the diversity discriminator for one batch.
#[derive(Debug)]
pub struct DiscOutput {
    /// One logit per batch element, `[b]`.
    pub sample_logits: Tensor,
    /// Logit of the batch-statistic head, scalar; absent when the
    /// discriminator was built without that branch.
    pub batch_logit: Option<Tensor>,
}

/// Anything that maps a batch of images to per-sample logits; the R1 penalty
/// is defined against this.
pub trait SampleCritic {
    fn sample_logits(&self, x: &Tensor) -> Result<Tensor>;
}

#[derive(Debug)]
pub struct Discriminator {
    pub params: ParamStore,
    from_rgb: EqualConv2d,
    down: Vec<EqualConv2d>,
    final_conv: EqualConv2d,
    fc: EqualLinear,
    sample_head: EqualLinear,
    batch_head: Option<EqualLinear>,
    pub config: NetConfig,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, stddev_branch: bool, kind: Kind, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(kind);
        let s = &mut store;
        let from_rgb = EqualConv2d::new(s, "disc.from_rgb", CHANNELS as i64, cfg.channels(0), 1, 1, true, rng);
        let levels = cfg.depth + 1;
        let down = (0..levels)
            .map(|l| EqualConv2d::new(s, &format!("disc.down{l}"), cfg.channels(l), cfg.channels(l + 1), 3, 1, true, rng))
            .collect();
        let c = cfg.channels(levels);
        let final_conv = EqualConv2d::new(s, "disc.final_conv", c, c, 3, 1, true, rng);
        let spatial = (cfg.resolution >> levels) as i64;
        let fc = EqualLinear::new(s, "disc.fc", c * spatial * spatial, c, 0.0, rng);
        let sample_head = EqualLinear::new(s, "disc.sample_head", c, 1, 0.0, rng);
        let batch_head = stddev_branch.then(|| EqualLinear::new(s, "disc.batch_head", c, 1, 0.0, rng));
        Ok(Self {
            params: store,
            from_rgb,
            down,
            final_conv,
            fc,
            sample_head,
            batch_head,
            config: *cfg,
        })
    }

    pub fn kind(&self) -> Kind {
        self.params.kind()
    }

    /// Penultimate per-sample features, `[b, c]`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.size();
        let s = self.config.resolution as i64;
        if dims.len() != 4 || dims[1] != CHANNELS as i64 || dims[2] != s || dims[3] != s {
            return Err(Error::Shape(format!("expected [b, 3, {s}, {s}] images, got {dims:?}")));
        }
        let mut h = lrelu(&self.from_rgb.forward(x));
        for conv in &self.down {
            h = lrelu(&conv.forward(&h)).avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None);
        }
        let h = lrelu(&self.final_conv.forward(&h));
        Ok(lrelu(&self.fc.forward(&h.flatten(1, -1))))
    }

    pub fn forward(&self, x: &Tensor) -> Result<DiscOutput> {
        let feats = self.features(x)?;
        let batch_logit = match &self.batch_head {
            Some(head) => Some(head.forward(&minibatch_stddev_features(&feats)?.unsqueeze(0)).view([])),
            None => None,
        };
        Ok(DiscOutput {
            sample_logits: self.sample_head.forward(&feats).squeeze_dim(1),
            batch_logit,
        })
    }

    pub fn discriminate(&self, batch: &[ImageTensor]) -> Result<DiscOutput> {
        if batch.len() < 2 {
            return Err(Error::invalid(format!(
                "discriminator needs a batch of at least 2, got {}",
                batch.len()
            )));
        }
        let x = stack_images(batch, self.kind())?;
        let out = self.forward(&x)?;
        ensure_finite(&out.sample_logits, "discriminator")?;
        if let Some(b) = &out.batch_logit {
            ensure_finite(b, "discriminator")?;
        }
        Ok(out)
    }

    pub fn has_stddev_branch(&self) -> bool {
        self.batch_head.is_some()
    }

    pub fn sample_head(&self) -> &EqualLinear {
        &self.sample_head
    }
}

impl SampleCritic for Discriminator {
    fn sample_logits(&self, x: &Tensor) -> Result<Tensor> {
        let feats = self.features(x)?;
        Ok(self.sample_head.forward(&feats).squeeze_dim(1))
    }
}
