//! Training objectives. Tensor-valued functions are differentiable and are
//! what the trainer uses; the `f64`-returning wrappers evaluate on host data.

use rand::Rng;
use tch::{Kind, Tensor};

use gnr_formats::config::TrainConfig;

use crate::data::{AugmentedBatch, CHANNELS};
use crate::error::{Error, Result};
use crate::nets::{styles_to_tensor, DiscOutput, Generator, SampleCritic, StyleCode};

const RMS_FLOOR: f64 = 1e-24;

/// Scalar summary of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub scon: f64,
    pub cyc_l2: f64,
    pub cyc_perceptual: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub r1: f64,
    /// Only non-zero when the mode-seeking ablation is enabled; not part of `total`.
    pub mode_seeking: f64,
    pub total: f64,
}

impl LossReport {
    pub const FIELDS: [&'static str; 8] = [
        "scon",
        "cyc_l2",
        "cyc_perceptual",
        "adv_g",
        "adv_d",
        "r1",
        "mode_seeking",
        "total",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.scon,
            self.cyc_l2,
            self.cyc_perceptual,
            self.adv_g,
            self.adv_d,
            self.r1,
            self.mode_seeking,
            self.total,
        ]
    }

    pub fn cyc(&self) -> f64 {
        self.cyc_l2 + self.cyc_perceptual
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// First non-finite field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub scon: f64,
    pub cyc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adv: 1.0,
            scon: 10.0,
            cyc: 20.0,
        }
    }
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            adv: cfg.lambda_adv,
            scon: cfg.lambda_scon,
            cyc: cfg.lambda_cyc,
        }
    }
}

pub fn total_loss(report: &LossReport, w: &LossWeights) -> f64 {
    w.adv * report.adv_g + w.scon * report.scon + w.cyc * report.cyc()
}

fn check_styles(styles: &Tensor) -> Result<()> {
    let dims = styles.size();
    if dims.len() != 2 {
        return Err(Error::Shape(format!("expected [batch, dim] styles, got {dims:?}")));
    }
    if dims[0] < 2 {
        return Err(Error::invalid(format!("style variance needs at least 2 codes, got {}", dims[0])));
    }
    Ok(())
}

/// Population variance across the batch, averaged over style dimensions.
pub fn style_consistency(styles: &Tensor) -> Result<Tensor> {
    check_styles(styles)?;
    let centred = styles - styles.mean_dim(0, true, styles.kind());
    Ok(centred.square().mean(styles.kind()))
}

pub fn style_consistency_loss(styles: &[StyleCode]) -> Result<f64> {
    if styles.len() < 2 {
        return Err(Error::invalid(format!("style variance needs at least 2 codes, got {}", styles.len())));
    }
    let t = styles_to_tensor(styles, Kind::Double);
    Ok(style_consistency(&t)?.double_value(&[]))
}

/// Uniformly random permutation without fixed points (rejection sampling of
/// uniform shuffles; about e draws on average).
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid(format!("a derangement needs at least 2 elements, got {n}")));
    }
    loop {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// `out[i] = styles[perm[i]]` for a random derangement `perm`.
pub fn shuffle_styles<R: Rng + ?Sized>(styles: &[StyleCode], rng: &mut R) -> Result<Vec<StyleCode>> {
    let perm = derangement(styles.len(), rng)?;
    Ok(perm.iter().map(|&p| styles[p]).collect())
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    let (da, db) = (a.size(), b.size());
    if da != db || da.len() != 4 {
        return Err(Error::Shape(format!("image batches differ: {da:?} vs {db:?}")));
    }
    Ok(())
}

/// Per-image root-mean-square pixel distance, `[b]`. Exactly zero, with a
/// zero gradient, for identical images.
pub fn rms_distance(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_pair(a, b)?;
    let ms = (a - b).square().mean_dim([1i64, 2, 3].as_slice(), false, a.kind());
    let nonzero = ms.gt(0.0).to_kind(ms.kind());
    Ok(ms.clamp_min(RMS_FLOOR).sqrt() * nonzero)
}

/// A differentiable image distance, `[b, 3, h, w] x2 -> [b]`.
pub trait PerceptualDistance {
    fn distance(&self, a: &Tensor, b: &Tensor) -> Result<Tensor>;
}

/// Mean RMS distance over the coarser levels of a binomial Gaussian pyramid.
#[derive(Debug, Clone, Copy)]
pub struct PyramidDistance {
    pub levels: usize,
}

impl Default for PyramidDistance {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

/// 5-tap binomial blur with reflect padding followed by 2x decimation.
pub fn pyramid_down(x: &Tensor) -> Tensor {
    let taps = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut k2 = Vec::with_capacity(25);
    for a in taps {
        for b in taps {
            k2.push(a * b / 256.0);
        }
    }
    let c = CHANNELS as i64;
    let kernel = Tensor::from_slice(&k2)
        .to_kind(x.kind())
        .view([1, 1, 5, 5])
        .repeat([c, 1, 1, 1]);
    x.reflection_pad2d([2, 2, 2, 2])
        .conv2d(&kernel, None::<Tensor>, [2, 2], [0, 0], [1, 1], c)
}

impl PerceptualDistance for PyramidDistance {
    fn distance(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        check_pair(a, b)?;
        if self.levels == 0 {
            return Err(Error::invalid("pyramid needs at least one level"));
        }
        let (mut pa, mut pb) = (a.shallow_clone(), b.shallow_clone());
        let mut total: Option<Tensor> = None;
        let mut used = 0;
        for _ in 0..self.levels {
            if pa.size()[2] < 4 {
                break;
            }
            pa = pyramid_down(&pa);
            pb = pyramid_down(&pb);
            let d = rms_distance(&pa, &pb)?;
            total = Some(match total {
                Some(t) => t + d,
                None => d,
            });
            used += 1;
        }
        match total {
            Some(t) => Ok(t / used as f64),
            None => Err(Error::Shape(format!("image {:?} too small for a pyramid", a.size()))),
        }
    }
}

/// Batch means of the two cycle terms between reconstructions and originals.
pub fn cycle_terms(recon: &Tensor, target: &Tensor, perceptual: &dyn PerceptualDistance) -> Result<(Tensor, Tensor)> {
    let l2 = rms_distance(recon, target)?.mean(recon.kind());
    let p = perceptual.distance(recon, target)?.mean(recon.kind());
    Ok((l2, p))
}

/// Intermediate tensors of one forward translation and shuffled-style return trip.
#[derive(Debug)]
pub struct CyclePass {
    pub content: Tensor,
    pub styles: Tensor,
    pub fake: Tensor,
    pub recon: Tensor,
}

/// `fake_i = F_xy(c(x_i), z_i)`; `recon_i = F_yx(c'(fake_i), s(x_perm[i]))`.
pub fn cycle_pass(gen_xy: &Generator, gen_yx: &Generator, x: &Tensor, z: &Tensor, perm: &[usize]) -> Result<CyclePass> {
    let b = x.size()[0];
    if perm.len() as i64 != b || z.size().first() != Some(&b) {
        return Err(Error::Shape(format!(
            "batch {b} with {} styles and permutation of {}",
            z.size().first().copied().unwrap_or(0),
            perm.len()
        )));
    }
    let (content, styles) = gen_xy.encode_tensor(x)?;
    let fake = gen_xy.decode_tensor(&content, z)?;
    let (content_back, _) = gen_yx.encode_tensor(&fake)?;
    let idx = Tensor::from_slice(&perm.iter().map(|&p| p as i64).collect::<Vec<_>>());
    let shuffled = styles.index_select(0, &idx);
    let recon = gen_yx.decode_tensor(&content_back, &shuffled)?;
    Ok(CyclePass {
        content,
        styles,
        fake,
        recon,
    })
}

/// Host-level cycle loss: `(mean RMS, mean perceptual)` distance between the
/// batch and its shuffled-style reconstruction.
pub fn cycle_loss<R: Rng + ?Sized>(
    gen_xy: &Generator,
    gen_yx: &Generator,
    batch: &AugmentedBatch,
    z_styles: &[StyleCode],
    rng: &mut R,
    perceptual: &dyn PerceptualDistance,
) -> Result<(f64, f64)> {
    if z_styles.len() != batch.len() {
        return Err(Error::Shape(format!("{} styles for a batch of {}", z_styles.len(), batch.len())));
    }
    let perm = derangement(batch.len(), rng)?;
    tch::no_grad(|| {
        let x = batch.to_tensor(gen_xy.kind())?;
        let z = styles_to_tensor(z_styles, gen_xy.kind());
        let pass = cycle_pass(gen_xy, gen_yx, &x, &z, &perm)?;
        let (l2, p) = cycle_terms(&pass.recon, &x, perceptual)?;
        Ok((l2.double_value(&[]), p.double_value(&[])))
    })
}

/// Non-saturating generator loss: `mean sp(-s) + sp(-b)`.
pub fn adv_g_loss(out: &DiscOutput) -> Tensor {
    let kind = out.sample_logits.kind();
    let mut loss = (-&out.sample_logits).softplus().mean(kind);
    if let Some(b) = &out.batch_logit {
        loss = loss + (-b).softplus();
    }
    loss
}

/// `mean sp(-real) + mean sp(fake)` on each branch present in both outputs.
pub fn adv_d_loss(real: &DiscOutput, fake: &DiscOutput) -> Result<Tensor> {
    if real.sample_logits.size() != fake.sample_logits.size() {
        return Err(Error::Shape(format!(
            "real batch {:?} and fake batch {:?} differ",
            real.sample_logits.size(),
            fake.sample_logits.size()
        )));
    }
    let kind = real.sample_logits.kind();
    let mut loss = (-&real.sample_logits).softplus().mean(kind) + fake.sample_logits.softplus().mean(kind);
    match (&real.batch_logit, &fake.batch_logit) {
        (Some(r), Some(f)) => loss = loss + (-r).softplus() + f.softplus(),
        (None, None) => {}
        _ => return Err(Error::invalid("real and fake outputs disagree on the batch branch")),
    }
    Ok(loss)
}

/// `(gamma / 2) * E ||grad_x D_sample(x)||^2` at the real batch, with a graph
/// suitable for backpropagating into the critic's parameters.
pub fn r1_penalty(critic: &dyn SampleCritic, real: &Tensor, gamma: f64) -> Result<Tensor> {
    let x = real.detach().set_requires_grad(true);
    let logits = critic.sample_logits(&x)?;
    r1_from_logits(&logits, &x, gamma)
}

/// R1 from per-sample logits already computed on `x` (which must require grad).
pub fn r1_from_logits(logits: &Tensor, x: &Tensor, gamma: f64) -> Result<Tensor> {
    let grads = Tensor::f_run_backward(&[logits.sum(logits.kind())], &[x], true, true)?;
    let g = grads
        .into_iter()
        .next()
        .filter(|g| g.defined())
        .ok_or_else(|| Error::invalid("critic output does not depend on its input"))?;
    let sq = g.square().sum_dim_intlist([1i64, 2, 3].as_slice(), false, g.kind());
    Ok(sq.mean(g.kind()) * (gamma / 2.0))
}

/// `-mean|a - b| / sum|z_a - z_b|`, per pair then averaged over the batch.
pub fn mode_seeking_tensor(img_a: &Tensor, img_b: &Tensor, z_a: &Tensor, z_b: &Tensor) -> Result<Tensor> {
    check_pair(img_a, img_b)?;
    let num = (img_a - img_b).abs().mean_dim([1i64, 2, 3].as_slice(), false, img_a.kind());
    let den = (z_a - z_b).abs().sum_dim_intlist(1, false, z_a.kind());
    if den.le(0.0).any().int64_value(&[]) != 0 {
        return Err(Error::invalid("mode-seeking penalty needs distinct style codes"));
    }
    Ok(-(num / den).mean(img_a.kind()))
}

pub fn mode_seeking_penalty(
    img_a: &crate::data::ImageTensor,
    img_b: &crate::data::ImageTensor,
    z_a: &StyleCode,
    z_b: &StyleCode,
) -> Result<f64> {
    if z_a == z_b {
        return Err(Error::invalid("mode-seeking penalty needs distinct style codes"));
    }
    let a = crate::data::stack_images(std::slice::from_ref(img_a), Kind::Double)?;
    let b = crate::data::stack_images(std::slice::from_ref(img_b), Kind::Double)?;
    let za = styles_to_tensor(std::slice::from_ref(z_a), Kind::Double);
    let zb = styles_to_tensor(std::slice::from_ref(z_b), Kind::Double);
    Ok(mode_seeking_tensor(&a, &b, &za, &zb)?.double_value(&[]))
}

#[cfg(test)]
mod tests;
