//! Closed-form latent directions on the style modulation weights, style
//! edits, and frame-by-frame video translation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use tch::Kind;

use gnr_formats::config::STYLE_DIM;
use gnr_formats::{Interpolation, TimelineFile};

use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::nets::{Generator, StyleCode};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDirection {
    pub vector: [f64; STYLE_DIM],
    pub eigenvalue: f64,
    /// Names of the modulation layers whose weights were factorised.
    pub layer_scope: Vec<String>,
}

/// Top-`k` eigenvectors of `AᵀA` (descending eigenvalue) for a matrix `A`
/// with `STYLE_DIM` columns.
pub fn factorize(a: &DMatrix<f64>, top_k: usize) -> Result<Vec<([f64; STYLE_DIM], f64)>> {
    if top_k == 0 || top_k > STYLE_DIM {
        return Err(Error::invalid(format!("top_k must be in 1..={STYLE_DIM}, got {top_k}")));
    }
    if a.ncols() != STYLE_DIM {
        return Err(Error::Shape(format!("expected {STYLE_DIM} columns, got {}", a.ncols())));
    }
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..STYLE_DIM).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    Ok(order
        .into_iter()
        .take(top_k)
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let norm = col.norm();
            let mut v = [0.0; STYLE_DIM];
            for (k, x) in v.iter_mut().enumerate() {
                *x = col[k] / norm;
            }
            (v, eig.eigenvalues[i].max(0.0))
        })
        .collect())
}

/// Modulation affine weights of every decoder layer stacked row-wise,
/// `[sum of input channels, 8]`.
pub fn modulation_matrix(gen: &Generator) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    let mut names = Vec::new();
    for (i, layer) in gen.decoder.modulated_layers().iter().enumerate() {
        let w = layer.modulation.effective_weight().detach().to_kind(Kind::Double);
        let dims = w.size();
        if dims[1] != STYLE_DIM as i64 {
            return Err(Error::Shape(format!("modulation weight {dims:?}")));
        }
        let flat: Vec<f64> = Vec::try_from(w.contiguous().view([-1]))?;
        rows.extend(flat);
        n += dims[0] as usize;
        names.push(format!("decoder.layer{i}"));
    }
    Ok((DMatrix::from_row_slice(n, STYLE_DIM, &rows), names))
}

pub fn sefa_directions(gen: &Generator, top_k: usize) -> Result<Vec<LatentDirection>> {
    let (a, scope) = modulation_matrix(gen)?;
    Ok(factorize(&a, top_k)?
        .into_iter()
        .map(|(vector, eigenvalue)| LatentDirection {
            vector,
            eigenvalue,
            layer_scope: scope.clone(),
        })
        .collect())
}

/// `s + magnitude * direction`.
pub fn edit_style(s: &StyleCode, direction: &LatentDirection, magnitude: f64) -> StyleCode {
    let mut out = s.0;
    for (o, d) in out.iter_mut().zip(direction.vector) {
        *o += magnitude * d;
    }
    StyleCode(out)
}

/// Style as a function of frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleTimeline {
    pub keyframes: Vec<(u64, StyleCode)>,
    pub interpolation: Interpolation,
}

impl StyleTimeline {
    pub fn new(keyframes: Vec<(u64, StyleCode)>, interpolation: Interpolation) -> Result<Self> {
        if keyframes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid("keyframe indices must be strictly increasing"));
        }
        Ok(Self {
            keyframes,
            interpolation,
        })
    }

    pub fn constant(style: StyleCode) -> Self {
        Self {
            keyframes: vec![(0, style)],
            interpolation: Interpolation::Hold,
        }
    }

    pub fn from_file(file: &TimelineFile) -> Result<Self> {
        let keyframes = file
            .keyframes
            .iter()
            .map(|(i, v)| Ok((*i, StyleCode::from_slice(&v.map(f64::from))?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(keyframes, file.interpolation)
    }

    pub fn to_file(&self) -> TimelineFile {
        TimelineFile {
            interpolation: self.interpolation,
            keyframes: self.keyframes.iter().map(|(i, s)| (*i, s.0.map(|x| x as f32))).collect(),
        }
    }

    /// Style for `frame`, or `None` for an empty timeline. Frames before the
    /// first keyframe take its style; frames after the last hold the last.
    pub fn style_at(&self, frame: u64) -> Option<StyleCode> {
        let first = self.keyframes.first()?;
        if frame <= first.0 {
            return Some(first.1);
        }
        let next = self.keyframes.iter().position(|(i, _)| *i > frame);
        let Some(next) = next else {
            return self.keyframes.last().map(|k| k.1);
        };
        let (i0, s0) = self.keyframes[next - 1];
        if self.interpolation == Interpolation::Hold || i0 == frame {
            return Some(s0);
        }
        let (i1, s1) = self.keyframes[next];
        let t = (frame - i0) as f64 / (i1 - i0) as f64;
        let mut out = [0f64; STYLE_DIM];
        for k in 0..STYLE_DIM {
            out[k] = (1.0 - t) * s0.0[k] + t * s1.0[k];
        }
        Some(StyleCode(out))
    }
}

/// Translates each frame independently with the timeline's style for that
/// frame. An empty timeline uses one style drawn from `rng` for every frame.
pub fn translate_video<R: Rng + ?Sized>(
    gen: &Generator,
    frames: &[ImageTensor],
    timeline: &StyleTimeline,
    rng: &mut R,
) -> Result<Vec<ImageTensor>> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to translate"));
    }
    let fallback = timeline
        .keyframes
        .is_empty()
        .then(|| StyleCode::sample(rng));
    frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let style = timeline
                .style_at(i as u64)
                .or(fallback)
                .expect("fallback style for empty timeline");
            Ok(gen.translate(std::slice::from_ref(frame), &[style])?.remove(0))
        })
        .collect()
}

/// Mean absolute pixel difference between consecutive frames.
pub fn mean_frame_difference(frames: &[ImageTensor]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::invalid("need at least two frames"));
    }
    let total: f64 = frames
        .windows(2)
        .map(|w| w[0].mean_abs_diff(&w[1]) as f64)
        .sum();
    Ok(total / (frames.len() - 1) as f64)
}
