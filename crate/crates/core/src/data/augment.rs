use rand::Rng;

use super::{ImageTensor, CHANNELS};
use crate::error::{Error, Result};

pub const MAX_ROTATION_DEG: f64 = 20.0;
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const MAX_TRANSLATE_FRAC: f64 = 0.1;
pub const MAX_SHEAR: f64 = 0.15;

/// Parameters of one draw from the augmentation family.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub rotation_deg: f64,
    pub scale: f64,
    /// Translation as a fraction of the image side, (x, y).
    pub translate_frac: (f64, f64),
    /// Horizontal shear factor.
    pub shear: f64,
    /// Top-left corner (x, y) of the crop window in the upscaled image.
    pub crop_offset: (usize, usize),
    pub upscale_size: usize,
}

/// Upscaled side length: `round(resolution * 286 / 256)`.
pub fn upscale_size(resolution: usize) -> usize {
    (resolution * 286 + 128) / 256
}

impl AugmentParams {
    pub fn identity(resolution: usize) -> Self {
        let up = upscale_size(resolution);
        let off = (up - resolution) / 2;
        Self {
            hflip: false,
            rotation_deg: 0.0,
            scale: 1.0,
            translate_frac: (0.0, 0.0),
            shear: 0.0,
            crop_offset: (off, off),
            upscale_size: up,
        }
    }

    pub fn validate(&self, resolution: usize) -> Result<()> {
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [{lo}, {hi}]")))
            }
        };
        check("rotation_deg", self.rotation_deg, -MAX_ROTATION_DEG, MAX_ROTATION_DEG)?;
        check("scale", self.scale, SCALE_RANGE.0, SCALE_RANGE.1)?;
        check("translate_frac.x", self.translate_frac.0, -MAX_TRANSLATE_FRAC, MAX_TRANSLATE_FRAC)?;
        check("translate_frac.y", self.translate_frac.1, -MAX_TRANSLATE_FRAC, MAX_TRANSLATE_FRAC)?;
        check("shear", self.shear, -MAX_SHEAR, MAX_SHEAR)?;
        if self.upscale_size < resolution {
            return Err(Error::invalid(format!(
                "upscale_size {} smaller than resolution {resolution}",
                self.upscale_size
            )));
        }
        let room = self.upscale_size - resolution;
        if self.crop_offset.0 > room || self.crop_offset.1 > room {
            return Err(Error::invalid(format!(
                "crop offset {:?} leaves no full {resolution}px window in {}px",
                self.crop_offset, self.upscale_size
            )));
        }
        Ok(())
    }
}

/// Draws every parameter uniformly from its range.
pub fn sample_augmentation<R: Rng + ?Sized>(rng: &mut R, resolution: usize) -> AugmentParams {
    let up = upscale_size(resolution);
    let room = up - resolution;
    AugmentParams {
        hflip: rng.random_bool(0.5),
        rotation_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
        scale: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
        translate_frac: (
            rng.random_range(-MAX_TRANSLATE_FRAC..=MAX_TRANSLATE_FRAC),
            rng.random_range(-MAX_TRANSLATE_FRAC..=MAX_TRANSLATE_FRAC),
        ),
        shear: rng.random_range(-MAX_SHEAR..=MAX_SHEAR),
        crop_offset: (rng.random_range(0..=room), rng.random_range(0..=room)),
        upscale_size: up,
    }
}

/// Maps a continuous coordinate into `[0, n-1]` by mirroring about the
/// outermost pixel centres.
fn reflect(u: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let last = (n - 1) as f64;
    let period = 2.0 * last;
    let mut u = u.rem_euclid(period);
    if u > last {
        u = period - u;
    }
    u
}

fn sample_bilinear(plane: &[f32], n: usize, x: f64, y: f64) -> f32 {
    let x0 = (x.floor() as usize).min(n - 1);
    let y0 = (y.floor() as usize).min(n - 1);
    let x1 = (x0 + 1).min(n - 1);
    let y1 = (y0 + 1).min(n - 1);
    let wx = (x - x0 as f64) as f32;
    let wy = (y - y0 as f64) as f32;
    let at = |yy: usize, xx: usize| plane[yy * n + xx];
    let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * wx;
    let bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * wx;
    top + (bot - top) * wy
}

/// Resamples a channel-major square image to `out` pixels per side with
/// half-pixel-centre bilinear interpolation, edge samples clamped.
pub fn bilinear_resize(data: &[f32], size: usize, out: usize) -> Vec<f32> {
    if out == size {
        return data.to_vec();
    }
    let ratio = size as f64 / out as f64;
    let src = |d: usize| ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, (size - 1) as f64);
    let coords: Vec<f64> = (0..out).map(src).collect();
    let mut res = Vec::with_capacity(CHANNELS * out * out);
    for c in 0..CHANNELS {
        let plane = &data[c * size * size..(c + 1) * size * size];
        for &sy in &coords {
            for &sx in &coords {
                res.push(sample_bilinear(plane, size, sx, sy));
            }
        }
    }
    res
}

fn hflip(data: &[f32], n: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(n) {
        out.extend(row.iter().rev());
    }
    out
}

/// Rotation, scale, shear and translation about the image centre as a single
/// inverse-mapped warp.
fn affine_warp(data: &[f32], n: usize, p: &AugmentParams) -> Vec<f32> {
    let theta = p.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    // forward = rotation * shear * scale
    let a = [
        [cos * p.scale, (cos * p.shear - sin) * p.scale],
        [sin * p.scale, (sin * p.shear + cos) * p.scale],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let centre = (n as f64 - 1.0) / 2.0;
    let tx = p.translate_frac.0 * n as f64;
    let ty = p.translate_frac.1 * n as f64;

    let mut src = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let qx = x as f64 - centre - tx;
            let qy = y as f64 - centre - ty;
            let sx = inv[0][0] * qx + inv[0][1] * qy + centre;
            let sy = inv[1][0] * qx + inv[1][1] * qy + centre;
            src.push((reflect(sx, n), reflect(sy, n)));
        }
    }
    let mut out = Vec::with_capacity(data.len());
    for plane in data.chunks_exact(n * n) {
        out.extend(src.iter().map(|&(sx, sy)| sample_bilinear(plane, n, sx, sy)));
    }
    out
}

/// flip -> affine warp -> bilinear upscale -> crop back to the input size.
pub fn apply_augmentation(img: &ImageTensor, p: &AugmentParams) -> Result<ImageTensor> {
    let n = img.size();
    p.validate(n)?;
    let mut data = if p.hflip {
        hflip(img.data(), n)
    } else {
        img.data().to_vec()
    };
    data = affine_warp(&data, n, p);
    let up = p.upscale_size;
    let big = bilinear_resize(&data, n, up);
    let (ox, oy) = p.crop_offset;
    let mut out = Vec::with_capacity(CHANNELS * n * n);
    for c in 0..CHANNELS {
        for y in 0..n {
            let row = (c * up + oy + y) * up + ox;
            out.extend(big[row..row + n].iter().map(|v| v.clamp(-1.0, 1.0)));
        }
    }
    ImageTensor::new(n, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pattern(size: usize) -> ImageTensor {
        ImageTensor::from_fn(size, |c, y, x| {
            (((x * 7 + y * 13 + c * 5) % 17) as f32 / 8.0 - 1.0).clamp(-1.0, 1.0)
        })
        .unwrap()
    }

    /// Reference upscale-then-crop written directly from the definition.
    fn upscale_crop_reference(img: &ImageTensor, up: usize, off: (usize, usize)) -> Vec<f32> {
        let n = img.size();
        let scale = n as f64 / up as f64;
        let mut out = Vec::new();
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    let sx = (((x + off.0) as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
                    let sy = (((y + off.1) as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
                    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                    let v = img.get(c, y0, x0) as f64 * (1.0 - fx) * (1.0 - fy)
                        + img.get(c, y0, x1) as f64 * fx * (1.0 - fy)
                        + img.get(c, y1, x0) as f64 * (1.0 - fx) * fy
                        + img.get(c, y1, x1) as f64 * fx * fy;
                    out.push(v as f32);
                }
            }
        }
        out
    }

    #[test]
    fn upscale_size_matches_reported_crop() {
        assert_eq!(upscale_size(256), 286);
        assert_eq!(upscale_size(64), 72);
        assert_eq!(upscale_size(32), 36);
        assert_eq!(upscale_size(128), 143);
    }

    #[test]
    fn identity_params_equal_upscale_then_center_crop() {
        for size in [32, 64] {
            let img = pattern(size);
            let p = AugmentParams::identity(size);
            let out = apply_augmentation(&img, &p).unwrap();
            let reference = upscale_crop_reference(&img, p.upscale_size, p.crop_offset);
            let max_dev = out
                .data()
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_dev <= 1e-5, "size {size}: {max_dev}");
        }
    }

    #[test]
    fn warp_with_identity_params_is_exact() {
        let img = pattern(16);
        let warped = affine_warp(img.data(), 16, &AugmentParams::identity(16));
        assert_eq!(warped, img.data());
    }

    #[test]
    fn double_flip_is_involution() {
        let img = pattern(64);
        assert_eq!(hflip(&hflip(img.data(), 64), 64), img.data());
        let mut flip = AugmentParams::identity(64);
        flip.hflip = true;
        let id = AugmentParams::identity(64);
        let twice_flipped = apply_augmentation(&apply_augmentation(&img, &flip).unwrap(), &flip).unwrap();
        let twice_plain = apply_augmentation(&apply_augmentation(&img, &id).unwrap(), &id).unwrap();
        let max_dev = twice_flipped
            .data()
            .iter()
            .zip(twice_plain.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_dev <= 1e-5, "{max_dev}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(11), 64);
        let b = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(11), 64);
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_ranges_and_flip_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<_> = (0..10_000).map(|_| sample_augmentation(&mut rng, 64)).collect();
        let (lo, hi) = samples.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
            (lo.min(p.rotation_deg), hi.max(p.rotation_deg))
        });
        assert!(lo > -20.0 && hi < 20.0, "{lo} {hi}");
        // the range is actually explored, not a narrow band
        assert!(lo < -19.0 && hi > 19.0, "{lo} {hi}");
        let flips = samples.iter().filter(|p| p.hflip).count() as f64 / 1e4;
        assert!((0.45..=0.55).contains(&flips), "{flips}");
        for p in &samples {
            p.validate(64).unwrap();
            assert_eq!(p.upscale_size, 72);
        }
        let max_off = samples.iter().map(|p| p.crop_offset.0.max(p.crop_offset.1)).max();
        assert_eq!(max_off, Some(8));
    }

    #[test]
    fn rejects_out_of_range_params() {
        let img = pattern(32);
        let base = AugmentParams::identity(32);
        let cases = [
            AugmentParams { rotation_deg: 21.0, ..base.clone() },
            AugmentParams { scale: 1.2, ..base.clone() },
            AugmentParams { translate_frac: (0.0, -0.11), ..base.clone() },
            AugmentParams { shear: 0.2, ..base.clone() },
            AugmentParams { crop_offset: (5, 0), ..base.clone() },
            AugmentParams { upscale_size: 30, crop_offset: (0, 0), ..base.clone() },
            AugmentParams { scale: f64::NAN, ..base.clone() },
        ];
        for p in cases {
            assert!(apply_augmentation(&img, &p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn reflect_folds_into_range() {
        assert_eq!(reflect(-1.0, 5), 1.0);
        assert_eq!(reflect(5.0, 5), 3.0);
        assert_eq!(reflect(9.0, 5), 1.0);
        assert_eq!(reflect(2.5, 5), 2.5);
    }

    proptest! {
        #[test]
        fn constant_image_stays_constant(value in -1.0f32..=1.0, seed in any::<u64>()) {
            let img = ImageTensor::constant(32, value);
            let p = sample_augmentation(&mut ChaCha8Rng::seed_from_u64(seed), 32);
            let out = apply_augmentation(&img, &p).unwrap();
            for v in out.data() {
                prop_assert!((v - value).abs() <= 1e-6);
            }
        }

        #[test]
        fn output_stays_in_range(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = ImageTensor::from_fn(32, |_, _, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).unwrap();
            let p = sample_augmentation(&mut rng, 32);
            let out = apply_augmentation(&img, &p).unwrap();
            prop_assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
