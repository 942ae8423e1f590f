//! Procedural two-domain "shapes" dataset.
//!
//! Domain X: outlined polygons with thin strokes on light backgrounds.
//! Domain Y: filled smooth blobs painted from a per-image palette.
//!
//! Both domains place their shapes with the same layout distribution, so the
//! position and extent of a shape is shared structure while line weight,
//! outline/fill rendering and colours are domain- and image-specific.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Domain, ImageTensor, Split};
use crate::error::{Error, Result};

const SUPERSAMPLE: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Layout {
    cx: f32,
    cy: f32,
    radius: f32,
    angle: f32,
}

fn sample_layout<R: Rng>(rng: &mut R, size: f32) -> Layout {
    Layout {
        cx: rng.random_range(0.3..0.7) * size,
        cy: rng.random_range(0.3..0.7) * size,
        radius: rng.random_range(0.16..0.3) * size,
        angle: rng.random_range(0.0..std::f32::consts::TAU),
    }
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn seg_dist(px: f32, py: f32, a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
    (qx * qx + qy * qy).sqrt()
}

enum Shape {
    Stroke {
        a: (f32, f32),
        b: (f32, f32),
        half_width: f32,
        color: [f32; 3],
    },
    Blob {
        cx: f32,
        cy: f32,
        radius: f32,
        harmonics: Vec<(f32, f32, f32)>,
        color: [f32; 3],
    },
    Disc {
        cx: f32,
        cy: f32,
        radius: f32,
        color: [f32; 3],
    },
}

impl Shape {
    fn covers(&self, x: f32, y: f32) -> Option<[f32; 3]> {
        match *self {
            Shape::Stroke {
                a,
                b,
                half_width,
                color,
            } => (seg_dist(x, y, a, b) <= half_width).then_some(color),
            Shape::Blob {
                cx,
                cy,
                radius,
                ref harmonics,
                color,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let theta = dy.atan2(dx);
                let r = radius
                    * (1.0
                        + harmonics
                            .iter()
                            .map(|&(k, amp, phase)| amp * (k * theta + phase).cos())
                            .sum::<f32>());
                (dx * dx + dy * dy <= r * r).then_some(color)
            }
            Shape::Disc {
                cx,
                cy,
                radius,
                color,
            } => ((x - cx).powi(2) + (y - cy).powi(2) <= radius * radius).then_some(color),
        }
    }
}

struct Scene {
    background: [[f32; 3]; 2],
    shapes: Vec<Shape>,
}

impl Scene {
    fn render(&self, size: usize) -> RgbImage {
        let step = 1.0 / SUPERSAMPLE as f32;
        RgbImage::from_fn(size as u32, size as u32, |px, py| {
            let mut acc = [0f32; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f32 + (sx as f32 + 0.5) * step;
                    let y = py as f32 + (sy as f32 + 0.5) * step;
                    let t = y / size as f32;
                    let mut c = [0f32; 3];
                    for (ch, v) in c.iter_mut().enumerate() {
                        *v = self.background[0][ch] * (1.0 - t) + self.background[1][ch] * t;
                    }
                    for shape in &self.shapes {
                        if let Some(col) = shape.covers(x, y) {
                            c = col;
                        }
                    }
                    for ch in 0..3 {
                        acc[ch] += c[ch];
                    }
                }
            }
            let n = (SUPERSAMPLE * SUPERSAMPLE) as f32;
            Rgb(acc.map(|v| (v / n * 255.0).round().clamp(0.0, 255.0) as u8))
        })
    }
}

fn outlined_polygons<R: Rng>(rng: &mut R, size: usize) -> Scene {
    let s = size as f32;
    let scale = s / 64.0;
    let bg_hue = rng.random_range(0.0..1.0);
    let top = hsv(bg_hue, rng.random_range(0.05..0.25), rng.random_range(0.8..0.98));
    let bottom = hsv(bg_hue + 0.05, rng.random_range(0.05..0.25), rng.random_range(0.75..0.95));
    let ink = hsv(rng.random_range(0.0..1.0), rng.random_range(0.5..1.0), rng.random_range(0.05..0.45));
    let half_width = rng.random_range(0.5..1.6) * scale;
    let n_shapes = rng.random_range(1..=2);
    let mut shapes = Vec::new();
    for _ in 0..n_shapes {
        let l = sample_layout(rng, s);
        let k = rng.random_range(3..=7);
        let verts: Vec<(f32, f32)> = (0..k)
            .map(|i| {
                let a = l.angle + i as f32 * std::f32::consts::TAU / k as f32;
                let r = l.radius * rng.random_range(0.85..1.15);
                (l.cx + r * a.cos(), l.cy + r * a.sin())
            })
            .collect();
        for i in 0..k {
            shapes.push(Shape::Stroke {
                a: verts[i],
                b: verts[(i + 1) % k],
                half_width,
                color: ink,
            });
        }
        // thin whiskers from the centre towards two vertices
        for &v in verts.iter().take(2) {
            shapes.push(Shape::Stroke {
                a: (l.cx, l.cy),
                b: (l.cx + 0.5 * (v.0 - l.cx), l.cy + 0.5 * (v.1 - l.cy)),
                half_width: 0.45 * scale,
                color: ink,
            });
        }
        shapes.push(Shape::Disc {
            cx: l.cx,
            cy: l.cy,
            radius: 1.2 * scale,
            color: ink,
        });
    }
    Scene {
        background: [top, bottom],
        shapes,
    }
}

fn filled_blobs<R: Rng>(rng: &mut R, size: usize) -> Scene {
    let s = size as f32;
    let hue = rng.random_range(0.0..1.0);
    let top = hsv(hue, rng.random_range(0.3..0.7), rng.random_range(0.25..0.6));
    let bottom = hsv(hue + 0.08, rng.random_range(0.3..0.7), rng.random_range(0.2..0.5));
    let n_shapes = rng.random_range(1..=2);
    let mut shapes = Vec::new();
    for _ in 0..n_shapes {
        let l = sample_layout(rng, s);
        let harmonics = (2..=4)
            .map(|k| {
                (
                    k as f32,
                    rng.random_range(0.0..0.12),
                    rng.random_range(0.0..std::f32::consts::TAU),
                )
            })
            .collect();
        let fill = hsv(
            hue + rng.random_range(0.25..0.75),
            rng.random_range(0.5..1.0),
            rng.random_range(0.6..1.0),
        );
        shapes.push(Shape::Blob {
            cx: l.cx,
            cy: l.cy,
            radius: l.radius,
            harmonics,
            color: fill,
        });
        let spot = hsv(hue + rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), 1.0);
        shapes.push(Shape::Disc {
            cx: l.cx + 0.3 * l.radius * l.angle.cos(),
            cy: l.cy + 0.3 * l.radius * l.angle.sin(),
            radius: l.radius * rng.random_range(0.2..0.35),
            color: spot,
        });
    }
    Scene {
        background: [top, bottom],
        shapes,
    }
}

fn item_rng(seed: u64, domain: Domain, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match domain {
        Domain::X => 0u64,
        Domain::Y => 1u64,
    };
    rng.set_stream((tag << 32) | index as u64);
    rng
}

/// Renders item `index` of `domain`; a pure function of its arguments.
pub fn render(domain: Domain, seed: u64, index: usize, size: usize) -> RgbImage {
    let mut rng = item_rng(seed, domain, index);
    let scene = match domain {
        Domain::X => outlined_polygons(&mut rng, size),
        Domain::Y => filled_blobs(&mut rng, size),
    };
    scene.render(size)
}

pub fn render_tensor(domain: Domain, seed: u64, index: usize, size: usize) -> ImageTensor {
    ImageTensor::from_rgb8(&render(domain, seed, index, size)).expect("toy render is square")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub seed: u64,
    /// Total images for (domain X, domain Y).
    pub counts: (usize, usize),
    pub resolution: usize,
    /// Every `test_every`-th item goes to the test split.
    pub test_every: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            seed: 1,
            counts: (500, 500),
            resolution: 64,
            test_every: 10,
        }
    }
}

impl ToySpec {
    pub fn split_of(&self, index: usize) -> Split {
        if self.test_every > 0 && index % self.test_every == self.test_every - 1 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

/// Writes `<out>/<domainA|domainB>/<train|test>/NNNNN.png` and returns `out`.
pub fn write_dataset(out: &Path, spec: &ToySpec) -> Result<PathBuf> {
    if spec.resolution < 8 {
        return Err(Error::invalid("toy resolution must be at least 8"));
    }
    for (domain, count) in [(Domain::X, spec.counts.0), (Domain::Y, spec.counts.1)] {
        for split in [Split::Train, Split::Test] {
            let dir = super::DomainDataset::split_dir(out, domain, split);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for i in 0..count {
            let dir = super::DomainDataset::split_dir(out, domain, spec.split_of(i));
            let path = dir.join(format!("{i:05}.png"));
            render(domain, spec.seed, i, spec.resolution)
                .save(&path)
                .map_err(|source| Error::Image { path, source })?;
        }
    }
    Ok(out.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainDataset;

    #[test]
    fn rendering_is_deterministic_and_seed_dependent() {
        assert_eq!(render(Domain::X, 1, 3, 32), render(Domain::X, 1, 3, 32));
        assert_ne!(render(Domain::X, 1, 3, 32), render(Domain::X, 2, 3, 32));
        assert_ne!(render(Domain::X, 1, 3, 32), render(Domain::X, 1, 4, 32));
        assert_ne!(render(Domain::X, 1, 3, 32), render(Domain::Y, 1, 3, 32));
    }

    #[test]
    fn domains_differ_in_appearance() {
        // outlines leave most of the (light) canvas uncovered; blobs sit on dark palettes
        let mean = |d| {
            (0..20)
                .map(|i| {
                    let t = render_tensor(d, 5, i, 32);
                    t.data().iter().sum::<f32>() / t.data().len() as f32
                })
                .sum::<f32>()
                / 20.0
        };
        assert!(mean(Domain::X) > mean(Domain::Y) + 0.3);
    }

    #[test]
    fn write_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ToySpec {
            seed: 3,
            counts: (12, 7),
            resolution: 16,
            test_every: 4,
        };
        write_dataset(dir.path(), &spec).unwrap();
        let xs = DomainDataset::load(dir.path(), Domain::X, Split::Train, 16).unwrap();
        let xt = DomainDataset::load(dir.path(), Domain::X, Split::Test, 16).unwrap();
        let yt = DomainDataset::load(dir.path(), Domain::Y, Split::Test, 16).unwrap();
        assert_eq!((xs.len(), xt.len(), yt.len()), (9, 3, 1));
        assert_eq!(xt.images()[0], render_tensor(Domain::X, 3, 3, 16));
    }
}
