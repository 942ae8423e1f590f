//! Parameter storage and the equalized-learning-rate building blocks.
//!
//! Weights are drawn from N(0, 1) on the host and rescaled by `1/sqrt(fan_in)`
//! at every forward pass, so Adam's step size is relative to unit-scale
//! parameters in every layer.

use std::f64::consts::SQRT_2;

use gnr_formats::NamedArray;
use rand::Rng;
use rand_distr::StandardNormal;
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Ordered, named trainable tensors owned by one network.
#[derive(Debug)]
pub struct ParamStore {
    kind: Kind,
    vars: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            vars: Vec::new(),
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    fn push(&mut self, name: String, values: Vec<f64>, shape: &[i64]) -> Tensor {
        assert!(
            self.vars.iter().all(|(n, _)| *n != name),
            "duplicate parameter {name}"
        );
        let t = Tensor::from_slice(&values)
            .view(shape)
            .to_kind(self.kind)
            .set_requires_grad(true);
        self.vars.push((name, t.shallow_clone()));
        t
    }

    pub fn randn<R: Rng + ?Sized>(&mut self, name: String, shape: &[i64], rng: &mut R) -> Tensor {
        let n: i64 = shape.iter().product();
        let values = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        self.push(name, values, shape)
    }

    pub fn full(&mut self, name: String, shape: &[i64], value: f64) -> Tensor {
        let n: i64 = shape.iter().product();
        self.push(name, vec![value; n as usize], shape)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.vars.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn numel(&self) -> usize {
        self.vars.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn set_requires_grad(&self, on: bool) {
        for (_, t) in &self.vars {
            let _ = t.set_requires_grad(on);
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.vars.iter_mut() {
            t.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.vars
            .iter()
            .all(|(_, t)| t.isfinite().all().int64_value(&[]) != 0)
    }

    pub fn to_arrays(&self, prefix: &str) -> Vec<NamedArray> {
        self.vars
            .iter()
            .map(|(name, t)| tensor_to_array(format!("{prefix}{name}"), t))
            .collect()
    }

    /// Overwrites every parameter from `arrays` (looked up as `prefix + name`).
    pub fn load_arrays(&self, prefix: &str, arrays: &[NamedArray]) -> Result<()> {
        for (name, t) in &self.vars {
            let full = format!("{prefix}{name}");
            let a = arrays
                .iter()
                .find(|a| a.name == full)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {full}")))?;
            copy_array_into(a, t)?;
        }
        Ok(())
    }

    /// Bitwise digest of all parameter values, for detecting mutation.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in &self.vars {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
            }
            let values: Vec<f64> = Vec::try_from(t.detach().to_kind(Kind::Double).view([-1]))
                .expect("parameter readback");
            for v in values {
                h = (h ^ v.to_bits()).wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }
}

pub(crate) fn tensor_to_array(name: String, t: &Tensor) -> NamedArray {
    let shape: Vec<usize> = t.size().iter().map(|&d| d as usize).collect();
    let data: Vec<f32> = Vec::try_from(t.detach().to_kind(Kind::Float).contiguous().view([-1]))
        .expect("tensor readback");
    NamedArray::new(name, shape, data)
}

pub(crate) fn copy_array_into(a: &NamedArray, t: &Tensor) -> Result<()> {
    let expected: Vec<usize> = t.size().iter().map(|&d| d as usize).collect();
    if a.shape != expected {
        return Err(Error::Checkpoint(format!(
            "{}: shape {:?} does not match {:?}",
            a.name, a.shape, expected
        )));
    }
    let src = Tensor::from_slice(&a.data)
        .view(t.size().as_slice())
        .to_kind(t.kind());
    tch::no_grad(|| {
        let mut dst = t.shallow_clone();
        dst.copy_(&src);
    });
    Ok(())
}

/// Leaky ReLU (slope 0.2) scaled by sqrt(2) to keep activations unit-variance.
pub fn lrelu(x: &Tensor) -> Tensor {
    (x.relu() * 0.8 + x * 0.2) * SQRT_2
}

#[derive(Debug)]
pub struct EqualConv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    scale: f64,
    stride: i64,
    padding: i64,
}

impl EqualConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: i64,
        c_out: i64,
        kernel: i64,
        stride: i64,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.randn(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], rng);
        let bias = bias.then(|| store.full(format!("{name}.bias"), &[c_out], 0.0));
        Self {
            weight,
            bias,
            scale: 1.0 / ((c_in * kernel * kernel) as f64).sqrt(),
            stride,
            padding: kernel / 2,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(
            &(&self.weight * self.scale),
            self.bias.as_ref(),
            [self.stride, self.stride],
            [self.padding, self.padding],
            [1, 1],
            1,
        )
    }
}

#[derive(Debug)]
pub struct EqualLinear {
    pub weight: Tensor,
    pub bias: Tensor,
    scale: f64,
}

impl EqualLinear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: i64,
        d_out: i64,
        bias_init: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.randn(format!("{name}.weight"), &[d_out, d_in], rng);
        let bias = store.full(format!("{name}.bias"), &[d_out], bias_init);
        Self {
            weight,
            bias,
            scale: 1.0 / (d_in as f64).sqrt(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.linear(&(&self.weight * self.scale), Some(&self.bias))
    }

    /// The effective (scaled) weight matrix, `[d_out, d_in]`.
    pub fn effective_weight(&self) -> Tensor {
        &self.weight * self.scale
    }
}

/// Convolution whose weights are modulated per sample by an affine map of the
/// style code and, optionally, demodulated to unit output norm.
#[derive(Debug)]
pub struct ModulatedConv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    /// Style code -> per-input-channel scales.
    pub modulation: EqualLinear,
    scale: f64,
    demodulate: bool,
    c_in: i64,
    c_out: i64,
    kernel: i64,
}

impl ModulatedConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: i64,
        c_out: i64,
        kernel: i64,
        style_dim: i64,
        demodulate: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.randn(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], rng);
        let bias = store.full(format!("{name}.bias"), &[c_out], 0.0);
        let modulation = EqualLinear::new(store, &format!("{name}.modulation"), style_dim, c_in, 1.0, rng);
        Self {
            weight,
            bias,
            modulation,
            scale: 1.0 / ((c_in * kernel * kernel) as f64).sqrt(),
            demodulate,
            c_in,
            c_out,
            kernel,
        }
    }

    pub fn in_channels(&self) -> i64 {
        self.c_in
    }

    pub fn forward(&self, x: &Tensor, style: &Tensor) -> Result<Tensor> {
        let dims = x.size();
        if dims.len() != 4 || dims[1] != self.c_in {
            return Err(Error::Shape(format!(
                "modulated conv expects [b, {}, h, w], got {dims:?}",
                self.c_in
            )));
        }
        let b = dims[0];
        if style.size() != [b, self.modulation.weight.size()[1]] {
            return Err(Error::Shape(format!(
                "style batch {:?} does not match input batch {b}",
                style.size()
            )));
        }
        // Scaling the input channels and the output channels is equivalent
        // to convolving with the per-sample modulated, demodulated kernel.
        let s = self.modulation.forward(style);
        let weight = &self.weight * self.scale;
        let k = self.kernel;
        let mut out = (x * s.view([b, self.c_in, 1, 1])).conv2d(
            &weight,
            None::<Tensor>,
            [1, 1],
            [k / 2, k / 2],
            [1, 1],
            1,
        );
        if self.demodulate {
            let wsq = weight.square().sum_dim_intlist([2i64, 3].as_slice(), false, weight.kind());
            let d = (s.square().matmul(&wsq.tr()) + 1e-8).rsqrt();
            out = out * d.view([b, self.c_out, 1, 1]);
        }
        Ok(out + self.bias.view([1, self.c_out, 1, 1]))
    }
}
