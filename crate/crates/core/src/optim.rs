//! Adam with explicit, checkpointable moment buffers.

use gnr_formats::NamedArray;
use tch::Tensor;

use crate::error::{Error, Result};
use crate::nets::layers::{copy_array_into, tensor_to_array};
use crate::nets::ParamStore;

#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = || store.iter().map(|(_, t)| t.detach().zeros_like()).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::invalid("optimizer was built for a different parameter set"));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        tch::no_grad(|| {
            for (i, (_, p)) in store.iter().enumerate() {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = &*m * self.beta1 + &g * (1.0 - self.beta1);
                *v = &*v * self.beta2 + g.square() * (1.0 - self.beta2);
                let update = (&*m / bc1) / ((&*v / bc2).sqrt() + self.eps) * self.lr;
                let mut p = p.shallow_clone();
                p -= update;
            }
        });
        store.zero_grad();
        Ok(())
    }

    pub fn to_arrays(&self, store: &ParamStore, prefix: &str) -> Vec<NamedArray> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (i, (name, _)) in store.iter().enumerate() {
            out.push(tensor_to_array(format!("{prefix}m.{name}"), &self.m[i]));
            out.push(tensor_to_array(format!("{prefix}v.{name}"), &self.v[i]));
        }
        out
    }

    pub fn load_arrays(&mut self, store: &ParamStore, prefix: &str, arrays: &[NamedArray], step: u64) -> Result<()> {
        for (i, (name, _)) in store.iter().enumerate() {
            for (tag, buf) in [("m", &self.m[i]), ("v", &self.v[i])] {
                let full = format!("{prefix}{tag}.{name}");
                let a = arrays
                    .iter()
                    .find(|a| a.name == full)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {full}")))?;
                copy_array_into(a, buf)?;
            }
        }
        self.step = step;
        Ok(())
    }
}
