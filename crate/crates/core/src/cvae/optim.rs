use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam with bias correction.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, var) in params.vars() {
            // Gradients can still reference the forward graph through the
            // variables they were computed from; detach so the moments
            // don't keep every batch's graph alive.
            let Some(g) = grads.get(var.as_tensor()).map(Tensor::detach) else {
                continue;
            };
            let (m, v) = match self.moments.get(name) {
                Some((m, v)) => (
                    (m.affine(self.beta1, 0.0)? + g.affine(1.0 - self.beta1, 0.0)?)?,
                    (v.affine(self.beta2, 0.0)? + g.sqr()?.affine(1.0 - self.beta2, 0.0)?)?,
                ),
                None => (
                    g.affine(1.0 - self.beta1, 0.0)?,
                    g.sqr()?.affine(1.0 - self.beta2, 0.0)?,
                ),
            };
            let update = m
                .affine(1.0 / c1, 0.0)?
                .div(&(v.affine(1.0 / c2, 0.0)?.sqrt()? + self.eps)?)?;
            let next = (var.as_tensor().detach() - update.affine(self.learning_rate, 0.0)?)?;
            var.set(&next)?;
            self.moments.insert(name.to_string(), (m.detach(), v.detach()));
        }
        Ok(())
    }

    /// Moments as `adam.m.<param>` / `adam.v.<param>` plus a scalar
    /// `adam.step`.
    pub fn state(&self) -> Result<HashMap<String, Tensor>> {
        let mut out = HashMap::new();
        for (name, (m, v)) in &self.moments {
            out.insert(format!("adam.m.{name}"), m.clone());
            out.insert(format!("adam.v.{name}"), v.clone());
        }
        out.insert(
            "adam.step".to_string(),
            Tensor::new(&[self.step as f64], &candle_core::Device::Cpu)?,
        );
        Ok(out)
    }

    pub fn load_state(&mut self, state: &HashMap<String, Tensor>, params: &ParamStore) -> Result<()> {
        let step = state
            .get("adam.step")
            .ok_or_else(|| Error::Format("optimizer state lacks adam.step".into()))?
            .to_dtype(candle_core::DType::F64)?
            .to_vec1::<f64>()?[0];
        self.step = step as u64;
        self.moments.clear();
        for (name, var) in params.vars() {
            if let (Some(m), Some(v)) = (
                state.get(&format!("adam.m.{name}")),
                state.get(&format!("adam.v.{name}")),
            ) {
                self.moments.insert(
                    name.to_string(),
                    (m.to_dtype(var.dtype())?, v.to_dtype(var.dtype())?),
                );
            }
        }
        Ok(())
    }
}
