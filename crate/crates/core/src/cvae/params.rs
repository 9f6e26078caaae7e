use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Glorot/Xavier uniform with the given fan-in and fan-out.
    Glorot { fan_in: usize, fan_out: usize },
    Uniform(f64),
}

/// Named trainable tensors, initialized from a seeded generator so that a
/// model is reproducible from its config and seed alone.
pub struct ParamStore {
    device: Device,
    dtype: DType,
    rng: ChaCha8Rng,
    vars: BTreeMap<String, Var>,
    frozen: bool,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        ParamStore {
            device: Device::Cpu,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
            vars: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// After freezing, `create` hands out detached views of the parameters
    /// already declared under the same names instead of new variables.
    /// The views share storage, so they follow later updates, but
    /// computations on them record no graph.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn create(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.frozen {
            let var = self
                .vars
                .get(name)
                .unwrap_or_else(|| panic!("parameter {name} not declared before freezing"));
            assert_eq!(var.dims(), shape, "parameter {name} redeclared with another shape");
            return Ok(var.as_tensor().detach());
        }
        assert!(!self.vars.contains_key(name), "parameter {name} declared twice");
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-limit..limit)).collect()
            }
            Init::Uniform(limit) => (0..n).map(|_| self.rng.random_range(-limit..limit)).collect(),
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().detach().copy()?)))
            .collect()
    }

    /// Overwrites parameters from `values`; every parameter must be present
    /// with a matching shape.
    pub fn restore(&self, values: &HashMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = values
                .get(name)
                .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
            if t.dims() != var.dims() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter `{name}`: stored {:?}, model {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.snapshot()?, path)?;
        Ok(())
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let values = candle_core::safetensors::load(path, &self.device)?;
        self.restore(&values)
    }
}
