//! Building blocks. All activations use `[batch, time, features]`.

use candle_core::{DType, Device, Tensor, D};

use super::ops::{GruSequence, SoftmaxLastDim};
use super::params::{Init, ParamStore};
use crate::error::Result;

pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Linear {
            weight: store.create(
                &format!("{name}.weight"),
                &[input, output],
                Init::Glorot {
                    fan_in: input,
                    fan_out: output,
                },
            )?,
            bias: store.create(&format!("{name}.bias"), &[output], Init::Zeros)?,
        })
    }

    /// Applies to the last dimension of a tensor of any rank.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() == 2 {
            return Ok(x.matmul(&self.weight)?.broadcast_add(&self.bias)?);
        }
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / input;
        let y = x
            .reshape((rows, input))?
            .matmul(&self.weight)?
            .broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dim(1)?;
        Ok(y.reshape(out_dims)?)
    }
}

pub struct Embedding {
    table: Tensor,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, dim: usize) -> Result<Self> {
        Ok(Embedding {
            table: store.create(&format!("{name}.table"), &[rows, dim], Init::Uniform(0.05))?,
        })
    }

    /// `ids` holds row indices (u32), one per batch element.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        Ok(self.table.index_select(ids, 0)?)
    }
}

/// Same-length temporal convolution followed by GELU.
pub struct Conv1d {
    kernel: Tensor,
    bias: Tensor,
    padding: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(Conv1d {
            kernel: store.create(
                &format!("{name}.kernel"),
                &[output, input, kernel],
                Init::Glorot {
                    fan_in: input * kernel,
                    fan_out: output * kernel,
                },
            )?,
            bias: store.create(&format!("{name}.bias"), &[output], Init::Zeros)?,
            padding: kernel / 2,
        })
    }

    /// Unfolds the padded window into columns and multiplies; candle's own
    /// conv1d returns wrong kernel gradients.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, c) = x.dims3()?;
        let (o, _, k) = self.kernel.dims3()?;
        let padded = x.pad_with_zeros(1, self.padding, k - 1 - self.padding)?;
        let cols = (0..k)
            .map(|j| padded.narrow(1, j, t))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let cols = Tensor::cat(&cols, 2)?.reshape((b * t, k * c))?;
        let w = self.kernel.permute((2, 1, 0))?.reshape((k * c, o))?;
        let y = cols.matmul(&w)?.broadcast_add(&self.bias)?.gelu_erf()?;
        Ok(y.reshape((b, t, o))?)
    }
}

/// Gated recurrent unit with separate input and recurrent biases, gate
/// order `[reset, update, candidate]`, the reset gate applied after the
/// recurrent projection.
pub struct Gru {
    input: Linear,
    recurrent: Linear,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Gru {
            input: Linear::new(store, &format!("{name}.input"), input, 3 * hidden)?,
            recurrent: Linear::new(store, &format!("{name}.recurrent"), hidden, 3 * hidden)?,
        })
    }

    fn run(&self, proj: &Tensor, reverse: bool) -> Result<Tensor> {
        let op = GruSequence { reverse };
        Ok(proj
            .contiguous()?
            .apply_op3(&self.recurrent.weight, &self.recurrent.bias, op)?)
    }

    /// Runs over `x: [B, T, in]`, returning `[B, T, hidden]` aligned with
    /// the input time axis also when `reverse` is set.
    pub fn forward(&self, x: &Tensor, reverse: bool) -> Result<Tensor> {
        self.run(&self.input.forward(x)?, reverse)
    }

    /// Runs `steps` steps with the same input `x: [B, in]` at every step.
    pub fn forward_constant(&self, x: &Tensor, steps: usize) -> Result<Tensor> {
        let proj = self.input.forward(x)?.unsqueeze(1)?;
        let (batch, _, width) = proj.dims3()?;
        self.run(&proj.broadcast_as((batch, steps, width))?, false)
    }
}

pub struct BiGru {
    forward: Gru,
    backward: Gru,
}

impl BiGru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(BiGru {
            forward: Gru::new(store, &format!("{name}.fwd"), input, hidden)?,
            backward: Gru::new(store, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    /// `[B, T, in] -> [B, T, 2 * hidden]`, forward state first.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let f = self.forward.forward(x, false)?;
        let b = self.backward.forward(x, true)?;
        Ok(Tensor::cat(&[f, b], 2)?)
    }
}

pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.create(&format!("{name}.gamma"), &[dim], Init::Ones)?,
            beta: store.create(&format!("{name}.beta"), &[dim], Init::Zeros)?,
            eps: 1e-6,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

pub fn softmax_last_dim(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(SoftmaxLastDim)?)
}

/// Multi-head self-attention whose per-head size is independent of the
/// model width, projecting back to the model width at the end.
pub struct MultiHeadAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    heads: usize,
    head_size: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        heads: usize,
        head_size: usize,
    ) -> Result<Self> {
        let inner = heads * head_size;
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), model_dim, inner)?,
            key: Linear::new(store, &format!("{name}.key"), model_dim, inner)?,
            value: Linear::new(store, &format!("{name}.value"), model_dim, inner)?,
            output: Linear::new(store, &format!("{name}.output"), inner, model_dim)?,
            heads,
            head_size,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let split = |y: Tensor| -> Result<Tensor> {
            Ok(y.reshape((b, t, self.heads, self.head_size))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let scale = 1.0 / (self.head_size as f64).sqrt();
        let q = split(self.query.forward(x)?.affine(scale, 0.0)?)?;
        let k = split(self.key.forward(x)?)?;
        let v = split(self.value.forward(x)?)?;
        let scores = q.matmul(&k.t()?.contiguous()?)?;
        let attn = softmax_last_dim(&scores)?;
        let out = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, self.heads * self.head_size))?;
        self.output.forward(&out)
    }
}

/// Post-norm encoder block: `x = LN(x + MHA(x)); x = LN(x + FF(x))`.
pub struct TransformerBlock {
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    norm2: LayerNorm,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        heads: usize,
        head_size: usize,
        ff_dim: usize,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.attention"),
                model_dim,
                heads,
                head_size,
            )?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), model_dim)?,
            ff_in: Linear::new(store, &format!("{name}.ff_in"), model_dim, ff_dim)?,
            ff_out: Linear::new(store, &format!("{name}.ff_out"), ff_dim, model_dim)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), model_dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.norm1.forward(&(x + self.attention.forward(x)?)?)?;
        let ff = self.ff_out.forward(&self.ff_in.forward(&x)?.gelu_erf()?)?;
        self.norm2.forward(&(x + ff)?)
    }
}

/// Fixed sinusoidal position table `[steps, dim]`.
pub fn sinusoidal_encoding(steps: usize, dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut values = Vec::with_capacity(steps * dim);
    for t in 0..steps {
        for i in 0..dim {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = t as f64 * rate;
            values.push(if i % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    Ok(Tensor::from_vec(values, (steps, dim), device)?.to_dtype(dtype)?)
}
