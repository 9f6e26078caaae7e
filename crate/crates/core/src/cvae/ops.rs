//! Fused CPU ops with hand-written backward passes. Composed from
//! primitive tensor ops, a GRU costs a dozen graph nodes per step and a
//! softmax half a dozen full-size temporaries; both dominate training time
//! for 234-step sequences.

use candle_core::{CpuStorage, CustomOp1, CustomOp3, DType, Layout, Shape, Tensor, WithDType};

/// A whole GRU pass as one graph node: `(x [B, T, 3H], w [H, 3H], b [3H])
/// -> h [B, T, H]` with zero initial state and gate order `[r, z, n]`. `x`
/// is the input projection (bias included), `w` and `b` the recurrent
/// projection:
///
/// ```text
/// r = σ(x_r + hp_r),  z = σ(x_z + hp_z),  n = tanh(x_n + r hp_n)
/// h' = (1 - z) n + z h,  hp = h w + b
/// ```
///
/// With `reverse` the sequence is consumed from the last step, outputs stay
/// aligned with the input time axis.
pub struct GruSequence {
    pub reverse: bool,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

struct Dims {
    batch: usize,
    steps: usize,
    hidden: usize,
}

impl GruSequence {
    fn order(&self, steps: usize) -> Vec<usize> {
        if self.reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        }
    }

    fn run(&self, x: &[f64], w: &[f64], bias: &[f64], d: &Dims) -> Vec<f64> {
        let (h3, hs) = (3 * d.hidden, d.hidden);
        let mut out = vec![0.0; d.batch * d.steps * hs];
        let mut h = vec![0.0; d.batch * hs];
        let mut hp = vec![0.0; h3];
        for t in self.order(d.steps) {
            for b in 0..d.batch {
                let hb = &mut h[b * hs..(b + 1) * hs];
                project(hb, w, bias, &mut hp);
                let xt = &x[(b * d.steps + t) * h3..][..h3];
                let ot = &mut out[(b * d.steps + t) * hs..][..hs];
                for j in 0..hs {
                    let r = sigmoid(xt[j] + hp[j]);
                    let z = sigmoid(xt[hs + j] + hp[hs + j]);
                    let n = (xt[2 * hs + j] + r * hp[2 * hs + j]).tanh();
                    ot[j] = (1.0 - z) * n + z * hb[j];
                }
                hb.copy_from_slice(ot);
            }
        }
        out
    }

    /// Backpropagation through time. Returns `(dx, dw, db)`.
    fn backprop(
        &self,
        x: &[f64],
        w: &[f64],
        bias: &[f64],
        out: &[f64],
        grad: &[f64],
        d: &Dims,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (h3, hs) = (3 * d.hidden, d.hidden);
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; h3];
        let mut carry = vec![0.0; d.batch * hs];
        let zeros = vec![0.0; hs];
        let mut hp = vec![0.0; h3];
        let mut dhp = vec![0.0; h3];
        let order = self.order(d.steps);
        for (i, &t) in order.iter().enumerate().rev() {
            for b in 0..d.batch {
                let h_prev = match i {
                    0 => &zeros[..],
                    _ => &out[(b * d.steps + order[i - 1]) * hs..][..hs],
                };
                project(h_prev, w, bias, &mut hp);
                let xt = &x[(b * d.steps + t) * h3..][..h3];
                let gt = &grad[(b * d.steps + t) * hs..][..hs];
                let dxt = &mut dx[(b * d.steps + t) * h3..][..h3];
                let cb = &mut carry[b * hs..(b + 1) * hs];
                for j in 0..hs {
                    let r = sigmoid(xt[j] + hp[j]);
                    let z = sigmoid(xt[hs + j] + hp[hs + j]);
                    let n = (xt[2 * hs + j] + r * hp[2 * hs + j]).tanh();
                    let g = gt[j] + cb[j];
                    let dn = g * (1.0 - z) * (1.0 - n * n);
                    let dz = g * (h_prev[j] - n) * z * (1.0 - z);
                    let dr = dn * hp[2 * hs + j] * r * (1.0 - r);
                    dxt[j] = dr;
                    dxt[hs + j] = dz;
                    dxt[2 * hs + j] = dn;
                    dhp[j] = dr;
                    dhp[hs + j] = dz;
                    dhp[2 * hs + j] = dn * r;
                    cb[j] = g * z;
                }
                for (acc, v) in db.iter_mut().zip(&dhp) {
                    *acc += v;
                }
                for k in 0..hs {
                    let wk = &w[k * h3..(k + 1) * h3];
                    let dwk = &mut dw[k * h3..(k + 1) * h3];
                    let hk = h_prev[k];
                    let mut dot = 0.0;
                    for j in 0..h3 {
                        dot += dhp[j] * wk[j];
                        dwk[j] += hk * dhp[j];
                    }
                    cb[k] += dot;
                }
            }
        }
        (dx, dw, db)
    }
}

/// `hp = h w + b` for one row.
fn project(h: &[f64], w: &[f64], bias: &[f64], hp: &mut [f64]) {
    let h3 = bias.len();
    hp.copy_from_slice(bias);
    for (k, &hk) in h.iter().enumerate() {
        if hk != 0.0 {
            for (acc, wv) in hp.iter_mut().zip(&w[k * h3..(k + 1) * h3]) {
                *acc += hk * wv;
            }
        }
    }
}

fn contiguous<T: WithDType>(data: &[T], layout: &Layout) -> candle_core::Result<Vec<f64>> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("gru sequence needs contiguous inputs".into()))?;
    Ok(data[start..end].iter().map(|v| v.to_f64()).collect())
}

fn storage_f64(s: &CpuStorage, l: &Layout) -> candle_core::Result<Vec<f64>> {
    match s {
        CpuStorage::F32(v) => contiguous(v, l),
        CpuStorage::F64(v) => contiguous(v, l),
        _ => Err(candle_core::Error::Msg("gru sequence needs f32 or f64".into())),
    }
}

fn flat(t: &Tensor) -> candle_core::Result<Vec<f64>> {
    t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()
}

impl CustomOp3 for GruSequence {
    fn name(&self) -> &'static str {
        "gru-sequence"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (x, w, b) = (l1.dims(), l2.dims(), l3.dims());
        let ok = x.len() == 3 && w.len() == 2 && b.len() == 1 && w[1] == 3 * w[0] && x[2] == w[1] && b[0] == w[1];
        if !ok {
            return Err(candle_core::Error::Msg(format!("gru sequence shapes {x:?} {w:?} {b:?}")));
        }
        let d = Dims {
            batch: x[0],
            steps: x[1],
            hidden: w[0],
        };
        let out = self.run(&storage_f64(s1, l1)?, &storage_f64(s2, l2)?, &storage_f64(s3, l3)?, &d);
        let storage = match s1 {
            CpuStorage::F32(_) => CpuStorage::F32(out.into_iter().map(|v| v as f32).collect()),
            _ => CpuStorage::F64(out),
        };
        Ok((storage, Shape::from((d.batch, d.steps, d.hidden))))
    }

    fn bwd(
        &self,
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
        res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
        let (batch, steps, hidden) = res.dims3()?;
        let d = Dims { batch, steps, hidden };
        let (dx, dw, db) = self.backprop(&flat(x)?, &flat(w)?, &flat(b)?, &flat(res)?, &flat(grad)?, &d);
        let device = x.device();
        let dtype = x.dtype();
        Ok((
            Some(Tensor::from_vec(dx, x.shape(), device)?.to_dtype(dtype)?),
            Some(Tensor::from_vec(dw, w.shape(), device)?.to_dtype(dtype)?),
            Some(Tensor::from_vec(db, b.shape(), device)?.to_dtype(dtype)?),
        ))
    }
}

/// Softmax over the last dimension.
pub struct SoftmaxLastDim;

fn softmax_rows<T: WithDType>(data: &[T], layout: &Layout) -> candle_core::Result<Vec<T>> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("softmax needs a contiguous input".into()))?;
    let cols = *layout.dims().last().unwrap_or(&1);
    let mut out = Vec::with_capacity(end - start);
    let mut row = vec![0.0; cols];
    for chunk in data[start..end].chunks_exact(cols) {
        let max = chunk.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (r, v) in row.iter_mut().zip(chunk) {
            *r = (v.to_f64() - max).exp();
            sum += *r;
        }
        out.extend(row.iter().map(|r| T::from_f64(r / sum)));
    }
    Ok(out)
}

impl CustomOp1 for SoftmaxLastDim {
    fn name(&self) -> &'static str {
        "softmax-last-dim"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match s {
            CpuStorage::F32(v) => CpuStorage::F32(softmax_rows(v, l)?),
            CpuStorage::F64(v) => CpuStorage::F64(softmax_rows(v, l)?),
            _ => return Err(candle_core::Error::Msg("softmax needs f32 or f64".into())),
        };
        Ok((out, l.shape().clone()))
    }

    /// `dx = y (g - sum(g y))` per row.
    fn bwd(&self, _arg: &Tensor, res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let dot = (grad * res)?.sum_keepdim(candle_core::D::Minus1)?;
        Ok(Some((grad.broadcast_sub(&dot)? * res)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn composed(x: &Tensor, w: &Tensor, b: &Tensor, reverse: bool) -> Tensor {
        let (batch, steps, _) = x.dims3().unwrap();
        let hs = w.dim(0).unwrap();
        let g = |t: &Tensor, k: usize| t.narrow(1, k * hs, hs).unwrap();
        let sig = |t: Tensor| (t.neg().unwrap().exp().unwrap() + 1.0).unwrap().recip().unwrap();
        let mut h = Tensor::zeros((batch, hs), x.dtype(), x.device()).unwrap();
        let mut out = vec![None; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let xt = x.narrow(1, t, 1).unwrap().squeeze(1).unwrap();
            let hp = h.matmul(w).unwrap().broadcast_add(b).unwrap();
            let r = sig((g(&xt, 0) + g(&hp, 0)).unwrap());
            let z = sig((g(&xt, 1) + g(&hp, 1)).unwrap());
            let n = (g(&xt, 2) + (&r * g(&hp, 2)).unwrap()).unwrap().tanh().unwrap();
            h = (&n + (&z * (&h - &n).unwrap()).unwrap()).unwrap();
            out[t] = Some(h.clone());
        }
        let out: Vec<Tensor> = out.into_iter().map(Option::unwrap).collect();
        Tensor::stack(&out, 1).unwrap()
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn gru_sequence_matches_composed_ops() {
        let dev = Device::Cpu;
        for reverse in [false, true] {
            let x = Var::randn(0f64, 1.0, (3, 5, 12), &dev).unwrap();
            let w = Var::randn(0f64, 0.5, (4, 12), &dev).unwrap();
            let b = Var::randn(0f64, 0.5, 12, &dev).unwrap();
            let probe = Tensor::randn(0f64, 1.0, (3, 5, 4), &dev).unwrap();

            let fused = x.apply_op3(&w, &b, GruSequence { reverse }).unwrap();
            let reference = composed(&x, &w, &b, reverse);
            assert!(max_diff(&fused, &reference) < 1e-12);

            let gf = (fused * &probe).unwrap().sum_all().unwrap().backward().unwrap();
            let gr = (reference * &probe).unwrap().sum_all().unwrap().backward().unwrap();
            for v in [&x, &w, &b] {
                let d = max_diff(gf.get(v.as_tensor()).unwrap(), gr.get(v.as_tensor()).unwrap());
                assert!(d < 1e-12, "reverse {reverse}: {d}");
            }
        }
    }

    #[test]
    fn softmax_matches_composed_ops() {
        let dev = Device::Cpu;
        let x = Var::randn(0f64, 3.0, (2, 3, 7), &dev).unwrap();
        let w = Tensor::randn(0f64, 1.0, (2, 3, 7), &dev).unwrap();
        let fused = x.apply_op1(SoftmaxLastDim).unwrap();
        let e = x.exp().unwrap();
        let reference = e.broadcast_div(&e.sum_keepdim(2).unwrap()).unwrap();
        let diff = (&fused - &reference).unwrap().abs().unwrap().max_all().unwrap();
        assert!(diff.to_scalar::<f64>().unwrap() < 1e-12);
        let gf = (fused * &w).unwrap().sum_all().unwrap().backward().unwrap();
        let gr = (reference * &w).unwrap().sum_all().unwrap().backward().unwrap();
        let d = (gf.get(x.as_tensor()).unwrap() - gr.get(x.as_tensor()).unwrap())
            .unwrap()
            .abs()
            .unwrap()
            .max_all()
            .unwrap();
        assert!(d.to_scalar::<f64>().unwrap() < 1e-12);
    }
}
