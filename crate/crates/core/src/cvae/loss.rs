use candle_core::Tensor;

use super::model::GaussianPosterior;
use crate::error::{Error, Result};

/// Mean squared error over every element of the batch.
pub fn recon_loss(target: &Tensor, reconstruction: &Tensor) -> Result<Tensor> {
    if target.dims() != reconstruction.dims() {
        return Err(Error::ShapeMismatch(format!(
            "target {:?} vs reconstruction {:?}",
            target.dims(),
            reconstruction.dims()
        )));
    }
    Ok((target - reconstruction)?.sqr()?.mean_all()?)
}

/// `KL(q || N(0, I))` summed over latent dimensions, averaged over the batch.
pub fn kl_loss(posterior: &GaussianPosterior) -> Result<Tensor> {
    let GaussianPosterior { mu, log_var } = posterior;
    let per_dim = ((mu.sqr()? + log_var.exp()?)? - log_var)?.affine(1.0, -1.0)?;
    Ok(per_dim.sum(1)?.mean(0)?.affine(0.5, 0.0)?)
}

pub fn total_loss(recon: &Tensor, kl: &Tensor, beta: f64) -> Result<Tensor> {
    Ok((recon + kl.affine(beta, 0.0)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn post(mu: f64, log_var: f64, b: usize, l: usize) -> GaussianPosterior {
        let d = Device::Cpu;
        GaussianPosterior {
            mu: Tensor::full(mu, (b, l), &d).unwrap(),
            log_var: Tensor::full(log_var, (b, l), &d).unwrap(),
        }
    }

    fn scalar(t: Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(scalar(kl_loss(&post(0.0, 0.0, 3, 20)).unwrap()), 0.0);
        assert!((scalar(kl_loss(&post(1.0, 0.0, 3, 20)).unwrap()) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn recon_of_unit_offset() {
        let d = Device::Cpu;
        let s = Tensor::arange(0f64, 24.0, &d).unwrap().reshape((2, 3, 4)).unwrap();
        assert_eq!(scalar(recon_loss(&s, &s).unwrap()), 0.0);
        let shifted = (&s + 1.0).unwrap();
        assert_eq!(scalar(recon_loss(&s, &shifted).unwrap()), 1.0);
        let wrong = Tensor::zeros((2, 4, 3), DType::F64, &d).unwrap();
        assert!(recon_loss(&s, &wrong).is_err());
    }

    #[test]
    fn total_combines() {
        let d = Device::Cpu;
        let r = Tensor::new(1.0f64, &d).unwrap();
        let k = Tensor::new(10.0f64, &d).unwrap();
        assert!((scalar(total_loss(&r, &k, 0.4).unwrap()) - 5.0).abs() < 1e-12);
        assert_eq!(scalar(total_loss(&r, &k, 0.0).unwrap()), 1.0);
    }
}
