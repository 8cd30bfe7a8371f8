use crate::element::Element;
use crate::error::{invalid, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

/// Adam with bias correction, one instance per parameter set.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            state: AdamState {
                t: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    /// One update. Parameters with no gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(invalid(
                "adam",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        self.state.t += 1;
        let c = self.config;
        let t = self.state.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step = T::from_f64(c.lr / bc1);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(c.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.state.m.iter_mut())
            .zip(self.state.v.iter_mut())
        {
            let Some(g) = g else { continue };
            g.expect_shape("adam", p.value.shape())?;
            for (((w, &gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *w = *w - step * *mi / ((*vi).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_quadratic() {
        let mut ps = ParamSet::<f64>::new();
        ps.push("w", Tensor::from_vec(&[2], vec![3.0, -2.0]).unwrap());
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.9, 0.999), &ps);
        for _ in 0..500 {
            let g: Vec<f64> = ps.get(0).data().iter().map(|w| 2.0 * w).collect();
            opt.step(&mut ps, &[Some(Tensor::from_vec(&[2], g).unwrap())]).unwrap();
        }
        assert!(ps.get(0).data().iter().all(|w| w.abs() < 1e-2));
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let mut ps = ParamSet::<f32>::new();
        ps.push("w", Tensor::from_vec(&[3], vec![0.1, -0.7, 1e-30]).unwrap());
        let before = ps.clone();
        let mut opt = Adam::new(AdamConfig::new(0.0, 0.5, 0.999), &ps);
        let g = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        opt.step(&mut ps, &[Some(g)]).unwrap();
        assert_eq!(ps, before);
    }
}
