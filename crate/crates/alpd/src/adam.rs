//! Adam optimizer with bias correction and checkpointable state.

use crate::error::{Error, Result};
use crate::nn::EPS_NUM;
use crate::tensor::{Scalar, Tensor};

/// Hyperparameters for [`Adam`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, beta1: 0.50, beta2: 0.99 }
    }
}

/// Adam state for one parameter group. First and second moment estimates
/// are stored per parameter tensor; `t` counts completed steps.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Moment tensors and step count, for checkpointing.
    pub fn state(&self) -> (&[Tensor<T>], &[Tensor<T>], u64) {
        (&self.m, &self.v, self.t)
    }

    /// Restore state saved by [`Adam::state`]. Shapes must match the
    /// parameter group this optimizer was built for.
    pub fn restore(&mut self, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>, t: u64) -> Result<()> {
        let ok = m.len() == self.m.len()
            && v.len() == self.v.len()
            && m.iter().zip(&self.m).all(|(a, b)| a.shape() == b.shape())
            && v.iter().zip(&self.v).all(|(a, b)| a.shape() == b.shape());
        if !ok {
            return Err(Error::ShapeMismatch("optimizer state does not match parameter group".into()));
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }

    /// One update over the whole parameter group. `params` and `grads`
    /// must align with the shapes given at construction. Returns
    /// [`Error::Diverged`] without touching any parameter if a gradient
    /// contains NaN or ±∞.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter group size changed");
        assert_eq!(grads.len(), self.m.len(), "gradient group size changed");
        for g in grads.iter() {
            if !g.all_finite() {
                return Err(Error::Diverged("non-finite gradient in optimizer step".into()));
            }
        }
        self.t += 1;
        let b1 = T::of_f64(self.config.beta1);
        let b2 = T::of_f64(self.config.beta2);
        let one = T::one();
        let bc1 = T::of_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::of_f64(1.0 - self.config.beta2.powi(self.t as i32));
        let lr = T::of_f64(self.config.learning_rate);
        let eps = T::of_f64(EPS_NUM);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), m.shape(), "parameter shape changed");
            assert_eq!(g.shape(), m.shape(), "gradient shape changed");
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = b1 * md[i] + (one - b1) * gi;
                vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
