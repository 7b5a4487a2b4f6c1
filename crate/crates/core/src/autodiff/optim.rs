use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(lr: f64) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every parameter that requires a
    /// gradient. Gradients are cleared afterwards, so a second call without a
    /// fresh backward pass fails with [`Error::MissingGrad`].
    pub fn adam_step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel())
        {
            return Err(Error::shape("adam", "parameter set changed between steps"));
        }
        for (i, p) in params.iter().enumerate() {
            if p.requires_grad() && p.grad().is_none() {
                return Err(Error::MissingGrad(format!("#{i}")));
            }
        }

        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut updated: Vec<Vec<f64>> = Vec::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            let Some(g) = p.grad().filter(|_| p.requires_grad()) else {
                updated.push(Vec::new());
                continue;
            };
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let mut next = p.data().to_vec();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                next[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("adam update of parameter #{i}")));
            }
            updated.push(next);
        }
        for (p, next) in params.iter_mut().zip(updated) {
            if !next.is_empty() {
                p.data_mut().copy_from_slice(&next);
                p.clear_grad();
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Global L2 norm over all present gradients.
pub fn grad_norm(params: &[Tensor]) -> f64 {
    params
        .iter()
        .filter_map(Tensor::grad)
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global L2 norm is at most `max_norm`;
/// returns the applied factor (1.0 when no clipping was needed).
pub fn clip_gradients(params: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        if let Some(g) = p.grad_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    scale
}
