use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with a fixed learning rate. Moments are kept per parameter tensor in
/// name order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            learning_rate,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Apply one update with `grads` given in name order.
    pub fn update(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::InvalidConfig(format!(
                "{} gradients for {} parameter tensors",
                grads.len(),
                self.m.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for (i, name) in names.iter().enumerate() {
            let w = params.get_mut(name).expect("name from params");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (&g, x)) in grads[i].data().iter().zip(w.data_mut()).enumerate() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *x -= self.learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Scale `grads` so their joint L2 norm is at most `cap`; returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], cap: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > cap {
        let s = cap / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
