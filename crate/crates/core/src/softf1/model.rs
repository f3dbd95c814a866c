use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::LabError;

/// Half-width of the uniform initialisation range.
pub const INIT_SCALE: f64 = 0.05;

/// Four-way linear head: `logits = X Wᵀ + b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Parameter gradients with the same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearModel {
    /// Weights and biases drawn from uniform(-0.05, 0.05).
    pub fn init(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_simple_fn((4, d), || rng.random_range(-INIT_SCALE..INIT_SCALE));
        let b = Array1::from_shape_simple_fn(4, || rng.random_range(-INIT_SCALE..INIT_SCALE));
        LinearModel { w, b }
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array2<f64>, LabError> {
        if x.ncols() != self.dim() {
            return Err(LabError::Shape(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    /// Back-propagate a gradient with respect to the logits.
    pub fn backward(&self, x: &Array2<f64>, dlogits: &Array2<f64>) -> Result<LinearGrads, LabError> {
        if dlogits.dim() != (x.nrows(), 4) || x.ncols() != self.dim() {
            return Err(LabError::Shape(format!(
                "backward got features {:?} and logit gradient {:?}",
                x.dim(),
                dlogits.dim()
            )));
        }
        Ok(LinearGrads {
            w: dlogits.t().dot(x),
            b: dlogits.sum_axis(Axis(0)),
        })
    }

    /// Index of the largest logit per row; ties go to the higher index.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>, LabError> {
        let logits = self.logits(x)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] >= row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        AdamWHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// Moment estimates for AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m_w: Array2<f64>,
    pub v_w: Array2<f64>,
    pub m_b: Array1<f64>,
    pub v_b: Array1<f64>,
    pub hyper: AdamWHyper,
}

impl AdamWState {
    pub fn new(model: &LinearModel, hyper: AdamWHyper) -> Self {
        AdamWState {
            step: 0,
            m_w: Array2::zeros(model.w.dim()),
            v_w: Array2::zeros(model.w.dim()),
            m_b: Array1::zeros(model.b.len()),
            v_b: Array1::zeros(model.b.len()),
            hyper,
        }
    }
}

/// One AdamW update with bias-corrected moments. Decoupled weight decay
/// scales `W` by `1 - lr·λ`; the bias is not decayed.
pub fn adamw_step(model: &mut LinearModel, grads: &LinearGrads, state: &mut AdamWState) -> Result<(), LabError> {
    if grads.w.dim() != model.w.dim() || grads.b.len() != model.b.len() || state.m_w.dim() != model.w.dim() {
        return Err(LabError::Shape(format!(
            "model W {:?}, gradient W {:?}, state W {:?}",
            model.w.dim(),
            grads.w.dim(),
            state.m_w.dim()
        )));
    }
    let h = state.hyper;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);

    model.w.mapv_inplace(|v| v * (1.0 - h.lr * h.weight_decay));
    ndarray::Zip::from(&mut model.w)
        .and(&mut state.m_w)
        .and(&mut state.v_w)
        .and(&grads.w)
        .for_each(|p, m, v, &g| {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            *p -= h.lr * (*m / c1) / ((*v / c2).sqrt() + h.eps);
        });
    ndarray::Zip::from(&mut model.b)
        .and(&mut state.m_b)
        .and(&mut state.v_b)
        .and(&grads.b)
        .for_each(|p, m, v, &g| {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            *p -= h.lr * (*m / c1) / ((*v / c2).sqrt() + h.eps);
        });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn zero_grads(d: usize) -> LinearGrads {
        LinearGrads {
            w: Array2::zeros((4, d)),
            b: Array1::zeros(4),
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = LinearModel::init(8, 3);
        assert_eq!(a, LinearModel::init(8, 3));
        assert_ne!(a, LinearModel::init(8, 4));
        assert!(a.w.iter().chain(a.b.iter()).all(|v| v.abs() < INIT_SCALE));
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let mut m = LinearModel::init(3, 0);
        let before = m.clone();
        let hyper = AdamWHyper {
            weight_decay: 0.0,
            ..AdamWHyper::default()
        };
        let mut s = AdamWState::new(&m, hyper);
        for _ in 0..5 {
            adamw_step(&mut m, &zero_grads(3), &mut s).unwrap();
        }
        assert_eq!(m, before);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn decay_shrinks_weights_only() {
        let mut m = LinearModel::init(3, 1);
        let before = m.clone();
        let mut s = AdamWState::new(&m, AdamWHyper::default());
        for _ in 0..3 {
            adamw_step(&mut m, &zero_grads(3), &mut s).unwrap();
        }
        let factor = (1.0f64 - 1e-3 * 0.1).powi(3);
        for (a, b) in m.w.iter().zip(before.w.iter()) {
            assert!((a - b * factor).abs() < 1e-15);
        }
        assert_eq!(m.b, before.b);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let mut m = LinearModel {
            w: Array2::zeros((4, 1)),
            b: Array1::zeros(4),
        };
        let g = LinearGrads {
            w: array![[0.5], [-2.0], [0.0], [1e-3]],
            b: array![1.0, -1.0, 0.0, 0.0],
        };
        let mut s = AdamWState::new(&m, AdamWHyper::default());
        adamw_step(&mut m, &g, &mut s).unwrap();
        // m̂ = g, v̂ = g², so the step is -lr·g/(|g| + ε).
        for (p, g) in m.w.iter().zip(g.w.iter()) {
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15);
        }
        assert!((m.b[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((s.v_w[[1, 0]] - 0.001 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn backward_shapes_and_values() {
        let m = LinearModel {
            w: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]],
            b: array![0.0, 0.0, 0.0, 1.0],
        };
        let x = array![[2.0, 3.0]];
        assert_eq!(m.logits(&x).unwrap(), array![[2.0, 3.0, 5.0, 1.0]]);
        assert_eq!(m.predict(&x).unwrap(), vec![2]);
        let g = m.backward(&x, &array![[1.0, 0.0, 0.0, -1.0]]).unwrap();
        assert_eq!(g.w, array![[2.0, 3.0], [0.0, 0.0], [0.0, 0.0], [-2.0, -3.0]]);
        assert_eq!(g.b, array![1.0, 0.0, 0.0, -1.0]);
        assert!(m.logits(&array![[1.0]]).is_err());
    }
}
