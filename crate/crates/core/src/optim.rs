//! Binary cross-entropy, Adam, and reduce-on-plateau learning-rate control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped into `[BCE_EPSILON, 1 - BCE_EPSILON]` before the log.
pub const BCE_EPSILON: f64 = 1e-7;

/// Clamps a probability the same way the loss does.
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// Mean binary cross-entropy over a `[B, 1]` batch and its gradient with
/// respect to the predicted probabilities.
///
/// The gradient is the derivative of the loss expression evaluated at the
/// clamped probability, so saturated predictions still receive a signal.
pub fn bce_loss<T: Scalar>(predictions: &Tensor<T>, targets: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "predictions {} and targets {} differ",
            predictions.shape(),
            targets.shape()
        )));
    }
    let n = predictions.numel() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.numel());
    for (&p, &y) in predictions.data().iter().zip(targets.data()) {
        let y = y.to_f64_lossy();
        if y != 0.0 && y != 1.0 {
            return Err(Error::input(format!("target {y} is not 0 or 1")));
        }
        let p = p.to_f64_lossy();
        if !p.is_finite() {
            return Err(Error::input(format!("prediction {p} is not finite")));
        }
        let pc = clamp_probability(p);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        grad.push(T::lit((pc - y) / (pc * (1.0 - pc)) / n));
    }
    Ok((loss / n, Tensor::from_vec(predictions.dims(), grad)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Adam moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub learning_rate: f64,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new<'a>(
        params: impl IntoIterator<Item = &'a Tensor<T>>,
        learning_rate: f64,
        config: AdamConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        let m: Vec<Tensor<T>> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.dims()))
            .collect::<Result<_>>()?;
        Ok(AdamState {
            config,
            learning_rate,
            step: 0,
            v: m.clone(),
            m,
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "Adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::shape(format!(
                    "tensor {i}: parameter {}, gradient {}, moment {}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let correction1 = T::lit(1.0 - beta1.powi(t));
        let correction2 = T::lit(1.0 - beta2.powi(t));
        let (lr, eps) = (T::lit(self.learning_rate), T::lit(epsilon));

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((theta, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauConfig {
    /// Stagnant epochs tolerated before a reduction.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            patience: 3,
            factor: 0.1,
            min_lr: 1e-5,
        }
    }
}

impl PlateauConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || !(self.factor > 0.0 && self.factor < 1.0) || !(self.min_lr > 0.0) {
            return Err(Error::Config(format!("invalid plateau schedule {self:?}")));
        }
        Ok(())
    }
}

/// Learning-rate reduction driven by validation loss (lower is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub config: PlateauConfig,
    pub learning_rate: f64,
    pub best: Option<f64>,
    pub epochs_since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauOutcome {
    pub learning_rate: f64,
    pub improved: bool,
    pub reduced: bool,
    /// The monitored loss was NaN and counted as a stagnant epoch.
    pub nan_loss: bool,
}

impl PlateauState {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Result<Self> {
        config.validate()?;
        if !(initial_lr > 0.0 && initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "initial learning rate must be positive, got {initial_lr}"
            )));
        }
        Ok(PlateauState {
            config,
            learning_rate: initial_lr,
            best: None,
            epochs_since_improvement: 0,
        })
    }

    /// Feeds one completed epoch's validation loss.
    pub fn update(&mut self, val_loss: f64) -> PlateauOutcome {
        let nan_loss = val_loss.is_nan();
        let improved = !nan_loss && self.best.is_none_or(|best| val_loss < best);
        let mut reduced = false;
        if improved {
            self.best = Some(val_loss);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.config.patience {
                let next = (self.learning_rate * self.config.factor).max(self.config.min_lr);
                reduced = next < self.learning_rate;
                self.learning_rate = next.min(self.learning_rate);
                self.epochs_since_improvement = 0;
            }
        }
        PlateauOutcome {
            learning_rate: self.learning_rate,
            improved,
            reduced,
            nan_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let (loss, _) = bce_loss(&col(&[1.0, 0.0]), &col(&[1.0, 0.0])).unwrap();
        assert!(loss <= -(1.0 - BCE_EPSILON).ln() + 1e-15);
        assert!(loss < 1.1e-7);
    }

    #[test]
    fn bce_half_is_ln2() {
        let (loss, _) = bce_loss(&col(&[0.5; 4]), &col(&[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_saturated_wrong_prediction() {
        let (loss, grad) = bce_loss(&col(&[1.0]), &col(&[0.0])).unwrap();
        // Scalar hand evaluation: -(0 * ln(1 - eps) + 1 * ln(1 - (1 - eps))) = -ln(eps) up to rounding.
        let p = 1.0 - BCE_EPSILON;
        let hand = -(1.0 - p).ln();
        assert_eq!(loss, hand);
        assert!((loss - 16.118_095_650_958_32).abs() < 1e-6);
        assert!(grad.data()[0] > 0.0);
    }

    #[test]
    fn bce_rejects_non_binary_targets() {
        assert!(matches!(bce_loss(&col(&[0.3]), &col(&[0.5])), Err(Error::Input(_))));
        assert!(matches!(
            bce_loss(&col(&[0.3, 0.2]), &col(&[1.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let p = [0.2, 0.7, 0.55, 0.9];
        let y = [0.0, 1.0, 0.0, 1.0];
        let (_, grad) = bce_loss(&col(&p), &col(&y)).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut up = p;
            up[i] += h;
            let mut down = p;
            down[i] -= h;
            let fd =
                (bce_loss(&col(&up), &col(&y)).unwrap().0 - bce_loss(&col(&down), &col(&y)).unwrap().0) / (2.0 * h);
            assert!((fd - grad.data()[i]).abs() < 1e-6, "{i}: {fd} vs {}", grad.data()[i]);
        }
    }

    /// Scalar reference of the Adam update, written directly from the update rule.
    fn adam_reference(theta0: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        let mut trace = Vec::new();
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            trace.push(theta);
        }
        trace
    }

    fn scalar_step(state: &mut AdamState<f64>, theta: &mut Tensor<f64>, g: f64) {
        let grad = Tensor::from_vec(&[1], vec![g]).unwrap();
        state.step(&mut [theta], &[grad]).unwrap();
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut theta = Tensor::from_vec(&[1], vec![0.0f64]).unwrap();
        let mut state = AdamState::new([&theta], 0.001, AdamConfig::default()).unwrap();
        scalar_step(&mut state, &mut theta, 1.0);
        assert_eq!(state.step, 1);
        assert!((theta.data()[0] + 0.001).abs() < 1e-10);
        assert_eq!(theta.data()[0], adam_reference(0.0, &[1.0], 0.001)[0]);
    }

    #[test]
    fn adam_matches_scalar_reference_trace() {
        let mut theta = Tensor::from_vec(&[1], vec![0.3f64]).unwrap();
        let mut state = AdamState::new([&theta], 0.001, AdamConfig::default()).unwrap();
        let reference = adam_reference(0.3, &[0.7, 0.7], 0.001);
        for (k, &expected) in reference.iter().enumerate() {
            scalar_step(&mut state, &mut theta, 0.7);
            assert!((theta.data()[0] - expected).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn adam_zero_gradient_and_zero_lr_leave_params() {
        let mut theta = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let before = theta.clone();
        let mut state = AdamState::new([&theta], 0.001, AdamConfig::default()).unwrap();
        state.step(&mut [&mut theta], &[Tensor::zeros(&[3]).unwrap()]).unwrap();
        assert_eq!(theta, before);

        let mut frozen = AdamState::new([&theta], 0.0, AdamConfig::default()).unwrap();
        for _ in 0..5 {
            frozen
                .step(
                    &mut [&mut theta],
                    &[Tensor::from_vec(&[3], vec![3.0, -1.0, 0.2]).unwrap()],
                )
                .unwrap();
        }
        assert_eq!(theta, before);
        assert!(frozen.v.iter().all(|v| v.data().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut theta = Tensor::<f64>::zeros(&[2]).unwrap();
        let mut state = AdamState::new([&theta], 0.001, AdamConfig::default()).unwrap();
        assert!(matches!(
            state.step(&mut [&mut theta], &[Tensor::zeros(&[3]).unwrap()]),
            Err(Error::Shape(_))
        ));
        assert_eq!(state.step, 0);
    }

    #[test]
    fn plateau_keeps_lr_while_improving() {
        let mut s = PlateauState::new(0.001, PlateauConfig::default()).unwrap();
        for k in 0..20 {
            assert_eq!(s.update(1.0 - k as f64 * 0.01).learning_rate, 0.001);
        }
    }

    #[test]
    fn plateau_reduces_after_patience() {
        let mut s = PlateauState::new(0.001, PlateauConfig::default()).unwrap();
        let lrs: Vec<f64> = [0.5, 0.5, 0.5, 0.5]
            .iter()
            .map(|&l| s.update(l).learning_rate)
            .collect();
        assert_eq!(lrs, vec![0.001, 0.001, 0.001, 0.001 * 0.1]);
        assert_eq!(s.epochs_since_improvement, 0);
    }

    #[test]
    fn plateau_respects_floor() {
        let mut s = PlateauState::new(1e-5, PlateauConfig::default()).unwrap();
        for _ in 0..10 {
            let out = s.update(0.7);
            assert_eq!(out.learning_rate, 1e-5);
            assert!(!out.reduced);
        }
    }

    #[test]
    fn plateau_nan_counts_as_stagnation() {
        let mut s = PlateauState::new(0.001, PlateauConfig::default()).unwrap();
        s.update(0.4);
        let out = s.update(f64::NAN);
        assert!(out.nan_loss && !out.improved);
        assert_eq!(s.epochs_since_improvement, 1);
        assert_eq!(s.best, Some(0.4));
    }
}
