use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.01)
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.kind == OptimizerKind::Adam {
            if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
                return Err(Error::invalid("adam betas", "must lie in [0, 1)"));
            }
            if self.epsilon <= 0.0 {
                return Err(Error::invalid("adam epsilon", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Descends along the stored gradients of `ids`. Gradients are left in place;
/// callers zero them before the next backward pass.
pub fn optimizer_step(
    store: &mut ParamStore,
    ids: &[ParamId],
    config: &OptimizerConfig,
) -> Result<()> {
    config.validate()?;
    for &id in ids {
        if store.get(id).grad().is_none() {
            return Err(Error::MissingGradient(store.get(id).name.clone()));
        }
    }
    let lr = config.learning_rate;
    for &id in ids {
        let p = store.get_mut(id);
        p.step += 1;
        let grad = p.grad().expect("checked above").to_vec();
        match config.kind {
            OptimizerKind::Sgd => {
                for (w, g) in p.values_mut().iter_mut().zip(&grad) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
                let t = p.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let mut m = std::mem::take(&mut p.first_moment);
                let mut v = std::mem::take(&mut p.second_moment);
                for (((w, g), m), v) in p.values_mut().iter_mut().zip(&grad).zip(&mut m).zip(&mut v)
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
                p.first_moment = m;
                p.second_moment = v;
            }
        }
    }
    Ok(())
}
