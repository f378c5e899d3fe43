use crate::nn::{Gradients, ModelState, ParamGroup};
use crate::{Error, Result};

use super::TrainConfig;

/// `eta0 / (1 + alpha * t)`.
pub fn lr_schedule(t: usize, eta0: f64, alpha: f64) -> f64 {
    eta0 / (1.0 + alpha * t as f64)
}

/// One plain gradient step at iteration `t`: conv filters use the decaying
/// rate, batch-norm and dense parameters the static dense rate.
///
/// Gradients are checked before any parameter moves, so a diverged step
/// leaves the model untouched.
pub fn sgd_step(model: &mut ModelState, grads: &Gradients, t: usize, config: &TrainConfig) -> Result<()> {
    for group in ParamGroup::ALL {
        if grads.group(group).iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                layer: group.name().to_string(),
                iteration: t,
            });
        }
        if grads.group(group).len() != model.group(group).len() {
            return Err(Error::Contract(format!("gradient shape for {}", group.name())));
        }
    }
    let conv_rate = lr_schedule(t, config.lr_conv, config.lr_decay);
    for group in ParamGroup::ALL {
        let rate = if group.is_conv() { conv_rate } else { config.lr_dense };
        for (p, g) in model.group_mut(group).iter_mut().zip(grads.group(group)) {
            *p -= rate * g;
        }
    }
    Ok(())
}
