use super::TrainConfig;
use crate::error::{Error, Result};

/// Constant `lr` before `decay_start_epoch`, then a linear descent that
/// would reach zero at `epochs`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Validation(format!("epoch {epoch} outside [0, {})", config.epochs)));
    }
    if epoch < config.decay_start_epoch {
        return Ok(config.lr);
    }
    let span = (config.epochs - config.decay_start_epoch) as f64;
    Ok(config.lr * (config.epochs - epoch) as f64 / span)
}
