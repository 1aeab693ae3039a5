//! Named training configurations per architecture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::models::Arch;
use crate::optim::{OptimConfig, OptimKind};

pub const DEFAULT_PATIENCE: usize = 5;
pub const DEFAULT_GAMMA: f64 = 1.5;
pub const PRESET_NAMES: [&str; 1] = ["paper"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early stopping patience; `None` trains for every epoch.
    pub patience: Option<usize>,
    pub loss: LossKind,
    pub gamma: f64,
}

/// The `paper` preset per architecture. All use focal loss (γ = 1.5)
/// with balanced class weights.
///
/// | arch        | optimizer | lr   | weight decay | batch | epochs | patience | clip |
/// |-------------|-----------|------|--------------|-------|--------|----------|------|
/// | feedforward | Adam      | 5e-4 | 1e-4         | 32    | 10     | 5        | –    |
/// | transformer | AdamW     | 1e-4 | 4e-5         | 32    | 15     | 5        | –    |
/// | cnn         | Adam      | 1e-3 | 0            | 32    | 5      | 3        | –    |
/// | multiscale  | AdamW     | 1e-3 | 0.01         | 16    | 3      | 5        | 1.0  |
pub fn preset(arch: Arch, name: &str) -> Result<TrainConfig> {
    if name != "paper" {
        return Err(Error::Config(format!(
            "unknown preset {name:?} (available: {})",
            PRESET_NAMES.join(", ")
        )));
    }
    let cfg = |kind, lr, wd, batch_size, epochs, patience| TrainConfig {
        optim: OptimConfig::new(kind, lr, wd),
        batch_size,
        epochs,
        patience: Some(patience),
        loss: LossKind::Focal,
        gamma: DEFAULT_GAMMA,
    };
    Ok(match arch {
        Arch::Feedforward => cfg(OptimKind::Adam, 5e-4, 1e-4, 32, 10, DEFAULT_PATIENCE),
        Arch::Transformer => cfg(OptimKind::AdamW, 1e-4, 4e-5, 32, 15, DEFAULT_PATIENCE),
        Arch::Cnn => cfg(OptimKind::Adam, 1e-3, 0.0, 32, 5, 3),
        Arch::Multiscale => {
            let mut c = cfg(OptimKind::AdamW, 1e-3, 0.01, 16, 3, DEFAULT_PATIENCE);
            c.optim.clip_norm = Some(1.0);
            c
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_per_arch() {
        assert_eq!(preset(Arch::Cnn, "paper").unwrap().epochs, 5);
        assert_eq!(preset(Arch::Cnn, "paper").unwrap().patience, Some(3));
        assert_eq!(preset(Arch::Feedforward, "paper").unwrap().epochs, 10);
        assert_eq!(preset(Arch::Multiscale, "paper").unwrap().optim.clip_norm, Some(1.0));
        assert!(preset(Arch::Cnn, "fast").is_err());
    }
}
