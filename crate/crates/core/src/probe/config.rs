use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleEmbeddingMode {
    /// The per-class rule-label vectors are learned.
    Active,
    /// The table is all zeros and receives no updates; the rule label reaches
    /// the model only through the fixed descriptors in the note features.
    ZeroedFrozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_multiplier: usize,
    /// Context window, in onset groups.
    pub context_window: usize,
    pub rule_embedding_mode: RuleEmbeddingMode,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size, in windows.
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    /// The main configuration: one layer, width 64, frozen rule embedding.
    fn default() -> Self {
        ProbeConfig {
            layers: 1,
            width: 64,
            heads: 4,
            ff_multiplier: 4,
            context_window: 64,
            rule_embedding_mode: RuleEmbeddingMode::ZeroedFrozen,
            seed: 0,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 8,
        }
    }
}

impl ProbeConfig {
    /// Four layers, width 256, learned rule embedding.
    pub fn capacity_ablation() -> Self {
        ProbeConfig {
            layers: 4,
            width: 256,
            rule_embedding_mode: RuleEmbeddingMode::Active,
            ..ProbeConfig::default()
        }
    }

    pub fn ff_width(&self) -> usize {
        self.width * self.ff_multiplier
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn frozen_rule_embedding(&self) -> bool {
        self.rule_embedding_mode == RuleEmbeddingMode::ZeroedFrozen
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.width == 0 || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad("width must be a positive multiple of heads");
        }
        if self.context_window == 0 {
            return bad("context window must be at least 1");
        }
        if self.ff_multiplier == 0 || self.batch_size == 0 {
            return bad("ff_multiplier and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}
