//! Flat run configuration read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::delta_mapper::MapperConfig;
use crate::hyp_nn::ModelConfig;
use crate::training::{StageIILoss, StepDecay};

/// Every tunable of a run. Keys missing from a file take these defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub train_frac: f64,

    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub kappa: f64,
    pub radius_bound: f64,
    /// Subtract the training-set feature mean before encoding.
    pub center_features: bool,

    pub lambda: f64,
    pub rec_only: bool,
    pub lr: f64,
    pub lr_manifold: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub step_size: usize,
    pub gamma: f64,
    pub weight_decay: f64,
    pub naive_euclidean_updates: bool,

    pub mapper_hyp_hidden: usize,
    pub mapper_feat_hidden: usize,
    pub mapper_delta_hidden: usize,
    pub mapper_fusion_hidden: usize,
    pub stage3_steps: usize,
    pub stage3_batch_size: usize,
    pub stage3_lr: f64,
    pub stage3_step_size: usize,
    pub same_leaf_frac: f64,

    pub r_parent: f64,
    pub r_child: f64,
    pub sigma: f64,
    pub n_samples: usize,

    pub gap_eps: f64,
    pub gap_tau: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            train_frac: 0.8,
            latent_dim: 32,
            encoder_hidden: vec![128],
            decoder_hidden: vec![256, 256],
            kappa: 1.0,
            radius_bound: 7.0,
            center_features: true,
            lambda: 0.1,
            rec_only: false,
            lr: 1e-3,
            lr_manifold: 3e-2,
            batch_size: 64,
            epochs: 50,
            step_size: 500,
            gamma: 0.5,
            weight_decay: 0.0,
            naive_euclidean_updates: false,
            mapper_hyp_hidden: 64,
            mapper_feat_hidden: 64,
            mapper_delta_hidden: 128,
            mapper_fusion_hidden: 128,
            stage3_steps: 3000,
            stage3_batch_size: 64,
            stage3_lr: 1e-3,
            stage3_step_size: 1000,
            same_leaf_frac: 0.25,
            r_parent: 5.5,
            r_child: 1.0,
            sigma: 0.5,
            n_samples: 20,
            gap_eps: 0.1,
            gap_tau: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// The fully resolved configuration, every key present.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} must be positive")))
            }
        };
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::usage("train_frac must be in (0, 1)"));
        }
        pos("kappa", self.kappa)?;
        if !(self.radius_bound >= 0.0 && self.radius_bound.is_finite()) {
            return Err(Error::usage("radius_bound must be finite and ≥ 0"));
        }
        pos("lr", self.lr)?;
        pos("lr_manifold", self.lr_manifold)?;
        pos("stage3_lr", self.stage3_lr)?;
        pos("gamma", self.gamma)?;
        pos("r_child", self.r_child)?;
        pos("sigma", self.sigma)?;
        StageIILoss::new(self.lambda, self.rec_only)?;
        if self.weight_decay < 0.0 {
            return Err(Error::usage("weight_decay must be ≥ 0"));
        }
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("stage3_batch_size", self.stage3_batch_size),
            ("n_samples", self.n_samples),
            ("mapper_hyp_hidden", self.mapper_hyp_hidden),
            ("mapper_feat_hidden", self.mapper_feat_hidden),
            ("mapper_delta_hidden", self.mapper_delta_hidden),
            ("mapper_fusion_hidden", self.mapper_fusion_hidden),
        ] {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be ≥ 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.same_leaf_frac) {
            return Err(Error::usage("same_leaf_frac must be in [0, 1]"));
        }
        if !(self.r_parent >= 0.0) || self.gap_eps < 0.0 || self.gap_tau < 0.0 {
            return Err(Error::usage("r_parent, gap_eps and gap_tau must be ≥ 0"));
        }
        Ok(())
    }

    pub fn model_config(&self, feat_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            feat_dim,
            latent_dim: self.latent_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            num_classes,
            kappa: self.kappa,
            radius_bound: self.radius_bound,
        }
    }

    pub fn mapper_config(&self, feat_dim: usize, latent_dim: usize) -> MapperConfig {
        MapperConfig {
            feat_dim,
            latent_dim,
            hyp_hidden: self.mapper_hyp_hidden,
            feat_hidden: self.mapper_feat_hidden,
            delta_hidden: self.mapper_delta_hidden,
            fusion_hidden: self.mapper_fusion_hidden,
        }
    }

    pub fn stage2_loss(&self) -> StageIILoss {
        StageIILoss {
            lambda: self.lambda,
            rec_only: self.rec_only,
        }
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            step_size: self.step_size,
            gamma: self.gamma,
        }
    }
}
