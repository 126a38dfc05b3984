use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, EuclideanMLP};
use super::mlr::HyperbolicMLR;
use super::mobius_linear::MobiusLinear;
use super::ops::TapeBall;
use super::params::{prefixed, prefixed_mut, ParamMut, ParamRef, Parameterized};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Error, Result};
use crate::manifold::{Curvature, PoincareBall, PoincarePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub num_classes: usize,
    pub kappa: f64,
    /// Soft cap on the radius of embeddings; `0` leaves them unbounded.
    #[serde(default)]
    pub radius_bound: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feat_dim: 64,
            latent_dim: 32,
            encoder_hidden: vec![128],
            decoder_hidden: vec![256, 256],
            num_classes: 64,
            kappa: 1.0,
            radius_bound: 7.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.latent_dim == 0 || self.num_classes == 0 {
            return Err(Error::usage("model dimensions must be positive"));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::usage("hidden widths must be positive"));
        }
        Curvature::new(self.kappa)?;
        if !(self.radius_bound >= 0.0 && self.radius_bound.is_finite()) {
            return Err(Error::usage("radius_bound must be finite and ≥ 0"));
        }
        Ok(())
    }

    fn encoder_dims(&self) -> Vec<usize> {
        let mut d = vec![self.feat_dim];
        d.extend(&self.encoder_hidden);
        d.push(self.latent_dim);
        d
    }

    fn decoder_dims(&self) -> Vec<usize> {
        let mut d = vec![self.latent_dim];
        d.extend(&self.decoder_hidden);
        d.push(self.feat_dim);
        d
    }
}

/// Encoder, Möbius layer, hyperbolic classifier and decoder.
///
/// A feature `f` embeds as `M(exp_0(E(f − μ)))`, with its radius softly
/// capped when `radius_bound > 0`; an embedding `z` decodes as
/// `D(log_0(z)) + μ`. The shift `μ` is fixed, not trained: stage 2 sets it to
/// the training-set feature mean so the hierarchy root lands near the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct HypModel {
    config: ModelConfig,
    ball: PoincareBall,
    feature_mean: Tensor,
    pub encoder: EuclideanMLP,
    pub mobius: MobiusLinear,
    pub mlr: HyperbolicMLR,
    pub decoder: EuclideanMLP,
}

/// Tape nodes produced by [`HypModel::tape_forward`].
#[derive(Debug, Clone, Copy)]
pub struct TapeOutputs {
    pub embedding: Var,
    pub logits: Var,
    pub reconstruction: Var,
}

impl HypModel {
    /// All-zero parameters with the right shapes.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ball = PoincareBall::new(config.latent_dim, Curvature::new(config.kappa)?)?;
        Ok(HypModel {
            feature_mean: Tensor::zeros(1, config.feat_dim),
            encoder: EuclideanMLP::zeros(&config.encoder_dims(), Activation::Tanh, Activation::Identity)?,
            mobius: MobiusLinear::zeros(config.latent_dim, config.latent_dim),
            mlr: HyperbolicMLR::zeros(config.num_classes, config.latent_dim),
            decoder: EuclideanMLP::zeros(&config.decoder_dims(), Activation::Tanh, Activation::Identity)?,
            ball,
            config,
        })
    }

    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let ball = PoincareBall::new(config.latent_dim, Curvature::new(config.kappa)?)?;
        let encoder = EuclideanMLP::glorot(&config.encoder_dims(), Activation::Tanh, Activation::Identity, rng)?;
        let mobius = MobiusLinear::glorot(config.latent_dim, config.latent_dim, rng);
        let mlr = HyperbolicMLR::init(config.num_classes, config.latent_dim, rng);
        let decoder = EuclideanMLP::glorot(&config.decoder_dims(), Activation::Tanh, Activation::Identity, rng)?;
        Ok(HypModel {
            feature_mean: Tensor::zeros(1, config.feat_dim),
            config,
            ball,
            encoder,
            mobius,
            mlr,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ball(&self) -> &PoincareBall {
        &self.ball
    }

    /// The fixed input shift `μ`.
    pub fn feature_mean(&self) -> &[f64] {
        self.feature_mean.data()
    }

    /// Sets `μ`, rounded to f32 so checkpoints reproduce it exactly.
    pub fn set_feature_mean(&mut self, mean: &[f64]) -> Result<()> {
        check_dim(self.config.feat_dim, mean.len())?;
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature mean".into()));
        }
        let data = mean.iter().map(|&x| x as f32 as f64).collect();
        self.feature_mean = Tensor::row_vector(data);
        Ok(())
    }

    pub fn encoder_forward(&self, feat: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.config.feat_dim, feat.len())?;
        let centered: Vec<f64> = feat.iter().zip(self.feature_mean()).map(|(x, m)| x - m).collect();
        self.encoder.forward(&centered)
    }

    pub fn embed(&self, feat: &[f64]) -> Result<PoincarePoint> {
        let h = self.ball.exp0(&self.encoder_forward(feat)?)?;
        let z = self.mobius.forward(&self.ball, &h)?;
        if self.config.radius_bound > 0.0 {
            self.ball.bound_radius(&z, self.config.radius_bound)
        } else {
            Ok(z)
        }
    }

    pub fn decode(&self, z: &PoincarePoint) -> Result<Vec<f64>> {
        check_dim(self.config.latent_dim, z.dim())?;
        let mut out = self.decoder.forward(&self.ball.log0(z)?)?;
        out.iter_mut().zip(self.feature_mean()).for_each(|(x, m)| *x += m);
        Ok(out)
    }

    pub fn logits(&self, z: &PoincarePoint) -> Result<Vec<f64>> {
        self.mlr.logits(&self.ball, z)
    }

    pub fn probabilities(&self, z: &PoincarePoint) -> Result<Vec<f64>> {
        self.mlr.probabilities(&self.ball, z)
    }

    pub fn predict(&self, z: &PoincarePoint) -> Result<usize> {
        self.mlr.predict(&self.ball, z)
    }

    /// Pulls manifold parameters back into the ball and keeps class normals
    /// away from zero.
    pub fn enforce_invariants(&mut self) {
        let max = self.ball.max_norm();
        let b = self.mobius.bias.data_mut();
        let n = crate::manifold::norm(b);
        if n >= max {
            b.iter_mut().for_each(|v| *v *= max / n);
        }
        self.mlr.enforce_invariants(&self.ball);
    }

    pub fn tape_ball(&self) -> TapeBall {
        TapeBall::new(self.config.kappa)
    }

    fn split_vars<'v>(&self, vars: &'v [Var]) -> Result<[&'v [Var]; 4]> {
        let ne = 2 * self.encoder.layers().len();
        let nd = 2 * self.decoder.layers().len();
        check_dim(ne + 4 + nd, vars.len())?;
        Ok([&vars[..ne], &vars[ne..ne + 2], &vars[ne + 2..ne + 4], &vars[ne + 4..]])
    }

    /// Embeds a `batch × feat_dim` block on the tape.
    pub fn tape_embed(&self, t: &mut Tape, vars: &[Var], feats: Var) -> Result<Var> {
        let [enc, mob, _, _] = self.split_vars(vars)?;
        let tb = self.tape_ball();
        let mean = t.constant(self.feature_mean.clone());
        let feats = t.sub(feats, mean)?;
        let h = self.encoder.tape_forward(t, enc, feats)?;
        let h = tb.exp0(t, h)?;
        let z = self.mobius.tape_forward(t, &tb, mob, h)?;
        if self.config.radius_bound > 0.0 {
            tb.bound_radius(t, z, self.config.radius_bound)
        } else {
            Ok(z)
        }
    }

    /// Embedding, class logits and reconstruction for a feature block.
    /// `vars` come from binding [`Parameterized::params`] in order.
    pub fn tape_forward(&self, t: &mut Tape, vars: &[Var], feats: Var) -> Result<TapeOutputs> {
        let [_, _, mlr, dec] = self.split_vars(vars)?;
        let tb = self.tape_ball();
        let embedding = self.tape_embed(t, vars, feats)?;
        let logits = self.mlr.tape_logits(t, &tb, mlr, embedding)?;
        let tangent = tb.log0(t, embedding)?;
        let reconstruction = self.decoder.tape_forward(t, dec, tangent)?;
        let mean = t.constant(self.feature_mean.clone());
        let reconstruction = t.add(reconstruction, mean)?;
        Ok(TapeOutputs {
            embedding,
            logits,
            reconstruction,
        })
    }
}

impl Parameterized for HypModel {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut ps = prefixed("encoder", self.encoder.params());
        ps.extend(prefixed("mobius", self.mobius.params()));
        ps.extend(prefixed("mlr", self.mlr.params()));
        ps.extend(prefixed("decoder", self.decoder.params()));
        ps
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut ps = prefixed_mut("encoder", self.encoder.params_mut());
        ps.extend(prefixed_mut("mobius", self.mobius.params_mut()));
        ps.extend(prefixed_mut("mlr", self.mlr.params_mut()));
        ps.extend(prefixed_mut("decoder", self.decoder.params_mut()));
        ps
    }
}
