//! Predicting latent edit directions from feature-space deltas, and a
//! simulated text/image modality gap for cross-modal edits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Error, Result};
use crate::hyp_nn::params::{prefixed, prefixed_mut};
use crate::hyp_nn::{Activation, EuclideanMLP, HypModel, ParamMut, ParamRef, Parameterized};
use crate::manifold::{PoincareBall, PoincarePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapperConfig {
    pub feat_dim: usize,
    pub latent_dim: usize,
    pub hyp_hidden: usize,
    pub feat_hidden: usize,
    pub delta_hidden: usize,
    pub fusion_hidden: usize,
}

impl MapperConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.feat_dim,
            self.latent_dim,
            self.hyp_hidden,
            self.feat_hidden,
            self.delta_hidden,
            self.fusion_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::usage("mapper dimensions must be positive"));
        }
        Ok(())
    }

    fn fusion_dims(&self) -> [usize; 3] {
        [
            self.hyp_hidden + self.feat_hidden + self.delta_hidden,
            self.fusion_hidden,
            self.latent_dim,
        ]
    }
}

/// Three single-layer branches (over `log_0(c_h1)`, the source feature and
/// the feature delta) whose outputs are concatenated and fed to a fusion
/// MLP. The output is a tangent vector at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMapper {
    config: MapperConfig,
    pub hyp_branch: EuclideanMLP,
    pub feat_branch: EuclideanMLP,
    pub delta_branch: EuclideanMLP,
    pub fusion: EuclideanMLP,
}

impl DeltaMapper {
    pub fn zeros(config: MapperConfig) -> Result<Self> {
        config.validate()?;
        let t = Activation::Tanh;
        Ok(DeltaMapper {
            hyp_branch: EuclideanMLP::zeros(&[config.latent_dim, config.hyp_hidden], t, t)?,
            feat_branch: EuclideanMLP::zeros(&[config.feat_dim, config.feat_hidden], t, t)?,
            delta_branch: EuclideanMLP::zeros(&[config.feat_dim, config.delta_hidden], t, t)?,
            fusion: EuclideanMLP::zeros(&config.fusion_dims(), t, Activation::Identity)?,
            config,
        })
    }

    pub fn init<R: Rng>(config: MapperConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let t = Activation::Tanh;
        Ok(DeltaMapper {
            hyp_branch: EuclideanMLP::glorot(&[config.latent_dim, config.hyp_hidden], t, t, rng)?,
            feat_branch: EuclideanMLP::glorot(&[config.feat_dim, config.feat_hidden], t, t, rng)?,
            delta_branch: EuclideanMLP::glorot(&[config.feat_dim, config.delta_hidden], t, t, rng)?,
            fusion: EuclideanMLP::glorot(&config.fusion_dims(), t, Activation::Identity, rng)?,
            config,
        })
    }

    pub fn config(&self) -> &MapperConfig {
        &self.config
    }

    /// Predicted tangent delta at the origin for an edit of `c_h1` (whose
    /// feature is `i1`) along the feature delta `delta_i`.
    pub fn predict_delta(
        &self,
        ball: &PoincareBall,
        c_h1: &PoincarePoint,
        i1: &[f64],
        delta_i: &[f64],
    ) -> Result<Vec<f64>> {
        check_dim(self.config.latent_dim, c_h1.dim())?;
        self.predict_from_tangent(&ball.log0(c_h1)?, i1, delta_i)
    }

    /// As [`predict_delta`](Self::predict_delta), taking `log_0(c_h1)`.
    pub fn predict_from_tangent(&self, u: &[f64], i1: &[f64], delta_i: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.config.latent_dim, u.len())?;
        check_dim(self.config.feat_dim, i1.len())?;
        check_dim(self.config.feat_dim, delta_i.len())?;
        let mut h = self.hyp_branch.forward(u)?;
        h.extend(self.feat_branch.forward(i1)?);
        h.extend(self.delta_branch.forward(delta_i)?);
        self.fusion.forward(&h)
    }

    fn split_vars<'v>(&self, vars: &'v [Var]) -> Result<[&'v [Var]; 4]> {
        let n = [&self.hyp_branch, &self.feat_branch, &self.delta_branch, &self.fusion].map(|m| 2 * m.layers().len());
        check_dim(n.iter().sum(), vars.len())?;
        let (a, rest) = vars.split_at(n[0]);
        let (b, rest) = rest.split_at(n[1]);
        let (c, d) = rest.split_at(n[2]);
        Ok([a, b, c, d])
    }

    /// Batched prediction on the tape from tangent codes, features and
    /// feature deltas (`batch × ·` blocks).
    pub fn tape_predict(&self, t: &mut Tape, vars: &[Var], u: Var, i1: Var, delta_i: Var) -> Result<Var> {
        let [hv, fv, dv, uv] = self.split_vars(vars)?;
        let a = self.hyp_branch.tape_forward(t, hv, u)?;
        let b = self.feat_branch.tape_forward(t, fv, i1)?;
        let c = self.delta_branch.tape_forward(t, dv, delta_i)?;
        let h = t.concat(&[a, b, c])?;
        self.fusion.tape_forward(t, uv, h)
    }
}

impl Parameterized for DeltaMapper {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut ps = prefixed("hyp", self.hyp_branch.params());
        ps.extend(prefixed("feat", self.feat_branch.params()));
        ps.extend(prefixed("delta", self.delta_branch.params()));
        ps.extend(prefixed("fusion", self.fusion.params()));
        ps
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut ps = prefixed_mut("hyp", self.hyp_branch.params_mut());
        ps.extend(prefixed_mut("feat", self.feat_branch.params_mut()));
        ps.extend(prefixed_mut("delta", self.delta_branch.params_mut()));
        ps.extend(prefixed_mut("fusion", self.fusion.params_mut()));
        ps
    }
}

/// One supervised example for the mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub c_h1: PoincarePoint,
    pub i1: Vec<f64>,
    pub delta_i: Vec<f64>,
    /// `log_0(embed(b)) − log_0(embed(a))`.
    pub delta_ch: Vec<f64>,
}

pub fn make_training_pair(model: &HypModel, feat_a: &[f64], feat_b: &[f64]) -> Result<TrainingPair> {
    check_dim(feat_a.len(), feat_b.len())?;
    let za = model.embed(feat_a)?;
    let zb = model.embed(feat_b)?;
    let ua = model.ball().log0(&za)?;
    let ub = model.ball().log0(&zb)?;
    Ok(TrainingPair {
        c_h1: za,
        i1: feat_a.to_vec(),
        delta_i: feat_b.iter().zip(feat_a).map(|(b, a)| b - a).collect(),
        delta_ch: ub.iter().zip(&ua).map(|(b, a)| b - a).collect(),
    })
}

/// A frozen stand-in for the misalignment between two embedding spaces: an
/// orthogonal map `Q`, an offset `μ`, and relative noise of scale `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTransform {
    pub q: Tensor,
    pub offset: Vec<f64>,
    pub tau: f64,
}

impl GapTransform {
    /// `Q` is the Gram–Schmidt orthonormalisation of `I + εG`, where `G` has
    /// independent `N(0, 1/d)` entries; `μ` has `N(0, 1/d)` entries.
    pub fn new(dim: usize, eps: f64, tau: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("gap dimension must be positive"));
        }
        if !(eps >= 0.0 && tau >= 0.0 && eps.is_finite() && tau.is_finite()) {
            return Err(Error::usage("gap eps and tau must be finite and ≥ 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (dim as f64).sqrt();
        let mut m = Tensor::identity(dim);
        for v in m.data_mut() {
            *v += eps * s * rng.sample::<f64, _>(StandardNormal);
        }
        let offset = (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(GapTransform {
            q: gram_schmidt(&m)?,
            offset,
            tau,
        })
    }

    pub fn identity(dim: usize) -> Self {
        GapTransform {
            q: Tensor::identity(dim),
            offset: vec![0.0; dim],
            tau: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    fn rotate(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.q.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Q f + μ`: where a feature lands in the other space.
    pub fn apply(&self, feat: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), feat.len())?;
        Ok(self.rotate(feat).iter().zip(&self.offset).map(|(a, b)| a + b).collect())
    }

    /// `Q(b − a) + τ·‖b − a‖·g/√d` with `g` standard normal, so the noise has
    /// root-mean-square norm `τ‖b − a‖`. The offset cancels in the difference.
    pub fn simulate_text_delta<R: Rng>(&self, feat_a: &[f64], feat_b: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_dim(self.dim(), feat_a.len())?;
        check_dim(self.dim(), feat_b.len())?;
        let d: Vec<f64> = feat_b.iter().zip(feat_a).map(|(b, a)| b - a).collect();
        let scale = self.tau * crate::manifold::norm(&d) / (self.dim() as f64).sqrt();
        let mut out = self.rotate(&d);
        if self.tau > 0.0 {
            out.iter_mut()
                .for_each(|v| *v += scale * rng.sample::<f64, _>(StandardNormal));
        }
        Ok(out)
    }
}

/// Orthonormalises the rows of a square matrix.
fn gram_schmidt(m: &Tensor) -> Result<Tensor> {
    let n = m.rows();
    let mut q = Tensor::zeros(n, m.cols());
    for i in 0..n {
        let mut v = m.row(i).to_vec();
        for j in 0..i {
            let p: f64 = q.row(j).iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q.row(j)).for_each(|(x, y)| *x -= p * y);
        }
        let nv = crate::manifold::norm(&v);
        if nv < 1e-12 {
            return Err(Error::Numeric("gap matrix is singular".into()));
        }
        q.row_mut(i).iter_mut().zip(&v).for_each(|(x, y)| *x = y / nv);
    }
    Ok(q)
}
