//! Radius-controlled manipulation of embeddings: child sampling around a
//! rescaled parent, interpolation on a sphere of fixed radius, fusion of two
//! codes at a chosen level, and tangent edits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hyp_nn::HypModel;
use crate::manifold::{PoincareBall, PoincarePoint, TangentVector};
use crate::stats::euclidean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub r_parent: f64,
    /// Largest allowed distance between a child and the rescaled parent.
    /// May be infinite.
    pub r_child: f64,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            r_parent: 5.5,
            r_child: 1.0,
            n: 20,
            sigma: 0.5,
            seed: 7,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, ball: &PoincareBall) -> Result<()> {
        if !(self.r_parent >= 0.0 && self.r_parent <= ball.max_radius()) {
            return Err(Error::usage(format!(
                "r_parent must be in [0, {:.4}], got {}",
                ball.max_radius(),
                self.r_parent
            )));
        }
        if !(self.r_child > 0.0) {
            return Err(Error::usage("r_child must be positive"));
        }
        if self.n == 0 {
            return Err(Error::usage("sample count must be ≥ 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::usage("sigma must be positive"));
        }
        Ok(())
    }
}

/// Geodesic points closer to the origin than this have no usable direction.
const DIRECTION_FLOOR: f64 = 1e-9;

fn rescale_direction(ball: &PoincareBall, m: &PoincarePoint, r: f64) -> Result<PoincarePoint> {
    if m.norm() < DIRECTION_FLOOR {
        return Err(Error::UndefinedDirection);
    }
    ball.set_radius(m, r)
}

fn nonzero(x: &PoincarePoint) -> Result<()> {
    if x.is_origin() {
        Err(Error::UndefinedDirection)
    } else {
        Ok(())
    }
}

/// Draws `cfg.n` children around `z_ref` moved to radius `cfg.r_parent`,
/// using a generator seeded with `cfg.seed`.
pub fn sample_children(ball: &PoincareBall, z_ref: &PoincarePoint, cfg: &SamplerConfig) -> Result<Vec<PoincarePoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_children_with(ball, z_ref, cfg, &mut rng)
}

/// Like [`sample_children`] but drawing from `rng`; `cfg.seed` is ignored.
///
/// Each candidate is `exp_p(σ·g)` with `g` standard normal. Candidates
/// further than `r_child` from the parent are pulled back along the geodesic
/// to distance exactly `r_child`.
pub fn sample_children_with<R: Rng>(
    ball: &PoincareBall,
    z_ref: &PoincarePoint,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<PoincarePoint>> {
    check_dim(ball.dim(), z_ref.dim())?;
    cfg.validate(ball)?;
    nonzero(z_ref)?;
    let parent = ball.set_radius(z_ref, cfg.r_parent)?;
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let g: Vec<f64> = (0..ball.dim())
            .map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cand = ball.exp_map(&TangentVector::new(parent.clone(), g)?)?;
        let d = ball.distance(&parent, &cand)?;
        if d <= cfg.r_child {
            out.push(cand);
        } else {
            out.push(ball.geodesic(&parent, &cand, cfg.r_child / d)?);
        }
    }
    Ok(out)
}

/// Point at `t` on the geodesic between `zi` and `zj` after both are moved
/// to radius `r`, moved back onto radius `r`.
///
/// Antipodal inputs at `t = 0.5` pass through the origin and fail with
/// [`Error::UndefinedDirection`].
pub fn interpolate_fixed_radius(
    ball: &PoincareBall,
    zi: &PoincarePoint,
    zj: &PoincarePoint,
    t: f64,
    r: f64,
) -> Result<PoincarePoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::usage(format!("interpolation parameter {t} outside [0, 1]")));
    }
    nonzero(zi)?;
    nonzero(zj)?;
    let a = ball.set_radius(zi, r)?;
    let b = ball.set_radius(zj, r)?;
    let m = ball.geodesic(&a, &b, t)?;
    rescale_direction(ball, &m, r)
}

/// `steps` evenly spaced points of [`interpolate_fixed_radius`], `t` from 0
/// to 1 inclusive.
pub fn interpolation_path(
    ball: &PoincareBall,
    zi: &PoincarePoint,
    zj: &PoincarePoint,
    r: f64,
    steps: usize,
) -> Result<Vec<(f64, PoincarePoint)>> {
    if steps < 2 {
        return Err(Error::usage("an interpolation path needs at least 2 steps"));
    }
    (0..steps)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            interpolate_fixed_radius(ball, zi, zj, t, r).map(|z| (t, z))
        })
        .collect()
}

/// Mixes two codes at radius `r_level` with weight `w` on `zb`, then places
/// the result at the larger of the two input radii.
pub fn fuse(ball: &PoincareBall, za: &PoincarePoint, zb: &PoincarePoint, r_level: f64, w: f64) -> Result<PoincarePoint> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::usage(format!("fusion weight {w} outside [0, 1]")));
    }
    nonzero(za)?;
    nonzero(zb)?;
    let a = ball.set_radius(za, r_level)?;
    let b = ball.set_radius(zb, r_level)?;
    let m = ball.geodesic(&a, &b, w)?;
    rescale_direction(ball, &m, ball.radius(za).max(ball.radius(zb)))
}

/// `exp_z(strength · delta)`, reading `delta` as a tangent vector at `z`.
pub fn apply_edit(ball: &PoincareBall, z: &PoincarePoint, delta: &[f64], strength: f64) -> Result<PoincarePoint> {
    check_dim(ball.dim(), delta.len())?;
    let v: Vec<f64> = delta.iter().map(|d| strength * d).collect();
    ball.exp_map(&TangentVector::new(z.clone(), v)?)
}

/// `exp_0(log_0(z) + strength · delta)`: the edit carried out in the chart
/// at the origin, where tangent differences of embeddings live.
pub fn apply_edit_origin(
    ball: &PoincareBall,
    z: &PoincarePoint,
    delta: &[f64],
    strength: f64,
) -> Result<PoincarePoint> {
    check_dim(ball.dim(), delta.len())?;
    if strength == 0.0 || delta.iter().all(|&d| d == 0.0) {
        return Ok(z.clone());
    }
    let mut u = ball.log0(z)?;
    u.iter_mut().zip(delta).for_each(|(a, d)| *a += strength * d);
    ball.exp0(&u)
}

/// Fraction of children whose classifier label equals that of their
/// reference, over all `refs` (children of reference `i` use seed
/// `cfg.seed + i`).
pub fn label_retention(model: &HypModel, refs: &[PoincarePoint], cfg: &SamplerConfig) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::usage("no reference codes"));
    }
    let mut kept = 0usize;
    let mut total = 0usize;
    for (i, z) in refs.iter().enumerate() {
        let label = model.predict(z)?;
        let c = SamplerConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..*cfg
        };
        for child in sample_children(model.ball(), z, &c)? {
            kept += usize::from(model.predict(&child)? == label);
            total += 1;
        }
    }
    Ok(kept as f64 / total as f64)
}

/// Mean pairwise Euclidean distance between decoded children, averaged over
/// `refs` (same seeding as [`label_retention`]).
pub fn decoded_diversity(model: &HypModel, refs: &[PoincarePoint], cfg: &SamplerConfig) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::usage("no reference codes"));
    }
    if cfg.n < 2 {
        return Err(Error::usage("diversity needs at least 2 children"));
    }
    let mut acc = 0.0;
    for (i, z) in refs.iter().enumerate() {
        let c = SamplerConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..*cfg
        };
        let decoded = sample_children(model.ball(), z, &c)?
            .iter()
            .map(|ch| model.decode(ch))
            .collect::<Result<Vec<_>>>()?;
        acc += mean_pairwise(&decoded, |a, b| euclidean(a, b));
    }
    Ok(acc / refs.len() as f64)
}

/// Mean of `dist` over all unordered pairs.
pub fn mean_pairwise<T>(items: &[T], dist: impl Fn(&T, &T) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            sum += dist(&items[i], &items[j]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
