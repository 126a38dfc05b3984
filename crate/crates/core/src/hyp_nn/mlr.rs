use rand::Rng;
use rand_distr::StandardNormal;

use super::ops::TapeBall;
use super::params::{ParamKind, ParamMut, ParamRef, Parameterized};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Error, Result};
use crate::manifold::{dot, norm, norm_sq, PoincareBall, PoincarePoint};

/// Smallest allowed norm for a class normal `a_k`.
pub const MIN_NORMAL_NORM: f64 = 1e-8;

/// Multinomial logistic regression on the ball.
///
/// Class `k` has an offset `p_k` in the ball and a normal `a_k` in the
/// tangent space at `p_k`. The logit is
///
/// ```text
/// λ_{p_k}‖a_k‖/√c · asinh( 2√c⟨−p_k ⊕ x, a_k⟩ / ((1 − c‖−p_k ⊕ x‖²)‖a_k‖) )
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicMLR {
    /// `K × n`, one ball point per row.
    pub offsets: Tensor,
    /// `K × n`, one tangent vector per row.
    pub normals: Tensor,
}

impl HyperbolicMLR {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        HyperbolicMLR {
            offsets: Tensor::zeros(classes, dim),
            normals: Tensor::zeros(classes, dim),
        }
    }

    /// Offsets at the origin, normals Gaussian rescaled to unit norm.
    pub fn init<R: Rng>(classes: usize, dim: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(classes, dim);
        for k in 0..classes {
            let row = m.normals.row_mut(k);
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let n = norm(row);
            row.iter_mut().for_each(|v| *v /= n);
        }
        m
    }

    pub fn num_classes(&self) -> usize {
        self.offsets.rows()
    }

    pub fn dim(&self) -> usize {
        self.offsets.cols()
    }

    pub fn logits(&self, ball: &PoincareBall, x: &PoincarePoint) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.dim())?;
        let c = ball.curvature().kappa();
        let s = c.sqrt();
        (0..self.num_classes())
            .map(|k| {
                let p = ball.project(self.offsets.row(k))?;
                let a = self.normals.row(k);
                let u = ball.mobius_add(&p.neg(), x)?;
                let an = norm(a);
                if an == 0.0 {
                    return Err(Error::Numeric(format!("class normal {k} is zero")));
                }
                let arg = 2.0 * s * dot(u.coords(), a) / ((1.0 - c * norm_sq(u.coords())) * an);
                Ok(ball.conformal_factor(&p) * an / s * arg.asinh())
            })
            .collect()
    }

    pub fn probabilities(&self, ball: &PoincareBall, x: &PoincarePoint) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(ball, x)?))
    }

    pub fn predict(&self, ball: &PoincareBall, x: &PoincarePoint) -> Result<usize> {
        Ok(argmax(&self.logits(ball, x)?))
    }

    pub fn tape_logits(&self, t: &mut Tape, tb: &TapeBall, vars: &[Var], x: Var) -> Result<Var> {
        check_dim(2, vars.len())?;
        tb.mlr_logits(t, x, vars[0], vars[1])
    }

    /// Re-projects offsets into the ball and lifts tiny normals to
    /// [`MIN_NORMAL_NORM`].
    pub fn enforce_invariants(&mut self, ball: &PoincareBall) {
        for k in 0..self.num_classes() {
            let row = self.offsets.row_mut(k);
            let n = norm(row);
            if n >= ball.max_norm() {
                let s = ball.max_norm() / n;
                row.iter_mut().for_each(|v| *v *= s);
            }
            let a = self.normals.row_mut(k);
            let n = norm(a);
            if n < MIN_NORMAL_NORM {
                if n == 0.0 {
                    a[0] = MIN_NORMAL_NORM;
                } else {
                    let s = MIN_NORMAL_NORM / n;
                    a.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }
}

impl Parameterized for HyperbolicMLR {
    fn params(&self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: "offsets".into(),
                value: &self.offsets,
                kind: ParamKind::Manifold,
            },
            ParamRef {
                name: "normals".into(),
                value: &self.normals,
                kind: ParamKind::Euclidean,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "offsets".into(),
                value: &mut self.offsets,
                kind: ParamKind::Manifold,
            },
            ParamMut {
                name: "normals".into(),
                value: &mut self.normals,
                kind: ParamKind::Euclidean,
            },
        ]
    }
}

/// Max-shifted softmax; the same arithmetic as the tape version.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
