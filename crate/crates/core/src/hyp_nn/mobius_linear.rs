use rand::Rng;

use super::mlp::glorot_bound;
use super::ops::TapeBall;
use super::params::{ParamKind, ParamMut, ParamRef, Parameterized};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Result};
use crate::manifold::{PoincareBall, PoincarePoint};

/// Möbius version of a linear layer: `exp_0(W · log_0(x)) ⊕ b`.
///
/// `W` is Euclidean, the bias `b` is a point of the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusLinear {
    /// `out × in`.
    pub weight: Tensor,
    /// `1 × out`, a ball point.
    pub bias: Tensor,
}

impl MobiusLinear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        MobiusLinear {
            weight: Tensor::zeros(out_dim, in_dim),
            bias: Tensor::zeros(1, out_dim),
        }
    }

    /// Glorot-uniform weight, bias at the origin.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        let b = glorot_bound(in_dim, out_dim);
        l.weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-b..b));
        l
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn bias_point(&self, ball: &PoincareBall) -> Result<PoincarePoint> {
        ball.project(self.bias.data())
    }

    /// Plain forward pass; `ball` must have dimension `out_dim`.
    pub fn forward(&self, ball: &PoincareBall, x: &PoincarePoint) -> Result<PoincarePoint> {
        check_dim(self.in_dim(), x.dim())?;
        let in_ball = PoincareBall::new(self.in_dim(), ball.curvature())?;
        let v = in_ball.log0(x)?;
        let wv: Vec<f64> = (0..self.out_dim())
            .map(|o| self.weight.row(o).iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let h = ball.exp0(&wv)?;
        ball.mobius_add(&h, &self.bias_point(ball)?)
    }

    pub fn tape_forward(&self, t: &mut Tape, tb: &TapeBall, vars: &[Var], x: Var) -> Result<Var> {
        check_dim(2, vars.len())?;
        let v = tb.log0(t, x)?;
        let wv = t.matmul_t(v, vars[0])?;
        let h = tb.exp0(t, wv)?;
        tb.mobius_add(t, h, vars[1])
    }
}

impl Parameterized for MobiusLinear {
    fn params(&self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: "weight".into(),
                value: &self.weight,
                kind: ParamKind::Euclidean,
            },
            ParamRef {
                name: "bias".into(),
                value: &self.bias,
                kind: ParamKind::Manifold,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "weight".into(),
                value: &mut self.weight,
                kind: ParamKind::Euclidean,
            },
            ParamMut {
                name: "bias".into(),
                value: &mut self.bias,
                kind: ParamKind::Manifold,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weight_origin_bias_is_identity() {
        let ball = PoincareBall::unit(3).unwrap();
        let l = MobiusLinear {
            weight: Tensor::identity(3),
            bias: Tensor::zeros(1, 3),
        };
        let x = ball.project(&[0.2, -0.5, 0.1]).unwrap();
        let y = l.forward(&ball, &x).unwrap();
        for (a, b) in y.coords().iter().zip(x.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_weight_returns_bias() {
        let ball = PoincareBall::unit(2).unwrap();
        let mut l = MobiusLinear::zeros(3, 2);
        l.bias = Tensor::row_vector(vec![0.3, -0.1]);
        let x = PoincareBall::unit(3).unwrap().project(&[0.5, 0.1, 0.2]).unwrap();
        assert_eq!(l.forward(&ball, &x).unwrap().coords(), &[0.3, -0.1]);
    }

    #[test]
    fn output_stays_in_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ball = PoincareBall::unit(4).unwrap();
        let mut l = MobiusLinear::glorot(4, 4, &mut rng);
        l.weight.data_mut().iter_mut().for_each(|w| *w *= 20.0);
        l.bias = Tensor::row_vector(vec![0.5, 0.5, -0.3, 0.2]);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = ball.project(&v).unwrap();
            let y = l.forward(&ball, &x).unwrap();
            assert!(y.norm() <= ball.max_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let ball = PoincareBall::unit(2).unwrap();
        let l = MobiusLinear::zeros(3, 2);
        assert!(l.forward(&ball, &ball.origin()).is_err());
    }
}
