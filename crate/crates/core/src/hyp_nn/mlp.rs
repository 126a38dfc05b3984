use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamKind, ParamMut, ParamRef, Parameterized};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Tensor,
    /// `1 × out`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully connected stack; stands in for the transformer encoder/decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanMLP {
    layers: Vec<DenseLayer>,
}

/// Uniform Glorot bound `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl EuclideanMLP {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::usage("an MLP needs at least one layer"));
        }
        for l in &layers {
            check_dim(l.out_dim(), l.bias.cols())?;
            if l.bias.rows() != 1 {
                return Err(Error::usage("bias must be a row vector"));
            }
        }
        for w in layers.windows(2) {
            check_dim(w[0].out_dim(), w[1].in_dim())?;
        }
        Ok(EuclideanMLP { layers })
    }

    /// Layers of widths `dims[0] → dims[1] → …`, hidden layers using
    /// `hidden`, the last one `output`. Weights zero, ready to be filled.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::usage("MLP needs input and output widths"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer {
                weight: Tensor::zeros(w[1], w[0]),
                bias: Tensor::zeros(1, w[1]),
                activation: if i == last { output } else { hidden },
            })
            .collect();
        Self::new(layers)
    }

    /// Glorot-uniform weights and zero biases.
    pub fn glorot<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(dims, hidden, output)?;
        for l in &mut mlp.layers {
            let b = glorot_bound(l.in_dim(), l.out_dim());
            l.weight
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-b..b));
        }
        Ok(mlp)
    }

    pub fn identity(n: usize) -> Self {
        EuclideanMLP {
            layers: vec![DenseLayer {
                weight: Tensor::identity(n),
                bias: Tensor::zeros(1, n),
                activation: Activation::Identity,
            }],
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.in_dim(), x.len())?;
        let mut h = x.to_vec();
        for l in &self.layers {
            let w = &l.weight;
            h = (0..l.out_dim())
                .map(|o| {
                    let z: f64 = w.row(o).iter().zip(&h).map(|(a, b)| a * b).sum();
                    l.activation.apply(z + l.bias.data()[o])
                })
                .collect();
        }
        Ok(h)
    }

    /// Forward pass on a tape; `vars` are this network's parameters in
    /// [`Parameterized::params`] order and `x` is `batch × in_dim`.
    pub fn tape_forward(&self, t: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        check_dim(2 * self.layers.len(), vars.len())?;
        let mut h = x;
        for (l, v) in self.layers.iter().zip(vars.chunks(2)) {
            let z = t.matmul_t(h, v[0])?;
            let z = t.add(z, v[1])?;
            h = match l.activation {
                Activation::Tanh => t.tanh(z),
                Activation::Identity => z,
            };
        }
        Ok(h)
    }
}

impl Parameterized for EuclideanMLP {
    fn params(&self) -> Vec<ParamRef<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamRef {
                        name: format!("{i}.weight"),
                        value: &l.weight,
                        kind: ParamKind::Euclidean,
                    },
                    ParamRef {
                        name: format!("{i}.bias"),
                        value: &l.bias,
                        kind: ParamKind::Euclidean,
                    },
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamMut {
                        name: format!("{i}.weight"),
                        value: &mut l.weight,
                        kind: ParamKind::Euclidean,
                    },
                    ParamMut {
                        name: format!("{i}.bias"),
                        value: &mut l.bias,
                        kind: ParamKind::Euclidean,
                    },
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_through() {
        let m = EuclideanMLP::identity(3);
        assert_eq!(m.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_network_gives_zero() {
        let m = EuclideanMLP::zeros(&[4, 6, 2], Activation::Tanh, Activation::Identity).unwrap();
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = EuclideanMLP::identity(3);
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let bad = vec![
            DenseLayer {
                weight: Tensor::zeros(3, 2),
                bias: Tensor::zeros(1, 3),
                activation: Activation::Tanh,
            },
            DenseLayer {
                weight: Tensor::zeros(2, 4),
                bias: Tensor::zeros(1, 2),
                activation: Activation::Identity,
            },
        ];
        assert!(EuclideanMLP::new(bad).is_err());
    }

    #[test]
    fn random_network_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = EuclideanMLP::glorot(&[8, 16, 4], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(m.forward(&x).unwrap().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn glorot_weights_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = EuclideanMLP::glorot(&[10, 6], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let b = glorot_bound(10, 6);
        assert!(m.layers()[0].weight.data().iter().all(|w| w.abs() < b));
        assert!(m.layers()[0].bias.data().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn tape_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = EuclideanMLP::glorot(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let xs = Tensor::new(vec![0.1, -0.4, 2.0, 1.0, 0.0, -1.0], 2, 3).unwrap();
        let mut t = Tape::new();
        let vars = super::super::params::bind(&mut t, &m.params(), false);
        let x = t.constant(xs.clone());
        let y = m.tape_forward(&mut t, &vars, x).unwrap();
        for i in 0..2 {
            let plain = m.forward(xs.row(i)).unwrap();
            for (a, b) in t.value(y).row(i).iter().zip(&plain) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
