use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{check_dim, Error, Result};
use crate::hyp_nn::ops::log_softmax;
use crate::hyp_nn::{HypModel, TapeOutputs};
use crate::stats::cosine;

/// Floor applied to probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the labelled classes.
pub fn nll_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_dim(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut s = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        let py = p
            .get(y)
            .ok_or_else(|| Error::usage(format!("label {y} out of range for {} classes", p.len())))?;
        s += py.max(PROB_FLOOR).ln();
    }
    Ok(-s / probs.len() as f64)
}

/// `‖c − c'‖ + 1 − cos(c, c')`.
///
/// When both vectors are zero the cosine counts as 1; when exactly one is,
/// it counts as 0.
pub fn rec_loss(c: &[f64], c_prime: &[f64]) -> Result<f64> {
    check_dim(c.len(), c_prime.len())?;
    let l2 = c.iter().zip(c_prime).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(l2 + 1.0 - cosine(c, c_prime))
}

/// Same form as [`rec_loss`], applied to latent deltas.
pub fn delta_loss(delta_true: &[f64], delta_pred: &[f64]) -> Result<f64> {
    rec_loss(delta_true, delta_pred)
}

/// `‖c − c'‖ / ‖c‖`, or `‖c'‖` when `c` is zero.
pub fn relative_error(c: &[f64], c_prime: &[f64]) -> f64 {
    let d = c.iter().zip(c_prime).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::usage(format!("label {y} out of range for {classes} classes")));
        }
        t.row_mut(i)[y] = 1.0;
    }
    Ok(t)
}

/// Mean NLL of `labels` under row-wise softmax of `logits`.
pub fn tape_nll(t: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let [rows, classes] = t.value(logits).shape();
    check_dim(rows, labels.len())?;
    let mask = t.constant(one_hot(labels, classes)?);
    let lp = log_softmax(t, logits, PROB_FLOOR)?;
    let picked = t.mul(lp, mask)?;
    let s = t.sum(picked);
    Ok(t.scalar_mul(s, -1.0 / rows as f64))
}

/// Row-wise [`rec_loss`] averaged over the batch.
pub fn tape_rec_loss(t: &mut Tape, c: Var, c_prime: Var) -> Result<Var> {
    let diff = t.sub(c, c_prime)?;
    let l2 = t.norm2(diff);
    let d = t.dot(c, c_prime)?;
    let na = t.norm2(c);
    let nb = t.norm2(c_prime);
    let prod = t.mul(na, nb)?;
    let (guard, both) = {
        let (a, b, p) = (t.value(na), t.value(nb), t.value(prod));
        let guard: Vec<f64> = p.data().iter().map(|&v| if v == 0.0 { 1.0 } else { 0.0 }).collect();
        let both: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| if x == 0.0 && y == 0.0 { 1.0 } else { 0.0 })
            .collect();
        let r = p.rows();
        (Tensor::new(guard, r, 1)?, Tensor::new(both, r, 1)?)
    };
    let guard = t.constant(guard);
    let both = t.constant(both);
    let den = t.add(prod, guard)?;
    let cos = t.div(d, den)?;
    let cos = t.add(cos, both)?;
    let one_minus = t.rsub_scalar(1.0, cos);
    let per_row = t.add(l2, one_minus)?;
    Ok(t.mean(per_row))
}

/// Stage-2 objective `L_hyper + λ·L_rec`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageIILoss {
    pub lambda: f64,
    /// Drops the classification term, for unlabelled fine-tuning.
    pub rec_only: bool,
}

impl Default for StageIILoss {
    fn default() -> Self {
        StageIILoss {
            lambda: 0.1,
            rec_only: false,
        }
    }
}

impl StageIILoss {
    pub fn new(lambda: f64, rec_only: bool) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::usage("lambda must be ≥ 0"));
        }
        Ok(StageIILoss { lambda, rec_only })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stage2Terms {
    pub total: Var,
    pub hyper: Var,
    pub rec: Var,
    pub outputs: TapeOutputs,
}

/// Records the stage-2 loss for a feature block and its labels.
pub fn stage2_loss(
    t: &mut Tape,
    model: &HypModel,
    vars: &[Var],
    feats: Var,
    labels: &[usize],
    loss: &StageIILoss,
) -> Result<Stage2Terms> {
    let outputs = model.tape_forward(t, vars, feats)?;
    let rec = tape_rec_loss(t, feats, outputs.reconstruction)?;
    let hyper = if loss.rec_only {
        t.constant(Tensor::scalar(0.0))
    } else {
        tape_nll(t, outputs.logits, labels)?
    };
    let total = if loss.rec_only {
        t.scalar_mul(rec, loss.lambda)
    } else if loss.lambda == 0.0 {
        hyper
    } else {
        let weighted = t.scalar_mul(rec, loss.lambda);
        t.add(hyper, weighted)?
    };
    Ok(Stage2Terms {
        total,
        hyper,
        rec,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyp_nn::params::bind;
    use crate::hyp_nn::{ModelConfig, Parameterized};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nll_examples() {
        let uniform = vec![vec![0.25; 4]; 3];
        assert!((nll_loss(&uniform, &[0, 3, 1]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(nll_loss(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        assert!((nll_loss(&[vec![0.7, 0.3]], &[0]).unwrap() - 0.35667494393873245).abs() < 1e-12);
        assert!(matches!(nll_loss(&[vec![0.5, 0.5]], &[2]), Err(Error::Usage(_))));
        let floored = nll_loss(&[vec![1.0, 0.0]], &[1]).unwrap();
        assert!((floored + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn rec_loss_examples() {
        let c = [0.6, -0.8, 0.0];
        assert_eq!(rec_loss(&c, &c).unwrap(), 0.0);
        let c2: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        assert!((rec_loss(&c, &c2).unwrap() - 1.0).abs() < 1e-15);
        assert!((rec_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - (2f64.sqrt() + 1.0)).abs() < 1e-15);
        assert_eq!(rec_loss(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn delta_loss_examples() {
        let d = [0.0, 0.6, 0.8];
        assert_eq!(delta_loss(&d, &d).unwrap(), 0.0);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        assert!((delta_loss(&d, &neg).unwrap() - 4.0).abs() < 1e-15);
        let d3 = [3.0, 4.0];
        assert!((delta_loss(&d3, &[0.0, 0.0]).unwrap() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn tape_rec_loss_matches_plain_with_zero_rows() {
        let a = Tensor::new(vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0, 4.0], 4, 2).unwrap();
        let b = Tensor::new(vec![0.5, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0], 4, 2).unwrap();
        let mut t = Tape::new();
        let va = t.param(a.clone());
        let vb = t.param(b.clone());
        let l = tape_rec_loss(&mut t, va, vb).unwrap();
        let plain: f64 = (0..4).map(|i| rec_loss(a.row(i), b.row(i)).unwrap()).sum::<f64>() / 4.0;
        assert!((t.scalar_value(l) - plain).abs() < 1e-15);
        let g = t.backward(l).unwrap();
        assert!(g.wrt(va).is_finite() && g.wrt(vb).is_finite());
    }

    #[test]
    fn tape_nll_matches_plain() {
        let logits = Tensor::new(vec![1.0, 2.0, 0.5, -3.0, 0.0, 4.0], 2, 3).unwrap();
        let mut t = Tape::new();
        let l = t.constant(logits.clone());
        let v = tape_nll(&mut t, l, &[2, 0]).unwrap();
        let probs: Vec<Vec<f64>> = (0..2).map(|i| crate::hyp_nn::softmax(logits.row(i))).collect();
        assert!((t.scalar_value(v) - nll_loss(&probs, &[2, 0]).unwrap()).abs() < 1e-13);
    }

    fn small_model(rng: &mut ChaCha8Rng) -> HypModel {
        let cfg = ModelConfig {
            feat_dim: 5,
            latent_dim: 3,
            encoder_hidden: vec![4],
            decoder_hidden: vec![4],
            num_classes: 3,
            kappa: 1.0,
            radius_bound: 3.0,
        };
        HypModel::init(cfg, rng).unwrap()
    }

    #[test]
    fn zero_lambda_is_exactly_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = small_model(&mut rng);
        let feats: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels = [0, 1, 2, 0, 1, 2];
        let mut t = Tape::new();
        let vars = bind(&mut t, &m.params(), true);
        let x = t.constant(Tensor::from_rows(&feats).unwrap());
        let terms = stage2_loss(&mut t, &m, &vars, x, &labels, &StageIILoss::new(0.0, false).unwrap()).unwrap();
        let nll = tape_nll(&mut t, terms.outputs.logits, &labels).unwrap();
        assert_eq!(t.scalar_value(terms.total), t.scalar_value(nll));
        let probs: Vec<Vec<f64>> = feats
            .iter()
            .map(|f| m.probabilities(&m.embed(f).unwrap()).unwrap())
            .collect();
        assert!((t.scalar_value(terms.total) - nll_loss(&probs, &labels).unwrap()).abs() < 1e-12);
        assert!(t.scalar_value(terms.total) >= 0.0);
    }

    #[test]
    fn rec_only_zeroes_the_classification_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = small_model(&mut rng);
        let mut t = Tape::new();
        let vars = bind(&mut t, &m.params(), true);
        let x = t.constant(Tensor::filled(2, 5, 0.3));
        let terms = stage2_loss(&mut t, &m, &vars, x, &[0, 1], &StageIILoss::new(0.1, true).unwrap()).unwrap();
        assert_eq!(t.scalar_value(terms.hyper), 0.0);
        assert!((t.scalar_value(terms.total) - 0.1 * t.scalar_value(terms.rec)).abs() < 1e-15);
    }
}
