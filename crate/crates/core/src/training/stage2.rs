use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{stage2_loss, StageIILoss};
use super::metrics::{evaluate, round_to_f32, EvalReport, MetricsRow};
use super::optim::Optimizer;
use crate::autodiff::{Tape, Tensor};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hyp_nn::params::{bind, collect_grads};
use crate::hyp_nn::{HypModel, Parameterized};
use crate::parallel::{map_indexed, partition};
use crate::synth_data::HierRecord;

/// Number of pieces a batch is cut into for gradient evaluation.
pub const GRAD_SHARDS: usize = 4;

/// Consecutive steps with artanh clamps that count as a numeric failure.
const CLAMP_STORM_STEPS: usize = 50;

#[derive(Debug, Clone)]
pub struct BatchGrads {
    pub grads: Vec<Tensor>,
    pub total: f64,
    pub hyper: f64,
    pub rec: f64,
    pub clamp_events: usize,
}

/// Loss terms and parameter gradients for one batch, evaluated in
/// [`GRAD_SHARDS`] fixed shards and summed in shard order.
pub fn batch_gradients(model: &HypModel, feats: &[&[f64]], labels: &[usize], loss: &StageIILoss) -> Result<BatchGrads> {
    let n = feats.len();
    if n == 0 {
        return Err(Error::usage("empty batch"));
    }
    let shards = partition(n, GRAD_SHARDS);
    let results = map_indexed(shards.len(), |s| -> Result<BatchGrads> {
        let range = shards[s].clone();
        let w = range.len() as f64 / n as f64;
        let mut t = Tape::new();
        let vars = bind(&mut t, &model.params(), true);
        let rows: Vec<Vec<f64>> = feats[range.clone()].iter().map(|f| f.to_vec()).collect();
        let x = t.constant(Tensor::from_rows(&rows)?);
        let terms = stage2_loss(&mut t, model, &vars, x, &labels[range], loss)?;
        let weighted = t.scalar_mul(terms.total, w);
        let g = t.backward(weighted)?;
        Ok(BatchGrads {
            grads: collect_grads(&g, &vars),
            total: t.scalar_value(weighted),
            hyper: w * t.scalar_value(terms.hyper),
            rec: w * t.scalar_value(terms.rec),
            clamp_events: t.clamp_events(),
        })
    });
    let mut acc: Option<BatchGrads> = None;
    for r in results {
        let r = r?;
        match &mut acc {
            None => acc = Some(r),
            Some(a) => {
                for (x, y) in a.grads.iter_mut().zip(&r.grads) {
                    x.add_assign(y);
                }
                a.total += r.total;
                a.hyper += r.hyper;
                a.rec += r.rec;
                a.clamp_events += r.clamp_events;
            }
        }
    }
    Ok(acc.expect("at least one shard"))
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub model: HypModel,
    pub metrics: Vec<MetricsRow>,
    /// Evaluation on the held-out records with the final (f32-rounded)
    /// parameters.
    pub eval: EvalReport,
    pub optimizer: Optimizer,
    pub clamp_events: usize,
}

/// Trains encoder, Möbius layer, classifier and decoder. One metrics row is
/// produced per epoch, evaluated on `val`; the last one after the
/// parameters have been rounded to `f32`.
/// Coordinate-wise mean of the training features.
pub fn feature_mean(records: &[HierRecord]) -> Vec<f64> {
    let dim = records.first().map_or(0, |r| r.feat.len());
    let mut mu = vec![0.0; dim];
    for r in records {
        mu.iter_mut().zip(&r.feat).for_each(|(m, x)| *m += x);
    }
    let n = records.len().max(1) as f64;
    mu.iter_mut().for_each(|m| *m /= n);
    mu
}

pub fn train_stage2(
    train: &[HierRecord],
    val: &[HierRecord],
    cfg: &RunConfig,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<Stage2Outcome> {
    let Some(first) = train.first() else {
        return Err(Error::usage("training set is empty"));
    };
    if val.is_empty() {
        return Err(Error::usage("validation set is empty"));
    }
    cfg.validate()?;
    let feat_dim = first.feat.len();
    let num_classes = train.iter().chain(val).map(|r| r.leaf).max().unwrap_or(0) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = HypModel::init(cfg.model_config(feat_dim, num_classes), &mut rng)?;
    if cfg.center_features {
        model.set_feature_mean(&feature_mean(train))?;
    }
    let mut opt = Optimizer::new(&model.params(), cfg.lr, cfg.lr_manifold, cfg.schedule());
    opt.adam.weight_decay = cfg.weight_decay;
    opt.naive_manifold = cfg.naive_euclidean_updates;
    let loss = cfg.stage2_loss();
    let ball = model.ball().clone();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut clamp_events = 0;
    let mut clamp_streak = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut hyper, mut rec, mut seen) = (0.0, 0.0, 0usize);
        let mut lr = opt.current_lr();
        for chunk in order.chunks(cfg.batch_size) {
            let feats: Vec<&[f64]> = chunk.iter().map(|&i| train[i].feat.as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].leaf).collect();
            let g = batch_gradients(&model, &feats, &labels, &loss)?;
            clamp_events += g.clamp_events;
            clamp_streak = if g.clamp_events > 0 { clamp_streak + 1 } else { 0 };
            if clamp_streak >= CLAMP_STORM_STEPS {
                return Err(Error::Numeric(format!(
                    "artanh clamped on {clamp_streak} consecutive steps (epoch {epoch})"
                )));
            }
            lr = opt.current_lr();
            opt.apply(model.params_mut(), &g.grads, &ball)?;
            model.enforce_invariants();
            hyper += g.hyper * chunk.len() as f64;
            rec += g.rec * chunk.len() as f64;
            seen += chunk.len();
        }
        if epoch + 1 == cfg.epochs {
            round_to_f32(&mut model);
        }
        let ev = evaluate(&model, val)?;
        let row = MetricsRow {
            step: opt.step,
            lr,
            loss_hyper: hyper / seen as f64,
            loss_rec: rec / seen as f64,
            acc: ev.accuracy,
            spearman_radius_depth: ev.spearman_radius_depth,
        };
        on_epoch(&row);
        metrics.push(row);
    }
    if cfg.epochs == 0 {
        round_to_f32(&mut model);
    }
    let eval = evaluate(&model, val)?;
    Ok(Stage2Outcome {
        model,
        metrics,
        eval,
        optimizer: opt,
        clamp_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(feat: Vec<f64>) -> HierRecord {
        HierRecord {
            feat,
            leaf: 0,
            path: vec![0],
        }
    }

    #[test]
    fn mean_is_coordinatewise() {
        let rs = [rec(vec![1.0, -2.0]), rec(vec![3.0, 0.0])];
        assert_eq!(feature_mean(&rs), vec![2.0, -1.0]);
        assert!(feature_mean(&[]).is_empty());
    }
}
