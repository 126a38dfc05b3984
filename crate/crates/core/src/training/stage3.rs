use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::tape_rec_loss;
use super::optim::Optimizer;
use crate::autodiff::{Tape, Tensor};
use crate::config::RunConfig;
use crate::delta_mapper::{DeltaMapper, GapTransform, MapperConfig};
use crate::error::{Error, Result};
use crate::hierarchy::apply_edit_origin;
use crate::hyp_nn::params::{bind, collect_grads};
use crate::hyp_nn::{HypModel, Parameterized};
use crate::parallel::{map_indexed, partition};
use crate::stats::cosine;
use crate::synth_data::HierRecord;

use super::stage2::GRAD_SHARDS;

/// Records between which the mapper learns to predict latent deltas:
/// `(a, b)` indices into the same record slice.
pub type Pair = (usize, usize);

/// Draws `n` ordered pairs. With probability `same_leaf_frac` the second
/// record shares the first one's leaf (and differs from it when the leaf
/// has more than one record); otherwise it is drawn uniformly.
pub fn sample_pairs<R: Rng>(records: &[HierRecord], n: usize, same_leaf_frac: f64, rng: &mut R) -> Result<Vec<Pair>> {
    if records.len() < 2 {
        return Err(Error::usage("need at least 2 records to form pairs"));
    }
    let mut by_leaf: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_leaf.entry(r.leaf).or_default().push(i);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(0..records.len());
        let b = if rng.random_bool(same_leaf_frac) {
            let peers = &by_leaf[&records[a].leaf];
            if peers.len() == 1 {
                a
            } else {
                let k = rng.random_range(0..peers.len() - 1);
                let k = if peers[k] == a { peers.len() - 1 } else { k };
                peers[k]
            }
        } else {
            rng.random_range(0..records.len())
        };
        out.push((a, b));
    }
    Ok(out)
}

/// Tangent codes `log_0(embed(f))` of every record under a frozen model.
pub fn tangent_codes(model: &HypModel, records: &[HierRecord]) -> Result<Vec<Vec<f64>>> {
    map_indexed(records.len(), |i| {
        let z = model.embed(&records[i].feat)?;
        model.ball().log0(&z)
    })
    .into_iter()
    .collect()
}

/// One line of the stage-3 training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage3Row {
    pub step: usize,
    pub lr: f64,
    pub loss_delta: f64,
    pub val_cosine: f64,
}

pub const STAGE3_HEADER: &str = "step,lr,loss_delta,val_cosine";

impl Stage3Row {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.step, self.lr, self.loss_delta, self.val_cosine)
    }
}

/// Held-out quality of a trained mapper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage3Report {
    /// Mean cosine between true and predicted latent deltas.
    pub mean_cosine: f64,
    /// Fraction of same-leaf edits that keep the source's predicted label.
    pub same_leaf_retention: f64,
    /// Fraction of cross-leaf edits driven by simulated text deltas that
    /// raise the log-probability of the target's leaf.
    pub cross_modal_success: f64,
}

#[derive(Debug, Clone)]
pub struct Stage3Outcome {
    pub mapper: DeltaMapper,
    /// Training loss of every step, before the update.
    pub losses: Vec<f64>,
    pub metrics: Vec<Stage3Row>,
    pub report: Stage3Report,
    pub optimizer: Optimizer,
}

/// Held-out evaluation pairs per report.
const EVAL_PAIRS: usize = 1000;

/// Steps between two stage-3 log rows.
const LOG_EVERY: usize = 100;

struct PairBlock {
    u: Tensor,
    i1: Tensor,
    di: Tensor,
    target: Tensor,
}

fn block(records: &[HierRecord], codes: &[Vec<f64>], pairs: &[Pair]) -> Result<PairBlock> {
    let u: Vec<&[f64]> = pairs.iter().map(|&(a, _)| codes[a].as_slice()).collect();
    let i1: Vec<&[f64]> = pairs.iter().map(|&(a, _)| records[a].feat.as_slice()).collect();
    let di: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| records[b].feat.iter().zip(&records[a].feat).map(|(x, y)| x - y).collect())
        .collect();
    let target: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| codes[b].iter().zip(&codes[a]).map(|(x, y)| x - y).collect())
        .collect();
    Ok(PairBlock {
        u: Tensor::from_rows(&u)?,
        i1: Tensor::from_rows(&i1)?,
        di: Tensor::from_rows(&di)?,
        target: Tensor::from_rows(&target)?,
    })
}

/// Mean delta loss and its gradients over a batch of pairs, in
/// [`GRAD_SHARDS`] fixed shards summed in order.
pub fn mapper_gradients(
    mapper: &DeltaMapper,
    records: &[HierRecord],
    codes: &[Vec<f64>],
    pairs: &[Pair],
) -> Result<(f64, Vec<Tensor>)> {
    if pairs.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let shards = partition(pairs.len(), GRAD_SHARDS);
    let parts = map_indexed(shards.len(), |s| -> Result<(f64, Vec<Tensor>)> {
        let range = shards[s].clone();
        let w = range.len() as f64 / pairs.len() as f64;
        let b = block(records, codes, &pairs[range])?;
        let mut t = Tape::new();
        let vars = bind(&mut t, &mapper.params(), true);
        let u = t.constant(b.u);
        let i1 = t.constant(b.i1);
        let di = t.constant(b.di);
        let target = t.constant(b.target);
        let pred = mapper.tape_predict(&mut t, &vars, u, i1, di)?;
        let loss = tape_rec_loss(&mut t, target, pred)?;
        let loss = t.scalar_mul(loss, w);
        let g = t.backward(loss)?;
        Ok((t.scalar_value(loss), collect_grads(&g, &vars)))
    });
    let mut total = 0.0;
    let mut grads: Option<Vec<Tensor>> = None;
    for p in parts {
        let (l, g) = p?;
        total += l;
        match &mut grads {
            None => grads = Some(g),
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
        }
    }
    Ok((total, grads.expect("at least one shard")))
}

/// Mean cosine between true and predicted deltas over `pairs`.
pub fn mean_delta_cosine(
    mapper: &DeltaMapper,
    records: &[HierRecord],
    codes: &[Vec<f64>],
    pairs: &[Pair],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("no pairs"));
    }
    let cos = map_indexed(pairs.len(), |k| -> Result<f64> {
        let (a, b) = pairs[k];
        let di: Vec<f64> = records[b].feat.iter().zip(&records[a].feat).map(|(x, y)| x - y).collect();
        let truth: Vec<f64> = codes[b].iter().zip(&codes[a]).map(|(x, y)| x - y).collect();
        let pred = mapper.predict_from_tangent(&codes[a], &records[a].feat, &di)?;
        Ok(cosine(&truth, &pred))
    });
    let cos = cos.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(cos.iter().sum::<f64>() / cos.len() as f64)
}

/// Same-leaf retention and cross-modal success on `records`, with pairs
/// and gap noise drawn from `seed`.
pub fn edit_report(
    model: &HypModel,
    mapper: &DeltaMapper,
    records: &[HierRecord],
    gap: &GapTransform,
    seed: u64,
) -> Result<Stage3Report> {
    let codes = tangent_codes(model, records)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_pairs = sample_pairs(records, EVAL_PAIRS, 0.0, &mut rng)?;
    let same = sample_pairs(records, EVAL_PAIRS, 1.0, &mut rng)?;
    let cross: Vec<Pair> = sample_pairs(records, 4 * EVAL_PAIRS, 0.0, &mut rng)?
        .into_iter()
        .filter(|&(a, b)| records[a].leaf != records[b].leaf)
        .take(EVAL_PAIRS)
        .collect();
    let ball = model.ball();

    let mut kept = 0usize;
    for &(a, b) in &same {
        let za = ball.exp0(&codes[a])?;
        let di: Vec<f64> = records[b].feat.iter().zip(&records[a].feat).map(|(x, y)| x - y).collect();
        let d = mapper.predict_from_tangent(&codes[a], &records[a].feat, &di)?;
        let edited = apply_edit_origin(ball, &za, &d, 1.0)?;
        kept += usize::from(model.predict(&edited)? == model.predict(&za)?);
    }

    let mut moved = 0usize;
    for &(a, b) in &cross {
        let za = ball.exp0(&codes[a])?;
        let dt = gap.simulate_text_delta(&records[a].feat, &records[b].feat, &mut rng)?;
        let d = mapper.predict_from_tangent(&codes[a], &records[a].feat, &dt)?;
        let edited = apply_edit_origin(ball, &za, &d, 1.0)?;
        let target = records[b].leaf;
        let before = model.probabilities(&za)?[target];
        let after = model.probabilities(&edited)?[target];
        moved += usize::from(after.max(1e-300).ln() > before.max(1e-300).ln());
    }

    Ok(Stage3Report {
        mean_cosine: mean_delta_cosine(mapper, records, &codes, &cos_pairs)?,
        same_leaf_retention: kept as f64 / same.len() as f64,
        cross_modal_success: moved as f64 / cross.len().max(1) as f64,
    })
}

/// Trains a fresh mapper against the frozen `model`. Pairs come from
/// `train`; the log and the final report use `val`.
pub fn train_stage3(
    model: &HypModel,
    train: &[HierRecord],
    val: &[HierRecord],
    cfg: &RunConfig,
    mut on_log: impl FnMut(&Stage3Row),
) -> Result<Stage3Outcome> {
    let Some(first) = train.first() else {
        return Err(Error::usage("training set is empty"));
    };
    if val.len() < 2 {
        return Err(Error::usage("validation set needs at least 2 records"));
    }
    cfg.validate()?;
    let mc: MapperConfig = cfg.mapper_config(first.feat.len(), model.config().latent_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mapper = DeltaMapper::init(mc, &mut rng)?;
    let mut opt = Optimizer::new(
        &mapper.params(),
        cfg.stage3_lr,
        cfg.lr_manifold,
        super::optim::StepDecay {
            step_size: cfg.stage3_step_size,
            gamma: cfg.gamma,
        },
    );
    opt.adam.weight_decay = cfg.weight_decay;

    let codes = tangent_codes(model, train)?;
    let val_codes = tangent_codes(model, val)?;
    let val_pairs = sample_pairs(val, EVAL_PAIRS, 0.0, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed))?;
    let ball = model.ball().clone();

    let mut losses = Vec::with_capacity(cfg.stage3_steps);
    let mut metrics = Vec::new();
    let mut window = 0.0;
    let mut in_window = 0usize;
    for step in 0..cfg.stage3_steps {
        let pairs = sample_pairs(train, cfg.stage3_batch_size, cfg.same_leaf_frac, &mut rng)?;
        let (loss, grads) = mapper_gradients(&mapper, train, &codes, &pairs)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("delta loss became {loss} at step {step}")));
        }
        let lr = opt.current_lr();
        opt.apply(mapper.params_mut(), &grads, &ball)?;
        losses.push(loss);
        window += loss;
        in_window += 1;
        if (step + 1) % LOG_EVERY == 0 || step + 1 == cfg.stage3_steps {
            let row = Stage3Row {
                step: step + 1,
                lr,
                loss_delta: window / in_window as f64,
                val_cosine: mean_delta_cosine(&mapper, val, &val_codes, &val_pairs)?,
            };
            on_log(&row);
            metrics.push(row);
            window = 0.0;
            in_window = 0;
        }
    }
    super::metrics::round_to_f32(&mut mapper);
    let gap = GapTransform::new(first.feat.len(), cfg.gap_eps, cfg.gap_tau, cfg.seed)?;
    let report = edit_report(model, &mapper, val, &gap, cfg.seed.wrapping_add(1))?;
    Ok(Stage3Outcome {
        mapper,
        losses,
        metrics,
        report,
        optimizer: opt,
    })
}
