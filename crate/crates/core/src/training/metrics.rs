use std::io::Write;

use crate::error::{Error, Result};
use crate::hyp_nn::{HypModel, Parameterized};
use crate::parallel::map_indexed;
use crate::stats::spearman;
use crate::synth_data::{ancestor_features, HierRecord};

use super::losses::{nll_loss, rec_loss, relative_error};

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub loss_hyper: f64,
    pub loss_rec: f64,
    pub acc: f64,
    pub spearman_radius_depth: f64,
}

pub const METRICS_HEADER: &str = "step,lr,loss_hyper,loss_rec,acc,spearman_radius_depth";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.lr, self.loss_hyper, self.loss_rec, self.acc, self.spearman_radius_depth
        )
    }
}

pub fn write_metrics<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Held-out quality of a stage-2 model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub nll: f64,
    pub rec_loss: f64,
    /// Mean `‖c − c'‖ / ‖c‖`.
    pub rec_rel_err: f64,
    pub spearman_radius_depth: f64,
    pub mean_leaf_radius: f64,
}

struct RecordEval {
    radius: f64,
    correct: bool,
    probs: Vec<f64>,
    rec: f64,
    rel: f64,
}

/// Depth/radius pairs where every record contributes its ancestors at
/// levels `0..L` (mean features over `records`) and itself at depth `L`.
pub fn radius_depth_pairs(model: &HypModel, records: &[HierRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = records.first() else {
        return Err(Error::usage("empty dataset"));
    };
    let depth = first.depth();
    let mut node_radius = Vec::with_capacity(depth);
    for level in 0..depth {
        let anc = ancestor_features(records, level)?;
        let radii = map_indexed(anc.len(), |i| model.embed(&anc[i].feat).map(|z| model.ball().radius(&z)));
        let radii = radii.into_iter().collect::<Result<Vec<_>>>()?;
        node_radius.push(anc.iter().map(|a| a.node).zip(radii).collect::<std::collections::BTreeMap<_, _>>());
    }
    let leaf_radius = map_indexed(records.len(), |i| {
        model.embed(&records[i].feat).map(|z| model.ball().radius(&z))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut depths = Vec::with_capacity(records.len() * (depth + 1));
    let mut radii = Vec::with_capacity(records.len() * (depth + 1));
    for (r, lr) in records.iter().zip(leaf_radius) {
        for (level, nodes) in node_radius.iter().enumerate() {
            let node = if level == 0 { 0 } else { r.path[level - 1] };
            depths.push(level as f64);
            radii.push(nodes[&node]);
        }
        depths.push(depth as f64);
        radii.push(lr);
    }
    Ok((depths, radii))
}

pub fn radius_depth_spearman(model: &HypModel, records: &[HierRecord]) -> Result<f64> {
    let (d, r) = radius_depth_pairs(model, records)?;
    Ok(spearman(&d, &r))
}

pub fn evaluate(model: &HypModel, records: &[HierRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::usage("empty dataset"));
    }
    let per = map_indexed(records.len(), |i| -> Result<RecordEval> {
        let r = &records[i];
        let z = model.embed(&r.feat)?;
        let probs = model.probabilities(&z)?;
        let pred = crate::hyp_nn::argmax(&probs);
        let c = model.decode(&z)?;
        Ok(RecordEval {
            radius: model.ball().radius(&z),
            correct: pred == r.leaf,
            probs,
            rec: rec_loss(&r.feat, &c)?,
            rel: relative_error(&r.feat, &c),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let labels: Vec<usize> = records.iter().map(|r| r.leaf).collect();
    let probs: Vec<Vec<f64>> = per.iter().map(|e| e.probs.clone()).collect();
    Ok(EvalReport {
        accuracy: per.iter().filter(|e| e.correct).count() as f64 / n,
        nll: nll_loss(&probs, &labels)?,
        rec_loss: per.iter().map(|e| e.rec).sum::<f64>() / n,
        rec_rel_err: per.iter().map(|e| e.rel).sum::<f64>() / n,
        spearman_radius_depth: radius_depth_spearman(model, records)?,
        mean_leaf_radius: per.iter().map(|e| e.radius).sum::<f64>() / n,
    })
}

/// Rounds every parameter to the nearest `f32`, matching what a checkpoint
/// stores.
pub fn round_to_f32<P: Parameterized>(model: &mut P) {
    for p in model.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}
