use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::losses::{stage2_loss, tape_rec_loss, StageIILoss};
use crate::autodiff::{grad_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::delta_mapper::{DeltaMapper, MapperConfig};
use crate::error::Result;
use crate::hyp_nn::{HypModel, ModelConfig, Parameterized};

/// How many random draws the suite makes and what each one checks.
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub draws: usize,
    pub seed: u64,
    /// Rows in each random input block.
    pub batch: usize,
    /// Draw fresh parameters for every draw instead of using the given ones.
    pub reinit: bool,
    pub check: GradCheckOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            draws: 100,
            seed: 0,
            batch: 4,
            reinit: true,
            check: GradCheckOptions::default(),
        }
    }
}

/// Shapes used by the random-model variant of the suite.
pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        feat_dim: 6,
        latent_dim: 4,
        encoder_hidden: vec![5],
        decoder_hidden: vec![5, 5],
        num_classes: 4,
        kappa: 1.0,
        radius_bound: 3.0,
    }
}

pub fn small_mapper_config() -> MapperConfig {
    MapperConfig {
        feat_dim: 6,
        latent_dim: 4,
        hyp_hidden: 3,
        feat_hidden: 3,
        delta_hidden: 3,
        fusion_hidden: 4,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Result<Tensor> {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(data, rows, cols)
}

fn named(prefix: &str, p: &impl Parameterized) -> Vec<(String, Tensor)> {
    p.params()
        .into_iter()
        .map(|p| (format!("{prefix}.{}", p.name), p.value.clone()))
        .collect()
}

/// `Σ w ⊙ y`, a scalar that exercises every output entry.
fn project(t: &mut Tape, y: Var, w: &Tensor) -> Result<Var> {
    let w = t.constant(w.clone());
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

/// Finite-difference checks of every layer of the model (encoder, Möbius
/// layer, classifier, decoder), the Stage-II loss over all model parameters
/// and the delta loss over all mapper parameters.
///
/// Each draw uses fresh random inputs, and fresh parameters when
/// `opts.reinit` is set. The report keeps the worst error per parameter.
pub fn gradient_suite(model: &HypModel, mapper: &DeltaMapper, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        tol: opts.check.tol,
        params: Vec::new(),
    };
    let feat_dim = model.config().feat_dim;
    let n = model.config().latent_dim;
    let classes = model.config().num_classes;
    for d in 0..opts.draws {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(d as u64));
        let (model, mapper) = if opts.reinit {
            (
                HypModel::init(model.config().clone(), &mut rng)?,
                DeltaMapper::init(mapper.config().clone(), &mut rng)?,
            )
        } else {
            (model.clone(), mapper.clone())
        };
        let b = opts.batch;
        let feats = gaussian(&mut rng, b, feat_dim, 1.0)?;
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
        let w_hidden = gaussian(&mut rng, b, n, 1.0)?;
        let w_logits = gaussian(&mut rng, b, classes, 1.0)?;
        let w_feat = gaussian(&mut rng, b, feat_dim, 1.0)?;
        let tb = model.tape_ball();
        let ball = model.ball().clone();

        // inputs to the later layers are taken from the current model
        let points: Vec<Vec<f64>> = (0..b)
            .map(|i| model.embed(feats.row(i)).map(|z| z.into_vec()))
            .collect::<Result<_>>()?;
        let hidden: Vec<Vec<f64>> = (0..b)
            .map(|i| ball.exp0(&model.encoder_forward(feats.row(i))?).map(|h| h.into_vec()))
            .collect::<Result<_>>()?;
        let points = Tensor::from_rows(&points)?;
        let hidden = Tensor::from_rows(&hidden)?;
        let tangents = Tensor::from_rows(
            &(0..b)
                .map(|i| ball.log0(&ball.project(points.row(i))?))
                .collect::<Result<Vec<_>>>()?,
        )?;

        let enc = &model.encoder;
        report.merge(grad_check(
            |t, v| {
                let x = t.constant(feats.clone());
                let y = enc.tape_forward(t, v, x)?;
                project(t, y, &w_hidden)
            },
            &named("encoder", enc),
            opts.check,
        )?);

        let mob = &model.mobius;
        report.merge(grad_check(
            |t, v| {
                let x = t.constant(hidden.clone());
                let y = mob.tape_forward(t, &tb, v, x)?;
                project(t, y, &w_hidden)
            },
            &named("mobius", mob),
            opts.check,
        )?);

        let mlr = &model.mlr;
        report.merge(grad_check(
            |t, v| {
                let x = t.constant(points.clone());
                let y = mlr.tape_logits(t, &tb, v, x)?;
                project(t, y, &w_logits)
            },
            &named("mlr", mlr),
            opts.check,
        )?);

        let dec = &model.decoder;
        report.merge(grad_check(
            |t, v| {
                let x = t.constant(tangents.clone());
                let y = dec.tape_forward(t, v, x)?;
                project(t, y, &w_feat)
            },
            &named("decoder", dec),
            opts.check,
        )?);

        let loss = StageIILoss::default();
        report.merge(grad_check(
            |t, v| {
                let x = t.constant(feats.clone());
                Ok(stage2_loss(t, &model, v, x, &labels, &loss)?.total)
            },
            &named("stage2_loss", &model),
            opts.check,
        )?);

        let i1 = gaussian(&mut rng, b, feat_dim, 1.0)?;
        let di = gaussian(&mut rng, b, feat_dim, 1.0)?;
        let target = gaussian(&mut rng, b, n, 1.0)?;
        report.merge(grad_check(
            |t, v| {
                let u = t.constant(tangents.clone());
                let i1 = t.constant(i1.clone());
                let di = t.constant(di.clone());
                let target = t.constant(target.clone());
                let pred = mapper.tape_predict(t, v, u, i1, di)?;
                tape_rec_loss(t, target, pred)
            },
            &named("delta_loss", &mapper),
            opts.check,
        )?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (HypModel, DeltaMapper) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (
            HypModel::init(small_model_config(), &mut rng).unwrap(),
            DeltaMapper::init(small_mapper_config(), &mut rng).unwrap(),
        )
    }

    #[test]
    fn random_models_pass() {
        let (m, d) = small();
        let opts = SuiteOptions {
            draws: 5,
            ..SuiteOptions::default()
        };
        let r = gradient_suite(&m, &d, &opts).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert!(r.params.iter().any(|p| p.name.starts_with("stage2_loss.")));
        assert!(r.params.iter().any(|p| p.name.starts_with("delta_loss.")));
        assert!(r.params.iter().any(|p| p.name.starts_with("mobius.")));
    }

    #[test]
    fn corrupted_gradients_fail() {
        let (m, d) = small();
        let mut opts = SuiteOptions {
            draws: 1,
            ..SuiteOptions::default()
        };
        opts.check.corrupt = true;
        assert!(!gradient_suite(&m, &d, &opts).unwrap().passed());
    }
}
