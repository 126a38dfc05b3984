//! Objectives, optimizers and the training loops.

mod grad_suite;
mod losses;
mod metrics;
mod optim;
mod stage2;
mod stage3;

pub use losses::{
    delta_loss, nll_loss, rec_loss, relative_error, stage2_loss, tape_nll, tape_rec_loss, Stage2Terms, StageIILoss,
    PROB_FLOOR,
};
pub use metrics::{
    evaluate, radius_depth_pairs, radius_depth_spearman, round_to_f32, write_metrics, EvalReport, MetricsRow,
    METRICS_HEADER,
};
pub use optim::{adam_step, riemannian_step, AdamConfig, AdamState, Optimizer, StepDecay};
pub use stage2::{batch_gradients, feature_mean, train_stage2, BatchGrads, Stage2Outcome, GRAD_SHARDS};
pub use stage3::{
    edit_report, mapper_gradients, mean_delta_cosine, sample_pairs, tangent_codes, train_stage3, Pair, Stage3Outcome,
    Stage3Report, Stage3Row, STAGE3_HEADER,
};
pub use grad_suite::{gradient_suite, small_mapper_config, small_model_config, SuiteOptions};
