//! Metrics, experiment runs, the attention/sharing/top-k ablations, the
//! anomaly robustness harness and the patch lag-correlation diagnostic.

mod ablation;
mod experiment;
mod gradients;
mod lagmap;
mod predictor;
mod report;
mod robustness;

pub use ablation::{ablate_attention, ablate_share, sweep_topk, ComparisonRow, ComparisonTable, ReferenceEnvelope, TopkRow, TopkSweep};
pub use gradients::{gradient_suite, tiny_model_config, GradientCheck, GradientSuite, GRADIENT_STEP};
pub use experiment::{evaluate, Experiment, FittedModel};
pub use lagmap::{lag_correlation_map, pearson, LagMap};
pub use predictor::{Predictor, RepeatLastWindow, TrainedModel, ZeroForecast};
pub use report::{
    anchors, config_digest, write_json, write_rows_csv, Average, EvalReport, HorizonMetrics, Metrics, PaperReference,
    REPORT_SCHEMA_VERSION,
};
pub use robustness::{anomaly_harness, RobustnessReport};
