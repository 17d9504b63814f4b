//! Multi-label metrics and the experiment harnesses built on them.

pub mod experiments;
pub mod metrics;

pub use experiments::{
    arms_table, evaluate, run_future_sweep, run_growing_window, run_main_eval, ArmReport, CurvePoint,
    SweepPoint,
};
pub use metrics::{
    average_precision, exact_match, format_table, macro_prf, mean_average_precision,
    per_category_prf, CategoryMetrics, MetricsReport, Prf,
};
