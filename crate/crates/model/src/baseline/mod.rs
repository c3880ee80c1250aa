//! Structured-data baseline: first-24h statistics per variable fed to a
//! two-hidden-layer feed-forward network.

mod features;
mod net;

pub use features::{
    extract_stat_features, feature_columns, write_stat_features, StatFeatureVector,
};
pub use net::{
    load_baseline, save_baseline, score_baseline, train_baseline, BaselineConfig, BaselineModel,
};
