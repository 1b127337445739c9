//! Classifier architectures, training and weight files.

mod model;
mod persist;
mod spec;
mod train;

pub use model::{build_model, threshold_labels, LayerSummary, Model, ParamCount};
pub use persist::{
    decode_weights, encode_weights, load_weights, load_weights_into, save_weights, WeightFile, FORMAT_VERSION,
    MAGIC,
};
pub use spec::{Architecture, CnnConfig, CnnLstmConfig, MlpConfig, ModelKind, ModelSpec, RnnConfig};
pub use train::{evaluate, fit, fit_rows, EpochHistory, Optimizer, TrainConfig};
