//! Desk-scale encoder–decoder used to compare attention mechanisms on a
//! synthetic duration task. Everything here runs in `f64`.

mod eval;
mod gru;
mod model;
mod task;
mod train;

pub use eval::{classify_inference, evaluate, Evaluation};
pub use gru::{Gru, GruStep};
pub use model::{
    frame_accuracy, miniature_config, model_gradient_check, ForwardPass, Inference, InferenceConfig, InferenceMode, InferredAlignment, Mechanism,
    ModelConfig, ToyModel, ToyParams, MAX_PARAMETERS,
};
pub use task::{
    build_pair, generate_dataset, read_jsonl, stop_frame, token_frame, write_jsonl, SequencePair, Split,
    ToyTaskSpec, MAX_DURATION,
};
pub use train::{
    batch_gradient, init_model, train, Adam, Checkpoint, CheckpointHook, LossPoint, Tensor, TrainConfig, TrainReport,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
