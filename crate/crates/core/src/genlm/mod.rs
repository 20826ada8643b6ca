//! Label-conditioned autoregressive generator.
//!
//! Documents are encoded as `[LBL{y}, SEP, tokens…, EOS]` and the model
//! learns them with plain next-token prediction, so the label token acts
//! as a control prefix. Sampling starts from `[LBL{y}, SEP, context…]`.

mod model;
mod sample;
mod train;

pub use model::{Decoder, GenConfig, GeneratorModel};
pub use sample::{sample, PromptSpec, Sample, GREEDY_TEMPERATURE};
pub use train::{lm_finetune, lm_train, perplexity, perplexity_of_sequences, FinetuneReport, LmTrainConfig, LossHistory};
