//! Conditional least-squares GAN from (RGB + depth) scenes to
//! log-magnitude spectrograms.

mod infer;
mod loss;
mod model;
mod train;

pub use infer::{
    discriminate_batch, encode, encode_batch, generate_batch, infer, infer_batch_unchecked, infer_unchecked,
    make_latent, noise, to_normalized_grid, to_spectrogram, Inference, INFERENCE_BATCH,
};
pub use loss::{
    discriminator_loss, generator_loss, proxy_target, t60p_loss, LossTerms, LossWeights, T60pTargets,
};
pub use model::{
    concat_features, Ablation, Discriminator, Encoder, GanModel, Generator, Normalization, CHECKPOINT_FORMAT, LEAK,
    PIXEL_NORM_EPS,
};
pub use train::{
    metrics_csv, prepare_sample, prepare_split, train, train_corpus, train_with, validation_error, EpochMetrics,
    PreparedSample, StepReport, TrainConfig, TrainOutcome, Trainer, METRICS_HEADER, VALIDATION_SEED,
};
