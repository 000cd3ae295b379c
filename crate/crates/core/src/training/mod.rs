//! Loss, augmentation, optimisation loop and cross-validation.

mod augment;
mod config;
mod loss;
mod trainer;

pub use augment::{augment, hflip, vflip};
pub use config::{AugmentationConfig, TrainConfig};
pub use loss::{iteration_weights, segmentation_loss, segmentation_loss_value, total_loss, total_loss_value};
pub use trainer::{
    cross_validation_split, holdout_split, mix_seed, pad_sample, refiner_step, train_step, validation_loss,
    EarlyStopping, EpochRecord, TrainOptions, TrainResult, Trainer, LOG_HEADER,
};
