//! Trainable architectures.

pub mod synthetic;

pub use synthetic::{
    encode_cm, train_cm, train_cm_autoencoder, train_control, train_cross_modal, train_je, AeTarget, Autoencoder,
    CmPipeline, CrossModalPredictors, SyntheticEncoder,
};
pub mod robot;

pub use robot::{
    train_aes_pre, train_robot_cm, train_robot_default, train_robot_pipeline, train_robot_predictors, AesPreEncoder,
    RobotInputs, RobotOption, RobotPipeline, RobotPredictors,
};
