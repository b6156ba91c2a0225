//! Over-parametrized convolutional-network image classifiers trained by
//! projected stochastic gradient descent, a synthetic generator for
//! hierarchical max-pooling label models, explicit ReLU approximation
//! networks with machine-checkable certificates, and numeric versions of the
//! accompanying capacity and stability bounds.

pub mod bounds;
pub mod checkpoint;
pub mod cnn;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod ffnet;
pub mod gadgets;
pub mod grad;
pub mod grid;
pub mod hierarchy;
pub mod loss;
pub mod project;
pub mod rng;
pub mod schedule;
pub mod sgd_bound;
pub mod synthetic;
pub mod taylor;
pub mod train;

pub use cnn::{cnn_forward, ensemble_eval, CnnConfig, CnnParams, EnsembleParams, FeatureStack};
pub use error::{CoreError, Result};
pub use grid::ImageGrid;
pub use hierarchy::{eval_hierarchy, eval_maxpool_model, HierarchicalModel, Node, NodeKind};
pub use synthetic::{GeneratorConfig, LabeledSample, PixelLaw};
pub use train::{classify, init_params, sgd_train, TrainConfig, TrainResult};
