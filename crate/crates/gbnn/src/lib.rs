//! Granular-ball training pipeline for label-noise-robust classification.
//!
//! A clustering layer sits between a feature extractor and its classifier:
//! each batch of penultimate features is grouped into purity-thresholded
//! granular balls, samples are replaced by ball centroids (discarding
//! stubborn singletons, which concentrate label noise), centroid gradients
//! are broadcast back to member samples, and large low-noise balls from past
//! batches are replayed into later ones.

pub mod ball;
pub mod cluster;
pub mod config;
pub mod data;
pub mod layer;
pub mod matrix;
pub mod net;
pub mod noise;
pub mod replay;
pub mod rng;
pub mod train;

pub use ball::{GranularBall, LabeledSample, MembershipMap};
pub use cluster::{cluster, majority_label, purity, split_ball, ClusterConfig};
pub use layer::{GBLayerConfig, GradientMode};
pub use matrix::{mean_of, squared_distance, FeatureVector, Matrix};
pub use noise::{corrupt_labels, effective_noise_rate, NoiseMask, NoiseSelection};
pub use replay::{ReplayBuffer, ReplayConfig};
pub use rng::SeededRng;
