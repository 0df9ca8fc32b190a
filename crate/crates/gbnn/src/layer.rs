//! The granular-ball layer. Forward replaces a feature batch with ball
//! centroids (re-clustering singletons a configurable number of rounds, then
//! discarding the stragglers); backward broadcasts centroid gradients back to
//! member samples.

use thiserror::Error;

use crate::ball::{GranularBall, LabeledSample, MembershipMap};
use crate::cluster::{cluster, ClusterConfig, ClusterError};
use crate::matrix::{FeatureVector, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum LayerError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("labels length {labels} does not match batch size {batch}")]
    LabelMismatch { labels: usize, batch: usize },
    #[error("gradient shape {got} does not match membership output size {want}")]
    GradientShapeMismatch { got: usize, want: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// How centroid gradients map onto member samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    /// Every member gets the centroid gradient unscaled.
    Copy,
    /// Every member gets centroid gradient / ball size: the exact Jacobian
    /// of the averaging step.
    Mean,
}

#[derive(Clone, Debug)]
pub struct GBLayerConfig {
    pub cluster: ClusterConfig,
    /// Rounds of pooled re-clustering applied to singleton balls before the
    /// survivors are discarded. 0 discards singletons immediately.
    pub recluster_rounds: usize,
    pub gradient_mode: GradientMode,
}

impl Default for GBLayerConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            recluster_rounds: 2,
            gradient_mode: GradientMode::Copy,
        }
    }
}

/// Per-forward diagnostics, surfaced in the metrics CSV.
#[derive(Clone, Debug, Default)]
pub struct GBDiagnostics {
    pub balls_total: usize,
    pub balls_discarded: usize,
    pub retained_fraction: f64,
    pub ball_sizes: Vec<usize>,
    /// Samples that sat in singleton balls after the first clustering pass,
    /// before any re-cluster round.
    pub round0_singletons: Vec<usize>,
    pub all_discarded: bool,
}

#[derive(Clone, Debug)]
pub struct GBForwardOutput {
    pub centroid_features: Matrix,
    pub centroid_labels: Vec<usize>,
    pub membership: MembershipMap,
    /// Retained balls in centroid-row order, for replay storage.
    pub balls: Vec<GranularBall>,
    pub diagnostics: GBDiagnostics,
}

/// Cluster a batch, rescue singletons via pooled re-clustering, discard the
/// rest, and emit one (centroid, majority label) row per retained ball.
pub fn forward(
    features: &Matrix,
    labels: &[usize],
    config: &GBLayerConfig,
) -> Result<GBForwardOutput, LayerError> {
    let n = features.rows();
    if n == 0 {
        return Err(LayerError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(LayerError::LabelMismatch {
            labels: labels.len(),
            batch: n,
        });
    }

    let samples: Vec<LabeledSample> = (0..n)
        .map(|i| LabeledSample {
            features: FeatureVector::new(features.row(i).to_vec()).expect("finite features"),
            label: labels[i],
            index: i,
        })
        .collect();

    let first_pass = cluster(&samples, &config.cluster)?;
    let mut balls_total = first_pass.len();
    let mut retained: Vec<GranularBall> = Vec::new();
    let mut singletons: Vec<usize> = Vec::new();
    for ball in first_pass {
        if ball.size() >= 2 {
            retained.push(ball);
        } else {
            singletons.push(ball.members[0]);
        }
    }
    let round0_singletons = singletons.clone();

    for _ in 0..config.recluster_rounds {
        if singletons.len() < 2 {
            break;
        }
        // pool every current singleton so isolated points get new neighbors
        let pool: Vec<LabeledSample> = singletons.iter().map(|&i| samples[i].clone()).collect();
        let pool_balls = cluster(&pool, &config.cluster)?;
        balls_total += pool_balls.len();
        let mut still_single = Vec::new();
        for ball in pool_balls {
            let original: Vec<usize> = ball.members.iter().map(|&k| singletons[k]).collect();
            if original.len() >= 2 {
                retained.push(GranularBall {
                    members: original,
                    ..ball
                });
            } else {
                still_single.push(original[0]);
            }
        }
        still_single.sort_unstable();
        singletons = still_single;
    }

    retained.sort_by_key(|b| b.members[0]);
    let discarded = singletons;
    let retained_samples: usize = retained.iter().map(|b| b.size()).sum();

    let diagnostics = GBDiagnostics {
        balls_total,
        balls_discarded: discarded.len(),
        retained_fraction: retained_samples as f64 / n as f64,
        ball_sizes: retained.iter().map(|b| b.size()).collect(),
        round0_singletons,
        all_discarded: retained.is_empty(),
    };

    let dim = features.cols();
    let mut centroid_features = Matrix::zeros(0, dim);
    let mut centroid_labels = Vec::with_capacity(retained.len());
    for ball in &retained {
        centroid_features.push_row(ball.centroid.values());
        centroid_labels.push(ball.majority_label);
    }
    let membership = MembershipMap::new(
        retained.iter().map(|b| b.members.clone()).collect(),
        discarded,
        n,
    );

    Ok(GBForwardOutput {
        centroid_features,
        centroid_labels,
        membership,
        balls: retained,
        diagnostics,
    })
}

/// Map centroid gradients back onto the input batch. Discarded rows get
/// zeros; replay rows (no members) contribute nothing.
pub fn backward(
    centroid_grads: &Matrix,
    membership: &MembershipMap,
    mode: GradientMode,
) -> Result<Matrix, LayerError> {
    if centroid_grads.rows() != membership.output_size() {
        return Err(LayerError::GradientShapeMismatch {
            got: centroid_grads.rows(),
            want: membership.output_size(),
        });
    }
    let mut out = Matrix::zeros(membership.input_size(), centroid_grads.cols());
    for i in 0..membership.output_size() {
        let members = membership.members(i);
        if members.is_empty() {
            continue;
        }
        let grad = centroid_grads.row(i);
        let scale = match mode {
            GradientMode::Copy => 1.0,
            GradientMode::Mean => 1.0 / members.len() as f64,
        };
        for &j in members {
            for (o, g) in out.row_mut(j).iter_mut().zip(grad) {
                *o = g * scale;
            }
        }
    }
    Ok(out)
}
