//! Purity-driven granular-ball clustering: iteratively 2-means-split a batch
//! until every ball reaches the purity threshold or cannot split further.
//!
//! Everything here is deterministic. Seeding uses the farthest pair of points
//! (ties toward the lexicographically smallest index pair), Lloyd assignment
//! ties go to cluster 0, and output balls are ordered by smallest member
//! index.

use std::collections::VecDeque;

use thiserror::Error;

use crate::ball::{GranularBall, LabeledSample};
use crate::matrix::{mean_of, squared_distance};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("empty input")]
    EmptyInput,
    #[error("unsplittable: ball has fewer than 2 samples")]
    Unsplittable,
    #[error("dimension mismatch across samples")]
    DimensionMismatch,
}

#[derive(Clone, Debug)]
pub struct ClusterConfig {
    /// Majority-label proportion at which a ball stops splitting.
    pub purity_threshold: f64,
    /// Safety bound on split recursion depth.
    pub max_split_depth: u32,
    pub lloyd_max_iters: u32,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            purity_threshold: 0.8,
            max_split_depth: 32,
            lloyd_max_iters: 100,
        }
    }
}

/// Proportion of the most frequent label.
pub fn purity(labels: &[usize]) -> Result<f64, ClusterError> {
    let (_, count) = majority_with_count(labels)?;
    Ok(count as f64 / labels.len() as f64)
}

/// Most frequent label; ties broken toward the smallest class index.
pub fn majority_label(labels: &[usize]) -> Result<usize, ClusterError> {
    majority_with_count(labels).map(|(l, _)| l)
}

fn majority_with_count(labels: &[usize]) -> Result<(usize, usize), ClusterError> {
    if labels.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let max_label = *labels.iter().max().unwrap();
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let (best, &count) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    Ok((best, count))
}

/// Result of attempting to split a ball in two.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitOutcome {
    /// Two non-empty children, each a sorted list of positions into the
    /// input slice.
    Children(Vec<usize>, Vec<usize>),
    /// No usable spatial split exists (identical points or an empty child).
    Terminal,
}

/// Balls at or below this size are split by exact bipartition search instead
/// of Lloyd iteration, which can stall in a local optimum on tiny inputs.
const EXACT_SPLIT_LIMIT: usize = 8;

/// Deterministic 2-means split. Up to [`EXACT_SPLIT_LIMIT`] samples the
/// minimum-SSE bipartition is found by exhaustive search; above that, Lloyd
/// iteration seeded with the farthest pair of samples (assignment ties go to
/// cluster 0).
pub fn split_ball(
    samples: &[LabeledSample],
    config: &ClusterConfig,
) -> Result<SplitOutcome, ClusterError> {
    if samples.len() < 2 {
        return Err(ClusterError::Unsplittable);
    }
    let dim = samples[0].features.dim();
    if samples.iter().any(|s| s.features.dim() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }

    // farthest pair, first occurrence in (i, j) lexicographic order wins ties
    let mut best = (0usize, 1usize);
    let mut best_d = -1.0f64;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let d = squared_distance(
                samples[i].features.values(),
                samples[j].features.values(),
            )
            .expect("dims checked");
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    if best_d <= 0.0 {
        return Ok(SplitOutcome::Terminal); // all points identical
    }

    if samples.len() <= EXACT_SPLIT_LIMIT {
        return Ok(exact_split(samples));
    }

    let mut centroids = [
        samples[best.0].features.values().to_vec(),
        samples[best.1].features.values().to_vec(),
    ];
    let mut assignment = vec![0u8; samples.len()];
    for _ in 0..config.lloyd_max_iters {
        let mut changed = false;
        for (k, s) in samples.iter().enumerate() {
            let d0 = squared_distance(s.features.values(), &centroids[0]).unwrap();
            let d1 = squared_distance(s.features.values(), &centroids[1]).unwrap();
            let a = if d0 <= d1 { 0 } else { 1 };
            if assignment[k] != a {
                assignment[k] = a;
                changed = true;
            }
        }
        if assignment.iter().all(|&a| a == 0) || assignment.iter().all(|&a| a == 1) {
            return Ok(SplitOutcome::Terminal);
        }
        if !changed {
            break;
        }
        for c in 0..2u8 {
            let rows: Vec<&[f64]> = samples
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(s, _)| s.features.values())
                .collect();
            centroids[c as usize] = mean_of(&rows).expect("non-empty").into_values();
        }
    }

    let child0: Vec<usize> = (0..samples.len()).filter(|&k| assignment[k] == 0).collect();
    let child1: Vec<usize> = (0..samples.len()).filter(|&k| assignment[k] == 1).collect();
    Ok(SplitOutcome::Children(child0, child1))
}

/// Exhaustive minimum-SSE bipartition. Sample 0 anchors cluster 0 so each
/// bipartition is enumerated once; ties go to the lowest assignment mask.
fn exact_split(samples: &[LabeledSample]) -> SplitOutcome {
    let n = samples.len();
    debug_assert!((2..=EXACT_SPLIT_LIMIT).contains(&n));
    let side = |mask: u32, k: usize| -> u32 {
        if k == 0 {
            0
        } else {
            (mask >> (k - 1)) & 1
        }
    };
    let mut best_mask = 1u32;
    let mut best_sse = f64::INFINITY;
    for mask in 1..(1u32 << (n - 1)) {
        let mut sse = 0.0;
        for cluster in 0..2u32 {
            let rows: Vec<&[f64]> = (0..n)
                .filter(|&k| side(mask, k) == cluster)
                .map(|k| samples[k].features.values())
                .collect();
            let mean = mean_of(&rows).expect("both sides non-empty").into_values();
            sse += rows
                .iter()
                .map(|r| squared_distance(r, &mean).expect("dims checked"))
                .sum::<f64>();
        }
        if sse < best_sse {
            best_sse = sse;
            best_mask = mask;
        }
    }
    let child0: Vec<usize> = (0..n).filter(|&k| side(best_mask, k) == 0).collect();
    let child1: Vec<usize> = (0..n).filter(|&k| side(best_mask, k) == 1).collect();
    SplitOutcome::Children(child0, child1)
}

/// Breadth-first purity-driven splitting of a whole batch into balls.
///
/// Each output ball satisfies one of: purity at or above the threshold,
/// single member, or terminal (identical points, degenerate split, or the
/// depth bound). Output is ordered by smallest member index.
pub fn cluster(
    samples: &[LabeledSample],
    config: &ClusterConfig,
) -> Result<Vec<GranularBall>, ClusterError> {
    if samples.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let dim = samples[0].features.dim();
    if samples.iter().any(|s| s.features.dim() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }

    let mut queue: VecDeque<(Vec<usize>, u32)> = VecDeque::new();
    queue.push_back(((0..samples.len()).collect(), 0));
    let mut out: Vec<GranularBall> = Vec::new();

    while let Some((members, depth)) = queue.pop_front() {
        let labels: Vec<usize> = members.iter().map(|&m| samples[m].label).collect();
        let p = purity(&labels)?;
        if p >= config.purity_threshold || members.len() == 1 {
            out.push(finalize_ball(samples, members, false));
            continue;
        }
        if depth >= config.max_split_depth {
            out.push(finalize_ball(samples, members, true));
            continue;
        }
        let subset: Vec<LabeledSample> =
            members.iter().map(|&m| samples[m].clone()).collect();
        match split_ball(&subset, config)? {
            SplitOutcome::Terminal => out.push(finalize_ball(samples, members, true)),
            SplitOutcome::Children(c0, c1) => {
                let m0: Vec<usize> = c0.into_iter().map(|k| members[k]).collect();
                let m1: Vec<usize> = c1.into_iter().map(|k| members[k]).collect();
                queue.push_back((m0, depth + 1));
                queue.push_back((m1, depth + 1));
            }
        }
    }

    out.sort_by_key(|b| b.members[0]);
    Ok(out)
}

fn finalize_ball(samples: &[LabeledSample], mut members: Vec<usize>, degenerate: bool) -> GranularBall {
    members.sort_unstable();
    let labels: Vec<usize> = members.iter().map(|&m| samples[m].label).collect();
    let rows: Vec<&[f64]> = members
        .iter()
        .map(|&m| samples[m].features.values())
        .collect();
    let centroid = mean_of(&rows).expect("ball non-empty");
    let terminal = degenerate || members.len() == 1;
    GranularBall {
        purity: purity(&labels).expect("non-empty"),
        majority_label: majority_label(&labels).expect("non-empty"),
        members,
        centroid,
        terminal,
    }
}
