//! Experience replay over granular balls: keep the large (low-noise) balls
//! from past batches and re-inject sampled centroids into later batches.

use std::collections::VecDeque;

use crate::ball::GranularBall;
use crate::matrix::FeatureVector;
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct ReplayConfig {
    /// Maximum stored balls; FIFO eviction past this.
    pub capacity: usize,
    /// Minimum member count for a ball to qualify as "large".
    pub min_ball_size: usize,
    /// Balls appended to the classifier input per batch.
    pub sample_count: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 1024,
            min_ball_size: 4,
            sample_count: 16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StoredBall {
    pub centroid: FeatureVector,
    pub label: usize,
    pub size: usize,
    pub batch_id: u64,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    entries: VecDeque<StoredBall>,
    config: ReplayConfig,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig) -> Self {
        assert!(
            config.capacity >= config.sample_count,
            "replay capacity must cover sample_count"
        );
        Self {
            entries: VecDeque::with_capacity(config.capacity),
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store every qualifying ball; evict oldest on overflow. Returns the
    /// number inserted.
    pub fn store(&mut self, balls: &[GranularBall], batch_id: u64) -> usize {
        let mut inserted = 0;
        for ball in balls {
            if ball.size() < self.config.min_ball_size {
                continue;
            }
            if self.entries.len() == self.config.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(StoredBall {
                centroid: ball.centroid.clone(),
                label: ball.majority_label,
                size: ball.size(),
                batch_id,
            });
            inserted += 1;
        }
        inserted
    }

    /// Uniform sample without replacement of min(n, len) stored balls.
    /// Non-consuming: the buffer is unchanged.
    pub fn sample(&self, rng: &mut SeededRng, n: usize) -> Vec<StoredBall> {
        if self.entries.is_empty() || n == 0 {
            return Vec::new();
        }
        rng.sample_without_replacement(self.entries.len(), n)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::FeatureVector;

    fn ball(size: usize, label: usize) -> GranularBall {
        GranularBall {
            members: (0..size).collect(),
            centroid: FeatureVector::new(vec![size as f64, label as f64]).unwrap(),
            majority_label: label,
            purity: 1.0,
            terminal: false,
        }
    }

    #[test]
    fn stores_only_large_balls() {
        let mut buf = ReplayBuffer::new(ReplayConfig::default());
        let balls: Vec<GranularBall> = [1, 2, 3, 4, 5, 6, 1, 1, 4, 4]
            .iter()
            .map(|&s| ball(s, 0))
            .collect();
        assert_eq!(buf.store(&balls, 0), 5);
        assert_eq!(buf.len(), 5);
    }

    #[test]
    fn empty_store_is_noop() {
        let mut buf = ReplayBuffer::new(ReplayConfig::default());
        assert_eq!(buf.store(&[], 0), 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn fifo_eviction_keeps_newest() {
        let mut buf = ReplayBuffer::new(ReplayConfig {
            capacity: 3,
            min_ball_size: 1,
            sample_count: 1,
        });
        for i in 0..5 {
            buf.store(&[ball(4, i)], i as u64);
        }
        assert_eq!(buf.len(), 3);
        let labels: Vec<usize> = buf.entries.iter().map(|b| b.label).collect();
        assert_eq!(labels, vec![2, 3, 4]);
    }

    #[test]
    fn sample_from_empty_is_empty() {
        let buf = ReplayBuffer::new(ReplayConfig::default());
        let mut rng = SeededRng::new(0);
        assert!(buf.sample(&mut rng, 16).is_empty());
    }

    #[test]
    fn sample_more_than_stored_returns_all() {
        let mut buf = ReplayBuffer::new(ReplayConfig::default());
        buf.store(&(0..5).map(|i| ball(4, i)).collect::<Vec<_>>(), 0);
        let mut rng = SeededRng::new(1);
        let s = buf.sample(&mut rng, 16);
        assert_eq!(s.len(), 5);
        let mut labels: Vec<usize> = s.iter().map(|b| b.label).collect();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sampling_does_not_consume() {
        let mut buf = ReplayBuffer::new(ReplayConfig::default());
        buf.store(&(0..10).map(|i| ball(5, i)).collect::<Vec<_>>(), 0);
        let mut rng = SeededRng::new(2);
        buf.sample(&mut rng, 4);
        assert_eq!(buf.len(), 10);
    }

    #[test]
    fn sample_is_without_replacement_and_deterministic() {
        let mut buf = ReplayBuffer::new(ReplayConfig::default());
        buf.store(&(0..100).map(|i| ball(4 + i % 3, i)).collect::<Vec<_>>(), 0);
        let s1 = buf.sample(&mut SeededRng::new(77), 16);
        let s2 = buf.sample(&mut SeededRng::new(77), 16);
        let l1: Vec<usize> = s1.iter().map(|b| b.label).collect();
        let l2: Vec<usize> = s2.iter().map(|b| b.label).collect();
        assert_eq!(l1, l2);
        let mut dedup = l1.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 16);
    }
}
