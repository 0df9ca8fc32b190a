//! Granular-ball domain types: labeled samples, balls, and the forward-pass
//! membership record that drives gradient broadcast.

use crate::matrix::FeatureVector;

/// One sample in a batch. `index` is batch-local and unique.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: usize,
    pub index: usize,
}

/// A cluster of samples treated as one unit: centroid features plus the
/// majority label over members.
#[derive(Clone, Debug)]
pub struct GranularBall {
    /// Batch-local member sample indices, sorted ascending. Never empty.
    pub members: Vec<usize>,
    pub centroid: FeatureVector,
    pub majority_label: usize,
    pub purity: f64,
    /// True when the ball cannot be split further: singleton, identical
    /// points, degenerate split, or depth bound.
    pub terminal: bool,
}

impl GranularBall {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Forward-pass record: which input rows each centroid row stands for, and
/// which input rows were discarded. Replay-injected rows carry no members.
#[derive(Clone, Debug)]
pub struct MembershipMap {
    retained: Vec<Vec<usize>>,
    discarded: Vec<usize>,
    input_size: usize,
}

impl MembershipMap {
    pub fn new(retained: Vec<Vec<usize>>, mut discarded: Vec<usize>, input_size: usize) -> Self {
        discarded.sort_unstable();
        let map = Self {
            retained,
            discarded,
            input_size,
        };
        debug_assert!(map.is_partition());
        map
    }

    /// Centroid rows currently emitted, including replay rows.
    pub fn output_size(&self) -> usize {
        self.retained.len()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    /// Member indices of centroid row `i`; empty for replay rows.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.retained[i]
    }

    pub fn retained(&self) -> &[Vec<usize>] {
        &self.retained
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }

    /// Append `n` replay-injected centroid rows. They have no members in the
    /// current batch and receive no gradient flow back into it.
    pub fn append_replay_rows(&mut self, n: usize) {
        for _ in 0..n {
            self.retained.push(Vec::new());
        }
    }

    /// Retained member sets plus the discarded set partition the input rows.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.input_size];
        for members in &self.retained {
            for &m in members {
                if m >= self.input_size || seen[m] {
                    return false;
                }
                seen[m] = true;
            }
        }
        for &d in &self.discarded {
            if d >= self.input_size || seen[d] {
                return false;
            }
            seen[d] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_partition_holds() {
        let m = MembershipMap::new(vec![vec![0, 2], vec![1, 4]], vec![3], 5);
        assert!(m.is_partition());
        assert_eq!(m.output_size(), 2);
        assert_eq!(m.discarded(), &[3]);
    }

    #[test]
    fn membership_detects_overlap() {
        let m = MembershipMap {
            retained: vec![vec![0, 1], vec![1, 2]],
            discarded: vec![],
            input_size: 3,
        };
        assert!(!m.is_partition());
    }

    #[test]
    fn membership_detects_gap() {
        let m = MembershipMap {
            retained: vec![vec![0]],
            discarded: vec![],
            input_size: 2,
        };
        assert!(!m.is_partition());
    }

    #[test]
    fn replay_rows_do_not_break_partition() {
        let mut m = MembershipMap::new(vec![vec![0, 1]], vec![], 2);
        m.append_replay_rows(3);
        assert_eq!(m.output_size(), 4);
        assert!(m.is_partition());
        assert!(m.members(1).is_empty());
    }
}
