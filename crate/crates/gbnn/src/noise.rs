//! Symmetric label-noise injection with a ground-truth mask, plus the
//! effective-noise-rate measurement used to judge filtering.

use std::io::Write;

use thiserror::Error;

use crate::cluster::majority_label;
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise ratio {0} outside [0, 1)")]
    BadRatio(f64),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty input")]
    EmptyInput,
}

/// Ground truth for a corruption pass: who was flipped, from what, to what.
#[derive(Clone, Debug)]
pub struct NoiseMask {
    pub corrupted: Vec<bool>,
    pub clean_label: Vec<usize>,
    pub noisy_label: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseMask {
    pub fn len(&self) -> usize {
        self.corrupted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrupted.is_empty()
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&c| c).count()
    }

    /// CSV export: `index,clean_label,noisy_label,corrupted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,clean_label,noisy_label,corrupted")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                i, self.clean_label[i], self.noisy_label[i], self.corrupted[i]
            )?;
        }
        Ok(())
    }
}

/// Selection scheme for which samples get corrupted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSelection {
    /// round(ratio * class count) per class: noise evenly spread over classes.
    Stratified,
    /// round(ratio * n) over the whole dataset regardless of class.
    Uniform,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Corrupt a fixed proportion of labels with symmetric noise. Each chosen
/// sample is reassigned uniformly among the other `num_classes - 1` classes.
pub fn corrupt_labels(
    labels: &[usize],
    num_classes: usize,
    ratio: f64,
    selection: NoiseSelection,
    rng: &mut SeededRng,
) -> Result<NoiseMask, NoiseError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(NoiseError::BadRatio(ratio));
    }
    if num_classes < 2 {
        return Err(NoiseError::TooFewClasses(num_classes));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(NoiseError::LabelOutOfRange { label, num_classes });
    }

    let mut chosen: Vec<usize> = Vec::new();
    match selection {
        NoiseSelection::Stratified => {
            for class in 0..num_classes {
                let class_indices: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == class)
                    .map(|(i, _)| i)
                    .collect();
                let k = round_half_up(ratio * class_indices.len() as f64);
                for pick in rng.sample_without_replacement(class_indices.len(), k) {
                    chosen.push(class_indices[pick]);
                }
            }
        }
        NoiseSelection::Uniform => {
            let k = round_half_up(ratio * labels.len() as f64);
            chosen = rng.sample_without_replacement(labels.len(), k);
        }
    }
    chosen.sort_unstable();

    let mut noisy = labels.to_vec();
    let mut corrupted = vec![false; labels.len()];
    for &i in &chosen {
        // uniform over the other classes, skipping the clean label
        let draw = rng.gen_index(num_classes - 1);
        let new_label = if draw >= labels[i] { draw + 1 } else { draw };
        noisy[i] = new_label;
        corrupted[i] = true;
    }

    Ok(NoiseMask {
        corrupted,
        clean_label: labels.to_vec(),
        noisy_label: noisy,
        ratio,
        seed: rng.seed(),
    })
}

/// Fraction of training targets whose assigned label disagrees with the
/// majority clean label of the samples they represent.
pub fn effective_noise_rate(targets: &[(usize, Vec<usize>)]) -> Result<f64, NoiseError> {
    if targets.is_empty() {
        return Err(NoiseError::EmptyInput);
    }
    let wrong = targets
        .iter()
        .filter(|(assigned, clean)| {
            majority_label(clean).map(|m| m != *assigned).unwrap_or(true)
        })
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_zero_is_identity() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let mask = corrupt_labels(
            &labels,
            3,
            0.0,
            NoiseSelection::Stratified,
            &mut SeededRng::new(1),
        )
        .unwrap();
        assert_eq!(mask.corrupted_count(), 0);
        assert_eq!(mask.noisy_label, labels);
    }

    #[test]
    fn stratified_counts_are_exact() {
        let mut labels = Vec::new();
        for c in 0..10 {
            labels.extend(std::iter::repeat(c).take(100));
        }
        let mask = corrupt_labels(
            &labels,
            10,
            0.3,
            NoiseSelection::Stratified,
            &mut SeededRng::new(2),
        )
        .unwrap();
        assert_eq!(mask.corrupted_count(), 300);
        for c in 0..10 {
            let per_class = (0..labels.len())
                .filter(|&i| labels[i] == c && mask.corrupted[i])
                .count();
            assert_eq!(per_class, 30, "class {c}");
        }
        for i in 0..labels.len() {
            assert_eq!(mask.corrupted[i], mask.noisy_label[i] != mask.clean_label[i]);
        }
    }

    #[test]
    fn binary_noise_always_flips() {
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let mask = corrupt_labels(
            &labels,
            2,
            0.5,
            NoiseSelection::Stratified,
            &mut SeededRng::new(3),
        )
        .unwrap();
        assert_eq!(mask.corrupted_count(), 100);
        for i in 0..200 {
            if mask.corrupted[i] {
                assert_eq!(mask.noisy_label[i], 1 - labels[i]);
            }
        }
    }

    #[test]
    fn corruption_is_deterministic() {
        let labels: Vec<usize> = (0..500).map(|i| i % 5).collect();
        let a = corrupt_labels(&labels, 5, 0.2, NoiseSelection::Uniform, &mut SeededRng::new(9))
            .unwrap();
        let b = corrupt_labels(&labels, 5, 0.2, NoiseSelection::Uniform, &mut SeededRng::new(9))
            .unwrap();
        assert_eq!(a.noisy_label, b.noisy_label);
        assert_eq!(a.corrupted, b.corrupted);
    }

    #[test]
    fn uniform_count_is_rounded() {
        let labels: Vec<usize> = (0..101).map(|i| i % 3).collect();
        let mask = corrupt_labels(
            &labels,
            3,
            0.25,
            NoiseSelection::Uniform,
            &mut SeededRng::new(4),
        )
        .unwrap();
        // round_half_up(25.25) = 25
        assert_eq!(mask.corrupted_count(), 25);
    }

    #[test]
    fn bad_inputs_error() {
        assert_eq!(
            corrupt_labels(&[0], 2, 1.0, NoiseSelection::Uniform, &mut SeededRng::new(0))
                .unwrap_err(),
            NoiseError::BadRatio(1.0)
        );
        assert_eq!(
            corrupt_labels(&[0], 1, 0.1, NoiseSelection::Uniform, &mut SeededRng::new(0))
                .unwrap_err(),
            NoiseError::TooFewClasses(1)
        );
        assert!(matches!(
            corrupt_labels(&[5], 3, 0.1, NoiseSelection::Uniform, &mut SeededRng::new(0))
                .unwrap_err(),
            NoiseError::LabelOutOfRange { .. }
        ));
    }

    #[test]
    fn effective_noise_rate_cases() {
        let all_right = vec![(0, vec![0, 0, 1]), (1, vec![1])];
        assert_eq!(effective_noise_rate(&all_right).unwrap(), 0.0);
        let one_wrong = vec![
            (0, vec![0, 0]),
            (1, vec![1]),
            (2, vec![2, 2, 0]),
            (0, vec![1, 1, 1]),
        ];
        assert_eq!(effective_noise_rate(&one_wrong).unwrap(), 0.25);
        assert_eq!(
            effective_noise_rate(&[]).unwrap_err(),
            NoiseError::EmptyInput
        );
    }

    #[test]
    fn mask_csv_round_trips_ground_truth() {
        let labels = vec![0, 1, 0, 1];
        let mask = corrupt_labels(
            &labels,
            2,
            0.5,
            NoiseSelection::Stratified,
            &mut SeededRng::new(5),
        )
        .unwrap();
        let mut buf = Vec::new();
        mask.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,clean_label,noisy_label,corrupted");
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            assert_eq!(parts[0].parse::<usize>().unwrap(), i);
            assert_eq!(parts[1].parse::<usize>().unwrap(), labels[i]);
        }
    }
}
