//! Training-loop orchestration: runs the full pipeline (features -> granular
//! balls -> replay -> classifier -> broadcast backward) or the plain baseline,
//! and records per-epoch metrics.

use std::io::Write;

use thiserror::Error;

use crate::config::{BackboneKind, DatasetKind, TrainConfig};
use crate::data::{self, DataError, Dataset};
use crate::layer::{self, LayerError};
use crate::matrix::Matrix;
use crate::net::checkpoint::Checkpoint;
use crate::net::loss::{accuracy, softmax_cross_entropy, LossError};
use crate::net::{Model, SgdMomentum};
use crate::noise::{corrupt_labels, effective_noise_rate, NoiseError, NoiseMask};
use crate::replay::ReplayBuffer;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub const METRICS_HEADER: &str =
    "epoch,split,loss,accuracy,balls_total,balls_discarded,retained_fraction,effective_noise_rate,replay_rows";

/// One metrics row. Granular-ball fields are absent on the baseline path and
/// on test rows.
#[derive(Clone, Debug)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
    pub balls_total: Option<usize>,
    pub balls_discarded: Option<usize>,
    pub retained_fraction: Option<f64>,
    pub effective_noise_rate: Option<f64>,
    pub replay_rows: Option<usize>,
}

impl MetricsRecord {
    pub fn to_csv_line(&self) -> String {
        fn opt_u(v: Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn opt_f(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_default()
        }
        format!(
            "{},{},{:.6},{:.6},{},{},{},{},{}",
            self.epoch,
            self.split,
            self.loss,
            self.accuracy,
            opt_u(self.balls_total),
            opt_u(self.balls_discarded),
            opt_f(self.retained_fraction),
            opt_f(self.effective_noise_rate),
            opt_u(self.replay_rows),
        )
    }
}

pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    pub max_test_accuracy: f64,
    pub noise_mask: NoiseMask,
    pub checkpoint: Checkpoint,
    pub skipped_batches: usize,
}

/// Run the full experimental protocol for one config: load data, inject
/// training-label noise, train with or without the granular-ball layer, and
/// evaluate per epoch on the clean test split (GB layer bypassed).
pub fn run_experiment(config: &TrainConfig) -> Result<ExperimentOutcome, TrainError> {
    config.validate()?;

    // independent streams so e.g. changing epochs never re-seeds the data
    let mut data_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(1));
    let mut noise_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(2));
    let mut model_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(3));
    let mut loop_rng = SeededRng::new(config.seed.wrapping_mul(4).wrapping_add(4));

    let (train, test) = load_datasets(config, &mut data_rng)?;
    let mask = corrupt_labels(
        &train.labels,
        train.num_classes,
        config.noise_ratio,
        config.noise_selection,
        &mut noise_rng,
    )?;

    let mut model = match config.backbone {
        BackboneKind::Mlp => Model::mlp(train.features.cols(), train.num_classes, &mut model_rng),
        BackboneKind::Lenet => Model::lenet(train.num_classes, &mut model_rng),
    };
    let mut optimizer = SgdMomentum::new(config.lr, config.momentum, &model);
    let mut replay = ReplayBuffer::new(config.replay.clone());

    let mut records = Vec::new();
    let eval0 = evaluate(&model, &test, config.batch_size)?;
    records.push(MetricsRecord {
        epoch: 0,
        split: "test",
        loss: eval0.0,
        accuracy: eval0.1,
        balls_total: None,
        balls_discarded: None,
        retained_fraction: None,
        effective_noise_rate: None,
        replay_rows: None,
    });
    let mut max_test_accuracy = eval0.1;

    let n = train.len();
    let mut batch_id: u64 = 0;
    let mut skipped_batches = 0usize;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        loop_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        let mut acc_sum = 0.0;
        let mut acc_rows = 0usize;
        let mut epoch_balls_total = 0usize;
        let mut epoch_discarded = 0usize;
        let mut retained_samples = 0usize;
        let mut seen_samples = 0usize;
        let mut replay_rows_total = 0usize;
        let mut noise_targets: Vec<(usize, Vec<usize>)> = Vec::new();

        for chunk in order.chunks(config.batch_size) {
            let x = gather_rows(&train.features, chunk);
            let noisy: Vec<usize> = chunk.iter().map(|&i| mask.noisy_label[i]).collect();

            let (features, caches) = model.features_forward(&x);

            if config.gb_enabled {
                let gb = layer::forward(&features, &noisy, &config.gb)?;
                epoch_balls_total += gb.diagnostics.balls_total;
                epoch_discarded += gb.diagnostics.balls_discarded;
                seen_samples += chunk.len();
                retained_samples += gb
                    .membership
                    .retained()
                    .iter()
                    .map(|m| m.len())
                    .sum::<usize>();
                if gb.diagnostics.all_discarded {
                    skipped_batches += 1;
                    batch_id += 1;
                    continue;
                }
                for (row, members) in gb.membership.retained().iter().enumerate() {
                    noise_targets.push((
                        gb.centroid_labels[row],
                        members.iter().map(|&m| mask.clean_label[chunk[m]]).collect(),
                    ));
                }

                let mut inputs = gb.centroid_features.clone();
                let mut targets = gb.centroid_labels.clone();
                let mut membership = gb.membership.clone();
                let replayed = replay.sample(&mut loop_rng, config.replay.sample_count);
                for ball in &replayed {
                    inputs.push_row(ball.centroid.values());
                    targets.push(ball.label);
                }
                membership.append_replay_rows(replayed.len());
                replay_rows_total += replayed.len();

                let logits = model.classifier_forward(&inputs);
                let (loss, dlogits) = softmax_cross_entropy(&logits, &targets)?;
                loss_sum += loss * inputs.rows() as f64;
                loss_rows += inputs.rows();
                acc_sum += accuracy(&logits, &targets) * inputs.rows() as f64;
                acc_rows += inputs.rows();

                let (dcentroids, cgrads) = model.classifier_backward(&inputs, &dlogits);
                let dfeatures =
                    layer::backward(&dcentroids, &membership, config.gb.gradient_mode)?;
                let fgrads = model.features_backward(&caches, &dfeatures);
                optimizer.step(
                    &mut model,
                    &crate::net::ModelGrads {
                        feature: fgrads,
                        classifier: cgrads,
                    },
                );
                replay.store(&gb.balls, batch_id);
            } else {
                let logits = model.classifier_forward(&features);
                let (loss, dlogits) = softmax_cross_entropy(&logits, &noisy)?;
                loss_sum += loss * chunk.len() as f64;
                loss_rows += chunk.len();
                acc_sum += accuracy(&logits, &noisy) * chunk.len() as f64;
                acc_rows += chunk.len();
                let (dfeatures, cgrads) = model.classifier_backward(&features, &dlogits);
                let fgrads = model.features_backward(&caches, &dfeatures);
                optimizer.step(
                    &mut model,
                    &crate::net::ModelGrads {
                        feature: fgrads,
                        classifier: cgrads,
                    },
                );
            }
            batch_id += 1;
        }

        let gb_fields = config.gb_enabled;
        records.push(MetricsRecord {
            epoch,
            split: "train",
            loss: if loss_rows > 0 { loss_sum / loss_rows as f64 } else { 0.0 },
            accuracy: if acc_rows > 0 { acc_sum / acc_rows as f64 } else { 0.0 },
            balls_total: gb_fields.then_some(epoch_balls_total),
            balls_discarded: gb_fields.then_some(epoch_discarded),
            retained_fraction: gb_fields.then(|| {
                if seen_samples > 0 {
                    retained_samples as f64 / seen_samples as f64
                } else {
                    0.0
                }
            }),
            effective_noise_rate: if gb_fields && !noise_targets.is_empty() {
                Some(effective_noise_rate(&noise_targets)?)
            } else {
                None
            },
            replay_rows: gb_fields.then_some(replay_rows_total),
        });

        let (test_loss, test_acc) = evaluate(&model, &test, config.batch_size)?;
        max_test_accuracy = max_test_accuracy.max(test_acc);
        records.push(MetricsRecord {
            epoch,
            split: "test",
            loss: test_loss,
            accuracy: test_acc,
            balls_total: None,
            balls_discarded: None,
            retained_fraction: None,
            effective_noise_rate: None,
            replay_rows: None,
        });
    }

    Ok(ExperimentOutcome {
        records,
        max_test_accuracy,
        noise_mask: mask,
        checkpoint: Checkpoint {
            model,
            optimizer,
            rng: loop_rng,
        },
        skipped_batches,
    })
}

/// Clean-label evaluation with the GB layer bypassed: per-sample features
/// feed the classifier directly.
pub fn evaluate(
    model: &Model,
    test: &Dataset,
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    let n = test.len();
    let mut loss_sum = 0.0;
    let mut correct_weighted = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size) {
        let x = gather_rows(&test.features, chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| test.labels[i]).collect();
        let (features, _) = model.features_forward(&x);
        let logits = model.classifier_forward(&features);
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        correct_weighted += accuracy(&logits, &labels) * chunk.len() as f64;
    }
    Ok((loss_sum / n as f64, correct_weighted / n as f64))
}

pub fn load_datasets(
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(Dataset, Dataset), TrainError> {
    match config.dataset {
        DatasetKind::Blobs => {
            let train = data::make_blobs(
                config.blob_classes,
                config.blob_per_class,
                config.blob_spread,
                rng,
            )?;
            let test = data::make_blobs(
                config.blob_classes,
                config.blob_test_per_class,
                config.blob_spread,
                rng,
            )?;
            Ok((train, test))
        }
        DatasetKind::Cifar10 => {
            let dir = config.data_dir.as_ref().expect("validated");
            let train = data::load_cifar10(dir, config.subset_size, rng)?;
            let test = data::load_cifar10_test(dir)?;
            Ok((train, test))
        }
        DatasetKind::Cifar100 => {
            let dir = config.data_dir.as_ref().expect("validated");
            let train = data::load_cifar100_subset(dir, "train.bin", &config.superclasses)?;
            let test = data::load_cifar100_subset(dir, "test.bin", &config.superclasses)?;
            Ok((train, test))
        }
    }
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(0, m.cols());
    for &i in idx {
        out.push_row(m.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> TrainConfig {
        TrainConfig {
            blob_per_class: 40,
            blob_test_per_class: 25,
            epochs: 5,
            batch_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_yields_single_eval_row() {
        let config = TrainConfig {
            epochs: 0,
            ..quick_config()
        };
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].epoch, 0);
        assert_eq!(out.records[0].split, "test");
    }

    #[test]
    fn baseline_clean_blobs_reach_high_accuracy() {
        let config = TrainConfig {
            gb_enabled: false,
            epochs: 30,
            ..quick_config()
        };
        let out = run_experiment(&config).unwrap();
        assert!(
            out.max_test_accuracy >= 0.95,
            "max acc {}",
            out.max_test_accuracy
        );
        // baseline never reports clustering diagnostics
        for r in &out.records {
            assert!(r.balls_total.is_none());
        }
    }

    #[test]
    fn gb_clean_blobs_also_learn() {
        let config = TrainConfig {
            epochs: 30,
            ..quick_config()
        };
        let out = run_experiment(&config).unwrap();
        assert!(
            out.max_test_accuracy >= 0.95,
            "max acc {}",
            out.max_test_accuracy
        );
        let train_rows: Vec<&MetricsRecord> =
            out.records.iter().filter(|r| r.split == "train").collect();
        assert!(!train_rows.is_empty());
        for r in train_rows {
            let f = r.retained_fraction.unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn metrics_csv_is_deterministic() {
        let config = TrainConfig {
            noise_ratio: 0.2,
            epochs: 3,
            ..quick_config()
        };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_metrics_csv(&mut csv_a, &a.records).unwrap();
        write_metrics_csv(&mut csv_b, &b.records).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn csv_header_is_pinned() {
        assert_eq!(
            METRICS_HEADER,
            "epoch,split,loss,accuracy,balls_total,balls_discarded,retained_fraction,effective_noise_rate,replay_rows"
        );
    }
}
