//! Datasets: synthetic Gaussian blobs and the CIFAR-10/100 binary formats.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: truncated record at byte offset {offset} (need {need} bytes)")]
    Truncated {
        path: PathBuf,
        offset: usize,
        need: usize,
    },
    #[error("{path}: label byte {label} out of range at record {record}")]
    BadLabel {
        path: PathBuf,
        label: u8,
        record: usize,
    },
    #[error("no classes selected")]
    NoClassesSelected,
    #[error("invalid size: {0}")]
    InvalidSize(String),
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Gaussian blobs with class centers evenly spaced on the unit circle.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    spread: f64,
    rng: &mut SeededRng,
) -> Result<Dataset, DataError> {
    if num_classes < 2 {
        return Err(DataError::InvalidSize(format!(
            "num_classes {num_classes} < 2"
        )));
    }
    if per_class < 1 {
        return Err(DataError::InvalidSize("per_class < 1".into()));
    }
    let mut rows = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
        let (cx, cy) = (angle.cos(), angle.sin());
        for _ in 0..per_class {
            rows.push(vec![
                cx + spread * rng.next_normal(),
                cy + spread * rng.next_normal(),
            ]);
            labels.push(c);
        }
    }
    Ok(Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        num_classes,
    })
}

const CIFAR_PIXELS: usize = 3 * 32 * 32;
const CIFAR10_RECORD: usize = 1 + CIFAR_PIXELS;
const CIFAR100_RECORD: usize = 2 + CIFAR_PIXELS;

/// Parse one CIFAR-10 binary batch file: records of 3073 bytes, a label byte
/// then 3072 channel-major pixels. Pixels scaled to [0, 1].
pub fn parse_cifar10_file(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>), DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    if bytes.len() % CIFAR10_RECORD != 0 {
        let offset = bytes.len() - bytes.len() % CIFAR10_RECORD;
        return Err(DataError::Truncated {
            path: path.to_owned(),
            offset,
            need: CIFAR10_RECORD,
        });
    }
    let mut rows = Vec::with_capacity(bytes.len() / CIFAR10_RECORD);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (record, chunk) in bytes.chunks_exact(CIFAR10_RECORD).enumerate() {
        let label = chunk[0];
        if label >= 10 {
            return Err(DataError::BadLabel {
                path: path.to_owned(),
                label,
                record,
            });
        }
        labels.push(label as usize);
        rows.push(chunk[1..].iter().map(|&b| b as f64 / 255.0).collect());
    }
    Ok((rows, labels))
}

/// Load the CIFAR-10 train split from the standard batch files and draw a
/// stratified random subset of `subset_size` (0 means everything).
pub fn load_cifar10(
    dir: &Path,
    subset_size: usize,
    rng: &mut SeededRng,
) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=5 {
        let (r, l) = parse_cifar10_file(&dir.join(format!("data_batch_{i}.bin")))?;
        rows.extend(r);
        labels.extend(l);
    }
    let (rows, labels) = if subset_size == 0 {
        (rows, labels)
    } else {
        stratified_subset(rows, labels, 10, subset_size, rng)?
    };
    Ok(Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        num_classes: 10,
    })
}

/// Load the CIFAR-10 test batch in full.
pub fn load_cifar10_test(dir: &Path) -> Result<Dataset, DataError> {
    let (rows, labels) = parse_cifar10_file(&dir.join("test_batch.bin"))?;
    Ok(Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        num_classes: 10,
    })
}

/// Parse one CIFAR-100 binary file: records of 3074 bytes (coarse label,
/// fine label, pixels). Returns (pixels, coarse, fine).
pub fn parse_cifar100_file(
    path: &Path,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, Vec<usize>), DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    if bytes.len() % CIFAR100_RECORD != 0 {
        let offset = bytes.len() - bytes.len() % CIFAR100_RECORD;
        return Err(DataError::Truncated {
            path: path.to_owned(),
            offset,
            need: CIFAR100_RECORD,
        });
    }
    let mut rows = Vec::new();
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    for (record, chunk) in bytes.chunks_exact(CIFAR100_RECORD).enumerate() {
        if chunk[0] >= 20 {
            return Err(DataError::BadLabel {
                path: path.to_owned(),
                label: chunk[0],
                record,
            });
        }
        if chunk[1] >= 100 {
            return Err(DataError::BadLabel {
                path: path.to_owned(),
                label: chunk[1],
                record,
            });
        }
        coarse.push(chunk[0] as usize);
        fine.push(chunk[1] as usize);
        rows.push(chunk[2..].iter().map(|&b| b as f64 / 255.0).collect());
    }
    Ok((rows, coarse, fine))
}

/// Keep only records whose coarse label is in `superclass_ids` and remap the
/// surviving fine labels onto a dense 0..k-1 range (sorted by fine label).
pub fn load_cifar100_subset(
    dir: &Path,
    file: &str,
    superclass_ids: &[usize],
) -> Result<Dataset, DataError> {
    if superclass_ids.is_empty() {
        return Err(DataError::NoClassesSelected);
    }
    let (rows, coarse, fine) = parse_cifar100_file(&dir.join(file))?;
    let mut kept_rows = Vec::new();
    let mut kept_fine = Vec::new();
    for i in 0..rows.len() {
        if superclass_ids.contains(&coarse[i]) {
            kept_rows.push(rows[i].clone());
            kept_fine.push(fine[i]);
        }
    }
    let mut distinct: Vec<usize> = kept_fine.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels: Vec<usize> = kept_fine
        .iter()
        .map(|f| distinct.binary_search(f).expect("fine label present"))
        .collect();
    Ok(Dataset {
        features: Matrix::from_rows(&kept_rows),
        labels,
        num_classes: distinct.len(),
    })
}

fn stratified_subset(
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    subset_size: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), DataError> {
    let per_class = subset_size / num_classes;
    if per_class == 0 {
        return Err(DataError::InvalidSize(format!(
            "subset_size {subset_size} too small for {num_classes} classes"
        )));
    }
    let mut keep = Vec::with_capacity(subset_size);
    for c in 0..num_classes {
        let class_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if class_idx.len() < per_class {
            return Err(DataError::InvalidSize(format!(
                "class {c} has only {} samples, need {per_class}",
                class_idx.len()
            )));
        }
        let mut picked: Vec<usize> = rng
            .sample_without_replacement(class_idx.len(), per_class)
            .into_iter()
            .map(|k| class_idx[k])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    let out_rows = keep.iter().map(|&i| rows[i].clone()).collect();
    let out_labels = keep.iter().map(|&i| labels[i]).collect();
    Ok((out_rows, out_labels))
}
