//! Versioned binary checkpoint: layer specs, all parameters, optimizer
//! state, and RNG position. Save/load round-trips bit-exactly.

use std::io::{Read, Write};

use thiserror::Error;

use crate::rng::SeededRng;

use super::layers::{ConvLayer, DenseLayer};
use super::{Layer, Model, SgdMomentum};

const MAGIC: &[u8; 4] = b"GBNN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("unknown layer tag {0}")]
    BadLayerTag(u8),
}

#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: SgdMomentum,
    pub rng: SeededRng,
}

pub fn save<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;

    put_u32(&mut w, ckpt.model.feature_layers.len() as u32)?;
    for layer in &ckpt.model.feature_layers {
        match layer {
            Layer::Dense(d) => {
                w.write_all(&[0])?;
                put_u32(&mut w, d.input as u32)?;
                put_u32(&mut w, d.output as u32)?;
                put_f64s(&mut w, &d.w)?;
                put_f64s(&mut w, &d.b)?;
            }
            Layer::Relu => w.write_all(&[1])?,
            Layer::Conv5x5(c) => {
                w.write_all(&[2])?;
                for v in [c.in_ch, c.out_ch, c.in_h, c.in_w] {
                    put_u32(&mut w, v as u32)?;
                }
                put_f64s(&mut w, &c.w)?;
                put_f64s(&mut w, &c.b)?;
            }
            Layer::MaxPool2x2 { ch, in_h, in_w } => {
                w.write_all(&[3])?;
                for v in [*ch, *in_h, *in_w] {
                    put_u32(&mut w, v as u32)?;
                }
            }
            Layer::Flatten => w.write_all(&[4])?,
        }
    }
    put_u32(&mut w, ckpt.model.classifier.input as u32)?;
    put_u32(&mut w, ckpt.model.classifier.output as u32)?;
    put_f64s(&mut w, &ckpt.model.classifier.w)?;
    put_f64s(&mut w, &ckpt.model.classifier.b)?;

    put_f64(&mut w, ckpt.optimizer.learning_rate)?;
    put_f64(&mut w, ckpt.optimizer.momentum)?;
    put_u64(&mut w, ckpt.optimizer.velocity().len() as u64)?;
    put_f64s(&mut w, ckpt.optimizer.velocity())?;

    put_u64(&mut w, ckpt.rng.seed())?;
    let pos = ckpt.rng.word_pos();
    put_u64(&mut w, (pos >> 64) as u64)?;
    put_u64(&mut w, pos as u64)?;
    Ok(())
}

pub fn load<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }

    let n_layers = get_u32(&mut r)? as usize;
    let mut feature_layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let layer = match tag[0] {
            0 => {
                let input = get_u32(&mut r)? as usize;
                let output = get_u32(&mut r)? as usize;
                let w = get_f64s(&mut r, input * output)?;
                let b = get_f64s(&mut r, output)?;
                Layer::Dense(DenseLayer { input, output, w, b })
            }
            1 => Layer::Relu,
            2 => {
                let in_ch = get_u32(&mut r)? as usize;
                let out_ch = get_u32(&mut r)? as usize;
                let in_h = get_u32(&mut r)? as usize;
                let in_w = get_u32(&mut r)? as usize;
                let w = get_f64s(&mut r, out_ch * in_ch * 25)?;
                let b = get_f64s(&mut r, out_ch)?;
                Layer::Conv5x5(ConvLayer { in_ch, out_ch, in_h, in_w, w, b })
            }
            3 => {
                let ch = get_u32(&mut r)? as usize;
                let in_h = get_u32(&mut r)? as usize;
                let in_w = get_u32(&mut r)? as usize;
                Layer::MaxPool2x2 { ch, in_h, in_w }
            }
            4 => Layer::Flatten,
            t => return Err(CheckpointError::BadLayerTag(t)),
        };
        feature_layers.push(layer);
    }
    let input = get_u32(&mut r)? as usize;
    let output = get_u32(&mut r)? as usize;
    let w = get_f64s(&mut r, input * output)?;
    let b = get_f64s(&mut r, output)?;
    let model = Model {
        feature_layers,
        classifier: DenseLayer { input, output, w, b },
    };

    let learning_rate = get_f64(&mut r)?;
    let momentum = get_f64(&mut r)?;
    let vlen = get_u64(&mut r)? as usize;
    let velocity = get_f64s(&mut r, vlen)?;
    let mut optimizer = SgdMomentum::new(learning_rate, momentum, &model);
    optimizer.set_velocity(velocity);

    let seed = get_u64(&mut r)?;
    let hi = get_u64(&mut r)? as u128;
    let lo = get_u64(&mut r)? as u128;
    let rng = SeededRng::restore(seed, (hi << 64) | lo);

    Ok(Checkpoint { model, optimizer, rng })
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> std::io::Result<()> {
    for &v in vs {
        put_f64(w, v)?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn get_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(get_f64(r)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(99);
        let model = Model::lenet(10, &mut rng);
        let mut opt = SgdMomentum::new(0.01, 0.9, &model);
        opt.set_velocity((0..model.param_count()).map(|i| i as f64 * 0.5).collect());
        for _ in 0..37 {
            rng.next_f64();
        }
        let ckpt = Checkpoint {
            model,
            optimizer: opt,
            rng,
        };
        let mut buf = Vec::new();
        save(&mut buf, &ckpt).unwrap();
        let loaded = load(buf.as_slice()).unwrap();
        assert_eq!(loaded.model, ckpt.model);
        assert_eq!(loaded.optimizer.velocity(), ckpt.optimizer.velocity());
        assert_eq!(loaded.optimizer.learning_rate, 0.01);
        assert_eq!(loaded.rng.word_pos(), ckpt.rng.word_pos());
        let mut a = loaded.rng;
        let mut b = ckpt.rng;
        assert_eq!(a.next_u64(), b.next_u64());

        // byte-identical re-save
        let mut buf2 = Vec::new();
        save(
            &mut buf2,
            &Checkpoint {
                model: load(buf.as_slice()).unwrap().model,
                optimizer: load(buf.as_slice()).unwrap().optimizer,
                rng: load(buf.as_slice()).unwrap().rng,
            },
        )
        .unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = b"NOPE0000".to_vec();
        assert!(matches!(
            load(buf.as_slice()).unwrap_err(),
            CheckpointError::BadMagic
        ));
    }

    #[test]
    fn truncated_file_errors() {
        let mut rng = SeededRng::new(1);
        let model = Model::mlp(2, 3, &mut rng);
        let ckpt = Checkpoint {
            optimizer: SgdMomentum::new(0.1, 0.0, &model),
            model,
            rng,
        };
        let mut buf = Vec::new();
        save(&mut buf, &ckpt).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(
            load(buf.as_slice()).unwrap_err(),
            CheckpointError::Io(_)
        ));
    }
}
