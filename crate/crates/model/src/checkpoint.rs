//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `DLRMCKPT`, a little-endian u64 header length,
//! a UTF-8 JSON header, then every tensor listed in the header as
//! little-endian f64 in row-major order.
//!
//! Encoder tensors are stored in this order: `tok_emb`, `pos_emb`,
//! `emb_ln.{gamma,beta}`, then per layer `wq bq wk wv bv wo bo ln1.gamma
//! ln1.beta w1 b1 w2 b2 ln2.gamma ln2.beta`, then `mlm.w mlm.b cls.w cls.b`,
//! followed by the Adam moments `adam.m.<name>` and `adam.v.<name>` of every
//! tensor the optimizer has touched. A fixed numeric value table, when
//! present, comes last as `value_enc`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Adam, EncoderModel, ModelConfig, ModelError, Params};

pub const MAGIC: &[u8; 8] = b"DLRMCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: u32,
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        let header = Header {
            format: 1,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorInfo {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_u64::<LittleEndian>(json.len() as u64)?;
        out.write_all(&json)?;
        for t in &self.tensors {
            debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
            for &x in &t.data {
                out.write_f64::<LittleEndian>(x)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let len = input.read_u64::<LittleEndian>()? as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.format != 1 {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format {}",
                header.format
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            let n: usize = info.shape.iter().product();
            let mut data = vec![0.0; n];
            input.read_f64_into::<LittleEndian>(&mut data)?;
            tensors.push(NamedTensor {
                name: info.name,
                shape: info.shape,
                data,
            });
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderMeta {
    config: ModelConfig,
    rng_seed: u64,
    optimizer: Option<Adam>,
    extra: serde_json::Value,
}

/// Encoder weights, optional optimizer state and free-form metadata.
pub fn encoder_container(
    model: &EncoderModel,
    optimizer: Option<&Adam>,
    extra: serde_json::Value,
) -> Container {
    let mut tensors: Vec<NamedTensor> = model
        .params
        .tensors()
        .into_iter()
        .map(|t| NamedTensor {
            name: t.name,
            shape: t.shape,
            data: t.data.to_vec(),
        })
        .collect();
    if let Some(opt) = optimizer {
        let names: Vec<(String, Vec<usize>)> = tensors
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone()))
            .collect();
        for (i, (name, shape)) in names.into_iter().enumerate() {
            let (m, v) = opt.moments(i);
            if m.is_empty() {
                continue;
            }
            tensors.push(NamedTensor {
                name: format!("adam.m.{name}"),
                shape: shape.clone(),
                data: m.to_vec(),
            });
            tensors.push(NamedTensor {
                name: format!("adam.v.{name}"),
                shape,
                data: v.to_vec(),
            });
        }
    }
    if let Some(t) = &model.params.value_enc {
        tensors.push(NamedTensor {
            name: "value_enc".into(),
            shape: t.shape().to_vec(),
            data: t.iter().copied().collect(),
        });
    }
    let meta = EncoderMeta {
        config: model.config.clone(),
        rng_seed: model.rng_seed,
        optimizer: optimizer.cloned(),
        extra,
    };
    Container {
        kind: "encoder".into(),
        meta: serde_json::to_value(meta).expect("serializable"),
        tensors,
    }
}

pub struct LoadedEncoder {
    pub model: EncoderModel,
    pub optimizer: Option<Adam>,
    pub extra: serde_json::Value,
}

pub fn encoder_from_container(c: &Container) -> Result<LoadedEncoder, ModelError> {
    if c.kind != "encoder" {
        return Err(ModelError::Checkpoint(format!(
            "expected an encoder checkpoint, found `{}`",
            c.kind
        )));
    }
    let meta: EncoderMeta = serde_json::from_value(c.meta.clone())?;
    meta.config.validate()?;
    let mut params = Params::init(&meta.config, 0);
    let mut missing = None;
    params.for_each_mut(|name, _, data| match c.tensor(name) {
        Some(t) if t.data.len() == data.len() => data.copy_from_slice(&t.data),
        _ => missing = missing.take().or(Some(name.to_owned())),
    });
    if let Some(name) = missing {
        return Err(ModelError::Checkpoint(format!(
            "tensor `{name}` missing or mis-shaped"
        )));
    }
    if let Some(t) = c.tensor("value_enc") {
        let shape = (meta.config.vocab_size, meta.config.hidden_dim);
        if t.shape != [shape.0, shape.1] {
            return Err(ModelError::Checkpoint(
                "tensor `value_enc` mis-shaped".into(),
            ));
        }
        let table = Array2::from_shape_vec(shape, t.data.clone()).expect("shape checked");
        params.value_enc = Some(std::sync::Arc::new(table));
    }
    let optimizer = meta.optimizer.map(|mut opt| {
        for (i, t) in params.tensors().iter().enumerate() {
            if let (Some(m), Some(v)) = (
                c.tensor(&format!("adam.m.{}", t.name)),
                c.tensor(&format!("adam.v.{}", t.name)),
            ) {
                opt.set_moments(i, m.data.clone(), v.data.clone());
            }
        }
        opt
    });
    Ok(LoadedEncoder {
        model: EncoderModel {
            config: meta.config,
            params,
            rng_seed: meta.rng_seed,
        },
        optimizer,
        extra: meta.extra,
    })
}

pub fn save_encoder(
    path: &Path,
    model: &EncoderModel,
    optimizer: Option<&Adam>,
    extra: serde_json::Value,
) -> Result<(), ModelError> {
    encoder_container(model, optimizer, extra).save(path)
}

pub fn load_encoder(path: &Path) -> Result<LoadedEncoder, ModelError> {
    encoder_from_container(&Container::load(path)?)
}
