//! Binary checkpoint format, all little-endian:
//!
//! ```text
//! magic "GATM" | version u32 | seed u64
//! input_dim u32 | hidden_dim u32 | heads u32 | layers u32 | num_users u64 | num_items u64
//! dropout f64 | attention_slope f64 | activation_slope f64 | layer_norm_eps f64
//! flags u32 (bit 0 train_features, bit 1 propagate_negative, bit 2 features stored)
//! epochs_run u32 | best_epoch u32 | best_val_loss f64 | final_train_loss f64 | final_val_loss f64
//! user ids u64 × U | item ids u64 × I
//! per layer: per head weight (row-major) then attention; skip; gain; bias   (f32)
//! user embeddings U × hidden_dim | item embeddings I × hidden_dim           (f32)
//! features (N × input_dim, f32) when flag bit 2 is set
//! ```

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelConfig, ModelParams, TrainedModel, TrainingMeta};
use crate::graph::NodeIndex;
use crate::linalg::Matrix;

const MAGIC: &[u8; 4] = b"GATM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint: {0}")]
    Format(String),
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f32s(&mut self, vs: &[f64]) -> io::Result<()> {
        for &v in vs {
            self.0.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, out: &mut [f64]) -> io::Result<()> {
        for v in out {
            *v = f32::from_le_bytes(self.bytes()?) as f64;
        }
        Ok(())
    }
}

impl TrainedModel {
    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<(), CheckpointError> {
        let mut o = Out(w);
        let c = &self.params.config;
        o.0.write_all(MAGIC)?;
        o.u32(VERSION)?;
        o.u64(self.meta.seed)?;
        for d in [c.input_dim, c.hidden_dim, c.heads, c.layers] {
            o.u32(d as u32)?;
        }
        o.u64(self.node_index.num_users() as u64)?;
        o.u64(self.node_index.num_items() as u64)?;
        for v in [c.dropout, c.attention_slope, c.activation_slope, c.layer_norm_eps] {
            o.f64(v)?;
        }
        let flags = (c.train_features as u32)
            | ((c.propagate_negative as u32) << 1)
            | ((self.features.is_some() as u32) << 2);
        o.u32(flags)?;
        o.u32(self.meta.epochs_run as u32)?;
        o.u32(self.meta.best_epoch as u32)?;
        o.f64(self.meta.best_val_loss)?;
        o.f64(self.meta.final_train_loss)?;
        o.f64(self.meta.final_val_loss)?;
        for &id in self.node_index.user_ids().iter().chain(self.node_index.item_ids()) {
            o.u64(id)?;
        }
        for t in self.params.tensors() {
            o.f32s(t)?;
        }
        o.f32s(self.user_embeddings.as_slice())?;
        o.f32s(self.item_embeddings.as_slice())?;
        if let Some(f) = &self.features {
            o.f32s(f.as_slice())?;
        }
        o.0.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self, CheckpointError> {
        let mut i = In(r);
        if &i.bytes::<4>()? != MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let version = i.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {version}")));
        }
        let seed = i.u64()?;
        let input_dim = i.u32()? as usize;
        let hidden_dim = i.u32()? as usize;
        let heads = i.u32()? as usize;
        let layers = i.u32()? as usize;
        let num_users = i.u64()? as usize;
        let num_items = i.u64()? as usize;
        let dropout = i.f64()?;
        let attention_slope = i.f64()?;
        let activation_slope = i.f64()?;
        let layer_norm_eps = i.f64()?;
        let flags = i.u32()?;
        let config = ModelConfig {
            input_dim,
            hidden_dim,
            heads,
            layers,
            dropout,
            attention_slope,
            activation_slope,
            layer_norm_eps,
            train_features: flags & 1 != 0,
            propagate_negative: flags & 2 != 0,
        };
        config
            .validate()
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        let meta = TrainingMeta {
            seed,
            epochs_run: i.u32()? as usize,
            best_epoch: i.u32()? as usize,
            best_val_loss: i.f64()?,
            final_train_loss: i.f64()?,
            final_val_loss: i.f64()?,
            history: Vec::new(),
        };
        let user_ids = (0..num_users).map(|_| i.u64()).collect::<io::Result<Vec<_>>>()?;
        let item_ids = (0..num_items).map(|_| i.u64()).collect::<io::Result<Vec<_>>>()?;
        let node_index = NodeIndex::new(&user_ids, &item_ids);
        if node_index.num_users() != num_users || node_index.num_items() != num_items {
            return Err(CheckpointError::Format("duplicate node ids".into()));
        }
        let mut params = ModelParams::init(&config, 0)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        for t in params.tensors_mut() {
            i.f32s(t)?;
        }
        let mut user_embeddings = Matrix::zeros(num_users, hidden_dim);
        i.f32s(user_embeddings.as_mut_slice())?;
        let mut item_embeddings = Matrix::zeros(num_items, hidden_dim);
        i.f32s(item_embeddings.as_mut_slice())?;
        let features = if flags & 4 != 0 {
            let mut f = Matrix::zeros(num_users + num_items, input_dim);
            i.f32s(f.as_mut_slice())?;
            Some(f)
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if i.0.read(&mut rest)? != 0 {
            return Err(CheckpointError::Format("trailing bytes".into()));
        }
        Ok(Self {
            node_index,
            user_embeddings,
            item_embeddings,
            params,
            features,
            meta,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}
