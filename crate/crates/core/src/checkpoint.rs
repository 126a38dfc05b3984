//! Versioned on-disk model state.
//!
//! Layout: the magic line `HYPGEO1\n`, the header length as a little-endian
//! `u64`, a JSON header, then every tensor as little-endian `f32` values
//! back to back. The header's manifest gives each tensor's name, shape and
//! element offset into the payload.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::RunConfig;
use crate::delta_mapper::{DeltaMapper, MapperConfig};
use crate::error::{Error, Result};
use crate::hyp_nn::{HypModel, ModelConfig, Parameterized};
use crate::training::{AdamConfig, AdamState, Optimizer, StepDecay};

pub const MAGIC: &[u8; 8] = b"HYPGEO1\n";

/// Bumped when the header or tensor naming changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub format: u32,
    pub library: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            format: FORMAT_VERSION,
            library: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// In elements, not bytes.
    pub offset: usize,
}

/// Scalar optimizer state; the moment tensors live in the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    lr: f64,
    lr_manifold: f64,
    schedule: StepDecay,
    adam: AdamConfig,
    naive_manifold: bool,
    step: usize,
    skipped: usize,
    /// Adam step counters, one per parameter tensor.
    counters: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    versions: Versions,
    /// 2 after Stage II, 3 once a mapper is attached.
    stage: u8,
    config: RunConfig,
    model: ModelConfig,
    mapper: Option<MapperConfig>,
    model_optimizer: Option<OptimizerHeader>,
    mapper_optimizer: Option<OptimizerHeader>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stage: u8,
    pub config: RunConfig,
    pub model: HypModel,
    pub mapper: Option<DeltaMapper>,
    pub model_optimizer: Option<Optimizer>,
    pub mapper_optimizer: Option<Optimizer>,
}

impl Checkpoint {
    pub fn stage2(config: RunConfig, model: HypModel, optimizer: Option<Optimizer>) -> Self {
        Checkpoint {
            stage: 2,
            config,
            model,
            mapper: None,
            model_optimizer: optimizer,
            mapper_optimizer: None,
        }
    }

    /// Attaches a trained mapper, turning this into a Stage-III checkpoint.
    pub fn with_mapper(mut self, mapper: DeltaMapper, optimizer: Option<Optimizer>) -> Self {
        self.stage = 3;
        self.mapper = Some(mapper);
        self.mapper_optimizer = optimizer;
        self
    }

    pub fn mapper(&self) -> Result<&DeltaMapper> {
        self.mapper
            .as_ref()
            .ok_or_else(|| Error::usage("checkpoint has no delta mapper; run train --stage 3 first"))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        let mean = Tensor::row_vector(self.model.feature_mean().to_vec());
        tensors.push(("model.feature_mean".into(), &mean));
        for p in self.model.params() {
            tensors.push((format!("model.{}", p.name), p.value));
        }
        if let Some(m) = &self.mapper {
            for p in m.params() {
                tensors.push((format!("mapper.{}", p.name), p.value));
            }
        }
        let model_opt = push_optimizer("model_opt", self.model_optimizer.as_ref(), &mut tensors);
        let mapper_opt = push_optimizer("mapper_opt", self.mapper_optimizer.as_ref(), &mut tensors);

        let mut manifest = Vec::with_capacity(tensors.len());
        let mut offset = 0;
        for (name, t) in &tensors {
            manifest.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape(),
                offset,
            });
            offset += t.len();
        }
        let header = Header {
            versions: Versions::default(),
            stage: self.stage,
            config: self.config.clone(),
            model: self.model.config().clone(),
            mapper: self.mapper.as_ref().map(|m| m.config().clone()),
            model_optimizer: model_opt,
            mapper_optimizer: mapper_opt,
            tensors: manifest,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::data(format!("checkpoint header: {e}")))?;

        let mut out = Vec::with_capacity(16 + json.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::data("not a checkpoint (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(Error::data("checkpoint header is truncated"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::data(format!("checkpoint header: {e}")))?;
        if header.versions.format != FORMAT_VERSION {
            return Err(Error::data(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                header.versions.format
            )));
        }
        let payload = &body[hlen..];
        if payload.len() % 4 != 0 {
            return Err(Error::data("checkpoint payload is not a whole number of f32 values"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();

        let mut expected = 0;
        for e in &header.tensors {
            if e.offset != expected {
                return Err(Error::data(format!("tensor {} is not contiguous in the payload", e.name)));
            }
            expected += e.shape[0] * e.shape[1];
        }
        if expected != values.len() {
            return Err(Error::data(format!(
                "manifest describes {expected} values but the payload holds {}",
                values.len()
            )));
        }
        let mut reader = Reader {
            entries: &header.tensors,
            values: &values,
            next: 0,
        };

        let mut model = HypModel::zeros(header.model.clone())?;
        let mean = reader.take("model.feature_mean", [1, header.model.feat_dim])?;
        model.set_feature_mean(mean.data())?;
        for p in model.params_mut() {
            *p.value = reader.take(&format!("model.{}", p.name), p.value.shape())?;
        }
        let mapper = match &header.mapper {
            None => None,
            Some(mc) => {
                let mut m = DeltaMapper::zeros(mc.clone())?;
                for p in m.params_mut() {
                    *p.value = reader.take(&format!("mapper.{}", p.name), p.value.shape())?;
                }
                Some(m)
            }
        };
        let model_optimizer = header
            .model_optimizer
            .as_ref()
            .map(|h| reader.optimizer("model_opt", h, &model.params().iter().map(|p| p.value.shape()).collect::<Vec<_>>()))
            .transpose()?;
        let mapper_optimizer = match (&header.mapper_optimizer, &mapper) {
            (Some(h), Some(m)) => {
                let shapes: Vec<_> = m.params().iter().map(|p| p.value.shape()).collect();
                Some(reader.optimizer("mapper_opt", h, &shapes)?)
            }
            (Some(_), None) => return Err(Error::data("mapper optimizer state without a mapper")),
            (None, _) => None,
        };
        if reader.next != header.tensors.len() {
            return Err(Error::data(format!(
                "unexpected tensor {} in checkpoint",
                header.tensors[reader.next].name
            )));
        }
        if header.stage == 3 && mapper.is_none() || header.stage != 2 && header.stage != 3 {
            return Err(Error::data(format!("inconsistent checkpoint stage {}", header.stage)));
        }
        Ok(Checkpoint {
            stage: header.stage,
            config: header.config,
            model,
            mapper,
            model_optimizer,
            mapper_optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

fn push_optimizer<'a>(
    prefix: &str,
    opt: Option<&'a Optimizer>,
    tensors: &mut Vec<(String, &'a Tensor)>,
) -> Option<OptimizerHeader> {
    let opt = opt?;
    for (i, s) in opt.states.iter().enumerate() {
        tensors.push((format!("{prefix}.{i}.m"), &s.m));
        tensors.push((format!("{prefix}.{i}.v"), &s.v));
    }
    Some(OptimizerHeader {
        lr: opt.lr,
        lr_manifold: opt.lr_manifold,
        schedule: opt.schedule,
        adam: opt.adam,
        naive_manifold: opt.naive_manifold,
        step: opt.step,
        skipped: opt.skipped,
        counters: opt.states.iter().map(|s| s.t).collect(),
    })
}

struct Reader<'a> {
    entries: &'a [ManifestEntry],
    values: &'a [f64],
    next: usize,
}

impl Reader<'_> {
    fn take(&mut self, name: &str, shape: [usize; 2]) -> Result<Tensor> {
        let e = self
            .entries
            .get(self.next)
            .ok_or_else(|| Error::data(format!("tensor {name} missing from checkpoint")))?;
        if e.name != name {
            return Err(Error::data(format!("expected tensor {name}, found {}", e.name)));
        }
        if e.shape != shape {
            return Err(Error::data(format!(
                "tensor {name} has shape {:?}, the model expects {:?}",
                e.shape, shape
            )));
        }
        self.next += 1;
        let n = shape[0] * shape[1];
        Tensor::new(self.values[e.offset..e.offset + n].to_vec(), shape[0], shape[1])
    }

    fn optimizer(&mut self, prefix: &str, h: &OptimizerHeader, shapes: &[[usize; 2]]) -> Result<Optimizer> {
        if h.counters.len() != shapes.len() {
            return Err(Error::data(format!(
                "{prefix} holds state for {} tensors, expected {}",
                h.counters.len(),
                shapes.len()
            )));
        }
        let mut states = Vec::with_capacity(shapes.len());
        for (i, (&shape, &t)) in shapes.iter().zip(&h.counters).enumerate() {
            let m = self.take(&format!("{prefix}.{i}.m"), shape)?;
            let v = self.take(&format!("{prefix}.{i}.v"), shape)?;
            states.push(AdamState { m, v, t });
        }
        Ok(Optimizer {
            states,
            lr: h.lr,
            lr_manifold: h.lr_manifold,
            schedule: h.schedule,
            adam: h.adam,
            naive_manifold: h.naive_manifold,
            step: h.step,
            skipped: h.skipped,
        })
    }
}
