//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "SANI" | version u32 | config_len u32 | config JSON
//! repeated: name_len u32 | name | rank u32 | dims u64 × rank | f64 × prod(dims)
//! CRC-64/ECMA-182 of everything above, u64
//! ```
//!
//! Records are the model parameters in enumeration order, then the Adam
//! moments (`optim.m/<name>`, `optim.v/<name>`) when present, then the
//! counters `state.epoch`, `state.rng_seed` and `state.adam_step`. A counter
//! is stored as a `[2]` record holding its high and low 32-bit halves.

use std::path::Path;

use crc::{Crc, CRC_64_ECMA_182};

use super::config::{ModelConfig, Variant};
use super::params::{param_layout, ModelParams};
use crate::error::{Result, SaniError};
use crate::ndtensor::{AdamState, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"SANI";
pub const FORMAT_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

/// Model plus everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<AdamState>,
    pub epoch: u64,
    pub rng_seed: u64,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
}

fn counter(v: u64) -> Tensor {
    Tensor::new(vec![2], vec![(v >> 32) as f64, (v & 0xffff_ffff) as f64]).expect("2 values")
}

fn read_counter(t: &Tensor, name: &str) -> Result<u64> {
    let d = t.data();
    let ok = d.len() == 2 && d.iter().all(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 4294967296.0);
    if !ok {
        return Err(SaniError::CorruptFile(format!("bad counter record {name}")));
    }
    Ok(((d[0] as u64) << 32) | d[1] as u64)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(SaniError::CorruptFile("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn record(&mut self) -> Result<(String, Tensor)> {
        let n = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(n)?)
            .map_err(|_| SaniError::CorruptFile("record name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(SaniError::CorruptFile(format!("{name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c > 0 && c <= (self.buf.len() - self.pos) / 8)
            .ok_or_else(|| SaniError::CorruptFile(format!("{name}: bad shape {shape:?}")))?;
        let bytes = self.take(count * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((name, Tensor::new(shape, data)?))
    }
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        let seed = params.config.seed;
        Self {
            params,
            optimizer: None,
            epoch: 0,
            rng_seed: seed,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let cfg = serde_json::to_vec(&self.params.config).expect("config serializes");
        put_u32(&mut out, cfg.len() as u32);
        out.extend_from_slice(&cfg);
        for (name, t) in self.params.store.iter() {
            put_record(&mut out, name, t);
        }
        let mut adam_step = 0;
        if let Some(opt) = &self.optimizer {
            for (i, name) in self.params.store.names().iter().enumerate() {
                put_record(&mut out, &format!("optim.m/{name}"), &opt.m[i]);
                put_record(&mut out, &format!("optim.v/{name}"), &opt.v[i]);
            }
            adam_step = opt.step;
        }
        put_record(&mut out, "state.epoch", &counter(self.epoch));
        put_record(&mut out, "state.rng_seed", &counter(self.rng_seed));
        put_record(&mut out, "state.adam_step", &counter(adam_step));
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 4 + 8 {
            return Err(SaniError::CorruptFile("file too short".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(SaniError::CorruptFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(SaniError::FormatVersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if CRC64.checksum(body) != stored {
            return Err(SaniError::CorruptFile("checksum mismatch".into()));
        }

        let mut r = Reader { buf: body, pos: 8 };
        let n = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(n)?)
            .map_err(|e| SaniError::CorruptFile(format!("config: {e}")))?;
        config
            .validate()
            .map_err(|e| SaniError::CorruptFile(e.to_string()))?;

        let layout = param_layout(&config);
        let mut store = ParamStore::new();
        for (name, shape) in &layout {
            let (rname, t) = r.record()?;
            if &rname != name || t.shape() != shape.as_slice() {
                return Err(SaniError::CorruptFile(format!(
                    "expected {name} {shape:?}, found {rname} {:?}",
                    t.shape()
                )));
            }
            store.push(rname, t);
        }

        let mut m = Vec::new();
        let mut v = Vec::new();
        let mut counters = std::collections::HashMap::new();
        while !r.done() {
            let (name, t) = r.record()?;
            if let Some(p) = name.strip_prefix("optim.m/") {
                expect_param(&store, p, m.len(), &t)?;
                m.push(t);
            } else if let Some(p) = name.strip_prefix("optim.v/") {
                expect_param(&store, p, v.len(), &t)?;
                v.push(t);
            } else if name.starts_with("state.") {
                counters.insert(name.clone(), read_counter(&t, &name)?);
            } else {
                return Err(SaniError::CorruptFile(format!("unexpected record {name}")));
            }
        }
        let get = |k: &str| {
            counters
                .get(k)
                .copied()
                .ok_or_else(|| SaniError::CorruptFile(format!("missing {k}")))
        };
        let optimizer = match (m.len(), v.len()) {
            (0, 0) => None,
            (a, b) if a == store.len() && b == store.len() => Some(AdamState {
                m,
                v,
                step: get("state.adam_step")?,
            }),
            _ => return Err(SaniError::CorruptFile("incomplete optimizer state".into())),
        };
        Ok(Self {
            params: ModelParams { config, store },
            optimizer,
            epoch: get("state.epoch")?,
            rng_seed: get("state.rng_seed")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| SaniError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| SaniError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails with a configuration error when the stored model is of another
    /// variant.
    pub fn expect_variant(&self, variant: Variant) -> Result<()> {
        self.params.config.variant.expect(variant)
    }
}

fn expect_param(store: &ParamStore, name: &str, index: usize, t: &Tensor) -> Result<()> {
    if index >= store.len() || store.name(index) != name || !store.get(index).same_shape(t) {
        return Err(SaniError::CorruptFile(format!("optimizer record for {name} out of place")));
    }
    Ok(())
}
