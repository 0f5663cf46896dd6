use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Frontend, ModelConfig, CONV_LAYERS};
use crate::config::KvDocument;
use crate::binio::{read_bytes, read_u32, read_u64, write_bytes};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.05;

const CHECKPOINT_MAGIC: &[u8; 8] = b"S2SCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

/// All weights of one model, keyed by layer name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: BTreeMap<String, Arc<Tensor>>,
}

impl ModelParams {
    /// Uniform `[-0.05, 0.05]` initialization from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::random(config, seed, INIT_RANGE)
    }

    /// Uniform `[-range, range]` values for every tensor.
    pub fn random(config: &ModelConfig, seed: u64, range: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-range..=range)).collect();
                (name, Arc::new(Tensor::new(shape, data).expect("shape product")))
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn from_tensors(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != tensors.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, shape) in &expected {
            match tensors.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::InvalidConfig(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::InvalidConfig(format!("missing parameter {name}"))),
            }
        }
        Ok(Self {
            config,
            tensors: tensors.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name).map(Arc::as_ref)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Mutable access for optimizer updates; copies on write if shared.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    /// 64-bit FNV-1a digest over names, shapes and raw value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in &self.tensors {
            eat(name.as_bytes());
            for &d in t.shape() {
                eat(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Short identifier derived from [`fingerprint`](Self::fingerprint).
    pub fn model_id(&self) -> String {
        format!("m{:016x}", self.fingerprint())
    }

    /// Place every tensor on `tape` without copying storage.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundParams {
        let vars = self
            .tensors
            .values()
            .map(|t| tape.leaf_shared(Arc::clone(t), requires_grad))
            .collect();
        self.bind_vars(vars)
    }

    /// Assemble handles from vars already on a tape, one per tensor in
    /// name order (the order of [`iter`](Self::iter)).
    pub fn bind_vars(&self, vars: Vec<Var>) -> BoundParams {
        assert_eq!(vars.len(), self.tensors.len(), "one var per parameter tensor");
        let mut named = Vec::with_capacity(self.tensors.len());
        let mut lookup = BTreeMap::new();
        for (name, v) in self.tensors.keys().zip(vars) {
            named.push((name.clone(), v));
            lookup.insert(name.as_str(), v);
        }
        let get = |n: &str| lookup[n];
        let cfg = &self.config;
        let frontend = match cfg.frontend {
            Frontend::Linear => vec![(get("frontend.w"), get("frontend.b"))],
            Frontend::ConvStack => (0..CONV_LAYERS)
                .map(|i| (get(&format!("frontend.conv{i}.w")), get(&format!("frontend.conv{i}.b"))))
                .collect(),
        };
        let lstm = |prefix: String| LstmVars {
            w_ih: get(&format!("{prefix}.w_ih")),
            w_hh: get(&format!("{prefix}.w_hh")),
            b: get(&format!("{prefix}.b")),
        };
        let encoder = (0..cfg.encoder_layers)
            .map(|l| [lstm(format!("encoder.{l}.fw")), lstm(format!("encoder.{l}.bw"))])
            .collect();
        let decoder = (0..cfg.decoder_layers)
            .map(|l| lstm(format!("decoder.{l}")))
            .collect();
        BoundParams {
            frontend,
            encoder,
            att_query: get("attention.query"),
            att_key: get("attention.key"),
            att_bias: get("attention.bias"),
            att_v: get("attention.v"),
            embedding: get("decoder.embedding"),
            decoder,
            dense_w: get("output.dense.w"),
            dense_b: get("output.dense.b"),
            proj_w: get("output.proj.w"),
            proj_b: get("output.proj.b"),
            named,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Versioned binary container: magic, version, config as key-value
    /// text, then `(name, shape, f64 values)` per tensor, little endian.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let mut doc = KvDocument::default();
        for (k, v) in self.config.to_kv("model.") {
            doc.push(k, v);
        }
        write_bytes(w, doc.render().as_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_bytes(w, name.as_bytes())?;
            w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let header = String::from_utf8(read_bytes(r)?)
            .map_err(|_| Error::format("checkpoint", "config is not UTF-8"))?;
        let doc = KvDocument::parse(&header)?;
        let mut config = ModelConfig::default();
        for (k, v) in doc.entries() {
            let key = k
                .strip_prefix("model.")
                .ok_or_else(|| Error::format("checkpoint", format!("unexpected key {k}")))?;
            config.set(key, v)?;
        }
        let count = read_u64(r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(r)?)
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            let rank = read_u64(r)? as usize;
            if rank > 8 {
                return Err(Error::format("checkpoint", format!("rank {rank} for {name}")));
            }
            let shape = (0..rank)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Self::from_tensors(config, tensors)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

/// Parameter handles on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub frontend: Vec<(Var, Var)>,
    pub encoder: Vec<[LstmVars; 2]>,
    pub att_query: Var,
    pub att_key: Var,
    pub att_bias: Var,
    pub att_v: Var,
    pub embedding: Var,
    pub decoder: Vec<LstmVars>,
    pub dense_w: Var,
    pub dense_b: Var,
    pub proj_w: Var,
    pub proj_b: Var,
    pub named: Vec<(String, Var)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 7).unwrap();
        let b = ModelParams::init(&cfg, 7).unwrap();
        let c = ModelParams::init(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(a
            .iter()
            .all(|(_, t)| t.data().iter().all(|v| v.abs() <= INIT_RANGE)));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let cfg = ModelConfig {
            frontend: Frontend::ConvStack,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 3).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let q = ModelParams::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.fingerprint(), q.fingerprint());
        let mut again = Vec::new();
        q.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let p = ModelParams::init(&ModelConfig::default(), 3).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ModelParams::read_from(&mut buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(ModelParams::read_from(&mut buf.as_slice()).is_err());
    }
}
