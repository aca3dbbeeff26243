//! Named parameters, their initialization and the checkpoint file.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textseek_tensor::{init, Gradients, Graph, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

/// Every learnable array of a model, keyed by a dotted name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    tensors: BTreeMap<String, Tensor>,
}

fn conv_w(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
    init::he_normal(&shape, shape[1] * shape[2] * shape[3], rng)
}

fn conv(store: &mut ParameterStore, name: &str, shape: [usize; 4], rng: &mut impl Rng) {
    store.insert(&format!("{name}.w"), conv_w(shape, rng));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[shape[0]]));
}

/// A convolution followed by group normalization with unit scale.
fn conv_gn(store: &mut ParameterStore, name: &str, shape: [usize; 4], rng: &mut impl Rng) {
    conv(store, name, shape, rng);
    store.insert(&format!("{name}.gn.g"), Tensor::full(&[shape[0]], 1.0));
    store.insert(&format!("{name}.gn.b"), Tensor::zeros(&[shape[0]]));
}

fn lstm(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) {
    store.insert(&format!("{name}.w_ih"), init::fan_in_uniform(&[4 * hidden, input], hidden, rng));
    store.insert(&format!("{name}.w_hh"), init::fan_in_uniform(&[4 * hidden, hidden], hidden, rng));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[4 * hidden]));
}

impl ParameterStore {
    /// Fresh parameters for `config`, drawn from `rng` in a fixed order.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w = config.backbone_width;
        let f = config.pyramid_channels();
        let c = config.channels;
        let h = c / 2;
        let mut s = ParameterStore::default();
        conv_gn(&mut s, "backbone.c1", [w, 3, 3, 3], rng);
        conv_gn(&mut s, "backbone.c2", [2 * w, w, 3, 3], rng);
        conv_gn(&mut s, "backbone.r2a", [2 * w, 2 * w, 3, 3], rng);
        conv_gn(&mut s, "backbone.r2b", [2 * w, 2 * w, 3, 3], rng);
        conv_gn(&mut s, "backbone.c3", [4 * w, 2 * w, 3, 3], rng);
        conv_gn(&mut s, "backbone.r3a", [4 * w, 4 * w, 3, 3], rng);
        conv_gn(&mut s, "backbone.r3b", [4 * w, 4 * w, 3, 3], rng);
        // Residual branches start as the identity.
        s.insert("backbone.r2b.gn.g", Tensor::zeros(&[2 * w]));
        s.insert("backbone.r3b.gn.g", Tensor::zeros(&[4 * w]));
        conv(&mut s, "fpn.lat2", [f, 2 * w, 1, 1], rng);
        conv(&mut s, "fpn.lat3", [f, 4 * w, 1, 1], rng);
        conv(&mut s, "fpn.out2", [f, f, 3, 3], rng);
        conv_gn(&mut s, "head.tower", [f, f, 3, 3], rng);
        conv(&mut s, "head.out", [6, f, 3, 3], rng);
        s.insert("head.out.w", init::normal(&[6, f, 3, 3], 0.01, rng));
        let prior = 0.01f64;
        let mut bias = vec![0.0; 6];
        bias[0] = -((1.0 - prior) / prior).ln();
        bias[1..5].fill(1.0);
        s.insert("head.out.b", Tensor::new(&[6], bias));

        conv_gn(&mut s, "image_s2sm.conv1", [f, f, 3, 3], rng);
        conv_gn(&mut s, "image_s2sm.conv2", [f, f, 3, 3], rng);
        lstm(&mut s, "image_s2sm.fw", f, h, rng);
        lstm(&mut s, "image_s2sm.bw", f, h, rng);

        s.insert("text.embedding", init::normal(&[config.charset_size, f], 0.5, rng));
        s.insert("text_s2sm.proj.w", init::fan_in_uniform(&[f, f], f, rng));
        s.insert("text_s2sm.proj.b", Tensor::zeros(&[f]));
        lstm(&mut s, "text_s2sm.fw", f, h, rng);
        lstm(&mut s, "text_s2sm.bw", f, h, rng);

        s.insert("ctc.w", init::fan_in_uniform(&[config.num_classes(), c], c, rng));
        s.insert("ctc.b", Tensor::zeros(&[config.num_classes()]));
        let d = config.feature_dim();
        s.insert("phoc.w", init::fan_in_uniform(&[config.phoc_dim(), d], d, rng));
        s.insert("phoc.b", Tensor::zeros(&[config.phoc_dim()]));
        Ok(s)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.tensors.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Registers every parameter as a tracked leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> Binding {
        let vars = self.tensors.iter().map(|(k, v)| (k.clone(), graph.param(v.clone()))).collect();
        Binding { vars }
    }

    /// Pairs existing graph leaves with parameter names in [`Self::names`]
    /// order, e.g. for finite-difference checks that own the leaves.
    pub fn bind_vars(&self, vars: &[Var]) -> Binding {
        assert_eq!(vars.len(), self.tensors.len(), "one var per parameter");
        let vars = self.tensors.keys().cloned().zip(vars.iter().copied()).collect();
        Binding { vars }
    }
}

/// Parameter names mapped to graph leaves for one forward pass.
pub struct Binding {
    vars: HashMap<String, Var>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter {name} is not bound"),
        }
    }

    /// Gradients by parameter name; parameters that did not take part in the
    /// loss are absent.
    pub fn gradients(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.vars.iter().filter_map(|(k, v)| grads.take(*v).map(|g| (k.clone(), g))).collect()
    }
}

/// Keys of [`Checkpoint::meta`] written by training.
pub mod meta {
    /// The charset in its one-symbol-per-line text form.
    pub const CHARSET: &str = "charset";
    pub const FOLD_CASE: &str = "fold_case";
    pub const MODE: &str = "mode";
    pub const SEED: &str = "seed";
    pub const ITERATIONS: &str = "iterations";
}

const MAGIC: &[u8; 6] = b"TSCKPT";
const VERSION: u32 = 1;
const AUX_PREFIX: &str = "retrieval/";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: BTreeMap<String, String>,
    tensors: Vec<(String, Vec<usize>)>,
}

/// Parameters plus everything needed to rebuild the model that owns them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterStore,
    /// Separate retrieval network, when detection and retrieval were
    /// trained apart.
    pub retrieval: Option<ParameterStore>,
    /// Free-form strings such as the charset and the training mode.
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParameterStore) -> Self {
        Checkpoint {
            config,
            params,
            retrieval: None,
            meta: BTreeMap::new(),
        }
    }

    fn entries(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self.params.iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(r) = &self.retrieval {
            out.extend(r.iter().map(|(k, v)| (format!("{AUX_PREFIX}{k}"), v)));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let entries = self.entries();
        let header = Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: entries.iter().map(|(k, t)| (k.clone(), t.shape().to_vec())).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let numel: usize = entries.iter().map(|(_, t)| t.numel()).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + 8 * numel);
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u64::<LittleEndian>(json.len() as u64).unwrap();
        out.extend_from_slice(&json);
        for (_, t) in entries {
            for &v in t.data() {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| ModelError::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let mut magic = [0u8; 6];
        bytes.read_exact(&mut magic).map_err(|_| fail("truncated".into()))?;
        if &magic != MAGIC {
            return Err(fail("bad magic".into()));
        }
        let version = bytes.read_u32::<LittleEndian>().map_err(|_| fail("truncated".into()))?;
        if version != VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let len = bytes.read_u64::<LittleEndian>().map_err(|_| fail("truncated".into()))? as usize;
        if bytes.len() < len {
            return Err(fail("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[..len]).map_err(|e| fail(e.to_string()))?;
        bytes = &bytes[len..];
        header.config.validate()?;
        let mut params = ParameterStore::default();
        let mut retrieval = ParameterStore::default();
        for (name, shape) in header.tensors {
            let n: usize = shape.iter().product();
            if bytes.len() < 8 * n {
                return Err(fail(format!("data for {name} is truncated")));
            }
            let mut data = vec![0.0; n];
            bytes.read_f64_into::<LittleEndian>(&mut data).map_err(|e| fail(e.to_string()))?;
            let t = Tensor::new(&shape, data);
            match name.strip_prefix(AUX_PREFIX) {
                Some(rest) => retrieval.insert(rest, t),
                None => params.insert(&name, t),
            }
        }
        if !bytes.is_empty() {
            return Err(fail(format!("{} trailing bytes", bytes.len())));
        }
        Ok(Checkpoint {
            config: header.config,
            params,
            retrieval: (!retrieval.is_empty()).then_some(retrieval),
            meta: header.meta,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.to_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes, path)
    }
}
