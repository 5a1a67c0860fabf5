//! Model files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic      8 bytes  "TRJMODEL"
//! version    u32      1
//! transfer   u32      0 = tansig, 1 = hardlim, 2 = purelin
//! depth      u64      J
//! sizes      u64 x (J + 1)
//! in_min, in_max    f64 x N_0 each
//! out_min, out_max  f64 x N_J each
//! weights    f64 x n_weights, flat layout of NetworkParams
//! meta_len   u64
//! meta       meta_len bytes of UTF-8 JSON (ModelMeta)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Real;

use super::{
    check_dim, forward, forward_batch, Architecture, NetError, NetworkParams, Normalizer, RangeMap, TransferKind,
};

const MAGIC: &[u8; 8] = b"TRJMODEL";
const VERSION: u32 = 1;

/// Free-form record of how a model was obtained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMeta {
    pub system: Option<String>,
    /// Interval of the output time grid; the grid has `N_J` points.
    pub t0: Option<f64>,
    pub tf: Option<f64>,
    pub transfer: Option<String>,
    pub method: Option<String>,
    pub stop_reason: Option<String>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub weight_seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub mse_train: Option<f64>,
    pub mse_valid: Option<f64>,
    pub mse_test: Option<f64>,
}

/// A network with its scaling and metadata: everything needed to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Surrogate<T> {
    pub net: NetworkParams<T>,
    pub norm: Normalizer<T>,
    pub meta: ModelMeta,
}

#[derive(Serialize)]
struct JsonLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize)]
struct JsonModel<'a> {
    transfer: TransferKind,
    sizes: &'a [usize],
    input_min: Vec<f64>,
    input_max: Vec<f64>,
    output_min: Vec<f64>,
    output_max: Vec<f64>,
    layers: Vec<JsonLayer>,
    meta: &'a ModelMeta,
}

fn to_f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl<T: Real> Surrogate<T> {
    pub fn new(net: NetworkParams<T>, norm: Normalizer<T>) -> Result<Self, NetError> {
        check_dim("input normalizer", net.input_dim(), norm.input.len())?;
        check_dim("output normalizer", net.output_dim(), norm.output.len())?;
        Ok(Self {
            net,
            norm,
            meta: ModelMeta::default(),
        })
    }

    pub fn predict(&self, p: &[T]) -> Result<Vec<T>, NetError> {
        forward(&self.net, &self.norm, p)
    }

    pub fn predict_batch(&self, params: &Matrix<T>) -> Result<Matrix<T>, NetError> {
        forward_batch(&self.net, &self.norm, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.net.transfer().tag().to_le_bytes())?;
        w.write_all(&(self.net.depth() as u64).to_le_bytes())?;
        for &n in self.net.sizes() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        let ranges = [
            self.norm.input.min(),
            self.norm.input.max(),
            self.norm.output.min(),
            self.norm.output.max(),
            self.net.as_slice(),
        ];
        for v in ranges.into_iter().flatten() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        let meta = serde_json::to_vec(&self.meta).map_err(|e| NetError::Format(e.to_string()))?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::Format("bad magic bytes".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NetError::UnsupportedVersion(version));
        }
        let tag = read_u32(r)?;
        let transfer =
            TransferKind::from_tag(tag).ok_or_else(|| NetError::Format(format!("unknown transfer tag {tag}")))?;
        let depth = read_u64(r)?;
        if depth == 0 || depth > 1024 {
            return Err(NetError::Format(format!("implausible depth {depth}")));
        }
        let sizes = (0..=depth)
            .map(|_| read_u64(r).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let arch = Architecture::new(sizes, transfer)?;
        let (q, m) = (arch.input_dim(), arch.output_dim());
        let in_min = read_f64s(r, q)?;
        let in_max = read_f64s(r, q)?;
        let out_min = read_f64s(r, m)?;
        let out_max = read_f64s(r, m)?;
        let weights = read_f64s(r, arch.n_weights())?;
        let meta_len = read_u64(r)? as usize;
        let mut meta = Vec::new();
        r.take(meta_len as u64).read_to_end(&mut meta)?;
        if meta.len() != meta_len {
            return Err(NetError::Format("file is truncated".into()));
        }
        let meta: ModelMeta = serde_json::from_slice(&meta).map_err(|e| NetError::Format(e.to_string()))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(NetError::Format("trailing bytes after metadata".into()));
        }
        let norm = Normalizer {
            input: RangeMap::from_bounds(in_min, in_max),
            output: RangeMap::from_bounds(out_min, out_max),
        };
        let mut s = Self::new(NetworkParams::from_flat(arch, weights)?, norm)?;
        s.meta = meta;
        Ok(s)
    }

    /// Human-readable export with per-layer weight matrices.
    pub fn to_json(&self) -> String {
        let layers = (1..=self.net.depth())
            .map(|j| {
                let (a, b) = self.net.layer(j);
                let cols = self.net.sizes()[j - 1];
                JsonLayer {
                    weights: a.chunks_exact(cols).map(to_f64s).collect(),
                    bias: to_f64s(b),
                }
            })
            .collect();
        let model = JsonModel {
            transfer: self.net.transfer(),
            sizes: self.net.sizes(),
            input_min: to_f64s(self.norm.input.min()),
            input_max: to_f64s(self.norm.input.max()),
            output_min: to_f64s(self.norm.output.min()),
            output_max: to_f64s(self.norm.output.max()),
            layers,
            meta: &self.meta,
        };
        serde_json::to_string_pretty(&model).expect("model serializes")
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), NetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NetError::Format("file is truncated".into())
        } else {
            NetError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NetError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read, T: Real>(r: &mut R, n: usize) -> Result<Vec<T>, NetError> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}
