//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "PLCSDCKP"
//! version    u32      currently 1
//! stage      str      training stage that wrote the file
//! config     str      JSON echo of the configuration
//! epoch      u64
//! rng        32-byte ChaCha seed, u128 word position, u64 stream
//! groups     u32 count, then per group:
//!              name str, u32 tensor count, then per tensor:
//!                name str, u32 rows, u32 cols, rows*cols f32
//! extras     u32 count, then per entry: name str, u64 length, length f64
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. Parameters are stored
//! as f32; training keeps them f32-representable, so saving is lossless.
//! Extras carry optimizer state at full precision for exact resumption.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Adam, Module, Param, Tensor};

pub const MAGIC: &[u8; 8] = b"PLCSDCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub tensors: Vec<NamedTensor>,
}

impl ParamGroup {
    pub fn from_module(name: &str, module: &dyn Module) -> Self {
        Self {
            name: name.to_string(),
            tensors: module
                .params()
                .into_iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    rows: p.value.rows,
                    cols: p.value.cols,
                    data: p.value.data.iter().map(|&v| v as f32).collect(),
                })
                .collect(),
        }
    }

    /// Copies stored values into `module`, checking names and shapes.
    pub fn load_into(&self, module: &mut dyn Module) -> Result<()> {
        let params = module.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "group {}: checkpoint has {} tensors, model expects {}",
                self.name,
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.into_iter().zip(&self.tensors) {
            if p.name != t.name || p.value.rows != t.rows || p.value.cols != t.cols {
                return Err(Error::Format(format!(
                    "group {}: tensor {} ({}x{}) does not match model tensor {} ({}x{})",
                    self.name, t.name, t.rows, t.cols, p.name, p.value.rows, p.value.cols
                )));
            }
            p.value = Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|&v| v as f64).collect());
        }
        Ok(())
    }
}

/// Serializable state of a ChaCha8 generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub stream: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub config_json: String,
    pub epoch: u64,
    pub rng: RngState,
    pub groups: Vec<ParamGroup>,
    pub extras: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(stage: &str, config_json: String) -> Self {
        Self {
            stage: stage.to_string(),
            config_json,
            epoch: 0,
            rng: RngState::default(),
            groups: Vec::new(),
            extras: Vec::new(),
        }
    }

    pub fn group(&self, name: &str) -> Result<&ParamGroup> {
        self.groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no parameter group {name}")))
    }

    pub fn extra(&self, name: &str) -> Option<&[f64]> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Stores an optimizer's step count and moments under `prefix`.
    pub fn push_optimizer(&mut self, prefix: &str, opt: &Adam) {
        let (m, v) = opt.moments();
        let flat = |ts: &[Tensor]| ts.iter().flat_map(|t| t.data.iter().copied()).collect::<Vec<f64>>();
        self.extras.push((format!("{prefix}.steps"), vec![opt.steps as f64]));
        self.extras.push((format!("{prefix}.first"), flat(m)));
        self.extras.push((format!("{prefix}.second"), flat(v)));
    }

    /// Restores optimizer state saved by [`Checkpoint::push_optimizer`];
    /// `params` supplies the moment shapes.
    pub fn restore_optimizer(&self, prefix: &str, opt: &mut Adam, params: &[&Param]) -> Result<()> {
        let Some(steps) = self.extra(&format!("{prefix}.steps")) else {
            return Ok(());
        };
        let steps = steps.first().copied().unwrap_or(0.0) as u64;
        let first = self.extra(&format!("{prefix}.first")).unwrap_or(&[]);
        let second = self.extra(&format!("{prefix}.second")).unwrap_or(&[]);
        if steps == 0 || first.is_empty() {
            opt.restore(steps, Vec::new(), Vec::new());
            return Ok(());
        }
        let total: usize = params.iter().map(|p| p.numel()).sum();
        if first.len() != total || second.len() != total {
            return Err(Error::Format(format!("{prefix}: optimizer state does not match parameter shapes")));
        }
        let split = |flat: &[f64]| {
            let mut out = Vec::with_capacity(params.len());
            let mut at = 0;
            for p in params {
                let n = p.numel();
                out.push(Tensor::from_vec(p.value.rows, p.value.cols, flat[at..at + n].to_vec()));
                at += n;
            }
            out
        };
        opt.restore(steps, split(first), split(second));
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut w, &self.stage)?;
        write_str(&mut w, &self.config_json)?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&self.rng.seed)?;
        w.write_all(&self.rng.word_pos.to_le_bytes())?;
        w.write_all(&self.rng.stream.to_le_bytes())?;
        w.write_all(&(self.groups.len() as u32).to_le_bytes())?;
        for g in &self.groups {
            write_str(&mut w, &g.name)?;
            w.write_all(&(g.tensors.len() as u32).to_le_bytes())?;
            for t in &g.tensors {
                write_str(&mut w, &t.name)?;
                w.write_all(&(t.rows as u32).to_le_bytes())?;
                w.write_all(&(t.cols as u32).to_le_bytes())?;
                for v in &t.data {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.write_all(&(self.extras.len() as u32).to_le_bytes())?;
        for (name, values) in &self.extras {
            write_str(&mut w, name)?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let stage = read_str(&mut r)?;
        let config_json = read_str(&mut r)?;
        let epoch = read_u64(&mut r)?;
        let mut seed = [0u8; 32];
        read_exact(&mut r, &mut seed)?;
        let mut wp = [0u8; 16];
        read_exact(&mut r, &mut wp)?;
        let stream = read_u64(&mut r)?;
        let n_groups = read_u32(&mut r)?;
        let mut groups = Vec::with_capacity(n_groups.min(64) as usize);
        for _ in 0..n_groups {
            let name = read_str(&mut r)?;
            let n = read_u32(&mut r)?;
            let mut tensors = Vec::with_capacity(n.min(1024) as usize);
            for _ in 0..n {
                let tname = read_str(&mut r)?;
                let rows = read_u32(&mut r)? as usize;
                let cols = read_u32(&mut r)? as usize;
                let len = rows
                    .checked_mul(cols)
                    .filter(|&l| l <= 1 << 28)
                    .ok_or_else(|| Error::Format(format!("tensor {tname}: implausible shape {rows}x{cols}")))?;
                let mut bytes = vec![0u8; len * 4];
                read_exact(&mut r, &mut bytes)?;
                let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                tensors.push(NamedTensor {
                    name: tname,
                    rows,
                    cols,
                    data,
                });
            }
            groups.push(ParamGroup { name, tensors });
        }
        let n_extras = read_u32(&mut r)?;
        let mut extras = Vec::with_capacity(n_extras.min(64) as usize);
        for _ in 0..n_extras {
            let name = read_str(&mut r)?;
            let len = read_u64(&mut r)?;
            if len > 1 << 28 {
                return Err(Error::Format(format!("extra {name}: implausible length {len}")));
            }
            let mut bytes = vec![0u8; len as usize * 8];
            read_exact(&mut r, &mut bytes)?;
            extras.push((name, bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            stage,
            config_json,
            epoch,
            rng: RngState {
                seed,
                word_pos: u128::from_le_bytes(wp),
                stream,
            },
            groups,
            extras,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice()).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 26 {
        return Err(Error::Format("implausible string length".into()));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("string is not UTF-8".into()))
}
