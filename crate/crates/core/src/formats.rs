//! The binary container shared by data dumps, arm datasets, checkpoints and
//! error-map sidecars, plus 8-bit graymap output.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "MMLABCT\0"
//! version    u32      1
//! kind       str
//! n_header   u32, then n_header × (key: str, value: str)
//! n_blocks   u32, then n_blocks × (name: str, rank: u32, dims: rank × u64, data: f32 × prod(dims))
//! str        u32 byte length, UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::arm::{ArmConfig, Dataset, ZScore};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, RngStream, Tensor};
use crate::synthetic::SyntheticWorld;

pub const MAGIC: &[u8; 8] = b"MMLABCT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub kind: String,
    pub header: Vec<(String, String)>,
    pub blocks: Vec<(String, Tensor)>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        path: "<stream>".into(),
        reason: reason.into(),
    }
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let len = get_u32(r)? as usize;
    let mut b = Vec::new();
    r.take(len as u64).read_to_end(&mut b).map_err(|e| bad(format!("truncated: {e}")))?;
    if b.len() != len {
        return Err(bad("truncated string"));
    }
    String::from_utf8(b).map_err(|_| bad("string is not UTF-8"))
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Container {
            kind: kind.to_string(),
            ..Container::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key).ok_or_else(|| bad(format!("missing header field {key}")))?;
        v.parse().map_err(|_| bad(format!("header field {key} = {v:?} does not parse")))
    }

    pub fn push(&mut self, name: &str, t: Tensor) -> &mut Self {
        self.blocks.push((name.to_string(), t));
        self
    }

    pub fn block(&self, name: &str) -> Result<&Tensor> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| bad(format!("missing block {name}")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        put_str(w, &self.kind)?;
        w.write_all(&(self.header.len() as u32).to_le_bytes())?;
        for (k, v) in &self.header {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        w.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for (name, t) in &self.blocks {
            put_str(w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("shorter than the magic string"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let kind = get_str(r)?;
        let mut header = Vec::new();
        for _ in 0..get_u32(r)? {
            header.push((get_str(r)?, get_str(r)?));
        }
        let mut blocks = Vec::new();
        for _ in 0..get_u32(r)? {
            let name = get_str(r)?;
            let rank = get_u32(r)? as usize;
            let shape = (0..rank).map(|_| Ok(get_u64(r)? as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape.iter().product::<usize>();
            let mut raw = Vec::new();
            r.take(count as u64 * 4).read_to_end(&mut raw).map_err(|e| bad(format!("truncated: {e}")))?;
            if raw.len() != count * 4 {
                return Err(bad(format!("block {name} is truncated")));
            }
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            blocks.push((name, Tensor::new(&shape, data)?));
        }
        Ok(Container { kind, header, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Container::read_from(&mut BufReader::new(f)).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(bad(format!("expected a {kind} container, found {}", self.kind)));
        }
        Ok(())
    }
}

/// Fresh synthetic batches, sources and observations, for cross-checks.
pub fn dump_synthetic(world: &SyntheticWorld, batches: usize, batch_size: usize, rng: &mut RngStream) -> Result<Container> {
    let spec = world.spec;
    let mut x_m = Vec::new();
    let mut x_e = vec![Vec::new(); spec.n];
    let mut y = vec![Vec::new(); spec.n];
    for _ in 0..batches {
        let (s, m) = world.sample(batch_size, rng)?;
        x_m.extend_from_slice(s.x_m.data());
        for i in 0..spec.n {
            x_e[i].extend_from_slice(s.x_e[i].data());
            y[i].extend_from_slice(m.y[i].data());
        }
    }
    let rows = batches * batch_size;
    let mut c = Container::new("synthetic");
    c.set("d_m", spec.d_m)
        .set("d_e", spec.d_e)
        .set("n", spec.n)
        .set("k", spec.k)
        .set("seed", spec.seed)
        .set("batches", batches)
        .set("batch_size", batch_size);
    c.push("x_m", Tensor::new(&[rows, spec.d_m], x_m)?);
    for i in 0..spec.n {
        c.push(&format!("x_e.{i}"), Tensor::new(&[rows, spec.d_e], std::mem::take(&mut x_e[i]))?);
        c.push(&format!("y.{i}"), Tensor::new(&[rows, spec.d_y()], std::mem::take(&mut y[i]))?);
    }
    Ok(c)
}

fn zscore_tensor(z: &ZScore) -> Result<Tensor> {
    let mut data = z.mean.clone();
    data.extend_from_slice(&z.std);
    Tensor::new(&[2, z.mean.len()], data)
}

fn zscore_from(t: &Tensor) -> ZScore {
    ZScore {
        mean: t.row(0).to_vec(),
        std: t.row(1).to_vec(),
    }
}

impl Dataset {
    pub fn to_container(&self) -> Result<Container> {
        let cfg = &self.config;
        let mut c = Container::new("arm_dataset");
        c.set("H", cfg.height)
            .set("W", cfg.width)
            .set("J", cfg.joints)
            .set("N", self.len())
            .set("n_train", self.n_train)
            .set("config", toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?);
        c.push("proprio_zscore", zscore_tensor(&self.proprio_norm)?)
            .push("target_zscore", zscore_tensor(&self.target_norm)?)
            .push("images", self.images.clone())
            .push("proprio", self.proprio.clone())
            .push("targets", self.targets.clone())
            .push("raw_targets", self.raw_targets.clone());
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("arm_dataset")?;
        let config: ArmConfig = toml::from_str(c.get("config").unwrap_or_default())
            .map_err(|e| bad(format!("arm config does not parse: {e}")))?;
        let d = Dataset {
            images: c.block("images")?.clone(),
            proprio: c.block("proprio")?.clone(),
            targets: c.block("targets")?.clone(),
            raw_targets: c.block("raw_targets")?.clone(),
            proprio_norm: zscore_from(c.block("proprio_zscore")?),
            target_norm: zscore_from(c.block("target_zscore")?),
            n_train: c.parse("n_train")?,
            config,
        };
        if d.images.cols() != d.config.pixels() || d.len() != c.parse::<usize>("N")? {
            return Err(bad("dataset blocks disagree with the header"));
        }
        Ok(d)
    }
}

/// Named parameter blocks of a trained network.
pub fn checkpoint(store: &ParamStore, kind: &str) -> Container {
    let mut c = Container::new("checkpoint");
    c.set("model", kind).set("params", store.len());
    for (_, name, t) in store.iter() {
        c.push(name, t.clone());
    }
    c
}

/// Copies checkpoint blocks into a store with the same parameter names.
pub fn restore(store: &mut ParamStore, c: &Container) -> Result<()> {
    c.expect_kind("checkpoint")?;
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let t = c.block(&name)?;
        if t.shape() != store.get(id).shape() {
            return Err(Error::shape("restore", store.get(id).shape(), t.shape()));
        }
        *store.get_mut(id) = t.clone();
    }
    Ok(())
}

/// Binary (P5) graymap; values are mapped linearly from `[0, max]` to `[0, 255]`
/// so darker means lower.
pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::shape("write_pgm", &[height * width], &[values.len()]));
    }
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| (v.max(0.0) * scale).round().min(255.0) as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// An image as a graymap plus the exact values in a container sidecar.
pub fn write_error_map(stem: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    write_pgm(&stem.with_extension("pgm"), values, height, width)?;
    let mut c = Container::new("error_map");
    c.set("H", height).set("W", width);
    c.push(
        "mse",
        Tensor::new(&[height, width], values.iter().map(|&v| v as f32).collect())?,
    );
    c.save(&stem.with_extension("bin"))
}
