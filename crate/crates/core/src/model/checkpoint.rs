//! Binary checkpoints.
//!
//! Layout: the magic line `XFM1`, then `key = value` header lines ending at a
//! blank line, then every parameter as a little-endian `f64` in group order.
//! Header keys: `version`, `seed`, `spec` (JSON), `schema` (JSON, optional),
//! `groups` (`name:len` list) and `count`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ModelParams, ModelSpec};
use crate::data::Schema;
use crate::error::{Error, Result};
use crate::numerics::Rng;

const MAGIC: &[u8] = b"XFM1\n";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub seed: u64,
    pub schema: Option<Schema>,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let groups = self.params.groups();
        let listing: Vec<String> = groups
            .iter()
            .map(|g| format!("{}:{}", g.name, g.values.len()))
            .collect();
        let count: usize = groups.iter().map(|g| g.values.len()).sum();
        let spec = serde_json::to_string(&self.spec).map_err(|e| ckpt_err(e.to_string()))?;

        let mut out = Vec::with_capacity(count * 8 + 1024);
        out.extend_from_slice(MAGIC);
        let mut header = format!("version = {VERSION}\nseed = {}\nspec = {spec}\n", self.seed);
        if let Some(schema) = &self.schema {
            let s = serde_json::to_string(schema).map_err(|e| ckpt_err(e.to_string()))?;
            header.push_str(&format!("schema = {s}\n"));
        }
        header.push_str(&format!("groups = {}\ncount = {count}\n\n", listing.join(",")));
        out.extend_from_slice(header.as_bytes());
        for g in &groups {
            for v in g.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| ckpt_err("bad magic, not a checkpoint file"))?;
        let end = rest
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| ckpt_err("truncated header"))?;
        let header = std::str::from_utf8(&rest[..end]).map_err(|_| ckpt_err("header is not UTF-8"))?;
        let body = &rest[end + 2..];

        let mut version = None;
        let mut seed = None;
        let mut spec = None;
        let mut schema = None;
        let mut groups = None;
        let mut count = None;
        for line in header.lines() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| ckpt_err(format!("malformed header line `{line}`")))?;
            match k {
                "version" => version = v.parse::<u32>().ok(),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| ckpt_err("bad seed"))?),
                "spec" => {
                    spec = Some(
                        serde_json::from_str::<ModelSpec>(v)
                            .map_err(|e| ckpt_err(format!("bad spec: {e}")))?,
                    )
                }
                "schema" => {
                    schema = Some(
                        serde_json::from_str::<Schema>(v)
                            .map_err(|e| ckpt_err(format!("bad schema: {e}")))?,
                    )
                }
                "groups" => groups = Some(v.to_string()),
                "count" => count = Some(v.parse::<usize>().map_err(|_| ckpt_err("bad count"))?),
                other => return Err(ckpt_err(format!("unknown header key `{other}`"))),
            }
        }
        match version {
            Some(VERSION) => {}
            Some(v) => return Err(ckpt_err(format!("unsupported version {v}"))),
            None => return Err(ckpt_err("missing version")),
        }
        let spec = spec.ok_or_else(|| ckpt_err("missing spec"))?;
        let count = count.ok_or_else(|| ckpt_err("missing count"))?;
        let groups = groups.ok_or_else(|| ckpt_err("missing groups"))?;

        let mut params = ModelParams::init(&spec, 0.0, &mut Rng::new(0))
            .map_err(|e| ckpt_err(format!("spec does not describe a model: {e}")))?;
        let expected: Vec<String> = params
            .groups()
            .iter()
            .map(|g| format!("{}:{}", g.name, g.values.len()))
            .collect();
        if expected.join(",") != groups {
            return Err(ckpt_err("parameter groups do not match the model spec"));
        }
        if count != params.num_parameters() {
            return Err(ckpt_err("parameter count does not match the model spec"));
        }
        if body.len() < count * 8 {
            return Err(ckpt_err(format!(
                "truncated body: {} bytes for {count} parameters",
                body.len()
            )));
        }
        if body.len() > count * 8 {
            return Err(ckpt_err("trailing bytes after parameters"));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.set_flat(&flat)?;
        Ok(Checkpoint {
            spec,
            params,
            seed: seed.unwrap_or(0),
            schema,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(params: &ModelParams, spec: &ModelSpec, path: &Path) -> Result<()> {
    Checkpoint {
        spec: spec.clone(),
        params: params.clone(),
        seed: 0,
        schema: None,
    }
    .save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelSpec)> {
    let c = Checkpoint::load(path)?;
    Ok((c.params, c.spec))
}
