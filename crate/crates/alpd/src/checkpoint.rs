//! Single-file checkpoint container for trainer state.
//!
//! Layout: magic `ACKP`, format version (u32 LE), manifest length (u32 LE),
//! manifest JSON, then one length-prefixed UTEN blob (u64 LE byte count)
//! per tensor, in exactly the order the manifest lists. The manifest
//! carries the network configurations, the completed step count, and the
//! optimizer step counters; the blobs carry network parameters followed by
//! the Adam first and second moments. Decoding validates everything it
//! reads, so a tampered or truncated file fails with a format error rather
//! than producing a silently wrong trainer.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::critic::{CriticConfig, CriticParams};
use crate::error::{Error, Result};
use crate::fsio;
use crate::lpd::{LpdConfig, ReconNetParams};
use crate::tensor::{uten, Scalar, Tensor};
use crate::tomo::RadonTransform;
use crate::training::{AlpdTrainer, LpdTrainer, OptSnapshot, TrainConfig};

pub const MAGIC: &[u8; 4] = b"ACKP";
pub const VERSION: u32 = 1;

/// Which trainer a checkpoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Alpd,
    Lpd,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Alpd => write!(f, "alpd"),
            Kind::Lpd => write!(f, "lpd"),
        }
    }
}

/// JSON header stored inside the container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    kind: Kind,
    steps_done: u64,
    generator: LpdConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    critic: Option<CriticConfig>,
    generator_opt_t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    critic_opt_t: Option<u64>,
    tensors: Vec<String>,
}

/// Complete state of an adversarial training run.
#[derive(Debug, Clone)]
pub struct AlpdState<T: Scalar> {
    pub generator: ReconNetParams<T>,
    pub critic: CriticParams<T>,
    pub generator_opt: OptSnapshot<T>,
    pub critic_opt: OptSnapshot<T>,
    pub steps_done: u64,
}

impl<T: Scalar> AlpdState<T> {
    pub fn of(trainer: &AlpdTrainer<T>) -> Self {
        let (generator_opt, critic_opt) = trainer.opt_snapshots();
        Self {
            generator: trainer.generator.clone(),
            critic: trainer.critic.clone(),
            generator_opt,
            critic_opt,
            steps_done: trainer.steps_done(),
        }
    }

    /// Rebuild a trainer that continues exactly where this state stopped.
    pub fn into_trainer(
        self,
        radon: Arc<RadonTransform<T>>,
        config: TrainConfig,
    ) -> Result<AlpdTrainer<T>> {
        let mut t = AlpdTrainer::new(radon, self.generator, self.critic, config)?;
        t.restore(self.steps_done, self.generator_opt, self.critic_opt)?;
        Ok(t)
    }
}

/// Complete state of a supervised training run.
#[derive(Debug, Clone)]
pub struct LpdState<T: Scalar> {
    pub generator: ReconNetParams<T>,
    pub opt: OptSnapshot<T>,
    pub steps_done: u64,
}

impl<T: Scalar> LpdState<T> {
    pub fn of(trainer: &LpdTrainer<T>) -> Self {
        Self {
            generator: trainer.generator.clone(),
            opt: trainer.opt_snapshot(),
            steps_done: trainer.steps_done(),
        }
    }

    pub fn into_trainer(
        self,
        radon: Arc<RadonTransform<T>>,
        config: TrainConfig,
    ) -> Result<LpdTrainer<T>> {
        let mut t = LpdTrainer::new(radon, self.generator, config)?;
        t.restore(self.steps_done, self.opt)?;
        Ok(t)
    }
}

/// A decoded checkpoint of either kind.
#[derive(Debug, Clone)]
pub enum Checkpoint<T: Scalar> {
    Alpd(AlpdState<T>),
    Lpd(LpdState<T>),
}

impl<T: Scalar> Checkpoint<T> {
    pub fn kind(&self) -> Kind {
        match self {
            Checkpoint::Alpd(_) => Kind::Alpd,
            Checkpoint::Lpd(_) => Kind::Lpd,
        }
    }

    pub fn steps_done(&self) -> u64 {
        match self {
            Checkpoint::Alpd(s) => s.steps_done,
            Checkpoint::Lpd(s) => s.steps_done,
        }
    }

    /// The reconstruction network, whichever trainer produced it.
    pub fn generator(&self) -> &ReconNetParams<T> {
        match self {
            Checkpoint::Alpd(s) => &s.generator,
            Checkpoint::Lpd(s) => &s.generator,
        }
    }
}

fn moment_names(owner: &str, params: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * params.len());
    for kind in ["m", "v"] {
        out.extend(params.iter().map(|p| format!("opt.{owner}.{kind}.{p}")));
    }
    out
}

/// The exact tensor-name list a checkpoint of this shape must carry.
fn expected_names(kind: Kind, generator: &LpdConfig) -> Vec<String> {
    let gen_names = ReconNetParams::<f32>::param_names(generator);
    let mut out = gen_names.clone();
    if kind == Kind::Alpd {
        out.extend(CriticParams::<f32>::param_names());
    }
    out.extend(moment_names("generator", &gen_names));
    if kind == Kind::Alpd {
        out.extend(moment_names("critic", &CriticParams::<f32>::param_names()));
    }
    out
}

pub fn encode<T: Scalar>(ck: &Checkpoint<T>) -> Vec<u8> {
    let (manifest, tensors): (Manifest, Vec<&Tensor<T>>) = match ck {
        Checkpoint::Alpd(s) => {
            let mut tensors = s.generator.params();
            tensors.extend(s.critic.params());
            tensors.extend(s.generator_opt.m.iter());
            tensors.extend(s.generator_opt.v.iter());
            tensors.extend(s.critic_opt.m.iter());
            tensors.extend(s.critic_opt.v.iter());
            (
                Manifest {
                    kind: Kind::Alpd,
                    steps_done: s.steps_done,
                    generator: s.generator.config.clone(),
                    critic: Some(s.critic.config.clone()),
                    generator_opt_t: s.generator_opt.t,
                    critic_opt_t: Some(s.critic_opt.t),
                    tensors: expected_names(Kind::Alpd, &s.generator.config),
                },
                tensors,
            )
        }
        Checkpoint::Lpd(s) => {
            let mut tensors = s.generator.params();
            tensors.extend(s.opt.m.iter());
            tensors.extend(s.opt.v.iter());
            (
                Manifest {
                    kind: Kind::Lpd,
                    steps_done: s.steps_done,
                    generator: s.generator.config.clone(),
                    critic: None,
                    generator_opt_t: s.opt.t,
                    critic_opt_t: None,
                    tensors: expected_names(Kind::Lpd, &s.generator.config),
                },
                tensors,
            )
        }
    };
    debug_assert_eq!(manifest.tensors.len(), tensors.len());
    let header = serde_json::to_string(&manifest).expect("manifest serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in tensors {
        let blob = uten::encode(t);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint: truncated at {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Split a flat tensor list into (params, m, v), checking the moment
/// shapes against the parameters they track.
fn split_opt<T: Scalar>(
    mut tensors: Vec<Tensor<T>>,
    what: &str,
    t: u64,
) -> Result<(Vec<Tensor<T>>, OptSnapshot<T>)> {
    assert_eq!(tensors.len() % 3, 0, "caller sliced a params+m+v group");
    let n = tensors.len() / 3;
    let v = tensors.split_off(2 * n);
    let m = tensors.split_off(n);
    for (name, mom) in [("first", &m), ("second", &v)] {
        for (a, b) in mom.iter().zip(&tensors) {
            if a.shape() != b.shape() {
                return Err(Error::Format(format!(
                    "checkpoint: {what} {name}-moment shape {:?} does not track parameter shape {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
    }
    Ok((tensors, OptSnapshot { m, v, t }))
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "checkpoint: bad magic {magic:02x?}, expected \"ACKP\""
        )));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint: unsupported version {version} (expected {VERSION})"
        )));
    }
    let header_len = cur.u32("manifest length")? as usize;
    let header = cur.take(header_len, "manifest")?;
    let header = std::str::from_utf8(header)
        .map_err(|_| Error::Format("checkpoint: manifest is not UTF-8".into()))?;
    let manifest: Manifest = serde_json::from_str(header)
        .map_err(|e| Error::Format(format!("checkpoint: manifest: {e}")))?;
    manifest
        .generator
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint: {e}")))?;

    if manifest.tensors != expected_names(manifest.kind, &manifest.generator) {
        return Err(Error::Format(
            "checkpoint: tensor list does not match the declared networks".into(),
        ));
    }
    match (manifest.kind, &manifest.critic, manifest.critic_opt_t) {
        (Kind::Alpd, Some(c), Some(_)) => {
            c.validate().map_err(|e| Error::Format(format!("checkpoint: {e}")))?
        }
        (Kind::Lpd, None, None) => {}
        _ => {
            return Err(Error::Format(
                "checkpoint: critic fields do not match the declared kind".into(),
            ))
        }
    }

    let mut tensors: Vec<Tensor<T>> = Vec::with_capacity(manifest.tensors.len());
    for name in &manifest.tensors {
        let len = cur.u64(name)?;
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint: oversized blob for {name}")))?;
        let blob = cur.take(len, name)?;
        let t = uten::decode(blob)
            .and_then(uten::DynTensor::into_typed::<T>)
            .map_err(|e| Error::Format(format!("checkpoint: {name}: {e}")))?;
        tensors.push(t);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint: {} trailing bytes after the last tensor",
            bytes.len() - cur.pos
        )));
    }

    let wrap = |e: Error| Error::Format(format!("checkpoint: {e}"));
    match manifest.kind {
        Kind::Alpd => {
            let critic_cfg = manifest.critic.expect("matched above");
            let n_gen = ReconNetParams::<T>::param_names(&manifest.generator).len();
            let n_critic = CriticParams::<T>::param_names().len();
            let rest = tensors.split_off(n_gen + n_critic);
            let critic_params = tensors.split_off(n_gen);
            let opt_critic = rest[2 * n_gen..].to_vec();
            let opt_gen = rest[..2 * n_gen].to_vec();

            let generator = ReconNetParams::from_tensors(&manifest.generator, tensors)
                .map_err(wrap)?;
            let critic =
                CriticParams::from_tensors(&critic_cfg, critic_params).map_err(wrap)?;
            let mut gen_group = generator.params().into_iter().cloned().collect::<Vec<_>>();
            gen_group.extend(opt_gen);
            let (_, generator_opt) = split_opt(gen_group, "generator", manifest.generator_opt_t)?;
            let mut critic_group = critic.params().into_iter().cloned().collect::<Vec<_>>();
            critic_group.extend(opt_critic);
            let (_, critic_opt) = split_opt(
                critic_group,
                "critic",
                manifest.critic_opt_t.expect("matched above"),
            )?;
            Ok(Checkpoint::Alpd(AlpdState {
                generator,
                critic,
                generator_opt,
                critic_opt,
                steps_done: manifest.steps_done,
            }))
        }
        Kind::Lpd => {
            let n_gen = ReconNetParams::<T>::param_names(&manifest.generator).len();
            let opt = tensors.split_off(n_gen);
            let generator =
                ReconNetParams::from_tensors(&manifest.generator, tensors).map_err(wrap)?;
            let mut group = generator.params().into_iter().cloned().collect::<Vec<_>>();
            group.extend(opt);
            let (_, opt) = split_opt(group, "generator", manifest.generator_opt_t)?;
            Ok(Checkpoint::Lpd(LpdState {
                generator,
                opt,
                steps_done: manifest.steps_done,
            }))
        }
    }
}

pub fn save<T: Scalar>(ck: &Checkpoint<T>, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode(ck))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
