use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Agent, GanJointError};
use crate::autodiff::Tensor;
use crate::data::DataError;
use crate::nets::{Actor, ActorKind, CriticPair, Discriminator, Mlp};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"OFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Networks restored from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: Actor,
    pub critics: CriticPair,
    pub disc: Discriminator,
}

impl From<&Agent> for Checkpoint {
    fn from(a: &Agent) -> Self {
        Self {
            actor: a.actor.clone(),
            critics: a.critics.clone(),
            disc: a.disc.clone(),
        }
    }
}

impl Checkpoint {
    fn nets(&self) -> [(&'static str, &Mlp); 7] {
        [
            ("actor", self.actor.net()),
            ("q1", &self.critics.q1),
            ("q2", &self.critics.q2),
            ("target_q1", &self.critics.target_q1),
            ("target_q2", &self.critics.target_q2),
            ("target_actor", self.critics.target_actor.net()),
            ("disc", &self.disc.net),
        ]
    }

    fn nets_mut(&mut self) -> [(&'static str, &mut Mlp); 7] {
        let CriticPair {
            q1,
            q2,
            target_q1,
            target_q2,
            target_actor,
        } = &mut self.critics;
        [
            ("actor", self.actor.net_mut()),
            ("q1", q1),
            ("q2", q2),
            ("target_q1", target_q1),
            ("target_q2", target_q2),
            ("target_actor", target_actor.net_mut()),
            ("disc", &mut self.disc.net),
        ]
    }

    fn hidden(&self) -> Vec<usize> {
        self.critics.q1.spec().hidden_dims.clone()
    }
}

fn u32_of(v: usize) -> Result<u32, GanJointError> {
    u32::try_from(v).map_err(|_| GanJointError::Data(DataError::Invalid(format!("{v} does not fit in u32"))))
}

/// Header: magic, version, state/action dims, `f64` max action, actor kind
/// byte, hidden widths. Then named blocks of name, rank, dims and `f64`
/// values, all little-endian.
pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<(), GanJointError> {
    let io = |e: std::io::Error| GanJointError::Data(DataError::Io(e));
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_of(ck.actor.state_dim())?.to_le_bytes());
    buf.extend_from_slice(&u32_of(ck.actor.action_dim())?.to_le_bytes());
    buf.extend_from_slice(&ck.actor.max_action().to_le_bytes());
    buf.push(match ck.actor.kind() {
        ActorKind::Implicit => 0,
        ActorKind::Gaussian => 1,
    });
    let hidden = ck.hidden();
    buf.extend_from_slice(&u32_of(hidden.len())?.to_le_bytes());
    for h in &hidden {
        buf.extend_from_slice(&u32_of(*h)?.to_le_bytes());
    }
    let mut blocks = Vec::new();
    for (prefix, net) in ck.nets() {
        for (i, p) in net.params().into_iter().enumerate() {
            let kind = if i % 2 == 0 { "weight" } else { "bias" };
            blocks.push((format!("{prefix}.{}.{kind}", i / 2), p));
        }
    }
    buf.extend_from_slice(&u32_of(blocks.len())?.to_le_bytes());
    for (name, t) in blocks {
        buf.extend_from_slice(&u32_of(name.len())?.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&u32_of(t.shape().len())?.to_le_bytes());
        for d in t.shape() {
            buf.extend_from_slice(&u32_of(*d)?.to_le_bytes());
        }
        for v in t.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(DataError::Truncated { needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, GanJointError> {
    let invalid = |m: String| GanJointError::Data(DataError::Invalid(m));
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: CHECKPOINT_MAGIC,
        }
        .into());
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        }
        .into());
    }
    let state_dim = r.u32()?;
    let action_dim = r.u32()?;
    let max_action = r.f64()?;
    let kind = match r.take(1)?[0] {
        0 => ActorKind::Implicit,
        1 => ActorKind::Gaussian,
        k => return Err(invalid(format!("unknown actor kind {k}"))),
    };
    let n_hidden = r.u32()?;
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;

    let mut blocks = BTreeMap::new();
    for _ in 0..r.u32()? {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| invalid(format!("block name: {e}")))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| invalid("block too large".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, values).map_err(|e| invalid(format!("block {name}: {e}")))?;
        if blocks.insert(name.clone(), t).is_some() {
            return Err(invalid(format!("duplicate block {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(invalid(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let actor = Actor::new(kind, state_dim, action_dim, &hidden, max_action, &mut rng)?;
    let critics = CriticPair::new(&actor, &hidden, &mut rng)?;
    let disc = Discriminator::new(state_dim, action_dim, &hidden, &mut rng)?;
    let mut ck = Checkpoint { actor, critics, disc };
    for (prefix, net) in ck.nets_mut() {
        for (i, p) in net.params_mut().into_iter().enumerate() {
            let kind = if i % 2 == 0 { "weight" } else { "bias" };
            let name = format!("{prefix}.{}.{kind}", i / 2);
            let t = blocks
                .remove(&name)
                .ok_or_else(|| invalid(format!("missing block {name}")))?;
            if t.shape() != p.shape() {
                return Err(invalid(format!(
                    "block {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            p.values_mut().copy_from_slice(t.values());
        }
    }
    if let Some(name) = blocks.keys().next() {
        return Err(invalid(format!("unexpected block {name}")));
    }
    Ok(ck)
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<(), GanJointError> {
    let f = fs::File::create(path).map_err(DataError::Io)?;
    write_checkpoint(ck, BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, GanJointError> {
    read_checkpoint(&fs::read(path).map_err(DataError::Io)?)
}
