use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DataError, OfflineDataset};

pub const DATASET_MAGIC: [u8; 4] = *b"OFRL";
pub const DATASET_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 8;

/// Serializes `ds` into the binary layout.
///
/// The fixed columns are followed by a trailer of `u32` byte length and the
/// UTF-8 provenance text. Files without a trailer load with empty provenance.
pub fn write_dataset<W: Write>(ds: &OfflineDataset, mut w: W) -> Result<(), DataError> {
    ds.validate()?;
    let dim = |d: usize| u32::try_from(d).map_err(|_| DataError::Invalid(format!("dimension {d} too large")));
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&dim(ds.state_dim)?.to_le_bytes())?;
    w.write_all(&dim(ds.action_dim)?.to_le_bytes())?;
    w.write_all(&ds.max_action.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for col in [ds.states(), ds.actions(), ds.rewards(), ds.next_states()] {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let dones: Vec<u8> = ds.dones().iter().map(|&d| d as u8).collect();
    w.write_all(&dones)?;
    let prov = ds.provenance.as_bytes();
    w.write_all(&(dim(prov.len())?).to_le_bytes())?;
    w.write_all(prov)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(DataError::Truncated { needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, DataError> {
        let bytes = n.checked_mul(4).ok_or(DataError::Truncated {
            needed: usize::MAX,
            available: self.buf.len() - self.pos,
        })?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Parses a dataset from its binary image.
pub fn read_dataset(bytes: &[u8]) -> Result<OfflineDataset, DataError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4)?.try_into().expect("4 bytes");
    if magic != DATASET_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: DATASET_MAGIC,
        });
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let state_dim = c.u32()? as usize;
    let action_dim = c.u32()? as usize;
    let max_action = f32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    let n64 = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    debug_assert_eq!(c.pos, HEADER_LEN);
    let n = usize::try_from(n64).map_err(|_| DataError::Truncated {
        needed: usize::MAX,
        available: bytes.len(),
    })?;
    let cols = |w: usize| n.checked_mul(w).unwrap_or(usize::MAX / 8);
    let states = c.f32s(cols(state_dim))?;
    let actions = c.f32s(cols(action_dim))?;
    let rewards = c.f32s(n)?;
    let next_states = c.f32s(cols(state_dim))?;
    let dones = c
        .take(n)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DataError::Invalid(format!("done byte {other}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let provenance = if c.pos == bytes.len() {
        String::new()
    } else {
        let len = c.u32()? as usize;
        String::from_utf8(c.take(len)?.to_vec()).map_err(|e| DataError::Invalid(format!("provenance: {e}")))?
    };
    if c.pos != bytes.len() {
        return Err(DataError::Invalid(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    OfflineDataset::from_columns(
        state_dim,
        action_dim,
        max_action,
        states,
        actions,
        rewards,
        next_states,
        dones,
        provenance,
    )
}

pub fn save_dataset(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let f = fs::File::create(path)?;
    write_dataset(ds, BufWriter::new(f))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset, DataError> {
    read_dataset(&fs::read(path)?)
}

/// CSV export with header `s0..,a0..,r,sn0..,done`.
pub fn write_csv<W: Write>(ds: &OfflineDataset, mut w: W) -> Result<(), DataError> {
    let mut header: Vec<String> = (0..ds.state_dim).map(|i| format!("s{i}")).collect();
    header.extend((0..ds.action_dim).map(|i| format!("a{i}")));
    header.push("r".into());
    header.extend((0..ds.state_dim).map(|i| format!("sn{i}")));
    header.push("done".into());
    writeln!(w, "{}", header.join(","))?;
    for i in 0..ds.len() {
        let t = ds.get(i);
        let mut row: Vec<String> = t.s.iter().map(|v| v.to_string()).collect();
        row.extend(t.a.iter().map(|v| v.to_string()));
        row.push(t.r.to_string());
        row.extend(t.s_next.iter().map(|v| v.to_string()));
        row.push((t.done as u8).to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
