//! Binary interchange format for [`ActivationSet`]s.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `RSAC` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8 × 3 | `n`, `s`, `c` (`u64`) |
//! | 1     | labels flag (0 or 1) |
//! | 8·n·s·c | activations, `f64`, sample-major then position then channel |
//! | 8·n   | labels (`u64`), present only when the flag is 1 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::activations::ActivationSet;
use crate::error::{Error, Result};

pub const ACTIVATION_MAGIC: &[u8; 4] = b"RSAC";
pub const ACTIVATION_VERSION: u32 = 1;

pub fn write_activations<W: Write>(acts: &ActivationSet, mut out: W) -> Result<()> {
    out.write_all(ACTIVATION_MAGIC)?;
    out.write_all(&ACTIVATION_VERSION.to_le_bytes())?;
    let (n, s, c) = acts.dims();
    for d in [n, s, c] {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    out.write_all(&[u8::from(acts.labels().is_some())])?;
    for v in acts.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = acts.labels() {
        for &l in labels {
            out.write_all(&(l as u64).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_bytes<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated activation file: {e}")))?;
    Ok(buf)
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_bytes(input)?))
}

pub fn read_activations<R: Read>(mut input: R) -> Result<ActivationSet> {
    if &read_bytes::<4>(&mut input)? != ACTIVATION_MAGIC {
        return Err(Error::Format("not an activation file".into()));
    }
    let version = u32::from_le_bytes(read_bytes(&mut input)?);
    if version != ACTIVATION_VERSION {
        return Err(Error::Format(format!(
            "unsupported activation file version {version}"
        )));
    }
    let dims: Vec<usize> = (0..3)
        .map(|_| {
            let d = read_u64(&mut input)?;
            usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))
        })
        .collect::<Result<_>>()?;
    let (n, s, c) = (dims[0], dims[1], dims[2]);
    let len = n
        .checked_mul(s)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format("activation dimensions overflow".into()))?;
    let has_labels = match read_bytes::<1>(&mut input)?[0] {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("bad labels flag {f}"))),
    };
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        data.push(f64::from_le_bytes(read_bytes(&mut input)?));
    }
    let labels = if has_labels {
        Some(
            (0..n)
                .map(|_| {
                    let l = read_u64(&mut input)?;
                    usize::try_from(l).map_err(|_| Error::Format(format!("label {l} too large")))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format(
            "trailing bytes after activation payload".into(),
        ));
    }
    ActivationSet::new(n, s, c, data, labels)
}

pub fn save_activations(acts: &ActivationSet, path: &Path) -> Result<()> {
    write_activations(acts, BufWriter::new(File::create(path)?))
}

pub fn load_activations(path: &Path) -> Result<ActivationSet> {
    read_activations(BufReader::new(File::open(path)?))
}
