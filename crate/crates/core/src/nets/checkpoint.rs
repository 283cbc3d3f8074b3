//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      4 bytes  "RSNT"
//! version    u32      1
//! frozen     u8
//! layers     u32      m
//! widths     u64 x (m + 1)
//! nonlin     u8 x m   (0 = identity, 1 = relu)
//! per layer: weights f64 x (in·out), row-major; bias f64 x out
//! ```

use std::io::{Read, Write};

use super::{DenseLayer, FeedforwardNet, Nonlinearity};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RSNT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &FeedforwardNet, mut out: W) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&[u8::from(net.is_frozen())])?;
    out.write_all(&(net.depth() as u32).to_le_bytes())?;
    for w in net.widths() {
        out.write_all(&(w as u64).to_le_bytes())?;
    }
    for l in net.layers() {
        out.write_all(&[l.nonlinearity.code()])?;
    }
    for l in net.layers() {
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<FeedforwardNet> {
    let magic = read_array::<4>(&mut input)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let frozen = read_array::<1>(&mut input)?[0] != 0;
    let m = u32::from_le_bytes(read_array(&mut input)?) as usize;
    if m == 0 {
        return Err(Error::Format("checkpoint has no layers".into()));
    }
    let widths = (0..=m)
        .map(|_| Ok(u64::from_le_bytes(read_array(&mut input)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let nonlin = (0..m)
        .map(|_| Nonlinearity::from_code(read_array::<1>(&mut input)?[0]))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(m);
    for k in 0..m {
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| Ok(f64::from_le_bytes(read_array(&mut input)?)))
                .collect()
        };
        let weights = Matrix::from_vec(
            widths[k],
            widths[k + 1],
            read_f64s(widths[k] * widths[k + 1])?,
        )?;
        let bias = read_f64s(widths[k + 1])?;
        layers.push(DenseLayer {
            weights,
            bias,
            nonlinearity: nonlin[k],
        });
    }
    let mut net = FeedforwardNet::from_layers(layers)?;
    net.set_frozen(frozen);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = FeedforwardNet::init(&[3, 5, 4, 2], Nonlinearity::Relu, 42).unwrap();
        net.freeze();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        assert!(back.is_frozen());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"nope"[..]).is_err());
        let net = FeedforwardNet::init(&[2, 2], Nonlinearity::Relu, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
