//! Binary spike tensor over (time, batch, neuron) — the universal activity
//! record exchanged between encoders, layers and analysis.

use std::io::{Read, Write};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};

/// Binary spike tensor of shape `(t_steps, batch, neurons)`.
///
/// Entries are strictly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRaster {
    data: Array3<u8>,
}

impl SpikeRaster {
    /// All-silent raster of the given shape.
    pub fn zeros(t_steps: usize, batch: usize, neurons: usize) -> Self {
        Self {
            data: Array3::zeros((t_steps, batch, neurons)),
        }
    }

    /// Wrap an existing 0/1 tensor; rejects anything that is not binary.
    pub fn from_array(data: Array3<u8>) -> Result<Self> {
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Numeric("spike raster entries must be 0 or 1".into()));
        }
        Ok(Self { data })
    }

    pub fn t_steps(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn batch(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn neurons(&self) -> usize {
        self.data.shape()[2]
    }

    /// `(t_steps, batch, neurons)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    pub fn get(&self, t: usize, b: usize, n: usize) -> u8 {
        self.data[(t, b, n)]
    }

    pub fn set(&mut self, t: usize, b: usize, n: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[(t, b, n)] = v;
    }

    /// View of one timestep as a `(batch, neurons)` matrix.
    pub fn step(&self, t: usize) -> ArrayView2<'_, u8> {
        self.data.index_axis(ndarray::Axis(0), t)
    }

    pub fn as_array(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn total_spikes(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// SHA-256 over the packed representation; used as a golden fingerprint.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut buf = Vec::new();
        self.write_packed(&mut buf).expect("write to Vec cannot fail");
        let digest = Sha256::digest(&buf);
        hex_string(&digest)
    }

    /// Serialize in the flat cache layout: header `t_steps`, `batch`,
    /// `neurons` as big-endian u32, then the raster bit-packed MSB-first in
    /// (t, b, n) row-major order, zero-padded to a whole byte.
    pub fn write_packed<W: Write>(&self, mut w: W) -> Result<()> {
        let (t, b, n) = self.dims();
        w.write_u32::<BigEndian>(t as u32)?;
        w.write_u32::<BigEndian>(b as u32)?;
        w.write_u32::<BigEndian>(n as u32)?;
        let mut byte = 0u8;
        let mut used = 0u8;
        for &v in self.data.iter() {
            byte = (byte << 1) | (v & 1);
            used += 1;
            if used == 8 {
                w.write_u8(byte)?;
                byte = 0;
                used = 0;
            }
        }
        if used > 0 {
            w.write_u8(byte << (8 - used))?;
        }
        Ok(())
    }

    /// Inverse of [`write_packed`](Self::write_packed).
    pub fn read_packed<R: Read>(mut r: R) -> Result<Self> {
        let t = r.read_u32::<BigEndian>()? as usize;
        let b = r.read_u32::<BigEndian>()? as usize;
        let n = r.read_u32::<BigEndian>()? as usize;
        let total = t
            .checked_mul(b)
            .and_then(|x| x.checked_mul(n))
            .ok_or_else(|| Error::Data("raster header overflows".into()))?;
        let mut flat = Vec::with_capacity(total);
        let mut remaining = total;
        while remaining > 0 {
            let byte = r
                .read_u8()
                .map_err(|_| Error::Data("raster payload truncated".into()))?;
            let take = remaining.min(8);
            for i in 0..take {
                flat.push((byte >> (7 - i)) & 1);
            }
            remaining -= take;
        }
        let data = Array3::from_shape_vec((t, b, n), flat)
            .map_err(|e| Error::Data(format!("raster shape: {e}")))?;
        Ok(Self { data })
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary() {
        let mut a = Array3::<u8>::zeros((2, 1, 3));
        a[(0, 0, 1)] = 2;
        assert!(SpikeRaster::from_array(a).is_err());
    }

    #[test]
    fn packed_round_trip() {
        let mut r = SpikeRaster::zeros(3, 2, 5);
        r.set(0, 0, 0, 1);
        r.set(1, 1, 4, 1);
        r.set(2, 0, 3, 1);
        let mut buf = Vec::new();
        r.write_packed(&mut buf).unwrap();
        // header 12 bytes + ceil(30/8) = 4 payload bytes
        assert_eq!(buf.len(), 16);
        let back = SpikeRaster::read_packed(&buf[..]).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut r = SpikeRaster::zeros(4, 4, 4);
        r.set(3, 3, 3, 1);
        let mut buf = Vec::new();
        r.write_packed(&mut buf).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(SpikeRaster::read_packed(&buf[..]).is_err());
    }
}
