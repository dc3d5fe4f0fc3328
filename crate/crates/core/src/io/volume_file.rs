//! Binary volume format, little-endian:
//!
//! ```text
//! "CVOL" | u16 version | u8 flags (bit 0: labels) | u64 n
//! f32 g_a[n] | f32 g_b[n] | [labels: y_a bits | y_b bits]
//! ```
//!
//! Label masks are packed LSB-first in `ceil(n / 8)` bytes each.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::{InstanceVolume, Labels};

pub const VOLUME_MAGIC: &[u8; 4] = b"CVOL";
pub const VOLUME_VERSION: u16 = 1;
const FLAG_LABELS: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 8;

fn pack_bits(bits: &[bool], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &set)| b | ((set as u8) << i)));
    }
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

pub fn encode_volume<T: Scalar>(v: &InstanceVolume<T>) -> Vec<u8> {
    let n = v.n_pixels();
    let labels = v.labels();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n + if labels.is_some() { 2 * n.div_ceil(8) } else { 0 });
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    out.push(if labels.is_some() { FLAG_LABELS } else { 0 });
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for g in v.g_a().iter().chain(v.g_b()) {
        out.extend_from_slice(&g.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    if let Some(l) = labels {
        pack_bits(&l.a, &mut out);
        pack_bits(&l.b, &mut out);
    }
    out
}

/// Header fields `(labeled, n_pixels)` without decoding the arrays.
pub fn decode_header(bytes: &[u8]) -> Result<(bool, usize)> {
    if bytes.len() < 4 || &bytes[..4] != VOLUME_MAGIC {
        return Err(Error::Format("not a volume file (bad magic)".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptVolume(format!("header truncated at {} bytes", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VOLUME_VERSION {
        return Err(Error::Format(format!("unsupported volume version {version}")));
    }
    let flags = bytes[6];
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::Format(format!("unknown volume flags {flags:#04x}")));
    }
    let n = u64::from_le_bytes(bytes[7..15].try_into().expect("8 header bytes"));
    let n = usize::try_from(n).map_err(|_| Error::CorruptVolume(format!("pixel count {n} too large")))?;
    Ok((flags & FLAG_LABELS != 0, n))
}

pub fn decode_volume<T: Scalar>(bytes: &[u8], id: impl Into<String>) -> Result<InstanceVolume<T>> {
    let (labeled, n) = decode_header(bytes)?;
    let expected = n
        .checked_mul(8)
        .and_then(|g| g.checked_add(HEADER_LEN))
        .and_then(|len| len.checked_add(if labeled { 2 * n.div_ceil(8) } else { 0 }))
        .ok_or_else(|| Error::CorruptVolume(format!("pixel count {n} too large")))?;
    if bytes.len() != expected {
        return Err(Error::CorruptVolume(format!(
            "{} pixels need {expected} bytes, file has {}",
            n,
            bytes.len()
        )));
    }
    let floats = |start: usize| -> Vec<T> {
        bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))).unwrap_or(T::nan()))
            .collect()
    };
    let g_a = floats(HEADER_LEN);
    let g_b = floats(HEADER_LEN + 4 * n);
    let labels = labeled.then(|| {
        let start = HEADER_LEN + 8 * n;
        let len = n.div_ceil(8);
        Labels {
            a: unpack_bits(&bytes[start..start + len], n),
            b: unpack_bits(&bytes[start + len..start + 2 * len], n),
        }
    });
    InstanceVolume::new(id, g_a, g_b, labels).map_err(|e| match e {
        Error::InvalidVolume(m) => Error::CorruptVolume(m),
        other => other,
    })
}

pub fn write_volume<T: Scalar>(path: &Path, v: &InstanceVolume<T>) -> Result<()> {
    fs::write(path, encode_volume(v))?;
    Ok(())
}

pub fn read_volume<T: Scalar>(path: &Path, id: impl Into<String>) -> Result<InstanceVolume<T>> {
    decode_volume(&fs::read(path)?, id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(labeled: bool) -> InstanceVolume<f64> {
        let g_b = vec![0.1, 0.9, 0.5, 1.0, 0.0, 0.3, 0.7, 0.2, 0.6];
        let g_a = g_b.iter().map(|g| g * 0.5).collect();
        let labels = labeled.then(|| Labels {
            a: vec![false, true, false, true, false, false, false, false, true],
            b: vec![true, true, false, true, false, true, false, false, true],
        });
        InstanceVolume::new("x", g_a, g_b, labels).unwrap()
    }

    #[test]
    fn layout_is_exact() {
        let bytes = encode_volume(&sample(true));
        assert_eq!(&bytes[..4], b"CVOL");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..15], &9u64.to_le_bytes());
        assert_eq!(bytes.len(), 15 + 72 + 4);
        assert_eq!(&bytes[15..19], &0.05f32.to_le_bytes());
        // y_a = 0b1_0000_1010 packed LSB-first
        assert_eq!(&bytes[87..89], &[0b0000_1010, 0b1]);
        assert_eq!(&bytes[89..91], &[0b0010_1011, 0b1]);
    }

    #[test]
    fn round_trip_at_f32_precision() {
        for labeled in [true, false] {
            let v = sample(labeled);
            let back: InstanceVolume<f64> = decode_volume(&encode_volume(&v), "x").unwrap();
            let r32 = |xs: &[f64]| xs.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
            assert_eq!(back.g_a(), r32(v.g_a()).as_slice());
            assert_eq!(back.g_b(), r32(v.g_b()).as_slice());
            assert_eq!(back.labels(), v.labels());
            assert_eq!(encode_volume(&back), encode_volume(&v));
        }
        let unlabeled = encode_volume(&sample(false));
        assert_eq!(unlabeled[6] & 1, 0);
        assert_eq!(unlabeled.len(), 15 + 72);
    }

    #[test]
    fn errors() {
        let bytes = encode_volume(&sample(true));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_volume::<f64>(truncated, "x"), Err(Error::CorruptVolume(_))));
        assert!(matches!(decode_volume::<f64>(&bytes[..10], "x"), Err(Error::CorruptVolume(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_volume::<f64>(&bad, "x"), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_volume::<f64>(&bad, "x"), Err(Error::Format(_))));
        let mut bad = bytes;
        // label a set where b is clear
        bad[87] |= 1 << 2;
        assert!(matches!(decode_volume::<f64>(&bad, "x"), Err(Error::CorruptVolume(_))));
    }
}
