//! Binary logit archive.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "UCAL"
//! 4       2           format version (u16 LE)
//! 6       4           n, input count (u32 LE)
//! 10      4           N, samples per input (u32 LE)
//! 14      4           C, classes (u32 LE)
//! 18      4·n         labels (u32 LE)
//! 18+4n   8·n·N·C     logits (f64 LE), input-major, sample-second, class-minor
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::net::LogitArchive;

pub const MAGIC: [u8; 4] = *b"UCAL";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

/// Exact file size of an archive with the given dimensions.
pub fn encoded_len(inputs: usize, samples: usize, classes: usize) -> usize {
    HEADER_LEN + 4 * inputs + 8 * inputs * samples * classes
}

pub fn encode_archive(a: &LogitArchive) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(a.len(), a.samples(), a.classes()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [a.len(), a.samples(), a.classes()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &y in a.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    for &v in a.logits() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn need(bytes: &[u8], expected: usize) -> Result<(), FormatError> {
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

pub fn decode_archive(bytes: &[u8]) -> Result<LogitArchive, FormatError> {
    need(bytes, MAGIC.len())?;
    if bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic {
            expected: MAGIC,
            found: bytes[..4].to_vec(),
        });
    }
    need(bytes, 6)?;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
            offset: 4,
        });
    }
    need(bytes, HEADER_LEN)?;
    let n = u32_at(bytes, 6) as usize;
    let samples = u32_at(bytes, 10) as usize;
    let classes = u32_at(bytes, 14) as usize;
    if n == 0 {
        return Err(FormatError::BadHeader {
            offset: 6,
            reason: "input count is zero".into(),
        });
    }
    if samples == 0 {
        return Err(FormatError::BadHeader {
            offset: 10,
            reason: "sample count is zero".into(),
        });
    }
    if classes < 2 {
        return Err(FormatError::BadHeader {
            offset: 14,
            reason: format!("class count {classes} is below 2"),
        });
    }
    let expected = n
        .checked_mul(samples)
        .and_then(|v| v.checked_mul(classes))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN + 4 * n))
        .ok_or_else(|| FormatError::BadHeader {
            offset: 6,
            reason: "dimensions overflow".into(),
        })?;
    need(bytes, expected)?;
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }

    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let offset = HEADER_LEN + 4 * j;
        let label = u32_at(bytes, offset);
        if label as usize >= classes {
            return Err(FormatError::LabelOutOfRange {
                index: j,
                label,
                classes: classes as u32,
                offset,
            });
        }
        labels.push(label);
    }
    let base = HEADER_LEN + 4 * n;
    let mut logits = Vec::with_capacity(n * samples * classes);
    for (i, chunk) in bytes[base..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFiniteLogit { offset: base + 8 * i });
        }
        logits.push(v);
    }
    LogitArchive::new(samples, classes, logits, labels).map_err(|e| FormatError::Malformed {
        what: "archive",
        reason: e.to_string(),
    })
}

pub fn write_archive(a: &LogitArchive, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_archive(a)).map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<LogitArchive> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_archive(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use proptest::prelude::*;

    fn archive(n: usize, samples: usize, classes: usize, seed: u64) -> LogitArchive {
        let mut rng = RngStream::new(seed);
        let logits = (0..n * samples * classes).map(|_| rng.next_normal() * 1e3).collect();
        let labels = (0..n).map(|_| rng.below(classes) as u32).collect();
        LogitArchive::new(samples, classes, logits, labels).unwrap()
    }

    #[test]
    fn smallest_archive_is_38_bytes() {
        let bytes = encode_archive(&archive(1, 1, 2, 0));
        assert_eq!(bytes.len(), 38);
        assert_eq!(encoded_len(1, 1, 2), 38);
        assert_eq!(&bytes[..4], b"UCAL");
    }

    #[test]
    fn truncation_by_one_byte() {
        let bytes = encode_archive(&archive(3, 2, 4, 1));
        let err = decode_archive(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(
            err,
            FormatError::Truncated {
                expected: bytes.len(),
                actual: bytes.len() - 1
            }
        );
        for cut in [0, 3, 5, 17] {
            assert!(matches!(
                decode_archive(&bytes[..cut]),
                Err(FormatError::Truncated { .. })
            ));
        }
    }

    #[test]
    fn corruption_cases() {
        let good = encode_archive(&archive(2, 2, 3, 2));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_archive(&bad), Err(FormatError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_archive(&bad),
            Err(FormatError::UnsupportedVersion {
                found: 9,
                offset: 4,
                ..
            })
        ));

        let mut bad = good.clone();
        bad[22..26].copy_from_slice(&3u32.to_le_bytes());
        assert_eq!(
            decode_archive(&bad),
            Err(FormatError::LabelOutOfRange {
                index: 1,
                label: 3,
                classes: 3,
                offset: 22
            })
        );

        let mut bad = good.clone();
        bad[26..34].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_archive(&bad), Err(FormatError::NonFiniteLogit { offset: 26 }));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_archive(&bad), Err(FormatError::TrailingBytes { .. })));

        let mut bad = good.clone();
        bad[14..18].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(
            decode_archive(&bad),
            Err(FormatError::BadHeader { offset: 14, .. })
        ));

        let mut bad = good;
        bad[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        bad[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_archive(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(n in 1usize..6, samples in 1usize..4, classes in 2usize..6, seed in any::<u64>()) {
            let a = archive(n, samples, classes, seed);
            let bytes = encode_archive(&a);
            prop_assert_eq!(bytes.len(), encoded_len(n, samples, classes));
            let b = decode_archive(&bytes).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(encode_archive(&b), bytes);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let mut with_magic = MAGIC.to_vec();
            with_magic.extend_from_slice(&bytes);
            let _ = decode_archive(&bytes);
            let _ = decode_archive(&with_magic);
        }
    }
}
