//! The binary weight file: every layer's kernels packed one bit per weight.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes   "BWSN"
//! version    u16       currently 1
//! layers     u16       record count
//! records    variable  one per layer, in layer order
//! crc32      u32       CRC-32 (IEEE) over the whole records region
//! ```
//!
//! Each record:
//!
//! ```text
//! kind          u8    0 conv, 1 depthwise, 2 fully connected, 3 avg pool
//! out_channels  u16
//! in_channels   u16
//! kernel_height u16
//! kernel_width  u16
//! payload       ceil(n/8) bytes
//! ```
//!
//! The payload packs weights in storage order (dense kinds iterate
//! `(out, in, ky, kx)` with `kx` fastest; per-channel kinds `(ch, ky, kx)`),
//! LSB first within each byte: bit `n % 8` of byte `n / 8` is weight `n`,
//! set for +1, clear for -1. Records are byte-aligned.

use crate::netmodel::{BinaryKernelSet, KernelError, LayerKind, NetworkTopology};
use std::io::{self, Read, Write};
use thiserror::Error;

pub const WEIGHT_MAGIC: [u8; 4] = *b"BWSN";
pub const WEIGHT_VERSION: u16 = 1;

/// One layer's worth of weights as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightRecord {
    pub kind: LayerKind,
    pub kernels: BinaryKernelSet,
}

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic {0:02x?}; not a weight file")]
    BadMagic([u8; 4]),
    #[error("weight file version {0} is not supported (expected {WEIGHT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("weight file ends early: {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("byte {offset}: {value} is not a layer kind tag")]
    BadKindTag { offset: usize, value: u8 },
    #[error("layer {layer}: dimension {0} exceeds the u16 file format limit", .value)]
    DimTooLarge { layer: usize, value: usize },
    #[error("weight file has {got} layer records, network has {expected} layers")]
    LayerCount { expected: usize, got: usize },
    #[error("layer {layer}: weight file does not match the network: {detail}")]
    MismatchWithNetwork { layer: usize, detail: String },
    #[error("kernel data invalid: {0}")]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn kind_tag(kind: LayerKind) -> u8 {
    match kind {
        LayerKind::Conv => 0,
        LayerKind::Depthwise => 1,
        LayerKind::FullyConnected => 2,
        LayerKind::AvgPool => 3,
    }
}

fn tag_kind(tag: u8, offset: usize) -> Result<LayerKind, WeightFileError> {
    Ok(match tag {
        0 => LayerKind::Conv,
        1 => LayerKind::Depthwise,
        2 => LayerKind::FullyConnected,
        3 => LayerKind::AvgPool,
        value => return Err(WeightFileError::BadKindTag { offset, value }),
    })
}

fn push_u16(buf: &mut Vec<u8>, layer: usize, value: usize) -> Result<(), WeightFileError> {
    let v = u16::try_from(value)
        .map_err(|_| WeightFileError::DimTooLarge { layer, value })?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes records to a writer.
pub fn write_weight_file<W: Write>(
    out: &mut W,
    records: &[WeightRecord],
) -> Result<(), WeightFileError> {
    let count = u16::try_from(records.len())
        .map_err(|_| WeightFileError::DimTooLarge { layer: records.len(), value: records.len() })?;
    let mut body = Vec::new();
    for (layer, record) in records.iter().enumerate() {
        let set = &record.kernels;
        body.push(kind_tag(record.kind));
        push_u16(&mut body, layer, set.out_channels())?;
        push_u16(&mut body, layer, set.in_channels())?;
        push_u16(&mut body, layer, set.kernel_height())?;
        push_u16(&mut body, layer, set.kernel_width())?;
        let weights = set.raw_weights();
        let mut packed = vec![0u8; weights.len().div_ceil(8)];
        for (n, &w) in weights.iter().enumerate() {
            if w == 1 {
                packed[n / 8] |= 1 << (n % 8);
            }
        }
        body.extend_from_slice(&packed);
    }
    out.write_all(&WEIGHT_MAGIC)?;
    out.write_all(&WEIGHT_VERSION.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&body)?;
    out.write_all(&crc32fast::hash(&body).to_le_bytes())?;
    Ok(())
}

/// Parses a weight file, verifying structure and checksum.
pub fn read_weight_file<R: Read>(input: &mut R) -> Result<Vec<WeightRecord>, WeightFileError> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() < 8 {
        return Err(WeightFileError::Truncated("header"));
    }
    let magic: [u8; 4] = raw[0..4].try_into().expect("fixed slice");
    if magic != WEIGHT_MAGIC {
        return Err(WeightFileError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(raw[4..6].try_into().expect("fixed slice"));
    if version != WEIGHT_VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let count = u16::from_le_bytes(raw[6..8].try_into().expect("fixed slice")) as usize;
    if raw.len() < 12 {
        return Err(WeightFileError::Truncated("checksum"));
    }
    let body = &raw[8..raw.len() - 4];
    let stored = u32::from_le_bytes(
        raw[raw.len() - 4..].try_into().expect("fixed slice"),
    );
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightFileError::ChecksumMismatch { stored, computed });
    }

    let mut records = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        if body.len() < pos + 9 {
            return Err(WeightFileError::Truncated("record header"));
        }
        let kind = tag_kind(body[pos], 8 + pos)?;
        let field = |i: usize| {
            u16::from_le_bytes(body[pos + 1 + 2 * i..pos + 3 + 2 * i].try_into().expect("fixed"))
                as usize
        };
        let (out_ch, in_ch, kh, kw) = (field(0), field(1), field(2), field(3));
        pos += 9;
        let n = if kind.per_channel() {
            out_ch * kh * kw
        } else {
            out_ch * in_ch * kh * kw
        };
        let bytes = n.div_ceil(8);
        if body.len() < pos + bytes {
            return Err(WeightFileError::Truncated("record payload"));
        }
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let bit = body[pos + i / 8] >> (i % 8) & 1;
            weights.push(if bit == 1 { 1i8 } else { -1 });
        }
        pos += bytes;
        let kernels = if kind.per_channel() {
            if in_ch != out_ch {
                return Err(WeightFileError::MismatchWithNetwork {
                    layer: records.len(),
                    detail: format!(
                        "per-channel record declares {in_ch} input and {out_ch} output channels"
                    ),
                });
            }
            BinaryKernelSet::per_channel(out_ch, kh, kw, weights)?
        } else {
            BinaryKernelSet::dense(out_ch, in_ch, kh, kw, weights)?
        };
        records.push(WeightRecord { kind, kernels });
    }
    if pos != body.len() {
        return Err(WeightFileError::TrailingBytes(body.len() - pos));
    }
    Ok(records)
}

/// Checks records against a topology layer by layer and hands back the
/// kernel sets ready to attach.
pub fn kernels_for(
    topo: &NetworkTopology,
    records: Vec<WeightRecord>,
) -> Result<Vec<BinaryKernelSet>, WeightFileError> {
    if records.len() != topo.layer_count() {
        return Err(WeightFileError::LayerCount {
            expected: topo.layer_count(),
            got: records.len(),
        });
    }
    for (layer, (record, node)) in records.iter().zip(&topo.layers).enumerate() {
        if record.kind != node.kind {
            return Err(WeightFileError::MismatchWithNetwork {
                layer,
                detail: format!(
                    "file says {:?}, network says {:?}",
                    record.kind, node.kind
                ),
            });
        }
        let s = &node.shape;
        let expected =
            (s.out_channels, s.in_channels, s.kernel_height, s.kernel_width);
        let set = &record.kernels;
        let got = (
            set.out_channels(),
            set.in_channels(),
            set.kernel_height(),
            set.kernel_width(),
        );
        if expected != got {
            return Err(WeightFileError::MismatchWithNetwork {
                layer,
                detail: format!(
                    "file kernels are {got:?}, network needs {expected:?} (out, in, kh, kw)"
                ),
            });
        }
        if node.kind == LayerKind::AvgPool && !set.all_ones() {
            return Err(WeightFileError::MismatchWithNetwork {
                layer,
                detail: "pooling layer weights must all be +1".to_string(),
            });
        }
    }
    Ok(records.into_iter().map(|r| r.kernels).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{GraphDecl, LayerDecl, NetworkTopology};
    use crate::neuron::{NeuronParams, ResetMode};

    fn round_trip(records: Vec<WeightRecord>) -> Vec<WeightRecord> {
        let mut buf = Vec::new();
        write_weight_file(&mut buf, &records).unwrap();
        read_weight_file(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trips_mixed_records() {
        let records = vec![
            WeightRecord {
                kind: LayerKind::Conv,
                kernels: BinaryKernelSet::dense(
                    2,
                    3,
                    2,
                    2,
                    (0..24).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect(),
                )
                .unwrap(),
            },
            WeightRecord {
                kind: LayerKind::Depthwise,
                kernels: BinaryKernelSet::per_channel(
                    2,
                    2,
                    2,
                    vec![1, -1, -1, 1, -1, -1, 1, 1],
                )
                .unwrap(),
            },
            WeightRecord {
                kind: LayerKind::AvgPool,
                kernels: BinaryKernelSet::pooling(2, 2, 2),
            },
            WeightRecord {
                kind: LayerKind::FullyConnected,
                kernels: BinaryKernelSet::dense(3, 2, 1, 1, vec![1, -1, -1, 1, 1, 1])
                    .unwrap(),
            },
        ];
        assert_eq!(round_trip(records.clone()), records);
    }

    #[test]
    fn header_and_packing_layout() {
        // one conv record, 1 out, 1 in, 1x2 kernel, weights [+1, -1]
        let records = vec![WeightRecord {
            kind: LayerKind::Conv,
            kernels: BinaryKernelSet::dense(1, 1, 1, 2, vec![1, -1]).unwrap(),
        }];
        let mut buf = Vec::new();
        write_weight_file(&mut buf, &records).unwrap();
        assert_eq!(&buf[0..4], b"BWSN");
        assert_eq!(&buf[4..6], &[1, 0], "version 1 little-endian");
        assert_eq!(&buf[6..8], &[1, 0], "one record");
        let body = &buf[8..buf.len() - 4];
        // kind 0, then out/in/kh/kw as u16 LE, then one payload byte with
        // bit 0 set (+1) and bit 1 clear (-1)
        assert_eq!(body, &[0, 1, 0, 1, 0, 1, 0, 2, 0, 0b0000_0001]);
        let crc = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(body));
    }

    #[test]
    fn flipped_bit_fails_the_checksum() {
        let records = vec![WeightRecord {
            kind: LayerKind::Conv,
            kernels: BinaryKernelSet::dense(1, 2, 2, 2, vec![1; 8]).unwrap(),
        }];
        let mut buf = Vec::new();
        write_weight_file(&mut buf, &records).unwrap();
        let flip = buf.len() - 6;
        buf[flip] ^= 0x10;
        assert!(matches!(
            read_weight_file(&mut buf.as_slice()),
            Err(WeightFileError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn refuses_foreign_and_damaged_files() {
        assert!(matches!(
            read_weight_file(&mut &b"NSWB\x01\x00\x00\x00\x00\x00\x00\x00"[..]),
            Err(WeightFileError::BadMagic(_))
        ));
        assert!(matches!(
            read_weight_file(&mut &b"BWSN\x02\x00\x00\x00\x00\x00\x00\x00"[..]),
            Err(WeightFileError::UnsupportedVersion(2))
        ));
        assert!(matches!(
            read_weight_file(&mut &b"BWSN\x01"[..]),
            Err(WeightFileError::Truncated(_))
        ));
        // valid header claiming one record but no body
        let mut short = Vec::new();
        short.extend_from_slice(b"BWSN");
        short.extend_from_slice(&1u16.to_le_bytes());
        short.extend_from_slice(&1u16.to_le_bytes());
        short.extend_from_slice(&crc32fast::hash(&[]).to_le_bytes());
        assert!(matches!(
            read_weight_file(&mut short.as_slice()),
            Err(WeightFileError::Truncated("record header"))
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let records = vec![WeightRecord {
            kind: LayerKind::Conv,
            kernels: BinaryKernelSet::dense(1, 1, 1, 1, vec![1]).unwrap(),
        }];
        let mut buf = Vec::new();
        write_weight_file(&mut buf, &records).unwrap();
        // splice an extra byte into the body and fix up the checksum
        let mut body: Vec<u8> = buf[8..buf.len() - 4].to_vec();
        body.push(0xAA);
        let mut evil = buf[..8].to_vec();
        evil.extend_from_slice(&body);
        evil.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        assert!(matches!(
            read_weight_file(&mut evil.as_slice()),
            Err(WeightFileError::TrailingBytes(1))
        ));
    }

    fn tiny_topology(kind: LayerKind, c: usize, k: usize) -> NetworkTopology {
        let decl = GraphDecl {
            layers: vec![LayerDecl {
                kind,
                in_channels: c,
                in_height: 4,
                in_width: 4,
                kernel_height: 2,
                kernel_width: 2,
                out_channels: k,
                out_height: None,
                out_width: None,
                neuron: NeuronParams::uniform(k, 1, 0, ResetMode::Subtract),
            }],
            ..Default::default()
        };
        NetworkTopology::from_decl(&decl).unwrap()
    }

    #[test]
    fn network_mismatches_are_named() {
        let topo = tiny_topology(LayerKind::Conv, 2, 3);
        // wrong record count
        assert!(matches!(
            kernels_for(&topo, vec![]),
            Err(WeightFileError::LayerCount { expected: 1, got: 0 })
        ));
        // wrong kind tag
        let wrong_kind = vec![WeightRecord {
            kind: LayerKind::Depthwise,
            kernels: BinaryKernelSet::per_channel(2, 2, 2, vec![1; 8]).unwrap(),
        }];
        assert!(matches!(
            kernels_for(&topo, wrong_kind),
            Err(WeightFileError::MismatchWithNetwork { layer: 0, .. })
        ));
        // wrong dims
        let wrong_dims = vec![WeightRecord {
            kind: LayerKind::Conv,
            kernels: BinaryKernelSet::dense(3, 2, 3, 2, vec![1; 36]).unwrap(),
        }];
        assert!(matches!(
            kernels_for(&topo, wrong_dims),
            Err(WeightFileError::MismatchWithNetwork { layer: 0, .. })
        ));
        // pooling weights must be +1
        let pool_topo = tiny_topology(LayerKind::AvgPool, 2, 2);
        let signed_pool = vec![WeightRecord {
            kind: LayerKind::AvgPool,
            kernels: BinaryKernelSet::per_channel(2, 2, 2, vec![1, -1, 1, 1, 1, 1, 1, 1])
                .unwrap(),
        }];
        assert!(matches!(
            kernels_for(&pool_topo, signed_pool),
            Err(WeightFileError::MismatchWithNetwork { layer: 0, .. })
        ));
    }
}
