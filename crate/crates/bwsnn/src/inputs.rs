//! Loaders for the two input formats the tools accept: a raw channel-major
//! float tensor, and IDX image archives (the common format for small
//! grayscale classification datasets).
//!
//! The raw tensor format is three u32 little-endian dimensions (channels,
//! height, width) followed by exactly channels * height * width f32
//! little-endian values in row-major `(channel, row, column)` order.
//!
//! IDX files start with a four-byte magic: two zero bytes, a type code
//! (only 0x08, unsigned byte, is accepted), and the dimension count, then
//! that many u32 big-endian dimensions and the payload. Three-dimensional
//! files are treated as `(count, rows, cols)` image stacks; byte values
//! are scaled to [0, 1] by dividing by 255. One-dimensional files are
//! label vectors. Nothing is resized: the tensor keeps the file's
//! dimensions and any mismatch with a network surfaces downstream.

use crate::codec::RealTensor;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputFileError {
    #[error("input file ends early: {0}")]
    Truncated(&'static str),
    #[error("bad IDX magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("IDX type code {code:#04x} is not supported (only unsigned byte, 0x08)")]
    UnsupportedType { code: u8 },
    #[error("expected a {expected}-dimensional IDX file, found {got} dimensions")]
    WrongRank { expected: u8, got: u8 },
    #[error("image {index} requested but the archive holds {count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("tensor dimensions {channels}x{height}x{width} overflow")]
    DimOverflow { channels: usize, height: usize, width: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a raw channel-major f32 tensor.
pub fn read_real_tensor<R: Read>(input: &mut R) -> Result<RealTensor, InputFileError> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|_| InputFileError::Truncated("dimension header"))?;
    let dim = |i: usize| {
        u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().expect("fixed slice")) as usize
    };
    let (channels, height, width) = (dim(0), dim(1), dim(2));
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or(InputFileError::DimOverflow { channels, height, width })?;
    let mut payload = vec![0u8; count * 4];
    input
        .read_exact(&mut payload)
        .map_err(|_| InputFileError::Truncated("value payload"))?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("fixed slice")))
        .collect();
    Ok(RealTensor::new(channels, height, width, values).expect("count matches header"))
}

/// Writes the raw tensor format `read_real_tensor` accepts.
pub fn write_real_tensor<W: Write>(out: &mut W, tensor: &RealTensor) -> io::Result<()> {
    let (channels, height, width) = tensor.dims();
    for dim in [channels, height, width] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    for &v in tensor.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn idx_dims<R: Read>(
    input: &mut R,
    expected_rank: u8,
) -> Result<Vec<usize>, InputFileError> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| InputFileError::Truncated("IDX magic"))?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(InputFileError::BadMagic(magic));
    }
    if magic[2] != 0x08 {
        return Err(InputFileError::UnsupportedType { code: magic[2] });
    }
    if magic[3] != expected_rank {
        return Err(InputFileError::WrongRank { expected: expected_rank, got: magic[3] });
    }
    let mut dims = Vec::with_capacity(expected_rank as usize);
    for _ in 0..expected_rank {
        let mut raw = [0u8; 4];
        input
            .read_exact(&mut raw)
            .map_err(|_| InputFileError::Truncated("IDX dimensions"))?;
        dims.push(u32::from_be_bytes(raw) as usize);
    }
    Ok(dims)
}

/// Pulls one image out of a three-dimensional IDX archive as a
/// single-channel tensor with values in [0, 1].
pub fn read_idx_image<R: Read>(
    input: &mut R,
    index: usize,
) -> Result<RealTensor, InputFileError> {
    let dims = idx_dims(input, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    if index >= count {
        return Err(InputFileError::IndexOutOfRange { index, count });
    }
    let image_bytes = rows
        .checked_mul(cols)
        .ok_or(InputFileError::DimOverflow { channels: 1, height: rows, width: cols })?;
    // skip preceding images without buffering the whole archive
    io::copy(
        &mut input.take((index * image_bytes) as u64),
        &mut io::sink(),
    )?;
    let mut pixels = vec![0u8; image_bytes];
    input
        .read_exact(&mut pixels)
        .map_err(|_| InputFileError::Truncated("IDX pixels"))?;
    let values = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Ok(RealTensor::new(1, rows, cols, values).expect("count matches dims"))
}

/// Reads a one-dimensional IDX label vector.
pub fn read_idx_labels<R: Read>(input: &mut R) -> Result<Vec<u8>, InputFileError> {
    let dims = idx_dims(input, 1)?;
    let mut labels = vec![0u8; dims[0]];
    input
        .read_exact(&mut labels)
        .map_err(|_| InputFileError::Truncated("IDX labels"))?;
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_tensor_round_trips() {
        let tensor = RealTensor::new(
            2,
            2,
            3,
            (0..12).map(|i| i as f32 / 16.0).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_real_tensor(&mut buf, &tensor).unwrap();
        assert_eq!(buf.len(), 12 + 12 * 4);
        let back = read_real_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values(), tensor.values());
        assert_eq!(back.dims(), (2, 2, 3));
    }

    #[test]
    fn raw_tensor_truncation_is_reported() {
        let tensor = RealTensor::new(1, 2, 2, vec![0.0, 0.25, 0.5, 0.75]).unwrap();
        let mut buf = Vec::new();
        write_real_tensor(&mut buf, &tensor).unwrap();
        buf.pop();
        assert!(matches!(
            read_real_tensor(&mut buf.as_slice()),
            Err(InputFileError::Truncated("value payload"))
        ));
        assert!(matches!(
            read_real_tensor(&mut &buf[..7]),
            Err(InputFileError::Truncated("dimension header"))
        ));
    }

    fn idx3(images: &[[u8; 4]]) -> Vec<u8> {
        // 2x2 images
        let mut buf = vec![0, 0, 0x08, 3];
        buf.extend_from_slice(&(images.len() as u32).to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        for image in images {
            buf.extend_from_slice(image);
        }
        buf
    }

    #[test]
    fn idx_image_selection_and_scaling() {
        let buf = idx3(&[[0, 51, 102, 255], [255, 0, 255, 0]]);
        let first = read_idx_image(&mut buf.as_slice(), 0).unwrap();
        assert_eq!(first.dims(), (1, 2, 2));
        assert_eq!(first.get(0, 0, 1), 51.0 / 255.0);
        assert_eq!(first.get(0, 1, 1), 1.0);
        let second = read_idx_image(&mut buf.as_slice(), 1).unwrap();
        assert_eq!(second.get(0, 0, 0), 1.0);
        assert_eq!(second.get(0, 0, 1), 0.0);
        assert!(matches!(
            read_idx_image(&mut buf.as_slice(), 2),
            Err(InputFileError::IndexOutOfRange { index: 2, count: 2 })
        ));
    }

    #[test]
    fn idx_rejects_wrong_magic_type_and_rank() {
        let buf = idx3(&[[0, 0, 0, 0]]);
        let mut bad_magic = buf.clone();
        bad_magic[0] = 1;
        assert!(matches!(
            read_idx_image(&mut bad_magic.as_slice(), 0),
            Err(InputFileError::BadMagic(_))
        ));
        let mut bad_type = buf.clone();
        bad_type[2] = 0x0D; // float type
        assert!(matches!(
            read_idx_image(&mut bad_type.as_slice(), 0),
            Err(InputFileError::UnsupportedType { code: 0x0D })
        ));
        assert!(matches!(
            read_idx_labels(&mut buf.as_slice()),
            Err(InputFileError::WrongRank { expected: 1, got: 3 })
        ));
    }

    #[test]
    fn idx_labels_load() {
        let mut buf = vec![0, 0, 0x08, 1];
        buf.extend_from_slice(&3u32.to_be_bytes());
        buf.extend_from_slice(&[7, 0, 9]);
        assert_eq!(read_idx_labels(&mut buf.as_slice()).unwrap(), vec![7, 0, 9]);
        buf.pop();
        assert!(matches!(
            read_idx_labels(&mut buf.as_slice()),
            Err(InputFileError::Truncated("IDX labels"))
        ));
    }
}
