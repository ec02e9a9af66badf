//! Position-wise encodings: ordinal values, one-hot rows and 4-channel images.

use crate::error::{Error, Result};

pub fn sequential_value(base: u8) -> f64 {
    match base {
        b'A' => 0.25,
        b'C' => 0.5,
        b'G' => 0.75,
        b'T' => 1.0,
        _ => 0.0,
    }
}

/// Ordinal encoding truncated or zero-padded to `max_len`.
pub fn encode_sequential(residues: &[u8], max_len: usize) -> Result<Vec<f64>> {
    check_len(max_len)?;
    let mut out = vec![0.0; max_len];
    for (slot, &b) in out.iter_mut().zip(residues) {
        *slot = sequential_value(b);
    }
    Ok(out)
}

pub fn onehot_row(base: u8) -> [u8; 4] {
    match base {
        b'A' => [0, 0, 0, 1],
        b'T' => [0, 0, 1, 0],
        b'C' => [0, 1, 0, 0],
        b'G' => [1, 0, 0, 0],
        _ => [0, 0, 0, 0],
    }
}

/// `max_len x 4` binary matrix; N and padding rows are all zero.
pub fn encode_onehot(residues: &[u8], max_len: usize) -> Result<Vec<[u8; 4]>> {
    check_len(max_len)?;
    let mut out = vec![[0u8; 4]; max_len];
    for (slot, &b) in out.iter_mut().zip(residues) {
        *slot = onehot_row(b);
    }
    Ok(out)
}

fn check_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    Ok(())
}

/// Channel order of [`ChannelImage::channels`].
pub const CHANNEL_ORDER: [u8; 4] = *b"ATCG";

/// Four binary planes, each `height` rows of `width` pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelImage {
    pub width: usize,
    pub height: usize,
    pub channels: [Vec<u8>; 4],
}

impl ChannelImage {
    pub fn pixel(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.channels[channel][row * self.width + col]
    }

    /// Channel-major flattening: index `c * width * height + pixel`.
    pub fn flatten(&self) -> Vec<f64> {
        self.channels
            .iter()
            .flat_map(|ch| ch.iter().map(|&v| v as f64))
            .collect()
    }
}

pub fn encode_image(residues: &[u8], width: usize, height: usize) -> Result<ChannelImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image width and height must be at least 1"));
    }
    let pixels = width * height;
    let mut channels: [Vec<u8>; 4] = std::array::from_fn(|_| vec![0u8; pixels]);
    for (i, &b) in residues.iter().take(pixels).enumerate() {
        if let Some(c) = CHANNEL_ORDER.iter().position(|&x| x == b) {
            channels[c][i] = 1;
        }
    }
    Ok(ChannelImage {
        width,
        height,
        channels,
    })
}

/// Side of the smallest square holding `len` pixels.
pub fn square_side(len: usize) -> usize {
    let mut s = (len as f64).sqrt() as usize;
    while s * s < len {
        s += 1;
    }
    s.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sequential_examples() {
        assert_eq!(
            encode_sequential(b"ACGT", 4).unwrap(),
            vec![0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(
            encode_sequential(b"AN", 4).unwrap(),
            vec![0.25, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            encode_sequential(b"ACGTACGT", 4).unwrap(),
            vec![0.25, 0.5, 0.75, 1.0]
        );
        assert!(encode_sequential(b"A", 0).is_err());
    }

    #[test]
    fn onehot_examples() {
        assert_eq!(
            encode_onehot(b"AT", 2).unwrap(),
            vec![[0, 0, 0, 1], [0, 0, 1, 0]]
        );
        assert_eq!(encode_onehot(b"N", 1).unwrap(), vec![[0, 0, 0, 0]]);
        assert_eq!(
            encode_onehot(b"G", 3).unwrap(),
            vec![[1, 0, 0, 0], [0; 4], [0; 4]]
        );
        assert_eq!(encode_onehot(b"C", 1).unwrap(), vec![[0, 1, 0, 0]]);
    }

    #[test]
    fn image_examples() {
        let img = encode_image(b"AT", 2, 1).unwrap();
        assert_eq!(img.channels[0], vec![1, 0]);
        assert_eq!(img.channels[1], vec![0, 1]);
        assert_eq!(img.channels[2], vec![0, 0]);
        assert_eq!(img.channels[3], vec![0, 0]);
        let img = encode_image(b"N", 1, 1).unwrap();
        assert!(img.channels.iter().all(|c| c == &vec![0]));
        let img = encode_image(b"ACGTA", 2, 2).unwrap();
        assert_eq!(img.pixel(0, 0, 0), 1);
        assert_eq!(img.pixel(3, 1, 0), 1);
        assert_eq!(img.channels[0], vec![1, 0, 0, 0]);
    }

    #[test]
    fn square_sides() {
        assert_eq!(square_side(1), 1);
        assert_eq!(square_side(4), 2);
        assert_eq!(square_side(5), 3);
        assert_eq!(square_side(1500), 39);
    }

    proptest! {
        #[test]
        fn pixel_channel_sum_is_binary(seq in "[ACGTN]{0,80}", w in 1usize..10, h in 1usize..10) {
            let img = encode_image(seq.as_bytes(), w, h).unwrap();
            for p in 0..w * h {
                let s: u8 = img.channels.iter().map(|c| c[p]).sum();
                let expected = seq.as_bytes().get(p).is_some_and(|&b| b != b'N') as u8;
                prop_assert_eq!(s, expected);
            }
        }

        #[test]
        fn positional_lengths_are_fixed(seq in "[ACGTN]{0,50}", max_len in 1usize..60) {
            prop_assert_eq!(encode_sequential(seq.as_bytes(), max_len).unwrap().len(), max_len);
            let oh = encode_onehot(seq.as_bytes(), max_len).unwrap();
            prop_assert_eq!(oh.len(), max_len);
            for (i, row) in oh.iter().enumerate() {
                let s: u8 = row.iter().sum();
                let valid = seq.as_bytes().get(i).is_some_and(|&b| b != b'N') as u8;
                prop_assert_eq!(s, valid);
            }
        }
    }
}
