//! Thin PNG encode/decode helpers on top of the `png` crate.

use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use crate::error::{Error, Result};

fn encode(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
        writer
            .finish()
            .map_err(|e| Error::Format(format!("png finish: {e}")))?;
    }
    Ok(out)
}

/// Single-channel 16-bit PNG from row-major samples.
pub fn encode_gray16(width: usize, height: usize, samples: &[u16]) -> Result<Vec<u8>> {
    debug_assert_eq!(samples.len(), width * height);
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(width, height, ColorType::Grayscale, BitDepth::Sixteen, &bytes)
}

pub fn encode_gray8(width: usize, height: usize, samples: &[u8]) -> Result<Vec<u8>> {
    debug_assert_eq!(samples.len(), width * height);
    encode(width, height, ColorType::Grayscale, BitDepth::Eight, samples)
}

pub fn encode_rgb8(width: usize, height: usize, samples: &[u8]) -> Result<Vec<u8>> {
    debug_assert_eq!(samples.len(), 3 * width * height);
    encode(width, height, ColorType::Rgb, BitDepth::Eight, samples)
}

/// Raw decoded image: dimensions, color layout and untransformed sample bytes.
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub color: ColorType,
    pub depth: BitDepth,
    pub bytes: Vec<u8>,
}

pub fn decode(bytes: &[u8]) -> Result<RawImage> {
    let mut dec = Decoder::new(Cursor::new(bytes));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    buf.truncate(info.buffer_size());
    Ok(RawImage {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes: buf,
    })
}

/// Decodes a 16-bit single-channel PNG, rejecting any other layout.
pub fn decode_gray16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let img = decode(bytes)?;
    if img.color != ColorType::Grayscale {
        return Err(Error::Format(format!(
            "expected single-channel grayscale png, got {:?}",
            img.color
        )));
    }
    if img.depth != BitDepth::Sixteen {
        return Err(Error::Format(format!(
            "expected 16-bit png, got {:?}",
            img.depth
        )));
    }
    let samples = img
        .bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((img.width, img.height, samples))
}

pub fn decode_gray8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = decode(bytes)?;
    if img.color != ColorType::Grayscale || img.depth != BitDepth::Eight {
        return Err(Error::Format(format!(
            "expected 8-bit grayscale png, got {:?} {:?}",
            img.color, img.depth
        )));
    }
    Ok((img.width, img.height, img.bytes))
}
