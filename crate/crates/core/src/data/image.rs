//! Decoding 120×120 RGB crops from binary PPM or raw little-endian f32.

use std::path::Path;

use crate::error::{ImageError, Result};
use crate::model::{CHANNELS, FRAME_SIZE};
use crate::tensor::Tensor;

/// Values per image.
pub const IMAGE_LEN: usize = FRAME_SIZE * FRAME_SIZE * CHANNELS;

fn shape() -> Vec<usize> {
    vec![FRAME_SIZE, FRAME_SIZE, CHANNELS]
}

/// Read the next header token, skipping whitespace and `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> std::result::Result<u32, ImageError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::BadHeader(format!("expected a number at byte {start}")))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor, ImageError> {
    if !bytes.starts_with(b"P6") {
        return Err(ImageError::BadMagic);
    }
    let mut pos = 2;
    let width = token(bytes, &mut pos)? as usize;
    let height = token(bytes, &mut pos)? as usize;
    let maxval = token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(ImageError::Maxval(maxval));
    }
    if width != FRAME_SIZE || height != FRAME_SIZE {
        return Err(ImageError::Dimensions { width, height });
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::BadHeader("missing whitespace after maxval".into())),
    }
    let pixels = &bytes[pos..];
    if pixels.len() < IMAGE_LEN {
        return Err(ImageError::Short { expected: IMAGE_LEN, found: pixels.len() });
    }
    let data = pixels[..IMAGE_LEN].iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Tensor::new(&shape(), data).expect("fixed size"))
}

pub fn decode_raw(bytes: &[u8]) -> Result<Tensor, ImageError> {
    let expected = IMAGE_LEN * 4;
    if bytes.len() != expected {
        return Err(ImageError::Short { expected, found: bytes.len() });
    }
    let mut data = Vec::with_capacity(IMAGE_LEN);
    for (index, chunk) in bytes.chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().unwrap());
        if !(0.0..=1.0).contains(&value) {
            return Err(ImageError::ValueRange { index, value });
        }
        data.push(value);
    }
    Ok(Tensor::new(&shape(), data).expect("fixed size"))
}

/// Decode by extension: `.ppm` or `.f32`.
pub fn decode_image(path: &Path) -> Result<Tensor> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let decode = match ext.as_deref() {
        Some("ppm") => decode_ppm,
        Some("f32") => decode_raw,
        _ => return Err(ImageError::Extension(path.into()).into()),
    };
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: path.into(), source })?;
    Ok(decode(&bytes)?)
}

/// Binary PPM with values quantized to bytes.
pub fn encode_ppm(image: &Tensor) -> Vec<u8> {
    let [h, w, _] = [image.shape()[0], image.shape()[1], image.shape()[2]];
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_raw(image: &Tensor) -> Vec<u8> {
    image.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Write `image` in the format named by the extension of `path`.
pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => encode_ppm(image),
        Some("f32") => encode_raw(image),
        _ => return Err(ImageError::Extension(path.into()).into()),
    };
    std::fs::write(path, bytes).map_err(|source| ImageError::Io { path: path.into(), source }.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ppm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
        let mut out = format!("P6\n# test\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(pixels);
        out
    }

    #[test]
    fn red_pixel_scales() {
        let mut pixels = vec![0u8; IMAGE_LEN];
        pixels[0] = 255;
        let t = decode_ppm(&ppm(120, 120, &pixels)).unwrap();
        assert_eq!((t.at(&[0, 0, 0]), t.at(&[0, 0, 1]), t.at(&[0, 0, 2])), (1.0, 0.0, 0.0));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_ppm(&ppm(100, 100, &[0; 30000])), Err(ImageError::Dimensions { width: 100, height: 100 })));
        assert!(matches!(decode_ppm(b"P3\n120 120\n255\n"), Err(ImageError::BadMagic)));
        assert!(matches!(decode_ppm(&ppm(120, 120, &[0; 100])), Err(ImageError::Short { found: 100, .. })));
        assert!(matches!(decode_ppm(b"P6\n120 120\n65535\n"), Err(ImageError::Maxval(65535))));
        assert!(matches!(decode_raw(&[0; 12]), Err(ImageError::Short { .. })));
        let mut bad = encode_raw(&Tensor::full(&shape(), 0.5));
        bad[8..12].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode_raw(&bad), Err(ImageError::ValueRange { index: 2, .. })));
    }

    #[test]
    fn raw_constant() {
        let bytes: Vec<u8> = std::iter::repeat(0.5f32.to_le_bytes()).take(43_200).flatten().collect();
        assert!(decode_raw(&bytes).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_fn(&shape(), |i| (i % 256) as f32 / 255.0);
        for name in ["a.ppm", "a.f32"] {
            let path = dir.path().join(name);
            write_image(&path, &img).unwrap();
            let back = decode_image(&path).unwrap();
            let err = back.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            assert!(err < 1e-6, "{name}: {err}");
        }
        assert!(matches!(decode_image(&dir.path().join("a.png")), Err(crate::Error::Image(ImageError::Extension(_)))));
        assert!(matches!(decode_image(&dir.path().join("missing.ppm")), Err(crate::Error::Image(ImageError::Io { .. }))));
    }
}
