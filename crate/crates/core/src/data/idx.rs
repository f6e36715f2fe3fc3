use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Shape;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header: missing {what}")))
}

/// Returns (count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Idx(format!("bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")));
    }
    let n = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let need = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Idx(format!("truncated image payload: {} of {need} bytes", payload.len())));
    }
    Ok((n, rows, cols, &payload[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Idx(format!("bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")));
    }
    let n = read_u32(bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::Idx(format!("truncated label payload: {} of {n} bytes", payload.len())));
    }
    Ok(&payload[..n])
}

/// Loads an image/label IDX pair; pixels are scaled to [0, 1].
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let image_bytes = std::fs::read(images.as_ref())?;
    let label_bytes = std::fs::read(labels.as_ref())?;
    let (n, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::Idx(format!("{n} images but {} labels", labels.len())));
    }
    let plane = rows * cols;
    let inputs = (0..n)
        .map(|i| pixels[i * plane..(i + 1) * plane].iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let name = images.as_ref().file_stem().and_then(|s| s.to_str()).unwrap_or("idx").to_string();
    Dataset::new(name, Shape::new(1, rows, cols), classes, inputs, labels)
}

/// Writes a single-channel dataset as an IDX pair, quantizing to 8 bits.
pub fn write_idx(ds: &Dataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    if ds.shape.channels != 1 {
        return Err(Error::Idx(format!("IDX images must be single-channel, dataset is {}", ds.shape)));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * ds.shape.pixels());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(ds.shape.height as u32).to_be_bytes());
    img.extend_from_slice(&(ds.shape.width as u32).to_be_bytes());
    for x in &ds.inputs {
        img.extend(x.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in &ds.labels {
        let b = u8::try_from(l).map_err(|_| Error::Idx(format!("label {l} does not fit in a byte")))?;
        lab.push(b);
    }
    std::fs::write(images, img)?;
    std::fs::write(labels, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(magic: u32, dims: [u32; 3], pixels: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn one_two_by_two_image_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        std::fs::write(&ip, image_file(IDX_IMAGES_MAGIC, [1, 2, 2], &[0, 51, 204, 255])).unwrap();
        let mut labels = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(0);
        std::fs::write(&lp, labels).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.shape, Shape::new(1, 2, 2));
        assert_eq!(ds.inputs[0], vec![0.0, 51.0 / 255.0, 204.0 / 255.0, 1.0]);
    }

    #[test]
    fn bad_magic_is_named() {
        let bytes = image_file(0x0000_0899, [1, 2, 2], &[0; 4]);
        let msg = parse_idx_images(&bytes).unwrap_err().to_string();
        assert!(msg.contains("0x00000899"), "{msg}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = image_file(IDX_IMAGES_MAGIC, [2, 2, 2], &[0; 5]);
        assert!(parse_idx_images(&bytes).unwrap_err().to_string().contains("truncated"));
        assert!(parse_idx_images(&bytes[..10]).is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, image_file(IDX_IMAGES_MAGIC, [2, 1, 1], &[1, 2])).unwrap();
        let mut labels = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(0);
        std::fs::write(&lp, labels).unwrap();
        assert!(load_idx(&ip, &lp).unwrap_err().to_string().contains("2 images but 1 labels"));
    }
}
