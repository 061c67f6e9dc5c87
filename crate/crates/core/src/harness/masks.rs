//! Ground-truth masks: 8-bit grayscale PNG, nonzero = anomalous.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn load_mask(path: &Path) -> Result<Array2<bool>> {
    let image_err = |reason: String| Error::Image {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| image_err(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| image_err("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(e.to_string()))?;
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        let px = &buf[i * stride + j * channels..i * stride + (j + 1) * channels];
        // ignore alpha when present
        let colour = if channels == 2 || channels == 4 { &px[..channels - 1] } else { px };
        colour.iter().any(|&v| v != 0)
    }))
}

pub fn save_mask(mask: &Array2<bool>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let image_err = |e: png::EncodingError| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(image_err)?;
    let data: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    writer.write_image_data(&data).map_err(image_err)?;
    writer.finish().map_err(image_err)
}
