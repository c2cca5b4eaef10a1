//! PNG and PFM raster output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

pub fn write_gray_png(path: impl AsRef<Path>, width: u32, height: u32, data: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let img: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(width, height, data.to_vec())
        .ok_or_else(|| {
            Error::Dimension(format!("{} bytes for {width}x{height} image", data.len()))
        })?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Writes interleaved RGB values in [0, 1] as an 8-bit PNG (round to nearest).
pub fn write_rgb_png(path: impl AsRef<Path>, width: u32, height: u32, rgb: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = rgb
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_rgb8_png(path, width, height, bytes)
}

pub(crate) fn write_rgb8_png(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    bytes: Vec<u8>,
) -> Result<()> {
    let path = path.as_ref();
    let len = bytes.len();
    let img: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(width, height, bytes)
        .ok_or_else(|| Error::Dimension(format!("{len} bytes for {width}x{height} RGB image")))?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Reads a PNG as interleaved RGB in [0, 1].
pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<f64>)> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok((
        w,
        h,
        img.into_raw()
            .into_iter()
            .map(|b| b as f64 / 255.0)
            .collect(),
    ))
}

/// A float raster with 1 or 3 interleaved channels, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

/// Writes a little-endian PFM (scale −1.0). PFM stores rows bottom to top;
/// `data` is top to bottom and is flipped on write.
pub fn write_pfm(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    channels: u32,
    data: &[f32],
) -> Result<()> {
    let path = path.as_ref();
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        _ => {
            return Err(Error::InvalidArgument(format!(
                "PFM supports 1 or 3 channels, not {channels}"
            )))
        }
    };
    let row_len = (width * channels) as usize;
    if data.len() != row_len * height as usize {
        return Err(Error::Dimension(format!(
            "{} floats for a {width}x{height}x{channels} PFM",
            data.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "{tag}\n{width} {height}\n-1.0\n").map_err(io)?;
    for row in data.chunks(row_len).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    let mut line = String::new();
    while header.len() < 4 {
        line.clear();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(Error::Format("truncated PFM header".into()));
        }
        header.extend(line.split_whitespace().map(str::to_string));
    }
    let channels = match header[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("bad PFM tag '{other}'"))),
    };
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad PFM header value '{s}'")))
    };
    let width = parse(&header[1])? as u32;
    let height = parse(&header[2])? as u32;
    let little = parse(&header[3])? < 0.0;
    let row_len = (width * channels) as usize;
    let mut bytes = vec![0u8; row_len * height as usize * 4];
    r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let data = values
        .chunks(row_len.max(1))
        .rev()
        .flatten()
        .copied()
        .collect();
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

/// Fixed 28-entry segmentation palette, indexed by category id. Categories
/// beyond 27 wrap around; ignored pixels render black.
pub const CATEGORY_PALETTE: [[u8; 3]; 28] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
    [255, 255, 255],
    [166, 86, 40],
    [255, 127, 0],
    [77, 175, 74],
    [152, 78, 163],
    [255, 255, 51],
    [31, 120, 180],
    [251, 154, 153],
    [178, 223, 138],
];

pub fn category_palette(category: u8) -> [u8; 3] {
    if category == super::IGNORE {
        [0, 0, 0]
    } else {
        CATEGORY_PALETTE[category as usize % CATEGORY_PALETTE.len()]
    }
}
