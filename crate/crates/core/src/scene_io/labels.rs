use std::path::Path;

use image::{ColorType, ImageReader};

use super::LabelImage;
use crate::error::{Error, Result};

/// Loads an 8-bit single-channel PNG of category ids. 255 means ignore.
pub fn load_label_image(path: impl AsRef<Path>, num_classes: usize) -> Result<LabelImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    if img.color() != ColorType::L8 {
        return Err(Error::Format(format!(
            "{}: label image must be 8-bit single-channel, found {:?}",
            path.display(),
            img.color()
        )));
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    LabelImage::new(w, h, gray.into_raw(), num_classes)
}

pub fn save_label_image(labels: &LabelImage, path: impl AsRef<Path>) -> Result<()> {
    super::write_gray_png(path, labels.width, labels.height, &labels.category_ids)
}
