//! ROI extraction for three-view captures and keypoint patches for the
//! patch discriminator.

mod image;
pub mod keypoints;
pub mod roi;
pub mod stages;

use thiserror::Error;

pub use self::image::{round_half_up_u8, Image, RealImage};
pub use keypoints::{extract_patches, PATCH_COUNT, PATCH_SIZE};
pub use roi::{
    crop_window, extract_roi_triplet, map_point, resize_bilinear, resize_to, Calibration, RoiMeta,
    Window, ROI_SIZE, WINDOW_SIZE,
};
pub use stages::{
    binarize_clean, gaussian_smooth, gray_equalize, laplacian_magnitude, largest_blob_centroid,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("expected {expected} channel(s), found {found}")]
    Channels { expected: &'static str, found: usize },
    #[error("buffer holds {found} bytes, expected {expected}")]
    BufferSize { expected: usize, found: usize },
    #[error("no foreground blob found")]
    NoForeground,
    #[error("mapping degenerates at ({x}, {y})")]
    DegenerateMapping { x: f64, y: f64 },
    #[error("calibration homography is singular (det = {0})")]
    SingularCalibration(f64),
    #[error("{view} view: {message}")]
    View { view: &'static str, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// The three co-captured views of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureTriplet {
    pub direct: Image,
    pub raw: Image,
    pub processed: Image,
}

impl CaptureTriplet {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let check = |img: &Image, ch: usize, view: &'static str| {
            if img.channels() != ch {
                Err(PreprocessError::View {
                    view,
                    message: format!("expected {ch} channel(s), found {}", img.channels()),
                })
            } else {
                Ok(())
            }
        };
        check(&self.direct, 3, "direct")?;
        check(&self.raw, 3, "raw")?;
        check(&self.processed, 1, "processed")
    }
}

/// Aligned 256x256 ROIs of the three views.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTriplet {
    pub direct: Image,
    pub raw: Image,
    pub processed: Image,
}

impl RoiTriplet {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (img, ch, view) in [
            (&self.direct, 3, "direct"),
            (&self.raw, 3, "raw"),
            (&self.processed, 1, "processed"),
        ] {
            if img.width() != ROI_SIZE || img.height() != ROI_SIZE || img.channels() != ch {
                return Err(PreprocessError::View {
                    view,
                    message: format!(
                        "expected {ROI_SIZE}x{ROI_SIZE}x{ch}, found {}x{}x{}",
                        img.width(),
                        img.height(),
                        img.channels()
                    ),
                });
            }
        }
        Ok(())
    }
}
