//! Desk-scale toolkit for en-face OCT angiography: synthetic phantoms with known ground
//! truth, low-sampling degradation, vessel quantification, caliber and SNR measurement,
//! feature-distribution distances, and scan-protocol arithmetic.

pub mod error;
pub mod evaluate;
pub mod filter;
pub mod flow;
pub mod perceptual;
pub mod phantom;
pub mod protocol;
pub mod raster;
pub mod vessel;

pub use error::{Error, Result};
pub use raster::{Angiogram, Grid, Mask, PhysicalRegion, RasterFormat, ResampleMethod};
