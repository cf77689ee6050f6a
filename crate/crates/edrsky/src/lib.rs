//! HDR sky environment-map toolkit.
//!
//! Linear-radiance skyangular environment maps, bijective tone-mapping
//! operators, exposure-aware Cascade/Selective losses, dynamic-range and
//! integrated-illumination metrics, sun/cloud segmentation, an
//! illumination-preserving preprocessing pipeline and a per-pixel MLP
//! inverse tonemapper.
//!
//! Per-pixel kernels run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential loops otherwise; reductions are
//! chunk-deterministic so both paths agree bitwise.

pub mod ann;
pub mod envmap;
pub mod error;
pub mod hdr_io;
pub mod image;
pub mod losses;
pub mod par;
pub mod pipeline;
pub mod segmentation;
pub mod synthetic;
pub mod tonemap;

pub use error::{Error, Result};
pub use image::RadianceImage;
