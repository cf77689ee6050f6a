//! Binary morphology with a disc structuring element.

use super::ClassMask;
use crate::error::{Error, Result};
use crate::par;

/// Pixel offsets of a disc of the given odd diameter.
fn disc_offsets(diameter: usize) -> Vec<(i64, i64)> {
    let radius = (diameter / 2) as i64;
    let r2 = (diameter as f64 / 2.0).powi(2);
    let mut offsets = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                offsets.push((dx, dy));
            }
        }
    }
    offsets
}

fn dilate(mask: &ClassMask, offsets: &[(i64, i64)]) -> ClassMask {
    transform(mask, offsets, true)
}

fn erode(mask: &ClassMask, offsets: &[(i64, i64)]) -> ClassMask {
    transform(mask, offsets, false)
}

fn transform(mask: &ClassMask, offsets: &[(i64, i64)], any: bool) -> ClassMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let src = mask.values();
    let out = par::map_indexed(src.len(), |i| {
        let (x, y) = ((i % w as usize) as i64, (i / w as usize) as i64);
        let mut hit = !any;
        for (dx, dy) in offsets {
            let (sx, sy) = (x + dx, y + dy);
            // Out-of-bounds neighbours count as background for dilation
            // and foreground for erosion, so constant masks are fixed
            // points at the image edge.
            let v = if sx >= 0 && sx < w && sy >= 0 && sy < h {
                src[(sy * w + sx) as usize]
            } else {
                !any
            };
            if any {
                if v {
                    hit = true;
                    break;
                }
            } else if !v {
                hit = false;
                break;
            }
        }
        hit
    });
    ClassMask::new(mask.width(), mask.height(), out, mask.class())
}

/// Morphological closing followed by opening with a disc element of the
/// given odd diameter, smoothing mask boundaries like a circular brush.
pub fn morph_brush(mask: &ClassMask, brush_px: usize) -> Result<ClassMask> {
    if brush_px.is_multiple_of(2) || brush_px == 0 {
        return Err(Error::InvalidParameter(format!(
            "brush diameter must be odd and >= 1, got {brush_px}"
        )));
    }
    let offsets = disc_offsets(brush_px);
    // closing = dilate then erode; opening = erode then dilate
    let closed = erode(&dilate(mask, &offsets), &offsets);
    let opened = dilate(&erode(&closed, &offsets), &offsets);
    Ok(opened)
}
