//! Dependency-free image output: binary PPM (P6) frames, an error-map heat
//! palette, and patch-grid overlays for selection and policy attention.

use std::path::Path;

use crate::saliency::ErrorMap;
use crate::tensor::Result;

/// Heat palette anchors at v = 0, 0.5, 1: dark blue -> green -> yellow
/// (brighter = larger). Frozen; golden images depend on these bytes.
pub const HEAT_ANCHORS: [[u8; 3]; 3] = [[16, 24, 96], [32, 168, 96], [255, 224, 32]];

/// Linear two-segment interpolation across the palette anchors; input clamped
/// to [0, 1].
pub fn heat_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let (a, b, t) = if v < 0.5 {
        (HEAT_ANCHORS[0], HEAT_ANCHORS[1], v * 2.0)
    } else {
        (HEAT_ANCHORS[1], HEAT_ANCHORS[2], (v - 0.5) * 2.0)
    };
    let mut out = [0u8; 3];
    for ch in 0..3 {
        out[ch] = (a[ch] as f64 + t * (b[ch] as f64 - a[ch] as f64)).round() as u8;
    }
    out
}

/// Serialize an rgb8 image as binary PPM (P6, maxval 255).
pub fn ppm_bytes(w: usize, h: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), w * h * 3, "pixel buffer does not match {w}x{h}");
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
    std::fs::write(path, ppm_bytes(w, h, rgb))?;
    Ok(())
}

/// Render an error map as a heatmap, `cell` pixels per patch, normalized by
/// the maximum entry (an all-zero map renders as the palette floor).
pub fn heatmap(map: &ErrorMap, cell: usize) -> (usize, usize, Vec<u8>) {
    let pr = map.patches_per_row;
    let side = pr * cell;
    let max = map.errors.iter().cloned().fold(0.0f64, f64::max);
    let mut rgb = vec![0u8; side * side * 3];
    for (idx, &e) in map.errors.iter().enumerate() {
        let (i, j) = map.position(idx);
        let color = heat_color(if max > 0.0 { e / max } else { 0.0 });
        for y in i * cell..(i + 1) * cell {
            for x in j * cell..(j + 1) * cell {
                rgb[(y * side + x) * 3..(y * side + x) * 3 + 3].copy_from_slice(&color);
            }
        }
    }
    (side, side, rgb)
}

/// Draw a `thickness`-pixel border around each listed patch of a `p`-pixel
/// grid, in place.
pub fn outline_patches(
    rgb: &mut [u8],
    side: usize,
    p: usize,
    positions: &[(usize, usize)],
    color: [u8; 3],
    thickness: usize,
) {
    for &(i, j) in positions {
        for dy in 0..p {
            for dx in 0..p {
                let border =
                    dy < thickness || dy >= p - thickness || dx < thickness || dx >= p - thickness;
                if border {
                    let (y, x) = (i * p + dy, j * p + dx);
                    if y < side && x < side {
                        rgb[(y * side + x) * 3..(y * side + x) * 3 + 3].copy_from_slice(&color);
                    }
                }
            }
        }
    }
}

/// Overlay styles used by the attention visualization.
pub const SELECTED_COLOR: [u8; 3] = [255, 255, 255];
pub const ATTENDED_COLOR: [u8; 3] = [64, 128, 255];
pub const SELECTED_AND_ATTENDED_COLOR: [u8; 3] = [255, 64, 160];
