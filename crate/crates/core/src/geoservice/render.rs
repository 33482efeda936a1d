//! Whole-extent PNG overlays.

use serde::{Deserialize, Serialize};

use crate::geodesy::TransverseMercator;
use crate::inundation::WET;
use crate::pipeline::catalog::{geographic_box, GeoBox};
use crate::raster::{ClassGrid, Extent, GridHeader, Rgba};

/// Straight-alpha RGBA pixels, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Grid cells per pixel edge.
    pub factor: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> Rgba {
        let i = 4 * (y * self.width + x);
        Rgba([self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]])
    }

    pub fn opaque_count(&self) -> usize {
        self.pixels.chunks_exact(4).filter(|p| p[3] != 0).count()
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(&self.pixels).expect("in-memory png data");
        writer.finish().expect("in-memory png");
        out
    }
}

/// Smallest integer factor that keeps the long edge within `max_px`.
pub fn downsample_factor(header: &GridHeader, max_px: usize) -> usize {
    header.ncols.max(header.nrows).div_ceil(max_px.max(1)).max(1)
}

fn blocks(header: &GridHeader, factor: usize) -> (usize, usize) {
    (header.ncols.div_ceil(factor), header.nrows.div_ceil(factor))
}

/// Wet cells in `color` scaled by `opacity`, everything else transparent. A
/// downsampled pixel is wet when any cell under it is.
pub fn render_mask(mask: &ClassGrid, color: Rgba, opacity: f64, max_px: usize) -> Image {
    let h = mask.header();
    let factor = downsample_factor(h, max_px);
    let (width, height) = blocks(h, factor);
    let alpha = (f64::from(color.0[3]) * opacity.clamp(0.0, 1.0)).round() as u8;
    let fill = color.with_alpha(alpha).0;
    let mut pixels = vec![0u8; 4 * width * height];
    for (i, &v) in mask.cells().iter().enumerate() {
        if v == WET {
            let (r, c) = h.row_col(i);
            let p = 4 * ((r / factor) * width + c / factor);
            pixels[p..p + 4].copy_from_slice(&fill);
        }
    }
    Image { width, height, factor, pixels }
}

/// Legend colors, nodata and unknown classes transparent. A downsampled pixel
/// takes the most frequent class under it, lowest id on ties.
pub fn render_classes(grid: &ClassGrid, max_px: usize) -> Image {
    let h = grid.header();
    let factor = downsample_factor(h, max_px);
    let (width, height) = blocks(h, factor);
    let mut pixels = vec![0u8; 4 * width * height];
    let mut counts = [0u32; 256];
    for by in 0..height {
        for bx in 0..width {
            counts.fill(0);
            for r in by * factor..((by + 1) * factor).min(h.nrows) {
                for c in bx * factor..((bx + 1) * factor).min(h.ncols) {
                    if let Some(v) = grid.get(r, c) {
                        counts[v as usize] += 1;
                    }
                }
            }
            let best = (0..256).filter(|&v| counts[v] > 0).max_by_key(|&v| (counts[v], std::cmp::Reverse(v)));
            let color = best
                .and_then(|v| grid.legend().get(v as u8))
                .map_or(Rgba::TRANSPARENT, |info| info.color);
            let p = 4 * (by * width + bx);
            pixels[p..p + 4].copy_from_slice(&color.0);
        }
    }
    Image { width, height, factor, pixels }
}

/// Georeference for placing an overlay image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayBounds {
    pub width: usize,
    pub height: usize,
    pub factor: usize,
    /// Extent covered by the image; wider than the grid when the factor does
    /// not divide its size.
    pub projected: Extent,
    /// `[lon, lat]` of the image corners.
    pub top_left: [f64; 2],
    pub top_right: [f64; 2],
    pub bottom_right: [f64; 2],
    pub bottom_left: [f64; 2],
    pub geographic: GeoBox,
}

pub fn overlay_bounds(header: &GridHeader, image: &Image, tm: &TransverseMercator) -> OverlayBounds {
    let span = image.factor as f64 * header.cell_size;
    let max_y = header.origin_y + header.nrows as f64 * header.cell_size;
    let projected = Extent {
        min_x: header.origin_x,
        min_y: max_y - image.height as f64 * span,
        max_x: header.origin_x + image.width as f64 * span,
        max_y,
    };
    let geo = |x: f64, y: f64| {
        let (lon, lat) = tm.inverse(x, y);
        [lon, lat]
    };
    OverlayBounds {
        width: image.width,
        height: image.height,
        factor: image.factor,
        top_left: geo(projected.min_x, projected.max_y),
        top_right: geo(projected.max_x, projected.max_y),
        bottom_right: geo(projected.max_x, projected.min_y),
        bottom_left: geo(projected.min_x, projected.min_y),
        geographic: geographic_box(tm, &projected),
        projected,
    }
}
