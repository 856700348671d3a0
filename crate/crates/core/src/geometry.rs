//! Pixel layout of the detector array.
//!
//! Coordinates are in micrometres in the focal plane. Pixel `(row, col)` has
//! its centre at `origin + (col * pitch, row * pitch)` and channel index
//! `row * cols + col`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default layout: 8x8 pixels, 27.8 x 27.5 um active area on a 30 um pitch,
/// with the array footprint spanning `[0, 240] x [0, 240]` um.
pub const PITCH_UM: f64 = 30.0;
pub const ACTIVE_WIDTH_UM: f64 = 27.8;
pub const ACTIVE_HEIGHT_UM: f64 = 27.5;
/// Active height with the widened meander bends excluded.
pub const ACTIVE_HEIGHT_NO_BENDS_UM: f64 = 26.1;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Topology {
    #[default]
    #[serde(rename = "4-neighbor")]
    FourNeighbor,
    #[serde(rename = "8-neighbor")]
    EightNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
    pub active_width_um: f64,
    pub active_height_um: f64,
    /// Centre of pixel (0, 0).
    pub origin_um: (f64, f64),
    /// Detection efficiency of the connecting wires in the inter-pixel gaps,
    /// relative to the pixel plateau. Gap photons are credited to the pixel
    /// whose pitch cell contains them.
    #[serde(default)]
    pub wire_efficiency: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            pitch_um: PITCH_UM,
            active_width_um: ACTIVE_WIDTH_UM,
            active_height_um: ACTIVE_HEIGHT_UM,
            origin_um: (PITCH_UM / 2.0, PITCH_UM / 2.0),
            wire_efficiency: 0.0,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain("array must have at least one row and column"));
        }
        if self.rows * self.cols > 255 {
            return Err(Error::domain("at most 255 pixel channels are supported"));
        }
        if !(self.pitch_um > 0.0) {
            return Err(Error::domain("pitch must be positive"));
        }
        if !(self.active_width_um > 0.0 && self.active_width_um <= self.pitch_um) {
            return Err(Error::domain("active width must lie in (0, pitch]"));
        }
        if !(self.active_height_um > 0.0 && self.active_height_um <= self.pitch_um) {
            return Err(Error::domain("active height must lie in (0, pitch]"));
        }
        if !(0.0..=1.0).contains(&self.wire_efficiency) {
            return Err(Error::domain("wire efficiency must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn fill_factor(&self) -> f64 {
        self.active_width_um * self.active_height_um / (self.pitch_um * self.pitch_um)
    }

    pub fn check_pixel(&self, pixel: usize) -> Result<()> {
        if pixel < self.pixel_count() {
            Ok(())
        } else {
            Err(Error::InvalidPixel { index: pixel, count: self.pixel_count() })
        }
    }

    pub fn row_col(&self, pixel: usize) -> Result<(usize, usize)> {
        self.check_pixel(pixel)?;
        Ok((pixel / self.cols, pixel % self.cols))
    }

    pub fn index(&self, row: usize, col: usize) -> Option<usize> {
        (row < self.rows && col < self.cols).then_some(row * self.cols + col)
    }

    pub fn pixel_center(&self, pixel: usize) -> Result<(f64, f64)> {
        let (row, col) = self.row_col(pixel)?;
        Ok((
            self.origin_um.0 + col as f64 * self.pitch_um,
            self.origin_um.1 + row as f64 * self.pitch_um,
        ))
    }

    /// Photosensitive rectangle of a pixel.
    pub fn active_rect(&self, pixel: usize) -> Result<Rect> {
        let (cx, cy) = self.pixel_center(pixel)?;
        Ok(Rect::centered(cx, cy, self.active_width_um, self.active_height_um))
    }

    /// The pitch x pitch cell around a pixel centre.
    pub fn cell_rect(&self, pixel: usize) -> Result<Rect> {
        let (cx, cy) = self.pixel_center(pixel)?;
        Ok(Rect::centered(cx, cy, self.pitch_um, self.pitch_um))
    }

    /// Whole array footprint (union of pitch cells).
    pub fn footprint(&self) -> Rect {
        let half = self.pitch_um / 2.0;
        Rect::new(
            self.origin_um.0 - half,
            self.origin_um.1 - half,
            self.origin_um.0 + (self.cols as f64 - 0.5) * self.pitch_um,
            self.origin_um.1 + (self.rows as f64 - 0.5) * self.pitch_um,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        let f = self.footprint();
        ((f.x0 + f.x1) / 2.0, (f.y0 + f.y1) / 2.0)
    }

    /// Neighbouring channels in ascending order.
    pub fn neighbors(&self, pixel: usize, topology: Topology) -> Result<Vec<usize>> {
        let (row, col) = self.row_col(pixel)?;
        let (row, col) = (row as isize, col as isize);
        let mut out = Vec::with_capacity(8);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                if topology == Topology::FourNeighbor && dr != 0 && dc != 0 {
                    continue;
                }
                let (r, c) = (row + dr, col + dc);
                if r >= 0 && c >= 0 {
                    if let Some(idx) = self.index(r as usize, c as usize) {
                        out.push(idx);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_fill_factor() {
        let g = ArrayGeometry::default();
        assert_relative_eq!(g.fill_factor(), 27.8 * 27.5 / 900.0, epsilon = 1e-12);
        let g = ArrayGeometry { active_height_um: ACTIVE_HEIGHT_NO_BENDS_UM, ..g };
        assert!(g.fill_factor() > 0.80 && g.fill_factor() < 0.85);
    }

    #[test]
    fn footprint_spans_240um() {
        let f = ArrayGeometry::default().footprint();
        assert_eq!((f.x0, f.y0, f.x1, f.y1), (0.0, 0.0, 240.0, 240.0));
    }

    #[test]
    fn index_mapping_is_bijective() {
        let g = ArrayGeometry::default();
        let mut seen = vec![false; g.pixel_count()];
        for r in 0..g.rows {
            for c in 0..g.cols {
                let idx = g.index(r, c).unwrap();
                assert!(!seen[idx]);
                seen[idx] = true;
                assert_eq!(g.row_col(idx).unwrap(), (r, c));
            }
        }
        assert!(seen.into_iter().all(|s| s));
        assert!(g.row_col(64).is_err());
    }

    #[test]
    fn neighbor_counts() {
        let g = ArrayGeometry::default();
        assert_eq!(g.neighbors(0, Topology::FourNeighbor).unwrap(), vec![1, 8]);
        assert_eq!(g.neighbors(9, Topology::FourNeighbor).unwrap(), vec![1, 8, 10, 17]);
        assert_eq!(g.neighbors(9, Topology::EightNeighbor).unwrap().len(), 8);
        assert_eq!(g.neighbors(63, Topology::EightNeighbor).unwrap(), vec![54, 55, 62]);
    }

    #[test]
    fn rejects_oversized_active_area() {
        let g = ArrayGeometry { active_width_um: 31.0, ..Default::default() };
        assert!(g.validate().is_err());
    }
}
