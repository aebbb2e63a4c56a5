//! Token grids built from rendered stereo frames.

use super::LearnerError;
use crate::dataset::{StoredImage, StoredStereo};
use crate::world::Semantic;

/// Channels contributed by one eye: rgb, inverse depth, three semantic groups.
pub const EYE_CHANNELS: usize = 7;
/// Two trailing channels hold the cell's normalized column and row in [-1, 1].
pub const GRID_CHANNELS: usize = 2 * EYE_CHANNELS + 2;
/// Default cells per side before padding.
pub const GRID_CELLS: usize = 8;

/// Feature grid with a validity mask. Features are stored row-major as
/// `[(row * width + col) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    channels: usize,
    features: Vec<f64>,
    mask: Vec<bool>,
}

impl TokenGrid {
    pub fn new(height: usize, width: usize, channels: usize, features: Vec<f64>, mask: Vec<bool>) -> Result<Self, LearnerError> {
        if features.len() != height * width * channels || mask.len() != height * width {
            return Err(LearnerError::Shape(format!(
                "grid {height}x{width}x{channels} got {} features and {} mask cells",
                features.len(),
                mask.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite("grid features".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            features,
            mask,
        })
    }

    /// Grid of zeros with every cell valid.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            features: vec![0.0; height * width * channels],
            mask: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn set_valid(&mut self, row: usize, col: usize, valid: bool) {
        self.mask[row * self.width + col] = valid;
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.features[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.features[i..i + self.channels]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Adds a masked border `pad` cells wide.
    pub fn padded(&self, pad: usize) -> Self {
        let (h, w) = (self.height + 2 * pad, self.width + 2 * pad);
        let mut out = Self {
            height: h,
            width: w,
            channels: self.channels,
            features: vec![0.0; h * w * self.channels],
            mask: vec![false; h * w],
        };
        for r in 0..self.height {
            for c in 0..self.width {
                out.cell_mut(r + pad, c + pad).copy_from_slice(self.cell(r, c));
                out.set_valid(r + pad, c + pad, self.is_valid(r, c));
            }
        }
        out
    }

    /// Smallest sub-grid holding every valid cell, or `None` when nothing is valid.
    pub fn crop_to_valid(&self) -> Option<Self> {
        let mut rows = (usize::MAX, 0);
        let mut cols = (usize::MAX, 0);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.is_valid(r, c) {
                    rows = (rows.0.min(r), rows.1.max(r));
                    cols = (cols.0.min(c), cols.1.max(c));
                }
            }
        }
        if rows.0 == usize::MAX {
            return None;
        }
        let (h, w) = (rows.1 - rows.0 + 1, cols.1 - cols.0 + 1);
        let mut out = Self::zeros(h, w, self.channels);
        for r in 0..h {
            for c in 0..w {
                out.cell_mut(r, c).copy_from_slice(self.cell(r + rows.0, c + cols.0));
                out.set_valid(r, c, self.is_valid(r + rows.0, c + cols.0));
            }
        }
        Some(out)
    }

    /// Pools a stereo pair into `cells`×`cells` tokens per eye (left and
    /// right channels side by side) and adds a one-cell masked border.
    pub fn from_stereo(stereo: &StoredStereo, cells: usize) -> Self {
        let mut grid = Self::zeros(cells, cells, GRID_CHANNELS);
        pool_eye(&stereo.left, cells, &mut grid, 0);
        pool_eye(&stereo.right, cells, &mut grid, EYE_CHANNELS);
        for r in 0..cells {
            for c in 0..cells {
                let coord = |i: usize| (2 * i + 1) as f64 / cells as f64 - 1.0;
                let cell = grid.cell_mut(r, c);
                cell[2 * EYE_CHANNELS] = coord(c);
                cell[2 * EYE_CHANNELS + 1] = coord(r);
            }
        }
        grid.padded(1)
    }
}

fn semantic_group(label: u8) -> Option<usize> {
    const GRASPABLE: [Semantic; 3] = [Semantic::RedCylinder, Semantic::BlueCylinder, Semantic::PipePiece];
    const BUILT: [Semantic; 6] = [
        Semantic::Pipeline,
        Semantic::Hull,
        Semantic::Structure,
        Semantic::Boat,
        Semantic::DropBox,
        Semantic::Wall,
    ];
    if GRASPABLE.iter().any(|s| *s as u8 == label) {
        Some(0)
    } else if BUILT.iter().any(|s| *s as u8 == label) {
        Some(1)
    } else if label == Semantic::Ground as u8 || label == Semantic::Rock as u8 {
        Some(2)
    } else {
        None
    }
}

fn pool_eye(img: &StoredImage, cells: usize, grid: &mut TokenGrid, offset: usize) {
    let span = |i: usize, n: usize| (i * n / cells, ((i + 1) * n).div_ceil(cells));
    for gr in 0..cells {
        let (r0, r1) = span(gr, img.height);
        for gc in 0..cells {
            let (c0, c1) = span(gc, img.width);
            let mut acc = [0.0; EYE_CHANNELS];
            let mut n = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    let i = r * img.width + c;
                    for k in 0..3 {
                        acc[k] += img.rgb[3 * i + k] as f64 / 255.0;
                    }
                    acc[3] += img.depth_at(i).map_or(0.0, |d| 1.0 / (1.0 + d));
                    if let Some(g) = semantic_group(img.semantic[i]) {
                        acc[4 + g] += 1.0;
                    }
                    n += 1.0;
                }
            }
            let cell = grid.cell_mut(gr, gc);
            for k in 0..EYE_CHANNELS {
                cell[offset + k] = if n > 0.0 { acc[k] / n } else { 0.0 };
            }
        }
    }
}
