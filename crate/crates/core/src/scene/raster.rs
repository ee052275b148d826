use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

use super::GridSpec;

/// Interleaved-RGB image raster with f64 channels in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub const CHANNELS: usize = 3;

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height * Self::CHANNELS],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::data("raster data length does not match dimensions"));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * Self::CHANNELS + c] = v;
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.set(x, y, c, v);
        }
    }

    /// Channels-first `[3, H, W]` tensor of this raster.
    pub fn to_tensor_chw(&self) -> Tensor {
        let mut data = vec![0.0; self.data.len()];
        let plane = self.width * self.height;
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..Self::CHANNELS {
                    data[c * plane + y * self.width + x] = self.get(x, y, c);
                }
            }
        }
        Tensor::new(&[Self::CHANNELS, self.height, self.width], data).expect("raster tensor")
    }

    /// Bilinear resize. Deterministic; sample points use the pixel-center
    /// convention `src = (dst + 0.5) * scale - 0.5` with edge clamping.
    pub fn resize(&self, new_w: usize, new_h: usize) -> Result<Raster> {
        if new_w == 0 || new_h == 0 {
            return Err(Error::contract("resize target must be at least 1x1"));
        }
        let mut out = Raster::filled(new_w, new_h, 0.0);
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        for oy in 0..new_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for ox in 0..new_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                for c in 0..Self::CHANNELS {
                    let top = self.get(x0, y0, c) * (1.0 - wx) + self.get(x1, y0, c) * wx;
                    let bot = self.get(x0, y1, c) * (1.0 - wx) + self.get(x1, y1, c) * wx;
                    out.set(ox, oy, c, top * (1.0 - wy) + bot * wy);
                }
            }
        }
        Ok(out)
    }
}

/// Cut the `3g x 3g` patch around a grid cell: the cell itself plus an
/// annulus of one cell width on every side. Pixels outside the image are
/// zero (the image is conceptually zero-padded by `g` on all sides).
pub fn extract_patch(image: &Raster, cell: (usize, usize), grid: &GridSpec) -> Result<Raster> {
    let g = grid.cell_px as usize;
    let (row, col) = cell;
    if row >= grid.rows(image.height()) || col >= grid.cols(image.width()) {
        return Err(Error::contract("patch cell outside the grid"));
    }
    let side = 3 * g;
    let mut out = Raster::filled(side, side, 0.0);
    let origin_x = col as i64 * g as i64 - g as i64;
    let origin_y = row as i64 * g as i64 - g as i64;
    for py in 0..side {
        let sy = origin_y + py as i64;
        if sy < 0 || sy >= image.height() as i64 {
            continue;
        }
        for px in 0..side {
            let sx = origin_x + px as i64;
            if sx < 0 || sx >= image.width() as i64 {
                continue;
            }
            for c in 0..Raster::CHANNELS {
                out.set(px, py, c, image.get(sx as usize, sy as usize, c));
            }
        }
    }
    Ok(out)
}
