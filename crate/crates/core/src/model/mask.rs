use serde::{Deserialize, Serialize};

use super::frame::{expect_frame, BBox, Frame, GeometryTransform};
use crate::error::{Error, Result};

/// Binary mask stored as row-major run lengths.
///
/// Runs alternate starting with background, so `counts[0]` may be zero and
/// every odd-indexed run is foreground. The runs always sum to
/// `width * height`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: u32,
    height: u32,
    frame: Frame,
    counts: Vec<u32>,
}

/// Dense working form of a [`Mask`], one `bool` per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMask {
    pub width: u32,
    pub height: u32,
    pub frame: Frame,
    pub data: Vec<bool>,
}

impl DenseMask {
    pub fn new(width: u32, height: u32, frame: Frame) -> Self {
        Self { width, height, frame, data: vec![false; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn union_with(&mut self, other: &DenseMask) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    pub fn encode(&self) -> Mask {
        Mask::from_dense(self)
    }
}

impl Mask {
    pub fn from_dense(dense: &DenseMask) -> Mask {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &v in &dense.data {
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
        counts.push(run);
        Mask { width: dense.width, height: dense.height, frame: dense.frame, counts }
    }

    pub fn from_counts(width: u32, height: u32, frame: Frame, counts: Vec<u32>) -> Result<Mask> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != width as u64 * height as u64 {
            return Err(Error::Validation(format!(
                "mask runs sum to {total}, expected {width}x{height}"
            )));
        }
        if counts.iter().skip(1).any(|&c| c == 0) {
            return Err(Error::Validation("only the leading run may be empty".into()));
        }
        Ok(Mask { width, height, frame, counts })
    }

    pub fn empty(width: u32, height: u32, frame: Frame) -> Mask {
        Mask { width, height, frame, counts: vec![width * height] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn to_dense(&self) -> DenseMask {
        let mut data = Vec::with_capacity(self.width as usize * self.height as usize);
        let mut value = false;
        for &c in &self.counts {
            data.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        DenseMask { width: self.width, height: self.height, frame: self.frame, data }
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground runs as `(start, len)` flat indices.
    pub fn foreground_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1).then_some((start, c as u64))
        })
    }

    pub fn require_frame(&self, frame: Frame) -> Result<()> {
        expect_frame("mask", self.frame, frame)
    }

    /// Tight half-open bounds of the set pixels.
    pub fn bbox(&self) -> Result<BBox> {
        let w = self.width as u64;
        let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        let mut any = false;
        for (start, len) in self.foreground_runs() {
            any = true;
            let end = start + len - 1;
            let (ys, ye) = (start / w, end / w);
            y0 = y0.min(ys);
            y1 = y1.max(ye + 1);
            if ys == ye {
                x0 = x0.min(start % w);
                x1 = x1.max(end % w + 1);
            } else {
                // a run wrapping a row boundary reaches both image edges
                x0 = 0;
                x1 = w;
            }
        }
        if !any {
            return Err(Error::Validation("bounding box of an empty mask".into()));
        }
        BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64, self.frame)
    }
}

impl Mask {
    /// Nearest-neighbour resample into the other frame of `transform`
    /// (original -> model or model -> original). Each target pixel takes the
    /// value of the source pixel under its centre.
    pub fn resample(&self, transform: &GeometryTransform, width: u32, height: u32) -> Mask {
        let target_frame = match self.frame {
            Frame::Original => Frame::Model,
            Frame::Model => Frame::Original,
        };
        let src = self.to_dense();
        let mut out = DenseMask::new(width, height, target_frame);
        if self.is_empty() {
            return out.encode();
        }
        let map = |c: f64, scale: f64, pad: f64| match self.frame {
            // target is original, source is model
            Frame::Model => c * scale + pad,
            Frame::Original => (c - pad) / scale,
        };
        let xs: Vec<Option<u32>> = (0..width)
            .map(|x| {
                let s = map(x as f64 + 0.5, transform.scale_x, transform.pad_x).floor();
                (s >= 0.0 && s < self.width as f64).then_some(s as u32)
            })
            .collect();
        for y in 0..height {
            let sy = map(y as f64 + 0.5, transform.scale_y, transform.pad_y).floor();
            if sy < 0.0 || sy >= self.height as f64 {
                continue;
            }
            let sy = sy as u32;
            for (x, sx) in xs.iter().enumerate() {
                if let Some(sx) = sx {
                    if src.get(*sx, sy) {
                        out.set(x as u32, y, true);
                    }
                }
            }
        }
        out.encode()
    }
}
