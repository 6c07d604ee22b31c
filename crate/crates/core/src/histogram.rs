//! Soft and hard 2-D histograms over a square domain.
//!
//! Each coordinate spreads its mass over the bins with a triangular kernel
//! centred on the bin centres; a point's 2-D mass is the outer product of its
//! two 1-D distributions, so every point contributes exactly one unit.
//! Coordinates outside the outermost bin centres are clamped onto them.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for BinGrid {
    fn default() -> Self {
        Self {
            bins: 6,
            lo: -1.5,
            hi: 1.5,
        }
    }
}

impl BinGrid {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.width()
    }

    /// Bin index of `x`, with outliers clamped into the edge bins.
    pub fn hard_bin(&self, x: f64) -> usize {
        let b = ((x - self.lo) / self.width()).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.bins - 1)
        }
    }

    /// Normalized 1-D soft assignment of `x` and its derivative w.r.t. `x`.
    /// Returns the range of bins outside which both are zero.
    pub fn soft_weights(
        &self,
        x: f64,
        bandwidth: f64,
        p: &mut [f64],
        dp: &mut [f64],
    ) -> Range<usize> {
        let first = self.center(0);
        let last = self.center(self.bins - 1);
        let clamped = x <= first || x >= last;
        let xc = x.clamp(first, last);

        let mut s = 0.0;
        let mut ds = 0.0;
        let mut support = self.bins..0;
        for b in 0..self.bins {
            let d = xc - self.center(b);
            let (w, dw) = if d.abs() < bandwidth {
                support.start = support.start.min(b);
                support.end = b + 1;
                (1.0 - d.abs() / bandwidth, -d.signum() / bandwidth)
            } else {
                (0.0, 0.0)
            };
            p[b] = w;
            dp[b] = if clamped { 0.0 } else { dw };
            s += w;
            ds += dp[b];
        }

        if s <= 0.0 {
            // Kernel narrower than the gap between centres: fall back to hard binning.
            p.iter_mut().for_each(|v| *v = 0.0);
            dp.iter_mut().for_each(|v| *v = 0.0);
            let b = self.hard_bin(xc);
            p[b] = 1.0;
            return b..b + 1;
        }
        for b in support.clone() {
            let w = p[b];
            p[b] = w / s;
            dp[b] = (dp[b] * s - w * ds) / (s * s);
        }
        support
    }
}

/// Soft histogram of one point set given as interleaved `(x, y)` pairs.
/// The grid is indexed `[y_bin * bins + x_bin]`.
pub fn soft_histogram(grid: &BinGrid, xy: &[f64], bandwidth: f64) -> Vec<f64> {
    let b = grid.bins;
    let mut out = vec![0.0; b * b];
    let (mut px, mut dpx) = (vec![0.0; b], vec![0.0; b]);
    let (mut py, mut dpy) = (vec![0.0; b], vec![0.0; b]);
    for pt in xy.chunks_exact(2) {
        let rx = grid.soft_weights(pt[0], bandwidth, &mut px, &mut dpx);
        let ry = grid.soft_weights(pt[1], bandwidth, &mut py, &mut dpy);
        for iy in ry {
            for ix in rx.clone() {
                out[iy * b + ix] += px[ix] * py[iy];
            }
        }
    }
    out
}

/// Accumulates `d loss / d xy` given `d loss / d histogram`.
pub fn soft_histogram_backward(
    grid: &BinGrid,
    xy: &[f64],
    bandwidth: f64,
    upstream: &[f64],
    grad_xy: &mut [f64],
) {
    let b = grid.bins;
    let (mut px, mut dpx) = (vec![0.0; b], vec![0.0; b]);
    let (mut py, mut dpy) = (vec![0.0; b], vec![0.0; b]);
    for (pt, g) in xy.chunks_exact(2).zip(grad_xy.chunks_exact_mut(2)) {
        let rx = grid.soft_weights(pt[0], bandwidth, &mut px, &mut dpx);
        let ry = grid.soft_weights(pt[1], bandwidth, &mut py, &mut dpy);
        for iy in ry {
            for ix in rx.clone() {
                let u = upstream[iy * b + ix];
                g[0] += u * dpx[ix] * py[iy];
                g[1] += u * px[ix] * dpy[iy];
            }
        }
    }
}

/// Hard (counting) histogram with the same layout as [`soft_histogram`].
pub fn hard_histogram(grid: &BinGrid, xy: &[f64]) -> Vec<f64> {
    let b = grid.bins;
    let mut out = vec![0.0; b * b];
    for pt in xy.chunks_exact(2) {
        out[grid.hard_bin(pt[1]) * b + grid.hard_bin(pt[0])] += 1.0;
    }
    out
}
