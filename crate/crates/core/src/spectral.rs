//! Trigonometric differentiation on the uniform periodic grid of `[0,1)^n`.
//!
//! Point index is `sum_a i_a * N^a` (axis 0 fastest).

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::{CMat, C64};

#[derive(Clone)]
pub struct Spectral {
    pub dim: usize,
    pub n: usize,
    pub npts: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

/// Signed wavenumber of FFT bin `j` on a grid of size `n`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl Spectral {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            dim,
            n,
            npts: n.pow(dim as u32),
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    /// Grid coordinates of point `idx`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        (0..self.dim)
            .map(|_| {
                let i = rest % self.n;
                rest /= self.n;
                i as f64 / self.n as f64
            })
            .collect()
    }

    /// Multi-index of point `idx`.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rest = idx;
        (0..self.dim)
            .map(|_| {
                let i = rest % self.n;
                rest /= self.n;
                i
            })
            .collect()
    }

    fn line_starts(&self, axis: usize) -> impl Iterator<Item = usize> + '_ {
        let s = self.stride(axis);
        (0..self.npts).filter(move |&p| (p / s) % self.n == 0)
    }

    /// Apply a per-wavenumber multiplier along one axis.
    fn along_axis(&self, data: &[C64], axis: usize, symbol: &[C64]) -> Vec<C64> {
        let n = self.n;
        let s = self.stride(axis);
        let mut out = vec![C64::new(0.0, 0.0); self.npts];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for start in self.line_starts(axis) {
            for j in 0..n {
                buf[j] = data[start + j * s];
            }
            self.fwd.process(&mut buf);
            for j in 0..n {
                buf[j] *= symbol[j] * scale;
            }
            self.inv.process(&mut buf);
            for j in 0..n {
                out[start + j * s] = buf[j];
            }
        }
        out
    }

    fn d1_symbol(&self) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|j| {
                if 2 * j == n {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(0.0, 2.0 * std::f64::consts::PI * wavenumber(j, n) as f64)
                }
            })
            .collect()
    }

    /// First derivative `d/dx^axis` of a scalar grid function (Nyquist mode dropped).
    pub fn deriv(&self, data: &[C64], axis: usize) -> Vec<C64> {
        self.along_axis(data, axis, &self.d1_symbol())
    }

    /// Entrywise first derivative of a matrix-valued grid field.
    pub fn deriv_mats(&self, data: &[CMat], axis: usize) -> Vec<CMat> {
        let (r, c) = data[0].shape();
        let mut out = vec![CMat::zeros(r, c); self.npts];
        let mut scalar = vec![C64::new(0.0, 0.0); self.npts];
        let sym = self.d1_symbol();
        for i in 0..r {
            for j in 0..c {
                for (p, m) in data.iter().enumerate() {
                    scalar[p] = m[(i, j)];
                }
                let d = self.along_axis(&scalar, axis, &sym);
                for (p, m) in out.iter_mut().enumerate() {
                    m[(i, j)] = d[p];
                }
            }
        }
        out
    }

    /// Full n-dimensional forward transform (unnormalized).
    pub fn fft_nd(&self, data: &mut [C64]) {
        self.transform_nd(data, &self.fwd);
    }

    /// Full n-dimensional inverse transform, normalized by `1/N^n`.
    pub fn ifft_nd(&self, data: &mut [C64]) {
        self.transform_nd(data, &self.inv);
        let scale = 1.0 / self.npts as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn transform_nd(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for axis in 0..self.dim {
            let s = self.stride(axis);
            let starts: Vec<usize> = self.line_starts(axis).collect();
            for start in starts {
                for j in 0..n {
                    buf[j] = data[start + j * s];
                }
                plan.process(&mut buf);
                for j in 0..n {
                    data[start + j * s] = buf[j];
                }
            }
        }
    }

    /// Wavenumber vector of the n-dimensional bin `idx`.
    pub fn mode(&self, idx: usize) -> Vec<i64> {
        self.multi_index(idx).into_iter().map(|j| wavenumber(j, self.n)).collect()
    }

    /// Apply a Fourier multiplier `symbol(mode)` to a scalar grid function.
    pub fn apply_symbol(&self, data: &[C64], symbol: impl Fn(&[i64]) -> C64) -> Vec<C64> {
        let mut buf = data.to_vec();
        self.fft_nd(&mut buf);
        for (idx, z) in buf.iter_mut().enumerate() {
            *z *= symbol(&self.mode(idx));
        }
        self.ifft_nd(&mut buf);
        buf
    }
}
