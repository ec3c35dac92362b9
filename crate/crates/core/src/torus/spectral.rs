//! FFT-based inversions of the central-difference Laplacian.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftNum, FftPlanner};

use super::field::{ComplexField, RealField};
use super::grid::TorusGrid;
use super::ops::Stencil;
use super::reduce::pairwise_sum;
use crate::error::{GpxError, Result};
use crate::scalar::Scalar;

/// Planned 3D transforms for one grid.
pub struct Spectral<S: Scalar + FftNum = f64> {
    grid: TorusGrid<S>,
    fwd: [Arc<dyn Fft<S>>; 3],
    inv: [Arc<dyn Fft<S>>; 3],
    /// Symbol of `divergence(gradient(.))` per node of the frequency lattice.
    symbol: Vec<S>,
    /// Symbol of the seven-point Laplacian.
    compact: Vec<S>,
    /// Modes annihilated by the central difference in every direction.
    kernel: Vec<bool>,
}

impl<S: Scalar + FftNum> Spectral<S> {
    pub fn new(grid: TorusGrid<S>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.counts();
        let fwd = [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1]), planner.plan_fft_forward(n[2])];
        let inv = [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1]), planner.plan_fft_inverse(n[2])];
        let h = grid.spacing();
        let per_axis: Vec<Vec<S>> = (0..3)
            .map(|a| {
                (0..n[a])
                    .map(|m| {
                        let s = (S::lit(2.0) * S::PI() * S::from_usize_lossy(m) / S::from_usize_lossy(n[a])).sin();
                        -(s * s) / (h[a] * h[a])
                    })
                    .collect()
            })
            .collect();
        let compact_axis: Vec<Vec<S>> = (0..3)
            .map(|a| {
                (0..n[a])
                    .map(|m| {
                        let s = (S::PI() * S::from_usize_lossy(m) / S::from_usize_lossy(n[a])).sin();
                        -S::lit(4.0) * s * s / (h[a] * h[a])
                    })
                    .collect()
            })
            .collect();
        let kern_axis = |a: usize, m: usize| m == 0 || 2 * m == n[a];
        let mut symbol = Vec::with_capacity(grid.node_count());
        let mut kernel = Vec::with_capacity(grid.node_count());
        let mut compact = Vec::with_capacity(grid.node_count());
        for idx in 0..grid.node_count() {
            let [i, j, k] = grid.ijk(idx);
            symbol.push(per_axis[0][i] + per_axis[1][j] + per_axis[2][k]);
            compact.push(compact_axis[0][i] + compact_axis[1][j] + compact_axis[2][k]);
            kernel.push(kern_axis(0, i) && kern_axis(1, j) && kern_axis(2, k));
        }
        Spectral { grid, fwd, inv, symbol, compact, kernel }
    }

    pub fn grid(&self) -> &TorusGrid<S> {
        &self.grid
    }

    /// Symbol of the discrete Laplacian at frequency node `idx`.
    pub fn symbol(&self, idx: usize) -> S {
        self.symbol[idx]
    }

    fn transform(&self, data: &mut [Complex<S>], plans: &[Arc<dyn Fft<S>>; 3]) {
        let [n1, n2, n3] = self.grid.counts();
        let plane = n1 * n2;

        data.par_chunks_mut(n1).for_each(|line| plans[0].process(line));

        data.par_chunks_mut(plane).for_each(|pl| {
            let mut buf = vec![Complex::new(S::zero(), S::zero()); n2];
            for i in 0..n1 {
                for j in 0..n2 {
                    buf[j] = pl[i + n1 * j];
                }
                plans[1].process(&mut buf);
                for j in 0..n2 {
                    pl[i + n1 * j] = buf[j];
                }
            }
        });

        let mut cols = vec![Complex::new(S::zero(), S::zero()); data.len()];
        cols.par_chunks_mut(n3).enumerate().for_each(|(line, col)| {
            for k in 0..n3 {
                col[k] = data[line + plane * k];
            }
            plans[2].process(col);
        });
        data.par_chunks_mut(plane).enumerate().for_each(|(k, pl)| {
            for (line, v) in pl.iter_mut().enumerate() {
                *v = cols[line * n3 + k];
            }
        });
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex<S>]) {
        self.transform(data, &self.fwd);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex<S>]) {
        self.transform(data, &self.inv);
        let inv_n = S::one() / S::from_usize_lossy(data.len());
        data.par_iter_mut().for_each(|v| *v = *v * inv_n);
    }

    /// Solves `laplacian(tau) = rhs` for the mean-zero `tau` orthogonal to the
    /// kernel of the central-difference Laplacian.
    ///
    /// The kernel is spanned by the eight checkerboard modes with every
    /// frequency in `{0, n/2}`. The mean must vanish to `1e-10 ||rhs||`; any
    /// other kernel content above that level is reported as `NullSpaceResidue`.
    pub fn poisson_solve(&self, rhs: &RealField<S>) -> Result<RealField<S>> {
        rhs.same_grid(&self.grid)?;
        let n = rhs.len();
        let norm_rms = (pairwise_sum(n, |i| rhs.data()[i] * rhs.data()[i]) / S::from_usize_lossy(n)).sqrt();
        let mean = rhs.mean();
        let tol = S::lit(1e-10) * norm_rms;
        if mean.abs() > tol {
            return Err(GpxError::NonZeroMean { mean: mean.to_f64_lossy(), norm: norm_rms.to_f64_lossy() });
        }
        let mut buf: Vec<Complex<S>> = rhs.data().iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.forward(&mut buf);
        let nn = S::from_usize_lossy(n);
        let mut residue = S::zero();
        for (idx, v) in buf.iter().enumerate() {
            if self.kernel[idx] && idx != 0 {
                residue = residue.max(v.norm() / nn);
            }
        }
        if residue > tol {
            return Err(GpxError::NullSpaceResidue { residue: residue.to_f64_lossy() });
        }
        let zero = Complex::new(S::zero(), S::zero());
        buf.par_iter_mut().enumerate().for_each(|(idx, v)| {
            *v = if self.kernel[idx] { zero } else { *v / self.symbol[idx] };
        });
        self.inverse(&mut buf);
        RealField::from_vec(self.grid, buf.into_iter().map(|z| z.re).collect())
    }

    /// Applies `(sigma - laplacian)^{-1}` to a complex field, `sigma > 0`.
    pub fn helmholtz_solve(&self, rhs: &ComplexField<S>, sigma: S) -> ComplexField<S> {
        self.helmholtz_solve_with(rhs, sigma, Stencil::Central)
    }

    pub fn helmholtz_solve_with(&self, rhs: &ComplexField<S>, sigma: S, stencil: Stencil) -> ComplexField<S> {
        let sym = match stencil {
            Stencil::Central => &self.symbol,
            Stencil::Compact => &self.compact,
        };
        let mut buf = rhs.data().to_vec();
        self.forward(&mut buf);
        buf.par_iter_mut().enumerate().for_each(|(idx, v)| *v = *v / (sigma - sym[idx]));
        self.inverse(&mut buf);
        ComplexField::from_vec(self.grid, buf).expect("same grid")
    }

    /// Zeroes every Fourier mode with some `|m_a| > frac * n_a / 2`.
    pub fn low_pass(&self, f: &RealField<S>, frac: S) -> RealField<S> {
        let n = self.grid.counts();
        let mut buf: Vec<Complex<S>> = f.data().iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.forward(&mut buf);
        let keep = |m: usize, na: usize| {
            let signed = if 2 * m > na { na - m } else { m };
            S::from_usize_lossy(2 * signed) <= frac * S::from_usize_lossy(na)
        };
        let zero = Complex::new(S::zero(), S::zero());
        for (idx, v) in buf.iter_mut().enumerate() {
            let [i, j, k] = self.grid.ijk(idx);
            if !(keep(i, n[0]) && keep(j, n[1]) && keep(k, n[2])) {
                *v = zero;
            }
        }
        self.inverse(&mut buf);
        RealField::from_vec(self.grid, buf.into_iter().map(|z| z.re).collect()).expect("same grid")
    }
}

/// One-shot Poisson solve that plans its own transforms.
pub fn poisson_solve<S: Scalar + FftNum>(rhs: &RealField<S>) -> Result<RealField<S>> {
    Spectral::new(*rhs.grid()).poisson_solve(rhs)
}
