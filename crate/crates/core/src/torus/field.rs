use num_complex::Complex;
use rayon::prelude::*;

use super::grid::{Point, TorusGrid};
use super::reduce::pairwise_sum;
use crate::error::{GpxError, Result};
use crate::scalar::Scalar;

/// One real sample per node.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField<S = f64> {
    grid: TorusGrid<S>,
    data: Vec<S>,
}

/// One complex sample per node; stored interleaved `(re, im)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField<S = f64> {
    grid: TorusGrid<S>,
    data: Vec<Complex<S>>,
}

/// One tangent vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct VecField<S = f64> {
    grid: TorusGrid<S>,
    data: Vec<[S; 3]>,
}

macro_rules! common_field_impl {
    ($ty:ident, $elem:ty, $zero:expr) => {
        impl<S: Scalar> $ty<S> {
            pub fn zeros(grid: TorusGrid<S>) -> Self {
                $ty { grid, data: vec![$zero; grid.node_count()] }
            }

            pub fn from_vec(grid: TorusGrid<S>, data: Vec<$elem>) -> Result<Self> {
                if data.len() != grid.node_count() {
                    return Err(GpxError::Format(format!(
                        "expected {} samples, got {}",
                        grid.node_count(),
                        data.len()
                    )));
                }
                Ok($ty { grid, data })
            }

            /// Samples `f` at every node.
            pub fn from_fn<F>(grid: TorusGrid<S>, f: F) -> Self
            where
                F: Fn(Point<S>) -> $elem + Sync,
            {
                let data = (0..grid.node_count()).into_par_iter().map(|i| f(grid.node_point(i))).collect();
                $ty { grid, data }
            }

            /// Builds a field node by node from the node index.
            pub fn from_index_fn<F>(grid: TorusGrid<S>, f: F) -> Self
            where
                F: Fn(usize) -> $elem + Sync + Send,
            {
                let data = (0..grid.node_count()).into_par_iter().map(f).collect();
                $ty { grid, data }
            }

            #[inline]
            pub fn grid(&self) -> &TorusGrid<S> {
                &self.grid
            }

            #[inline]
            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            #[inline]
            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            #[inline]
            pub fn len(&self) -> usize {
                self.data.len()
            }

            #[inline]
            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn same_grid(&self, other: &TorusGrid<S>) -> Result<()> {
                if &self.grid == other {
                    Ok(())
                } else {
                    Err(GpxError::GridMismatch)
                }
            }

            /// Shifts every sample by whole lattice steps: `out(x) = self(x - shift*h)`.
            pub fn translate(&self, shift: [isize; 3]) -> Self {
                let g = self.grid;
                let data = (0..g.node_count())
                    .into_par_iter()
                    .map(|idx| {
                        let [i, j, k] = g.ijk(idx);
                        let src = g.index_wrapped(
                            i as isize - shift[0],
                            j as isize - shift[1],
                            k as isize - shift[2],
                        );
                        self.data[src]
                    })
                    .collect();
                $ty { grid: g, data }
            }
        }
    };
}

common_field_impl!(RealField, S, S::zero());
common_field_impl!(ComplexField, Complex<S>, Complex::new(S::zero(), S::zero()));
common_field_impl!(VecField, [S; 3], [S::zero(); 3]);

impl<S: Scalar> RealField<S> {
    pub fn constant(grid: TorusGrid<S>, c: S) -> Self {
        RealField { grid, data: vec![c; grid.node_count()] }
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Grid mean (unweighted average over nodes).
    pub fn mean(&self) -> S {
        pairwise_sum(self.data.len(), |i| self.data[i]) / S::from_usize_lossy(self.data.len())
    }

    /// h-weighted L2 inner product.
    pub fn dot(&self, other: &Self) -> S {
        pairwise_sum(self.data.len(), |i| self.data[i] * other.data[i]) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn map<F: Fn(S) -> S + Sync>(&self, f: F) -> Self {
        RealField { grid: self.grid, data: self.data.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(S, S) -> S + Sync>(&self, other: &Self, f: F) -> Self {
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(&a, &b)| f(a, b)).collect();
        RealField { grid: self.grid, data }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<S: Scalar> ComplexField<S> {
    pub fn constant(grid: TorusGrid<S>, c: Complex<S>) -> Self {
        ComplexField { grid, data: vec![c; grid.node_count()] }
    }

    pub fn real_part(&self) -> RealField<S> {
        RealField { grid: self.grid, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn imag_part(&self) -> RealField<S> {
        RealField { grid: self.grid, data: self.data.iter().map(|z| z.im).collect() }
    }

    pub fn from_parts(re: &RealField<S>, im: &RealField<S>) -> Result<Self> {
        re.same_grid(im.grid())?;
        let data = re.data().iter().zip(im.data()).map(|(&a, &b)| Complex::new(a, b)).collect();
        Ok(ComplexField { grid: re.grid, data })
    }

    pub fn modulus(&self) -> RealField<S> {
        RealField { grid: self.grid, data: self.data.par_iter().map(|z| z.norm()).collect() }
    }

    /// h-weighted real inner product of the R^2-valued fields: `h^3 sum (u1 v1 + u2 v2)`.
    pub fn dot(&self, other: &Self) -> S {
        pairwise_sum(self.data.len(), |i| {
            let a = self.data[i];
            let b = other.data[i];
            a.re * b.re + a.im * b.im
        }) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, s: S) -> Self {
        ComplexField { grid: self.grid, data: self.data.par_iter().map(|z| z * s).collect() }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: S, other: &Self) -> Self {
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(a, b)| a + b * s).collect();
        ComplexField { grid: self.grid, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-S::one(), other)
    }

    /// Multiplies every node by the unit phase `exp(i s tau)`.
    pub fn phase_rotate(&self, tau: &RealField<S>, s: S) -> Self {
        let data = self
            .data
            .par_iter()
            .zip(tau.data().par_iter())
            .map(|(z, &t)| {
                let (sn, cs) = (s * t).sin_cos();
                z * Complex::new(cs, sn)
            })
            .collect();
        ComplexField { grid: self.grid, data }
    }

    pub fn mul_i(&self) -> Self {
        ComplexField { grid: self.grid, data: self.data.par_iter().map(|z| Complex::new(-z.im, z.re)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl<S: Scalar> VecField<S> {
    pub fn from_components(c: [&RealField<S>; 3]) -> Result<Self> {
        c[0].same_grid(c[1].grid())?;
        c[0].same_grid(c[2].grid())?;
        let data = (0..c[0].len()).map(|i| [c[0].data()[i], c[1].data()[i], c[2].data()[i]]).collect();
        Ok(VecField { grid: c[0].grid, data })
    }

    pub fn component(&self, axis: usize) -> RealField<S> {
        RealField { grid: self.grid, data: self.data.iter().map(|v| v[axis]).collect() }
    }

    /// Pointwise Euclidean norm.
    pub fn norms(&self) -> RealField<S> {
        RealField {
            grid: self.grid,
            data: self.data.par_iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect(),
        }
    }

    pub fn max_norm(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |m, v| m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()))
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v[0].abs()).max(v[1].abs()).max(v[2].abs()))
    }

    pub fn scale(&self, s: S) -> Self {
        VecField { grid: self.grid, data: self.data.par_iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect() }
    }

    /// Pointwise dot product.
    pub fn dot_pointwise(&self, other: &Self) -> RealField<S> {
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .collect();
        RealField { grid: self.grid, data }
    }

    /// h-weighted L2 inner product.
    pub fn dot(&self, other: &Self) -> S {
        pairwise_sum(self.data.len(), |i| {
            let a = self.data[i];
            let b = other.data[i];
            a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
        }) * self.grid.cell_volume()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }
}
