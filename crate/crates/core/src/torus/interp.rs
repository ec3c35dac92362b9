//! Off-grid sampling of nodal vector data.

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftNum;

use super::field::VecField;
use super::grid::TorusGrid;
use super::spectral::Spectral;
use crate::scalar::Scalar;

/// Which interpolant to use when a field is evaluated between nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interp {
    Trilinear,
    /// Periodic cubic B-spline through the nodal values (C^2).
    #[default]
    CubicSpline,
}

/// Splits a coordinate into a cell index and the fractional offset in `[0,1)`.
#[inline]
fn locate(x: f64, h: f64) -> (isize, f64) {
    let s = x / h;
    let c = s.floor();
    (c as isize, s - c)
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Trilinear interpolation of vector data; `p` may be any real point.
pub fn trilinear<S: Scalar>(grid: &TorusGrid<S>, data: &[[S; 3]], p: [f64; 3]) -> [f64; 3] {
    let n = grid.counts();
    let h = grid.spacing().map(|v| v.to_f64_lossy());
    let (c, t): (Vec<_>, Vec<_>) = (0..3).map(|a| locate(p[a], h[a])).unzip();
    let mut out = [0.0; 3];
    for dk in 0..2 {
        let wk = if dk == 0 { 1.0 - t[2] } else { t[2] };
        let k = wrap(c[2] + dk as isize, n[2]);
        for dj in 0..2 {
            let wj = if dj == 0 { 1.0 - t[1] } else { t[1] };
            let j = wrap(c[1] + dj as isize, n[1]);
            for di in 0..2 {
                let wi = if di == 0 { 1.0 - t[0] } else { t[0] };
                let i = wrap(c[0] + di as isize, n[0]);
                let w = wi * wj * wk;
                let v = data[grid.index(i, j, k)];
                for a in 0..3 {
                    out[a] += w * v[a].to_f64_lossy();
                }
            }
        }
    }
    out
}

#[inline]
fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Periodic cubic B-spline of a vector field, interpolating the nodal values.
#[derive(Clone, Debug)]
pub struct VecSpline {
    n: [usize; 3],
    h: [f64; 3],
    coef: Vec<[f64; 3]>,
}

impl VecSpline {
    pub fn new<S: Scalar + FftNum>(field: &VecField<S>) -> Self {
        let grid = *field.grid();
        let n = grid.counts();
        let sp = Spectral::new(grid);
        let sym: Vec<Vec<S>> = (0..3)
            .map(|a| {
                (0..n[a])
                    .map(|m| {
                        let c = (S::lit(2.0) * S::PI() * S::from_usize_lossy(m) / S::from_usize_lossy(n[a])).cos();
                        (S::lit(4.0) + S::lit(2.0) * c) / S::lit(6.0)
                    })
                    .collect()
            })
            .collect();
        let mut coef = vec![[0.0; 3]; grid.node_count()];
        for a in 0..3 {
            let mut buf: Vec<Complex<S>> = field.data().iter().map(|v| Complex::new(v[a], S::zero())).collect();
            sp.forward(&mut buf);
            buf.par_iter_mut().enumerate().for_each(|(idx, v)| {
                let [i, j, k] = grid.ijk(idx);
                *v = *v / (sym[0][i] * sym[1][j] * sym[2][k]);
            });
            sp.inverse(&mut buf);
            for (c, z) in coef.iter_mut().zip(&buf) {
                c[a] = z.re.to_f64_lossy();
            }
        }
        VecSpline { n, h: grid.spacing().map(|v| v.to_f64_lossy()), coef }
    }

    pub fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        let n = self.n;
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let (c, t) = locate(p[a], self.h[a]);
            base[a] = c - 1;
            w[a] = bspline_weights(t);
        }
        let mut out = [0.0; 3];
        for dk in 0..4 {
            let k = wrap(base[2] + dk as isize, n[2]);
            for dj in 0..4 {
                let j = wrap(base[1] + dj as isize, n[1]);
                let wjk = w[1][dj] * w[2][dk];
                let row = n[0] * (j + n[1] * k);
                for di in 0..4 {
                    let i = wrap(base[0] + di as isize, n[0]);
                    let c = self.coef[row + i];
                    let ww = w[0][di] * wjk;
                    out[0] += ww * c[0];
                    out[1] += ww * c[1];
                    out[2] += ww * c[2];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn wave(g: TorusGrid) -> VecField {
        VecField::from_fn(g, |p| {
            let [x, y, z] = p.0;
            [(2.0 * PI * x).sin(), (2.0 * PI * (y + z)).cos(), 0.5]
        })
    }

    #[test]
    fn both_interpolants_hit_nodes() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let v = wave(g);
        let s = VecSpline::new(&v);
        for idx in [0, 5, 300, 4000] {
            let p = g.node_point(idx).0;
            let a = trilinear(&g, v.data(), p);
            let b = s.eval(p);
            for c in 0..3 {
                assert!((a[c] - v.data()[idx][c]).abs() < 1e-12);
                assert!((b[c] - v.data()[idx][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_and_accurate() {
        let g = TorusGrid::<f64>::cubic(32, 1.0).unwrap();
        let v = wave(g);
        let s = VecSpline::new(&v);
        let p = [0.123, 0.777, 0.401];
        let q = [p[0] + 1.0, p[1] - 2.0, p[2] + 3.0];
        let a = s.eval(p);
        let b = s.eval(q);
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-12);
        }
        let exact = [(2.0 * PI * p[0]).sin(), (2.0 * PI * (p[1] + p[2])).cos(), 0.5];
        let t = trilinear(&g, v.data(), p);
        let es: f64 = (0..3).map(|c| (a[c] - exact[c]).abs()).fold(0.0, f64::max);
        let et: f64 = (0..3).map(|c| (t[c] - exact[c]).abs()).fold(0.0, f64::max);
        assert!(es < 1e-4, "{es}");
        assert!(et < 2e-2 && es < et);
    }
}
