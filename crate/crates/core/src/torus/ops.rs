//! Central-difference vector calculus on the periodic grid.
//!
//! Every operator is built from `D_a f(x) = (f(x + h e_a) - f(x - h e_a)) / 2h`.
//! The `D_a` commute and are skew-adjoint for the plain node sum, which gives
//! `div curl = 0`, `curl grad = 0` and summation by parts exactly (up to
//! rounding).

use num_complex::Complex;
use rayon::prelude::*;

use super::field::{ComplexField, RealField, VecField};
use super::grid::{Point, TorusGrid};
use super::reduce::pairwise_sum;
use crate::error::{GpxError, Result};
use crate::scalar::Scalar;

/// Applies `f(center, plus, minus)` with `plus/minus` the values `shift` nodes
/// away along `axis`, writing one output per node.
pub(crate) fn stencil_axis<T, U, F>(grid: &TorusGrid<impl Scalar>, src: &[T], axis: usize, shift: usize, f: F) -> Vec<U>
where
    T: Copy + Send + Sync,
    U: Copy + Send + Sync + Default,
    F: Fn(T, T, T) -> U + Sync,
{
    let [n1, n2, n3] = grid.counts();
    let plane = n1 * n2;
    let mut out = vec![U::default(); src.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, chunk)| {
        for j in 0..n2 {
            let row = j * n1;
            for i in 0..n1 {
                let c = src[k * plane + row + i];
                let (p, m) = match axis {
                    0 => {
                        let ip = (i + shift) % n1;
                        let im = (i + n1 - shift % n1) % n1;
                        (src[k * plane + row + ip], src[k * plane + row + im])
                    }
                    1 => {
                        let jp = (j + shift) % n2;
                        let jm = (j + n2 - shift % n2) % n2;
                        (src[k * plane + jp * n1 + i], src[k * plane + jm * n1 + i])
                    }
                    _ => {
                        let kp = (k + shift) % n3;
                        let km = (k + n3 - shift % n3) % n3;
                        (src[kp * plane + row + i], src[km * plane + row + i])
                    }
                };
                chunk[row + i] = f(c, p, m);
            }
        }
    });
    out
}

fn check_axis(axis: usize) {
    assert!(axis < 3, "axis index must be 0, 1 or 2");
}

/// Central difference along `axis` (0-based).
pub fn diff_central<S: Scalar>(f: &RealField<S>, axis: usize) -> RealField<S> {
    check_axis(axis);
    let g = *f.grid();
    let inv = S::one() / (S::lit(2.0) * g.spacing()[axis]);
    let data = stencil_axis(&g, f.data(), axis, 1, |_, p, m| (p - m) * inv);
    RealField::from_vec(g, data).expect("same grid")
}

/// Central difference of a complex field along `axis`.
pub fn diff_central_complex<S: Scalar>(u: &ComplexField<S>, axis: usize) -> ComplexField<S> {
    check_axis(axis);
    let g = *u.grid();
    let inv = S::one() / (S::lit(2.0) * g.spacing()[axis]);
    let data = stencil_axis(&g, u.data(), axis, 1, |_, p: Complex<S>, m: Complex<S>| (p - m) * inv);
    ComplexField::from_vec(g, data).expect("same grid")
}

pub fn gradient<S: Scalar>(f: &RealField<S>) -> VecField<S> {
    let d: Vec<RealField<S>> = (0..3).map(|a| diff_central(f, a)).collect();
    VecField::from_components([&d[0], &d[1], &d[2]]).expect("same grid")
}

pub fn divergence<S: Scalar>(v: &VecField<S>) -> RealField<S> {
    let g = *v.grid();
    let mut acc = RealField::zeros(g);
    for a in 0..3 {
        let da = diff_central(&v.component(a), a);
        acc = acc.zip_map(&da, |x, y| x + y);
    }
    acc
}

pub fn curl<S: Scalar>(v: &VecField<S>) -> VecField<S> {
    let c: Vec<RealField<S>> = (0..3).map(|a| v.component(a)).collect();
    let d = |comp: usize, axis: usize| diff_central(&c[comp], axis);
    let x = d(2, 1).zip_map(&d(1, 2), |a, b| a - b);
    let y = d(0, 2).zip_map(&d(2, 0), |a, b| a - b);
    let z = d(1, 0).zip_map(&d(0, 1), |a, b| a - b);
    VecField::from_components([&x, &y, &z]).expect("same grid")
}

/// `divergence(gradient(f))`, evaluated directly as the wide stencil
/// `(f(x+2h) - 2 f(x) + f(x-2h)) / 4h^2` per axis.
pub fn laplacian<S: Scalar>(f: &RealField<S>) -> RealField<S> {
    let g = *f.grid();
    let h = g.spacing();
    let mut acc = vec![S::zero(); f.len()];
    for a in 0..3 {
        let inv = S::one() / (S::lit(4.0) * h[a] * h[a]);
        let two = S::lit(2.0);
        let part = stencil_axis(&g, f.data(), a, 2, |c, p, m| (p - two * c + m) * inv);
        acc.par_iter_mut().zip(part.par_iter()).for_each(|(o, v)| *o = *o + *v);
    }
    RealField::from_vec(g, acc).expect("same grid")
}

pub fn laplacian_complex<S: Scalar>(u: &ComplexField<S>) -> ComplexField<S> {
    let g = *u.grid();
    let h = g.spacing();
    let mut acc = vec![Complex::new(S::zero(), S::zero()); u.len()];
    for a in 0..3 {
        let inv = S::one() / (S::lit(4.0) * h[a] * h[a]);
        let two = S::lit(2.0);
        let part = stencil_axis(&g, u.data(), a, 2, |c: Complex<S>, p, m| (p - c * two + m) * inv);
        acc.par_iter_mut().zip(part.par_iter()).for_each(|(o, v)| *o = *o + *v);
    }
    ComplexField::from_vec(g, acc).expect("same grid")
}

/// Second-difference stencil used by the gradient part of the energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `div(grad(.))` with central differences; annihilates the checkerboard modes.
    #[default]
    Central,
    /// Nearest-neighbour differences `(f(x+h) - f(x)) / h`.
    Compact,
}

/// Forward difference of a complex field along `axis`.
pub fn diff_forward_complex<S: Scalar>(u: &ComplexField<S>, axis: usize) -> ComplexField<S> {
    check_axis(axis);
    let g = *u.grid();
    let inv = S::one() / g.spacing()[axis];
    let data = stencil_axis(&g, u.data(), axis, 1, |c: Complex<S>, p: Complex<S>, _| (p - c) * inv);
    ComplexField::from_vec(g, data).expect("same grid")
}

/// Seven-point Laplacian `(f(x+h) - 2 f(x) + f(x-h)) / h^2` per axis.
pub fn laplacian_compact_complex<S: Scalar>(u: &ComplexField<S>) -> ComplexField<S> {
    let g = *u.grid();
    let h = g.spacing();
    let mut acc = vec![Complex::new(S::zero(), S::zero()); u.len()];
    for a in 0..3 {
        let inv = S::one() / (h[a] * h[a]);
        let two = S::lit(2.0);
        let part = stencil_axis(&g, u.data(), a, 1, |c: Complex<S>, p, m| (p - c * two + m) * inv);
        acc.par_iter_mut().zip(part.par_iter()).for_each(|(o, v)| *o = *o + *v);
    }
    ComplexField::from_vec(g, acc).expect("same grid")
}

pub fn laplacian_complex_with<S: Scalar>(u: &ComplexField<S>, stencil: Stencil) -> ComplexField<S> {
    match stencil {
        Stencil::Central => laplacian_complex(u),
        Stencil::Compact => laplacian_compact_complex(u),
    }
}

/// `sum f h1 h2 h3`.
pub fn integrate<S: Scalar>(f: &RealField<S>) -> S {
    let d = f.data();
    pairwise_sum(d.len(), |i| d[i]) * f.grid().cell_volume()
}

/// Integral over the nodes whose minimum-image distance to `center` is at most `radius`.
pub fn ball_integral<S: Scalar>(f: &RealField<S>, center: &Point<S>, radius: S) -> Result<S> {
    let g = f.grid();
    let limit = g.min_length() / S::lit(2.0);
    if !(radius < limit) {
        return Err(GpxError::BallTooLarge { radius: radius.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    let d = f.data();
    let s = pairwise_sum(d.len(), |i| {
        if g.distance(center, &g.node_point(i)) <= radius {
            d[i]
        } else {
            S::zero()
        }
    });
    Ok(s * g.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(g: TorusGrid, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        RealField::from_vec(g, v).unwrap()
    }

    fn random_vec(g: TorusGrid, seed: u64) -> VecField {
        let c: Vec<RealField> = (0..3).map(|a| random_field(g, seed + a)).collect();
        VecField::from_components([&c[0], &c[1], &c[2]]).unwrap()
    }

    fn smooth_field(g: TorusGrid) -> RealField {
        let l = g.lengths();
        RealField::from_fn(g, |p| {
            let [x, y, z] = p.0;
            (2.0 * PI * x / l[0]).sin() * (2.0 * PI * y / l[1]).cos()
                + 0.3 * (4.0 * PI * z / l[2] + 0.4).cos()
                + 0.2 * (2.0 * PI * (x / l[0] + y / l[1])).sin()
        })
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let f = RealField::constant(g, 3.5);
        for a in 0..3 {
            assert_eq!(diff_central(&f, a).max_abs(), 0.0);
        }
    }

    #[test]
    fn sinusoid_derivative_closed_form() {
        let g = TorusGrid::<f64>::new([32, 16, 16], [1.3, 1.0, 1.0]).unwrap();
        let l = 1.3;
        let h = g.spacing()[0];
        let f = RealField::from_fn(g, |p| (2.0 * PI * p.0[0] / l).sin());
        let d = diff_central(&f, 0);
        let factor = (2.0 * PI * h / l).sin() / h;
        for i in 0..g.node_count() {
            let x = g.node_point(i).0[0];
            let want = factor * (2.0 * PI * x / l).cos();
            assert!((d.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_stencil() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let h = g.spacing()[1];
        let k = g.index(3, 0, 7);
        let mut f = RealField::zeros(g);
        f.data_mut()[k] = 1.0;
        let d = diff_central(&f, 1);
        // D f(x) = (f(x+h) - f(x-h)) / 2h: +1/2h where x+h hits k, -1/2h where x-h hits k.
        assert!((d.data()[g.index(3, 15, 7)] - 0.5 / h).abs() < 1e-12);
        assert!((d.data()[g.index(3, 1, 7)] + 0.5 / h).abs() < 1e-12);
        let nonzero = d.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn operator_identities() {
        let g = TorusGrid::<f64>::new([16, 20, 18], [1.0, 1.4, 0.8]).unwrap();
        let f = smooth_field(g);
        assert!(curl(&gradient(&f)).max_abs() <= 1e-12);
        let a = random_vec(g, 11);
        assert!(divergence(&curl(&a)).max_abs() <= 1e-12);
        let rf = random_field(g, 3);
        assert!(curl(&gradient(&rf)).max_abs() <= 1e-12);
    }

    #[test]
    fn curl_of_single_component() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let a = RealField::from_fn(g, |p| (2.0 * PI * p.0[0]).sin() * (2.0 * PI * p.0[1]).cos());
        let z = RealField::zeros(g);
        let v = VecField::from_components([&z, &z, &a]).unwrap();
        let c = curl(&v);
        let d2 = diff_central(&a, 1);
        let d1 = diff_central(&a, 0);
        for i in 0..g.node_count() {
            assert!((c.data()[i][0] - d2.data()[i]).abs() < 1e-14);
            assert!((c.data()[i][1] + d1.data()[i]).abs() < 1e-14);
            assert_eq!(c.data()[i][2], 0.0);
        }
    }

    #[test]
    fn laplacian_is_div_grad() {
        let g = TorusGrid::<f64>::new([16, 18, 20], [1.0, 1.2, 0.9]).unwrap();
        let f = random_field(g, 5);
        let a = laplacian(&f);
        let b = divergence(&gradient(&f));
        let scale = a.max_abs();
        for i in 0..g.node_count() {
            assert!((a.data()[i] - b.data()[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn summation_by_parts() {
        let g = TorusGrid::<f64>::new([16, 18, 20], [1.0, 1.2, 0.9]).unwrap();
        for seed in 0..4 {
            let f = random_field(g, 100 + seed);
            let v = random_vec(g, 200 + seed);
            let lhs = integrate(&f.zip_map(&divergence(&v), |a, b| a * b));
            let rhs = -gradient(&f).dot(&v);
            assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs()).max(1.0), "{lhs} {rhs}");
        }
    }

    #[test]
    fn translation_commutes_with_operators() {
        let g = TorusGrid::<f64>::new([16, 18, 20], [1.0, 1.2, 0.9]).unwrap();
        let f = random_field(g, 9);
        let v = random_vec(g, 19);
        let s = [1, 0, 0];
        assert_eq!(diff_central(&f.translate(s), 2), diff_central(&f, 2).translate(s));
        assert_eq!(curl(&v.translate([0, 1, 0])), curl(&v).translate([0, 1, 0]));
        assert_eq!(laplacian(&f.translate([0, 0, 1])), laplacian(&f).translate([0, 0, 1]));
    }

    #[test]
    fn integrate_and_ball() {
        let g = TorusGrid::<f64>::cubic(32, 1.0).unwrap();
        let one = RealField::constant(g, 1.0);
        assert!((integrate(&one) - 1.0).abs() < 1e-14);
        let c = Point::new(0.5, 0.5, 0.5);
        assert!(ball_integral(&one, &c, 0.5).is_err());

        let r = 0.9 * 0.5;
        let inside = ball_integral(&one, &c, r).unwrap();
        let outside = integrate(&RealField::from_fn(g, |p| if g.distance(&c, &p) <= r { 0.0 } else { 1.0 }));
        assert!((inside + outside - integrate(&one)).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_converges() {
        let r = 0.3;
        let exact = 4.0 / 3.0 * PI * r * r * r;
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = TorusGrid::<f64>::cubic(n, 1.0).unwrap();
            let one = RealField::constant(g, 1.0);
            let v = ball_integral(&one, &Point::new(0.41, 0.52, 0.37), r).unwrap();
            errs.push((v - exact).abs() / exact);
        }
        // O(h) relative error bound with a generous constant.
        for (e, n) in errs.iter().zip([16.0, 32.0, 64.0]) {
            assert!(*e < 3.0 / n, "{e} at {n}");
        }
        assert!(errs[2] < 0.02);
    }
}
