//! The same computations in single and double precision.

use gpvortex::functional::{energy, momentum};
use gpvortex::potentials::quartic_potential;
use gpvortex::torus::{ComplexField, Point};
use gpvortex::velocity::{SigmaParams, VelocityField};
use gpvortex::{Grid32, Grid64};
use num_complex::Complex;

fn ring<S: gpvortex::Scalar>(p: Point<S>) -> Complex<S> {
    let [x, y, z] = p.0.map(|c| c.to_f64_lossy());
    let d = ((x - 1.0).powi(2) + (y - 1.0).powi(2) + (z - 1.0).powi(2)).sqrt();
    let a = (-(d / 0.3).powi(2)).exp();
    Complex::new(S::lit((1.0 - a).max(0.0).sqrt() * (3.0 * y).cos()), S::lit((1.0 - a).max(0.0).sqrt() * (3.0 * y).sin()))
}

#[test]
fn energy_and_momentum_agree_across_precisions() {
    let g64 = Grid64::cubic(16, 2.0).unwrap();
    let g32 = Grid32::cubic(16, 2.0).unwrap();
    let u64_ = ComplexField::from_fn(g64, ring::<f64>);
    let u32_ = ComplexField::from_fn(g32, ring::<f32>);
    let w64 = quartic_potential::<f64>();
    let w32 = quartic_potential::<f32>();
    let e64 = energy(&u64_, 0.1, &w64).unwrap().total;
    let e32 = energy(&u32_, 0.1f32, &w32).unwrap().total as f64;
    assert!((e64 - e32).abs() <= 1e-5 * e64.abs(), "{e64} {e32}");

    let sp = SigmaParams::default();
    let x64 = VelocityField::single_bump(g64, Point::new(1.0, 1.0, 1.0), 0.2, &sp).unwrap();
    let x32 = VelocityField::single_bump(g32, Point::new(1.0f32, 1.0, 1.0), 0.2, &sp).unwrap();
    let m64 = momentum(&u64_, &x64);
    let m32 = momentum(&u32_, &x32) as f64;
    assert!((m64 - m32).abs() <= 1e-4 * m64.abs().max(1e-3), "{m64} {m32}");
}
