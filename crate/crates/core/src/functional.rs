//! Energy, momentum, their exact discrete gradients and the GP residual.
//!
//! Momentum and vorticity use the central difference `D_a`. The gradient part
//! of the energy uses either `D_a` or the forward difference (see
//! [`Stencil`]); in both cases the gradients below are exact derivatives of the
//! discrete functionals.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::potentials::Potential;
use crate::scalar::Scalar;
use crate::torus::ops::{diff_central_complex, diff_forward_complex, laplacian_complex_with, Stencil};
use crate::torus::reduce::pairwise_sum;
use crate::torus::{curl, integrate, ComplexField, RealField, VecField};
use crate::velocity::VelocityField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBreakdown<S = f64> {
    pub total: S,
    pub gradient_part: S,
    pub potential_part: S,
    pub epsilon: S,
}

fn check_eps<S: Scalar>(eps: S) -> Result<()> {
    if eps > S::zero() && eps < S::one() {
        Ok(())
    } else {
        Err(GpxError::EpsOutOfRange(eps.to_f64_lossy()))
    }
}

/// `1 / (pi |log eps|)`.
pub fn prefactor<S: Scalar>(eps: S) -> S {
    S::one() / (S::PI() * eps.ln().abs())
}

fn derivatives<S: Scalar>(u: &ComplexField<S>) -> [ComplexField<S>; 3] {
    [diff_central_complex(u, 0), diff_central_complex(u, 1), diff_central_complex(u, 2)]
}

/// `j(u) = u1 grad u2 - u2 grad u1`.
pub fn prejacobian<S: Scalar>(u: &ComplexField<S>) -> VecField<S> {
    let d = derivatives(u);
    let ud = u.data();
    VecField::from_index_fn(*u.grid(), |i| {
        let z = ud[i];
        [0, 1, 2].map(|a| {
            let w = d[a].data()[i];
            z.re * w.im - z.im * w.re
        })
    })
}

/// `curl j(u) / 2`, the vorticity as a vector field.
pub fn jacobian_vector<S: Scalar>(u: &ComplexField<S>) -> VecField<S> {
    curl(&prejacobian(u)).scale(S::lit(0.5))
}

/// Nodewise integrand of the energy, prefactor included.
pub fn energy_density<S: Scalar>(u: &ComplexField<S>, eps: S, pot: &Potential<S>) -> Result<RealField<S>> {
    energy_density_with(u, eps, pot, Stencil::Central)
}

pub fn energy_density_with<S: Scalar>(
    u: &ComplexField<S>,
    eps: S,
    pot: &Potential<S>,
    stencil: Stencil,
) -> Result<RealField<S>> {
    let (g, w) = density_parts(u, eps, pot, stencil)?;
    Ok(g.zip_map(&w, |a, b| a + b))
}

fn density_parts<S: Scalar>(
    u: &ComplexField<S>,
    eps: S,
    pot: &Potential<S>,
    stencil: Stencil,
) -> Result<(RealField<S>, RealField<S>)> {
    check_eps(eps)?;
    let pre = prefactor(eps);
    let d = match stencil {
        Stencil::Central => derivatives(u),
        Stencil::Compact => [0, 1, 2].map(|a| diff_forward_complex(u, a)),
    };
    let half = S::lit(0.5);
    let grad = RealField::from_index_fn(*u.grid(), |i| {
        pre * half * (d[0].data()[i].norm_sqr() + d[1].data()[i].norm_sqr() + d[2].data()[i].norm_sqr())
    });
    let inv_e2 = S::one() / (eps * eps);
    let ud = u.data();
    let pot_part = RealField::from_index_fn(*u.grid(), |i| pre * pot.value(ud[i]) * inv_e2);
    Ok((grad, pot_part))
}

pub fn energy<S: Scalar>(u: &ComplexField<S>, eps: S, pot: &Potential<S>) -> Result<EnergyBreakdown<S>> {
    energy_with(u, eps, pot, Stencil::Central)
}

pub fn energy_with<S: Scalar>(
    u: &ComplexField<S>,
    eps: S,
    pot: &Potential<S>,
    stencil: Stencil,
) -> Result<EnergyBreakdown<S>> {
    let (g, w) = density_parts(u, eps, pot, stencil)?;
    let gradient_part = integrate(&g);
    let potential_part = integrate(&w);
    Ok(EnergyBreakdown { total: gradient_part + potential_part, gradient_part, potential_part, epsilon: eps })
}

/// `(1/2pi) int j(u) . X`.
pub fn momentum<S: Scalar>(u: &ComplexField<S>, x: &VelocityField<S>) -> S {
    let j = prejacobian(u);
    j.dot(x.x()) / (S::lit(2.0) * S::PI())
}

/// `(1/pi) int J(u) . A`; needs the field's vector potential.
pub fn momentum_via_jacobian<S: Scalar>(u: &ComplexField<S>, x: &VelocityField<S>) -> Result<S> {
    let a = x
        .a()
        .ok_or_else(|| GpxError::InvalidField("field has no periodic vector potential".into()))?;
    Ok(jacobian_vector(u).dot(a) / S::PI())
}

/// `(1 / (pi |log eps|)) (-laplacian u + grad W(u) / eps^2)`.
pub fn grad_energy<S: Scalar>(u: &ComplexField<S>, eps: S, pot: &Potential<S>) -> Result<ComplexField<S>> {
    grad_energy_with(u, eps, pot, Stencil::Central)
}

pub fn grad_energy_with<S: Scalar>(
    u: &ComplexField<S>,
    eps: S,
    pot: &Potential<S>,
    stencil: Stencil,
) -> Result<ComplexField<S>> {
    check_eps(eps)?;
    let pre = prefactor(eps);
    let lap = laplacian_complex_with(u, stencil);
    let inv_e2 = S::one() / (eps * eps);
    let ud = u.data();
    Ok(ComplexField::from_index_fn(*u.grid(), |i| {
        (pot.grad(ud[i]) * inv_e2 - lap.data()[i]) * pre
    }))
}

/// `(X . D u + D . (X u)) / 2`, the skew-symmetric transport term.
pub fn advection<S: Scalar>(u: &ComplexField<S>, x: &VecField<S>) -> ComplexField<S> {
    let g = *u.grid();
    let d = derivatives(u);
    let xd = x.data();
    let ud = u.data();
    let mut out = ComplexField::from_index_fn(g, |i| {
        let v = xd[i];
        d[0].data()[i] * v[0] + d[1].data()[i] * v[1] + d[2].data()[i] * v[2]
    });
    for a in 0..3 {
        let xu = ComplexField::from_index_fn(g, |i| ud[i] * xd[i][a]);
        let dxu = diff_central_complex(&xu, a);
        out.data_mut().par_iter_mut().zip(dxu.data().par_iter()).for_each(|(o, v)| *o = *o + *v);
    }
    let half = S::lit(0.5);
    out.data_mut().par_iter_mut().for_each(|o| *o = *o * half);
    out
}

/// Exact gradient of [`momentum`]: `-(i / pi) advection(u)`.
pub fn grad_momentum<S: Scalar>(u: &ComplexField<S>, x: &VelocityField<S>) -> ComplexField<S> {
    let adv = advection(u, x.x());
    let inv_pi = S::one() / S::PI();
    ComplexField::from_index_fn(*u.grid(), |i| {
        let z = adv.data()[i];
        Complex::new(z.im * inv_pi, -z.re * inv_pi)
    })
}

/// Gross-Pitaevskii residual at one multiplier, with the best multiplier.
#[derive(Clone, Debug)]
pub struct GpResidual<S = f64> {
    pub magnitude: RealField<S>,
    pub l2_norm: S,
    pub best_lambda: S,
    /// `||R(best_lambda)|| / ||laplacian u||`.
    pub relative_at_best: S,
}

/// `R(lambda) = laplacian u - grad W(u)/eps^2 - lambda |log eps| i advection(u)`.
pub fn gp_residual<S: Scalar>(
    u: &ComplexField<S>,
    lambda: S,
    eps: S,
    x: &VelocityField<S>,
    pot: &Potential<S>,
) -> Result<GpResidual<S>> {
    gp_residual_with(u, lambda, eps, x, pot, Stencil::Central)
}

pub fn gp_residual_with<S: Scalar>(
    u: &ComplexField<S>,
    lambda: S,
    eps: S,
    x: &VelocityField<S>,
    pot: &Potential<S>,
    stencil: Stencil,
) -> Result<GpResidual<S>> {
    check_eps(eps)?;
    let lap = laplacian_complex_with(u, stencil);
    let inv_e2 = S::one() / (eps * eps);
    let ud = u.data();
    let r0 = ComplexField::from_index_fn(*u.grid(), |i| lap.data()[i] - pot.grad(ud[i]) * inv_e2);
    let le = eps.ln().abs();
    let adv = advection(u, x.x());
    let b = ComplexField::from_index_fn(*u.grid(), |i| {
        let z = adv.data()[i];
        Complex::new(-z.im, z.re) * le
    });
    let bb = b.dot(&b);
    let best = if bb > S::zero() { r0.dot(&b) / bb } else { S::zero() };
    let at = r0.axpy(-lambda, &b);
    let at_best = r0.axpy(-best, &b);
    let lap_norm = lap.norm();
    let rel = if lap_norm > S::zero() { at_best.norm() / lap_norm } else { at_best.norm() };
    Ok(GpResidual { magnitude: at.modulus(), l2_norm: at.norm(), best_lambda: best, relative_at_best: rel })
}

/// Sum of `|u|^2 g(grad tau, X)` over the grid, the first-order change of
/// the momentum under `u -> exp(i s tau) u`.
pub fn phase_pairing<S: Scalar>(u: &ComplexField<S>, grad_tau: &VecField<S>, x: &VecField<S>) -> S {
    let ud = u.data();
    let gd = grad_tau.data();
    let xd = x.data();
    pairwise_sum(ud.len(), |i| {
        let g = gd[i];
        let v = xd[i];
        ud[i].norm_sqr() * (g[0] * v[0] + g[1] * v[1] + g[2] * v[2])
    }) * u.grid().cell_volume()
        / (S::lit(2.0) * S::PI())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::quartic_potential;
    use crate::torus::{Point, TorusGrid};
    use crate::velocity::SigmaParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_u(g: TorusGrid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_vec(
            g,
            (0..g.node_count()).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
        )
        .unwrap()
    }

    fn smooth_u(g: TorusGrid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ComplexField::from_fn(g, |p| {
            let [x, y, z] = p.0.map(|v| 2.0 * PI * v);
            Complex::new(
                0.8 + c[0] * x.sin() * y.cos() + c[1] * (z + c[2]).cos(),
                c[3] * (x + y).sin() + c[4] * (2.0 * z).cos() + c[5] * (y - z + c[6]).sin(),
            )
        })
    }

    fn bumps(g: TorusGrid) -> VelocityField {
        let l = g.lengths()[0];
        VelocityField::two_bumps(
            g,
            Point::new(0.25 * l, 0.5 * l, 0.5 * l),
            Point::new(0.75 * l, 0.5 * l, 0.5 * l),
            0.1 * l,
            &SigmaParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn constants_and_plane_wave() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let one = ComplexField::constant(g, Complex::new(1.0, 0.0));
        assert_eq!(prejacobian(&one).max_abs(), 0.0);
        assert_eq!(jacobian_vector(&one).max_abs(), 0.0);
        let w = quartic_potential();
        assert_eq!(energy(&one, 0.1, &w).unwrap().total, 0.0);
        assert_eq!(energy_density(&one, 0.1, &w).unwrap().max_abs(), 0.0);
        assert_eq!(grad_energy(&one, 0.1, &w).unwrap().max_abs(), 0.0);

        let real = ComplexField::from_fn(g, |p| Complex::new((2.0 * PI * p.0[1]).sin(), 0.0));
        assert_eq!(prejacobian(&real).max_abs(), 0.0);

        let h = g.spacing()[0];
        let pw = ComplexField::from_fn(g, |p| Complex::from_polar(1.0, 2.0 * PI * p.0[0]));
        let j = prejacobian(&pw);
        let want = (2.0 * PI * h).sin() / h;
        for v in j.data() {
            assert!((v[0] - want).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12);
        }
        assert!(jacobian_vector(&pw).max_abs() < 1e-10);

        let e = energy(&pw, 0.1, &w).unwrap();
        let pre = 1.0 / (PI * 10f64.ln());
        assert!((e.gradient_part - pre * 0.5 * want * want).abs() < 1e-12);
        assert!(e.potential_part.abs() < 1e-25);
    }

    #[test]
    fn zero_field_potential_energy() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let zero = ComplexField::zeros(g);
        let e = energy(&zero, 0.1, &quartic_potential()).unwrap();
        let want = 25.0 / (PI * 10f64.ln());
        assert!((e.potential_part - want).abs() < 1e-12);
        assert!((want - 3.4560).abs() < 1e-4);
        assert_eq!(e.gradient_part, 0.0);
        assert!(energy(&zero, 1.0, &quartic_potential()).is_err());
        assert!(energy(&zero, 0.0, &quartic_potential()).is_err());
    }

    #[test]
    fn density_integrates_to_energy() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let u = random_u(g, 2);
        let w = quartic_potential();
        let e = energy(&u, 0.05, &w).unwrap();
        let d = integrate(&energy_density(&u, 0.05, &w).unwrap());
        assert!((d - e.total).abs() <= 1e-12 * e.total);
    }

    #[test]
    fn grad_energy_finite_difference() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let w = quartic_potential();
        let u = random_u(g, 11);
        let v = random_u(g, 12);
        let t = 1e-6;
        let ep = energy(&u.axpy(t, &v), 0.1, &w).unwrap().total;
        let em = energy(&u.axpy(-t, &v), 0.1, &w).unwrap().total;
        let fd = (ep - em) / (2.0 * t);
        let an = grad_energy(&u, 0.1, &w).unwrap().dot(&v);
        assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} {an}");
    }

    #[test]
    fn grad_momentum_finite_difference_and_euler() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let x = bumps(g);
        let u = random_u(g, 21);
        let v = random_u(g, 22);
        let t = 1e-3;
        let fd = (momentum(&u.axpy(t, &v), &x) - momentum(&u.axpy(-t, &v), &x)) / (2.0 * t);
        let gm = grad_momentum(&u, &x);
        let an = gm.dot(&v);
        assert!((fd - an).abs() <= 1e-8 * an.abs().max(1e-3), "{fd} {an}");
        let m = momentum(&u, &x);
        assert!((gm.dot(&u) - 2.0 * m).abs() <= 1e-10 * m.abs().max(1e-6));
        assert_eq!(grad_momentum(&ComplexField::zeros(g), &x).max_abs(), 0.0);
    }

    #[test]
    fn gradient_part_is_linear() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let u = random_u(g, 3);
        let zero_pot = Potential::custom(vec![0.0], 4.0, 1.0, 1.0, 0.0, 2.0);
        let a = grad_energy(&u, 0.1, &zero_pot).unwrap();
        let b = grad_energy(&u.scale(2.0), 0.1, &zero_pot).unwrap();
        assert!(b.sub(&a.scale(2.0)).max_abs() <= 1e-12 * b.max_abs());
    }

    #[test]
    fn discrete_stokes() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let x = bumps(g);
        for seed in 0..5 {
            let u = smooth_u(g, seed);
            let a = momentum(&u, &x);
            let b = momentum_via_jacobian(&u, &x).unwrap();
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} {b}");
        }
        let one = ComplexField::constant(g, Complex::new(1.0, 0.0));
        assert_eq!(momentum(&one, &x), 0.0);
        assert_eq!(momentum_via_jacobian(&one, &x).unwrap(), 0.0);
    }

    #[test]
    fn gauge_invariance() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let x = bumps(g);
        let w = quartic_potential();
        let u = smooth_u(g, 7);
        let rot = ComplexField::from_index_fn(g, |i| u.data()[i] * Complex::from_polar(1.0, 0.7));
        let (e0, e1) = (energy(&u, 0.1, &w).unwrap().total, energy(&rot, 0.1, &w).unwrap().total);
        assert!((e0 - e1).abs() <= 1e-13 * e0);
        let (m0, m1) = (momentum(&u, &x), momentum(&rot, &x));
        let scale = prejacobian(&u).norms().dot(&x.x().norms());
        assert!((m0 - m1).abs() <= 1e-13 * scale, "{m0} {m1}");
        let c = ComplexField::constant(g, Complex::from_polar(1.0, 0.3));
        assert_eq!(momentum(&c, &x), 0.0);
    }

    #[test]
    fn jacobian_is_divergence_free() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let u = random_u(g, 5);
        let j = jacobian_vector(&u);
        assert!(crate::torus::divergence(&j).max_abs() <= 1e-12 * (1.0 + j.max_abs()));
    }

    #[test]
    fn residual_zero_and_best_lambda_scan() {
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let x = bumps(g);
        let w = quartic_potential();
        let one = ComplexField::constant(g, Complex::new(1.0, 0.0));
        let r = gp_residual(&one, 0.0, 0.1, &x, &w).unwrap();
        assert_eq!(r.l2_norm, 0.0);

        let u = smooth_u(g, 9);
        let r = gp_residual(&u, 0.0, 0.1, &x, &w).unwrap();
        let best = r.best_lambda;
        let span = 4.0 * best.abs().max(1.0);
        let step = 2.0 * span / 40.0;
        let mut scan_best = (f64::INFINITY, 0.0);
        for k in 0..41 {
            let lam = best - span + step * k as f64;
            let n = gp_residual(&u, lam, 0.1, &x, &w).unwrap().l2_norm;
            if n < scan_best.0 {
                scan_best = (n, lam);
            }
        }
        assert!((scan_best.1 - best).abs() <= step / 2.0 + 1e-12);
    }

    #[test]
    fn residual_vanishes_at_projected_stationarity() {
        // R(lambda) = -(grad E - lambda grad Phi) / prefactor up to sign
        // conventions, so best_lambda equals the projection multiplier.
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let x = bumps(g);
        let w = quartic_potential();
        let u = smooth_u(g, 4);
        let ge = grad_energy(&u, 0.1, &w).unwrap();
        let gm = grad_momentum(&u, &x);
        let lt = ge.dot(&gm) / gm.dot(&gm);
        let r = gp_residual(&u, lt, 0.1, &x, &w).unwrap();
        assert!((r.best_lambda - lt).abs() <= 1e-10 * lt.abs().max(1.0));
        let proj = ge.axpy(-lt, &gm);
        let pre = prefactor(0.1);
        assert!((r.l2_norm * pre - proj.norm()).abs() <= 1e-10 * proj.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn energy_positive_off_circle(seed in 0u64..1000, node in 0usize..4096, r in 0.0f64..0.99) {
            let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
            let mut u = ComplexField::constant(g, Complex::from_polar(1.0, seed as f64));
            u.data_mut()[node] = Complex::from_polar(r, 0.3);
            prop_assert!(energy(&u, 0.2, &quartic_potential()).unwrap().total > 0.0);
        }

        #[test]
        fn stokes_on_random_fields(seed in 0u64..1000) {
            let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
            let x = bumps(g);
            let u = random_u(g, seed);
            let a = momentum(&u, &x);
            let b = momentum_via_jacobian(&u, &x).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}
