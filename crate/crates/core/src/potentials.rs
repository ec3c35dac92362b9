//! Radial potentials `W(z) = P(|z|^2)` and sampling-based checks of their
//! structural assumptions.

use num_complex::Complex;
use serde::Serialize;

use crate::scalar::Scalar;

/// `W(z) = sum_k c_k |z|^{2k}` with the growth and coercivity constants it claims.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential<S = f64> {
    coeffs: Vec<S>,
    /// Evaluate in the factored form `(1 - t)^2 / 4`, which keeps the double
    /// zero on the unit circle free of cancellation.
    factored_quartic: bool,
    /// Growth exponent of the Hessian bound `|D^2 W| <= C1 + C2 |z|^{p-2}`.
    pub p: S,
    pub c_sc1: S,
    pub c_sc2: S,
    /// `grad W(z) . z >= alpha_c |z|^2` for `|z| >= r_c`.
    pub alpha_c: S,
    pub r_c: S,
}

/// The quartic `(1 - |z|^2)^2 / 4`.
pub fn quartic_potential<S: Scalar>() -> Potential<S> {
    Potential {
        coeffs: vec![S::lit(0.25), S::lit(-0.5), S::lit(0.25)],
        factored_quartic: true,
        p: S::lit(4.0),
        // Hessian eigenvalues are |z|^2 - 1 and 3|z|^2 - 1.
        c_sc1: S::lit(2.0),
        c_sc2: S::lit(3.0),
        alpha_c: S::one(),
        r_c: S::lit(2.0),
    }
}

impl<S: Scalar> Potential<S> {
    pub fn custom(coeffs: Vec<S>, p: S, c_sc1: S, c_sc2: S, alpha_c: S, r_c: S) -> Self {
        let factored_quartic = coeffs == [S::lit(0.25), S::lit(-0.5), S::lit(0.25)];
        Potential { coeffs, factored_quartic, p, c_sc1, c_sc2, alpha_c, r_c }
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    #[inline]
    fn poly(&self, t: S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * t + c)
    }

    #[inline]
    fn poly_prime(&self, t: S) -> S {
        let mut acc = S::zero();
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + c * S::from_usize_lossy(k);
        }
        acc
    }

    #[inline]
    pub fn value(&self, z: Complex<S>) -> S {
        if self.factored_quartic {
            let s = S::one() - z.norm_sqr();
            return S::lit(0.25) * s * s;
        }
        self.poly(z.norm_sqr())
    }

    /// Gradient of `W` seen as a function on `R^2`.
    #[inline]
    pub fn grad(&self, z: Complex<S>) -> Complex<S> {
        if self.factored_quartic {
            return z * (z.norm_sqr() - S::one());
        }
        z * (S::lit(2.0) * self.poly_prime(z.norm_sqr()))
    }
}

/// Outcome of [`validate_assumptions`]. `flags` is empty when every check passed.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub min_value: f64,
    pub min_value_off_circle: f64,
    pub nondegeneracy_min_ratio: f64,
    pub subcritical_max_ratio: f64,
    pub subcritical_exponent_ok: bool,
    pub coercivity_min_ratio: f64,
    pub sampled_radii: (f64, f64),
    pub ray_max_radius: f64,
    pub flags: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }
}

/// The default sample set: a polar grid on `|z| <= 3` plus rays out to `|z| = 10`.
pub fn standard_samples() -> Vec<Complex<f64>> {
    let mut out = Vec::new();
    let angles = 24;
    for ir in 0..=300 {
        let r = 3.0 * ir as f64 / 300.0;
        for ia in 0..angles {
            out.push(Complex::from_polar(r, std::f64::consts::TAU * ia as f64 / angles as f64));
        }
    }
    for ia in 0..8 {
        let th = std::f64::consts::TAU * (ia as f64 + 0.5) / 8.0;
        for ir in 0..=140 {
            out.push(Complex::from_polar(3.0 + 7.0 * ir as f64 / 140.0, th));
        }
    }
    out
}

fn fd_hessian_norm<S: Scalar>(pot: &Potential<S>, z: Complex<f64>) -> f64 {
    let h = 1e-5 * (1.0 + z.norm());
    let g = |w: Complex<f64>| {
        let v = pot.grad(Complex::new(S::lit(w.re), S::lit(w.im)));
        [v.re.to_f64_lossy(), v.im.to_f64_lossy()]
    };
    let gxp = g(z + Complex::new(h, 0.0));
    let gxm = g(z - Complex::new(h, 0.0));
    let gyp = g(z + Complex::new(0.0, h));
    let gym = g(z - Complex::new(0.0, h));
    let a = (gxp[0] - gxm[0]) / (2.0 * h);
    let b = 0.5 * ((gxp[1] - gxm[1]) + (gyp[0] - gym[0])) / (2.0 * h);
    let d = (gyp[1] - gym[1]) / (2.0 * h);
    // Spectral norm of the symmetric 2x2 matrix.
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean + rad).abs().max((mean - rad).abs())
}

/// Checks nonnegativity, nondegeneracy near the unit circle, the subcritical
/// Hessian bound and coercivity on `samples`.
pub fn validate_assumptions<S: Scalar>(pot: &Potential<S>, samples: &[Complex<f64>], tol: f64) -> ValidationReport {
    assert!(!samples.is_empty(), "sample set must be nonempty");
    let val = |z: Complex<f64>| pot.value(Complex::new(S::lit(z.re), S::lit(z.im))).to_f64_lossy();
    let grad = |z: Complex<f64>| {
        let g = pot.grad(Complex::new(S::lit(z.re), S::lit(z.im)));
        Complex::new(g.re.to_f64_lossy(), g.im.to_f64_lossy())
    };
    let p = pot.p.to_f64_lossy();
    let c1 = pot.c_sc1.to_f64_lossy();
    let c2 = pot.c_sc2.to_f64_lossy();
    let alpha = pot.alpha_c.to_f64_lossy();
    let rc = pot.r_c.to_f64_lossy();

    let mut min_value = f64::INFINITY;
    let mut min_off = f64::INFINITY;
    let mut nondeg = f64::INFINITY;
    let mut subcrit: f64 = 0.0;
    let mut coerc = f64::INFINITY;
    let mut rmin = f64::INFINITY;
    let mut rmax: f64 = 0.0;
    for &z in samples {
        let r = z.norm();
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        let w = val(z);
        min_value = min_value.min(w);
        if (r - 1.0).abs() > 0.05 {
            min_off = min_off.min(w);
        }
        if (r - 1.0).abs() <= 0.1 && (r - 1.0).abs() > 1e-9 {
            nondeg = nondeg.min(w / ((1.0 - r) * (1.0 - r)));
        }
        let bound = c1 + c2 * r.powf(p - 2.0);
        subcrit = subcrit.max(fd_hessian_norm(pot, z) / bound);
        if r >= rc {
            let g = grad(z);
            coerc = coerc.min((g.re * z.re + g.im * z.im) / (r * r));
        }
    }

    let mut flags = Vec::new();
    if min_value < 0.0 {
        flags.push(format!("nonnegativity: W attains {min_value:e} < 0"));
    }
    if !(min_off > 0.0) {
        flags.push(format!("zero set: W vanishes away from the unit circle (min {min_off:e})"));
    }
    if nondeg.is_finite() && nondeg < tol {
        flags.push(format!("nondegeneracy: W/(1-|z|)^2 drops to {nondeg:.4} < {tol}"));
    }
    // The finite-difference Hessian carries O(1e-8) noise.
    if subcrit > 1.0 + 1e-6 {
        flags.push(format!("subcritical: Hessian bound exceeded by ratio {subcrit:.4}"));
    }
    let exponent_ok = p >= 2.0 && p < 6.0;
    if !exponent_ok {
        flags.push(format!("subcritical: exponent p = {p} not in [2, 6)"));
    }
    if coerc.is_finite() && coerc < alpha {
        flags.push(format!("coercivity: grad W . z / |z|^2 = {coerc:.4} < {alpha}"));
    }
    ValidationReport {
        min_value,
        min_value_off_circle: min_off,
        nondegeneracy_min_ratio: nondeg,
        subcritical_max_ratio: subcrit,
        subcritical_exponent_ok: exponent_ok,
        coercivity_min_ratio: coerc,
        sampled_radii: (rmin, rmax),
        ray_max_radius: rmax,
        flags,
    }
}
