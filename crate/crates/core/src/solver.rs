//! Energy minimization on the fixed-momentum set by projected gradient
//! descent with exact phase restoration.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::functional::{energy_with, gp_residual_with, grad_energy_with, grad_momentum, momentum, phase_pairing, prefactor};
use crate::photography::phase_root;
use crate::potentials::Potential;
use crate::torus::{gradient, ComplexField, RealField, Spectral, Stencil};
use crate::velocity::VelocityField;

/// Backtracking line search parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Armijo {
    pub c1: f64,
    pub backtrack: f64,
    pub step0: f64,
}

impl Default for Armijo {
    fn default() -> Self {
        Armijo { c1: 1e-4, backtrack: 0.5, step0: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub eps: f64,
    pub phi: f64,
    pub max_iters: usize,
    /// Relative projected-gradient tolerance.
    pub tol_res: f64,
    pub armijo: Armijo,
    pub restore_every: usize,
    /// Precondition the descent direction with `(1/eps^2 - laplacian)^{-1}`.
    pub precondition: bool,
    /// Drop the momentum constraint entirely.
    pub constrained: bool,
    /// Keep every `history_stride`-th energy in the report.
    pub history_stride: usize,
    /// Curvature pairs kept for the quasi-Newton direction; 0 gives plain
    /// projected gradient steps.
    pub memory: usize,
    /// Second differences in the gradient part of the energy.
    pub stencil: Stencil,
}

impl SolverConfig {
    pub fn new(eps: f64, phi: f64) -> Result<Self> {
        let cfg = SolverConfig {
            eps,
            phi,
            max_iters: 5000,
            tol_res: 1e-5,
            armijo: Armijo::default(),
            restore_every: 1,
            precondition: true,
            constrained: true,
            history_stride: 10,
            memory: 8,
            stencil: Stencil::Compact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Plain energy descent, no momentum constraint.
    pub fn unconstrained(eps: f64) -> Result<Self> {
        let mut cfg = SolverConfig::new(eps, 1.0)?;
        cfg.phi = 0.0;
        cfg.constrained = false;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(GpxError::Validation { key: key.into(), msg });
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps", format!("{} outside (0, 1)", self.eps));
        }
        if self.constrained && !(self.phi > 0.0) {
            return bad("phi", format!("{} must be positive", self.phi));
        }
        if !(self.tol_res > 0.0) {
            return bad("tol_res", format!("{} must be positive", self.tol_res));
        }
        let a = self.armijo;
        if !(a.c1 > 0.0 && a.c1 < 1.0 && a.backtrack > 0.0 && a.backtrack < 1.0 && a.step0 > 0.0) {
            return bad("armijo", format!("{a:?}"));
        }
        if self.restore_every == 0 || self.history_stride == 0 {
            return bad("restore_every", "counts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub final_energy: f64,
    pub lambda_tilde: f64,
    pub best_lambda: f64,
    /// GP residual at `best_lambda` over `||laplacian u||`.
    pub residual_rel: f64,
    /// `||grad E - lambda_tilde grad Phi|| / ||grad E||`.
    pub projected_gradient_rel: f64,
    pub constraint_drift_max: f64,
    pub final_momentum: f64,
    pub converged: bool,
}

/// `lambda = <a, b> / <b, b>` and `a - lambda b`.
fn project_out(a: &ComplexField, b: &ComplexField) -> Result<(ComplexField, f64)> {
    let bb = b.dot(b);
    if !(bb.sqrt() > 1e-14) {
        return Err(GpxError::DegenerateConstraint(bb.sqrt()));
    }
    let lambda = a.dot(b) / bb;
    Ok((a.axpy(-lambda, b), lambda))
}

/// Steepest descent direction tangent to the momentum constraint.
pub fn project_direction(
    u: &ComplexField,
    eps: f64,
    x: &VelocityField,
    pot: &Potential,
    stencil: Stencil,
) -> Result<(ComplexField, f64)> {
    let ge = grad_energy_with(u, eps, pot, stencil)?;
    let gp = grad_momentum(u, x);
    let (r, lambda) = project_out(&ge, &gp)?;
    Ok((r.scale(-1.0), lambda))
}

/// `e^{i s tau0} u` with `s` chosen so the momentum is exactly `phi`.
/// Returns the new field and `s`.
pub fn restore_constraint(u: &ComplexField, tau0: &RealField, phi: f64, x: &VelocityField) -> Result<(ComplexField, f64)> {
    let m = momentum(u, x);
    if m == phi {
        return Ok((u.clone(), 0.0));
    }
    let pairing = phase_pairing(u, &gradient(tau0), x.x());
    // Exact discrete slope d/ds momentum(e^{i s tau0} u) at s = 0.
    let dir = ComplexField::from_index_fn(*u.grid(), |i| Complex::new(0.0, tau0.data()[i]) * u.data()[i]);
    let slope = grad_momentum(u, x).dot(&dir);
    if pairing.abs() < 1e-12 && slope.abs() < 1e-12 {
        return Err(GpxError::DegeneratePairing(pairing));
    }
    let s0 = if slope.abs() >= 1e-12 { (phi - m) / slope } else { (phi - m) / pairing };
    let tol = 1e-13 * phi.abs().max(1e-3);
    let (v, s, _) = phase_root(u, tau0, phi, s0, x, tol).map_err(|_| GpxError::DegeneratePairing(pairing))?;
    Ok((v, s))
}

/// Phase direction of steepest momentum change: `Im(conj(u) grad Phi(u))`.
fn restoring_phase(u: &ComplexField, grad_phi: &ComplexField) -> RealField {
    RealField::from_index_fn(*u.grid(), |i| (u.data()[i].conj() * grad_phi.data()[i]).im)
}

struct Precond {
    spectral: Spectral,
    sigma: f64,
    scale: f64,
    stencil: Stencil,
}

impl Precond {
    fn apply(&self, v: &ComplexField) -> ComplexField {
        self.spectral.helmholtz_solve_with(v, self.sigma, self.stencil).scale(self.scale)
    }
}

/// Minimizes the energy on `{momentum = phi}` starting from `u0`.
pub fn minimize(u0: &ComplexField, cfg: &SolverConfig, x: &VelocityField, pot: &Potential) -> Result<(ComplexField, SolverReport)> {
    cfg.validate()?;
    let grid = *u0.grid();
    u0.same_grid(x.grid())?;
    let eps = cfg.eps;
    let pre = if cfg.precondition {
        Some(Precond { spectral: Spectral::new(grid), sigma: 1.0 / (eps * eps), scale: 1.0 / prefactor(eps), stencil: cfg.stencil })
    } else {
        None
    };

    let mut u = u0.clone();
    if cfg.constrained {
        let m0 = momentum(&u, x);
        if (m0 - cfg.phi).abs() > 1e-6 {
            return Err(GpxError::ConstraintNotMet { have: m0, want: cfg.phi });
        }
        if m0 != cfg.phi {
            let gp = grad_momentum(&u, x);
            u = restore_constraint(&u, &restoring_phase(&u, &gp), cfg.phi, x)?.0;
        }
    }
    let mut e = energy_with(&u, eps, pot, cfg.stencil)?.total;
    let mut history = vec![e];
    let mut drift_max: f64 = if cfg.constrained { (momentum(&u, x) - cfg.phi).abs() } else { 0.0 };
    let mut iters = 0;
    let mut converged = false;
    let mut lambda_tilde;
    let mut proj_rel;
    let mut pairs: Vec<(ComplexField, ComplexField, f64)> = Vec::new();
    let mut last: Option<(ComplexField, ComplexField)> = None;

    loop {
        let ge = grad_energy_with(&u, eps, pot, cfg.stencil)?;
        let gp = if cfg.constrained { Some(grad_momentum(&u, x)) } else { None };
        let (resid, lam) = match &gp {
            Some(gp) => project_out(&ge, gp)?,
            None => (ge.clone(), 0.0),
        };
        lambda_tilde = lam;
        let gnorm = ge.norm();
        proj_rel = if gnorm > 0.0 { resid.norm() / gnorm } else { 0.0 };
        if gnorm == 0.0 || proj_rel <= cfg.tol_res {
            converged = true;
            break;
        }
        if iters >= cfg.max_iters {
            break;
        }
        // Tangent direction: preconditioned L-BFGS on the projected gradient.
        let tangent = |v: ComplexField| -> ComplexField {
            match (&pre, &gp) {
                (Some(p), Some(gp)) => {
                    let pc = p.apply(gp);
                    let mu = v.dot(gp) / pc.dot(gp);
                    v.axpy(-mu, &pc)
                }
                (None, Some(gp)) => project_out(&v, gp).map(|(r, _)| r).unwrap_or(v),
                (_, None) => v,
            }
        };
        let h0 = |v: &ComplexField| match &pre {
            Some(p) => p.apply(v),
            None => v.clone(),
        };
        if let Some((prev_u, prev_r)) = &last {
            let sk = u.sub(prev_u);
            let yk = resid.sub(prev_r);
            let sy = sk.dot(&yk);
            if sy > 1e-12 * sk.norm() * yk.norm() {
                pairs.push((sk, yk, 1.0 / sy));
                if pairs.len() > cfg.memory || cfg.memory == 0 {
                    pairs.remove(0);
                }
            }
        }
        let mut q = resid.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (sk, yk, rho) in pairs.iter().rev() {
            let a = rho * sk.dot(&q);
            q = q.axpy(-a, yk);
            alphas.push(a);
        }
        let mut z = h0(&q);
        for ((sk, yk, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * yk.dot(&z);
            z = z.axpy(a - b, sk);
        }
        let mut d = tangent(z).scale(-1.0);
        if !(ge.dot(&d) < 0.0) {
            pairs.clear();
            d = tangent(h0(&resid)).scale(-1.0);
        }
        last = Some((u.clone(), resid.clone()));
        let slope = ge.dot(&d);
        if !(slope < 0.0) {
            break;
        }
        let tau = gp.as_ref().map(|gp| restoring_phase(&u, gp));
        let restore_now = cfg.constrained && (iters + 1) % cfg.restore_every == 0;
        let mut t = cfg.armijo.step0;
        let mut accepted = None;
        while t >= 1e-14 {
            let mut trial = u.axpy(t, &d);
            if restore_now {
                match restore_constraint(&trial, tau.as_ref().expect("constrained"), cfg.phi, x) {
                    Ok((v, _)) => trial = v,
                    Err(_) => {
                        t *= cfg.armijo.backtrack;
                        continue;
                    }
                }
            }
            let et = energy_with(&trial, eps, pot, cfg.stencil)?.total;
            if et <= e + cfg.armijo.c1 * t * slope {
                accepted = Some((trial, et));
                break;
            }
            t *= cfg.armijo.backtrack;
        }
        let Some((next, en)) = accepted else {
            return Err(GpxError::LineSearchStalled(t));
        };
        u = next;
        e = en;
        iters += 1;
        if cfg.constrained {
            drift_max = drift_max.max((momentum(&u, x) - cfg.phi).abs());
        }
        if iters % cfg.history_stride == 0 {
            history.push(e);
        }
    }
    if history.len() == 1 || iters % cfg.history_stride != 0 {
        history.push(e);
    }
    let res = gp_residual_with(&u, lambda_tilde, eps, x, pot, cfg.stencil)?;
    let report = SolverReport {
        iterations: iters,
        energy_history: history,
        final_energy: e,
        lambda_tilde,
        best_lambda: res.best_lambda,
        residual_rel: res.relative_at_best,
        projected_gradient_rel: proj_rel,
        constraint_drift_max: drift_max,
        final_momentum: momentum(&u, x),
        converged,
    };
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::quartic_potential;
    use crate::torus::{Point, TorusGrid};
    use crate::velocity::SigmaParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bumps(n: usize) -> VelocityField {
        let g = TorusGrid::<f64>::cubic(n, 1.0).unwrap();
        VelocityField::two_bumps(g, Point::new(0.25, 0.5, 0.5), Point::new(0.75, 0.5, 0.5), 0.08, &SigmaParams::default())
            .unwrap()
    }

    fn random_field(g: TorusGrid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Complex<f64>> = (0..g.node_count())
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::from_vec(g, v).unwrap()
    }

    #[test]
    fn direction_is_tangent() {
        let x = bumps(16);
        let pot = quartic_potential();
        for seed in 0..3 {
            let u = random_field(*x.grid(), seed);
            let (d, _) = project_direction(&u, 0.1, &x, &pot, Stencil::Central).unwrap();
            let gp = grad_momentum(&u, &x);
            let c = d.dot(&gp) / (d.norm() * gp.norm());
            assert!(c.abs() <= 1e-12, "{c}");
        }
    }

    #[test]
    fn orthogonal_gradients_give_zero_multiplier() {
        // A unimodular constant has grad E = 0 and grad Phi = 0.
        let x = bumps(16);
        let u = ComplexField::constant(*x.grid(), Complex::new(1.0, 0.0));
        assert!(matches!(
            project_direction(&u, 0.1, &x, &quartic_potential(), Stencil::Central),
            Err(GpxError::DegenerateConstraint(_))
        ));
        // grad E along i u (pure phase) is orthogonal to everything real.
        let a = ComplexField::constant(*x.grid(), Complex::new(1.0, 0.0));
        let b = ComplexField::constant(*x.grid(), Complex::new(0.0, 2.0));
        let (r, l) = project_out(&a, &b).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(r, a);
        let (r, l) = project_out(&b.scale(3.0), &b).unwrap();
        assert!((l - 3.0).abs() < 1e-14 && r.norm() < 1e-14);
    }

    #[test]
    fn restoration_is_exact_and_pure_phase() {
        let x = bumps(24);
        let g = *x.grid();
        let u = random_field(g, 7);
        let m = momentum(&u, &x);
        let gp = grad_momentum(&u, &x);
        let tau = restoring_phase(&u, &gp);
        for target in [m + 1e-4, m - 3e-4, m] {
            let (v, s) = restore_constraint(&u, &tau, target, &x).unwrap();
            assert!((momentum(&v, &x) - target).abs() <= 1e-10);
            for (a, b) in u.data().iter().zip(v.data()) {
                assert!((a.norm() - b.norm()).abs() <= 1e-14);
            }
            if target == m {
                assert_eq!(s, 0.0);
                assert_eq!(v, u);
            }
        }
    }

    #[test]
    fn degenerate_restoration() {
        let x = bumps(16);
        let u = ComplexField::constant(*x.grid(), Complex::new(1.0, 0.0));
        let tau = RealField::zeros(*x.grid());
        assert!(matches!(restore_constraint(&u, &tau, 0.1, &x), Err(GpxError::DegeneratePairing(_))));
    }

    #[test]
    fn unconstrained_smoke() {
        let x = bumps(16);
        let u = ComplexField::constant(*x.grid(), Complex::new(1.0, 0.0));
        let cfg = SolverConfig::unconstrained(0.1).unwrap();
        let (v, rep) = minimize(&u, &cfg, &x, &quartic_potential()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.final_energy, 0.0);
        assert!(rep.lambda_tilde.is_finite());
        assert_eq!(v, u);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(1.5, 0.1).is_err());
        assert!(SolverConfig::new(0.1, -1.0).is_err());
        let mut c = SolverConfig::new(0.1, 0.1).unwrap();
        c.tol_res = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_off_constraint_start() {
        let x = bumps(16);
        let u = ComplexField::constant(*x.grid(), Complex::new(1.0, 0.0));
        let cfg = SolverConfig::new(0.1, 0.01).unwrap();
        assert!(matches!(minimize(&u, &cfg, &x, &quartic_potential()), Err(GpxError::ConstraintNotMet { .. })));
    }
}
