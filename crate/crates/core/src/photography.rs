//! Vortex-ring photographs: flux disks, the dipole map, the tube-smoothed
//! ansatz with its exact flux correction, and the sublevel threshold `c(phi)`.

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::functional::{grad_momentum, momentum, phase_pairing};
use crate::torus::{gradient, ComplexField, Point, RealField, Spectral, TorusGrid, VecField};
use crate::velocity::{FieldSampler, VelocityField};

/// `gamma_2 = 2 sqrt(pi)`, the planar isoperimetric constant.
pub const GAMMA2: f64 = 3.544_907_701_811_032;

/// Tensor polar rule: Gauss-Legendre in the radius, uniform in the angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Quadrature {
    pub radial: usize,
    pub angular: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { radial: 64, angular: 128 }
    }
}

impl Quadrature {
    pub fn doubled(self) -> Self {
        Quadrature { radial: 2 * self.radial, angular: 2 * self.angular }
    }

    pub fn refined(self, factor: usize) -> Self {
        Quadrature { radial: factor * self.radial, angular: factor * self.angular }
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Right-handed orthonormal frame whose first vector is `v / |v|`.
pub fn orthonormal_frame(v: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    let n = norm3(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(GpxError::InvalidField("velocity vanishes at the disk center".into()));
    }
    let e1 = v.map(|c| c / n);
    // Axis least aligned with e1.
    let mut axis = 0;
    for a in 1..3 {
        if e1[a].abs() < e1[axis].abs() {
            axis = a;
        }
    }
    let mut t = [0.0; 3];
    t[axis] = 1.0;
    let s = dot3(t, e1);
    let e2 = [t[0] - s * e1[0], t[1] - s * e1[1], t[2] - s * e1[2]];
    let m = norm3(e2);
    let e2 = e2.map(|c| c / m);
    Ok([e1, e2, cross3(e1, e2)])
}

/// Flux and the extreme values of `g(X, nu)` over the quadrature nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiskSample {
    pub flux: f64,
    pub min_normal: f64,
    pub max_normal: f64,
}

fn disk_limit(x: &dyn FieldSampler) -> f64 {
    x.lengths().iter().cloned().fold(f64::INFINITY, f64::min) / 4.0
}

/// Samples the flux of `X` through the planar disk of radius `r` at `p`
/// with normal `X(p) / |X(p)|`.
pub fn disk_sample(p: &Point, r: f64, x: &dyn FieldSampler, quad: Quadrature) -> Result<DiskSample> {
    let limit = disk_limit(x);
    if !(r >= 0.0 && r < limit) {
        return Err(GpxError::RadiusTooLarge { radius: r, limit });
    }
    let [nu, e2, e3] = orthonormal_frame(x.velocity(p.0))?;
    if r == 0.0 {
        let g = norm3(x.velocity(p.0));
        return Ok(DiskSample { flux: 0.0, min_normal: g, max_normal: g });
    }
    let gl = GaussLegendre::new(quad.radial.max(2)).expect("at least two nodes");
    let na = quad.angular.max(3);
    let dth = 2.0 * PI / na as f64;
    let trig: Vec<(f64, f64)> = (0..na).map(|k| (k as f64 * dth).sin_cos()).collect();
    let rows: Vec<(f64, f64, f64)> = gl
        .as_node_weight_pairs()
        .par_iter()
        .map(|&(t, w)| {
            let rho = 0.5 * r * (t + 1.0);
            let mut acc = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &(s, c) in &trig {
                let q = [0, 1, 2].map(|a| p.0[a] + rho * (c * e2[a] + s * e3[a]));
                let g = dot3(x.velocity(q), nu);
                acc += g;
                lo = lo.min(g);
                hi = hi.max(g);
            }
            (acc * dth * rho * 0.5 * r * w, lo, hi)
        })
        .collect();
    let mut flux = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (f, a, b) in rows {
        flux += f;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(DiskSample { flux, min_normal: lo, max_normal: hi })
}

/// Flux of `X` through the disk of radius `r` at `p`, default quadrature.
pub fn disk_flux(p: &Point, r: f64, x: &dyn FieldSampler) -> Result<f64> {
    Ok(disk_sample(p, r, x, Quadrature::default())?.flux)
}

/// The radius `r(p, phi)` with its sandwich bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiskRadius {
    pub r: f64,
    pub flux: f64,
    /// `sqrt(phi / (pi max g))`, a lower bound for `r`.
    pub lower: f64,
    /// `sqrt(phi / (pi min g))`, an upper bound for `r` when `min g > 0`.
    pub upper: f64,
    /// `C_X` with `C_X^{-1} sqrt(phi) <= r <= C_X sqrt(phi)`.
    pub c_x: f64,
    pub quadrature: Quadrature,
    /// Change of `r` across the last quadrature doubling.
    pub refinement_change: f64,
}

fn bisect_radius(p: &Point, phi: f64, x: &dyn FieldSampler, quad: Quadrature) -> Result<f64> {
    let limit = disk_limit(x);
    let top = limit * (1.0 - 1e-12);
    let flux = |r: f64| disk_sample(p, r, x, quad).map(|s| s.flux);
    let g0 = norm3(x.velocity(p.0));
    let mut r = (phi / (PI * g0)).sqrt().min(top);
    let mut lo;
    let mut hi;
    if flux(r)? < phi {
        lo = r;
        loop {
            let next = (r * 1.25).min(top);
            let f = flux(next)?;
            if f >= phi {
                hi = next;
                break;
            }
            lo = next;
            if next >= top {
                return Err(GpxError::FluxTooLarge { phi, phi_max: f });
            }
            r = next;
        }
    } else {
        hi = r;
        loop {
            let next = r * 0.8;
            if flux(next)? < phi {
                lo = next;
                break;
            }
            hi = next;
            r = next;
        }
    }
    let tol = 1e-10 * phi.min(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = flux(mid)?;
        if (f - phi).abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f < phi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves `disk_flux(p, r) = phi` by bisection, doubling the quadrature
/// until `r` moves by at most `1e-8`.
pub fn disk_radius(p: &Point, phi: f64, x: &dyn FieldSampler) -> Result<DiskRadius> {
    disk_radius_with(p, phi, x, Quadrature::default())
}

pub fn disk_radius_with(p: &Point, phi: f64, x: &dyn FieldSampler, quad: Quadrature) -> Result<DiskRadius> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(GpxError::Validation { key: "phi".into(), msg: format!("{phi} must be positive") });
    }
    let mut quad = quad;
    let mut r = bisect_radius(p, phi, x, quad)?;
    let mut change = f64::INFINITY;
    for _ in 0..4 {
        let next = quad.doubled();
        let r2 = bisect_radius(p, phi, x, next)?;
        change = (r2 - r).abs();
        quad = next;
        r = r2;
        if change <= 1e-8 {
            break;
        }
    }
    let s = disk_sample(p, r, x, quad)?;
    let lower = (phi / (PI * s.max_normal)).sqrt();
    let upper = if s.min_normal > 0.0 { (phi / (PI * s.min_normal)).sqrt() } else { f64::INFINITY };
    let c_x = (PI * s.max_normal).sqrt().max(1.0 / (PI * s.min_normal.max(0.0)).sqrt()).max(1.0);
    Ok(DiskRadius { r, flux: s.flux, lower, upper, c_x, quadrature: quad, refinement_change: change })
}

/// Harmonic phase `theta` on the disk `|z| <= 2R` cancelling the dipole's
/// boundary phase.
#[derive(Clone, Debug, PartialEq)]
pub struct DipolePhase {
    pub radius: f64,
    /// Fourier coefficients in FFT order: index `k` for `k < M/2`, `k - M` above.
    pub coeffs: Vec<Complex<f64>>,
}

/// The dipole without its phase correction: a vortex at `iR`, an
/// antivortex at `-iR`.
fn dipole_bare(z: Complex<f64>, radius: f64) -> Option<Complex<f64>> {
    let a = z - Complex::new(0.0, radius);
    let b = (z + Complex::new(0.0, radius)).conj();
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((a / na) * (b / nb))
}

/// Fourier coefficients of `beta = -arg(dipole)` on the circle `|z| = 2R`.
pub fn dipole_phase(radius: f64, modes: usize) -> DipolePhase {
    assert!(modes >= 32, "at least 32 modes");
    assert!(radius > 0.0, "radius must be positive");
    let mut buf: Vec<Complex<f64>> = (0..modes)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / modes as f64;
            let w = dipole_bare(Complex::from_polar(2.0 * radius, t), radius).expect("circle avoids the vortices");
            // The segment [-iR, iR] subtends less than pi from the circle,
            // so the principal argument is continuous here.
            Complex::new(-w.arg(), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(modes).process(&mut buf);
    let inv = 1.0 / modes as f64;
    DipolePhase { radius, coeffs: buf.into_iter().map(|c| c * inv).collect() }
}

impl DipolePhase {
    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of `e^{ik t}`; zero outside the stored band.
    pub fn coeff(&self, k: i64) -> Complex<f64> {
        let m = self.coeffs.len() as i64;
        if k.abs() > m / 2 {
            return Complex::new(0.0, 0.0);
        }
        self.coeffs[k.rem_euclid(m) as usize]
    }

    /// Harmonic extension `sum_k c_k (|z|/2R)^|k| e^{ik arg z}`.
    pub fn eval(&self, z: Complex<f64>) -> f64 {
        let m = self.coeffs.len();
        let s = z.norm() / (2.0 * self.radius);
        let t = z.arg();
        let mut acc = self.coeffs[0].re;
        let mut sk = 1.0;
        let half = m / 2;
        for k in 1..half {
            sk *= s;
            let e = Complex::from_polar(sk, k as f64 * t);
            acc += (self.coeffs[k] * e + self.coeffs[m - k] * e.conj()).re;
        }
        if m % 2 == 0 {
            sk *= s;
            acc += self.coeffs[half].re * sk * (half as f64 * t).cos();
        } else {
            sk *= s;
            let e = Complex::from_polar(sk, half as f64 * t);
            acc += (self.coeffs[half] * e + self.coeffs[m - half] * e.conj()).re;
        }
        acc
    }
}

/// `omega(z) = (z - iR)/|z - iR| * conj(z + iR)/|z + iR| * e^{i theta(z)}`.
pub fn dipole_map(z: Complex<f64>, radius: f64, theta: &DipolePhase) -> Result<Complex<f64>> {
    let w = dipole_bare(z, radius).ok_or(GpxError::Singular)?;
    Ok(w * Complex::from_polar(1.0, theta.eval(z)))
}

/// Winding number of `f` along the circle of radius `rad` around `c`.
pub fn winding_number<F: Fn(Complex<f64>) -> Complex<f64>>(f: F, c: Complex<f64>, rad: f64, samples: usize) -> f64 {
    let mut total = 0.0;
    let mut prev = f(c + rad);
    for k in 1..=samples {
        let t = 2.0 * PI * k as f64 / samples as f64;
        let cur = f(c + Complex::from_polar(rad, t));
        total += (cur / prev).arg();
        prev = cur;
    }
    total / (2.0 * PI)
}

/// Parameters of one photograph.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzSpec {
    pub p: Point,
    pub phi: f64,
    pub eps: f64,
    pub r: f64,
    pub frame: [[f64; 3]; 3],
    pub theta: DipolePhase,
    /// Radius of the emitted vortex ring; equals `r` unless calibrated.
    pub ring: f64,
}

impl AnsatzSpec {
    /// Computes `r(p, phi)` and the frame from `X`.
    pub fn new(p: Point, phi: f64, eps: f64, x: &dyn FieldSampler) -> Result<Self> {
        let dr = disk_radius(&p, phi, x)?;
        Self::with_radius(p, phi, eps, dr.r, x.velocity(p.0))
    }

    pub fn with_radius(p: Point, phi: f64, eps: f64, r: f64, axis: [f64; 3]) -> Result<Self> {
        if !(r > 0.0) {
            return Err(GpxError::Validation { key: "r".into(), msg: format!("{r} must be positive") });
        }
        if !(eps > 0.0 && eps < r / 2.0 && eps < 1.0) {
            return Err(GpxError::Validation { key: "eps".into(), msg: format!("{eps} must lie in (0, min(r/2, 1)) with r = {r}") });
        }
        Ok(AnsatzSpec { p, phi, eps, r, frame: orthonormal_frame(axis)?, theta: dipole_phase(r, 64), ring: r })
    }

    /// Same photograph with the vortex ring moved to radius `ring`.
    pub fn with_ring(&self, ring: f64) -> Self {
        AnsatzSpec { theta: dipole_phase(ring, self.theta.modes()), ring, ..self.clone() }
    }

    /// Checks that `B(p, 2r + eps)` fits well inside the torus.
    pub fn check_support(&self, grid: &TorusGrid) -> Result<()> {
        let room = grid.min_length() / 2.0 - 2.0 * grid.max_spacing();
        let need = 2.0 * self.ring + self.eps;
        if need < room {
            Ok(())
        } else {
            Err(GpxError::SupportOverflow(format!("2r + eps = {need} but only {room} available")))
        }
    }

    /// Unit-modulus photograph value at a displacement `d` from `p`,
    /// before tube smoothing.
    fn value_at(&self, d: [f64; 3]) -> Complex<f64> {
        let dist = norm3(d);
        if dist > 2.0 * self.ring {
            return Complex::new(1.0, 0.0);
        }
        let x = dot3(d, self.frame[0]);
        let rho = (dot3(d, self.frame[1]).powi(2) + dot3(d, self.frame[2]).powi(2)).sqrt();
        let z = Complex::new(x, rho);
        let t = (z - Complex::new(0.0, self.ring)).norm();
        match dipole_map(z, self.ring, &self.theta) {
            Ok(w) if t < self.eps => w * (t / self.eps),
            Ok(w) => w,
            Err(_) => Complex::new(0.0, 0.0),
        }
    }
}

/// The photograph before flux correction: `1` outside `B(p, 2r)`, the
/// dipole map inside, scaled by `dist / eps` in the tube around the ring.
pub fn ansatz_raw(spec: &AnsatzSpec, grid: &TorusGrid) -> Result<ComplexField> {
    spec.check_support(grid)?;
    let p = spec.p;
    Ok(ComplexField::from_index_fn(*grid, |i| {
        let (d, _) = grid.min_image(&p, &grid.node_point(i));
        spec.value_at(d)
    }))
}

/// Phase corrector: the periodic solution of
/// `laplacian tau = -div((eps0 - dist(., p))_+ X)`.
pub fn flux_corrector(p: &Point, eps0: f64, x: &VelocityField) -> Result<RealField> {
    let grid = *x.grid();
    if !(eps0 > 0.0 && eps0 < grid.min_length() / 4.0) {
        return Err(GpxError::Validation {
            key: "eps0".into(),
            msg: format!("{eps0} must lie in (0, {})", grid.min_length() / 4.0),
        });
    }
    let xd = x.x().data();
    let v = VecField::from_index_fn(grid, |i| {
        let b = (eps0 - grid.distance(&grid.node_point(i), p)).max(0.0);
        xd[i].map(|c| b * c)
    });
    let rhs = crate::torus::divergence(&v).map(|c| -c);
    Spectral::new(grid).poisson_solve(&rhs)
}

/// Outcome of [`ansatz`].
#[derive(Clone, Debug)]
pub struct Photograph {
    pub u: ComplexField,
    /// Momentum of the uncorrected field at ring radius `r(p, phi)`.
    pub raw_momentum: f64,
    pub momentum: f64,
    /// Ring radius actually used.
    pub ring: f64,
    /// `(phi - Phi(raw)) / pairing` for the uncalibrated raw field.
    pub c_linear: Option<f64>,
    /// Phase amplitude actually applied.
    pub c: f64,
    /// `None` when no grid node sees `|u| < 1`.
    pub pairing: Option<f64>,
    pub newton_steps: usize,
}

/// Knobs of [`ansatz_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnsatzOptions {
    /// Move the ring so the raw discrete momentum is `phi` before the
    /// phase correction.
    pub calibrate_ring: bool,
    /// Corrector ball radius; `None` uses the ring radius.
    pub eps0: Option<f64>,
}

impl Default for AnsatzOptions {
    fn default() -> Self {
        AnsatzOptions { calibrate_ring: true, eps0: None }
    }
}

/// Root of `ring -> momentum(raw(ring)) - phi` by regula falsi (Illinois).
fn calibrate_ring(spec: &AnsatzSpec, x: &VelocityField) -> Result<f64> {
    let grid = *x.grid();
    let lo_lim = 2.0 * spec.eps * (1.0 + 1e-9);
    let hi_lim = (grid.min_length() / 2.0 - 2.0 * grid.max_spacing() - spec.eps) / 2.0 * (1.0 - 1e-9);
    if !(lo_lim < hi_lim) {
        return Err(GpxError::SupportOverflow("no admissible ring radius".into()));
    }
    let f = |ring: f64| -> Result<f64> { Ok(momentum(&ansatz_raw(&spec.with_ring(ring), &grid)?, x) - spec.phi) };
    let mut a = spec.r.clamp(lo_lim, hi_lim);
    let mut fa = f(a)?;
    if fa == 0.0 {
        return Ok(a);
    }
    // Bracket by geometric steps, guided by momentum ~ ring^2.
    let mut b = a;
    let mut fb = fa;
    for _ in 0..60 {
        let grow = if fb < 0.0 { 1.15 } else { 1.0 / 1.15 };
        let next = (b * grow).clamp(lo_lim, hi_lim);
        if next == b {
            return Err(GpxError::FluxUnreachable { phi: spec.phi, seed: fb + spec.phi });
        }
        a = b;
        fa = fb;
        b = next;
        fb = f(b)?;
        if fa.signum() != fb.signum() {
            break;
        }
    }
    if fa.signum() == fb.signum() {
        return Err(GpxError::FluxUnreachable { phi: spec.phi, seed: fb + spec.phi });
    }
    let tol = 1e-11 * spec.phi;
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() <= tol || (b - a).abs() <= 1e-14 * b.abs() {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Solves `momentum(e^{i s tau} u) = target` for `s`, starting from the
/// linearization `s0`. Returns the rotated field, `s` and the step count.
pub(crate) fn phase_root(
    u: &ComplexField,
    tau: &RealField,
    target: f64,
    s0: f64,
    x: &VelocityField,
    tol: f64,
) -> Result<(ComplexField, f64, usize)> {
    let mut s = s0;
    let mut v = u.phase_rotate(tau, s);
    let mut f = momentum(&v, x) - target;
    let tau_c = ComplexField::from_index_fn(*u.grid(), |i| Complex::new(0.0, tau.data()[i]));
    for step in 0..60 {
        if f.abs() <= tol {
            return Ok((v, s, step));
        }
        // d/ds momentum(e^{i s tau} u) = <grad Phi(v), i tau v>.
        let dir = ComplexField::from_index_fn(*u.grid(), |i| tau_c.data()[i] * v.data()[i]);
        let slope = grad_momentum(&v, x).dot(&dir);
        if !(slope.abs() > 0.0) {
            return Err(GpxError::DegenerateCorrector(slope));
        }
        let mut ds = -f / slope;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = u.phase_rotate(tau, s + ds);
            let ft = momentum(&trial, x) - target;
            if ft.abs() < f.abs() {
                s += ds;
                v = trial;
                f = ft;
                accepted = true;
                break;
            }
            ds *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if f.abs() <= tol {
        Ok((v, s, 60))
    } else {
        Err(GpxError::DegenerateCorrector(f))
    }
}

/// The flux-exact photograph `e^{i c tau_p} u_raw` with default options.
pub fn ansatz(spec: &AnsatzSpec, x: &VelocityField) -> Result<Photograph> {
    ansatz_with(spec, x, AnsatzOptions::default())
}

fn corrector_for(spec: &AnsatzSpec, raw: &ComplexField, eps0: f64, x: &VelocityField) -> Result<(RealField, f64)> {
    let grid = *x.grid();
    let tau = flux_corrector(&spec.p, eps0, x)?;
    let pairing = phase_pairing(raw, &gradient(&tau), x.x());
    if pairing.abs() >= 1e-12 {
        return Ok((tau, pairing));
    }
    // Retry with the bump moved onto the vortex ring.
    let q = [0, 1, 2].map(|a| spec.p.0[a] + spec.ring * spec.frame[1][a]);
    let tau = flux_corrector(&grid.wrap(q), eps0, x)?;
    let pairing = phase_pairing(raw, &gradient(&tau), x.x());
    if pairing.abs() < 1e-12 {
        return Err(GpxError::DegenerateCorrector(pairing));
    }
    Ok((tau, pairing))
}

pub fn ansatz_with(spec: &AnsatzSpec, x: &VelocityField, opts: AnsatzOptions) -> Result<Photograph> {
    let grid = *x.grid();
    let eps0_for = |ring: f64| opts.eps0.unwrap_or(ring).min(grid.min_length() / 4.0 * 0.99);
    let raw = ansatz_raw(spec, &grid)?;
    let raw_momentum = momentum(&raw, x);
    let pairing = corrector_for(spec, &raw, eps0_for(spec.ring), x).ok().map(|(_, p)| p);
    let c_linear = pairing.map(|p| (spec.phi - raw_momentum) / p);
    let done = |u: ComplexField, ring: f64, c: f64, steps: usize| {
        let m = momentum(&u, x);
        Photograph { u, raw_momentum, momentum: m, ring, c_linear, c, pairing, newton_steps: steps }
    };
    if raw_momentum == spec.phi {
        return Ok(done(raw, spec.ring, 0.0, 0));
    }
    let (spec, raw) = if opts.calibrate_ring {
        let s = spec.with_ring(calibrate_ring(spec, x)?);
        let raw = ansatz_raw(&s, &grid)?;
        (s, raw)
    } else {
        (spec.clone(), raw)
    };
    let m = momentum(&raw, x);
    let tol = 1e-12 * spec.phi.max(1e-3);
    if (m - spec.phi).abs() <= tol {
        return Ok(done(raw, spec.ring, 0.0, 0));
    }
    let (tau, pair) = corrector_for(&spec, &raw, eps0_for(spec.ring), x)?;
    let (u, c, steps) = phase_root(&raw, &tau, spec.phi, (spec.phi - m) / pair, x, tol)?;
    Ok(done(u, spec.ring, c, steps))
}

/// `c(phi) = gamma_2 sqrt(phi) + alpha phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SublevelCurve {
    pub alpha: f64,
    pub gamma: f64,
}

impl SublevelCurve {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(GpxError::Validation { key: "alpha".into(), msg: format!("{alpha} must be positive") });
        }
        Ok(SublevelCurve { alpha, gamma: 2.0 * PI.sqrt() })
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.gamma * phi.sqrt() + self.alpha * phi
    }
}

pub fn sublevel_c(phi: f64, alpha: f64) -> f64 {
    GAMMA2 * phi.sqrt() + alpha * phi
}

/// One row of [`expansion_table`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpansionRow {
    pub phi: f64,
    pub r: f64,
    /// Disk area `pi r^2`.
    pub v_p: f64,
    /// `2 pi r`.
    pub boundary_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpansionTable {
    pub rows: Vec<ExpansionRow>,
    /// Slope of `boundary_length - gamma_2 sqrt(phi)` against `phi`.
    pub upsilon: f64,
    pub fit_residual: f64,
}

/// Least-squares slope through the origin and its RMS residual.
pub fn fit_upsilon(rows: &[ExpansionRow]) -> (f64, f64) {
    let y: Vec<f64> = rows.iter().map(|r| r.boundary_length - GAMMA2 * r.phi.sqrt()).collect();
    let sxx: f64 = rows.iter().map(|r| r.phi * r.phi).sum();
    let sxy: f64 = rows.iter().zip(&y).map(|(r, y)| r.phi * y).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let res = rows.iter().zip(&y).map(|(r, y)| (y - slope * r.phi).powi(2)).sum::<f64>() / rows.len().max(1) as f64;
    (slope, res.sqrt())
}

pub fn expansion_table(p: &Point, phi_list: &[f64], x: &dyn FieldSampler) -> Result<ExpansionTable> {
    if phi_list.is_empty() {
        return Err(GpxError::Validation { key: "phi_list".into(), msg: "empty".into() });
    }
    if phi_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(GpxError::Validation { key: "phi_list".into(), msg: "must be strictly decreasing".into() });
    }
    let rows = phi_list
        .iter()
        .map(|&phi| {
            let r = disk_radius(p, phi, x)?.r;
            Ok(ExpansionRow { phi, r, v_p: PI * r * r, boundary_length: 2.0 * PI * r })
        })
        .collect::<Result<Vec<_>>>()?;
    let (upsilon, fit_residual) = fit_upsilon(&rows);
    Ok(ExpansionTable { rows, upsilon, fit_residual })
}
