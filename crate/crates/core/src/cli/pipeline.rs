//! The experiments behind each command. Every function returns a
//! serializable report; writing files is left to the caller.

use std::path::{Path, PathBuf};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{parse_config, ExperimentConfig};
use crate::barycenter::{beta, best_concentration, concentration_radius, concentration_ratio, homotopy_gap, ConcentrationReport};
use crate::error::{GpxError, Result};
use crate::functional::{energy_density_with, energy_with, grad_energy_with, grad_momentum, momentum, momentum_via_jacobian, EnergyBreakdown};
use crate::isoperimetric::{
    best_loop, jm_table, random_series_input, random_subadd_inputs, seed_points, series_check, subadd_check, JmRow, VortexLoop,
};
use crate::photography::{ansatz, disk_radius_with, expansion_table, sublevel_c, AnsatzSpec};
use crate::solver::{minimize, SolverReport};
use crate::torus::{io, ComplexField, Point, Stencil, TorusGrid};
use crate::velocity::{FieldSampler, VelocityField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub config_hash: String,
}

/// A parsed configuration, its hash and the directory relative paths refer to.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub workdir: PathBuf,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, workdir: &Path) -> Self {
        let hash = cfg.hash();
        Ctx { cfg, hash, workdir: workdir.to_path_buf() }
    }

    pub fn load(config: &Path, workdir: &Path) -> Result<Self> {
        let path = if config.is_absolute() { config.to_path_buf() } else { workdir.join(config) };
        Ok(Ctx::new(parse_config(&path)?, workdir))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    pub fn meta(&self) -> Meta {
        Meta { version: VERSION, config_hash: self.hash.clone() }
    }

    pub fn trailer(&self) -> String {
        format!("# gpvortex v{VERSION}, config hash {}\n", self.hash)
    }

    pub fn write_csv(&self, path: &Path, body: &str) -> Result<()> {
        io::write_atomic(&self.resolve(path), format!("{body}{}", self.trailer()).as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        io::write_atomic(&self.resolve(path), s.as_bytes())
    }

    pub fn write_field(&self, path: &Path, u: &ComplexField) -> Result<()> {
        io::write_atomic(&self.resolve(path), &io::encode_complex(u))
    }

    pub fn read_field(&self, path: &Path) -> Result<ComplexField> {
        let u: ComplexField = io::read_complex(&self.resolve(path))?;
        let want = self.cfg.grid()?;
        if u.grid().counts() != want.counts() || u.grid().lengths() != want.lengths() {
            return Err(GpxError::Validation {
                key: "grid".into(),
                msg: format!("{} is on a {:?} grid, the config asks for {:?}", path.display(), u.grid().counts(), want.counts()),
            });
        }
        Ok(u)
    }
}

/// Sublevel slope `alpha` and the expansion fits behind it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaFit {
    pub alpha: f64,
    /// `None` when `alpha` came from the config.
    pub upsilon_max: Option<f64>,
    pub upsilon: Vec<f64>,
}

const ALPHA_PHIS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

/// Configured `alpha`, or `max(1, max Upsilon + 1)` over the Σ representatives.
pub fn resolve_alpha(ctx: &Ctx, x: &VelocityField) -> Result<AlphaFit> {
    if let Some(alpha) = ctx.cfg.photography.alpha {
        return Ok(AlphaFit { alpha, upsilon_max: None, upsilon: Vec::new() });
    }
    let upsilon = x
        .sigma()
        .representatives()
        .iter()
        .map(|p| expansion_table(p, &ALPHA_PHIS, x).map(|t| t.upsilon))
        .collect::<Result<Vec<_>>>()?;
    let m = upsilon.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlphaFit { alpha: (m + 1.0).max(1.0), upsilon_max: Some(m), upsilon })
}

/// `eps` given outright or as a fraction of `r(p, phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum EpsSpec {
    Value(f64),
    RadiusFraction(f64),
}

impl EpsSpec {
    /// `0.01` or `r/8`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || GpxError::Validation { key: "eps".into(), msg: format!("`{s}` is neither a number nor r/<k>") };
        if let Some(k) = s.strip_prefix("r/") {
            let k: f64 = k.parse().map_err(|_| bad())?;
            if !(k > 2.0) {
                return Err(bad());
            }
            return Ok(EpsSpec::RadiusFraction(1.0 / k));
        }
        s.parse().map(EpsSpec::Value).map_err(|_| bad())
    }

    pub fn at(self, r: f64) -> f64 {
        match self {
            EpsSpec::Value(e) => e,
            EpsSpec::RadiusFraction(f) => f * r,
        }
    }
}

pub fn parse_point(s: &str) -> Result<Point> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| {
        GpxError::Validation { key: "p".into(), msg: format!("`{s}` is not x,y,z") }
    })?;
    <[f64; 3]>::try_from(v)
        .map(Point)
        .map_err(|_| GpxError::Validation { key: "p".into(), msg: format!("`{s}` is not x,y,z") })
}

pub fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| GpxError::Validation { key: key.into(), msg: format!("`{s}` is not a comma-separated list of numbers") })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnsatzRecord {
    pub p: Point,
    pub phi: f64,
    pub eps: f64,
    pub r: f64,
    pub ring: f64,
    pub energy: EnergyBreakdown,
    pub momentum: f64,
    pub momentum_error: f64,
    /// Phase amplitude of the flux correction.
    pub c: f64,
    pub alpha: f64,
    pub sublevel_c: f64,
    pub max_modulus: f64,
    pub passed: bool,
    pub meta: Meta,
}

/// The photograph at `p` with `eps` (default `eps_ratio * r`).
pub fn ansatz_run(
    ctx: &Ctx,
    x: &VelocityField,
    alpha: f64,
    p: Point,
    phi: f64,
    eps: Option<EpsSpec>,
) -> Result<(ComplexField, AnsatzRecord)> {
    let p = x.grid().wrap(p.0);
    let r = disk_radius_with(&p, phi, x, ctx.cfg.quadrature())?.r;
    let eps = eps.unwrap_or(EpsSpec::RadiusFraction(ctx.cfg.solver.eps_ratio)).at(r);
    let spec = AnsatzSpec::with_radius(p, phi, eps, r, x.velocity(p.0))?;
    let photo = ansatz(&spec, x)?;
    let pot = ctx.cfg.potential();
    let energy = energy_with(&photo.u, eps, &pot, ctx.cfg.solver.stencil)?;
    let max_modulus = photo.u.modulus().max_abs();
    let momentum_error = (photo.momentum - phi).abs();
    let c = sublevel_c(phi, alpha);
    let rec = AnsatzRecord {
        p,
        phi,
        eps,
        r,
        ring: photo.ring,
        energy,
        momentum: photo.momentum,
        momentum_error,
        c: photo.c,
        alpha,
        sublevel_c: c,
        max_modulus,
        passed: momentum_error <= 1e-8 && max_modulus <= 1.0 + 1e-12,
        meta: ctx.meta(),
    };
    Ok((photo.u, rec))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimizeRecord {
    pub eps: f64,
    pub phi: f64,
    #[serde(flatten)]
    pub report: SolverReport,
    pub meta: Meta,
}

pub fn minimize_run(ctx: &Ctx, x: &VelocityField, u0: &ComplexField, phi: f64, eps: f64) -> Result<(ComplexField, MinimizeRecord)> {
    let cfg = ctx.cfg.solver_config(eps, phi)?;
    let (u, report) = minimize(u0, &cfg, x, &ctx.cfg.potential())?;
    Ok((u, MinimizeRecord { eps, phi, report, meta: ctx.meta() }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarycenterRecord {
    pub intrinsic: Point,
    pub guarantee_holds: bool,
    pub sigma_point: Point,
    pub component: usize,
    pub dist_to_sigma: f64,
    pub within_tube: bool,
    /// Energy fraction in `B(barycenter, mu sqrt(phi))`.
    pub concentration: f64,
    /// Smallest `mu` whose ball at the barycenter holds `eta` of the energy.
    pub smallest_mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRecord {
    pub seed: Point,
    pub gap: f64,
    /// Distance from the seed to the intrinsic barycenter, before retraction
    /// onto the discrete Σ.
    pub intrinsic_distance: f64,
    pub rho_star: f64,
    /// `2 r(seed, phi) + 2h`.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagReport {
    pub phi: f64,
    pub eps: f64,
    pub stencil: Stencil,
    pub energy: EnergyBreakdown,
    pub momentum: f64,
    pub momentum_via_jacobian: f64,
    pub concentration: Vec<ConcentrationReport>,
    pub barycenter: Option<BarycenterRecord>,
    pub barycenter_error: Option<String>,
    pub homotopy_gap: Option<GapRecord>,
    pub passed: bool,
    pub meta: Meta,
}

fn barycenter_of(ctx: &Ctx, x: &VelocityField, u: &ComplexField, phi: f64, eps: f64) -> Result<BarycenterRecord> {
    let d = &ctx.cfg.diagnostics;
    let pot = ctx.cfg.potential();
    let stencil = ctx.cfg.solver.stencil;
    let r = d.mu * phi.sqrt();
    let b = beta(u, eps, &pot, stencil, x.sigma(), r, d.eta)?;
    let density = energy_density_with(u, eps, &pot, stencil)?;
    let concentration = concentration_ratio(&density, &b.intrinsic.point, r)?;
    let smallest_mu = concentration_radius(&density, &b.intrinsic.point, d.eta)? / phi.sqrt();
    Ok(BarycenterRecord {
        intrinsic: b.intrinsic.point,
        guarantee_holds: b.intrinsic.guarantee_holds,
        sigma_point: b.point,
        component: b.component,
        dist_to_sigma: b.dist_to_sigma,
        within_tube: b.dist_to_sigma <= x.sigma().delta,
        concentration,
        smallest_mu,
    })
}

fn gap_of(ctx: &Ctx, x: &VelocityField, u: &ComplexField, phi: f64, eps: f64, seed: &Point) -> Result<GapRecord> {
    let d = &ctx.cfg.diagnostics;
    let g = homotopy_gap(seed, u, eps, &ctx.cfg.potential(), ctx.cfg.solver.stencil, x.sigma(), d.mu * phi.sqrt(), d.eta)?;
    let r = disk_radius_with(seed, phi, x, ctx.cfg.quadrature())?.r;
    let bound = 2.0 * r + 2.0 * x.grid().max_spacing();
    let intrinsic_distance = x.grid().distance(seed, &g.beta.intrinsic.point);
    Ok(GapRecord { seed: *seed, gap: g.gap, intrinsic_distance, rho_star: g.rho_star, bound, passed: g.gap <= bound })
}

/// Energy, concentration at `mu sqrt(phi)` times 1/2, 1 and 2, barycenter
/// and optionally the homotopy gap to `seed`.
pub fn diagnose(ctx: &Ctx, x: &VelocityField, u: &ComplexField, phi: f64, eps: f64, seed: Option<Point>) -> Result<DiagReport> {
    let d = &ctx.cfg.diagnostics;
    let pot = ctx.cfg.potential();
    let stencil = ctx.cfg.solver.stencil;
    let density = energy_density_with(u, eps, &pot, stencil)?;
    let limit = x.grid().min_length() / 2.0;
    let concentration = [0.5, 1.0, 2.0]
        .iter()
        .map(|f| f * d.mu * phi.sqrt())
        .filter(|&r| r < limit)
        .map(|r| best_concentration(&density, r, d.eta))
        .collect::<Result<Vec<_>>>()?;
    let (barycenter, barycenter_error) = match barycenter_of(ctx, x, u, phi, eps) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let homotopy_gap = match seed {
        Some(s) if barycenter.is_some() => Some(gap_of(ctx, x, u, phi, eps, &x.grid().wrap(s.0))?),
        _ => None,
    };
    let passed = barycenter.as_ref().is_some_and(|b| b.within_tube && b.concentration >= d.eta)
        && homotopy_gap.as_ref().map_or(true, |g| g.passed);
    Ok(DiagReport {
        phi,
        eps,
        stencil,
        energy: energy_with(u, eps, &pot, stencil)?,
        momentum: momentum(u, x),
        momentum_via_jacobian: momentum_via_jacobian(u, x)?,
        concentration,
        barycenter,
        barycenter_error,
        homotopy_gap,
        passed,
        meta: ctx.meta(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub phi: f64,
    pub eps: f64,
    pub p: Point,
    pub converged: bool,
    pub final_energy: f64,
    pub lambda: f64,
    pub residual: f64,
    pub barycenter: Option<Point>,
    pub dist_to_sigma: Option<f64>,
}

impl ScanRow {
    pub const HEADER: &'static str =
        "phi,eps,p_x,p_y,p_z,converged,final_energy,lambda,residual,barycenter_x,barycenter_y,barycenter_z,dist_to_sigma\n";

    pub fn csv(&self) -> String {
        let b = self.barycenter.map_or(",,".to_string(), |b| format!("{},{},{}", b.0[0], b.0[1], b.0[2]));
        let d = self.dist_to_sigma.map_or(String::new(), |d| d.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{b},{d}\n",
            self.phi, self.eps, self.p.0[0], self.p.0[1], self.p.0[2], self.converged, self.final_energy, self.lambda, self.residual
        )
    }
}

/// Minimizes from the photograph at every Σ representative for every
/// `(phi, eps)` pair. Jobs run concurrently; rows keep job order.
pub fn scan(ctx: &Ctx, x: &VelocityField, phis: &[f64], eps_list: &[EpsSpec]) -> Result<Vec<ScanRow>> {
    let reps = x.sigma().representatives();
    let mut jobs = Vec::new();
    for &phi in phis {
        for &e in eps_list {
            for p in &reps {
                jobs.push((phi, e, *p));
            }
        }
    }
    jobs.par_iter()
        .map(|&(phi, e, p)| {
            let (u0, rec) = ansatz_run(ctx, x, 1.0, p, phi, Some(e))?;
            let (u, m) = minimize_run(ctx, x, &u0, phi, rec.eps)?;
            let b = barycenter_of(ctx, x, &u, phi, rec.eps).ok();
            Ok(ScanRow {
                phi,
                eps: rec.eps,
                p,
                converged: m.report.converged,
                final_energy: m.report.final_energy,
                lambda: m.report.best_lambda,
                residual: m.report.residual_rel,
                barycenter: b.as_ref().map(|b| b.intrinsic),
                dist_to_sigma: b.map(|b| b.dist_to_sigma),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct IsoReport {
    pub rows: Vec<JmRow>,
    /// Power-law fit, present when the fluxes span a decade.
    pub exponent: Option<f64>,
    pub prefactor: Option<f64>,
    pub seeds: Vec<Point>,
    /// Every winning centroid lies within `mu sqrt(phi)` of Σ.
    pub centroids_near_sigma: bool,
    pub passed: bool,
    pub meta: Meta,
    #[serde(skip)]
    pub loops: Vec<VortexLoop>,
}

impl IsoReport {
    pub const HEADER: &'static str = "phi,best_mass,ratio,centroid_x,centroid_y,centroid_z,dist_to_sigma,best_seed,converged_seeds\n";

    pub fn table_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        for r in &self.rows {
            let d = r.dist_to_sigma.map_or(String::new(), |d| d.to_string());
            let c = r.centroid.0;
            s.push_str(&format!(
                "{},{},{},{},{},{},{d},{},{}\n",
                r.phi, r.best_mass, r.ratio, c[0], c[1], c[2], r.best_seed, r.converged_seeds
            ));
        }
        s
    }
}

/// Shortest loops of flux `phi` over `seeds` random starts, for each flux.
pub fn iso(ctx: &Ctx, x: &VelocityField, phis: &[f64], seeds: usize) -> Result<IsoReport> {
    let ic = &ctx.cfg.isoperimetric;
    let lc = ctx.cfg.loop_config();
    let points = seed_points(x, seeds, ic.min_speed * x.max_norm(), ctx.cfg.seed)?;
    let sigma = Some(x.sigma());
    let lo = phis.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phis.iter().cloned().fold(0.0, f64::max);
    let (rows, loops, exponent, prefactor) = if phis.len() >= 2 && hi >= 10.0 * lo * (1.0 - 1e-12) {
        let t = jm_table(phis, x, sigma, &points, &lc)?;
        (t.rows, t.best_loops, Some(t.exponent), Some(t.prefactor))
    } else {
        let (rows, loops): (Vec<_>, Vec<_>) =
            phis.iter().map(|&phi| best_loop(phi, x, sigma, &points, &lc)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        (rows, loops, None, None)
    };
    let mu = ctx.cfg.diagnostics.mu;
    let centroids_near_sigma = rows.iter().all(|r| r.dist_to_sigma.is_some_and(|d| d <= mu * r.phi.sqrt()));
    Ok(IsoReport {
        rows,
        exponent,
        prefactor,
        seeds: points,
        centroids_near_sigma,
        passed: centroids_near_sigma,
        meta: ctx.meta(),
        loops,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub draws: usize,
    pub violations: usize,
    pub rejected: usize,
    pub min_slack: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub name: String,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub suites: Vec<SuiteResult>,
    pub gradients: Vec<GradientCheck>,
    pub passed: bool,
    pub meta: Meta,
}

fn random_field(g: TorusGrid, rng: &mut ChaCha8Rng) -> ComplexField {
    let data = (0..g.node_count()).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    ComplexField::from_vec(g, data).expect("sized to the grid")
}

/// Directional finite differences of energy (both stencils) and momentum on
/// a random 16^3 field of the configured box.
pub fn gradient_checks(ctx: &Ctx) -> Result<Vec<GradientCheck>> {
    let g = TorusGrid::cubic(16, ctx.cfg.grid.l)?;
    let x = ctx.cfg.build_field_on(g)?;
    let pot = ctx.cfg.potential();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let u = random_field(g, &mut rng);
    let v = random_field(g, &mut rng);
    let eps = 0.1;
    let mut out = Vec::new();
    for (name, stencil) in [("grad_energy_central", Stencil::Central), ("grad_energy_compact", Stencil::Compact)] {
        let t = 1e-6;
        let e = |w: &ComplexField| energy_with(w, eps, &pot, stencil).map(|b| b.total);
        let fd = (e(&u.axpy(t, &v))? - e(&u.axpy(-t, &v))?) / (2.0 * t);
        let an = grad_energy_with(&u, eps, &pot, stencil)?.dot(&v);
        let rel = (fd - an).abs() / an.abs();
        out.push(GradientCheck { name: name.into(), relative_error: rel, tolerance: 1e-6, passed: rel <= 1e-6 });
    }
    let t = 1e-3;
    let fd = (momentum(&u.axpy(t, &v), &x) - momentum(&u.axpy(-t, &v), &x)) / (2.0 * t);
    let an = grad_momentum(&u, &x).dot(&v);
    let rel = (fd - an).abs() / an.abs();
    out.push(GradientCheck { name: "grad_momentum".into(), relative_error: rel, tolerance: 1e-8, passed: rel <= 1e-8 });
    Ok(out)
}

pub fn subadd_suite(draws: usize, seed: u64) -> SuiteResult {
    let mut violations = 0;
    let mut rejected = 0;
    let mut min_slack = f64::INFINITY;
    for (a, b, s, delta) in random_subadd_inputs(draws, seed) {
        match subadd_check(a, b, s, delta) {
            Ok(o) => {
                violations += usize::from(!o.holds);
                min_slack = min_slack.min(o.slack);
            }
            Err(_) => rejected += 1,
        }
    }
    SuiteResult { name: "subadd".into(), draws, violations, rejected, min_slack, passed: violations == 0 && rejected == 0 }
}

pub fn series_suite(draws: usize, rows: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut rejected = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..draws {
        let (m, s, delta, cm, cp) = random_series_input(rows, rng.gen());
        match series_check(&m, s, delta, cm, cp) {
            Ok(o) => {
                violations += usize::from(!o.holds);
                min_slack = min_slack.min(o.min_slack);
            }
            Err(_) => rejected += 1,
        }
    }
    SuiteResult { name: "series".into(), draws, violations, rejected, min_slack, passed: violations == 0 && rejected == 0 }
}

pub fn check_lemmas(ctx: &Ctx) -> Result<LemmaReport> {
    let l = &ctx.cfg.lemmas;
    let suites = vec![subadd_suite(l.subadd_draws, ctx.cfg.seed), series_suite(l.series_draws, l.series_rows, ctx.cfg.seed)];
    let gradients = gradient_checks(ctx)?;
    let passed = suites.iter().all(|s| s.passed) && gradients.iter().all(|g| g.passed);
    Ok(LemmaReport { suites, gradients, passed, meta: ctx.meta() })
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub component: usize,
    pub seed: Point,
    pub r: f64,
    pub eps: f64,
    pub ansatz_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_energy: f64,
    pub energy_bound: f64,
    pub lambda_tilde: f64,
    pub best_lambda: f64,
    pub residual_rel: f64,
    pub norm: f64,
    pub barycenter: Option<BarycenterRecord>,
    pub barycenter_error: Option<String>,
    pub passed: bool,
    #[serde(skip)]
    pub u: ComplexField,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Separation {
    pub a: usize,
    pub b: usize,
    /// `||u_a - u_b|| / max(||u_a||, ||u_b||)`.
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityReport {
    pub phi: f64,
    pub alpha: AlphaFit,
    pub cat_sigma: usize,
    pub points: Vec<CriticalPoint>,
    pub separations: Vec<Separation>,
    pub distinct_components: usize,
    pub gaps: Vec<GapRecord>,
    pub verdict: bool,
    pub meta: Meta,
}

/// Residual bound for a converged critical point.
pub const RESIDUAL_MAX: f64 = 1e-3;
/// Smallest relative L2 distance between distinct critical points.
pub const SEPARATION_MIN: f64 = 0.1;

fn critical_point(ctx: &Ctx, x: &VelocityField, c: f64, component: usize, p: Point, phi: f64, eps: Option<EpsSpec>) -> Result<CriticalPoint> {
    let (u0, rec) = ansatz_run(ctx, x, 1.0, p, phi, eps)?;
    let (u, m) = minimize_run(ctx, x, &u0, phi, rec.eps)?;
    let (barycenter, barycenter_error) = match barycenter_of(ctx, x, &u, phi, rec.eps) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let r = &m.report;
    let passed = r.converged && r.residual_rel <= RESIDUAL_MAX && r.final_energy <= c;
    Ok(CriticalPoint {
        component,
        seed: rec.p,
        r: rec.r,
        eps: rec.eps,
        ansatz_energy: rec.energy.total,
        converged: r.converged,
        iterations: r.iterations,
        final_energy: r.final_energy,
        energy_bound: c,
        lambda_tilde: r.lambda_tilde,
        best_lambda: r.best_lambda,
        residual_rel: r.residual_rel,
        norm: u.norm(),
        barycenter,
        barycenter_error,
        passed,
        u,
    })
}

/// Σ points spread over the extracted list by index.
pub fn sample_sigma(x: &VelocityField, count: usize) -> Vec<Point> {
    let pts = x.sigma().points();
    if pts.is_empty() {
        return Vec::new();
    }
    let count = count.min(pts.len());
    (0..count).map(|k| pts[k * pts.len() / count]).collect()
}

/// One minimizer seeded at each Σ component, checked for convergence,
/// energy, separation and barycenter component. With `gap_samples > 0`
/// also minimizes from that many Σ points and measures homotopy gaps.
pub fn multiplicity(ctx: &Ctx, x: &VelocityField, phi: f64, eps: Option<EpsSpec>, gap_samples: usize) -> Result<MultiplicityReport> {
    let alpha = resolve_alpha(ctx, x)?;
    let c = sublevel_c(phi, alpha.alpha);
    let reps = x.sigma().representatives();
    let points = reps
        .par_iter()
        .enumerate()
        .map(|(k, p)| critical_point(ctx, x, c, k, *p, phi, eps))
        .collect::<Result<Vec<_>>>()?;
    let mut separations = Vec::new();
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = points[a].u.sub(&points[b].u).norm();
            separations.push(Separation { a, b, relative: d / points[a].norm.max(points[b].norm) });
        }
    }
    let mut comps: Vec<usize> = points.iter().filter_map(|p| p.barycenter.as_ref().map(|b| b.component)).collect();
    comps.sort_unstable();
    comps.dedup();
    let distinct_components = comps.len();
    let gaps = sample_sigma(x, gap_samples)
        .par_iter()
        .map(|p| {
            let cp = critical_point(ctx, x, c, x.sigma().component_of(p), *p, phi, eps)?;
            gap_of(ctx, x, &cp.u, phi, cp.eps, &cp.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = points.iter().all(|p| p.passed)
        && separations.iter().all(|s| s.relative >= SEPARATION_MIN)
        && distinct_components == x.sigma().component_count()
        && points.len() == x.sigma().component_count()
        && gaps.iter().all(|g| g.passed);
    Ok(MultiplicityReport {
        phi,
        alpha,
        cat_sigma: x.sigma().component_count(),
        points,
        separations,
        distinct_components,
        gaps,
        verdict,
        meta: ctx.meta(),
    })
}

impl MultiplicityReport {
    pub const HEADER: &'static str = "component,seed_x,seed_y,seed_z,r,eps,converged,iterations,final_energy,energy_bound,best_lambda,residual_rel,barycenter_x,barycenter_y,barycenter_z,barycenter_component,dist_to_sigma,concentration,passed\n";

    /// The verdict table.
    pub fn table_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        for p in &self.points {
            let b = p.barycenter.as_ref().map_or(",,,,,".to_string(), |b| {
                format!(
                    "{},{},{},{},{},{}",
                    b.intrinsic.0[0], b.intrinsic.0[1], b.intrinsic.0[2], b.component, b.dist_to_sigma, b.concentration
                )
            });
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{b},{}\n",
                p.component,
                p.seed.0[0],
                p.seed.0[1],
                p.seed.0[2],
                p.r,
                p.eps,
                p.converged,
                p.iterations,
                p.final_energy,
                p.energy_bound,
                p.best_lambda,
                p.residual_rel,
                p.passed
            ));
        }
        s
    }
}

/// Reads the metadata record written next to a field file, if any.
pub fn sidecar(path: &Path) -> Option<serde_json::Value> {
    let text = std::fs::read_to_string(path.with_extension("jsonl")).ok()?;
    serde_json::from_str(text.lines().last()?).ok()
}
