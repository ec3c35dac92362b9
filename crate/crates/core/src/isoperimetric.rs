//! Closed polygonal vortex loops: length, circulation of `A`, flux-constrained
//! length minimization and the elementary subadditivity inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::photography::{orthonormal_frame, GAMMA2};
use crate::torus::{Point, TorusGrid};
use crate::velocity::{dist_to_sigma, sym_eigen3, FieldSampler, SigmaSet};

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

/// A closed polygon on the torus; the last vertex connects to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct VortexLoop {
    vertices: Vec<Point>,
    lengths: V3,
}

impl VortexLoop {
    pub fn new(vertices: Vec<Point>, lengths: V3) -> Result<Self> {
        let grid = torus(lengths)?;
        if vertices.len() < 8 {
            return Err(GpxError::InvalidLoop(format!("{} vertices, need at least 8", vertices.len())));
        }
        let vertices: Vec<Point> = vertices.iter().map(|p| grid.wrap(p.0)).collect();
        let lp = VortexLoop { vertices, lengths };
        let limit = lengths.iter().cloned().fold(f64::INFINITY, f64::min) / 4.0;
        for (i, e) in lp.edges().iter().enumerate() {
            let l = norm(*e);
            if !(l > 1e-9) {
                return Err(GpxError::DegenerateEdge(i));
            }
            if l >= limit {
                return Err(GpxError::InvalidLoop(format!("edge {i} has length {l} >= {limit}")));
            }
        }
        let closure = lp.edges().iter().fold([0.0; 3], |acc, e| add(acc, *e));
        if norm(closure) > 1e-9 * limit {
            return Err(GpxError::InvalidLoop("loop winds around the torus".into()));
        }
        Ok(lp)
    }

    /// Regular `n`-gon inscribed in the circle of `radius` around `center`,
    /// oriented counterclockwise about `normal`.
    pub fn circle(center: Point, normal: V3, radius: f64, n: usize, lengths: V3) -> Result<Self> {
        Self::ellipse(center, normal, radius, radius, n, lengths)
    }

    pub fn ellipse(center: Point, normal: V3, a: f64, b: f64, n: usize, lengths: V3) -> Result<Self> {
        let [_, e2, e3] = orthonormal_frame(normal)?;
        let verts = (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                Point(add(center.0, add(scale(e2, a * th.cos()), scale(e3, b * th.sin()))))
            })
            .collect();
        Self::new(verts, lengths)
    }

    fn from_unwrapped(y: &[V3], lengths: V3) -> Result<Self> {
        Self::new(y.iter().map(|&v| Point(v)).collect(), lengths)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn lengths(&self) -> V3 {
        self.lengths
    }

    fn grid(&self) -> TorusGrid {
        torus(self.lengths).expect("validated at construction")
    }

    /// Minimum-image edge vectors.
    pub fn edges(&self) -> Vec<V3> {
        let g = self.grid();
        let n = self.vertices.len();
        (0..n).map(|i| g.min_image(&self.vertices[i], &self.vertices[(i + 1) % n]).0).collect()
    }

    /// Vertex positions lifted to `R^3` starting from the first vertex.
    pub fn unwrapped(&self) -> Vec<V3> {
        let mut y = Vec::with_capacity(self.len());
        let mut cur = self.vertices[0].0;
        for e in self.edges() {
            y.push(cur);
            cur = add(cur, e);
        }
        y
    }

    pub fn centroid(&self) -> Point {
        let y = self.unwrapped();
        let n = y.len() as f64;
        let s = y.iter().fold([0.0; 3], |acc, v| add(acc, *v));
        self.grid().wrap(scale(s, 1.0 / n))
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        VortexLoop { vertices: v, lengths: self.lengths }
    }

    pub fn translated(&self, shift: V3) -> Self {
        let g = self.grid();
        VortexLoop { vertices: self.vertices.iter().map(|p| g.wrap(add(p.0, shift))).collect(), lengths: self.lengths }
    }

    /// Same polygon listed from vertex `k`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut v = self.vertices.clone();
        let n = v.len();
        v.rotate_left(k % n);
        VortexLoop { vertices: v, lengths: self.lengths }
    }
}

fn torus(lengths: V3) -> Result<TorusGrid> {
    // Only lengths matter for wrapping and minimum images.
    TorusGrid::new([16, 16, 16], lengths)
}

fn check_edges(edges: &[V3]) -> Result<()> {
    match edges.iter().position(|e| !(norm(*e) > 1e-9)) {
        Some(i) => Err(GpxError::DegenerateEdge(i)),
        None => Ok(()),
    }
}

/// Sum of the minimum-image edge lengths.
pub fn loop_mass(lp: &VortexLoop) -> Result<f64> {
    let e = lp.edges();
    check_edges(&e)?;
    Ok(mass_of(&e))
}

fn mass_of(edges: &[V3]) -> f64 {
    edges.iter().map(|e| norm(*e)).sum()
}

fn potential_at(x: &dyn FieldSampler, p: V3) -> Result<V3> {
    x.potential(p).ok_or_else(|| GpxError::InvalidField("field has no vector potential".into()))
}

/// Circulation `sum_i A(m_i) . e_i` of the vector potential, midpoint rule.
pub fn loop_flux(lp: &VortexLoop, x: &dyn FieldSampler) -> Result<f64> {
    let y = lp.unwrapped();
    check_edges(&lp.edges())?;
    flux_of(&y, x)
}

fn flux_of(y: &[V3], x: &dyn FieldSampler) -> Result<f64> {
    let e = edges_of(y);
    let terms: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let e = e[i];
            let m = add(y[i], scale(e, 0.5));
            potential_at(x, m).map(|a| dot(a, e))
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

fn edges_of(y: &[V3]) -> Vec<V3> {
    let n = y.len();
    (0..n).map(|i| sub(y[(i + 1) % n], y[i])).collect()
}

fn mass_gradient(y: &[V3]) -> Vec<V3> {
    let e = edges_of(y);
    let n = y.len();
    (0..n)
        .map(|k| {
            let prev = e[(k + n - 1) % n];
            let next = e[k];
            sub(scale(prev, 1.0 / norm(prev)), scale(next, 1.0 / norm(next)))
        })
        .collect()
}

/// Exact derivative of the midpoint circulation, with the Jacobian of `A`
/// by central differences.
fn flux_gradient(y: &[V3], x: &dyn FieldSampler) -> Result<Vec<V3>> {
    let e = edges_of(y);
    let n = y.len();
    let lmin = x.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let step = 1e-6 * lmin;
    // Per edge: A(m) and grad(A . e) at m.
    let per_edge: Vec<(V3, V3)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let m = add(y[i], scale(e[i], 0.5));
            let a = potential_at(x, m)?;
            let mut g = [0.0; 3];
            for ax in 0..3 {
                let mut d = [0.0; 3];
                d[ax] = step;
                let ap = potential_at(x, add(m, d))?;
                let am = potential_at(x, sub(m, d))?;
                g[ax] = (dot(ap, e[i]) - dot(am, e[i])) / (2.0 * step);
            }
            Ok((a, g))
        })
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|k| {
            let (a_next, g_next) = per_edge[k];
            let (a_prev, g_prev) = per_edge[(k + n - 1) % n];
            add(sub(a_prev, a_next), scale(add(g_next, g_prev), 0.5))
        })
        .collect())
}

/// Centroid and unit normal of the best-fit plane.
fn best_plane(y: &[V3]) -> (V3, V3) {
    let n = y.len() as f64;
    let c = scale(y.iter().fold([0.0; 3], |acc, v| add(acc, *v)), 1.0 / n);
    let mut cov = [[0.0; 3]; 3];
    for v in y {
        let d = sub(*v, c);
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    let (vals, vecs) = sym_eigen3(cov);
    let mut k = 0;
    for i in 1..3 {
        if vals[i] < vals[k] {
            k = i;
        }
    }
    (c, [vecs[0][k], vecs[1][k], vecs[2][k]])
}

fn dilate(y: &[V3], c: V3, nrm: V3, s: f64) -> Vec<V3> {
    y.iter()
        .map(|v| {
            let d = sub(*v, c);
            let h = dot(d, nrm);
            let inplane = sub(d, scale(nrm, h));
            add(c, add(scale(inplane, s), scale(nrm, h)))
        })
        .collect()
}

/// Illinois false position on a bracketing pair.
fn illinois(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64, tol: f64) -> Result<(f64, f64)> {
    let mut side = 0;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc.abs() <= tol || (b - a).abs() <= 1e-15 * b.abs() {
            return Ok(best);
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
    Ok(best)
}

/// Scales `y` about its centroid within its best-fit plane until the flux is `phi`.
fn restore_flux(y: &[V3], phi: f64, x: &dyn FieldSampler, tol: f64) -> Result<(Vec<V3>, f64)> {
    let f0 = flux_of(y, x)?;
    if (f0 - phi).abs() <= tol {
        return Ok((y.to_vec(), f0));
    }
    if !(f0 > 0.0) {
        return Err(GpxError::FluxUnreachable { phi, seed: f0 });
    }
    let (c, nrm) = best_plane(y);
    let f = |s: f64| -> Result<f64> { Ok(flux_of(&dilate(y, c, nrm, s), x)? - phi) };
    let mut a = (phi / f0).sqrt();
    let mut fa = f(a)?;
    let mut b = a;
    let mut fb = fa;
    let mut bracketed = fa == 0.0;
    for _ in 0..80 {
        if bracketed {
            break;
        }
        let grow = if fb < 0.0 { 1.05 } else { 1.0 / 1.05 };
        a = b;
        fa = fb;
        b *= grow;
        fb = f(b)?;
        bracketed = fa.signum() != fb.signum() || fb == 0.0;
    }
    if !bracketed {
        return Err(GpxError::FluxUnreachable { phi, seed: f0 });
    }
    let (s, fs) = if fa == 0.0 { (a, 0.0) } else { illinois(&f, a, fa, b, fb, tol)? };
    Ok((dilate(y, c, nrm, s), fs + phi))
}

/// Drops the component of each vertex vector along the local chord tangent.
fn normal_part(y: &[V3], g: &[V3]) -> Vec<V3> {
    let n = y.len();
    (0..n)
        .map(|k| {
            let t = sub(y[(k + 1) % n], y[(k + n - 1) % n]);
            let t = scale(t, 1.0 / norm(t));
            sub(g[k], scale(t, dot(g[k], t)))
        })
        .collect()
}

/// Ratio of the longest to the shortest edge.
fn edge_spread(y: &[V3]) -> f64 {
    let lens: Vec<f64> = edges_of(y).iter().map(|v| norm(*v)).collect();
    let mx = lens.iter().cloned().fold(0.0, f64::max);
    let mn = lens.iter().cloned().fold(f64::INFINITY, f64::min);
    mx / mn
}

/// Redistributes the vertices uniformly in arc length along the polygon.
fn resample(y: &[V3]) -> Vec<V3> {
    let e = edges_of(y);
    let n = y.len();
    let lens: Vec<f64> = e.iter().map(|v| norm(*v)).collect();
    let total: f64 = lens.iter().sum();
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut start = 0.0;
    for k in 0..n {
        let target = k as f64 * step;
        while seg + 1 < n && start + lens[seg] < target {
            start += lens[seg];
            seg += 1;
        }
        let t = ((target - start) / lens[seg]).clamp(0.0, 1.0);
        out.push(add(y[seg], scale(e[seg], t)));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LoopConfig {
    /// Projected vertex-gradient infinity norm at convergence.
    pub tol: f64,
    pub max_iters: usize,
    pub resample_every: usize,
    pub c1: f64,
    /// Flux restoration tolerance relative to `phi`.
    pub flux_tol: f64,
    /// Vertices of generated seed loops.
    pub vertices: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { tol: 1e-5, max_iters: 20_000, resample_every: 100, c1: 1e-4, flux_tol: 1e-12, vertices: 64 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopResult {
    #[serde(skip)]
    pub lp: VortexLoop,
    pub mass: f64,
    pub flux: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub resamples: usize,
    /// Largest relative mass change caused by one resampling.
    pub resample_perturbation: f64,
    pub flux_drift_max: f64,
}

/// Minimizes length at fixed flux `phi` from the seed loop `l0`.
pub fn minimize_loop(l0: &VortexLoop, phi: f64, x: &dyn FieldSampler, cfg: &LoopConfig) -> Result<LoopResult> {
    let lengths = l0.lengths();
    let f0 = loop_flux(l0, x)?;
    if !(phi > 0.0) || !(f0 > 0.25 * phi && f0 < 4.0 * phi) {
        return Err(GpxError::FluxUnreachable { phi, seed: f0 });
    }
    let tol = cfg.flux_tol * phi;
    let (mut y, mut flux) = restore_flux(&l0.unwrapped(), phi, x, tol)?;
    let mut mass = mass_of(&edges_of(&y));
    let mut drift: f64 = (flux - phi).abs();
    let mut iters = 0;
    let mut resamples = 0;
    let mut perturb: f64 = 0.0;
    let mut prev: Option<(Vec<V3>, Vec<V3>)> = None;
    let mut step = f64::NAN;
    loop {
        let gm = mass_gradient(&y);
        let gf = flux_gradient(&y, x)?;
        let ff: f64 = gf.iter().map(|v| dot(*v, *v)).sum();
        let lambda = if ff > 0.0 { gm.iter().zip(&gf).map(|(a, b)| dot(*a, *b)).sum::<f64>() / ff } else { 0.0 };
        let g: Vec<V3> = gm.iter().zip(&gf).map(|(a, b)| sub(*a, scale(*b, lambda))).collect();
        let g = normal_part(&y, &g);
        let ginf = g.iter().flat_map(|v| v.iter()).fold(0.0_f64, |m, c| m.max(c.abs()));
        if ginf <= cfg.tol {
            return Ok(LoopResult {
                lp: VortexLoop::from_unwrapped(&y, lengths)?,
                mass,
                flux,
                lambda,
                iterations: iters,
                projected_gradient: ginf,
                resamples,
                resample_perturbation: perturb,
                flux_drift_max: drift,
            });
        }
        if iters >= cfg.max_iters {
            return Err(GpxError::MaxIters(iters));
        }
        let gg: f64 = g.iter().map(|v| dot(*v, *v)).sum();
        // Barzilai-Borwein step from the last accepted pair.
        let mean_edge = mass / y.len() as f64;
        let mut t = match &prev {
            Some((py, pg)) => {
                let (mut sy, mut ss) = (0.0, 0.0);
                for i in 0..y.len() {
                    let s = sub(y[i], py[i]);
                    let d = sub(g[i], pg[i]);
                    sy += dot(s, d);
                    ss += dot(s, s);
                }
                if sy > 0.0 { ss / sy } else { step * 2.0 }
            }
            None => 0.1 * mean_edge / ginf,
        };
        t = t.min(0.5 * mean_edge / ginf);
        let mut accepted = None;
        while t * ginf > 1e-15 * mean_edge {
            let trial: Vec<V3> = y.iter().zip(&g).map(|(v, d)| sub(*v, scale(*d, t))).collect();
            if let Ok((ty, tf)) = restore_flux(&trial, phi, x, tol) {
                let tm = mass_of(&edges_of(&ty));
                if tm <= mass - cfg.c1 * t * gg {
                    accepted = Some((ty, tf, tm));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((ny, nf, nm)) = accepted else {
            return Err(GpxError::LineSearchStalled(t));
        };
        prev = Some((y, g));
        step = t;
        y = ny;
        flux = nf;
        mass = nm;
        drift = drift.max((flux - phi).abs());
        iters += 1;
        if cfg.resample_every > 0 && iters % cfg.resample_every == 0 && edge_spread(&y) > 1.5 {
            let (ry, rf) = restore_flux(&resample(&y), phi, x, tol)?;
            let rm = mass_of(&edges_of(&ry));
            perturb = perturb.max((rm - mass).abs() / mass);
            y = ry;
            flux = rf;
            mass = rm;
            resamples += 1;
            prev = None;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JmRow {
    pub phi: f64,
    pub best_mass: f64,
    /// `best_mass / (gamma_2 sqrt(phi))`.
    pub ratio: f64,
    pub centroid: Point,
    pub dist_to_sigma: Option<f64>,
    pub best_seed: usize,
    pub converged_seeds: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct JmTable {
    pub rows: Vec<JmRow>,
    /// Slope of `log best_mass` against `log phi`.
    pub exponent: f64,
    /// `exp` of the intercept of the same fit.
    pub prefactor: f64,
    #[serde(skip)]
    pub best_loops: Vec<VortexLoop>,
}

/// Random seed centers where `|X| >= min_speed`, drawn uniformly by rejection.
pub fn seed_points(x: &dyn FieldSampler, count: usize, min_speed: f64, rng_seed: u64) -> Result<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let l = x.lengths();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 1_000_000 {
            return Err(GpxError::InvalidField(format!("no seed point with |X| >= {min_speed}")));
        }
        let p = [rng.gen_range(0.0..l[0]), rng.gen_range(0.0..l[1]), rng.gen_range(0.0..l[2])];
        if norm(x.velocity(p)) >= min_speed {
            out.push(Point(p));
        }
    }
    Ok(out)
}

/// Circle through `p` orthogonal to `X(p)` enclosing flux about `phi`.
pub fn seed_loop(p: Point, phi: f64, x: &dyn FieldSampler, vertices: usize) -> Result<VortexLoop> {
    let v = x.velocity(p.0);
    let r = (phi / (std::f64::consts::PI * norm(v))).sqrt();
    VortexLoop::circle(p, v, r, vertices, x.lengths())
}

/// Least-squares slope and intercept of `y` against `x`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Minimizes from every seed at flux `phi` and keeps the shortest loop.
/// Fails only when no seed converges.
pub fn best_loop(
    phi: f64,
    x: &dyn FieldSampler,
    sigma: Option<&SigmaSet>,
    seeds: &[Point],
    cfg: &LoopConfig,
) -> Result<(JmRow, VortexLoop)> {
    if seeds.is_empty() {
        return Err(GpxError::Validation { key: "seeds".into(), msg: "at least one seed".into() });
    }
    let results: Vec<Result<LoopResult>> =
        seeds.par_iter().map(|p| minimize_loop(&seed_loop(*p, phi, x, cfg.vertices)?, phi, x, cfg)).collect();
    let mut best: Option<(usize, LoopResult)> = None;
    let mut ok = 0;
    let mut last_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                ok += 1;
                if best.as_ref().map_or(true, |(_, b)| r.mass < b.mass) {
                    best = Some((i, r));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((seed, res)) = best else {
        return Err(last_err.expect("at least one seed"));
    };
    let centroid = res.lp.centroid();
    let row = JmRow {
        phi,
        best_mass: res.mass,
        ratio: res.mass / (GAMMA2 * phi.sqrt()),
        centroid,
        dist_to_sigma: sigma.map(|s| dist_to_sigma(&centroid, s)),
        best_seed: seed,
        converged_seeds: ok,
    };
    Ok((row, res.lp))
}

/// Best minimized loop over `seeds` for each flux, and the power-law fit.
pub fn jm_table(
    phi_list: &[f64],
    x: &dyn FieldSampler,
    sigma: Option<&SigmaSet>,
    seeds: &[Point],
    cfg: &LoopConfig,
) -> Result<JmTable> {
    let lo = phi_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phi_list.iter().cloned().fold(0.0, f64::max);
    if phi_list.len() < 2 || !(lo > 0.0) || hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(GpxError::Validation { key: "phi_list".into(), msg: "fluxes must be positive and span a decade".into() });
    }
    if seeds.is_empty() {
        return Err(GpxError::Validation { key: "seeds".into(), msg: "at least one seed".into() });
    }
    let mut rows = Vec::new();
    let mut best_loops = Vec::new();
    for &phi in phi_list {
        let (row, lp) = best_loop(phi, x, sigma, seeds, cfg)?;
        rows.push(row);
        best_loops.push(lp);
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.phi.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.best_mass.ln()).collect();
    let (exponent, icept) = linear_fit(&lx, &ly);
    Ok(JmTable { rows, exponent, prefactor: icept.exp(), best_loops })
}

/// `loop_id,vertex_index,x,y,z` rows with a header.
pub fn loops_to_csv(loops: &[VortexLoop]) -> String {
    let mut s = String::from("loop_id,vertex_index,x,y,z\n");
    for (id, lp) in loops.iter().enumerate() {
        for (k, p) in lp.vertices().iter().enumerate() {
            s.push_str(&format!("{id},{k},{},{},{}\n", p.0[0], p.0[1], p.0[2]));
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitPenalty {
    pub split_fraction: f64,
    pub mass_single: f64,
    pub mass_split: f64,
    /// `(mass_split - mass_single) / mass_single`.
    pub penalty: f64,
}

/// Cost of carrying `phi` on two independent loops with fluxes `a phi` and
/// `(1 - a) phi` instead of one.
pub fn splitting_penalty(phi: f64, a: f64, x: &dyn FieldSampler, center: Point, cfg: &LoopConfig) -> Result<SplitPenalty> {
    if !(a > 0.0 && a < 1.0) {
        return Err(GpxError::Validation { key: "split_fraction".into(), msg: format!("{a} outside (0, 1)") });
    }
    let run = |f: f64| -> Result<f64> { Ok(minimize_loop(&seed_loop(center, f, x, cfg.vertices)?, f, x, cfg)?.mass) };
    let single = run(phi)?;
    let split = run(a * phi)? + run((1.0 - a) * phi)?;
    Ok(SplitPenalty { split_fraction: a, mass_single: single, mass_split: split, penalty: (split - single) / single })
}

/// Both sides of `a^s + b^s >= c^s + s(1-s) c^(s-2) delta^2`, `c = a + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubaddOutcome {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn subadd_check(a: f64, b: f64, s: f64, delta: f64) -> Result<SubaddOutcome> {
    let c = a + b;
    let bad = |m: String| Err(GpxError::HypothesisViolated(m));
    if !(a > 0.0 && b > 0.0) {
        return bad(format!("a = {a}, b = {b} must be positive"));
    }
    if !(s > 0.0 && s < 1.0) {
        return bad(format!("s = {s} outside (0, 1)"));
    }
    if !(delta > 0.0 && delta <= c / 2.0) {
        return bad(format!("delta = {delta} outside (0, c/2]"));
    }
    if !(a >= delta && a <= c - delta) {
        return bad(format!("a = {a} outside [delta, c - delta]"));
    }
    let lhs = a.powf(s) + b.powf(s);
    let rhs = c.powf(s) + s * (1.0 - s) * c.powf(s - 2.0) * delta * delta;
    Ok(SubaddOutcome { holds: lhs >= rhs, lhs, rhs, slack: lhs - rhs })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesOutcome {
    pub holds: bool,
    /// First row violating the conclusion.
    pub witness: Option<usize>,
    pub min_slack: f64,
}

/// Checks `sum_m a_m^s >= c_-^s + s(1-s) c_+^(s-2) delta^2` row by row.
///
/// Every row must have nonnegative entries, sum in `[c_-, c_+]` and largest
/// entry at most `1 - delta`. Requires `1 <= c_- <= c_+` and `delta in (0, 1/2]`.
pub fn series_check(rows: &[Vec<f64>], s: f64, delta: f64, c_minus: f64, c_plus: f64) -> Result<SeriesOutcome> {
    let bad = |m: String| Err(GpxError::HypothesisViolated(m));
    if !(s > 0.0 && s < 1.0) {
        return bad(format!("s = {s} outside (0, 1)"));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return bad(format!("delta = {delta} outside (0, 1/2]"));
    }
    if !(c_minus >= 1.0 && c_minus <= c_plus) {
        return bad(format!("need 1 <= c_- <= c_+, got {c_minus}, {c_plus}"));
    }
    let rhs = c_minus.powf(s) + s * (1.0 - s) * c_plus.powf(s - 2.0) * delta * delta;
    let mut min_slack = f64::INFINITY;
    let mut witness = None;
    for (n, row) in rows.iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0)) {
            return bad(format!("row {n} has a negative entry"));
        }
        let sum: f64 = row.iter().sum();
        let slop = 1e-12 * c_plus;
        if sum < c_minus - slop || sum > c_plus + slop {
            return bad(format!("row {n} sums to {sum}, outside [{c_minus}, {c_plus}]"));
        }
        let top = row.iter().cloned().fold(0.0, f64::max);
        if top > 1.0 - delta {
            return bad(format!("row {n} has an entry {top} > 1 - delta"));
        }
        let lhs: f64 = row.iter().map(|v| v.powf(s)).sum();
        let slack = lhs - rhs;
        if slack < min_slack {
            min_slack = slack;
        }
        if slack < 0.0 && witness.is_none() {
            witness = Some(n);
        }
    }
    Ok(SeriesOutcome { holds: witness.is_none(), witness, min_slack })
}

/// Admissible random inputs for [`subadd_check`]: `(a, b, s, delta)`.
pub fn random_subadd_inputs(count: usize, seed: u64) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = 10f64.powf(rng.gen_range(-3.0..3.0));
            let delta = c / 2.0 * rng.gen_range(1e-6..1.0);
            let a = rng.gen_range(delta..=c - delta);
            let s = rng.gen_range(1e-3..1.0 - 1e-3);
            (a, c - a, s, delta)
        })
        .collect()
}

/// Admissible random matrices for [`series_check`]: rows, `s`, `delta`, `c_-`, `c_+`.
pub fn random_series_input(rows: usize, seed: u64) -> (Vec<Vec<f64>>, f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.gen_range(0.05..0.95);
    let delta = rng.gen_range(0.01..0.5);
    let c_minus = rng.gen_range(1.0..2.0);
    let c_plus = c_minus + rng.gen_range(0.0..2.0);
    let mut out = Vec::with_capacity(rows);
    while out.len() < rows {
        let k = rng.gen_range(2..12);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let sum = rng.gen_range(c_minus..=c_plus);
        let row: Vec<f64> = raw.iter().map(|v| v / total * sum).collect();
        let rs: f64 = row.iter().sum();
        if rs >= c_minus && rs <= c_plus && row.iter().all(|&v| v <= 1.0 - delta) {
            out.push(row);
        }
    }
    (out, s, delta, c_minus, c_plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photography::disk_radius;
    use crate::velocity::UniformField;
    use proptest::{prop_assert, proptest};
    use std::f64::consts::PI;

    const L: V3 = [1.0, 1.0, 1.0];

    fn uniform() -> UniformField {
        UniformField::new(L, [1.0, 0.0, 0.0], [0.5, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn regular_polygon_perimeter() {
        let r = 0.1;
        let lp = VortexLoop::circle(Point::new(0.5, 0.5, 0.5), [0.0, 0.0, 1.0], r, 64, L).unwrap();
        let want = 64.0 * 2.0 * r * (PI / 64.0).sin();
        assert!((loop_mass(&lp).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn inscribed_perimeter_increases_with_vertices() {
        let r = 0.1;
        let mut last = 0.0;
        for n in [8, 16, 32, 64, 128, 256] {
            let m = loop_mass(&VortexLoop::circle(Point::new(0.02, 0.5, 0.97), [0.3, 0.1, 1.0], r, n, L).unwrap()).unwrap();
            assert!(m > last && m < 2.0 * PI * r);
            last = m;
        }
    }

    #[test]
    fn loop_validation() {
        let p = |x: f64| Point::new(x, 0.5, 0.5);
        assert!(matches!(VortexLoop::new((0..4).map(|i| p(0.1 * i as f64)).collect(), L), Err(GpxError::InvalidLoop(_))));
        let mut v: Vec<Point> = VortexLoop::circle(p(0.5), [0.0, 0.0, 1.0], 0.1, 8, L).unwrap().vertices().to_vec();
        v[3] = v[2];
        assert!(matches!(VortexLoop::new(v, L), Err(GpxError::DegenerateEdge(2))));
        // A straight line around the torus does not bound.
        let line: Vec<Point> = (0..8).map(|i| p(i as f64 / 8.0)).collect();
        assert!(matches!(VortexLoop::new(line, L), Err(GpxError::InvalidLoop(_))));
    }

    #[test]
    fn uniform_circle_flux_is_disk_area() {
        let r = 0.1;
        let lp = VortexLoop::circle(Point::new(0.5, 0.5, 0.5), [1.0, 0.0, 0.0], r, 128, L).unwrap();
        let f = loop_flux(&lp, &uniform()).unwrap();
        assert!((f - PI * r * r).abs() <= 5e-3 * PI * r * r, "{f}");
        // Reversal negates every term; only the summation order changes.
        assert!((loop_flux(&lp.reversed(), &uniform()).unwrap() + f).abs() <= 1e-15 * f);
    }

    #[test]
    fn flux_is_periodic_in_translation() {
        let g = TorusGrid::<f64>::cubic(32, 2.0).unwrap();
        let x = crate::velocity::VelocityField::two_bumps(
            g,
            Point::new(0.5, 1.0, 1.0),
            Point::new(1.5, 1.0, 1.0),
            0.24,
            &crate::velocity::SigmaParams::default(),
        )
        .unwrap();
        let p = x.sigma().points()[0];
        let lp = seed_loop(p, 1e-3, &x, 64).unwrap();
        let f = loop_flux(&lp, &x).unwrap();
        assert!(f > 0.0);
        let moved = lp.translated([2.0, -2.0, 4.0]);
        assert!((loop_flux(&moved, &x).unwrap() - f).abs() <= 1e-12 * f.abs().max(1e-3));
        // Circulation is additive over edges: two copies read twice the flux.
        let other = lp.translated([0.0, 0.0, 0.0]);
        assert!((loop_flux(&lp, &x).unwrap() + loop_flux(&other, &x).unwrap() - 2.0 * f).abs() <= 1e-15);
    }

    #[test]
    fn flux_gradient_matches_finite_differences() {
        let g = TorusGrid::<f64>::cubic(32, 2.0).unwrap();
        let x = crate::velocity::VelocityField::single_bump(g, Point::new(1.0, 1.0, 1.0), 0.24, &Default::default()).unwrap();
        let lp = VortexLoop::ellipse(Point::new(1.0, 1.1, 0.95), [0.2, 1.0, 0.3], 0.15, 0.1, 24, [2.0; 3]).unwrap();
        let y = lp.unwrapped();
        let gf = flux_gradient(&y, &x).unwrap();
        let gm = mass_gradient(&y);
        let h = 1e-6;
        for k in [0, 5, 17] {
            for a in 0..3 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k][a] += h;
                ym[k][a] -= h;
                let df = (flux_of(&yp, &x).unwrap() - flux_of(&ym, &x).unwrap()) / (2.0 * h);
                let dm = (mass_of(&edges_of(&yp)) - mass_of(&edges_of(&ym))) / (2.0 * h);
                assert!((df - gf[k][a]).abs() <= 1e-6 * (1.0 + df.abs()), "{df} vs {}", gf[k][a]);
                assert!((dm - gm[k][a]).abs() <= 1e-7, "{dm} vs {}", gm[k][a]);
            }
        }
    }

    #[test]
    fn ellipse_relaxes_to_circle() {
        let x = uniform();
        let r = 0.08;
        let phi = PI * r * r;
        let seed = VortexLoop::ellipse(Point::new(0.5, 0.5, 0.5), [1.0, 0.0, 0.0], 1.4 * r, r / 1.4, 64, L).unwrap();
        let res = minimize_loop(&seed, phi, &x, &LoopConfig::default()).unwrap();
        assert!((res.flux - phi).abs() <= 1e-8 * phi);
        assert!(res.flux_drift_max <= 1e-8 * phi);
        assert!((res.mass - 2.0 * PI * r).abs() <= 0.01 * 2.0 * PI * r, "{res:?}");
        let c = res.lp.centroid();
        let g = TorusGrid::<f64>::cubic(16, 1.0).unwrap();
        let radii: Vec<f64> = res.lp.vertices().iter().map(|v| {
            let (d, _) = g.min_image(&c, v);
            (d[1] * d[1] + d[2] * d[2]).sqrt()
        }).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        let sd = (radii.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / radii.len() as f64).sqrt();
        assert!(sd <= 1e-3 * r, "{sd}");
        // The optimum circle matches the photography disk.
        let d = disk_radius(&Point::new(0.5, 0.5, 0.5), phi, &x).unwrap();
        assert!((res.mass - 2.0 * PI * d.r).abs() <= 0.01 * 2.0 * PI * d.r);
    }

    #[test]
    fn jitter_increases_mass() {
        let x = uniform();
        let r = 0.08;
        let phi = PI * r * r;
        let seed = VortexLoop::circle(Point::new(0.5, 0.5, 0.5), [1.0, 0.0, 0.0], r, 64, L).unwrap();
        let res = minimize_loop(&seed, phi, &x, &LoopConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<V3> = res.lp.unwrapped().iter().map(|v| add(*v, [0.0, rng.gen_range(-0.01..0.01) * r, rng.gen_range(-0.01..0.01) * r])).collect();
        let (yj, _) = restore_flux(&y, phi, &x, 1e-12 * phi).unwrap();
        assert!(mass_of(&edges_of(&yj)) > res.mass);
    }

    #[test]
    fn zero_flux_is_unreachable() {
        let seed = VortexLoop::circle(Point::new(0.5, 0.5, 0.5), [1.0, 0.0, 0.0], 0.1, 32, L).unwrap();
        assert!(matches!(minimize_loop(&seed, 0.0, &uniform(), &LoopConfig::default()), Err(GpxError::FluxUnreachable { .. })));
        assert!(matches!(minimize_loop(&seed, 1.0, &uniform(), &LoopConfig::default()), Err(GpxError::FluxUnreachable { .. })));
    }

    #[test]
    fn uniform_jm_table_is_a_square_root() {
        let x = uniform();
        let seeds = seed_points(&x, 2, 0.5, 9).unwrap();
        let t = jm_table(&[1e-2, 3e-3, 1e-3], &x, None, &seeds, &LoopConfig::default()).unwrap();
        assert!((t.exponent - 0.5).abs() <= 0.01, "{t:?}");
        assert!((t.prefactor - GAMMA2).abs() <= 0.01 * GAMMA2, "{t:?}");
        assert!(jm_table(&[1e-2, 3e-3], &x, None, &seeds, &LoopConfig::default()).is_err());
    }

    #[test]
    fn uniform_splitting_penalty() {
        let x = uniform();
        let phi = 4e-3;
        let c = Point::new(0.5, 0.5, 0.5);
        let half = splitting_penalty(phi, 0.5, &x, c, &LoopConfig::default()).unwrap();
        assert!((half.penalty - (2f64.sqrt() - 1.0)).abs() <= 0.03 * (2f64.sqrt() - 1.0), "{half:?}");
        let mut last = half.penalty;
        for a in [0.25, 0.1, 0.01] {
            let p = splitting_penalty(phi, a, &x, c, &LoopConfig::default()).unwrap().penalty;
            let want = a.sqrt() + (1.0 - a).sqrt() - 1.0;
            assert!(p > 0.0 && p < last, "{a}: {p}");
            assert!((p - want).abs() <= 0.1 * want, "{a}: {p} vs {want}");
            last = p;
        }
    }

    #[test]
    fn subadd_worked_example() {
        let o = subadd_check(0.5, 0.5, 0.5, 0.5).unwrap();
        assert!((o.lhs - 2f64.sqrt()).abs() < 1e-15);
        assert!((o.rhs - 1.0625).abs() < 1e-15);
        assert!(o.holds && (o.slack - 0.351_713_562_373_095).abs() < 1e-12);
    }

    #[test]
    fn subadd_rejects_bad_hypotheses() {
        assert!(subadd_check(0.1, 0.9, 0.5, 0.2).is_err());
        assert!(subadd_check(0.5, 0.5, 1.0, 0.1).is_err());
        assert!(subadd_check(-0.5, 0.5, 0.5, 0.1).is_err());
        assert!(subadd_check(0.5, 0.5, 0.5, 0.6).is_err());
    }

    #[test]
    fn subadd_boundary_case() {
        for s in [0.01, 0.3, 0.5, 0.9, 0.99] {
            let o = subadd_check(0.5, 0.5, s, 0.5).unwrap();
            assert!(o.slack >= 0.0);
        }
    }

    #[test]
    fn series_uniform_splits() {
        for k in 2..20 {
            let row = vec![1.0 / k as f64; k];
            let o = series_check(&[row], 0.5, 0.5, 1.0, 1.0).unwrap();
            assert!(o.holds);
            assert!((o.min_slack - ((k as f64).sqrt() - 1.0625)).abs() < 1e-9);
        }
        assert!(matches!(series_check(&[vec![1.0]], 0.5, 0.5, 1.0, 1.0), Err(GpxError::HypothesisViolated(_))));
    }

    #[test]
    fn randomized_lemma_suites() {
        for (a, b, s, d) in random_subadd_inputs(20_000, 3) {
            assert!(subadd_check(a, b, s, d).unwrap().holds, "{a} {b} {s} {d}");
        }
        for seed in 0..200 {
            let (rows, s, d, cm, cp) = random_series_input(10, seed);
            assert!(series_check(&rows, s, d, cm, cp).unwrap().holds);
        }
    }

    proptest! {
        #[test]
        fn mass_is_cyclic_and_orientation_free(k in 0usize..40, r in 0.02f64..0.2, tilt in -1.0f64..1.0) {
            let lp = VortexLoop::ellipse(Point::new(0.9, 0.05, 0.5), [tilt, 1.0, 0.2], r, 0.7 * r, 40, L).unwrap();
            let m = loop_mass(&lp).unwrap();
            prop_assert!((loop_mass(&lp.rotated(k)).unwrap() - m).abs() <= 1e-13);
            prop_assert!((loop_mass(&lp.reversed()).unwrap() - m).abs() <= 1e-13);
        }
    }
}
