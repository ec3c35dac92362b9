//! Co-exact velocity fields `X = curl A`, their maximum velocity set and a
//! few named builders.

use rustfft::FftNum;

use crate::error::{GpxError, Result};
use crate::scalar::Scalar;
use crate::torus::interp::{trilinear, Interp, VecSpline};
use crate::torus::{curl, divergence, Point, RealField, Spectral, TorusGrid, VecField};

/// Anything that can report `X` (and optionally a vector potential `A`) at an
/// arbitrary point of the torus.
pub trait FieldSampler: Sync {
    fn velocity(&self, p: [f64; 3]) -> [f64; 3];
    /// A vector potential with `curl A = X`, when one is available.
    fn potential(&self, p: [f64; 3]) -> Option<[f64; 3]>;
    fn lengths(&self) -> [f64; 3];
}

/// Knobs for extracting the maximum velocity set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaParams {
    /// Relative tolerance below the maximum.
    pub tol: f64,
    /// Tube radius; `None` picks the builder default.
    pub delta: Option<f64>,
    /// Nodes within this relative distance of the maximum are refined.
    pub candidate_frac: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams { tol: 1e-3, delta: None, candidate_frac: 0.2 }
    }
}

/// Discrete approximation of the set where `|X|` is maximal.
///
/// Points are node positions moved onto the maximum of a local quadratic
/// model of `|X|^2`; `values` holds the modelled `|X|` there. Points are
/// ordered by the index of the node they came from.
#[derive(Clone, Debug)]
pub struct SigmaSet {
    grid: TorusGrid<f64>,
    points: Vec<Point<f64>>,
    values: Vec<f64>,
    nodes: Vec<usize>,
    components: Vec<usize>,
    n_components: usize,
    pub delta: f64,
    pub tol: f64,
}

impl SigmaSet {
    pub fn points(&self) -> &[Point<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grid node each point was refined from.
    pub fn source_nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.n_components
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn grid(&self) -> &TorusGrid<f64> {
        &self.grid
    }

    /// First point (lowest source node) of every component.
    pub fn representatives(&self) -> Vec<Point<f64>> {
        let mut out = vec![None; self.n_components];
        for (p, &c) in self.points.iter().zip(&self.components) {
            if out[c].is_none() {
                out[c] = Some(*p);
            }
        }
        out.into_iter().map(|p| p.expect("every label is used")).collect()
    }

    fn argmin(&self, p: &Point<f64>) -> (usize, f64) {
        let q = self.grid.wrap(p.0);
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.points.iter().enumerate() {
            let d = self.grid.distance(&q, s);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Component label of the Σ point nearest to `p`.
    pub fn component_of(&self, p: &Point<f64>) -> usize {
        self.components[self.argmin(p).0]
    }

    /// `x,y,z,component` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,component\n");
        for (p, c) in self.points.iter().zip(&self.components) {
            s.push_str(&format!("{},{},{},{}\n", p.0[0], p.0[1], p.0[2], c));
        }
        s
    }
}

/// Minimum-image distance from `p` to the nearest Σ point.
pub fn dist_to_sigma(p: &Point<f64>, s: &SigmaSet) -> f64 {
    s.argmin(p).1
}

/// Nearest Σ point; ties go to the lowest source node.
pub fn nearest_sigma_point(p: &Point<f64>, s: &SigmaSet) -> Result<Point<f64>> {
    let (i, d) = s.argmin(p);
    if d > s.delta {
        return Err(GpxError::OutsideTube { distance: d, delta: s.delta });
    }
    Ok(s.points[i])
}

/// `X = curl A`, normalized so the largest nodal `|X|` is 1.
#[derive(Clone, Debug)]
pub struct VelocityField<S: Scalar = f64> {
    a: Option<VecField<S>>,
    x: VecField<S>,
    max_norm: S,
    scale: S,
    sigma: SigmaSet,
    x_spline: VecSpline,
    a_spline: Option<VecSpline>,
    interp: Interp,
}

impl<S: Scalar + FftNum> VelocityField<S> {
    /// Curl of `a` with default Σ extraction and tube radius `min(L)/8`.
    pub fn from_potential(a: VecField<S>) -> Result<Self> {
        Self::from_potential_with(a, &SigmaParams::default())
    }

    pub fn from_potential_with(a: VecField<S>, params: &SigmaParams) -> Result<Self> {
        let default_delta = a.grid().min_length().to_f64_lossy() / 8.0;
        Self::build(a, params, default_delta)
    }

    fn build(a: VecField<S>, params: &SigmaParams, default_delta: f64) -> Result<Self> {
        if !a.all_finite() {
            return Err(GpxError::InvalidField("vector potential has non-finite samples".into()));
        }
        let grid = *a.grid();
        let x = curl(&a);
        let raw_max = x.max_norm();
        let a_scale = a.max_abs() / grid.max_spacing();
        if !(raw_max > S::lit(1e-13) * a_scale) || raw_max == S::zero() {
            return Err(GpxError::ZeroField);
        }
        let scale = S::one() / raw_max;
        let x = x.scale(scale);
        let a = a.scale(scale);
        let delta = params.delta.unwrap_or(default_delta);
        let sigma = extract_sigma(&x, params, delta)?;
        Ok(VelocityField {
            x_spline: VecSpline::new(&x),
            a_spline: Some(VecSpline::new(&a)),
            a: Some(a),
            x,
            max_norm: S::one(),
            scale,
            sigma,
            interp: Interp::default(),
        })
    }

    /// Constant field along `dir`. It has no periodic vector potential;
    /// Σ is the whole torus.
    pub fn uniform(grid: TorusGrid<S>, dir: [S; 3], params: &SigmaParams) -> Result<Self> {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        if !(n > S::zero()) {
            return Err(GpxError::ZeroField);
        }
        let d = [dir[0] / n, dir[1] / n, dir[2] / n];
        let x = VecField::from_index_fn(grid, |_| d);
        let delta = params.delta.unwrap_or(grid.min_length().to_f64_lossy() / 8.0);
        let sigma = extract_sigma(&x, params, delta)?;
        Ok(VelocityField {
            x_spline: VecSpline::new(&x),
            a_spline: None,
            a: None,
            x,
            max_norm: S::one(),
            scale: S::one() / n,
            sigma,
            interp: Interp::default(),
        })
    }

    /// `A = (0, 0, sum_k exp(-dist(., q_k)^2 / w^2))`, low-passed at 2/3 Nyquist.
    pub fn two_bumps(grid: TorusGrid<S>, q1: Point<S>, q2: Point<S>, w: S, params: &SigmaParams) -> Result<Self> {
        let d = grid.distance(&q1, &q2);
        if !(d > S::lit(4.0) * w) {
            return Err(GpxError::CentersTooClose {
                distance: d.to_f64_lossy(),
                required: (S::lit(4.0) * w).to_f64_lossy(),
            });
        }
        bump_field(grid, &[q1, q2], w, params)
    }

    pub fn single_bump(grid: TorusGrid<S>, q: Point<S>, w: S, params: &SigmaParams) -> Result<Self> {
        bump_field(grid, &[q], w, params)
    }

    /// `A = (0, 0, sin(2 pi x1 / L1))`.
    pub fn mode(grid: TorusGrid<S>, params: &SigmaParams) -> Result<Self> {
        let l1 = grid.lengths()[0];
        let a = VecField::from_fn(grid, |p| [S::zero(), S::zero(), (S::lit(2.0) * S::PI() * p.0[0] / l1).sin()]);
        let default_delta = grid.lengths()[0].to_f64_lossy() / 8.0;
        Self::build(a, params, default_delta)
    }
}

fn bump_field<S: Scalar + FftNum>(
    grid: TorusGrid<S>,
    centers: &[Point<S>],
    w: S,
    params: &SigmaParams,
) -> Result<VelocityField<S>> {
    if !(w > S::zero()) || !(w < grid.min_length() / S::lit(8.0)) {
        return Err(GpxError::InvalidField(format!(
            "bump width {} must lie in (0, {})",
            w,
            grid.min_length() / S::lit(8.0)
        )));
    }
    let raw = RealField::from_fn(grid, |p| {
        centers.iter().fold(S::zero(), |acc, q| {
            let r = grid.distance(&p, q) / w;
            acc + (-(r * r)).exp()
        })
    });
    let smooth = Spectral::new(grid).low_pass(&raw, S::lit(2.0 / 3.0));
    let z = RealField::zeros(grid);
    let a = VecField::from_components([&z, &z, &smooth])?;
    VelocityField::build(a, params, w.to_f64_lossy())
}

impl<S: Scalar> VelocityField<S> {
    pub fn grid(&self) -> &TorusGrid<S> {
        self.x.grid()
    }

    pub fn x(&self) -> &VecField<S> {
        &self.x
    }

    pub fn a(&self) -> Option<&VecField<S>> {
        self.a.as_ref()
    }

    pub fn max_norm(&self) -> S {
        self.max_norm
    }

    /// Factor applied to the raw curl to normalize it.
    pub fn normalization(&self) -> S {
        self.scale
    }

    pub fn sigma(&self) -> &SigmaSet {
        &self.sigma
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn set_interp(&mut self, interp: Interp) {
        self.interp = interp;
    }

    pub fn divergence_max(&self) -> S {
        divergence(&self.x).max_abs()
    }
}

impl<S: Scalar> FieldSampler for VelocityField<S> {
    fn velocity(&self, p: [f64; 3]) -> [f64; 3] {
        match self.interp {
            Interp::CubicSpline => self.x_spline.eval(p),
            Interp::Trilinear => trilinear(self.x.grid(), self.x.data(), p),
        }
    }

    fn potential(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let a = self.a.as_ref()?;
        Some(match self.interp {
            Interp::CubicSpline => self.a_spline.as_ref().expect("spline built with A").eval(p),
            Interp::Trilinear => trilinear(a.grid(), a.data(), p),
        })
    }

    fn lengths(&self) -> [f64; 3] {
        self.x.grid().lengths().map(|v| v.to_f64_lossy())
    }
}

/// Analytic constant field with the non-periodic potential
/// `A = X0 x (x - origin) / 2`, displacement taken by minimum image.
#[derive(Clone, Copy, Debug)]
pub struct UniformField {
    pub dir: [f64; 3],
    pub origin: [f64; 3],
    grid: TorusGrid<f64>,
}

impl UniformField {
    pub fn new(lengths: [f64; 3], dir: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        if !(n > 0.0) {
            return Err(GpxError::ZeroField);
        }
        Ok(UniformField {
            dir: dir.map(|v| v / n),
            origin,
            grid: TorusGrid::new([16; 3], lengths)?,
        })
    }
}

impl FieldSampler for UniformField {
    fn velocity(&self, _p: [f64; 3]) -> [f64; 3] {
        self.dir
    }

    fn potential(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let (d, _) = self.grid.min_image(&Point(self.origin), &self.grid.wrap(p));
        let x = self.dir;
        Some([
            0.5 * (x[1] * d[2] - x[2] * d[1]),
            0.5 * (x[2] * d[0] - x[0] * d[2]),
            0.5 * (x[0] * d[1] - x[1] * d[0]),
        ])
    }

    fn lengths(&self) -> [f64; 3] {
        self.grid.lengths()
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matching unit eigenvectors (as columns).
pub(crate) fn sym_eigen3(mut m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..50 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        let diag = m[0][0].abs() + m[1][1].abs() + m[2][2].abs();
        if off <= 1e-15 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([m[0][0], m[1][1], m[2][2]], v)
}

fn extract_sigma<S: Scalar>(x: &VecField<S>, params: &SigmaParams, delta: f64) -> Result<SigmaSet> {
    let g = *x.grid();
    let grid = TorusGrid::new(g.counts(), g.lengths().map(|v| v.to_f64_lossy()))?;
    if !(delta > 0.0) || !(delta < grid.min_length() / 4.0) {
        return Err(GpxError::InvalidField(format!(
            "tube radius {delta} must lie in (0, {})",
            grid.min_length() / 4.0
        )));
    }
    let g2: Vec<f64> = x
        .data()
        .iter()
        .map(|v| {
            let v = v.map(|c| c.to_f64_lossy());
            v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        })
        .collect();
    let gmax = g2.iter().cloned().fold(0.0, f64::max);
    let h = grid.spacing();
    let cut = (1.0 - params.candidate_frac).powi(2) * gmax;
    let at = |i: isize, j: isize, k: isize| g2[grid.index_wrapped(i, j, k)];

    let mut pts = Vec::new();
    let mut vals = Vec::new();
    let mut nodes = Vec::new();
    let mut argmax = 0;
    for idx in 0..grid.node_count() {
        if g2[idx] > g2[argmax] {
            argmax = idx;
        }
        if g2[idx] < cut {
            continue;
        }
        let [i, j, k] = grid.ijk(idx).map(|v| v as isize);
        let c = [i, j, k];
        let f0 = g2[idx];
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for a in 0..3 {
            let mut p = c;
            let mut m = c;
            p[a] += 1;
            m[a] -= 1;
            let fp = at(p[0], p[1], p[2]);
            let fm = at(m[0], m[1], m[2]);
            grad[a] = (fp - fm) / (2.0 * h[a]);
            hess[a][a] = (fp - 2.0 * f0 + fm) / (h[a] * h[a]);
            for b in (a + 1)..3 {
                let mut s = [[c; 2]; 2];
                for (sa, da) in [(0usize, 1isize), (1, -1)] {
                    for (sb, db) in [(0usize, 1isize), (1, -1)] {
                        s[sa][sb][a] += da;
                        s[sa][sb][b] += db;
                    }
                }
                let e = |q: [isize; 3]| at(q[0], q[1], q[2]);
                let v = (e(s[0][0]) - e(s[0][1]) - e(s[1][0]) + e(s[1][1])) / (4.0 * h[a] * h[b]);
                hess[a][b] = v;
                hess[b][a] = v;
            }
        }
        let (lam, vecs) = sym_eigen3(hess);
        let lmin = lam.iter().cloned().fold(0.0, f64::min);
        let mut step = [0.0; 3];
        let mut model = f0;
        for e in 0..3 {
            if lam[e] < -0.05 * lmin.abs() && lam[e] < 0.0 {
                let q = [vecs[0][e], vecs[1][e], vecs[2][e]];
                let gq = q[0] * grad[0] + q[1] * grad[1] + q[2] * grad[2];
                let t = -gq / lam[e];
                for a in 0..3 {
                    step[a] += t * q[a];
                }
                model += gq * t + 0.5 * lam[e] * t * t;
            }
        }
        if (0..3).any(|a| step[a].abs() > 0.55 * h[a]) {
            continue;
        }
        let base = grid.node_point(idx).0;
        pts.push(grid.wrap([base[0] + step[0], base[1] + step[1], base[2] + step[2]]));
        vals.push(model.max(0.0).sqrt());
        nodes.push(idx);
    }
    if pts.is_empty() {
        pts.push(grid.node_point(argmax));
        vals.push(gmax.sqrt());
        nodes.push(argmax);
    }
    let vmax = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..pts.len()).filter(|&i| vals[i] >= (1.0 - params.tol) * vmax).collect();
    let points: Vec<Point<f64>> = keep.iter().map(|&i| pts[i]).collect();
    let values: Vec<f64> = keep.iter().map(|&i| vals[i]).collect();
    let nodes: Vec<usize> = keep.iter().map(|&i| nodes[i]).collect();
    let (components, n_components) = link_components(&grid, &points, 2.0 * delta);
    Ok(SigmaSet { grid, points, values, nodes, components, n_components, delta, tol: params.tol })
}

/// Single-linkage clustering at distance `link`; labels follow first appearance.
fn link_components(grid: &TorusGrid<f64>, pts: &[Point<f64>], link: f64) -> (Vec<usize>, usize) {
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let l = grid.lengths();
    let nb: [usize; 3] = [0, 1, 2].map(|a| ((l[a] / link).floor() as usize).max(1));
    let key = |p: &Point<f64>| -> [usize; 3] {
        [0, 1, 2].map(|a| ((p.0[a] / l[a] * nb[a] as f64).floor() as usize).min(nb[a] - 1))
    };
    let mut buckets: std::collections::HashMap<[usize; 3], Vec<usize>> = std::collections::HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    for (i, p) in pts.iter().enumerate() {
        let kp = key(p);
        let mut seen = Vec::with_capacity(27);
        for d0 in -1isize..=1 {
            for d1 in -1isize..=1 {
                for d2 in -1isize..=1 {
                    let d = [d0, d1, d2];
                    let nk = [0, 1, 2].map(|a| (kp[a] as isize + d[a]).rem_euclid(nb[a] as isize) as usize);
                    if seen.contains(&nk) {
                        continue;
                    }
                    seen.push(nk);
                    if let Some(list) = buckets.get(&nk) {
                        for &j in list {
                            if j > i && grid.distance(p, &pts[j]) <= link {
                                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                                if ri != rj {
                                    parent[ri.max(rj)] = ri.min(rj);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut out = vec![0; n];
    let mut next = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[i] = label[r];
    }
    (out, next)
}
