//! Concentration of the energy density, the intrinsic barycenter and its
//! retraction onto the maximum velocity set.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::functional::energy_density_with;
use crate::potentials::Potential;
use crate::torus::reduce::pairwise_sum;
use crate::torus::{integrate, ball_integral, ComplexField, Point, RealField, Stencil, TorusGrid};
use crate::velocity::{dist_to_sigma, nearest_sigma_point, SigmaSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub center: Point,
    pub radius: f64,
    pub ratio: f64,
    pub eta_threshold: f64,
    pub passed: bool,
}

fn check_density(density: &RealField) -> Result<f64> {
    if let Some(i) = density.data().iter().position(|&v| v < 0.0 || v.is_nan()) {
        return Err(GpxError::NegativeDensity(i));
    }
    let total = integrate(density);
    if !(total > 0.0) {
        return Err(GpxError::ZeroDensity);
    }
    Ok(total)
}

fn check_radius(grid: &TorusGrid, radius: f64) -> Result<()> {
    let limit = grid.min_length() / 2.0;
    if !(radius > 0.0 && radius < limit) {
        return Err(GpxError::BallTooLarge { radius, limit });
    }
    Ok(())
}

/// Share of the mass of `density` in the closed ball `B(center, radius)`.
pub fn concentration_ratio(density: &RealField, center: &Point, radius: f64) -> Result<f64> {
    let total = check_density(density)?;
    let ball = ball_integral(density, center, radius)?;
    Ok((ball / total).clamp(0.0, 1.0))
}

/// Integer node offsets within `radius`, in lexicographic order.
fn ball_offsets(grid: &TorusGrid, radius: f64) -> Vec<[isize; 3]> {
    let h = grid.spacing();
    let ext = h.map(|s| (radius / s).floor() as isize);
    let mut out = Vec::new();
    for dk in -ext[2]..=ext[2] {
        for dj in -ext[1]..=ext[1] {
            for di in -ext[0]..=ext[0] {
                let d2 = (di as f64 * h[0]).powi(2) + (dj as f64 * h[1]).powi(2) + (dk as f64 * h[2]).powi(2);
                if d2.sqrt() <= radius {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

/// Mass of the node-centered ball of `radius` around every node.
pub fn ball_masses(density: &RealField, radius: f64) -> Result<Vec<f64>> {
    let g = *density.grid();
    check_radius(&g, radius)?;
    let offs = ball_offsets(&g, radius);
    let d = density.data();
    let vol = g.cell_volume();
    Ok((0..g.node_count())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = g.ijk(idx).map(|c| c as isize);
            pairwise_sum(offs.len(), |m| {
                let o = offs[m];
                d[g.index_wrapped(i + o[0], j + o[1], k + o[2])]
            }) * vol
        })
        .collect())
}

/// Node maximizing the ball mass; ties go to the lowest index.
pub fn best_concentration(density: &RealField, radius: f64, eta: f64) -> Result<ConcentrationReport> {
    let total = check_density(density)?;
    let masses = ball_masses(density, radius)?;
    let mut best = 0;
    for (i, &m) in masses.iter().enumerate() {
        if m > masses[best] {
            best = i;
        }
    }
    let ratio = (masses[best] / total).clamp(0.0, 1.0);
    Ok(ConcentrationReport {
        center: density.grid().node_point(best),
        radius,
        ratio,
        eta_threshold: eta,
        passed: ratio >= eta,
    })
}

/// Smallest radius whose closed ball around `center` holds at least `eta`
/// of the mass.
pub fn concentration_radius(density: &RealField, center: &Point, eta: f64) -> Result<f64> {
    let total = check_density(density)?;
    let g = density.grid();
    let mut nodes: Vec<(f64, f64)> =
        density.data().iter().enumerate().map(|(i, &v)| (g.distance(center, &g.node_point(i)), v)).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vol = g.cell_volume();
    let mut acc = 0.0;
    for (r, v) in nodes {
        acc += v * vol;
        if acc >= eta * total {
            return Ok(r);
        }
    }
    Ok(g.min_length() / 2.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct IntrinsicBarycenter {
    pub point: Point,
    /// Node with the largest ball mass.
    pub start: Point,
    pub start_ratio: f64,
    pub iterations: usize,
    /// Largest distance from `point` to a node whose ball holds more than `eta`.
    pub max_center_distance: f64,
    /// `max_center_distance <= 2r`.
    pub guarantee_holds: bool,
}

/// Weighted minimum-image mean of `density` restricted to balls of radius
/// `2r`, started from the heaviest `r`-ball.
pub fn intrinsic_barycenter(density: &RealField, r: f64, eta: f64) -> Result<IntrinsicBarycenter> {
    let g = *density.grid();
    let total = check_density(density)?;
    check_radius(&g, 2.0 * r)?;
    let masses = ball_masses(density, r)?;
    let mut best = 0;
    for (i, &m) in masses.iter().enumerate() {
        if m > masses[best] {
            best = i;
        }
    }
    let start_ratio = masses[best] / total;
    if !(start_ratio > eta) {
        return Err(GpxError::NotConcentrated { ratio: start_ratio, eta });
    }
    let start = g.node_point(best);
    let tol = g.max_spacing() / 10.0;
    let d = density.data();
    let mut p = start;
    let mut iterations = 0;
    while iterations < 50 {
        let disp: Vec<([f64; 3], f64)> = (0..d.len()).map(|i| g.min_image(&p, &g.node_point(i))).collect();
        let inside = |i: usize| disp[i].1 <= 2.0 * r;
        let w = pairwise_sum(d.len(), |i| if inside(i) { d[i] } else { 0.0 });
        if !(w > 0.0) {
            return Err(GpxError::ZeroDensity);
        }
        let shift = [0, 1, 2].map(|a| pairwise_sum(d.len(), |i| if inside(i) { d[i] * disp[i].0[a] } else { 0.0 }) / w);
        p = g.wrap([p.0[0] + shift[0], p.0[1] + shift[1], p.0[2] + shift[2]]);
        iterations += 1;
        if shift.iter().map(|s| s * s).sum::<f64>().sqrt() < tol {
            break;
        }
    }
    let max_center_distance = masses
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > eta * total)
        .map(|(i, _)| g.distance(&p, &g.node_point(i)))
        .fold(0.0, f64::max);
    Ok(IntrinsicBarycenter {
        point: p,
        start,
        start_ratio,
        iterations,
        max_center_distance,
        guarantee_holds: max_center_distance <= 2.0 * r,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Beta {
    pub intrinsic: IntrinsicBarycenter,
    /// Nearest point of Σ.
    pub point: Point,
    pub component: usize,
    pub dist_to_sigma: f64,
}

/// Intrinsic barycenter of the energy density of `u`, retracted onto Σ.
pub fn beta(
    u: &ComplexField,
    eps: f64,
    pot: &Potential,
    stencil: Stencil,
    sigma: &SigmaSet,
    r: f64,
    eta: f64,
) -> Result<Beta> {
    let density = energy_density_with(u, eps, pot, stencil)?;
    beta_of_density(&density, sigma, r, eta)
}

pub fn beta_of_density(density: &RealField, sigma: &SigmaSet, r: f64, eta: f64) -> Result<Beta> {
    let intrinsic = intrinsic_barycenter(density, r, eta)?;
    let point = nearest_sigma_point(&intrinsic.point, sigma)?;
    Ok(Beta {
        dist_to_sigma: dist_to_sigma(&intrinsic.point, sigma),
        component: sigma.component_of(&point),
        point,
        intrinsic,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotopyGap {
    pub seed: Point,
    pub gap: f64,
    /// `min(min(L)/4, delta) / 2`.
    pub rho_star: f64,
    pub beta: Beta,
}

/// Distance between the seed point `p` and `beta(u)`.
pub fn homotopy_gap(
    p: &Point,
    u: &ComplexField,
    eps: f64,
    pot: &Potential,
    stencil: Stencil,
    sigma: &SigmaSet,
    r: f64,
    eta: f64,
) -> Result<HomotopyGap> {
    let b = beta(u, eps, pot, stencil, sigma, r, eta)?;
    let g = sigma.grid();
    let r0 = g.min_length() / 4.0;
    Ok(HomotopyGap { seed: *p, gap: g.distance(p, &b.point), rho_star: 0.5 * r0.min(sigma.delta), beta: b })
}
