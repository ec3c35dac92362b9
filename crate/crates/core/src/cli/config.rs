//! Experiment configuration files.
//!
//! Line-oriented `key = value` pairs under `[section]` headers; `#` starts a
//! comment. Unknown sections and keys, duplicates and malformed values are
//! errors carrying the line number. Only `[grid]` and `[field]` are required.
//!
//! ```text
//! [grid]
//! n = 48
//! L = 2.0
//!
//! [field]
//! kind = two_bumps
//! centers = 0.5,1,1; 1.5,1,1
//! width = 0.24
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{GpxError, Result};
use crate::isoperimetric::LoopConfig;
use crate::photography::Quadrature;
use crate::potentials::{quartic_potential, Potential};
use crate::solver::{Armijo, SolverConfig};
use crate::torus::interp::Interp;
use crate::torus::{Point, Stencil, TorusGrid};
use crate::velocity::{SigmaParams, VelocityField};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    TwoBumps,
    SingleBump,
    Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldConfig {
    pub kind: FieldKind,
    pub centers: Vec<[f64; 3]>,
    pub width: Option<f64>,
    pub sigma_tol: f64,
    pub sigma_delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Quartic,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    /// Coefficients of `P(t)`, `W(z) = P(|z|^2)`, lowest degree first.
    pub coefficients: Vec<f64>,
    pub p: f64,
    pub c_sc1: f64,
    pub c_sc2: f64,
    pub alpha_c: f64,
    pub r_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSection {
    pub max_iters: usize,
    pub tol_res: f64,
    pub c1: f64,
    pub backtrack: f64,
    pub step0: f64,
    pub restore_every: usize,
    pub memory: usize,
    pub precondition: bool,
    pub stencil: Stencil,
    pub history_stride: usize,
    /// Default `eps` as a fraction of `r(p, phi)`.
    pub eps_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    Spline,
    Trilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotographyConfig {
    /// `None` fits `alpha` from the expansion at the Σ representatives.
    pub alpha: Option<f64>,
    pub radial: usize,
    pub angular: usize,
    pub interp: InterpKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    pub eta: f64,
    pub mu: f64,
    /// Σ points sampled for homotopy gaps.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsoConfig {
    pub phis: Vec<f64>,
    pub seeds: usize,
    pub vertices: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub resample_every: usize,
    /// Seeds are drawn where `|X| >= min_speed * max |X|`.
    pub min_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaConfig {
    pub subadd_draws: usize,
    pub series_draws: usize,
    pub series_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub field: FieldConfig,
    pub potential: PotentialConfig,
    pub solver: SolverSection,
    pub photography: PhotographyConfig,
    pub diagnostics: DiagnosticsConfig,
    pub isoperimetric: IsoConfig,
    pub lemmas: LemmaConfig,
    pub seed: u64,
}

/// Every recognized key with its default, as listed by `gpx --help`.
pub const KEYS: &str = "\
[grid]          n (even, >= 16, required), L (> 0, required)
[field]         kind = two_bumps | single_bump | mode (required)
                centers = x,y,z[; x,y,z] (two for two_bumps, one for single_bump)
                width (bump kinds), sigma_tol = 1e-3, sigma_delta = builder default
[potential]     kind = quartic | custom, coefficients = c0,c1,... (custom only)
                p = 4, c_sc1 = 2, c_sc2 = 3, alpha_c = 1, r_c = 2
[solver]        max_iters = 5000, tol_res = 1e-5, c1 = 1e-4, backtrack = 0.5, step0 = 1,
                restore_every = 1, memory = 8, precondition = true,
                stencil = compact | central (compact), history_stride = 10, eps_ratio = 0.125
[photography]   alpha = auto | value (auto), radial = 64, angular = 128,
                interp = spline | trilinear (spline)
[diagnostics]   eta = 0.9, mu = 2, samples = 8
[isoperimetric] phis = 1e-2,4.6e-3,2.15e-3,1e-3, seeds = 6, vertices = 64, tol = 1e-5,
                max_iters = 20000, resample_every = 100, min_speed = 0.5
[lemmas]        subadd_draws = 100000, series_draws = 10000, series_rows = 10
[rng]           seed = 7";

const SECTIONS: [&str; 9] =
    ["grid", "field", "potential", "solver", "photography", "diagnostics", "isoperimetric", "lemmas", "rng"];

/// Raw `key -> (value, line)` per section.
type Raw = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn parse_err(line: usize, msg: impl Into<String>) -> GpxError {
    GpxError::Parse { line, msg: msg.into() }
}

fn invalid(key: &str, line: usize, msg: impl std::fmt::Display) -> GpxError {
    GpxError::Validation { key: key.into(), msg: format!("line {line}: {msg}") }
}

fn tokenize(text: &str) -> Result<Raw> {
    let mut raw = Raw::new();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| parse_err(ln, "unterminated section header"))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(parse_err(ln, format!("unknown section [{name}]")));
            }
            if raw.contains_key(name) {
                return Err(parse_err(ln, format!("duplicate section [{name}]")));
            }
            raw.insert(name.to_string(), BTreeMap::new());
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(ln, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(parse_err(ln, "empty key or value"));
        }
        let sec = section.as_ref().ok_or_else(|| parse_err(ln, format!("key `{k}` outside any section")))?;
        let map = raw.get_mut(sec).expect("section inserted");
        if map.insert(k.to_string(), (v.to_string(), ln)).is_some() {
            return Err(parse_err(ln, format!("duplicate key {sec}.{k}")));
        }
    }
    Ok(raw)
}

/// Consumes the keys of one section; whatever is left over is unknown.
struct Section {
    name: &'static str,
    map: BTreeMap<String, (String, usize)>,
    present: bool,
}

impl Section {
    fn take(raw: &mut Raw, name: &'static str) -> Self {
        let present = raw.contains_key(name);
        Section { name, map: raw.remove(name).unwrap_or_default(), present }
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn get<T>(&mut self, k: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<(T, usize)>> {
        match self.map.remove(k) {
            None => Ok(None),
            Some((v, ln)) => parse(&v).map(|t| Some((t, ln))).ok_or_else(|| parse_err(ln, format!("{}: expected {what}, got `{v}`", self.key(k)))),
        }
    }

    fn f64_or(&mut self, k: &str, default: f64, ok: impl Fn(f64) -> bool, rule: &str) -> Result<f64> {
        match self.get(k, |s| s.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")? {
            None => Ok(default),
            Some((x, _)) if ok(x) => Ok(x),
            Some((x, ln)) => Err(invalid(&self.key(k), ln, format!("{x} {rule}"))),
        }
    }

    fn usize_or(&mut self, k: &str, default: usize, ok: impl Fn(usize) -> bool, rule: &str) -> Result<usize> {
        match self.get(k, |s| s.parse::<usize>().ok(), "a non-negative integer")? {
            None => Ok(default),
            Some((x, _)) if ok(x) => Ok(x),
            Some((x, ln)) => Err(invalid(&self.key(k), ln, format!("{x} {rule}"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.iter().min_by_key(|(_, (_, ln))| *ln) {
            Some((k, (_, ln))) => Err(parse_err(*ln, format!("unknown key {}.{k}", self.name))),
            None => Ok(()),
        }
    }
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite())).collect()
}

fn parse_points(s: &str) -> Option<Vec<[f64; 3]>> {
    s.split(';')
        .map(|p| {
            let v = parse_list(p)?;
            <[f64; 3]>::try_from(v).ok()
        })
        .collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

fn unit_open(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut raw = tokenize(text)?;

        let mut s = Section::take(&mut raw, "grid");
        if !s.present {
            return Err(GpxError::Validation { key: "grid".into(), msg: "section [grid] is required".into() });
        }
        let (n, nl) = s
            .get("n", |v| v.parse::<usize>().ok(), "a positive integer")?
            .ok_or_else(|| GpxError::Validation { key: "grid.n".into(), msg: "required".into() })?;
        if n % 2 == 1 || n < 16 {
            return Err(invalid("grid.n", nl, format!("{n} must be even and at least 16")));
        }
        let (l, ll) = s
            .get("L", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")?
            .ok_or_else(|| GpxError::Validation { key: "grid.L".into(), msg: "required".into() })?;
        if !(l > 0.0) {
            return Err(invalid("grid.L", ll, format!("{l} must be positive")));
        }
        s.finish()?;
        let grid = GridConfig { n, l };

        let mut s = Section::take(&mut raw, "field");
        if !s.present {
            return Err(GpxError::Validation { key: "field".into(), msg: "section [field] is required".into() });
        }
        let (kind, kl) = s
            .get(
                "kind",
                |v| match v {
                    "two_bumps" => Some(FieldKind::TwoBumps),
                    "single_bump" => Some(FieldKind::SingleBump),
                    "mode" => Some(FieldKind::Mode),
                    _ => None,
                },
                "two_bumps, single_bump or mode",
            )?
            .ok_or_else(|| GpxError::Validation { key: "field.kind".into(), msg: "required".into() })?;
        let centers = s.get("centers", parse_points, "`x,y,z` triples separated by `;`")?;
        let width = s.get("width", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")?;
        let want = match kind {
            FieldKind::TwoBumps => 2,
            FieldKind::SingleBump => 1,
            FieldKind::Mode => 0,
        };
        let centers = match (want, centers) {
            (0, None) => Vec::new(),
            (0, Some((_, ln))) => return Err(invalid("field.centers", ln, "not used by kind mode")),
            (_, None) => return Err(invalid("field.centers", kl, format!("required for this kind ({want} points)"))),
            (w, Some((c, ln))) if c.len() != w => return Err(invalid("field.centers", ln, format!("expected {w} points, got {}", c.len()))),
            (_, Some((c, _))) => c,
        };
        let width = match (want, width) {
            (0, None) => None,
            (0, Some((_, ln))) => return Err(invalid("field.width", ln, "not used by kind mode")),
            (_, None) => return Err(invalid("field.width", kl, "required for this kind")),
            (_, Some((w, ln))) if !(w > 0.0 && w < l / 8.0) => return Err(invalid("field.width", ln, format!("{w} must lie in (0, L/8)"))),
            (_, Some((w, _))) => Some(w),
        };
        let sigma_tol = s.f64_or("sigma_tol", 1e-3, unit_open, "must lie in (0, 1)")?;
        let sigma_delta = match s.get("sigma_delta", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")? {
            None => None,
            Some((d, ln)) if !(d > 0.0 && d < l / 4.0) => return Err(invalid("field.sigma_delta", ln, format!("{d} must lie in (0, L/4)"))),
            Some((d, _)) => Some(d),
        };
        s.finish()?;
        let field = FieldConfig { kind, centers, width, sigma_tol, sigma_delta };

        let q = quartic_potential::<f64>();
        let mut s = Section::take(&mut raw, "potential");
        let (pkind, pl) = s
            .get(
                "kind",
                |v| match v {
                    "quartic" => Some(PotentialKind::Quartic),
                    "custom" => Some(PotentialKind::Custom),
                    _ => None,
                },
                "quartic or custom",
            )?
            .unwrap_or((PotentialKind::Quartic, 0));
        let coefficients = match (pkind, s.get("coefficients", parse_list, "a comma-separated list of numbers")?) {
            (PotentialKind::Quartic, None) => q.coeffs().to_vec(),
            (PotentialKind::Quartic, Some((_, ln))) => return Err(invalid("potential.coefficients", ln, "only used by kind custom")),
            (PotentialKind::Custom, None) => return Err(invalid("potential.coefficients", pl, "required for kind custom")),
            (PotentialKind::Custom, Some((c, ln))) if c.len() < 2 => return Err(invalid("potential.coefficients", ln, "need at least two coefficients")),
            (PotentialKind::Custom, Some((c, _))) => c,
        };
        let potential = PotentialConfig {
            kind: pkind,
            coefficients,
            p: s.f64_or("p", q.p, |x| x >= 2.0, "must be at least 2")?,
            c_sc1: s.f64_or("c_sc1", q.c_sc1, |x| x >= 0.0, "must be non-negative")?,
            c_sc2: s.f64_or("c_sc2", q.c_sc2, |x| x >= 0.0, "must be non-negative")?,
            alpha_c: s.f64_or("alpha_c", q.alpha_c, positive, "must be positive")?,
            r_c: s.f64_or("r_c", q.r_c, |x| x >= 0.0, "must be non-negative")?,
        };
        s.finish()?;

        let d = SolverConfig::new(0.5, 1.0)?;
        let mut s = Section::take(&mut raw, "solver");
        let solver = SolverSection {
            max_iters: s.usize_or("max_iters", d.max_iters, |x| x > 0, "must be positive")?,
            tol_res: s.f64_or("tol_res", d.tol_res, positive, "must be positive")?,
            c1: s.f64_or("c1", d.armijo.c1, unit_open, "must lie in (0, 1)")?,
            backtrack: s.f64_or("backtrack", d.armijo.backtrack, unit_open, "must lie in (0, 1)")?,
            step0: s.f64_or("step0", d.armijo.step0, positive, "must be positive")?,
            restore_every: s.usize_or("restore_every", d.restore_every, |x| x > 0, "must be positive")?,
            memory: s.usize_or("memory", d.memory, |x| x <= 64, "must be at most 64")?,
            precondition: s.get("precondition", parse_bool, "true or false")?.map_or(d.precondition, |v| v.0),
            stencil: s
                .get(
                    "stencil",
                    |v| match v {
                        "compact" => Some(Stencil::Compact),
                        "central" => Some(Stencil::Central),
                        _ => None,
                    },
                    "compact or central",
                )?
                .map_or(d.stencil, |v| v.0),
            history_stride: s.usize_or("history_stride", d.history_stride, |x| x > 0, "must be positive")?,
            eps_ratio: s.f64_or("eps_ratio", 0.125, |x| x > 0.0 && x < 0.5, "must lie in (0, 1/2)")?,
        };
        s.finish()?;

        let dq = Quadrature::default();
        let mut s = Section::take(&mut raw, "photography");
        let alpha = match s.get(
            "alpha",
            |v| if v == "auto" { Some(None) } else { v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some) },
            "`auto` or a number",
        )? {
            None | Some((None, _)) => None,
            Some((Some(a), ln)) if !(a > 0.0) => return Err(invalid("photography.alpha", ln, format!("{a} must be positive"))),
            Some((a, _)) => a,
        };
        let photography = PhotographyConfig {
            alpha,
            radial: s.usize_or("radial", dq.radial, |x| x >= 64, "must be at least 64")?,
            angular: s.usize_or("angular", dq.angular, |x| x >= 128, "must be at least 128")?,
            interp: s
                .get(
                    "interp",
                    |v| match v {
                        "spline" => Some(InterpKind::Spline),
                        "trilinear" => Some(InterpKind::Trilinear),
                        _ => None,
                    },
                    "spline or trilinear",
                )?
                .map_or(InterpKind::Spline, |v| v.0),
        };
        s.finish()?;

        let mut s = Section::take(&mut raw, "diagnostics");
        let diagnostics = DiagnosticsConfig {
            eta: s.f64_or("eta", 0.9, unit_open, "must lie in (0, 1)")?,
            mu: s.f64_or("mu", 2.0, positive, "must be positive")?,
            samples: s.usize_or("samples", 8, |x| x > 0, "must be positive")?,
        };
        s.finish()?;

        let dl = LoopConfig::default();
        let mut s = Section::take(&mut raw, "isoperimetric");
        let phis = match s.get("phis", parse_list, "a comma-separated list of numbers")? {
            None => vec![1e-2, 4.6e-3, 2.15e-3, 1e-3],
            Some((v, ln)) if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) => {
                return Err(invalid("isoperimetric.phis", ln, "fluxes must be positive"))
            }
            Some((v, _)) => v,
        };
        let isoperimetric = IsoConfig {
            phis,
            seeds: s.usize_or("seeds", 6, |x| x > 0, "must be positive")?,
            vertices: s.usize_or("vertices", dl.vertices, |x| x >= 8, "must be at least 8")?,
            tol: s.f64_or("tol", dl.tol, positive, "must be positive")?,
            max_iters: s.usize_or("max_iters", dl.max_iters, |x| x > 0, "must be positive")?,
            resample_every: s.usize_or("resample_every", dl.resample_every, |_| true, "")?,
            min_speed: s.f64_or("min_speed", 0.5, |x| x > 0.0 && x <= 1.0, "must lie in (0, 1]")?,
        };
        s.finish()?;

        let mut s = Section::take(&mut raw, "lemmas");
        let lemmas = LemmaConfig {
            subadd_draws: s.usize_or("subadd_draws", 100_000, |x| x > 0, "must be positive")?,
            series_draws: s.usize_or("series_draws", 10_000, |x| x > 0, "must be positive")?,
            series_rows: s.usize_or("series_rows", 10, |x| x > 0, "must be positive")?,
        };
        s.finish()?;

        let mut s = Section::take(&mut raw, "rng");
        let seed = s.get("seed", |v| v.parse::<u64>().ok(), "a non-negative integer")?.map_or(7, |v| v.0);
        s.finish()?;

        debug_assert!(raw.is_empty());
        Ok(ExperimentConfig { grid, field, potential, solver, photography, diagnostics, isoperimetric, lemmas, seed })
    }

    /// Canonical text: every key, fixed order, shortest round-trip floats.
    pub fn canonical(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
        }
        let mut o = String::new();
        let g = &self.grid;
        let _ = writeln!(o, "[grid]\nn = {}\nL = {:?}\n", g.n, g.l);
        let f = &self.field;
        let kind = match f.kind {
            FieldKind::TwoBumps => "two_bumps",
            FieldKind::SingleBump => "single_bump",
            FieldKind::Mode => "mode",
        };
        let _ = writeln!(o, "[field]\nkind = {kind}");
        if !f.centers.is_empty() {
            let c: Vec<String> = f.centers.iter().map(|p| list(p)).collect();
            let _ = writeln!(o, "centers = {}", c.join("; "));
        }
        if let Some(w) = f.width {
            let _ = writeln!(o, "width = {w:?}");
        }
        let _ = writeln!(o, "sigma_tol = {:?}", f.sigma_tol);
        if let Some(d) = f.sigma_delta {
            let _ = writeln!(o, "sigma_delta = {d:?}");
        }
        let p = &self.potential;
        match p.kind {
            PotentialKind::Quartic => {
                let _ = writeln!(o, "\n[potential]\nkind = quartic");
            }
            PotentialKind::Custom => {
                let _ = writeln!(o, "\n[potential]\nkind = custom\ncoefficients = {}", list(&p.coefficients));
            }
        }
        let _ = writeln!(
            o,
            "p = {:?}\nc_sc1 = {:?}\nc_sc2 = {:?}\nalpha_c = {:?}\nr_c = {:?}\n",
            p.p, p.c_sc1, p.c_sc2, p.alpha_c, p.r_c
        );
        let s = &self.solver;
        let stencil = match s.stencil {
            Stencil::Compact => "compact",
            Stencil::Central => "central",
        };
        let _ = writeln!(
            o,
            "[solver]\nmax_iters = {}\ntol_res = {:?}\nc1 = {:?}\nbacktrack = {:?}\nstep0 = {:?}\nrestore_every = {}\nmemory = {}\nprecondition = {}\nstencil = {stencil}\nhistory_stride = {}\neps_ratio = {:?}\n",
            s.max_iters, s.tol_res, s.c1, s.backtrack, s.step0, s.restore_every, s.memory, s.precondition, s.history_stride, s.eps_ratio
        );
        let ph = &self.photography;
        let alpha = ph.alpha.map_or("auto".to_string(), |a| format!("{a:?}"));
        let interp = match ph.interp {
            InterpKind::Spline => "spline",
            InterpKind::Trilinear => "trilinear",
        };
        let _ = writeln!(o, "[photography]\nalpha = {alpha}\nradial = {}\nangular = {}\ninterp = {interp}\n", ph.radial, ph.angular);
        let d = &self.diagnostics;
        let _ = writeln!(o, "[diagnostics]\neta = {:?}\nmu = {:?}\nsamples = {}\n", d.eta, d.mu, d.samples);
        let i = &self.isoperimetric;
        let _ = writeln!(
            o,
            "[isoperimetric]\nphis = {}\nseeds = {}\nvertices = {}\ntol = {:?}\nmax_iters = {}\nresample_every = {}\nmin_speed = {:?}\n",
            list(&i.phis), i.seeds, i.vertices, i.tol, i.max_iters, i.resample_every, i.min_speed
        );
        let l = &self.lemmas;
        let _ = writeln!(o, "[lemmas]\nsubadd_draws = {}\nseries_draws = {}\nseries_rows = {}\n", l.subadd_draws, l.series_draws, l.series_rows);
        let _ = writeln!(o, "[rng]\nseed = {}", self.seed);
        o
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::cubic(self.grid.n, self.grid.l)
    }

    pub fn sigma_params(&self) -> SigmaParams {
        SigmaParams { tol: self.field.sigma_tol, delta: self.field.sigma_delta, ..SigmaParams::default() }
    }

    pub fn build_field(&self) -> Result<VelocityField> {
        self.build_field_on(self.grid()?)
    }

    /// The configured field on another grid of the same box.
    pub fn build_field_on(&self, grid: TorusGrid) -> Result<VelocityField> {
        let sp = self.sigma_params();
        let c = &self.field.centers;
        let mut x = match self.field.kind {
            FieldKind::TwoBumps => VelocityField::two_bumps(grid, Point(c[0]), Point(c[1]), self.field.width.unwrap_or(0.0), &sp)?,
            FieldKind::SingleBump => VelocityField::single_bump(grid, Point(c[0]), self.field.width.unwrap_or(0.0), &sp)?,
            FieldKind::Mode => VelocityField::mode(grid, &sp)?,
        };
        x.set_interp(match self.photography.interp {
            InterpKind::Spline => Interp::CubicSpline,
            InterpKind::Trilinear => Interp::Trilinear,
        });
        Ok(x)
    }

    pub fn potential(&self) -> Potential {
        let p = &self.potential;
        match p.kind {
            PotentialKind::Quartic => quartic_potential(),
            PotentialKind::Custom => Potential::custom(p.coefficients.clone(), p.p, p.c_sc1, p.c_sc2, p.alpha_c, p.r_c),
        }
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature { radial: self.photography.radial, angular: self.photography.angular }
    }

    pub fn solver_config(&self, eps: f64, phi: f64) -> Result<SolverConfig> {
        let s = &self.solver;
        let mut c = SolverConfig::new(eps, phi)?;
        c.max_iters = s.max_iters;
        c.tol_res = s.tol_res;
        c.armijo = Armijo { c1: s.c1, backtrack: s.backtrack, step0: s.step0 };
        c.restore_every = s.restore_every;
        c.memory = s.memory;
        c.precondition = s.precondition;
        c.stencil = s.stencil;
        c.history_stride = s.history_stride;
        c.validate()?;
        Ok(c)
    }

    pub fn loop_config(&self) -> LoopConfig {
        let i = &self.isoperimetric;
        LoopConfig { tol: i.tol, max_iters: i.max_iters, resample_every: i.resample_every, vertices: i.vertices, ..LoopConfig::default() }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nn = 32\nL = 2.0\n\n[field]\nkind = two_bumps\ncenters = 0.5,1,1; 1.5,1,1\nwidth = 0.24\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = ExperimentConfig::parse_str(MINIMAL).unwrap();
        assert_eq!(c.grid, GridConfig { n: 32, l: 2.0 });
        assert_eq!(c.field.centers, vec![[0.5, 1.0, 1.0], [1.5, 1.0, 1.0]]);
        assert_eq!(c.field.sigma_tol, 1e-3);
        assert_eq!(c.potential.kind, PotentialKind::Quartic);
        assert_eq!(c.solver.stencil, Stencil::Compact);
        assert_eq!(c.solver.max_iters, 5000);
        assert_eq!(c.photography.alpha, None);
        assert_eq!(c.diagnostics.eta, 0.9);
        assert_eq!(c.diagnostics.mu, 2.0);
        assert_eq!(c.isoperimetric.phis.len(), 4);
        assert_eq!(c.lemmas.subadd_draws, 100_000);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn odd_grid_names_the_key() {
        let text = MINIMAL.replace("n = 32", "n = 15");
        match ExperimentConfig::parse_str(&text) {
            Err(GpxError::Validation { key, msg }) => {
                assert_eq!(key, "grid.n");
                assert!(msg.contains("line 2"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let text = format!("{MINIMAL}\n[solver]\ntol_rez = 1e-5\n");
        match ExperimentConfig::parse_str(&text) {
            Err(GpxError::Parse { line, msg }) => {
                assert_eq!(line, 11);
                assert!(msg.contains("solver.tol_rez"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            ("[grid]\nn = 32\nL = 1\n", "field"),
            ("[field]\nkind = mode\n", "grid"),
            ("n = 32\n", "outside"),
            ("[grid\n", "unterminated"),
            ("[gird]\n", "unknown section"),
            ("[grid]\nn = 32\nn = 34\n", "duplicate"),
            ("[grid]\nn = x\n", "expected"),
            ("[grid]\nn\n", "key = value"),
        ];
        for (text, needle) in cases {
            let e = ExperimentConfig::parse_str(text).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?}: {e}");
        }
        let bad = [
            MINIMAL.replace("width = 0.24", "width = 0.3"),
            MINIMAL.replace("centers = 0.5,1,1; 1.5,1,1", "centers = 0.5,1,1"),
            MINIMAL.replace("L = 2.0", "L = -1"),
            format!("{MINIMAL}[potential]\nkind = custom\n"),
            format!("{MINIMAL}[solver]\nc1 = 2\n"),
            format!("{MINIMAL}[diagnostics]\neta = 1.5\n"),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::parse_str(&text), Err(GpxError::Validation { .. })), "{text}");
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = format!(
            "{MINIMAL}sigma_tol = 0.01\nsigma_delta = 0.2\n[potential]\nkind = custom\ncoefficients = 0.25,-0.5,0.25,0.1\np = 6\n\
             [solver]\nstencil = central\nmemory = 0\n[photography]\nalpha = 1.7\ninterp = trilinear\n[isoperimetric]\nphis = 0.1,0.01\n[rng]\nseed = 99\n"
        );
        let c = ExperimentConfig::parse_str(&text).unwrap();
        let canon = c.canonical();
        let d = ExperimentConfig::parse_str(&canon).unwrap();
        assert_eq!(c, d);
        assert_eq!(canon, d.canonical());
        assert_eq!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 64);
        let e = ExperimentConfig::parse_str(&text.replace("seed = 99", "seed = 98")).unwrap();
        assert_ne!(c.hash(), e.hash());
        let m = ExperimentConfig::parse_str(MINIMAL).unwrap();
        assert_eq!(m, ExperimentConfig::parse_str(&m.canonical()).unwrap());
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{}", MINIMAL.replace("n = 32", "n = 32   # grid size"));
        assert_eq!(ExperimentConfig::parse_str(&text).unwrap().grid.n, 32);
    }

    #[test]
    fn builds_the_configured_objects() {
        let c = ExperimentConfig::parse_str(&MINIMAL.replace("n = 32", "n = 16")).unwrap();
        let x = c.build_field().unwrap();
        assert_eq!(x.grid().counts(), [16; 3]);
        assert_eq!(x.interp(), Interp::CubicSpline);
        let s = c.solver_config(0.05, 0.03).unwrap();
        assert_eq!(s.stencil, Stencil::Compact);
        assert_eq!(c.potential().coeffs(), quartic_potential::<f64>().coeffs());
        assert_eq!(c.loop_config().vertices, 64);
    }
}
