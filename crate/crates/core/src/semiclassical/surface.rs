use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{median, GeneratingFunction, SemiclassicalWave, C64, DEFAULT_CAUSTIC_FLOOR};
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::trajectory::csv_error;

/// Name of the clustering measure reported by the fold diagnostic.
pub const LOBE_MEASURE: &str = "shoelace area between consecutive folds";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    /// Curve label, conserved by the flow.
    pub s: f64,
    pub q: f64,
    pub p: f64,
}

/// Interior extremum of `q` along the curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FoldRecord {
    /// Sample index nearest the fold.
    pub index: usize,
    /// Interpolated label and caustic position.
    pub s: f64,
    pub q: f64,
}

/// Weight carried along the curve as a function of the label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    Uniform,
    Gaussian { center: f64, width: f64 },
}

impl Envelope {
    pub fn weight(&self, s: f64) -> f64 {
        match self {
            Envelope::Uniform => 1.0,
            Envelope::Gaussian { center, width } => (-(s - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }
}

/// Lagrangian curve as an ordered polyline in phase space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangianSurface {
    pub samples: Vec<SurfaceSample>,
    pub folds: Vec<FoldRecord>,
    /// Starting point of each sample, used to place inserted samples.
    pub origins: Vec<(f64, f64)>,
    pub time: f64,
    /// Action `S` at the first sample.
    pub action_offset: f64,
    pub envelope: Envelope,
}

impl LagrangianSurface {
    /// Curve through `(s, q, p)` points, which must be ordered by `s`.
    pub fn from_points(points: Vec<SurfaceSample>, action_offset: f64, envelope: Envelope) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidSpec("a surface needs at least 3 samples".into()));
        }
        if points.iter().any(|x| !(x.q.is_finite() && x.p.is_finite() && x.s.is_finite())) {
            return Err(Error::InvalidSpec("surface samples must be finite".into()));
        }
        if points.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::InvalidSpec("surface samples must be strictly ordered by s".into()));
        }
        let origins = points.iter().map(|x| (x.q, x.p)).collect();
        let mut s = LagrangianSurface {
            samples: points,
            folds: Vec::new(),
            origins,
            time: 0.0,
            action_offset,
            envelope,
        };
        s.folds = find_folds(&s.samples);
        Ok(s)
    }

    /// `(q, ∂S/∂q)` over `range`, labelled by `∂S/∂P`.
    pub fn from_generating_function(gen: &GeneratingFunction, range: (f64, f64), n: usize) -> Result<Self> {
        gen.validate()?;
        let (lo, hi) = gen.domain();
        if !(range.0 > lo && range.1 < hi && range.1 > range.0) {
            return Err(Error::InvalidSpec(format!("range {range:?} is not inside the domain ({lo}, {hi})")));
        }
        let pts: Vec<SurfaceSample> = (0..n)
            .map(|k| {
                let q = range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64;
                SurfaceSample {
                    s: gen.label(q),
                    q,
                    p: gen.momentum(q),
                }
            })
            .collect();
        let mut pts = pts;
        if pts.len() > 1 && pts[1].s < pts[0].s {
            pts.reverse();
        }
        let q0 = pts[0].q;
        Self::from_points(pts, gen.action(q0), Envelope::Uniform)
    }

    /// Momentum segment at fixed `q`, labelled by `p`.
    pub fn vertical_segment(q: f64, p: (f64, f64), n: usize) -> Result<Self> {
        let pts = (0..n)
            .map(|k| {
                let pk = p.0 + (p.1 - p.0) * k as f64 / (n - 1) as f64;
                SurfaceSample { s: pk, q, p: pk }
            })
            .collect();
        Self::from_points(pts, 0.0, Envelope::Uniform)
    }

    /// One full energy shell starting at the left turning point and running
    /// along `p > 0` first, labelled by the time of flight. The right
    /// turning point is the single interior fold.
    pub fn energy_shell(ham: &HamiltonianSpec<f64>, energy: f64, n: usize, search: (f64, f64)) -> Result<Self> {
        let f = |q: f64| energy - ham.potential(q);
        // turning points around the minimum inside `search`
        let scan = 4096;
        let h = (search.1 - search.0) / scan as f64;
        let mut lo = None;
        let mut hi = None;
        for k in 0..scan {
            let (a, b) = (search.0 + k as f64 * h, search.0 + (k + 1) as f64 * h);
            if f(a) <= 0.0 && f(b) > 0.0 && lo.is_none() {
                lo = Some(bisect(f, a, b));
            } else if f(a) > 0.0 && f(b) <= 0.0 && lo.is_some() {
                hi = Some(bisect(f, a, b));
                break;
            }
        }
        let (Some(ql), Some(qr)) = (lo, hi) else {
            return Err(Error::ClassicallyForbidden { energy });
        };
        let c = 0.5 * (ql + qr);
        let r = 0.5 * (qr - ql);
        let point = |phi: f64| {
            let q = c - r * phi.cos();
            let p = (2.0 * ham.mass * f(q).max(0.0)).sqrt();
            (q, if phi.sin() >= 0.0 { p } else { -p })
        };
        // dt/dφ = M |dq/dφ| / |p|, finite at the turning points
        let rate = |phi: f64| {
            let q = c - r * phi.cos();
            let p = (2.0 * ham.mass * f(q).max(1e-300)).sqrt();
            ham.mass * r * phi.sin().abs() / p
        };
        let dphi = std::f64::consts::TAU / n as f64;
        let mut s = 0.0;
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            let phi = k as f64 * dphi;
            let (q, p) = point(phi);
            pts.push(SurfaceSample { s, q, p });
            for (x, w) in super::wkb::gl_rule() {
                s += w * 0.5 * dphi * rate(phi + 0.5 * dphi * (1.0 + x));
            }
        }
        Self::from_points(pts, 0.0, Envelope::Uniform)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest phase-space distance between neighboring samples.
    pub fn max_gap(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].q - w[0].q).hypot(w[1].p - w[0].p))
            .fold(0.0, f64::max)
    }

    /// Polyline length in `(q, p/scale)`.
    pub fn arc_length(&self, scale: f64) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].q - w[0].q).hypot((w[1].p - w[0].p) / scale))
            .sum()
    }

    /// Rows `s,q,p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "q", "p"]).map_err(csv_error)?;
        for x in &self.samples {
            w.write_record([x.s.to_string(), x.q.to_string(), x.p.to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Single-valued pieces between folds, as sample-index ranges.
    fn branches(&self) -> Vec<(usize, usize)> {
        let mut cuts = vec![0];
        cuts.extend(self.folds.iter().map(|f| f.index));
        cuts.push(self.samples.len() - 1);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Interior sign changes of `dq/ds`, ignoring flat steps.
pub(crate) fn find_folds(samples: &[SurfaceSample]) -> Vec<FoldRecord> {
    let mut folds = Vec::new();
    let mut last_sign = 0.0;
    let mut last_k = 0;
    for k in 0..samples.len() - 1 {
        let d = samples[k + 1].q - samples[k].q;
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        if last_sign != 0.0 && sign != last_sign {
            // extremum at sample k; refine with the parabola through k-1, k, k+1
            let k0 = if k > last_k + 1 { k } else { last_k + 1 };
            let (a, b, c) = (samples[k0 - 1], samples[k0], samples[k0 + 1]);
            let denom = a.q - 2.0 * b.q + c.q;
            let u = if denom != 0.0 {
                (0.5 * (a.q - c.q) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            let q = b.q - 0.25 * (a.q - c.q) * u;
            let s = if u >= 0.0 { b.s + u * (c.s - b.s) } else { b.s + u * (b.s - a.s) };
            folds.push(FoldRecord { index: k0, s, q });
        }
        last_sign = sign;
        last_k = k;
    }
    folds
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurfaceOptions {
    /// Largest allowed neighbor gap; `None` means twice the initial one.
    pub max_gap: Option<f64>,
    pub max_samples: usize,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            max_gap: None,
            max_samples: 200_000,
        }
    }
}

fn leapfrog(ham: &HamiltonianSpec<f64>, q: &mut f64, p: &mut f64, dt: f64) {
    *p -= 0.5 * dt * ham.force_gradient(*q);
    *q += dt * *p / ham.mass;
    *p -= 0.5 * dt * ham.force_gradient(*q);
}

/// Advances every sample by `steps` leapfrog steps, inserting midpoints
/// (re-integrated from their interpolated origin) wherever a neighbor gap
/// exceeds the bound, then recomputes folds.
pub fn evolve_surface(
    surface: &LagrangianSurface,
    ham: &HamiltonianSpec<f64>,
    dt: f64,
    steps: usize,
    options: &SurfaceOptions,
) -> Result<LagrangianSurface> {
    ham.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidSpec("surface flow needs dt > 0".into()));
    }
    let bound = options.max_gap.unwrap_or(2.0 * surface.max_gap());
    let mut out = surface.clone();
    // step count since the origins, so inserted points replay the same steps
    let done = (surface.time / dt).round() as usize;
    let lagrangian = |q: f64, p: f64| p * p / (2.0 * ham.mass) - ham.potential(q);
    for step in 0..steps {
        let first = out.samples[0];
        for x in &mut out.samples {
            leapfrog(ham, &mut x.q, &mut x.p, dt);
        }
        let last = out.samples[0];
        out.action_offset += 0.5 * dt * (lagrangian(first.q, first.p) + lagrangian(last.q, last.p));
        out.time += dt;
        let elapsed = done + step + 1;
        let mut k = 0;
        while k + 1 < out.samples.len() {
            let (a, b) = (out.samples[k], out.samples[k + 1]);
            if (b.q - a.q).hypot(b.p - a.p) <= bound {
                k += 1;
                continue;
            }
            if out.samples.len() >= options.max_samples {
                return Err(Error::ResampleBudget(options.max_samples));
            }
            let (oa, ob) = (out.origins[k], out.origins[k + 1]);
            let origin = (0.5 * (oa.0 + ob.0), 0.5 * (oa.1 + ob.1));
            let (mut q, mut p) = origin;
            for _ in 0..elapsed {
                leapfrog(ham, &mut q, &mut p, dt);
            }
            out.samples.insert(k + 1, SurfaceSample { s: 0.5 * (a.s + b.s), q, p });
            out.origins.insert(k + 1, origin);
        }
    }
    out.folds = find_folds(&out.samples);
    Ok(out)
}

/// Piece of the curve between two consecutive folds, closed by the chord
/// joining them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lobe {
    /// Indices into the surface's fold list.
    pub folds: (usize, usize),
    pub area: f64,
}

/// Branch momentum at `q` by linear interpolation, if `q` is covered.
fn branch_at(samples: &[SurfaceSample], q: f64) -> Option<(usize, f64)> {
    let increasing = samples[samples.len() - 1].q >= samples[0].q;
    let key = |x: &SurfaceSample| if increasing { x.q } else { -x.q };
    let t = if increasing { q } else { -q };
    if t < key(&samples[0]) || t > key(&samples[samples.len() - 1]) {
        return None;
    }
    let k = samples.partition_point(|x| key(x) <= t).clamp(1, samples.len() - 1);
    let (a, b) = (&samples[k - 1], &samples[k]);
    let f = if b.q != a.q { (q - a.q) / (b.q - a.q) } else { 0.0 };
    Some((k - 1, a.p + f * (b.p - a.p)))
}

/// Shoelace areas of the lobes between consecutive folds.
pub fn lobes(surface: &LagrangianSurface) -> Vec<Lobe> {
    surface
        .folds
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let piece = &surface.samples[w[0].index..=w[1].index];
            let mut twice = 0.0;
            for (a, b) in piece.iter().zip(piece.iter().cycle().skip(1)) {
                twice += a.q * b.p - b.q * a.p;
            }
            Lobe {
                folds: (k, k + 1),
                area: 0.5 * twice.abs(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub measure: &'static str,
    pub time: f64,
    pub hbar: f64,
    pub fold_count: usize,
    pub folds: Vec<FoldRecord>,
    pub lobes: Vec<Lobe>,
    pub min_lobe_area: f64,
    /// `min_lobe_area / hbar`.
    pub ratio: f64,
    pub breakdown: bool,
}

/// Smallest lobe against `hbar`; BREAKDOWN when the ratio is below 1.
pub fn fold_spacing_diagnostic(surface: &LagrangianSurface, hbar: f64) -> Result<FoldReport> {
    if surface.folds.len() < 2 {
        return Err(Error::TooFewFolds(surface.folds.len()));
    }
    let lobes = lobes(surface);
    let min = lobes.iter().map(|l| l.area).fold(f64::INFINITY, f64::min);
    Ok(FoldReport {
        measure: LOBE_MEASURE,
        time: surface.time,
        hbar,
        fold_count: surface.folds.len(),
        folds: surface.folds.clone(),
        lobes,
        min_lobe_area: min,
        ratio: min / hbar,
        breakdown: min / hbar < 1.0,
    })
}

/// Sum over single-valued pieces of `sqrt(w(s)|ds/dq|) e^{iS/ħ - iμπ/2}`,
/// with `μ` the number of folds before the piece and `S` accumulated as
/// `∫ p dq` along the curve. Refuses when any lobe is not larger than ħ.
pub fn multibranch_maslov(surface: &LagrangianSurface, grid: &Grid<f64>, hbar: f64) -> Result<SemiclassicalWave> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidSpec("hbar must be positive".into()));
    }
    if !surface.folds.is_empty() {
        if let Some(l) = lobes(surface).into_iter().min_by(|a, b| a.area.total_cmp(&b.area)) {
            if l.area <= hbar {
                return Err(Error::Breakdown {
                    area: l.area,
                    ratio: l.area / hbar,
                });
            }
        }
    }
    let samples = &surface.samples;
    let mut action = vec![surface.action_offset; samples.len()];
    for k in 1..samples.len() {
        let (a, b) = (samples[k - 1], samples[k]);
        action[k] = action[k - 1] + 0.5 * (a.p + b.p) * (b.q - a.q);
    }
    let branches = surface.branches();
    let x = grid.positions();
    let n = x.len();
    // per point: (branch, density, phase)
    let mut terms: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
    for (b, &(i, j)) in branches.iter().enumerate() {
        if j <= i {
            return Err(Error::BranchTopology(format!("piece {b} has no extent")));
        }
        let piece = &samples[i..=j];
        for (m, &q) in x.iter().enumerate() {
            let Some((k, p)) = branch_at(piece, q) else { continue };
            let (a, c) = (piece[k], piece[k + 1]);
            if c.q == a.q {
                continue;
            }
            let f = (q - a.q) / (c.q - a.q);
            let s = a.s + f * (c.s - a.s);
            let dsdq = ((c.s - a.s) / (c.q - a.q)).abs();
            let phase = action[i + k] + 0.5 * (a.p + p) * (q - a.q);
            terms[m].push((b, surface.envelope.weight(s) * dsdq, phase));
        }
    }
    let med = median(terms.iter().flatten().map(|t| t.1).filter(|d| *d > 0.0).collect());
    if !med.is_finite() {
        return Err(Error::InvalidState("surface does not cover the grid".into()));
    }
    let cap = med / DEFAULT_CAUSTIC_FLOOR;
    let mut amps = vec![C64::new(0.0, 0.0); n];
    let mut caustic = vec![false; n];
    let mut ids = vec![-1; n];
    for m in 0..n {
        let mut best = 0.0;
        for &(b, d, phase) in &terms[m] {
            if d > cap {
                caustic[m] = true;
            }
            let a = d.min(cap).sqrt();
            let mu = b as f64;
            amps[m] += C64::from_polar(a, phase / hbar - mu * std::f64::consts::FRAC_PI_2);
            if a > best {
                best = a;
                ids[m] = b as i32;
            }
        }
    }
    let indices = (0..branches.len() as i32).collect();
    SemiclassicalWave::assemble(grid, hbar, amps, caustic, ids, indices)
}
