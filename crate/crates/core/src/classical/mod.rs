//! Classical Hamiltonian flow, open-system Ehrenfest checks and the
//! branch-versus-classical reduction verdict.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{HamiltonianSpec, MasterHistory};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trajectory::{csv_error, SampledTrajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState<T> {
    pub q: T,
    pub p: T,
    pub t: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalTrajectory<T> {
    pub states: Vec<ClassicalState<T>>,
    /// First time the orbit left the supplied position range, if it did.
    pub exit_time: Option<T>,
}

impl<T: Real> ClassicalTrajectory<T> {
    pub fn end_time(&self) -> T {
        self.states.last().map(|s| s.t).unwrap_or_else(T::zero)
    }

    /// Linear interpolation of `(q, p)` at `t`; `None` outside the run.
    pub fn at(&self, t: T) -> Option<(T, T)> {
        let s = &self.states;
        let first = s.first()?;
        let tol = T::lit(1e-9) * (T::one() + self.end_time().abs());
        if t < first.t - tol || t > self.end_time() + tol {
            return None;
        }
        let k = s.partition_point(|x| x.t <= t).clamp(1, s.len().max(2) - 1);
        if s.len() == 1 {
            return Some((first.q, first.p));
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let f = ((t - a.t) / (b.t - a.t)).max(T::zero()).min(T::one());
        Some((a.q + (b.q - a.q) * f, a.p + (b.p - a.p) * f))
    }

    /// `∮ p dq` over the first full period (three successive sign changes
    /// of `p`), the diagnostic action scale; `None` if no period closes.
    pub fn action_per_period(&self) -> Option<T> {
        let s = &self.states;
        let mut crossings = Vec::new();
        for k in 1..s.len() {
            if (s[k - 1].p < T::zero()) != (s[k].p < T::zero()) {
                crossings.push(k);
                if crossings.len() == 3 {
                    break;
                }
            }
        }
        if crossings.len() < 3 {
            return None;
        }
        let mut area = T::zero();
        for k in crossings[0]..crossings[2] {
            area += T::lit(0.5) * (s[k].p + s[k + 1].p) * (s[k + 1].q - s[k].q);
        }
        Some(area.abs())
    }
}

/// Velocity-Verlet leapfrog from `initial`. With `q_range`, the first time
/// the orbit leaves it is recorded in `exit_time`.
pub fn integrate_classical<T: Real>(
    initial: ClassicalState<T>,
    ham: &HamiltonianSpec<T>,
    dt: T,
    steps: usize,
    q_range: Option<(T, T)>,
) -> Result<ClassicalTrajectory<T>> {
    ham.validate()?;
    if !(dt > T::zero()) || !initial.q.is_finite() || !initial.p.is_finite() {
        return Err(Error::InvalidSpec("classical integration needs dt > 0 and a finite start".into()));
    }
    let half = T::lit(0.5) * dt;
    let mut s = initial;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(s);
    let mut exit_time = None;
    let outside = |q: T| q_range.is_some_and(|(lo, hi)| q < lo || q > hi);
    if outside(s.q) {
        exit_time = Some(s.t);
    }
    let mut force = ham.force_gradient(s.q);
    for k in 1..=steps {
        s.p -= half * force;
        s.q += dt * s.p / ham.mass;
        force = ham.force_gradient(s.q);
        s.p -= half * force;
        s.t = initial.t + dt * T::from_usize(k).unwrap();
        if exit_time.is_none() && outside(s.q) {
            exit_time = Some(s.t);
        }
        states.push(s);
    }
    Ok(ClassicalTrajectory { states, exit_time })
}

/// Ehrenfest residuals on the interior times of a master history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EhrenfestResiduals<T> {
    pub times: Vec<T>,
    /// `|d<P>/dt + <V'(X)>|`.
    pub r1: Vec<T>,
    /// `|<V'(X)> - V'(<X>)|`.
    pub r2: Vec<T>,
}

impl<T: Real> EhrenfestResiduals<T> {
    pub fn max_r1(&self) -> T {
        self.r1.iter().copied().fold(T::zero(), T::max)
    }

    pub fn max_r2(&self) -> T {
        self.r2.iter().copied().fold(T::zero(), T::max)
    }
}

/// `(<V'(X)>, <X>)` from a stored position density.
fn force_moments<T: Real>(history: &MasterHistory<T>, k: usize, ham: &HamiltonianSpec<T>) -> (T, T) {
    let g = &history.grid;
    let dx = g.spacing();
    let mut f = T::zero();
    let mut m = T::zero();
    for (j, &d) in history.position_density[k].iter().enumerate() {
        let x = g.position(j);
        f += d * ham.force_gradient(x);
        m += d * x;
    }
    (f * dx, m * dx)
}

/// `d<P>/dt` by centered differences with one Richardson refinement, so
/// residuals start two records in from each end.
pub fn ehrenfest_residual<T: Real>(history: &MasterHistory<T>, ham: &HamiltonianSpec<T>) -> Result<EhrenfestResiduals<T>> {
    let n = history.times.len();
    if n < 5 || history.position_density.len() != n {
        return Err(Error::HistoryTooShort(format!(
            "{n} records; differentiation needs at least 5 with position densities"
        )));
    }
    let h = history.times[1] - history.times[0];
    let p = &history.mean_p;
    let mut out = EhrenfestResiduals {
        times: Vec::with_capacity(n - 4),
        r1: Vec::with_capacity(n - 4),
        r2: Vec::with_capacity(n - 4),
    };
    for i in 2..n - 2 {
        let d1 = (p[i + 1] - p[i - 1]) / (T::lit(2.0) * h);
        let d2 = (p[i + 2] - p[i - 2]) / (T::lit(4.0) * h);
        let dp = (T::lit(4.0) * d1 - d2) / T::lit(3.0);
        let (f, mean_x) = force_moments(history, i, ham);
        out.times.push(history.times[i]);
        out.r1.push((dp + f).abs());
        out.r2.push((f - ham.force_gradient(mean_x)).abs());
    }
    Ok(out)
}

/// Standard deviation of `<x|rho(t)|x>` at every recorded time.
pub fn ensemble_spreading_estimate<T: Real>(history: &MasterHistory<T>) -> Vec<T> {
    let g = &history.grid;
    let x = g.positions();
    history
        .position_density
        .iter()
        .map(|d| {
            let w: T = d.iter().copied().fold(T::zero(), |a, b| a + b);
            let m = d.iter().zip(&x).fold(T::zero(), |a, (d, x)| a + *d * *x) / w;
            let m2 = d.iter().zip(&x).fold(T::zero(), |a, (d, x)| a + *d * *x * *x) / w;
            (m2 - m * m).max(T::zero()).sqrt()
        })
        .collect()
}

/// Classicality bounds: branch trajectories must stay within `2δ` of the
/// classical one for `t < tau` with probability at least `1 - epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub delta_x: f64,
    pub delta_p: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_x > 0.0 && self.delta_p > 0.0 && self.tau > 0.0;
        if !ok || !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidSpec(format!(
                "tolerance {self:?} needs positive deltas and tau and 0 < epsilon < 0.5"
            )));
        }
        Ok(())
    }

    pub fn bound_q(&self) -> f64 {
        2.0 * self.delta_x
    }

    pub fn bound_p(&self) -> f64 {
        2.0 * self.delta_p
    }
}

pub const EXIT_QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];
const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    /// Fraction of samples that left the bound before `tau`.
    pub violation_fraction: f64,
    /// Fraction that stayed, the classical fraction of the ensemble.
    pub classical_fraction: f64,
    /// Quantiles of first-exit time, with samples that never exit counted
    /// at `tau` (right-censored).
    pub first_exit_quantiles: Vec<(f64, f64)>,
    /// Exits per bin over `[0, tau)`; `censored` never exited.
    pub first_exit_histogram: Vec<usize>,
    pub censored: usize,
    pub tol: Tolerance,
    pub bound_q: f64,
    pub bound_p: f64,
    pub seeds: Vec<(u64, u64)>,
    pub times: Vec<f64>,
    /// Fraction of samples outside the bound at each time.
    pub violation_rate: Vec<f64>,
    /// Fraction of samples that have exited by each time.
    pub cumulative_exit: Vec<f64>,
}

impl Verdict {
    pub fn median_first_exit(&self) -> f64 {
        self.first_exit_quantiles
            .iter()
            .find(|(q, _)| *q == 0.5)
            .map(|x| x.1)
            .unwrap_or(f64::NAN)
    }

    /// Rows `t,violation_rate,cumulative_exit`.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "violation_rate", "cumulative_exit"]).map_err(csv_error)?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                self.violation_rate[k].to_string(),
                self.cumulative_exit[k].to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Sup-norm comparison of every sample with `classical` over `t < tau`.
pub fn reduction_verdict(
    samples: &[SampledTrajectory],
    classical: &ClassicalTrajectory<f64>,
    tol: &Tolerance,
) -> Result<Verdict> {
    tol.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidSpec("reduction verdict needs at least one sample".into()))?;
    let longest = samples.iter().max_by_key(|s| s.len()).unwrap_or(first);
    let times: Vec<f64> = longest.times.iter().copied().filter(|&t| t < tol.tau).collect();
    let sample_end = *longest.times.last().unwrap_or(&0.0);
    // "for all t < tau" is unchecked unless the run reaches the horizon
    if sample_end < tol.tau * (1.0 - 1e-9) {
        return Err(Error::Horizon(format!("samples end at t = {sample_end}, before tau = {}", tol.tau)));
    }
    if classical.end_time() + 1e-9 < times.last().copied().unwrap_or(0.0) {
        return Err(Error::Horizon(format!(
            "classical run ends at t = {}, before the last compared time",
            classical.end_time()
        )));
    }
    let reference: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| classical.at(t).ok_or_else(|| Error::Horizon(format!("no classical state at t = {t}"))))
        .collect::<Result<_>>()?;
    let (bq, bp) = (tol.bound_q(), tol.bound_p());
    let mut violation_rate = vec![0.0; times.len()];
    let mut cumulative_exit = vec![0.0; times.len()];
    let mut exits = Vec::with_capacity(samples.len());
    let mut histogram = vec![0usize; HISTOGRAM_BINS];
    let mut censored = 0;
    for s in samples {
        // a sample that escaped the window before tau exits at its escape
        let seen = s.times.len().min(times.len());
        let cut = s.escaped_at.is_some() && seen < times.len();
        if (seen < times.len() && !cut) || s.times[..seen] != times[..seen] {
            return Err(Error::Horizon("samples do not share one time grid".into()));
        }
        let mut exit = None;
        for (k, &(cq, cp)) in reference.iter().enumerate() {
            let out = k >= seen || (s.q_values[k] - cq).abs() >= bq || (s.p_values[k] - cp).abs() >= bp;
            if out {
                violation_rate[k] += 1.0;
                if exit.is_none() {
                    exit = Some(k);
                }
            }
        }
        match exit {
            Some(k) => {
                for c in &mut cumulative_exit[k..] {
                    *c += 1.0;
                }
                let t = times[k];
                let bin = ((t / tol.tau) * HISTOGRAM_BINS as f64) as usize;
                histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
                exits.push(t);
            }
            None => {
                censored += 1;
                exits.push(tol.tau);
            }
        }
    }
    let n = samples.len() as f64;
    violation_rate.iter_mut().for_each(|v| *v /= n);
    cumulative_exit.iter_mut().for_each(|v| *v /= n);
    exits.sort_by(f64::total_cmp);
    let violation_fraction = (samples.len() - censored) as f64 / n;
    Ok(Verdict {
        pass: 1.0 - violation_fraction >= 1.0 - tol.epsilon,
        violation_fraction,
        classical_fraction: 1.0 - violation_fraction,
        first_exit_quantiles: EXIT_QUANTILES.iter().map(|&q| (q, quantile(&exits, q))).collect(),
        first_exit_histogram: histogram,
        censored,
        tol: *tol,
        bound_q: bq,
        bound_p: bp,
        seeds: samples.iter().map(|s| (s.seed, s.stream)).collect(),
        times,
        violation_rate,
        cumulative_exit,
    })
}
