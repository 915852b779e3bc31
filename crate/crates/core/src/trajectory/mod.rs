//! Born-rule sampling of single branch sequences and the branch-relative
//! phase-space trajectories they carry.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::WarningCounters;
use crate::error::{Error, Result};
use crate::histories::{apply_element, outcome_weights, BranchIndex, BranchState, Evolution};
use crate::partition::Povm;

/// Largest fraction of a branch's weight allowed to fall outside the
/// window in one step before sampling refuses to continue.
pub const DEFAULT_ESCAPE_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_EXEMPLARS: usize = 10;

/// One sampled measurement step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Position of the drawn element in the POVM.
    pub element: usize,
    pub cell: (i32, i32),
    /// Born probability `w_child / w_parent`.
    pub probability: f64,
    /// Child state rescaled to unit weight.
    pub state: BranchState,
    /// Parent weight the window did not cover.
    pub escaped: f64,
}

/// Evolves a normalized branch state over `dt`, measures it and draws one
/// outcome with its Born probability.
///
/// The draw is conditioned on landing inside the window; the uncovered
/// weight is reported and rejected above `escape_tolerance`.
pub fn sample_step<R: Rng + ?Sized>(
    state: &BranchState,
    povm: &Povm,
    evolution: &Evolution,
    dt: f64,
    escape_tolerance: f64,
    rng: &mut R,
    warnings: &mut WarningCounters,
) -> Result<StepOutcome> {
    let mut s = state.clone();
    evolution.advance(&mut s, dt, warnings)?;
    let (weights, parent) = outcome_weights(&s, povm)?;
    let covered: f64 = weights.iter().map(|w| w.1).sum();
    let escaped = (parent - covered) / parent;
    if weights.is_empty() || !(covered > 0.0) || escaped > escape_tolerance {
        return Err(Error::EscapedWindow(escaped.max(0.0)));
    }
    let u = rng.random::<f64>() * covered;
    let mut acc = 0.0;
    let mut pick = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        acc += w.1;
        if u < acc {
            pick = k;
            break;
        }
    }
    let (element, w) = weights[pick];
    let child = apply_element(&s, povm, element)?;
    Ok(StepOutcome {
        element,
        cell: povm.elements[element].index(),
        probability: w / parent,
        state: child.normalized(),
        escaped,
    })
}

/// Branch-relative `(<X>, <P>)` of a normalized branch state.
pub fn branch_expectations(state: &BranchState) -> (f64, f64) {
    state.expectations()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledTrajectory {
    /// Measurement times, starting with the initial time 0.
    pub times: Vec<f64>,
    pub q_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// One cell per step; shorter than `times` by one.
    pub branch_index: BranchIndex,
    /// Born probability of each step.
    pub step_probs: Vec<f64>,
    /// `Σ log step_probs`.
    pub log_weight: f64,
    /// Master seed and stream (sample id) that reproduce this sample.
    pub seed: u64,
    pub stream: u64,
    /// Largest position spread of the branch state over the run.
    pub max_spread: f64,
    /// Time of the step that escaped the window, when the escape policy
    /// truncates instead of failing. The sample ends at the step before.
    pub escaped_at: Option<f64>,
}

impl SampledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Rows `t,q,p,cell_q_index,cell_p_index,step_prob`; the initial row
    /// has empty cell fields and probability 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "q", "p", "cell_q_index", "cell_p_index", "step_prob"])
            .map_err(csv_error)?;
        for k in 0..self.times.len() {
            let (ci, cj, prob) = if k == 0 {
                (String::new(), String::new(), 1.0)
            } else {
                let c = self.branch_index[k - 1];
                (c.0.to_string(), c.1.to_string(), self.step_probs[k - 1])
            };
            w.write_record([
                self.times[k].to_string(),
                self.q_values[k].to_string(),
                self.p_values[k].to_string(),
                ci,
                cj,
                prob.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Runs one sample: `n_steps` sampled evolve-measure steps from `initial`.
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory(
    initial: &BranchState,
    povm: &Povm,
    evolution: &Evolution,
    dt: f64,
    n_steps: usize,
    seed: u64,
    stream: u64,
    escape_tolerance: f64,
    policy: EscapePolicy,
    warnings: &mut WarningCounters,
) -> Result<SampledTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut state = initial.normalized();
    let (q0, p0) = branch_expectations(&state);
    let mut traj = SampledTrajectory {
        times: vec![0.0],
        q_values: vec![q0],
        p_values: vec![p0],
        branch_index: Vec::with_capacity(n_steps),
        step_probs: Vec::with_capacity(n_steps),
        log_weight: 0.0,
        seed,
        stream,
        max_spread: state.position_spread(),
        escaped_at: None,
    };
    for k in 1..=n_steps {
        let out = match sample_step(&state, povm, evolution, dt, escape_tolerance, &mut rng, warnings) {
            Err(Error::EscapedWindow(_)) if policy == EscapePolicy::Stop => {
                traj.escaped_at = Some(k as f64 * dt);
                break;
            }
            r => r?,
        };
        state = out.state;
        let (q, p) = branch_expectations(&state);
        traj.times.push(k as f64 * dt);
        traj.q_values.push(q);
        traj.p_values.push(p);
        traj.branch_index.push(out.cell);
        traj.step_probs.push(out.probability);
        traj.log_weight += out.probability.ln();
        traj.max_spread = traj.max_spread.max(state.position_spread());
    }
    Ok(traj)
}

/// What a sample does when its state leaves the partition window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapePolicy {
    /// Fail the whole run.
    #[default]
    Error,
    /// End the sample there and record `escaped_at`.
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleOptions {
    pub escape_tolerance: f64,
    pub escape_policy: EscapePolicy,
    /// Number of sample trajectories written out by `write_outputs`.
    pub exemplars: usize,
    /// Write every sample's CSV, not only the exemplars.
    pub store_all: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            escape_tolerance: DEFAULT_ESCAPE_TOLERANCE,
            escape_policy: EscapePolicy::Error,
            exemplars: DEFAULT_EXEMPLARS,
            store_all: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_samples: usize,
    pub master_seed: u64,
    pub times: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub mean_p: Vec<f64>,
    /// Ensemble standard deviations (n − 1 denominator).
    pub spread_q: Vec<f64>,
    pub spread_p: Vec<f64>,
    /// Samples still running at each time; below `n_samples` only after
    /// escapes under the stop policy.
    pub alive: Vec<usize>,
    /// Fraction of samples passing the classicality bound; filled in by
    /// the comparison against a classical trajectory.
    pub classical_fraction: Option<f64>,
}

impl EnsembleSummary {
    pub fn from_samples(samples: &[SampledTrajectory], master_seed: u64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidSpec("an ensemble needs at least one sample".into()))?;
        let longest = samples.iter().max_by_key(|s| s.len()).unwrap_or(first);
        let m = longest.len();
        // only samples cut short by an escape may be shorter
        if samples.iter().any(|s| s.len() > m || (s.len() < m && s.escaped_at.is_none())) {
            return Err(Error::InvalidSpec("ensemble samples have different lengths".into()));
        }
        let alive: Vec<usize> = (0..m).map(|k| samples.iter().filter(|s| s.len() > k).count()).collect();
        let stats = |pick: fn(&SampledTrajectory) -> &Vec<f64>| {
            let mut mean = vec![0.0; m];
            let mut spread = vec![0.0; m];
            for k in 0..m {
                let live = samples.iter().filter(|s| s.len() > k);
                let n = alive[k] as f64;
                let mu = live.clone().map(|s| pick(s)[k]).sum::<f64>() / n;
                let var = if alive[k] > 1 {
                    live.map(|s| (pick(s)[k] - mu).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                mean[k] = mu;
                spread[k] = var.sqrt();
            }
            (mean, spread)
        };
        let (mean_q, spread_q) = stats(|s| &s.q_values);
        let (mean_p, spread_p) = stats(|s| &s.p_values);
        Ok(EnsembleSummary {
            n_samples: samples.len(),
            master_seed,
            times: longest.times.clone(),
            alive,
            mean_q,
            mean_p,
            spread_q,
            spread_p,
            classical_fraction: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub summary: EnsembleSummary,
    /// Every sample, in sample-id order.
    pub samples: Vec<SampledTrajectory>,
    pub warnings: WarningCounters,
    pub options: EnsembleOptions,
}

impl Ensemble {
    /// Writes `summary.json` and the exemplar (or all) sample CSVs into
    /// `dir`, returning the paths written.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("summary.json");
        serde_json::to_writer_pretty(std::io::BufWriter::new(std::fs::File::create(&path)?), &self.summary)?;
        written.push(path);
        let count = if self.options.store_all {
            self.samples.len()
        } else {
            self.options.exemplars.min(self.samples.len())
        };
        for s in &self.samples[..count] {
            let path = dir.join(format!("sample_{:05}.csv", s.stream));
            s.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs `n_samples` independent samples in parallel. Sample `i` draws from
/// ChaCha8 stream `i` of `master_seed`, so results do not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    initial: &BranchState,
    povm: &Povm,
    evolution: &Evolution,
    dt: f64,
    n_steps: usize,
    n_samples: usize,
    master_seed: u64,
    options: &EnsembleOptions,
) -> Result<Ensemble> {
    if n_samples == 0 {
        return Err(Error::InvalidSpec("n_samples must be at least 1".into()));
    }
    let results: Vec<Result<(SampledTrajectory, WarningCounters)>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut w = WarningCounters::default();
            sample_trajectory(
                initial,
                povm,
                evolution,
                dt,
                n_steps,
                master_seed,
                i as u64,
                options.escape_tolerance,
                options.escape_policy,
                &mut w,
            )
            .map(|t| (t, w))
            .map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    let mut warnings = WarningCounters::default();
    for r in results {
        let (t, w) = r?;
        warnings.merge(&w);
        samples.push(t);
    }
    Ok(Ensemble {
        summary: EnsembleSummary::from_samples(&samples, master_seed)?,
        samples,
        warnings,
        options: *options,
    })
}

#[cfg(test)]
mod tests;
