use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EnvironmentSection, ExperimentConfig, ExperimentKind};
use crate::classical::{
    ehrenfest_residual, ensemble_spreading_estimate, integrate_classical, reduction_verdict, ClassicalState,
};
use crate::dynamics::{evolve_master_history, MasterEquationSpec, MasterOptions, Potential, WarningCounters};
use crate::error::{Error, Result};
use crate::grid::{partial_trace_env, DensityMatrix};
use crate::histories::{fit_dephasing_lambda, grow_tree, max_offdiagonal_ratio, BranchState, Evolution, ExtendOptions};
use crate::partition::build_povm;
use crate::semiclassical::{
    evolve_surface, fold_spacing_diagnostic, wkb_residual, wkb_wavefunction, LagrangianSurface, SurfaceOptions,
    LOBE_MEASURE,
};
use crate::trajectory::{csv_error, run_ensemble, EnsembleOptions};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub version: String,
    pub master_seed: u64,
    pub started: String,
    pub finished: String,
    /// Verdict of experiments that have one.
    pub pass: Option<bool>,
    /// Counters per module, keyed by counter name.
    pub warnings: BTreeMap<String, BTreeMap<String, f64>>,
    pub files: Vec<FileRecord>,
}

/// Collects output files and their checksums.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Outputs {
    fn write(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &buf)?;
        self.files.push(FileRecord {
            path: name.to_string(),
            bytes: buf.len() as u64,
            sha256: hex::encode(Sha256::digest(&buf)),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config { .. } => e,
        other => other.in_stage(name),
    }
}

fn counters(w: &WarningCounters) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("negativity_clips".to_string(), w.negativity_clips as f64),
        ("worst_clipped".to_string(), w.worst_clipped),
        ("positivity_checks".to_string(), w.positivity_checks as f64),
    ])
}

fn csv_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(&r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

struct Produced {
    pass: Option<bool>,
    warnings: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Validates `config`, runs it into `dir` and writes the manifest there.
/// The directory must be absent or empty.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
        return Err(Error::config(
            "output_dir",
            format!("{} exists and is not empty", dir.display()),
        ));
    }
    std::fs::create_dir_all(dir)?;
    let started = chrono::Utc::now().to_rfc3339();
    let mut out = Outputs {
        dir: dir.to_path_buf(),
        files: Vec::new(),
    };
    let text = config.to_toml_string()?;
    out.write("config.toml", |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    log::info!("running {} ({})", config.name, config.experiment.as_str());
    let produced = match config.experiment {
        ExperimentKind::Classicality => classicality(config, &mut out),
        ExperimentKind::Spreading => spreading(config, &mut out),
        ExperimentKind::Calibration => calibration(config, &mut out),
        ExperimentKind::Maslov => maslov(config, &mut out),
        ExperimentKind::Wkb => wkb(config, &mut out),
    }?;
    let manifest = RunManifest {
        name: config.name.clone(),
        experiment: config.experiment,
        config_hash: config.hash()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        pass: produced.pass,
        warnings: produced.warnings,
        files: out.files,
    };
    let file = std::fs::File::create(dir.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    Ok(manifest)
}

fn classicality(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Produced> {
    let grid = cfg.grid()?;
    let (dynamics, initial) = cfg.dynamics(&grid)?;
    let run = cfg.run.expect("validated");
    let tol = cfg.tolerance.expect("validated");
    let povm = build_povm(&cfg.partition()?, cfg.povm_sigma()?, &grid).map_err(stage("partition"))?;
    let evolution = Evolution::new(dynamics, &initial, run.integration_step)
        .and_then(|e| e.cached(&grid, run.dt))
        .map_err(stage("evolve"))?;
    let options = EnsembleOptions {
        escape_tolerance: run.escape_tolerance,
        escape_policy: run.escape_policy,
        exemplars: run.exemplars,
        store_all: false,
    };
    let ensemble = run_ensemble(&initial, &povm, &evolution, run.dt, run.steps, run.n_samples, cfg.master_seed, &options)
        .map_err(stage("sample"))?;
    let init = cfg.initial.expect("validated");
    let horizon = run.dt * run.steps as f64;
    let h = (run.dt / 100.0).min(1e-3);
    let classical = integrate_classical(
        ClassicalState {
            q: init.q,
            p: init.p,
            t: 0.0,
        },
        &cfg.hamiltonian,
        h,
        (horizon / h).ceil() as usize + 1,
        None,
    )
    .map_err(stage("compare"))?;
    let verdict = reduction_verdict(&ensemble.samples, &classical, &tol).map_err(stage("compare"))?;
    let mut summary = ensemble.summary.clone();
    summary.classical_fraction = Some(verdict.classical_fraction);
    out.json("ensemble.json", &summary)?;
    out.json("verdict.json", &verdict)?;
    out.write("curves.csv", |b| verdict.write_curves_csv(b))?;
    for s in ensemble.samples.iter().take(run.exemplars) {
        out.write(&format!("samples/sample_{:05}.csv", s.stream), |b| s.write_csv(b))?;
    }
    let escaped = ensemble.samples.iter().filter(|s| s.escaped_at.is_some()).count();
    Ok(Produced {
        pass: Some(verdict.pass),
        warnings: BTreeMap::from([
            ("dynamics".to_string(), counters(&ensemble.warnings)),
            ("trajectory".to_string(), BTreeMap::from([("escaped_samples".to_string(), escaped as f64)])),
        ]),
    })
}

#[derive(Serialize)]
struct SpreadingSummary {
    lambda: f64,
    final_time: f64,
    final_spread: f64,
    max_r1: f64,
    max_r2: f64,
    /// Against the free-particle closed form, when it applies.
    max_relative_spread_error: Option<f64>,
}

fn spreading(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Produced> {
    let grid = cfg.grid()?;
    let psi = cfg.initial_wave(&grid)?;
    let run = cfg.run.expect("validated");
    let lambda = match cfg.environment() {
        EnvironmentSection::Dephasing { lambda } => *lambda,
        _ => 0.0,
    };
    let spec = MasterEquationSpec {
        hamiltonian: cfg.hamiltonian.clone(),
        lambda,
    };
    let history = evolve_master_history(
        DensityMatrix::from_pure(&psi),
        &spec,
        run.dt,
        run.steps,
        run.record_every,
        false,
        &MasterOptions::default(),
    )
    .map_err(stage("evolve"))?;
    let spread = ensemble_spreading_estimate(&history);
    let residuals = ehrenfest_residual(&history, &cfg.hamiltonian).map_err(stage("compare"))?;
    let closed_form: Option<Vec<f64>> = (matches!(cfg.hamiltonian.potential, Potential::Free) && lambda == 0.0).then(|| {
        let s0 = cfg.initial_sigma().unwrap_or(spread[0]);
        let m = cfg.hamiltonian.mass;
        history
            .times
            .iter()
            .map(|t| s0 * (1.0 + (cfg.hbar * t / (2.0 * m * s0 * s0)).powi(2)).sqrt())
            .collect()
    });
    out.write("spreading.csv", |b| {
        csv_rows(
            b,
            &["t", "mean_x", "mean_p", "purity", "spread", "closed_form"],
            (0..history.times.len()).map(|k| {
                vec![
                    history.times[k].to_string(),
                    history.mean_x[k].to_string(),
                    history.mean_p[k].to_string(),
                    history.purity[k].to_string(),
                    spread[k].to_string(),
                    closed_form.as_ref().map_or(String::new(), |c| c[k].to_string()),
                ]
            }),
        )
    })?;
    out.write("ehrenfest.csv", |b| {
        csv_rows(
            b,
            &["t", "r1", "r2"],
            (0..residuals.times.len()).map(|k| {
                vec![
                    residuals.times[k].to_string(),
                    residuals.r1[k].to_string(),
                    residuals.r2[k].to_string(),
                ]
            }),
        )
    })?;
    let summary = SpreadingSummary {
        lambda,
        final_time: *history.times.last().expect("history has records"),
        final_spread: *spread.last().expect("history has records"),
        max_r1: residuals.max_r1(),
        max_r2: residuals.max_r2(),
        max_relative_spread_error: closed_form.map(|c| {
            c.iter()
                .zip(&spread)
                .map(|(c, s)| ((s - c) / c).abs())
                .fold(0.0, f64::max)
        }),
    };
    out.json("summary.json", &summary)?;
    Ok(Produced {
        pass: None,
        warnings: BTreeMap::from([("dynamics".to_string(), counters(&history.warnings))]),
    })
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    lambda: f64,
    max_relative_error: f64,
    error_at_zero: f64,
    tolerance: f64,
    pass: bool,
    /// Largest decoherence-functional ratio between earlier-differing
    /// histories of the closed tree.
    offdiagonal_ratio: f64,
    leaf_weight_sum: f64,
    pruned_mass: f64,
    leaves: &'a [crate::histories::LeafComparison],
}

fn calibration(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Produced> {
    let grid = cfg.grid()?;
    let (dynamics, initial) = cfg.dynamics(&grid)?;
    let run = cfg.run.expect("validated");
    let hist = cfg.histories.expect("validated");
    let cal = cfg.calibration.expect("validated");
    let povm = build_povm(&cfg.partition()?, cfg.povm_sigma()?, &grid).map_err(stage("partition"))?;
    let evolution = Evolution::new(dynamics, &initial, run.integration_step)
        .and_then(|e| e.cached(&grid, run.dt))
        .map_err(stage("evolve"))?;
    let options = ExtendOptions {
        epsilon_prune: hist.epsilon_prune,
        leaf_cap: hist.leaf_cap,
    };
    let tree = grow_tree(initial.clone(), &povm, &evolution, run.dt, hist.depth, &options).map_err(stage("branch"))?;
    let ratio = max_offdiagonal_ratio(&tree, hist.min_weight, true).map_err(stage("branch"))?;
    let open_initial = match &initial {
        BranchState::Pure(s) => BranchState::Mixed(partial_trace_env(s)),
        mixed => mixed.clone(),
    };
    let fit = fit_dephasing_lambda(
        &tree,
        &open_initial,
        &cfg.hamiltonian,
        &povm,
        run.dt,
        hist.min_weight,
        (cal.lambda_min, cal.lambda_max),
        &options,
    )
    .map_err(stage("compare"))?;
    let pass = fit.max_relative_error <= cal.tolerance;
    out.write("tree.json", |b| tree.write_json(b))?;
    out.json(
        "calibration.json",
        &CalibrationReport {
            lambda: fit.lambda,
            max_relative_error: fit.max_relative_error,
            error_at_zero: fit.error_at_zero,
            tolerance: cal.tolerance,
            pass,
            offdiagonal_ratio: ratio,
            leaf_weight_sum: tree.leaf_weight_sum(),
            pruned_mass: tree.pruned_mass,
            leaves: &fit.leaves,
        },
    )?;
    out.write("leaves.csv", |b| {
        csv_rows(
            b,
            &["history", "closed_weight", "open_weight", "relative_error"],
            fit.leaves.iter().map(|l| {
                let h: Vec<String> = l.index.iter().map(|(i, j)| format!("{i}:{j}")).collect();
                vec![
                    h.join(" "),
                    l.closed.to_string(),
                    l.open.to_string(),
                    l.relative_error.to_string(),
                ]
            }),
        )
    })?;
    Ok(Produced {
        pass: Some(pass),
        warnings: BTreeMap::from([(
            "histories".to_string(),
            BTreeMap::from([
                ("escaped_mass".to_string(), tree.escaped_mass),
                ("leaves".to_string(), tree.leaves.len() as f64),
            ]),
        )]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub t: f64,
    pub hbar: f64,
    pub fold_count: usize,
    /// Absent when fewer than two folds exist.
    pub min_lobe_area: Option<f64>,
    pub ratio: Option<f64>,
    pub breakdown: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstBreakdown {
    pub hbar: f64,
    pub t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostic {
    pub measure: String,
    pub rows: Vec<FoldRow>,
    pub fold_count_monotone: bool,
    pub first_breakdown: Vec<FirstBreakdown>,
    pub final_samples: usize,
}

fn maslov(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Produced> {
    let m = cfg.maslov.clone().expect("validated");
    let options = SurfaceOptions {
        max_gap: m.max_gap,
        max_samples: m.max_samples,
    };
    let mut surface = LagrangianSurface::vertical_segment(m.q0, (m.p_min, m.p_max), m.samples).map_err(stage("evolve"))?;
    let mut rows = Vec::new();
    let mut steps_done = 0usize;
    for &t in &m.times {
        let target = (t / m.step).round() as usize;
        if target > steps_done {
            surface = evolve_surface(&surface, &cfg.hamiltonian, m.step, target - steps_done, &options)
                .map_err(stage("evolve"))?;
            steps_done = target;
        }
        for &hbar in &m.hbar_ladder {
            rows.push(match fold_spacing_diagnostic(&surface, hbar) {
                Ok(r) => FoldRow {
                    t,
                    hbar,
                    fold_count: r.fold_count,
                    min_lobe_area: Some(r.min_lobe_area),
                    ratio: Some(r.ratio),
                    breakdown: r.breakdown,
                },
                Err(Error::TooFewFolds(n)) => FoldRow {
                    t,
                    hbar,
                    fold_count: n,
                    min_lobe_area: None,
                    ratio: None,
                    breakdown: false,
                },
                Err(e) => return Err(e.in_stage("compare")),
            });
        }
    }
    let counts: Vec<usize> = rows.iter().step_by(m.hbar_ladder.len()).map(|r| r.fold_count).collect();
    let diagnostic = FoldDiagnostic {
        measure: LOBE_MEASURE.to_string(),
        fold_count_monotone: counts.windows(2).all(|w| w[1] >= w[0]),
        first_breakdown: m
            .hbar_ladder
            .iter()
            .map(|&hbar| FirstBreakdown {
                hbar,
                t: rows.iter().find(|r| r.hbar == hbar && r.breakdown).map(|r| r.t),
            })
            .collect(),
        final_samples: surface.len(),
        rows,
    };
    out.write("folds.csv", |b| {
        csv_rows(
            b,
            &["t", "hbar", "fold_count", "min_lobe_area", "ratio", "breakdown"],
            diagnostic.rows.iter().map(|r| {
                vec![
                    r.t.to_string(),
                    r.hbar.to_string(),
                    r.fold_count.to_string(),
                    r.min_lobe_area.map_or(String::new(), |a| a.to_string()),
                    r.ratio.map_or(String::new(), |a| a.to_string()),
                    r.breakdown.to_string(),
                ]
            }),
        )
    })?;
    out.json("diagnostic.json", &diagnostic)?;
    out.write("surface.csv", |b| surface.write_csv(b))?;
    Ok(Produced {
        pass: None,
        warnings: BTreeMap::from([(
            "semiclassical".to_string(),
            BTreeMap::from([("surface_samples".to_string(), surface.len() as f64)]),
        )]),
    })
}

#[derive(Serialize)]
struct WkbReport<'a> {
    energy: f64,
    hbar: f64,
    turning_points: &'a [f64],
    intervals: &'a [(f64, f64)],
    flagged_points: usize,
    residual_rms: f64,
}

fn wkb(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Produced> {
    let w = cfg.wkb.expect("validated");
    let grid = cfg.grid()?;
    let c = |z: [f64; 2]| nalgebra::Complex::new(z[0], z[1]);
    let (wave, sol) =
        wkb_wavefunction(&cfg.hamiltonian, w.energy, c(w.a), c(w.b), &grid, cfg.hbar, w.cutoff).map_err(stage("evolve"))?;
    let residual = wkb_residual(&sol, &grid.positions(), w.residual_margin);
    let flagged = wave.caustic.iter().filter(|f| **f).count();
    out.write("wkb.csv", |b| wave.write_csv(b))?;
    out.json(
        "wkb.json",
        &WkbReport {
            energy: w.energy,
            hbar: cfg.hbar,
            turning_points: &sol.turning_points,
            intervals: &sol.intervals,
            flagged_points: flagged,
            residual_rms: residual,
        },
    )?;
    Ok(Produced {
        pass: None,
        warnings: BTreeMap::from([(
            "semiclassical".to_string(),
            BTreeMap::from([("caustic_points".to_string(), flagged as f64)]),
        )]),
    })
}
