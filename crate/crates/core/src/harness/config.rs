use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::Tolerance;
use crate::dynamics::{EnvironmentSpec, HamiltonianSpec, MasterEquationSpec, MasterPropagator, Potential};
use crate::error::{Error, Result};
use crate::grid::{coherent_state, CoherentStateSpec, CompositeState, DensityMatrix, Grid, WaveFunction, MAX_ENV_QUBITS};
use crate::histories::{BranchState, Dynamics, Evolution, DEFAULT_LEAF_CAP};
use crate::partition::{PhasePartition, Window};
use crate::trajectory::{EscapePolicy, DEFAULT_ESCAPE_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Sampled branch trajectories against the classical orbit.
    Classicality,
    /// Master-equation run with spreading and Ehrenfest outputs.
    Spreading,
    /// Closed-register histories tree and the best-fit open-mode rate.
    Calibration,
    /// Evolved Lagrangian surface with fold diagnostics over an ħ ladder.
    Maslov,
    /// First-order WKB wavefunction with turning-point flags.
    Wkb,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Classicality => "classicality",
            ExperimentKind::Spreading => "spreading",
            ExperimentKind::Calibration => "calibration",
            ExperimentKind::Maslov => "maslov",
            ExperimentKind::Wkb => "wkb",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_points: usize,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSection {
    None,
    /// Explicit dephasing register; evolution is closed and unitary.
    Qubits {
        couplings: Vec<f64>,
        /// Zero for every qubit when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        self_energies: Option<Vec<f64>>,
    },
    /// Position dephasing of strength `lambda`; evolution is open.
    Dephasing { lambda: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q: f64,
    pub p: f64,
    /// Defaults to the ground-state width of the local oscillator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

fn default_quadrature() -> usize {
    6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    /// Coherent-state width of the POVM; defaults to the initial width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl PartitionSection {
    pub fn window(&self) -> Window {
        Window::new((self.q_min, self.q_max), (self.p_min, self.p_max))
    }

    pub fn cell_area(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_q as f64 * (self.p_max - self.p_min) / self.n_p as f64
    }
}

fn default_one() -> usize {
    1
}

fn default_escape_tolerance() -> f64 {
    DEFAULT_ESCAPE_TOLERANCE
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Measurement interval (classicality, calibration) or master step
    /// (spreading).
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_one")]
    pub n_samples: usize,
    /// Integration substep between measurements; stability default when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration_step: Option<f64>,
    #[serde(default = "default_escape_tolerance")]
    pub escape_tolerance: f64,
    #[serde(default)]
    pub escape_policy: EscapePolicy,
    /// Sample trajectories written as CSV.
    #[serde(default)]
    pub exemplars: usize,
    #[serde(default = "default_one")]
    pub record_every: usize,
}

fn default_leaf_cap() -> usize {
    DEFAULT_LEAF_CAP
}

fn default_min_weight() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesSection {
    pub depth: usize,
    #[serde(default)]
    pub epsilon_prune: f64,
    #[serde(default = "default_leaf_cap")]
    pub leaf_cap: usize,
    /// Leaves lighter than this are left out of ratios and comparisons.
    #[serde(default = "default_min_weight")]
    pub min_weight: f64,
}

fn default_calibration_tolerance() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest relative leaf error accepted at the best-fit rate.
    #[serde(default = "default_calibration_tolerance")]
    pub tolerance: f64,
}

fn default_max_samples() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaslovSection {
    /// Initial surface: the momentum segment `[p_min, p_max]` at `q0`.
    pub q0: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub samples: usize,
    /// Classical integration step.
    pub step: f64,
    /// Diagnostic times, ascending.
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<f64>,
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
    /// Values of ħ at which every surface is diagnosed.
    pub hbar_ladder: Vec<f64>,
}

fn default_wkb_cutoff() -> f64 {
    crate::semiclassical::DEFAULT_WKB_CUTOFF
}

fn default_residual_margin() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WkbSection {
    pub energy: f64,
    /// Amplitude of `e^{iθ}` as `[re, im]`.
    pub a: [f64; 2],
    pub b: [f64; 2],
    #[serde(default = "default_wkb_cutoff")]
    pub cutoff: f64,
    /// Energy margin inside the allowed region for the residual.
    #[serde(default = "default_residual_margin")]
    pub residual_margin: f64,
}

/// One experiment, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub hbar: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub hamiltonian: HamiltonianSpec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<Tolerance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<HistoriesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maslov: Option<MaslovSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wkb: Option<WkbSection>,
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn require<'a, T>(section: &'a Option<T>, path: &str, kind: ExperimentKind) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::config(path, format!("section is required for {} experiments", kind.as_str())))
}

fn positive(value: f64, path: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("{value} must be a finite number > 0")))
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the dotted path of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string().trim_end()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            Error::config(path, e.into_inner().to_string().trim_end())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("", e.to_string()))
    }

    /// SHA-256 of the emitted TOML, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::new(self.grid.n_points, self.grid.length, self.hbar).map_err(at("grid"))
    }

    /// Width of the initial packet: explicit, or `sqrt(ħ / 2Mω)` with `ω`
    /// from the potential curvature at the initial position.
    pub fn initial_sigma(&self) -> Result<f64> {
        let init = require(&self.initial, "initial", self.experiment)?;
        if let Some(s) = init.sigma {
            positive(s, "initial.sigma")?;
            return Ok(s);
        }
        let ham = &self.hamiltonian;
        let omega = match ham.potential {
            Potential::Harmonic { omega } => omega,
            Potential::Free | Potential::Table { .. } => 0.0,
            _ => (ham.curvature(init.q) / ham.mass).max(0.0).sqrt(),
        };
        if !(omega > 0.0) {
            return Err(Error::config(
                "initial.sigma",
                "required: the potential has no positive curvature at the initial position",
            ));
        }
        Ok(CoherentStateSpec::default_sigma(self.hbar, ham.mass, omega))
    }

    pub fn povm_sigma(&self) -> Result<f64> {
        let part = require(&self.partition, "partition", self.experiment)?;
        match part.sigma {
            Some(s) => positive(s, "partition.sigma").map(|_| s),
            None => self.initial_sigma(),
        }
    }

    pub fn initial_wave(&self, grid: &Grid<f64>) -> Result<WaveFunction<f64>> {
        let init = require(&self.initial, "initial", self.experiment)?;
        let spec = CoherentStateSpec::new(init.q, init.p, self.initial_sigma()?);
        spec.validate(grid).map_err(at("initial"))?;
        coherent_state(&spec, grid).map_err(at("initial"))
    }

    pub fn environment(&self) -> &EnvironmentSection {
        self.environment.as_ref().unwrap_or(&EnvironmentSection::None)
    }

    /// Branch dynamics and matching initial branch state.
    pub fn dynamics(&self, grid: &Grid<f64>) -> Result<(Dynamics, BranchState)> {
        let psi = self.initial_wave(grid)?;
        let hamiltonian = self.hamiltonian.clone();
        Ok(match self.environment() {
            EnvironmentSection::None => (
                Dynamics::Closed {
                    hamiltonian,
                    environment: EnvironmentSpec::none(),
                },
                BranchState::pure(&psi),
            ),
            EnvironmentSection::Qubits {
                couplings,
                self_energies,
            } => {
                let eps = self_energies.clone().unwrap_or_else(|| vec![0.0; couplings.len()]);
                let environment = EnvironmentSpec::new(couplings.clone(), eps).map_err(at("environment"))?;
                let state = CompositeState::with_plus_register(&psi, couplings.len()).map_err(at("environment"))?;
                (
                    Dynamics::Closed {
                        hamiltonian,
                        environment,
                    },
                    BranchState::Pure(state),
                )
            }
            EnvironmentSection::Dephasing { lambda } => (
                Dynamics::Open(MasterEquationSpec {
                    hamiltonian,
                    lambda: *lambda,
                }),
                BranchState::Mixed(DensityMatrix::from_pure(&psi)),
            ),
        })
    }

    pub fn partition(&self) -> Result<PhasePartition> {
        let part = require(&self.partition, "partition", self.experiment)?;
        PhasePartition::regular(part.window(), part.n_q, part.n_p, part.quadrature, self.hbar).map_err(at("partition"))
    }

    /// Checks everything that can be checked without running the
    /// experiment. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        positive(self.hbar, "hbar")?;
        let grid = self.grid()?;
        self.hamiltonian.validate().map_err(at("hamiltonian"))?;
        self.validate_environment()?;
        match self.experiment {
            ExperimentKind::Classicality => self.validate_classicality(&grid),
            ExperimentKind::Spreading => self.validate_spreading(&grid),
            ExperimentKind::Calibration => self.validate_calibration(&grid),
            ExperimentKind::Maslov => self.validate_maslov(),
            ExperimentKind::Wkb => self.validate_wkb(),
        }
    }

    fn validate_environment(&self) -> Result<()> {
        match self.environment() {
            EnvironmentSection::None => Ok(()),
            EnvironmentSection::Qubits {
                couplings,
                self_energies,
            } => {
                if couplings.len() > MAX_ENV_QUBITS {
                    return Err(Error::config(
                        "environment.couplings",
                        format!("{} qubits, at most {MAX_ENV_QUBITS} supported", couplings.len()),
                    ));
                }
                if couplings.iter().any(|g| !g.is_finite()) {
                    return Err(Error::config("environment.couplings", "must be finite"));
                }
                if let Some(eps) = self_energies {
                    if eps.len() != couplings.len() {
                        return Err(Error::config(
                            "environment.self_energies",
                            format!("{} values for {} couplings", eps.len(), couplings.len()),
                        ));
                    }
                }
                Ok(())
            }
            EnvironmentSection::Dephasing { lambda } => {
                if *lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("environment.lambda", format!("{lambda} must be >= 0")))
                }
            }
        }
    }

    fn validate_partition(&self, grid: &Grid<f64>) -> Result<()> {
        let part = require(&self.partition, "partition", self.experiment)?;
        if !(part.q_max > part.q_min) {
            return Err(Error::config("partition.q_max", "must exceed partition.q_min"));
        }
        if !(part.p_max > part.p_min) {
            return Err(Error::config("partition.p_max", "must exceed partition.p_min"));
        }
        if part.n_q == 0 || part.n_p == 0 {
            return Err(Error::config("partition.n_q", "n_q and n_p must be >= 1"));
        }
        let half = 0.5 * grid.length();
        if part.q_min < -half - 1e-12 || part.q_max > half + 1e-12 {
            return Err(Error::config(
                "partition.q_min",
                format!("window [{}, {}] leaves the grid [-{half}, {half}]", part.q_min, part.q_max),
            ));
        }
        let pmax = grid.nyquist_momentum();
        if part.p_min < -pmax || part.p_max > pmax {
            return Err(Error::config(
                "partition.p_max",
                format!("window [{}, {}] exceeds the grid momentum range ±{pmax}", part.p_min, part.p_max),
            ));
        }
        let area = part.cell_area();
        if area <= self.hbar {
            return Err(Error::config(
                "partition",
                format!(
                    "cell area {area} <= hbar = {}; use fewer cells (n_q, n_p) or a larger window",
                    self.hbar
                ),
            ));
        }
        if part.quadrature < 4 {
            return Err(Error::config("partition.quadrature", "must be >= 4"));
        }
        let sigma = self.povm_sigma()?;
        if !(sigma > 2.0 * grid.spacing() && sigma < grid.length() / 8.0) {
            return Err(Error::config(
                "partition.sigma",
                format!("{sigma} must lie between 2 dx = {} and L/8 = {}", 2.0 * grid.spacing(), grid.length() / 8.0),
            ));
        }
        self.partition().map(|_| ())
    }

    fn validate_run(&self, grid: &Grid<f64>, initial: &BranchState, dynamics: Dynamics) -> Result<&RunSection> {
        let run = require(&self.run, "run", self.experiment)?;
        positive(run.dt, "run.dt")?;
        if run.steps == 0 {
            return Err(Error::config("run.steps", "must be >= 1"));
        }
        if run.n_samples == 0 {
            return Err(Error::config("run.n_samples", "must be >= 1"));
        }
        if !(run.escape_tolerance > 0.0 && run.escape_tolerance < 1.0) {
            return Err(Error::config("run.escape_tolerance", "must lie in (0, 1)"));
        }
        if run.record_every == 0 {
            return Err(Error::config("run.record_every", "must be >= 1"));
        }
        if let Some(step) = run.integration_step {
            positive(step, "run.integration_step")?;
        }
        grid.same_as(initial.grid())?;
        Evolution::new(dynamics, initial, run.integration_step).map_err(at("run.integration_step"))?;
        Ok(run)
    }

    fn validate_classicality(&self, grid: &Grid<f64>) -> Result<()> {
        let (dynamics, initial) = self.dynamics(grid)?;
        self.validate_partition(grid)?;
        let run = self.validate_run(grid, &initial, dynamics)?;
        let tol = require(&self.tolerance, "tolerance", self.experiment)?;
        tol.validate().map_err(at("tolerance"))?;
        let horizon = run.dt * run.steps as f64;
        if tol.tau > horizon * (1.0 + 1e-9) {
            return Err(Error::config(
                "tolerance.tau",
                format!("{} exceeds the run horizon run.dt * run.steps = {horizon}", tol.tau),
            ));
        }
        Ok(())
    }

    fn validate_spreading(&self, grid: &Grid<f64>) -> Result<()> {
        let lambda = match self.environment() {
            EnvironmentSection::None => 0.0,
            EnvironmentSection::Dephasing { lambda } => *lambda,
            EnvironmentSection::Qubits { .. } => {
                return Err(Error::config("environment.kind", "spreading runs need kind = \"dephasing\" or \"none\""));
            }
        };
        let psi = self.initial_wave(grid)?;
        let run = require(&self.run, "run", self.experiment)?;
        positive(run.dt, "run.dt")?;
        if run.record_every == 0 {
            return Err(Error::config("run.record_every", "must be >= 1"));
        }
        if run.steps / run.record_every < 4 {
            return Err(Error::config("run.steps", "need at least 5 recorded states for Ehrenfest residuals"));
        }
        let spec = MasterEquationSpec {
            hamiltonian: self.hamiltonian.clone(),
            lambda,
        };
        MasterPropagator::energy_scale(&DensityMatrix::from_pure(&psi), &spec)
            .check(run.dt)
            .map_err(at("run.dt"))
    }

    fn validate_calibration(&self, grid: &Grid<f64>) -> Result<()> {
        if !matches!(self.environment(), EnvironmentSection::Qubits { .. }) {
            return Err(Error::config("environment.kind", "calibration runs need kind = \"qubits\""));
        }
        let (dynamics, initial) = self.dynamics(grid)?;
        self.validate_partition(grid)?;
        self.validate_run(grid, &initial, dynamics)?;
        let h = require(&self.histories, "histories", self.experiment)?;
        if h.depth == 0 || h.depth > 6 {
            return Err(Error::config("histories.depth", "must lie in 1..=6"));
        }
        if !(h.epsilon_prune >= 0.0 && h.epsilon_prune < 1.0) {
            return Err(Error::config("histories.epsilon_prune", "must lie in [0, 1)"));
        }
        if h.leaf_cap == 0 {
            return Err(Error::config("histories.leaf_cap", "must be >= 1"));
        }
        if !(h.min_weight > 0.0 && h.min_weight < 1.0) {
            return Err(Error::config("histories.min_weight", "must lie in (0, 1)"));
        }
        let c = require(&self.calibration, "calibration", self.experiment)?;
        positive(c.lambda_min, "calibration.lambda_min")?;
        if !(c.lambda_max > c.lambda_min) || !c.lambda_max.is_finite() {
            return Err(Error::config("calibration.lambda_max", "must exceed calibration.lambda_min"));
        }
        positive(c.tolerance, "calibration.tolerance")
    }

    fn validate_maslov(&self) -> Result<()> {
        let m = require(&self.maslov, "maslov", self.experiment)?;
        if !(m.p_max > m.p_min) {
            return Err(Error::config("maslov.p_max", "must exceed maslov.p_min"));
        }
        if m.samples < 3 {
            return Err(Error::config("maslov.samples", "must be >= 3"));
        }
        positive(m.step, "maslov.step")?;
        if m.times.is_empty() || m.times.iter().any(|t| !(*t >= 0.0)) || m.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("maslov.times", "must be non-empty, >= 0 and strictly ascending"));
        }
        if let Some(g) = m.max_gap {
            positive(g, "maslov.max_gap")?;
        }
        if m.max_samples < m.samples {
            return Err(Error::config("maslov.max_samples", "must be >= maslov.samples"));
        }
        if m.hbar_ladder.is_empty() {
            return Err(Error::config("maslov.hbar_ladder", "must not be empty"));
        }
        m.hbar_ladder.iter().try_for_each(|h| positive(*h, "maslov.hbar_ladder"))
    }

    fn validate_wkb(&self) -> Result<()> {
        let w = require(&self.wkb, "wkb", self.experiment)?;
        positive(w.cutoff, "wkb.cutoff")?;
        positive(w.residual_margin, "wkb.residual_margin")?;
        if !w.energy.is_finite() {
            return Err(Error::config("wkb.energy", "must be finite"));
        }
        let grid = self.grid()?;
        let x = grid.positions();
        if !x.iter().any(|&q| self.hamiltonian.potential(q) < w.energy) {
            return Err(Error::config("wkb.energy", "classically forbidden everywhere on the grid"));
        }
        Ok(())
    }

    /// Output directory, relative paths resolved against `base`.
    pub fn output_path(&self, base: &Path) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            base.join(&self.output_dir)
        }
    }
}
