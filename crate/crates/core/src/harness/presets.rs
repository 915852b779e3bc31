use std::path::PathBuf;

use super::config::*;
use crate::classical::Tolerance;
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::trajectory::EscapePolicy;

pub const PRESETS: [&str; 6] = [
    "harmonic-classicality",
    "free-spreading",
    "quartic",
    "dephasing-calibration",
    "maslov-breakdown",
    "wkb-turning-point",
];

/// One-line description of each preset, in `PRESETS` order.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "harmonic-classicality" => "heavy oscillator, weak one-qubit register, 10^3 sampled histories against the classical orbit",
        "free-spreading" => "free packet without dephasing; width against the closed form",
        "quartic" => "anharmonic well under dephasing; Ehrenfest residuals and ensemble spreading",
        "dephasing-calibration" => "four-qubit register histories and the best-fit dephasing rate",
        "maslov-breakdown" => "quartic flow of a momentum segment; folds and lobe areas over an hbar ladder",
        "wkb-turning-point" => "n = 20 oscillator level in first-order WKB with turning-point flags",
        _ => return None,
    })
}

fn base(name: &str, experiment: ExperimentKind, hamiltonian: HamiltonianSpec<f64>, grid: GridSection) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        experiment,
        hbar: 1.0,
        master_seed: 20_240_601,
        output_dir: PathBuf::from("runs").join(name),
        grid,
        hamiltonian,
        environment: None,
        initial: None,
        partition: None,
        tolerance: None,
        run: None,
        histories: None,
        calibration: None,
        maslov: None,
        wkb: None,
    }
}

fn run(dt: f64, steps: usize) -> RunSection {
    RunSection {
        dt,
        steps,
        n_samples: 1,
        integration_step: None,
        escape_tolerance: crate::trajectory::DEFAULT_ESCAPE_TOLERANCE,
        escape_policy: EscapePolicy::Error,
        exemplars: 0,
        record_every: 1,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let tau = 3.0 * std::f64::consts::TAU;
    Ok(match name {
        "harmonic-classicality" => ExperimentConfig {
            environment: Some(EnvironmentSection::Qubits {
                couplings: vec![0.01],
                self_energies: None,
            }),
            initial: Some(InitialSection {
                q: 0.5,
                p: 0.0,
                sigma: None,
            }),
            // 8 x 6 cells of 2 x 32; the interval is incommensurate with
            // the period so measurements do not lock onto turning points
            partition: Some(PartitionSection {
                q_min: -8.0,
                q_max: 8.0,
                p_min: -96.0,
                p_max: 96.0,
                n_q: 8,
                n_p: 6,
                quadrature: 6,
                sigma: None,
            }),
            tolerance: Some(Tolerance {
                delta_x: 0.5,
                delta_p: 25.0,
                tau,
                epsilon: 0.01,
            }),
            run: Some(RunSection {
                n_samples: 1000,
                ..run(0.7, (tau / 0.7).ceil() as usize)
            }),
            ..base(
                name,
                ExperimentKind::Classicality,
                HamiltonianSpec::harmonic(50.0, 1.0),
                GridSection {
                    n_points: 512,
                    length: 16.0,
                },
            )
        },
        "free-spreading" => ExperimentConfig {
            environment: Some(EnvironmentSection::Dephasing { lambda: 0.0 }),
            initial: Some(InitialSection {
                q: 0.0,
                p: 0.0,
                sigma: Some(1.0),
            }),
            run: Some(RunSection {
                record_every: 10,
                ..run(0.01, 400)
            }),
            ..base(
                name,
                ExperimentKind::Spreading,
                HamiltonianSpec::free(1.0),
                GridSection {
                    n_points: 256,
                    length: 40.0,
                },
            )
        },
        "quartic" => ExperimentConfig {
            environment: Some(EnvironmentSection::Dephasing { lambda: 0.1 }),
            initial: Some(InitialSection {
                q: 1.0,
                p: 0.0,
                sigma: Some(0.5),
            }),
            run: Some(RunSection {
                record_every: 20,
                ..run(0.001, 4000)
            }),
            ..base(
                name,
                ExperimentKind::Spreading,
                HamiltonianSpec::quartic(1.0, 1.0, 0.5),
                GridSection {
                    n_points: 128,
                    length: 16.0,
                },
            )
        },
        "dephasing-calibration" => {
            let g = 0.5;
            ExperimentConfig {
                environment: Some(EnvironmentSection::Qubits {
                    couplings: vec![g, 0.8 * g, 0.6 * g, 0.45 * g],
                    self_energies: None,
                }),
                initial: Some(InitialSection {
                    q: 1.0,
                    p: 0.0,
                    sigma: None,
                }),
                partition: Some(PartitionSection {
                    q_min: -6.0,
                    q_max: 6.0,
                    p_min: -6.0,
                    p_max: 6.0,
                    n_q: 3,
                    n_p: 1,
                    quadrature: 6,
                    sigma: None,
                }),
                run: Some(run(0.5, 3)),
                histories: Some(HistoriesSection {
                    depth: 3,
                    epsilon_prune: 0.0,
                    leaf_cap: crate::histories::DEFAULT_LEAF_CAP,
                    min_weight: 0.01,
                }),
                calibration: Some(CalibrationSection {
                    lambda_min: 1e-3,
                    lambda_max: 5.0,
                    tolerance: 0.1,
                }),
                ..base(
                    name,
                    ExperimentKind::Calibration,
                    HamiltonianSpec::harmonic(1.0, 1.0),
                    GridSection {
                        n_points: 64,
                        length: 16.0,
                    },
                )
            }
        }
        "maslov-breakdown" => ExperimentConfig {
            maslov: Some(MaslovSection {
                q0: 0.0,
                p_min: 0.5,
                p_max: 1.5,
                samples: 101,
                step: 0.01,
                times: (0..=12).map(|k| 5.0 * k as f64).collect(),
                max_gap: Some(0.02),
                max_samples: 200_000,
                hbar_ladder: vec![1.0, 0.01],
            }),
            ..base(
                name,
                ExperimentKind::Maslov,
                HamiltonianSpec::quartic(1.0, 0.0, 1.0),
                GridSection {
                    n_points: 256,
                    length: 16.0,
                },
            )
        },
        "wkb-turning-point" => {
            let h = std::f64::consts::FRAC_1_SQRT_2 * 0.5;
            ExperimentConfig {
                // cos(θ - π/4), the connection-formula standing wave
                wkb: Some(WkbSection {
                    energy: 20.5,
                    a: [h, -h],
                    b: [h, h],
                    cutoff: crate::semiclassical::DEFAULT_WKB_CUTOFF,
                    residual_margin: 0.5,
                }),
                ..base(
                    name,
                    ExperimentKind::Wkb,
                    HamiltonianSpec::harmonic(1.0, 1.0),
                    GridSection {
                        n_points: 512,
                        length: 16.0,
                    },
                )
            }
        }
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")),
            ))
        }
    })
}
