//! Seeded Monte-Carlo experiments.
//!
//! Trial `t` uses scenario seed `base_seed + t`; every other random stream of
//! the trial is derived from that seed and the position of the work item, so
//! trials can run in parallel without changing a single output byte.
//! Within a trial all algorithms see the same scenario and fading draw.

mod config;
mod output;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{Algorithm, CsiMode, ExperimentConfig, CONFIG_SCHEMA_VERSION};
pub use output::{
    manifest_path, trials_path, write_aggregate_csv, write_load_csv, write_manifest, write_outputs,
    write_trials_csv,
};

use crate::error::{Error, Result};
use crate::gscm::{channel_matrix, full_channel, generate_scenario, ChannelMatrix, Scenario};
use crate::localization::perturb_and_rebuild;
use crate::rx::{
    channel_covariance, mmse_estimate, sum_rate, zf_weights, PilotConfig, PowerConfig,
};
use crate::scheduler::{
    build_v_matrix, estimation_load, gus_select, gwc_select, random_select, ScheduleResult,
};
use crate::seed::{self, Stream};
use crate::{CMatrix, CVector, C64};

/// One (trial, algorithm, K_s, Ω, P) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub k_s: usize,
    pub omega: u32,
    pub power_w: f64,
    /// `None` when the algorithm or the receiver failed for this trial.
    pub sum_rate: Option<f64>,
    pub load: u64,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Mean and standard error of one (algorithm, K_s, Ω, P) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    pub algorithm: Algorithm,
    pub k_s: usize,
    pub omega: u32,
    pub power_w: f64,
    pub trials: usize,
    pub excluded: usize,
    pub mean: f64,
    pub std_err: f64,
    pub load: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub cells: Vec<AggregateStats>,
    pub trials: Vec<TrialResult>,
}

impl ExperimentOutput {
    pub fn cell(
        &self,
        algorithm: Algorithm,
        k_s: usize,
        omega: u32,
        power_w: f64,
    ) -> Option<&AggregateStats> {
        self.cells.iter().find(|c| {
            c.algorithm == algorithm && c.k_s == k_s && c.omega == omega && c.power_w == power_w
        })
    }
}

pub fn dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

fn trial_scenario(config: &ExperimentConfig, trial: usize) -> Result<Scenario> {
    let mut sc = config.scenario.clone();
    sc.rng_seed = config.base_seed.wrapping_add(trial as u64);
    generate_scenario(&sc)
}

/// Sum-rate of `selected` on the true channel, with the detector built from
/// perfect or MMSE-estimated CSI.
fn evaluate(
    config: &ExperimentConfig,
    scenario: &Scenario,
    h_all: &ChannelMatrix,
    selected: &[usize],
    power: &PowerConfig,
    pilot_seed: u64,
) -> Result<f64> {
    let h = h_all.select(selected)?.entries;
    let w = match config.csi {
        CsiMode::Perfect => zf_weights(&h)?,
        CsiMode::Mmse => zf_weights(&estimate_channel(
            config, scenario, selected, &h, power, pilot_seed,
        )?)?,
    };
    sum_rate(&h, &w, power, config.mode)
}

/// MMSE estimate of the selected users' channel `h` from orthogonal pilots sent
/// at the per-user power, with a covariance from independent fading re-draws.
fn estimate_channel(
    config: &ExperimentConfig,
    scenario: &Scenario,
    selected: &[usize],
    h: &CMatrix,
    power: &PowerConfig,
    pilot_seed: u64,
) -> Result<CMatrix> {
    let (m, k) = h.shape();
    let samples = (1..=config.covariance_draws as u64)
        .map(|r| {
            channel_matrix(scenario, selected, r)
                .map(|c| CVector::from_column_slice(c.entries.as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    let cov = channel_covariance(&samples)?;
    let unit = PilotConfig::orthogonal(k, power.noise_power)?;
    let pilot = PilotConfig::new(
        unit.pilots * C64::new(power.per_user.sqrt(), 0.0),
        power.noise_power,
    )?;
    let mut rng = seed::rng(pilot_seed, Stream::Pilot, &[]);
    let sigma = (power.noise_power / 2.0).sqrt();
    let noise = CMatrix::from_fn(m, pilot.pilot_length(), |_, _| {
        use rand_distr::{Distribution, StandardNormal};
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * sigma, im * sigma)
    });
    let y = h * &pilot.pilots + noise;
    let est = mmse_estimate(&y, &pilot, &cov)?;
    Ok(CMatrix::from_column_slice(m, k, est.as_slice()))
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<TrialResult>> {
    let scenario = trial_scenario(config, trial)?;
    let h_all = full_channel(&scenario, 0)?;
    let v = build_v_matrix(&scenario);
    let m = scenario.config.antenna_count;
    let k = scenario.num_users();
    let noise = config.noise_power();
    let trial_seed = scenario.config.rng_seed;
    let mut out = Vec::new();

    for &algorithm in &config.algorithms {
        for &k_s in &config.k_s {
            let load = match algorithm {
                Algorithm::Gwc => estimation_load(m, k)?,
                Algorithm::Gus | Algorithm::Random => estimation_load(m, k_s)?,
            };
            let random = match algorithm {
                Algorithm::Random => {
                    let mut rng = seed::rng(trial_seed, Stream::RandomSelect, &[k_s as u64]);
                    Some(random_select(k, k_s, &mut rng)?)
                }
                _ => None,
            };
            for &omega in &config.omegas {
                let gus = match algorithm {
                    Algorithm::Gus => {
                        let v_used = if omega == 0 {
                            Ok(v.clone())
                        } else {
                            perturb_and_rebuild(
                                &scenario,
                                omega,
                                &config.crlb,
                                seed::derive(trial_seed, Stream::Perturbation, &[]),
                                config.inversion,
                            )
                            .map(|p| p.v_tilde)
                        };
                        Some(v_used.and_then(|v| gus_select(&v, k_s, config.gus_variant)))
                    }
                    _ => None,
                };
                for (pi, &p) in config.powers_w.iter().enumerate() {
                    let power = PowerConfig::equal(p, k_s, noise)?;
                    let schedule: Result<ScheduleResult> = match algorithm {
                        Algorithm::Gus => match gus.as_ref().unwrap() {
                            Ok(s) => Ok(s.clone()),
                            Err(e) => Err(Error::Numerical(e.to_string())),
                        },
                        Algorithm::Gwc => gwc_select(&h_all.entries, k_s, &power),
                        Algorithm::Random => Ok(random.clone().unwrap()),
                    };
                    let pilot_seed = seed::derive(
                        trial_seed,
                        Stream::Pilot,
                        &[k_s as u64, omega as u64, pi as u64],
                    );
                    let (rate, sched) = match schedule {
                        Ok(s) => {
                            let r = evaluate(
                                config,
                                &scenario,
                                &h_all,
                                &s.selected,
                                &power,
                                pilot_seed,
                            );
                            (r, Some(s))
                        }
                        Err(e) => (Err(e), None),
                    };
                    let sum_rate = match rate {
                        Ok(r) if r.is_finite() => Some(r),
                        Ok(r) => {
                            log::warn!(
                                "trial {trial}: {} produced non-finite rate {r}",
                                algorithm.name()
                            );
                            None
                        }
                        Err(e) => {
                            log::warn!(
                                "trial {trial}: {} K_s={k_s} Ω={omega} P={p} excluded: {e}",
                                algorithm.name()
                            );
                            None
                        }
                    };
                    let sched = sched.unwrap_or(ScheduleResult {
                        selected: Vec::new(),
                        per_step_scores: Vec::new(),
                    });
                    out.push(TrialResult {
                        trial,
                        algorithm,
                        k_s,
                        omega,
                        power_w: p,
                        sum_rate,
                        load,
                        selected: sched.selected,
                        scores: sched.per_step_scores,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Runs every trial and aggregates one cell per (algorithm, K_s, Ω, P).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let per_trial: Vec<Vec<TrialResult>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<_>>()?;
    let trials: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let per_cell = trials.len() / config.trials;
    let mut cells = Vec::with_capacity(per_cell);
    for c in 0..per_cell {
        let rows: Vec<&TrialResult> = (0..config.trials)
            .map(|t| &trials[t * per_cell + c])
            .collect();
        let first = rows[0];
        let values: Vec<f64> = rows.iter().filter_map(|r| r.sum_rate).collect();
        let n = values.len();
        let mean = if n > 0 {
            values.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let std_err = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        if n < rows.len() {
            log::warn!(
                "{} K_s={} Ω={} P={}: {} of {} trials excluded",
                first.algorithm.name(),
                first.k_s,
                first.omega,
                first.power_w,
                rows.len() - n,
                rows.len()
            );
        }
        cells.push(AggregateStats {
            algorithm: first.algorithm,
            k_s: first.k_s,
            omega: first.omega,
            power_w: first.power_w,
            trials: n,
            excluded: rows.len() - n,
            mean,
            std_err,
            load: first.load,
        });
    }
    Ok(ExperimentOutput { cells, trials })
}

/// Sum-rate versus total power.
pub fn figure2_sweep(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment(config)
}

/// Sum-rate versus localisation error scale.
pub fn figure4_robustness(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment(config)
}

/// One row of the estimation-load table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadRow {
    pub antennas: usize,
    pub users: usize,
    pub k_s: usize,
    pub load_gus: u64,
    pub load_full_csi: u64,
    pub ratio: f64,
}

/// Channel-estimation load of GUS (`2MK_s`) against full CSI (`2MK`) over
/// the configured antenna and pool-size sweeps.
pub fn figure3_load(config: &ExperimentConfig) -> Result<Vec<LoadRow>> {
    if config.antenna_sweep.is_empty() || config.user_sweep.is_empty() || config.k_s.is_empty() {
        return Err(Error::Config(
            "load table needs non-empty antenna, user and K_s sweeps".into(),
        ));
    }
    let mut rows = Vec::new();
    for &users in &config.user_sweep {
        for &k_s in &config.k_s {
            if k_s > users {
                return Err(Error::Config(format!(
                    "K_s = {k_s} exceeds pool size {users}"
                )));
            }
            for &antennas in &config.antenna_sweep {
                let load_gus = estimation_load(antennas, k_s)?;
                let load_full_csi = estimation_load(antennas, users)?;
                rows.push(LoadRow {
                    antennas,
                    users,
                    k_s,
                    load_gus,
                    load_full_csi,
                    ratio: load_gus as f64 / load_full_csi as f64,
                });
            }
        }
    }
    Ok(rows)
}
