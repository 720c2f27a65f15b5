//! User selection: geometry-based greedy (GUS), full-CSI greedy (GWC), random.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gscm::{Cluster, Scenario};
use crate::rx::{sum_rate, zf_weights, PowerConfig, RateMode};
use crate::CMatrix;

/// User–cluster pathloss matrix, one row per user and one column per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct VMatrix {
    pub entries: DMatrix<f64>,
}

impl VMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(
                "V entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged V rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.entries.row(k).iter().copied().collect()
    }

    pub fn row_norm(&self, k: usize) -> f64 {
        self.entries.row(k).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub selected: Vec<usize>,
    /// Norm for the first GUS pick and correlations after it; the greedy
    /// objective for GWC; empty for random selection.
    pub per_step_scores: Vec<f64>,
}

/// Builds `V` from the scenario geometry (no fading, no shadowing).
pub fn build_v_matrix(scenario: &Scenario) -> VMatrix {
    v_matrix_for(scenario, &scenario.clusters)
}

/// `V` evaluated against an alternative set of cluster records.
pub fn v_matrix_for(scenario: &Scenario, clusters: &[Cluster]) -> VMatrix {
    let entries = DMatrix::from_fn(scenario.num_users(), clusters.len(), |k, j| {
        scenario.link_gains_with(k, &clusters[j]).geometric()
    });
    VMatrix { entries }
}

/// Normalised inner product `|a·b*| / (‖a‖‖b‖)`, in `[0, 1]`.
pub fn correlation_metric(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain("rows have different lengths".into()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain(
            "correlation with a zero row is undefined".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot.abs() / (na * nb)).min(1.0))
}

/// Reference for the correlation step of GUS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GusVariant {
    /// Compare against the most recently selected user.
    #[default]
    Last,
    /// Compare against every selected user and minimise the worst correlation.
    Set,
}

impl std::str::FromStr for GusVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Self::Last),
            "set" => Ok(Self::Set),
            other => Err(Error::Config(format!("unknown GUS variant '{other}'"))),
        }
    }
}

/// Geometry-based greedy selection of `k_s` users from `v`.
///
/// Ties go to the lowest index. Users with an all-zero row cannot be scored
/// and are dropped from the candidate pool.
pub fn gus_select(v: &VMatrix, k_s: usize, variant: GusVariant) -> Result<ScheduleResult> {
    let k = v.users();
    if k_s == 0 || k_s > k {
        return Err(Error::Domain(format!("cannot select {k_s} of {k} users")));
    }
    let norms: Vec<f64> = (0..k).map(|i| v.row_norm(i)).collect();
    let mut remaining: Vec<usize> = Vec::with_capacity(k);
    for (i, &n) in norms.iter().enumerate() {
        if n > 0.0 {
            remaining.push(i);
        } else {
            log::warn!("GUS: user {i} sees no cluster and is excluded");
        }
    }
    if remaining.len() < k_s {
        return Err(Error::InfeasibleSelection {
            requested: k_s,
            available: remaining.len(),
        });
    }

    let mut best = remaining[0];
    for &i in &remaining[1..] {
        if norms[i] > norms[best] {
            best = i;
        }
    }
    let mut selected = vec![best];
    let mut scores = vec![norms[best]];
    remaining.retain(|&i| i != best);

    let rows: Vec<Vec<f64>> = (0..k).map(|i| v.row(i)).collect();
    while selected.len() < k_s {
        let mut pick: Option<(usize, f64)> = None;
        for &i in &remaining {
            let score = match variant {
                GusVariant::Last => correlation_metric(&rows[i], &rows[*selected.last().unwrap()])?,
                GusVariant::Set => {
                    let mut worst = 0.0f64;
                    for &s in &selected {
                        worst = worst.max(correlation_metric(&rows[i], &rows[s])?);
                    }
                    worst
                }
            };
            if pick.is_none_or(|(_, b)| score < b) {
                pick = Some((i, score));
            }
        }
        let (i, score) = pick.expect("candidate pool checked above");
        selected.push(i);
        scores.push(score);
        remaining.retain(|&r| r != i);
    }
    Ok(ScheduleResult {
        selected,
        per_step_scores: scores,
    })
}

fn subset(h: &CMatrix, ids: &[usize]) -> CMatrix {
    CMatrix::from_columns(&ids.iter().map(|&i| h.column(i)).collect::<Vec<_>>())
}

/// ZF sum-rate (physical noise model) of the users `ids` of `h_all`.
pub fn subset_rate(h_all: &CMatrix, ids: &[usize], power: &PowerConfig) -> Result<f64> {
    let h = subset(h_all, ids);
    let w = zf_weights(&h)?;
    sum_rate(&h, &w, power, RateMode::Physical)
}

/// Full-CSI greedy selection maximising the ZF sum-rate of the growing set.
///
/// The first user has the largest channel norm; each later step adds the user
/// giving the highest tentative sum-rate at per-user power `power.per_user`.
pub fn gwc_select(h_all: &CMatrix, k_s: usize, power: &PowerConfig) -> Result<ScheduleResult> {
    let k = h_all.ncols();
    if k_s == 0 || k_s > k {
        return Err(Error::Domain(format!("cannot select {k_s} of {k} users")));
    }
    let norms: Vec<f64> = (0..k).map(|i| h_all.column(i).norm()).collect();
    let mut first = 0;
    for i in 1..k {
        if norms[i] > norms[first] {
            first = i;
        }
    }
    if norms[first] == 0.0 {
        return Err(Error::InfeasibleSelection {
            requested: k_s,
            available: 0,
        });
    }
    let mut selected = vec![first];
    let mut scores = vec![norms[first]];
    while selected.len() < k_s {
        let mut pick: Option<(usize, f64)> = None;
        let mut trial = selected.clone();
        trial.push(0);
        for i in (0..k).filter(|i| !selected.contains(i)) {
            *trial.last_mut().unwrap() = i;
            let Ok(rate) = subset_rate(h_all, &trial, power) else {
                continue;
            };
            if pick.is_none_or(|(_, b)| rate > b) {
                pick = Some((i, rate));
            }
        }
        let (i, rate) = pick.ok_or(Error::InfeasibleSelection {
            requested: k_s,
            available: selected.len(),
        })?;
        selected.push(i);
        scores.push(rate);
    }
    Ok(ScheduleResult {
        selected,
        per_step_scores: scores,
    })
}

/// Uniformly random subset of `k_s` out of `k` users.
pub fn random_select<R: Rng + ?Sized>(k: usize, k_s: usize, rng: &mut R) -> Result<ScheduleResult> {
    if k_s > k {
        return Err(Error::Domain(format!("cannot select {k_s} of {k} users")));
    }
    Ok(ScheduleResult {
        selected: rand::seq::index::sample(rng, k, k_s).into_vec(),
        per_step_scores: Vec::new(),
    })
}

/// Channel-estimation load `2 · M · K_est`.
pub fn estimation_load(antennas: usize, users_estimated: usize) -> Result<u64> {
    if antennas == 0 || users_estimated == 0 {
        return Err(Error::Domain(
            "estimation load needs positive counts".into(),
        ));
    }
    Ok(2 * antennas as u64 * users_estimated as u64)
}
