//! Cluster localisation accuracy and its effect on the pathloss matrix.
//!
//! Angle conventions differ between the bound and the inversion:
//!
//! - [`crlb`] takes the azimuth that feeds the antenna field pattern and the
//!   elevation that enters the `cos θ` term.
//! - [`solve_cluster_distance`] takes the cluster elevation seen from the BS
//!   (the angle multiplying the height term) and the azimuth of the cluster
//!   relative to the BS → MS direction.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gscm::{distance, horizontal_distance, Cluster, Scenario};
use crate::scheduler::{build_v_matrix, v_matrix_for, VMatrix};
use crate::seed::{self, Stream};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPattern {
    /// `0.67 + 2.67φ − 6.79φ² + 5.7φ³ − 1.71φ³`, two cubic terms kept as written.
    #[default]
    AsPrinted,
    /// Same coefficients with the last term read as `−1.71φ⁴`.
    Quartic,
}

/// Antenna electric field pattern.
pub fn field_pattern(phi: f64) -> f64 {
    field_pattern_with(phi, FieldPattern::AsPrinted)
}

pub fn field_pattern_with(phi: f64, pattern: FieldPattern) -> f64 {
    let base = 0.67 + 2.67 * phi - 6.79 * phi * phi + 5.7 * phi.powi(3);
    match pattern {
        FieldPattern::AsPrinted => base - 1.71 * phi.powi(3),
        FieldPattern::Quartic => base - 1.71 * phi.powi(4),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrlbParams {
    pub antennas: usize,
    /// Sensors per array direction, `M_x`.
    pub sensors_per_direction: usize,
    /// Received signal periods, `I`.
    pub periods: usize,
    /// PN sounding sequence length, `N_c`.
    pub pn_length: usize,
    /// Per-antenna input SNR, linear.
    pub snr_linear: f64,
    pub bandwidth: f64,
    pub spacing_fraction: f64,
    pub pattern: FieldPattern,
}

impl Default for CrlbParams {
    fn default() -> Self {
        Self {
            antennas: 64,
            sensors_per_direction: 5,
            periods: 1,
            pn_length: 127,
            snr_linear: 100.0,
            bandwidth: 20e6,
            spacing_fraction: 0.5,
            pattern: FieldPattern::AsPrinted,
        }
    }
}

impl CrlbParams {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0
            || self.sensors_per_direction == 0
            || self.periods == 0
            || self.pn_length == 0
        {
            return Err(Error::Config("CRLB counts must be positive".into()));
        }
        if !(self.snr_linear > 0.0 && self.bandwidth > 0.0 && self.spacing_fraction > 0.0) {
            return Err(Error::Config(
                "CRLB SNR, bandwidth and spacing must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `Δ = 4π²(d/λ)²((7/3)M_x³ − 8M_x² + (29/3)M_x − 4)`.
    pub fn aperture_term(&self) -> f64 {
        let m = self.sensors_per_direction as f64;
        // (7m³ − 24m² + 29m − 12)/3 is exact at the root m = 1
        let poly = (7.0 * m * m * m - 24.0 * m * m + 29.0 * m - 12.0) / 3.0;
        4.0 * PI * PI * self.spacing_fraction * self.spacing_fraction * poly
    }

    /// Output SNR `γ_O = M · I · N_c · |f(φ)|² · γ_I`.
    pub fn output_snr(&self, azimuth: f64) -> f64 {
        let f = field_pattern_with(azimuth, self.pattern);
        (self.antennas * self.periods * self.pn_length) as f64 * f * f * self.snr_linear
    }
}

/// Variance bounds: delay in s², angles in rad².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crlb {
    pub delay: f64,
    pub elevation: f64,
    pub azimuth: f64,
}

/// Bounds at a given output SNR.
pub fn crlb_at_output_snr(params: &CrlbParams, output_snr: f64, elevation: f64) -> Result<Crlb> {
    let cos_el = elevation.cos();
    if cos_el.abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "elevation bound is singular at elevation {elevation}"
        )));
    }
    let inv = 1.0 / output_snr;
    let delta = params.aperture_term();
    let m = params.antennas as f64;
    let (el, az) = if delta == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            inv * (m / (2.0 * delta * cos_el)),
            inv * (m / (2.0 * delta)),
        )
    };
    Ok(Crlb {
        delay: inv * (1.0 / (8.0 * PI * PI * params.bandwidth)),
        elevation: el,
        azimuth: az,
    })
}

/// Closed-form delay, elevation and azimuth bounds.
pub fn crlb(params: &CrlbParams, azimuth: f64, elevation: f64) -> Result<Crlb> {
    crlb_at_output_snr(params, params.output_snr(azimuth), elevation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipseForm {
    /// Full 3-D law of cosines, including the lateral offset `d·cos(el)·sin(az)`.
    #[default]
    Exact,
    /// Lateral offset omitted; quadratic in the BS–cluster distance.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootChoice {
    #[default]
    Smallest,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionOptions {
    pub form: EllipseForm,
    pub root: RootChoice,
}

/// `(d_BS,C, d_MS,C)` from the single-bounce delay `delay` (s).
pub fn solve_cluster_distance(
    delay: f64,
    elevation: f64,
    azimuth: f64,
    h_bs: f64,
    h_ms: f64,
    d_bs_ms: f64,
) -> Result<(f64, f64)> {
    solve_from_path_length(
        SPEED_OF_LIGHT * delay,
        elevation,
        azimuth,
        h_bs,
        h_ms,
        d_bs_ms,
        InversionOptions::default(),
    )
}

/// Same as [`solve_cluster_distance`] with the path length `c0·τ` in metres.
pub fn solve_from_path_length(
    path_length: f64,
    elevation: f64,
    azimuth: f64,
    h_bs: f64,
    h_ms: f64,
    d_bs_ms: f64,
    options: InversionOptions,
) -> Result<(f64, f64)> {
    let l = path_length;
    let a = h_bs - h_ms;
    let s = elevation.sin();
    let c = elevation.cos() * azimuth.cos();
    let constant = l * l - a * a - d_bs_ms * d_bs_ms;
    let half_b = l + a * s - d_bs_ms * c;
    let quad = match options.form {
        EllipseForm::Exact => 0.0,
        EllipseForm::AsPrinted => {
            let lateral = elevation.cos() * azimuth.sin();
            lateral * lateral
        }
    };
    let admissible = |d: f64| d.is_finite() && d > 0.0 && d < l;
    let mut roots: Vec<f64> = if quad.abs() <= 1e-15 * half_b.abs().max(1.0) {
        vec![constant / (2.0 * half_b)]
    } else {
        // quad·d² − 2·half_b·d + constant = 0
        let disc = half_b * half_b - quad * constant;
        if disc < 0.0 {
            Vec::new()
        } else {
            let q = half_b + half_b.signum() * disc.sqrt();
            let mut r = vec![q / quad];
            if q != 0.0 {
                r.push(constant / q);
            }
            r
        }
    };
    roots.retain(|&d| admissible(d));
    roots.sort_by(f64::total_cmp);
    let d = match (options.root, roots.as_slice()) {
        (_, []) => {
            return Err(Error::GeometryInfeasible(format!(
                "no BS–cluster distance in (0, {l}) for path length {l}, d_BS,MS {d_bs_ms}"
            )))
        }
        (RootChoice::Smallest, r) => r[0],
        (RootChoice::Alternate, r) => *r.last().unwrap(),
    };
    Ok((d, l - d))
}

/// Places a point at distance `d_bs_c` from `bs` with the given elevation and
/// azimuth relative to the horizontal BS → `anchor` direction.
pub fn place_cluster(
    bs: &[f64; 3],
    anchor: &[f64; 3],
    d_bs_c: f64,
    elevation: f64,
    relative_azimuth: f64,
) -> [f64; 3] {
    let az = (anchor[1] - bs[1]).atan2(anchor[0] - bs[0]) + relative_azimuth;
    let h = d_bs_c * elevation.cos();
    [
        bs[0] + h * az.cos(),
        bs[1] + h * az.sin(),
        bs[2] + d_bs_c * elevation.sin(),
    ]
}

/// Quantities a BS measures for a single-bounce path via `cluster` to `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceObservation {
    pub path_length: f64,
    pub elevation: f64,
    pub relative_azimuth: f64,
    pub d_bs_ms: f64,
}

pub fn observe_bounce(bs: &[f64; 3], cluster: &[f64; 3], anchor: &[f64; 3]) -> BounceObservation {
    let path_length = distance(bs, cluster) + distance(cluster, anchor);
    let elevation = (cluster[2] - bs[2]).atan2(horizontal_distance(cluster, bs));
    let az_c = (cluster[1] - bs[1]).atan2(cluster[0] - bs[0]);
    let az_a = (anchor[1] - bs[1]).atan2(anchor[0] - bs[0]);
    let relative_azimuth = (az_c - az_a + PI).rem_euclid(2.0 * PI) - PI;
    BounceObservation {
        path_length,
        elevation,
        relative_azimuth,
        d_bs_ms: horizontal_distance(bs, anchor),
    }
}

/// Additive errors applied to one cluster's measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasurementShift {
    pub delay: f64,
    pub elevation: f64,
    pub azimuth: f64,
}

fn vr_anchor(scenario: &Scenario, cluster: &Cluster) -> [f64; 3] {
    [
        cluster.vr_center[0],
        cluster.vr_center[1],
        scenario.config.ms_height,
    ]
}

/// Re-localises `cluster` from shifted delay/angle measurements taken along
/// its BS → cluster → VR-centre path. The VR centre moves with the cluster.
pub fn rebuild_cluster(
    scenario: &Scenario,
    cluster: &Cluster,
    shift: MeasurementShift,
    options: InversionOptions,
) -> Result<Cluster> {
    let bs = &scenario.bs_position;
    let anchor = vr_anchor(scenario, cluster);
    let obs = observe_bounce(bs, &cluster.position, &anchor);
    let path_length = obs.path_length + SPEED_OF_LIGHT * shift.delay;
    let elevation = obs.elevation + shift.elevation;
    let azimuth = obs.relative_azimuth + shift.azimuth;
    let (d_bs_c, _) = solve_from_path_length(
        path_length,
        elevation,
        azimuth,
        bs[2],
        anchor[2],
        obs.d_bs_ms,
        options,
    )?;
    let position = place_cluster(bs, &anchor, d_bs_c, elevation, azimuth);
    Ok(Cluster {
        position,
        vr_center: [
            cluster.vr_center[0] + position[0] - cluster.position[0],
            cluster.vr_center[1] + position[1] - cluster.position[1],
        ],
        delay: path_length / SPEED_OF_LIGHT,
        shadow_gain: cluster.shadow_gain,
        mpc_offsets: cluster.mpc_offsets.clone(),
    })
}

/// Angle fed to the field pattern: distance from broadside folded into `[0, π/2]`.
pub fn pattern_angle(azimuth: f64) -> f64 {
    azimuth.sin().asin().abs()
}

/// CRLBs of the measurements of `cluster` in `scenario`.
pub fn cluster_crlb(scenario: &Scenario, cluster: &Cluster, params: &CrlbParams) -> Result<Crlb> {
    let bs = &scenario.bs_position;
    crlb(
        params,
        pattern_angle(cluster.azimuth_from(bs)),
        cluster.elevation_from(bs),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedGeometry {
    pub clusters: Vec<Cluster>,
    pub v_tilde: VMatrix,
    /// `E = V − Ṽ`.
    pub error: DMatrix<f64>,
    /// Clusters whose perturbed geometry had no admissible solution.
    pub fallbacks: usize,
}

/// Perturbs every cluster's delay and angles by `±Ω·√CRLB` (signs drawn from
/// `seed`), re-localises the clusters and rebuilds the pathloss matrix.
pub fn perturb_and_rebuild(
    scenario: &Scenario,
    omega: u32,
    params: &CrlbParams,
    seed: u64,
    options: InversionOptions,
) -> Result<PerturbedGeometry> {
    params.validate()?;
    let v = build_v_matrix(scenario);
    if omega == 0 {
        return Ok(PerturbedGeometry {
            clusters: scenario.clusters.clone(),
            error: DMatrix::zeros(v.entries.nrows(), v.entries.ncols()),
            v_tilde: v,
            fallbacks: 0,
        });
    }
    let scale = omega as f64;
    let mut fallbacks = 0;
    let clusters: Vec<Cluster> = scenario
        .clusters
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut rng = seed::rng(seed, Stream::Perturbation, &[j as u64]);
            let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
            let signs = [sign(), sign(), sign()];
            let rebuilt = cluster_crlb(scenario, c, params).and_then(|b| {
                let shift = MeasurementShift {
                    delay: signs[0] * scale * b.delay.sqrt(),
                    elevation: signs[1] * scale * b.elevation.sqrt(),
                    azimuth: signs[2] * scale * b.azimuth.sqrt(),
                };
                rebuild_cluster(scenario, c, shift, options)
            });
            match rebuilt {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("cluster {j} keeps its true position: {e}");
                    fallbacks += 1;
                    c.clone()
                }
            }
        })
        .collect();
    if fallbacks > 0 {
        log::info!("{fallbacks} cluster(s) fell back to unperturbed geometry");
    }
    let v_tilde = v_matrix_for(scenario, &clusters);
    let error = &v.entries - &v_tilde.entries;
    Ok(PerturbedGeometry {
        clusters,
        v_tilde,
        error,
        fallbacks,
    })
}
