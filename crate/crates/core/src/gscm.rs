//! Geometry-based stochastic channel model.
//!
//! A [`Scenario`] fixes the large-scale world: base station, user positions,
//! scattering clusters and their circular visibility regions (VRs). Small-scale
//! fading is drawn per (realization, user, cluster) link from position-keyed
//! seeds, so the channel of a user never depends on which other users are
//! synthesised alongside it.
//!
//! Coordinates are metres with the base station at the horizontal origin. The
//! array is a uniform linear array whose broadside is the +x axis; azimuths
//! are measured from broadside.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::{CMatrix, CVector, C64, SPEED_OF_LIGHT};

/// Schema version written into scenario files.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Half the side of the square cell, m.
    pub cell_half_side: f64,
    /// Users closer than this fraction of `cell_half_side` to the BS are rejected.
    pub bs_exclusion_fraction: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    pub num_users: usize,
    pub num_clusters: usize,
    pub mpcs_per_cluster: usize,
    /// VR radius, m.
    pub vr_radius: f64,
    /// VR transition region size, m.
    pub transition_size: f64,
    pub bs_height: f64,
    pub ms_height: f64,
    /// Cluster power decay, 1/s.
    pub power_decay: f64,
    /// Cut-off delay measured as excess over the reference delay, s.
    pub cutoff_excess_delay: f64,
    /// Fixed reference delay, s. `None` uses the line-of-sight BS–user delay of each user.
    pub reference_delay: Option<f64>,
    pub antenna_count: usize,
    /// Element spacing in wavelengths.
    pub antenna_spacing_fraction: f64,
    /// Per-cluster lognormal shadowing, dB.
    pub shadowing_sigma_db: f64,
    /// Intra-cluster azimuth spread (standard deviation of a Laplacian), degrees.
    pub angular_spread_deg: f64,
    /// Clusters whose VR gain for a user is at or below this floor do not contribute.
    pub visibility_floor: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cell_half_side: 1000.0,
            bs_exclusion_fraction: 0.1,
            carrier_freq: 2.0e9,
            num_users: 40,
            num_clusters: 3,
            mpcs_per_cluster: 6,
            vr_radius: 50.0,
            transition_size: 20.0,
            bs_height: 5.0,
            ms_height: 1.5,
            power_decay: 2.3e6,
            cutoff_excess_delay: 3.0e-6,
            reference_delay: None,
            antenna_count: 64,
            antenna_spacing_fraction: 0.5,
            shadowing_sigma_db: 3.0,
            angular_spread_deg: 5.0,
            visibility_floor: 1e-6,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        let finite = [
            self.cell_half_side,
            self.bs_exclusion_fraction,
            self.carrier_freq,
            self.vr_radius,
            self.transition_size,
            self.bs_height,
            self.ms_height,
            self.power_decay,
            self.cutoff_excess_delay,
            self.antenna_spacing_fraction,
            self.shadowing_sigma_db,
            self.angular_spread_deg,
            self.visibility_floor,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("all scalar parameters must be finite");
        }
        if self.cell_half_side <= 0.0 {
            return fail("cell_half_side must be positive");
        }
        if !(self.bs_exclusion_fraction > 0.0 && self.bs_exclusion_fraction < 1.0) {
            return fail("bs_exclusion_fraction must lie in (0, 1)");
        }
        if self.carrier_freq <= 0.0 {
            return fail("carrier_freq must be positive");
        }
        if self.num_users == 0 || self.num_clusters == 0 || self.mpcs_per_cluster == 0 {
            return fail("user, cluster and MPC counts must be positive");
        }
        if self.antenna_count == 0 {
            return fail("antenna_count must be positive");
        }
        if !(self.transition_size > 0.0 && self.vr_radius > self.transition_size) {
            return fail("require vr_radius > transition_size > 0");
        }
        if self.power_decay < 0.0 {
            return fail("power_decay must be nonnegative");
        }
        if self.cutoff_excess_delay < 0.0 {
            return fail("cut-off delay must not precede the reference delay");
        }
        if let Some(t0) = self.reference_delay {
            if !(t0.is_finite() && t0 >= 0.0) {
                return fail("reference_delay must be finite and nonnegative");
            }
        }
        if self.antenna_spacing_fraction <= 0.0 {
            return fail("antenna_spacing_fraction must be positive");
        }
        if self.shadowing_sigma_db < 0.0 || self.angular_spread_deg < 0.0 {
            return fail("spreads must be nonnegative");
        }
        if !(self.visibility_floor >= 0.0 && self.visibility_floor < 1.0) {
            return fail("visibility_floor must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub position: [f64; 3],
    pub vr_center: [f64; 2],
    /// Single-bounce delay BS → cluster → VR centre (at MS height), s.
    pub delay: f64,
    /// Linear power factor.
    pub shadow_gain: f64,
    /// Azimuth offsets of the cluster's MPCs relative to the cluster direction, rad.
    pub mpc_offsets: Vec<f64>,
}

impl Cluster {
    /// Azimuth of the cluster seen from a BS at `bs`, measured from array broadside.
    pub fn azimuth_from(&self, bs: &[f64; 3]) -> f64 {
        (self.position[1] - bs[1]).atan2(self.position[0] - bs[0])
    }

    /// Elevation of the cluster seen from a BS at `bs`.
    pub fn elevation_from(&self, bs: &[f64; 3]) -> f64 {
        let h = horizontal_distance(&self.position, bs);
        (self.position[2] - bs[2]).atan2(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub bs_position: [f64; 3],
    pub users: Vec<[f64; 3]>,
    pub clusters: Vec<Cluster>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

/// Large-scale factors of one user–cluster link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGains {
    /// Path-loss amplitude, square root of the linear power gain.
    pub path_loss_amplitude: f64,
    pub vr_gain: f64,
    pub cluster_attenuation: f64,
    pub shadow_gain: f64,
}

impl LinkGains {
    /// Amplitude scale of the link before per-MPC fading.
    pub fn amplitude(&self) -> f64 {
        self.path_loss_amplitude
            * self.vr_gain
            * (self.cluster_attenuation * self.shadow_gain).sqrt()
    }

    /// Geometry-only gain: path loss, VR transition and cluster attenuation, no shadowing.
    pub fn geometric(&self) -> f64 {
        self.path_loss_amplitude * self.vr_gain * self.cluster_attenuation.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDraw {
    pub gains: Vec<C64>,
    pub azimuths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: CMatrix,
    pub user_ids: Vec<usize>,
}

impl ChannelMatrix {
    pub fn antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn users(&self) -> usize {
        self.entries.ncols()
    }

    /// Columns for `ids`, looked up by user id.
    pub fn select(&self, ids: &[usize]) -> Result<ChannelMatrix> {
        let mut cols = Vec::with_capacity(ids.len());
        for id in ids {
            let pos = self
                .user_ids
                .iter()
                .position(|u| u == id)
                .ok_or_else(|| Error::Domain(format!("user {id} not present in channel")))?;
            cols.push(self.entries.column(pos).into_owned());
        }
        if cols.is_empty() {
            return Err(Error::Domain("empty user selection".into()));
        }
        Ok(ChannelMatrix {
            entries: CMatrix::from_columns(&cols),
            user_ids: ids.to_vec(),
        })
    }
}

pub(crate) fn horizontal_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// VR transition gain `A_VR` at distance `d_ms_vr` from the VR centre.
pub fn vr_gain(d_ms_vr: f64, vr_radius: f64, transition_size: f64, wavelength: f64) -> f64 {
    let arg = 2.0 * 2f64.sqrt() * (transition_size + d_ms_vr - vr_radius)
        / (wavelength * transition_size).sqrt();
    0.5 - arg.atan() / PI
}

/// Cluster power attenuation `A_C`, floored at the cut-off delay.
pub fn cluster_attenuation(delay: f64, reference: f64, cutoff: f64, decay: f64) -> f64 {
    let direct = (-decay * (delay - reference)).exp();
    let floor = (-decay * (cutoff - reference)).exp();
    direct.max(floor)
}

/// NLoS micro-cell path loss. Returns `(loss_db, linear_power_gain)`.
pub fn path_loss_nlos(d_bs_ms: f64, wavelength: f64) -> Result<(f64, f64)> {
    if !(d_bs_ms > 0.0) || !(wavelength > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs positive distance and wavelength, got d={d_bs_ms}, lambda={wavelength}"
        )));
    }
    let loss_db = 26.0 * d_bs_ms.log10() + 20.0 * (4.0 * PI / wavelength).log10();
    Ok((loss_db, 10f64.powf(-loss_db / 10.0)))
}

/// ULA response `exp(j·α·m·sin φ)` with `α = -2π d/λ`.
pub fn steering_vector(azimuth: f64, antennas: usize, spacing_fraction: f64) -> CVector {
    let alpha = -2.0 * PI * spacing_fraction;
    let phase = alpha * azimuth.sin();
    CVector::from_fn(antennas, |m, _| C64::from_polar(1.0, phase * m as f64))
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return 0.0;
    }
    let scale = std_dev * FRAC_1_SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws a reproducible scenario from `config`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = seed::rng(config.rng_seed, Stream::Scenario, &[]);
    let r = config.cell_half_side;
    let r_min = config.bs_exclusion_fraction * r;
    let bs = [0.0, 0.0, config.bs_height];

    let mut users = Vec::with_capacity(config.num_users);
    for k in 0..config.num_users {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-r..r);
            let y = rng.random_range(-r..r);
            if x.hypot(y) >= r_min {
                placed = Some([x, y, config.ms_height]);
                break;
            }
        }
        users.push(placed.ok_or_else(|| {
            Error::Config(format!(
                "could not place user {k} outside the exclusion disk"
            ))
        })?);
    }

    let spread = config.angular_spread_deg.to_radians();
    let (z_lo, z_hi) = if config.ms_height <= config.bs_height {
        (config.ms_height, config.bs_height)
    } else {
        (config.bs_height, config.ms_height)
    };
    let mut clusters = Vec::with_capacity(config.num_clusters);
    for _ in 0..config.num_clusters {
        let z = if z_hi > z_lo {
            rng.random_range(z_lo..z_hi)
        } else {
            z_lo
        };
        let position = [rng.random_range(-r..r), rng.random_range(-r..r), z];
        let vr_center = [rng.random_range(-r..r), rng.random_range(-r..r)];
        let vr_point = [vr_center[0], vr_center[1], config.ms_height];
        let delay = (distance(&bs, &position) + distance(&position, &vr_point)) / SPEED_OF_LIGHT;
        let normal: f64 = StandardNormal.sample(&mut rng);
        let shadow_gain = 10f64.powf(config.shadowing_sigma_db * normal / 10.0);
        let mpc_offsets = (0..config.mpcs_per_cluster)
            .map(|_| laplacian(&mut rng, spread))
            .collect();
        clusters.push(Cluster {
            position,
            vr_center,
            delay,
            shadow_gain,
            mpc_offsets,
        });
    }

    Ok(Scenario {
        config: config.clone(),
        bs_position: bs,
        users,
        clusters,
    })
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Line-of-sight BS–user delay.
    pub fn los_delay(&self, user: usize) -> f64 {
        distance(&self.bs_position, &self.users[user]) / SPEED_OF_LIGHT
    }

    /// Large-scale gains of the link between `user` and `cluster`.
    pub fn link_gains(&self, user: usize, cluster: usize) -> LinkGains {
        self.link_gains_with(user, &self.clusters[cluster])
    }

    /// Large-scale gains against an arbitrary cluster record (used when clusters
    /// are re-localised).
    pub fn link_gains_with(&self, user: usize, cluster: &Cluster) -> LinkGains {
        let cfg = &self.config;
        let lambda = cfg.wavelength();
        let ms = &self.users[user];
        let d_bs_ms = distance(&self.bs_position, ms).max(f64::MIN_POSITIVE);
        let (_, pl_gain) =
            path_loss_nlos(d_bs_ms, lambda).expect("positive distance and wavelength");
        let d_vr = (ms[0] - cluster.vr_center[0]).hypot(ms[1] - cluster.vr_center[1]);
        let a_vr = vr_gain(d_vr, cfg.vr_radius, cfg.transition_size, lambda);
        let reference = cfg.reference_delay.unwrap_or(d_bs_ms / SPEED_OF_LIGHT);
        let link_delay = (distance(&self.bs_position, &cluster.position)
            + distance(&cluster.position, ms))
            / SPEED_OF_LIGHT;
        let a_c = cluster_attenuation(
            link_delay,
            reference,
            reference + cfg.cutoff_excess_delay,
            cfg.power_decay,
        );
        LinkGains {
            path_loss_amplitude: pl_gain.sqrt(),
            vr_gain: a_vr,
            cluster_attenuation: a_c,
            shadow_gain: cluster.shadow_gain,
        }
    }

    /// Clusters contributing to the channel of `user`.
    pub fn visible_clusters(&self, user: usize) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&j| self.link_gains(user, j).vr_gain > self.config.visibility_floor)
            .collect()
    }

    /// Deterministic fading stream for one link of one realization.
    pub fn link_rng(
        &self,
        realization: u64,
        user: usize,
        cluster: usize,
    ) -> rand_chacha::ChaCha8Rng {
        seed::rng(
            self.config.rng_seed,
            Stream::Fading,
            &[realization, user as u64, cluster as u64],
        )
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let file = ScenarioFile {
            schema_version: SCENARIO_SCHEMA_VERSION,
            scenario: self.clone(),
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario schema_version {}",
                file.schema_version
            )));
        }
        file.scenario.config.validate()?;
        if file.scenario.clusters.len() != file.scenario.config.num_clusters
            || file.scenario.users.len() != file.scenario.config.num_users
        {
            return Err(Error::Config(
                "user/cluster counts disagree with config".into(),
            ));
        }
        Ok(file.scenario)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Draws the MPC gains and azimuths of one user–cluster link.
///
/// Each gain is the link amplitude times a circular complex Gaussian of power
/// `1 / N_p`, so the expected total cluster power is `amplitude²`.
pub fn mpc_amplitudes<R: Rng + ?Sized>(
    scenario: &Scenario,
    user: usize,
    cluster: usize,
    rng: &mut R,
) -> MpcDraw {
    let link = scenario.link_gains(user, cluster);
    let c = &scenario.clusters[cluster];
    let base = c.azimuth_from(&scenario.bs_position);
    let n_p = c.mpc_offsets.len();
    let scale = (0.5 / n_p as f64).sqrt();
    let fading: Vec<C64> = (0..n_p)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * scale
        })
        .collect();
    compose_mpcs(
        &link,
        &fading,
        c.mpc_offsets.iter().map(|o| base + o).collect(),
    )
}

/// Combines link gains with unit-scale fading coefficients.
pub fn compose_mpcs(link: &LinkGains, fading: &[C64], azimuths: Vec<f64>) -> MpcDraw {
    let amp = link.amplitude();
    MpcDraw {
        gains: fading.iter().map(|g| g * amp).collect(),
        azimuths,
    }
}

/// One channel column: sum over clusters and MPCs of gain times array response.
pub fn synthesize_column(draws: &[MpcDraw], antennas: usize, spacing_fraction: f64) -> CVector {
    let mut col = CVector::zeros(antennas);
    for draw in draws {
        for (g, phi) in draw.gains.iter().zip(&draw.azimuths) {
            col.axpy(
                *g,
                &steering_vector(*phi, antennas, spacing_fraction),
                C64::new(1.0, 0.0),
            );
        }
    }
    col
}

/// Channel of the `selected` users for fading realization `realization`.
pub fn channel_matrix(
    scenario: &Scenario,
    selected: &[usize],
    realization: u64,
) -> Result<ChannelMatrix> {
    if selected.is_empty() {
        return Err(Error::Domain("empty user selection".into()));
    }
    for (i, &k) in selected.iter().enumerate() {
        if k >= scenario.num_users() {
            return Err(Error::Domain(format!("user index {k} out of range")));
        }
        if selected[..i].contains(&k) {
            return Err(Error::Domain(format!("user index {k} selected twice")));
        }
    }
    let m = scenario.config.antenna_count;
    let spacing = scenario.config.antenna_spacing_fraction;
    let cols: Vec<CVector> = selected
        .iter()
        .map(|&k| {
            let draws: Vec<MpcDraw> = scenario
                .visible_clusters(k)
                .into_iter()
                .map(|j| mpc_amplitudes(scenario, k, j, &mut scenario.link_rng(realization, k, j)))
                .collect();
            synthesize_column(&draws, m, spacing)
        })
        .collect();
    Ok(ChannelMatrix {
        entries: CMatrix::from_columns(&cols),
        user_ids: selected.to_vec(),
    })
}

/// Channel of every user in the scenario.
pub fn full_channel(scenario: &Scenario, realization: u64) -> Result<ChannelMatrix> {
    let all: Vec<usize> = (0..scenario.num_users()).collect();
    channel_matrix(scenario, &all, realization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    const LAMBDA: f64 = 0.1499;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            num_users: 10,
            antenna_count: 8,
            ..Default::default()
        }
    }

    #[test]
    fn users_respect_exclusion_and_cell() {
        let s = generate_scenario(&small_config()).unwrap();
        assert_eq!(s.users.len(), 10);
        assert_eq!(s.clusters.len(), 3);
        for u in &s.users {
            let h = u[0].hypot(u[1]);
            assert!(h >= 100.0 && h <= 2f64.sqrt() * 1000.0);
            assert!(u[0].abs() <= 1000.0 && u[1].abs() <= 1000.0);
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let a = generate_scenario(&small_config()).unwrap();
        let b = generate_scenario(&small_config()).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&ScenarioConfig {
            rng_seed: 1,
            ..small_config()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_exclusion_fraction_is_config_error() {
        let cfg = ScenarioConfig {
            bs_exclusion_fraction: 1.5,
            ..small_config()
        };
        assert!(matches!(generate_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn cluster_delay_not_below_bounce_geometry() {
        let s = generate_scenario(&small_config()).unwrap();
        for c in &s.clusters {
            let vr = [c.vr_center[0], c.vr_center[1], s.config.ms_height];
            let los = distance(&s.bs_position, &vr) / SPEED_OF_LIGHT;
            assert!(c.delay >= los);
            assert!(c.shadow_gain > 0.0);
            assert_eq!(c.mpc_offsets.len(), 6);
        }
    }

    #[test]
    fn vr_gain_midpoint_and_limits() {
        assert_eq!(vr_gain(30.0, 50.0, 20.0, LAMBDA), 0.5);
        assert!(vr_gain(1e12, 50.0, 20.0, LAMBDA) < 1e-9);
        assert!(vr_gain(0.0, 5000.0, 20.0, LAMBDA) > 0.999);
        // mpmath at 40 digits
        assert_relative_eq!(
            vr_gain(50.0, 50.0, 20.0, LAMBDA),
            0.009_739_919_800_868_958,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            vr_gain(0.0, 50.0, 20.0, LAMBDA),
            0.993_505_594_141_337_9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cluster_attenuation_cases() {
        assert_eq!(cluster_attenuation(1e-6, 1e-6, 5e-6, 1e6), 1.0);
        assert_eq!(cluster_attenuation(9e-6, 1e-6, 5e-6, 0.0), 1.0);
        let floor = (-1e6f64 * (5e-6 - 1e-6)).exp();
        assert_eq!(cluster_attenuation(8e-6, 1e-6, 5e-6, 1e6), floor);
        assert!(cluster_attenuation(3e-6, 1e-6, 5e-6, 1e6) <= 1.0);
    }

    #[test]
    fn path_loss_values() {
        let (l1, g1) = path_loss_nlos(1.0, LAMBDA).unwrap();
        assert_relative_eq!(l1, 38.468_164_623_476_34, max_relative = 1e-13);
        assert_relative_eq!(g1, 10f64.powf(-l1 / 10.0));
        let (l100, _) = path_loss_nlos(100.0, LAMBDA).unwrap();
        assert_relative_eq!(l100, 90.468_164_623_476_34, max_relative = 1e-13);
        let (l1000, _) = path_loss_nlos(1000.0, LAMBDA).unwrap();
        assert_relative_eq!(l1000 - l100, 26.0, epsilon = 1e-10);
        assert!(path_loss_nlos(0.0, LAMBDA).is_err());
        assert!(path_loss_nlos(-3.0, LAMBDA).is_err());
    }

    #[test]
    fn steering_vector_cases() {
        let v = steering_vector(0.0, 5, 0.5);
        assert!(v.iter().all(|z| *z == C64::new(1.0, 0.0)));
        let w = steering_vector(0.7, 16, 0.5);
        for z in w.iter() {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-15);
        }
        let s = steering_vector(PI / 2.0, 2, 0.5);
        assert_relative_eq!(s[1].re, -1.0, epsilon = 1e-15);
        assert!(s[1].im.abs() < 1e-15);
    }

    #[test]
    fn far_user_has_vanishing_amplitudes() {
        let mut s = generate_scenario(&small_config()).unwrap();
        s.clusters[0].vr_center = [1e9, 1e9];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let d = mpc_amplitudes(&s, 0, 0, &mut rng);
        assert!(d.gains.iter().all(|g| g.norm() < 1e-15));
    }

    #[test]
    fn unit_factors_give_path_loss_amplitude() {
        let link = LinkGains {
            path_loss_amplitude: 3.5e-5,
            vr_gain: 1.0,
            cluster_attenuation: 1.0,
            shadow_gain: 1.0,
        };
        let d = compose_mpcs(&link, &[C64::new(1.0, 0.0)], vec![0.0]);
        assert_eq!(d.gains[0].norm(), 3.5e-5);
    }

    #[test]
    fn mean_cluster_power_matches_large_scale_gain() {
        let cfg = ScenarioConfig {
            shadowing_sigma_db: 0.0,
            ..small_config()
        };
        let s = generate_scenario(&cfg).unwrap();
        let link = s.link_gains(2, 1);
        let expected = (link.path_loss_amplitude * link.vr_gain).powi(2) * link.cluster_attenuation;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += mpc_amplitudes(&s, 2, 1, &mut rng)
                .gains
                .iter()
                .map(|g| g.norm_sqr())
                .sum::<f64>();
        }
        assert_relative_eq!(acc / n as f64, expected, max_relative = 0.01);
    }

    #[test]
    fn single_path_column_is_scaled_ones() {
        let a = C64::new(0.3, -0.4);
        let col = synthesize_column(
            &[MpcDraw {
                gains: vec![a],
                azimuths: vec![0.0],
            }],
            4,
            0.5,
        );
        assert!(col.iter().all(|z| *z == a));
    }

    #[test]
    fn columns_match_brute_force_double_sum() {
        let cfg = ScenarioConfig {
            num_users: 3,
            num_clusters: 2,
            mpcs_per_cluster: 2,
            antenna_count: 4,
            ..Default::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let h = channel_matrix(&s, &[2, 0], 5).unwrap();
        let alpha = -2.0 * PI * 0.5;
        for (col, &k) in [2usize, 0].iter().enumerate() {
            for m in 0..4 {
                let mut expected = C64::new(0.0, 0.0);
                for j in s.visible_clusters(k) {
                    let draw = mpc_amplitudes(&s, k, j, &mut s.link_rng(5, k, j));
                    for i in 0..2 {
                        let ph = alpha * m as f64 * draw.azimuths[i].sin();
                        expected += draw.gains[i] * C64::new(ph.cos(), ph.sin());
                    }
                }
                let got = h.entries[(m, col)];
                assert_relative_eq!(got.re, expected.re, max_relative = 1e-12, epsilon = 1e-30);
                assert_relative_eq!(got.im, expected.im, max_relative = 1e-12, epsilon = 1e-30);
            }
        }
    }

    #[test]
    fn doubling_gains_doubles_column() {
        let s = generate_scenario(&small_config()).unwrap();
        let draws: Vec<MpcDraw> = (0..3)
            .map(|j| mpc_amplitudes(&s, 1, j, &mut s.link_rng(0, 1, j)))
            .collect();
        let doubled: Vec<MpcDraw> = draws
            .iter()
            .map(|d| MpcDraw {
                gains: d.gains.iter().map(|g| g * 2.0).collect(),
                azimuths: d.azimuths.clone(),
            })
            .collect();
        let a = synthesize_column(&draws, 8, 0.5);
        let b = synthesize_column(&doubled, 8, 0.5);
        assert_eq!(b, a * C64::new(2.0, 0.0));
    }

    #[test]
    fn shared_cluster_columns_are_parallel() {
        let s = generate_scenario(&ScenarioConfig {
            num_clusters: 1,
            ..small_config()
        })
        .unwrap();
        let fading: Vec<C64> = {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            (0..6)
                .map(|_| {
                    C64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect()
        };
        let base = s.clusters[0].azimuth_from(&s.bs_position);
        let az: Vec<f64> = s.clusters[0].mpc_offsets.iter().map(|o| base + o).collect();
        let c0 = synthesize_column(
            &[compose_mpcs(&s.link_gains(0, 0), &fading, az.clone())],
            8,
            0.5,
        );
        let c1 = synthesize_column(&[compose_mpcs(&s.link_gains(1, 0), &fading, az)], 8, 0.5);
        let rho = c0.dotc(&c1).norm() / (c0.norm() * c1.norm());
        assert_relative_eq!(rho, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn selected_columns_match_full_channel() {
        let s = generate_scenario(&small_config()).unwrap();
        let full = full_channel(&s, 4).unwrap();
        let sub = channel_matrix(&s, &[7, 2, 5], 4).unwrap();
        assert_eq!(full.select(&[7, 2, 5]).unwrap(), sub);
    }

    #[test]
    fn empty_or_duplicate_selection_is_rejected() {
        let s = generate_scenario(&small_config()).unwrap();
        assert!(channel_matrix(&s, &[], 0).is_err());
        assert!(channel_matrix(&s, &[1, 1], 0).is_err());
        assert!(channel_matrix(&s, &[10], 0).is_err());
    }

    #[test]
    fn scenario_file_round_trip() {
        let s = generate_scenario(&small_config()).unwrap();
        let text = s.to_toml_string().unwrap();
        assert!(text.starts_with("schema_version = 1"));
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }
}
