//! Uplink training and reception: covariance, MMSE estimation, ZF, rates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMatrix, CVector, BOLTZMANN, C64};

/// Thermal noise power `BW · k_B · T0 · F` in watts.
pub fn noise_power(bandwidth: f64, temperature: f64, noise_figure_db: f64) -> f64 {
    bandwidth * BOLTZMANN * temperature * 10f64.powf(noise_figure_db / 10.0)
}

/// Sample covariance `E{h h^H}` of vectorised channels.
pub fn channel_covariance(samples: &[CVector]) -> Result<CMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Domain("covariance of an empty sample set".into()))?;
    let n = first.len();
    let mut acc = CMatrix::zeros(n, n);
    for h in samples {
        if h.len() != n {
            return Err(Error::Domain(format!(
                "sample length {} differs from {}",
                h.len(),
                n
            )));
        }
        acc.ger(C64::new(1.0, 0.0), h, &h.conjugate(), C64::new(1.0, 0.0));
    }
    acc /= C64::new(samples.len() as f64, 0.0);
    // exact Hermitian symmetry regardless of summation order
    let herm = (&acc + acc.adjoint()) * C64::new(0.5, 0.0);
    Ok(herm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    /// `K × τ_p` pilot matrix, one row per user.
    pub pilots: CMatrix,
    pub noise_variance: f64,
}

impl PilotConfig {
    pub fn new(pilots: CMatrix, noise_variance: f64) -> Result<Self> {
        if pilots.ncols() == 0 || pilots.nrows() == 0 {
            return Err(Error::Domain("pilot matrix must be non-empty".into()));
        }
        if pilots.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("pilot entries must be finite".into()));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::Domain("noise variance must be nonnegative".into()));
        }
        Ok(Self {
            pilots,
            noise_variance,
        })
    }

    /// DFT pilots with `τ_p = K`: orthogonal rows, unit-modulus symbols.
    pub fn orthogonal(users: usize, noise_variance: f64) -> Result<Self> {
        let pilots = CMatrix::from_fn(users, users, |k, n| {
            C64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / users as f64)
        });
        Self::new(pilots, noise_variance)
    }

    pub fn pilot_length(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn users(&self) -> usize {
        self.pilots.nrows()
    }

    /// `Φ_p^T ⊗ I_M`.
    pub fn expanded(&self, antennas: usize) -> CMatrix {
        self.pilots
            .transpose()
            .kronecker(&CMatrix::identity(antennas, antennas))
    }
}

/// Bayesian MMSE channel estimate from received pilots `y` (`M × τ_p`).
///
/// Returns `vec(Ĥ)` stacked column by column (user by user).
pub fn mmse_estimate(y: &CMatrix, pilot: &PilotConfig, covariance: &CMatrix) -> Result<CVector> {
    let m = y.nrows();
    if y.ncols() != pilot.pilot_length() {
        return Err(Error::Domain(format!(
            "received pilots have {} columns, pilot length is {}",
            y.ncols(),
            pilot.pilot_length()
        )));
    }
    let mk = m * pilot.users();
    if covariance.shape() != (mk, mk) {
        return Err(Error::Domain(format!(
            "covariance must be {mk}x{mk}, got {:?}",
            covariance.shape()
        )));
    }
    let phi = pilot.expanded(m);
    let y_vec = CVector::from_column_slice(y.as_slice());
    let r_phi_h = covariance * phi.adjoint();
    let mut inner = &phi * &r_phi_h;
    for i in 0..inner.nrows() {
        inner[(i, i)] += C64::new(pilot.noise_variance, 0.0);
    }
    let lu = inner.lu();
    let pivots = lu.u().diagonal();
    let max = pivots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min = pivots
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if !(min > max * 1e-14) {
        return Err(Error::Numerical(format!(
            "MMSE inner matrix is singular (pivot ratio {:.3e})",
            min / max
        )));
    }
    let solved = lu
        .solve(&y_vec)
        .ok_or_else(|| Error::Numerical("MMSE inner matrix is singular".into()))?;
    Ok(r_phi_h * solved)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZfReceiver {
    /// `K_s × M` weights; row `k` detects user `k`.
    pub weights: CMatrix,
}

const ZF_CONDITION_LIMIT: f64 = 1e12;

/// Zero-forcing receiver `W = (H^H H)^{-1} H^H`, computed through a thin QR.
pub fn zf_weights(h: &CMatrix) -> Result<ZfReceiver> {
    let (m, k) = h.shape();
    if k == 0 {
        return Err(Error::Domain("channel has no columns".into()));
    }
    if m < k {
        return Err(Error::Domain(format!(
            "ZF needs at least as many antennas as users ({m} < {k})"
        )));
    }
    if h.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain("channel has non-finite entries".into()));
    }
    let qr = h.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|z| z.norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min * ZF_CONDITION_LIMIT > max) {
        return Err(Error::Singular(format!(
            "R-factor diagonal ratio {:.3e} exceeds conditioning limit {:.0e}",
            max / min,
            ZF_CONDITION_LIMIT
        )));
    }
    let weights = r
        .solve_upper_triangular(&qr.q().adjoint())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(ZfReceiver { weights })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub total_power: f64,
    pub per_user: f64,
    pub noise_power: f64,
}

impl PowerConfig {
    /// Equal split of `total_power` over `users`.
    pub fn equal(total_power: f64, users: usize, noise_power: f64) -> Result<Self> {
        if users == 0 {
            return Err(Error::Domain("power split over zero users".into()));
        }
        if !(total_power >= 0.0) || !(noise_power > 0.0) {
            return Err(Error::Domain(
                "total power must be nonnegative and noise power positive".into(),
            ));
        }
        Ok(Self {
            total_power,
            per_user: total_power / users as f64,
            noise_power,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    /// Noise amplified by the detector: `P_n ‖w_k‖²`.
    #[default]
    Physical,
    /// Unit noise term, as the closed-form rate is usually printed.
    PaperLiteral,
}

impl std::str::FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Self::Physical),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(Error::Config(format!("unknown rate mode '{other}'"))),
        }
    }
}

/// Per-user SINRs of linear detection `W` applied to the true channel `h`.
pub fn sinrs(h: &CMatrix, w: &ZfReceiver, power: &PowerConfig, mode: RateMode) -> Result<Vec<f64>> {
    let wm = &w.weights;
    if wm.ncols() != h.nrows() || wm.nrows() != h.ncols() {
        return Err(Error::Domain(format!(
            "weights {:?} incompatible with channel {:?}",
            wm.shape(),
            h.shape()
        )));
    }
    let g = wm * h;
    let k_s = h.ncols();
    Ok((0..k_s)
        .map(|k| {
            let signal = power.per_user * g[(k, k)].norm_sqr();
            let interference: f64 = (0..k_s)
                .filter(|&i| i != k)
                .map(|i| power.per_user * g[(k, i)].norm_sqr())
                .sum();
            let noise = match mode {
                RateMode::Physical => power.noise_power * wm.row(k).norm_squared(),
                RateMode::PaperLiteral => 1.0,
            };
            signal / (noise + interference)
        })
        .collect())
}

/// Achievable sum-rate `Σ log2(1 + SINR_k)` in bits/s/Hz.
pub fn sum_rate(h: &CMatrix, w: &ZfReceiver, power: &PowerConfig, mode: RateMode) -> Result<f64> {
    Ok(sinrs(h, w, power, mode)?
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .sum())
}

/// `log2 det(I + (P/K_s) H H^H / P_n)`, evaluated on the `K_s × K_s` side.
pub fn capacity(h: &CMatrix, power: &PowerConfig) -> Result<f64> {
    let k = h.ncols();
    let snr = power.per_user / power.noise_power;
    let mut gram = h.adjoint() * h * C64::new(snr, 0.0);
    for i in 0..k {
        gram[(i, i)] += C64::new(1.0, 0.0);
    }
    let ch = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("capacity Gram matrix not positive definite".into()))?;
    Ok(ch
        .l_dirty()
        .diagonal()
        .iter()
        .map(|z| 2.0 * z.re.ln())
        .sum::<f64>()
        / std::f64::consts::LN_2)
}

/// Sample mean of [`capacity`] over channel realizations.
pub fn ergodic_capacity(samples: &[CMatrix], power: &PowerConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain(
            "ergodic capacity of an empty sample set".into(),
        ));
    }
    let mut acc = 0.0;
    for h in samples {
        acc += capacity(h, power)?;
    }
    Ok(acc / samples.len() as f64)
}
