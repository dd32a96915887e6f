//! Magnetic dipole-dipole coupling from geometry, the exchange share of a
//! measured coupling, and the blockade shift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{ElectronicState, PairSiteModel};
use crate::parallel;
use crate::tensor::{Matrix3, Vector3};

/// μ₀/4π in T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.62607015e-34;
pub const MIN_SEPARATION: f64 = 0.5;

pub fn angstrom_to_m(r: f64) -> f64 {
    r * 1e-10
}

pub fn m_to_angstrom(r: f64) -> f64 {
    r * 1e10
}

pub fn ghz_to_hz(f: f64) -> f64 {
    f * 1e9
}

pub fn hz_to_ghz(f: f64) -> f64 {
    f * 1e-9
}

/// The single place where units meet: coupling (GHz) between two moments of
/// 1 GHz/T each at distance `r` Å.
///
/// With μ = h·M (M in Hz/T) the energy (μ₀/4π)·μ₁μ₂/r³ divided by h gives
/// (μ₀/4π)·h·M₁M₂/r³ in Hz.
pub fn dipole_prefactor_ghz(r_angstrom: f64) -> f64 {
    let r = angstrom_to_m(r_angstrom);
    let unit_moment = ghz_to_hz(1.0);
    hz_to_ghz(MU0_OVER_4PI * PLANCK * unit_moment * unit_moment / (r * r * r))
}

/// `J_dd = C/|r|³ · [M₁ᵀM₂ − 3(M₁ᵀr̂)(M₂ᵀr̂)ᵀ]` for the `B·M·S` Zeeman
/// convention, in GHz. For symmetric g-tensors this is the textbook
/// `M₁M₂ − 3(M₁r̂)(M₂r̂)ᵀ`.
pub fn dipole_coupling(m1: &Matrix3, m2: &Matrix3, r: Vector3) -> Result<Matrix3> {
    let d = r.norm();
    if !d.is_finite() || d <= MIN_SEPARATION {
        return Err(Error::SeparationTooSmall(d));
    }
    let rhat = r * (1.0 / d);
    let m1t = m1.transpose();
    let m2t = m2.transpose();
    let a = m1t.mul_vec(rhat);
    let b = m2t.mul_vec(rhat);
    let tensor = m1t * *m2 - Matrix3::outer(a, b) * 3.0;
    Ok(tensor * dipole_prefactor_ghz(d))
}

/// One electronic state's observed coupling and the g-tensors of the two
/// ions in that state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeInput {
    pub state: ElectronicState,
    pub m1: Matrix3,
    pub m2: Matrix3,
    /// Measured J_zz (GHz).
    pub j_obs_zz: f64,
}

impl ExchangeInput {
    /// Inputs for every state of `model` that carries a coupling tensor.
    pub fn from_model(model: &PairSiteModel) -> Vec<ExchangeInput> {
        ElectronicState::ALL
            .into_iter()
            .filter_map(|s| {
                let j = model.coupling.get(s)?;
                let (m1, m2) = model.gtensors(s);
                Some(ExchangeInput {
                    state: s,
                    m1: *m1,
                    m2: *m2,
                    j_obs_zz: j[(2, 2)],
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExchange {
    pub state: ElectronicState,
    pub j_dd: Matrix3,
    pub j_obs_zz: f64,
    /// `| |J_obs| − |J_dd| | / |J_obs|` on the zz element.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeReport {
    pub r_angstrom: f64,
    pub states: Vec<StateExchange>,
    pub min_fraction: f64,
    pub max_fraction: f64,
    /// `Σ| |J_obs| − |J_dd| | / Σ|J_obs|` over states: the exchange share of
    /// the total measured coupling.
    pub aggregate_fraction: f64,
    /// Some state needs more than 100 % exchange (dipole overshoots).
    pub exceeds_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeScan {
    pub reports: Vec<ExchangeReport>,
    /// Separation minimising the worst-state fraction.
    pub best_r_angstrom: f64,
    pub best_max_fraction: f64,
}

/// Magnitude-aligned exchange share: the dipole term can supply at most
/// |J_dd| of the measured |J_obs|, whatever its sign along the chosen axis.
pub fn exchange_fraction(j_obs: f64, j_dd: f64) -> f64 {
    (j_obs.abs() - j_dd.abs()).abs() / j_obs.abs()
}

pub fn exchange_report(
    inputs: &[ExchangeInput],
    axis: Vector3,
    r_angstrom: f64,
) -> Result<ExchangeReport> {
    let dir = axis
        .normalized()
        .ok_or_else(|| Error::InvalidSweep("zero scan axis".into()))?;
    let mut states = Vec::with_capacity(inputs.len());
    let (mut num, mut den) = (0.0, 0.0);
    for inp in inputs {
        let j_dd = dipole_coupling(&inp.m1, &inp.m2, dir * r_angstrom)?;
        let jzz = j_dd[(2, 2)];
        num += (inp.j_obs_zz.abs() - jzz.abs()).abs();
        den += inp.j_obs_zz.abs();
        states.push(StateExchange {
            state: inp.state,
            j_dd,
            j_obs_zz: inp.j_obs_zz,
            fraction: exchange_fraction(inp.j_obs_zz, jzz),
        });
    }
    let min_fraction = states
        .iter()
        .map(|s| s.fraction)
        .fold(f64::INFINITY, f64::min);
    let max_fraction = states
        .iter()
        .map(|s| s.fraction)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExchangeReport {
        r_angstrom,
        exceeds_one: states.iter().any(|s| s.fraction > 1.0),
        states,
        min_fraction,
        max_fraction,
        aggregate_fraction: num / den,
    })
}

/// Exchange reports over a monotone grid of separations along `axis`.
pub fn min_exchange_scan(
    inputs: &[ExchangeInput],
    axis: Vector3,
    r_grid: &[f64],
) -> Result<ExchangeScan> {
    if inputs.is_empty() || r_grid.is_empty() {
        return Err(Error::InvalidSweep("empty exchange scan".into()));
    }
    let increasing = r_grid.windows(2).all(|w| w[1] > w[0]);
    let decreasing = r_grid.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidSweep(
            "separation grid is not monotone".into(),
        ));
    }
    let reports = parallel::install(|| {
        r_grid
            .par_iter()
            .map(|&r| exchange_report(inputs, axis, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let best = reports
        .iter()
        .min_by(|a, b| a.max_fraction.total_cmp(&b.max_fraction))
        .expect("non-empty grid");
    Ok(ExchangeScan {
        best_r_angstrom: best.r_angstrom,
        best_max_fraction: best.max_fraction,
        reports,
    })
}

/// Shift of ion 2's optical line when ion 1 is excited, for the ↑↑ spin
/// configuration of an Ising pair: `(J⁰⁰ + J¹¹ − J¹⁰ − J⁰¹)/4`.
pub fn blockade_shift(j00: f64, j10: f64, j01: f64, j11: f64) -> f64 {
    (j00 + j11 - j10 - j01) / 4.0
}

/// Dipole-only coupling scales with the product of the two g values. Returns
/// false when the measured change of |J_zz| between two states contradicts
/// the change of that product.
pub fn dipole_only_plausible(j_a: f64, j_b: f64, g_product_a: f64, g_product_b: f64) -> bool {
    let dj = j_b.abs() - j_a.abs();
    let dg = g_product_b.abs() - g_product_a.abs();
    dj == 0.0 || dg == 0.0 || dj.signum() == dg.signum()
}
