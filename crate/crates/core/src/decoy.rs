//! Three-intensity (μ, ν, vacuum) analytic decoy-state estimation.
//!
//! Every basis pair gets its own single-photon yield lower bound from its own
//! fluctuation-bounded gains, and that yield is used to bound the pair's
//! single-photon error rate.  Only the ZZ yield enters the key rate.

use std::collections::{BTreeMap, BTreeSet};

use crate::channel::{BasisPair, Intensity, ObservedStatistics};
use crate::error::{Error, Result};
use crate::protocol::ProtocolParams;
use crate::statistics::{
    effective_count, error_gain_upper, gain_lower, gain_upper, vacuum_bounds, FluctuationConfig,
};

/// Largest meaningful single-photon error rate.
pub const MAX_ERROR_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SinglePhotonBounds {
    /// Y₁ lower bound for the key-generating pair.
    pub y1_zz_lower: f64,
    /// Y₁ lower bound of every estimated pair.
    pub y1_lower: BTreeMap<BasisPair, f64>,
    /// e₁ upper bound of every estimated pair, in [0, 0.5].
    pub e1_upper: BTreeMap<BasisPair, f64>,
    /// Pairs whose observed decoy error rate exceeded 1/2, so Bob's outcomes
    /// were relabeled before bounding.  For these pairs `e1_upper` bounds
    /// 1 − e₁.
    pub relabeled: BTreeSet<BasisPair>,
}

impl SinglePhotonBounds {
    pub fn e1(&self, pair: BasisPair) -> Option<f64> {
        self.e1_upper.get(&pair).copied()
    }
}

/// Y₁ lower bound
///
/// `μ/(μν − ν²)·[Q_ν^L e^ν − Q_μ^U e^μ ν²/μ² − (μ² − ν²)/μ²·Q₀^U]`,
/// clamped to [0, 1].  A non-positive raw value is returned as 0.
pub fn y1_lower(mu: f64, nu: f64, q_mu_upper: f64, q_nu_lower: f64, q0_upper: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::arg("nu", format!("{nu} must be > 0")));
    }
    if !(mu > nu) {
        return Err(Error::IntensityOrdering { mu, nu });
    }
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let raw = mu / (mu * nu - nu2)
        * (q_nu_lower * nu.exp()
            - q_mu_upper * mu.exp() * nu2 / mu2
            - (mu2 - nu2) / mu2 * q0_upper);
    Ok(raw.clamp(0.0, 1.0))
}

/// e₁ upper bound `(EQ_ν^U e^ν − Q₀^L/2) / (ν·Y₁^L)`, clamped to [0, 0.5].
pub fn e1_upper(nu: f64, eq_nu_upper: f64, q0_lower: f64, y1_lower: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::arg("nu", format!("{nu} must be > 0")));
    }
    if !(y1_lower > 0.0) {
        return Err(Error::UndefinedErrorRate);
    }
    let raw = (eq_nu_upper * nu.exp() - 0.5 * q0_lower) / (nu * y1_lower);
    Ok(raw.clamp(0.0, MAX_ERROR_RATE))
}

/// Bounds for all five basis pairs.
pub fn estimate_all(
    stats: &ObservedStatistics,
    protocol: &ProtocolParams,
    config: &FluctuationConfig,
) -> Result<SinglePhotonBounds> {
    estimate_pairs(stats, protocol, config, &BasisPair::ALL)
}

/// Bounds for the listed pairs only (BB84 never samples the Y basis).
///
/// A pair whose yield bound is zero carries no single-photon signal and gets
/// the uninformative error bound 1/2.
pub fn estimate_pairs(
    stats: &ObservedStatistics,
    protocol: &ProtocolParams,
    config: &FluctuationConfig,
    pairs: &[BasisPair],
) -> Result<SinglePhotonBounds> {
    let gamma = config.gamma();
    let vacuum = vacuum_bounds(stats.q0, config, protocol.p_vacuum())?;
    let mut out = SinglePhotonBounds::default();

    for &pair in pairs {
        let selection = |which: Intensity| {
            protocol.intensity_prob(which)
                * protocol.alice_basis_prob(which, pair.alice())
                * protocol.bob_basis_prob(pair.bob())
        };
        let n_mu = effective_count(config, selection(Intensity::Signal))?;
        let n_nu = effective_count(config, selection(Intensity::Decoy))?;

        let q_mu = stats.gain(Intensity::Signal, pair);
        let q_nu = stats.gain(Intensity::Decoy, pair);
        let y1 = y1_lower(
            protocol.mu,
            protocol.nu,
            gain_upper(q_mu, n_mu, gamma)?,
            gain_lower(q_nu, n_nu, gamma)?,
            vacuum.upper,
        )?;

        let mut eq_nu = stats.error_gain(Intensity::Decoy, pair);
        if stats.error_rate(Intensity::Decoy, pair) > 0.5 {
            eq_nu = q_nu - eq_nu;
            out.relabeled.insert(pair);
        }
        let e1 = if y1 > 0.0 {
            e1_upper(
                protocol.nu,
                error_gain_upper(eq_nu, n_nu, gamma)?,
                vacuum.lower,
                y1,
            )?
        } else {
            MAX_ERROR_RATE
        };

        out.y1_lower.insert(pair, y1);
        out.e1_upper.insert(pair, e1);
    }
    out.y1_zz_lower = out.y1_lower.get(&BasisPair::ZZ).copied().unwrap_or(0.0);
    Ok(out)
}
