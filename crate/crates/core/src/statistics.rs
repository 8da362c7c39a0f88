//! Finite-size fluctuation bounds on expected observables.
//!
//! Each observable x with expected count n_eff·x is widened to
//! x·(1 ± γ/√(n_eff·x)).  Lower bounds are clamped at 0 and upper bounds
//! capped at 1.

use crate::error::{Error, Result};

/// Standard deviations giving a failure probability of 5.73×10⁻⁷.
pub const DEFAULT_GAMMA: f64 = 5.0;

/// Default number of pulses sent by Alice.
pub const DEFAULT_N_PULSES: f64 = 1e11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationConfig {
    n_pulses: f64,
    gamma: f64,
}

impl FluctuationConfig {
    pub fn new(n_pulses: f64, gamma: f64) -> Result<Self> {
        if !(n_pulses >= 1.0 && n_pulses.is_finite()) {
            return Err(Error::arg("n_pulses", format!("{n_pulses} must be >= 1")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::arg("gamma", format!("{gamma} must be >= 0")));
        }
        Ok(Self { n_pulses, gamma })
    }

    /// γ = 0: every bound collapses to its central value.
    pub fn asymptotic(n_pulses: f64) -> Result<Self> {
        Self::new(n_pulses, 0.0)
    }

    pub fn n_pulses(&self) -> f64 {
        self.n_pulses
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        Self {
            n_pulses: DEFAULT_N_PULSES,
            gamma: DEFAULT_GAMMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedValue {
    pub central: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Expected number of pulses in a sub-population selected with probability
/// `selection_prob`.
pub fn effective_count(config: &FluctuationConfig, selection_prob: f64) -> Result<f64> {
    if selection_prob == 0.0 {
        return Err(Error::DegenerateSelection(selection_prob));
    }
    if !(selection_prob > 0.0 && selection_prob <= 1.0) {
        return Err(Error::arg(
            "selection_prob",
            format!("{selection_prob} not in (0, 1]"),
        ));
    }
    Ok(config.n_pulses * selection_prob)
}

/// γ/√(n_eff·x), the relative half-width of the confidence interval.
fn relative_width(x: f64, n_eff: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::arg("observable", format!("{x} not in [0, 1]")));
    }
    if !(n_eff > 0.0) {
        return Err(Error::arg("n_eff", format!("{n_eff} must be > 0")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Err(Error::ZeroObservation);
    }
    Ok(gamma / (n_eff * x).sqrt())
}

pub fn gain_upper(q: f64, n_eff: f64, gamma: f64) -> Result<f64> {
    let w = relative_width(q, n_eff, gamma)?;
    Ok((q * (1.0 + w)).min(1.0))
}

pub fn gain_lower(q: f64, n_eff: f64, gamma: f64) -> Result<f64> {
    let w = relative_width(q, n_eff, gamma)?;
    Ok((q * (1.0 - w)).max(0.0))
}

/// Upper bound on an error-gain product EQ; same form as [`gain_upper`].
pub fn error_gain_upper(eq: f64, n_eff: f64, gamma: f64) -> Result<f64> {
    gain_upper(eq, n_eff, gamma)
}

pub fn bounded(x: f64, n_eff: f64, gamma: f64) -> Result<BoundedValue> {
    Ok(BoundedValue {
        central: x,
        lower: gain_lower(x, n_eff, gamma)?,
        upper: gain_upper(x, n_eff, gamma)?,
    })
}

/// Bounds on the vacuum gain, sampled on N·(1 − P_μ − P_ν) pulses.
pub fn vacuum_bounds(q0: f64, config: &FluctuationConfig, p_vacuum: f64) -> Result<BoundedValue> {
    if !(p_vacuum > 0.0) {
        return Err(Error::NoVacuumPulses(p_vacuum));
    }
    let n_eff = effective_count(config, p_vacuum)?;
    bounded(q0, n_eff, config.gamma)
}
