//! Reference-frame-independent security quantities and key rates.
//!
//! The rotation-invariant correlation sum C bounds Eve's information I_E on
//! the Z-basis key.  Three privacy-amplification variants are offered:
//!
//! * [`SecurityMode::RfiEveInformation`] (default) removes I_E.
//! * [`SecurityMode::RfiLiteral`] removes H(e₁ᶻᶻ), ignoring C.  Kept for
//!   auditing against the printed key-rate expression.
//! * [`SecurityMode::Bb84`] removes H(e₁ˣˣ), the usual GLLP phase-error term.

use std::fmt;
use std::str::FromStr;

use crate::channel::{BasisPair, Intensity, ObservedStatistics};
use crate::decoy::SinglePhotonBounds;
use crate::error::{Error, Result};
use crate::protocol::ProtocolParams;

/// Reconciliation efficiency of the reference simulations.
pub const DEFAULT_RECONCILIATION_EFFICIENCY: f64 = 1.16;

const CONSISTENCY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SecurityMode {
    #[default]
    RfiEveInformation,
    RfiLiteral,
    Bb84,
}

impl SecurityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SecurityMode::RfiEveInformation => "rfi-ie",
            SecurityMode::RfiLiteral => "rfi-literal",
            SecurityMode::Bb84 => "bb84",
        }
    }
}

impl fmt::Display for SecurityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SecurityMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rfi-ie" => Ok(SecurityMode::RfiEveInformation),
            "rfi-literal" => Ok(SecurityMode::RfiLiteral),
            "bb84" => Ok(SecurityMode::Bb84),
            other => Err(format!(
                "unknown security mode `{other}` (expected rfi-ie, rfi-literal or bb84)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityConfig {
    f: f64,
    pub mode: SecurityMode,
}

impl SecurityConfig {
    pub fn new(f: f64, mode: SecurityMode) -> Result<Self> {
        if !(f >= 1.0 && f.is_finite()) {
            return Err(Error::arg("f", format!("{f} must be >= 1")));
        }
        Ok(Self { f, mode })
    }

    pub fn with_mode(self, mode: SecurityMode) -> Self {
        Self { mode, ..self }
    }

    /// Reconciliation efficiency.
    pub fn f(&self) -> f64 {
        self.f
    }
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            f: DEFAULT_RECONCILIATION_EFFICIENCY,
            mode: SecurityMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveInformation {
    pub phi: f64,
    pub varphi: f64,
    pub i_e: f64,
}

/// Everything that went into a key rate, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub mode: SecurityMode,
    /// Secret bits per pulse, never negative.
    pub rate: f64,
    /// Rate before clamping at zero.
    pub raw_rate: f64,
    pub no_key: bool,
    /// P_μ·P_{Z_A|μ}·P_{Z_B}.
    pub sifting_factor: f64,
    /// Correlation sum; `None` in BB84 mode.
    pub c_value: Option<f64>,
    pub phi: Option<f64>,
    pub varphi: Option<f64>,
    /// Eve's information per single-photon bit.  In BB84 mode this is
    /// H(e₁ˣˣ).
    pub i_e: f64,
    /// The bracketed privacy factor actually applied.
    pub privacy_term: f64,
    pub y1_zz_lower: f64,
    pub e1_zz_upper: f64,
    pub q_mu_zz: f64,
    pub e_mu_zz: f64,
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::EntropyDomain(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Σ (1 − 2e₁)² over XX, XY, YX, YY.
pub fn compute_c(bounds: &SinglePhotonBounds) -> Result<f64> {
    let mut c = 0.0;
    for pair in BasisPair::ROTATED {
        let e = bounds.e1(pair).ok_or(Error::IncompleteBounds(pair))?;
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::arg(
                "e1_upper",
                format!("{e} for {pair} not in [0, 1]"),
            ));
        }
        c += (1.0 - 2.0 * e).powi(2);
    }
    Ok(c)
}

pub fn eve_information(e1_zz: f64, c_value: f64) -> Result<EveInformation> {
    if !(0.0..=0.5).contains(&e1_zz) {
        return Err(Error::arg("e1_zz", format!("{e1_zz} not in [0, 0.5]")));
    }
    if !(0.0..=4.0).contains(&c_value) {
        return Err(Error::arg("c_value", format!("{c_value} not in [0, 4]")));
    }
    let half_c = c_value / 2.0;
    let keep = 1.0 - e1_zz;
    let phi = (half_c.sqrt() / keep).min(1.0);
    let varphi = if phi < 1.0 || e1_zz == 0.0 {
        // the residual C/2 − (1 − e)²φ² vanishes identically below the cap
        0.0
    } else {
        let residual = half_c - keep * keep * phi * phi;
        if residual < -CONSISTENCY_TOL {
            return Err(Error::Inconsistent(format!(
                "negative residual {residual} in phase-error correlation"
            )));
        }
        (residual.max(0.0).sqrt() / e1_zz).min(1.0)
    };
    let i_e =
        keep * binary_entropy((1.0 + phi) / 2.0)? + e1_zz * binary_entropy((1.0 + varphi) / 2.0)?;
    Ok(EveInformation { phi, varphi, i_e })
}

struct KeyTerms {
    sifting: f64,
    q_mu: f64,
    e_mu: f64,
    ec_cost: f64,
    single_photon: f64,
    y1: f64,
    e1_zz: f64,
}

fn key_terms(
    protocol: &ProtocolParams,
    stats: &ObservedStatistics,
    bounds: &SinglePhotonBounds,
    sec: &SecurityConfig,
) -> Result<KeyTerms> {
    let q_mu = stats.gain(Intensity::Signal, BasisPair::ZZ);
    let e_mu = stats.error_rate(Intensity::Signal, BasisPair::ZZ);
    let e1_zz = bounds
        .e1(BasisPair::ZZ)
        .ok_or(Error::IncompleteBounds(BasisPair::ZZ))?;
    let mu = protocol.mu;
    Ok(KeyTerms {
        sifting: protocol.sifting_factor(),
        q_mu,
        e_mu,
        ec_cost: sec.f * q_mu * binary_entropy(e_mu)?,
        single_photon: mu * (-mu).exp() * bounds.y1_zz_lower,
        y1: bounds.y1_zz_lower,
        e1_zz,
    })
}

fn finish(
    terms: KeyTerms,
    mode: SecurityMode,
    privacy_term: f64,
    i_e: f64,
    c_value: Option<f64>,
    eve: Option<EveInformation>,
) -> KeyRateReport {
    let raw_rate = terms.sifting * (terms.single_photon * privacy_term - terms.ec_cost);
    KeyRateReport {
        mode,
        rate: raw_rate.max(0.0),
        raw_rate,
        no_key: !(raw_rate > 0.0),
        sifting_factor: terms.sifting,
        c_value,
        phi: eve.map(|e| e.phi),
        varphi: eve.map(|e| e.varphi),
        i_e,
        privacy_term,
        y1_zz_lower: terms.y1,
        e1_zz_upper: terms.e1_zz,
        q_mu_zz: terms.q_mu,
        e_mu_zz: terms.e_mu,
    }
}

/// Key rate of the three-basis protocol in either RFI mode.
pub fn rfi_key_rate(
    protocol: &ProtocolParams,
    stats: &ObservedStatistics,
    bounds: &SinglePhotonBounds,
    sec: &SecurityConfig,
) -> Result<KeyRateReport> {
    if sec.mode == SecurityMode::Bb84 {
        return Err(Error::arg(
            "mode",
            "rfi_key_rate needs an RFI security mode",
        ));
    }
    let terms = key_terms(protocol, stats, bounds, sec)?;
    let c_value = compute_c(bounds)?;
    let eve = eve_information(terms.e1_zz, c_value)?;
    let privacy_term = match sec.mode {
        SecurityMode::RfiLiteral => 1.0 - binary_entropy(terms.e1_zz)?,
        _ => 1.0 - eve.i_e,
    };
    Ok(finish(
        terms,
        sec.mode,
        privacy_term,
        eve.i_e,
        Some(c_value),
        Some(eve),
    ))
}

/// GLLP key rate of biased BB84 with the phase error taken from XX.
pub fn bb84_key_rate(
    protocol: &ProtocolParams,
    stats: &ObservedStatistics,
    bounds: &SinglePhotonBounds,
    sec: &SecurityConfig,
) -> Result<KeyRateReport> {
    let terms = key_terms(protocol, stats, bounds, sec)?;
    let e1_xx = bounds
        .e1(BasisPair::XX)
        .ok_or(Error::IncompleteBounds(BasisPair::XX))?;
    let phase = binary_entropy(e1_xx)?;
    Ok(finish(
        terms,
        SecurityMode::Bb84,
        1.0 - phase,
        phase,
        None,
        None,
    ))
}

/// Dispatches on `sec.mode`.
pub fn key_rate(
    protocol: &ProtocolParams,
    stats: &ObservedStatistics,
    bounds: &SinglePhotonBounds,
    sec: &SecurityConfig,
) -> Result<KeyRateReport> {
    match sec.mode {
        SecurityMode::Bb84 => bb84_key_rate(protocol, stats, bounds, sec),
        _ => rfi_key_rate(protocol, stats, bounds, sec),
    }
}
