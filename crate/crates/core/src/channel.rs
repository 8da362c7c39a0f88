//! Threshold-detector channel model with Poisson sources.
//!
//! Produces the expected gains and error-gains a real link would measure for
//! a given intensity, basis pair, fiber length and frame rotation β.  The
//! model is deterministic: there is no sampling anywhere in this module.

use std::fmt;

use crate::error::{Error, Result};
use crate::protocol::ProtocolParams;

/// Detector and fiber values used throughout the reference simulations.
pub mod table1 {
    pub const ETA: f64 = 0.145;
    pub const Y0: f64 = 3.0e-6;
    pub const ED: f64 = 0.015;
    pub const ALPHA_DB_PER_KM: f64 = 0.2;
}

/// Error probability of a dark-count click (uncorrelated with the bit value).
pub const DARK_COUNT_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    Z,
    X,
    Y,
}

/// Alice's preparation basis followed by Bob's measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisPair {
    ZZ,
    XX,
    XY,
    YX,
    YY,
}

impl BasisPair {
    pub const ALL: [BasisPair; 5] = [
        BasisPair::ZZ,
        BasisPair::XX,
        BasisPair::XY,
        BasisPair::YX,
        BasisPair::YY,
    ];

    /// The four pairs that enter the rotation-invariant correlation sum.
    pub const ROTATED: [BasisPair; 4] =
        [BasisPair::XX, BasisPair::XY, BasisPair::YX, BasisPair::YY];

    pub fn alice(self) -> Basis {
        match self {
            BasisPair::ZZ => Basis::Z,
            BasisPair::XX | BasisPair::XY => Basis::X,
            BasisPair::YX | BasisPair::YY => Basis::Y,
        }
    }

    pub fn bob(self) -> Basis {
        match self {
            BasisPair::ZZ => Basis::Z,
            BasisPair::XX | BasisPair::YX => Basis::X,
            BasisPair::XY | BasisPair::YY => Basis::Y,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BasisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BasisPair::ZZ => "ZZ",
            BasisPair::XX => "XX",
            BasisPair::XY => "XY",
            BasisPair::YX => "YX",
            BasisPair::YY => "YY",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intensity {
    Signal,
    Decoy,
}

impl Intensity {
    pub const ALL: [Intensity; 2] = [Intensity::Signal, Intensity::Decoy];

    fn index(self) -> usize {
        self as usize
    }
}

/// How the frame rotation β degrades each basis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RotationModel {
    /// Z is shared exactly; X and Y rotate about it by β.
    #[default]
    FrameIndependent,
    /// An aligned-frame BB84 link that suffers the same drift: Z and X are
    /// both degraded by cos β.
    Bb84,
}

impl RotationModel {
    /// Correlation ⟨A·B⟩ of a single photon with perfect detectors.
    pub fn kappa(self, pair: BasisPair, beta_rad: f64) -> f64 {
        match (self, pair) {
            (RotationModel::FrameIndependent, BasisPair::ZZ) => 1.0,
            (RotationModel::Bb84, BasisPair::ZZ) => beta_rad.cos(),
            (_, BasisPair::XX | BasisPair::YY) => beta_rad.cos(),
            (_, BasisPair::XY) => beta_rad.sin(),
            (_, BasisPair::YX) => -beta_rad.sin(),
        }
    }
}

/// Physical scenario: detectors, fiber and frame rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    eta: f64,
    y0: f64,
    ed: f64,
    alpha: f64,
    beta_deg: f64,
}

impl ChannelParams {
    pub fn new(eta: f64, y0: f64, ed: f64, alpha: f64, beta_deg: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::arg("eta", format!("{eta} not in (0, 1]")));
        }
        if !(0.0..1.0).contains(&y0) {
            return Err(Error::arg("y0", format!("{y0} not in [0, 1)")));
        }
        if !(0.0..0.5).contains(&ed) {
            return Err(Error::arg("ed", format!("{ed} not in [0, 0.5)")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::arg("alpha", format!("{alpha} must be >= 0")));
        }
        if !beta_deg.is_finite() {
            return Err(Error::arg("beta", "must be finite"));
        }
        Ok(Self {
            eta,
            y0,
            ed,
            alpha,
            beta_deg,
        })
    }

    /// Reference detector/fiber values at rotation `beta_deg`.
    pub fn table1(beta_deg: f64) -> Result<Self> {
        Self::new(
            table1::ETA,
            table1::Y0,
            table1::ED,
            table1::ALPHA_DB_PER_KM,
            beta_deg,
        )
    }

    pub fn with_beta(self, beta_deg: f64) -> Result<Self> {
        Self::new(self.eta, self.y0, self.ed, self.alpha, beta_deg)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn ed(&self) -> f64 {
        self.ed
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// β as supplied, in degrees.
    pub fn beta_deg(&self) -> f64 {
        self.beta_deg
    }

    /// β folded into [0°, 90°].  Folding preserves |cos β| and |sin β|, and
    /// a sign flip of a correlation is equivalent to relabeling outcomes.
    pub fn beta_normalized_deg(&self) -> f64 {
        let b = self.beta_deg.rem_euclid(180.0);
        if b > 90.0 {
            180.0 - b
        } else {
            b
        }
    }

    pub fn beta_rad(&self) -> f64 {
        self.beta_normalized_deg().to_radians()
    }
}

fn check_distance(distance_km: f64) -> Result<()> {
    if distance_km >= 0.0 && distance_km.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(
            "distance",
            format!("{distance_km} km must be >= 0"),
        ))
    }
}

fn check_intensity(intensity: f64) -> Result<()> {
    if intensity >= 0.0 && intensity.is_finite() {
        Ok(())
    } else {
        Err(Error::arg("intensity", format!("{intensity} must be >= 0")))
    }
}

/// Overall transmittance η·10^(−αL/10), detector included.
pub fn transmittance(params: &ChannelParams, distance_km: f64) -> Result<f64> {
    check_distance(distance_km)?;
    Ok(params.eta * 10f64.powf(-params.alpha * distance_km / 10.0))
}

/// Detection probability given exactly `n` photons: 1 − (1 − Y₀)(1 − t)ⁿ.
pub fn n_photon_yield(params: &ChannelParams, t: f64, n: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&t));
    let miss = (1.0 - t).powi(n as i32);
    params.y0 + (1.0 - params.y0) * (1.0 - miss)
}

/// Single-photon bit-error probability for `pair` under frame rotation.
pub fn single_photon_error(params: &ChannelParams, pair: BasisPair) -> f64 {
    single_photon_error_with(params, pair, RotationModel::FrameIndependent)
}

pub fn single_photon_error_with(
    params: &ChannelParams,
    pair: BasisPair,
    model: RotationModel,
) -> f64 {
    let kappa = model.kappa(pair, params.beta_rad());
    (1.0 - (1.0 - 2.0 * params.ed) * kappa) / 2.0
}

/// Poisson-averaged gain 1 − (1 − Y₀)·e^(−t·intensity).
pub fn observed_gain(params: &ChannelParams, intensity: f64, distance_km: f64) -> Result<f64> {
    check_intensity(intensity)?;
    let t = transmittance(params, distance_km)?;
    Ok(gain_at(params, t, intensity))
}

/// Expected error-gain Y₀/2 + e₁(pair)·(1 − e^(−t·intensity)).
pub fn observed_error_gain(
    params: &ChannelParams,
    intensity: f64,
    pair: BasisPair,
    distance_km: f64,
) -> Result<f64> {
    observed_error_gain_with(
        params,
        intensity,
        pair,
        distance_km,
        RotationModel::FrameIndependent,
    )
}

pub fn observed_error_gain_with(
    params: &ChannelParams,
    intensity: f64,
    pair: BasisPair,
    distance_km: f64,
    model: RotationModel,
) -> Result<f64> {
    check_intensity(intensity)?;
    let t = transmittance(params, distance_km)?;
    Ok(error_gain_at(params, t, intensity, pair, model))
}

fn gain_at(params: &ChannelParams, t: f64, intensity: f64) -> f64 {
    // y0 + (1 - y0)(1 - e^{-t x}), written to keep precision for tiny t x
    let signal = -(-t * intensity).exp_m1();
    params.y0 + (1.0 - params.y0) * signal
}

fn error_gain_at(
    params: &ChannelParams,
    t: f64,
    intensity: f64,
    pair: BasisPair,
    model: RotationModel,
) -> f64 {
    let signal = -(-t * intensity).exp_m1();
    let e1 = single_photon_error_with(params, pair, model);
    // The additive form overshoots the gain only when y0 > ed and most pulses click.
    (DARK_COUNT_ERROR * params.y0 + e1 * signal).min(gain_at(params, t, intensity))
}

/// Expected gains and error-gains for both non-vacuum intensities and every
/// basis pair, plus the basis-free vacuum gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedStatistics {
    q: [[f64; 5]; 2],
    eq: [[f64; 5]; 2],
    pub q0: f64,
}

impl ObservedStatistics {
    pub fn gain(&self, intensity: Intensity, pair: BasisPair) -> f64 {
        self.q[intensity.index()][pair.index()]
    }

    pub fn error_gain(&self, intensity: Intensity, pair: BasisPair) -> f64 {
        self.eq[intensity.index()][pair.index()]
    }

    /// Observed quantum-bit error rate EQ/Q.
    pub fn error_rate(&self, intensity: Intensity, pair: BasisPair) -> f64 {
        let q = self.gain(intensity, pair);
        if q > 0.0 {
            self.error_gain(intensity, pair) / q
        } else {
            0.0
        }
    }
}

/// Fills every observable of the three-basis protocol.
pub fn simulate_observations(
    params: &ChannelParams,
    protocol: &ProtocolParams,
    distance_km: f64,
) -> Result<ObservedStatistics> {
    simulate_observations_with(
        params,
        protocol,
        distance_km,
        RotationModel::FrameIndependent,
    )
}

pub fn simulate_observations_with(
    params: &ChannelParams,
    protocol: &ProtocolParams,
    distance_km: f64,
    model: RotationModel,
) -> Result<ObservedStatistics> {
    let t = transmittance(params, distance_km)?;
    let mut q = [[0.0; 5]; 2];
    let mut eq = [[0.0; 5]; 2];
    for which in Intensity::ALL {
        let x = protocol.intensity(which);
        check_intensity(x)?;
        for pair in BasisPair::ALL {
            q[which.index()][pair.index()] = gain_at(params, t, x);
            eq[which.index()][pair.index()] = error_gain_at(params, t, x, pair, model);
        }
    }
    Ok(ObservedStatistics {
        q,
        eq,
        q0: params.y0,
    })
}
