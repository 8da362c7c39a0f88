//! The ten protocol decision variables and their feasibility rules.

use crate::channel::{Basis, Intensity};

/// Minimum slack demanded of every strict inequality in [`is_feasible`].
pub const FEASIBILITY_MARGIN: f64 = 1e-6;

/// Tolerance for the "Y basis absent" equality in BB84 parameter sets.
const BB84_SUM_TOL: f64 = 1e-9;

/// Which basis structure the protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolFamily {
    /// Three preparation and three measurement bases (Z, X, Y).
    Rfi,
    /// Z and X only; every Y probability is zero.
    Bb84,
}

/// Intensities and basis probabilities chosen by Alice and Bob.
///
/// The Y-basis probabilities and the vacuum probability are implicit
/// remainders of the stored values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub p_za_mu: f64,
    pub p_xa_mu: f64,
    pub p_za_nu: f64,
    pub p_xa_nu: f64,
    pub p_zb: f64,
    pub p_xb: f64,
}

impl ProtocolParams {
    pub const LEN: usize = 10;

    /// Column names in [`ProtocolParams::to_array`] order.
    pub const NAMES: [&'static str; Self::LEN] = [
        "mu", "nu", "p_mu", "p_nu", "p_za_mu", "p_xa_mu", "p_za_nu", "p_xa_nu", "p_zb", "p_xb",
    ];

    /// All intensity and basis probabilities at 1/3 with ν = 0.1.
    pub fn unbiased_baseline(mu: f64) -> Self {
        let third = 1.0 / 3.0;
        Self {
            mu,
            nu: 0.1,
            p_mu: third,
            p_nu: third,
            p_za_mu: third,
            p_xa_mu: third,
            p_za_nu: third,
            p_xa_nu: third,
            p_zb: third,
            p_xb: third,
        }
    }

    /// BB84 counterpart of the unbiased baseline: Z and X at 1/2 each.
    pub fn bb84_baseline(mu: f64) -> Self {
        let third = 1.0 / 3.0;
        Self {
            mu,
            nu: 0.1,
            p_mu: third,
            p_nu: third,
            p_za_mu: 0.5,
            p_xa_mu: 0.5,
            p_za_nu: 0.5,
            p_xa_nu: 0.5,
            p_zb: 0.5,
            p_xb: 0.5,
        }
    }

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.mu,
            self.nu,
            self.p_mu,
            self.p_nu,
            self.p_za_mu,
            self.p_xa_mu,
            self.p_za_nu,
            self.p_xa_nu,
            self.p_zb,
            self.p_xb,
        ]
    }

    pub fn from_array(v: [f64; Self::LEN]) -> Self {
        Self {
            mu: v[0],
            nu: v[1],
            p_mu: v[2],
            p_nu: v[3],
            p_za_mu: v[4],
            p_xa_mu: v[5],
            p_za_nu: v[6],
            p_xa_nu: v[7],
            p_zb: v[8],
            p_xb: v[9],
        }
    }

    pub fn p_vacuum(&self) -> f64 {
        1.0 - self.p_mu - self.p_nu
    }

    pub fn intensity(&self, which: Intensity) -> f64 {
        match which {
            Intensity::Signal => self.mu,
            Intensity::Decoy => self.nu,
        }
    }

    pub fn intensity_prob(&self, which: Intensity) -> f64 {
        match which {
            Intensity::Signal => self.p_mu,
            Intensity::Decoy => self.p_nu,
        }
    }

    /// Alice's conditional probability of preparing `basis` given the intensity.
    pub fn alice_basis_prob(&self, which: Intensity, basis: Basis) -> f64 {
        let (z, x) = match which {
            Intensity::Signal => (self.p_za_mu, self.p_xa_mu),
            Intensity::Decoy => (self.p_za_nu, self.p_xa_nu),
        };
        match basis {
            Basis::Z => z,
            Basis::X => x,
            Basis::Y => (1.0 - z - x).max(0.0),
        }
    }

    pub fn bob_basis_prob(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.p_zb,
            Basis::X => self.p_xb,
            Basis::Y => (1.0 - self.p_zb - self.p_xb).max(0.0),
        }
    }

    /// Probability that a pulse is a signal pulse sent and measured in Z.
    pub fn sifting_factor(&self) -> f64 {
        self.p_mu * self.p_za_mu * self.p_zb
    }

    fn basis_triples(&self) -> [(f64, f64); 3] {
        [
            (self.p_za_mu, self.p_xa_mu),
            (self.p_za_nu, self.p_xa_nu),
            (self.p_zb, self.p_xb),
        ]
    }
}

/// Feasibility for the three-basis protocol.
pub fn is_feasible(params: &ProtocolParams) -> bool {
    is_feasible_for(params, ProtocolFamily::Rfi)
}

/// Feasibility with every strict inequality holding by at least
/// [`FEASIBILITY_MARGIN`].
pub fn is_feasible_for(params: &ProtocolParams, family: ProtocolFamily) -> bool {
    let m = FEASIBILITY_MARGIN;
    if !params.to_array().iter().all(|v| v.is_finite()) {
        return false;
    }
    let intensities_ok = params.nu >= m && params.mu - params.nu >= m && params.mu <= 1.0;
    let weights_ok = params.p_mu >= m && params.p_nu >= m && params.p_vacuum() >= m;
    if !(intensities_ok && weights_ok) {
        return false;
    }
    params.basis_triples().iter().all(|&(z, x)| match family {
        ProtocolFamily::Rfi => z >= m && x >= m && 1.0 - z - x >= m,
        ProtocolFamily::Bb84 => z >= m && x >= m && (1.0 - z - x).abs() <= BB84_SUM_TOL,
    })
}
