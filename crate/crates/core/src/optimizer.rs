//! Full-parameter optimization of the protocol variables.
//!
//! Multi-start projected coordinate search.  Each start runs sweeps over a
//! fixed list of search directions: one per free variable, plus one per
//! probability simplex that trades two probabilities against each other
//! (moving along a simplex edge that single-variable moves cannot follow).
//! Each direction keeps its own step, doubled on success and halved on
//! failure, and every trial point is clipped to the feasible polytope by a
//! ratio test against the linear constraints.
//!
//! Starts are independent and run in parallel; the best one is chosen by
//! start index order, so the result equals the sequential execution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{simulate_observations_with, BasisPair, ChannelParams, RotationModel};
use crate::decoy::estimate_pairs;
use crate::error::{Error, Result};
use crate::protocol::{is_feasible_for, ProtocolFamily, ProtocolParams, FEASIBILITY_MARGIN};
use crate::security::{key_rate, KeyRateReport, SecurityConfig, SecurityMode};
use crate::statistics::FluctuationConfig;

const N: usize = ProtocolParams::LEN;
const MU: usize = 0;
const NU: usize = 1;
const P_MU: usize = 2;
const P_NU: usize = 3;
const P_ZA_MU: usize = 4;
const P_XA_MU: usize = 5;
const P_ZA_NU: usize = 6;
const P_XA_NU: usize = 7;
const P_ZB: usize = 8;
const P_XB: usize = 9;

/// Minimum gap μ − ν inside the search box.
pub const INTENSITY_GAP: f64 = 1e-4;

const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 0.5;
// A start has converged once every step is this small and the sweep gained < tol.
const SETTLED_STEP: f64 = 1e-6;
const START_ATTEMPTS: usize = 1000;
const BASELINE_GRID: usize = 48;

/// Everything that fixes the objective besides the protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub channel: ChannelParams,
    pub distance_km: f64,
    pub fluctuation: FluctuationConfig,
    pub security: SecurityConfig,
}

impl Scenario {
    pub fn new(
        channel: ChannelParams,
        distance_km: f64,
        fluctuation: FluctuationConfig,
        security: SecurityConfig,
    ) -> Result<Self> {
        if !(distance_km >= 0.0 && distance_km.is_finite()) {
            return Err(Error::arg(
                "distance",
                format!("{distance_km} km must be >= 0"),
            ));
        }
        Ok(Self {
            channel,
            distance_km,
            fluctuation,
            security,
        })
    }

    /// Reference detector values, N = 10¹¹, γ = 5, f = 1.16.
    pub fn table1(beta_deg: f64, distance_km: f64, mode: SecurityMode) -> Result<Self> {
        Self::new(
            ChannelParams::table1(beta_deg)?,
            distance_km,
            FluctuationConfig::default(),
            SecurityConfig::default().with_mode(mode),
        )
    }

    pub fn with_distance(self, distance_km: f64) -> Result<Self> {
        Self::new(self.channel, distance_km, self.fluctuation, self.security)
    }

    pub fn family(&self) -> ProtocolFamily {
        match self.security.mode {
            SecurityMode::Bb84 => ProtocolFamily::Bb84,
            _ => ProtocolFamily::Rfi,
        }
    }

    fn rotation_model(&self) -> RotationModel {
        match self.family() {
            ProtocolFamily::Bb84 => RotationModel::Bb84,
            ProtocolFamily::Rfi => RotationModel::FrameIndependent,
        }
    }

    fn pairs(&self) -> &'static [BasisPair] {
        match self.family() {
            ProtocolFamily::Bb84 => &[BasisPair::ZZ, BasisPair::XX],
            ProtocolFamily::Rfi => &BasisPair::ALL,
        }
    }

    /// Equal-weight starting point of this scenario's protocol family.
    pub fn baseline_params(&self, mu: f64) -> ProtocolParams {
        match self.family() {
            ProtocolFamily::Bb84 => ProtocolParams::bb84_baseline(mu),
            ProtocolFamily::Rfi => ProtocolParams::unbiased_baseline(mu),
        }
    }
}

/// Full pipeline: simulate, bound, estimate, key rate.
pub fn evaluate(params: &ProtocolParams, scenario: &Scenario) -> Result<KeyRateReport> {
    if !is_feasible_for(params, scenario.family()) {
        return Err(Error::Infeasible);
    }
    let stats = simulate_observations_with(
        &scenario.channel,
        params,
        scenario.distance_km,
        scenario.rotation_model(),
    )?;
    let bounds = estimate_pairs(&stats, params, &scenario.fluctuation, scenario.pairs())?;
    key_rate(params, &stats, &bounds, &scenario.security)
}

/// Secret key rate per pulse.
pub fn objective(params: &ProtocolParams, scenario: &Scenario) -> Result<f64> {
    evaluate(params, scenario).map(|r| r.rate)
}

/// Per-variable search box in [`ProtocolParams::to_array`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub lower: [f64; N],
    pub upper: [f64; N],
}

impl Default for ParamBox {
    fn default() -> Self {
        let p_lo = 1e-4;
        let p_hi = 1.0 - 1e-4;
        let mut lower = [p_lo; N];
        let mut upper = [p_hi; N];
        lower[MU] = 1e-4 + INTENSITY_GAP;
        upper[MU] = 1.0;
        lower[NU] = 1e-4;
        upper[NU] = 0.5;
        Self { lower, upper }
    }
}

impl ParamBox {
    pub fn contains(&self, params: &ProtocolParams) -> bool {
        params
            .to_array()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    /// Maximum number of sweeps over all search directions, per start.
    pub max_iters: usize,
    /// Relative objective improvement per sweep below which a start stops.
    pub tol: f64,
    pub seed: u64,
    pub bounds: ParamBox,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
            bounds: ParamBox::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::arg("n_starts", "must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::arg("tol", "must be >= 0"));
        }
        if self
            .bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .any(|(lo, hi)| !(lo <= hi))
        {
            return Err(Error::arg(
                "bounds",
                "every lower bound must be <= its upper bound",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedPoint {
    pub params: ProtocolParams,
    pub report: KeyRateReport,
    /// Index of the start that produced the result.
    pub start_index: usize,
    pub evaluations: usize,
}

/// A linear constraint `coeffs·x <= rhs`.
#[derive(Debug, Clone, Copy)]
struct Constraint {
    coeffs: [f64; N],
    rhs: f64,
}

impl Constraint {
    fn sparse(terms: &[(usize, f64)], rhs: f64) -> Self {
        let mut coeffs = [0.0; N];
        for &(i, c) in terms {
            coeffs[i] = c;
        }
        Self { coeffs, rhs }
    }

    fn dot(&self, v: &[f64; N]) -> f64 {
        self.coeffs.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

struct Polytope {
    constraints: Vec<Constraint>,
    directions: Vec<[f64; N]>,
    initial_steps: Vec<f64>,
}

fn unit(terms: &[(usize, f64)]) -> [f64; N] {
    let mut d = [0.0; N];
    for &(i, c) in terms {
        d[i] = c;
    }
    d
}

impl Polytope {
    fn new(bounds: &ParamBox, family: ProtocolFamily) -> Self {
        // slightly inside the feasibility margin so rounding never lands outside
        let m = FEASIBILITY_MARGIN * (1.0 + 1e-6);
        let mut constraints = Vec::new();
        for i in 0..N {
            constraints.push(Constraint::sparse(&[(i, 1.0)], bounds.upper[i]));
            constraints.push(Constraint::sparse(&[(i, -1.0)], -bounds.lower[i]));
        }
        constraints.push(Constraint::sparse(&[(NU, 1.0), (MU, -1.0)], -INTENSITY_GAP));
        constraints.push(Constraint::sparse(&[(P_MU, 1.0), (P_NU, 1.0)], 1.0 - m));

        let simplex_pairs = [(P_ZA_MU, P_XA_MU), (P_ZA_NU, P_XA_NU), (P_ZB, P_XB)];
        let mut directions = vec![unit(&[(MU, 1.0)]), unit(&[(NU, 1.0)])];
        let mut initial_steps = vec![0.1, 0.02];
        directions.push(unit(&[(P_MU, 1.0)]));
        directions.push(unit(&[(P_NU, 1.0)]));
        directions.push(unit(&[(P_MU, 1.0), (P_NU, -1.0)]));
        initial_steps.extend([0.05, 0.05, 0.05]);
        match family {
            ProtocolFamily::Rfi => {
                for (z, x) in simplex_pairs {
                    constraints.push(Constraint::sparse(&[(z, 1.0), (x, 1.0)], 1.0 - m));
                    directions.push(unit(&[(z, 1.0)]));
                    directions.push(unit(&[(x, 1.0)]));
                    directions.push(unit(&[(z, 1.0), (x, -1.0)]));
                    initial_steps.extend([0.05, 0.05, 0.05]);
                }
            }
            ProtocolFamily::Bb84 => {
                // z + x = 1 is preserved by construction
                for (z, x) in simplex_pairs {
                    directions.push(unit(&[(z, 1.0), (x, -1.0)]));
                    initial_steps.push(0.05);
                }
            }
        }
        Self {
            constraints,
            directions,
            initial_steps,
        }
    }

    /// Largest t >= 0 with x + t·d inside every constraint.
    fn max_step(&self, x: &[f64; N], d: &[f64; N]) -> f64 {
        let mut t = f64::INFINITY;
        for c in &self.constraints {
            let rate = c.dot(d);
            if rate > 0.0 {
                let slack = (c.rhs - c.dot(x)).max(0.0);
                t = t.min(slack / rate);
            }
        }
        t
    }
}

fn moved(x: &[f64; N], d: &[f64; N], t: f64) -> [f64; N] {
    let mut y = *x;
    for i in 0..N {
        if d[i] != 0.0 {
            y[i] += t * d[i];
        }
    }
    y
}

struct Search<'a> {
    scenario: &'a Scenario,
    family: ProtocolFamily,
    evaluations: usize,
}

impl Search<'_> {
    /// Unclamped rate; infeasible or failing points score −∞.  Searching on
    /// the raw value keeps a slope inside the no-key region.
    fn score(&mut self, x: &[f64; N]) -> f64 {
        self.evaluations += 1;
        let params = ProtocolParams::from_array(*x);
        if !is_feasible_for(&params, self.family) {
            return f64::NEG_INFINITY;
        }
        match evaluate(&params, self.scenario) {
            Ok(r) => r.raw_rate,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

fn relative_gain(new: f64, old: f64) -> f64 {
    if old == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (new - old) / old.abs().max(f64::MIN_POSITIVE)
}

fn local_search(
    search: &mut Search<'_>,
    poly: &Polytope,
    start: [f64; N],
    config: &OptimizerConfig,
) -> ([f64; N], f64) {
    let mut x = start;
    let mut fx = search.score(&x);
    let mut steps = poly.initial_steps.clone();

    for _ in 0..config.max_iters {
        let sweep_start = fx;
        for (k, d) in poly.directions.iter().enumerate() {
            let neg: [f64; N] = d.map(|v| -v);
            let mut improved = false;
            for dir in [d, &neg] {
                let t_max = poly.max_step(&x, dir);
                let mut t = steps[k].min(t_max);
                if t <= 0.0 {
                    continue;
                }
                let mut y = moved(&x, dir, t);
                let mut fy = search.score(&y);
                if fy > fx {
                    // keep going while it pays
                    loop {
                        let t_next = (2.0 * t).min(t_max);
                        if t_next <= t {
                            break;
                        }
                        let z = moved(&x, dir, t_next);
                        let fz = search.score(&z);
                        if fz > fy {
                            t = t_next;
                            y = z;
                            fy = fz;
                        } else {
                            break;
                        }
                    }
                    x = y;
                    fx = fy;
                    steps[k] = (2.0 * t).clamp(MIN_STEP, MAX_STEP);
                    improved = true;
                    break;
                }
            }
            if !improved {
                steps[k] = (steps[k] * 0.5).max(MIN_STEP);
            }
        }
        let settled = steps.iter().all(|&s| s <= SETTLED_STEP);
        if settled && relative_gain(fx, sweep_start) < config.tol {
            break;
        }
    }
    (x, fx)
}

fn draw_simplex(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a: f64 = rng.gen();
    let b: f64 = rng.gen();
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo, hi - lo)
}

fn random_start(
    rng: &mut ChaCha8Rng,
    bounds: &ParamBox,
    family: ProtocolFamily,
) -> Option<[f64; N]> {
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    for _ in 0..START_ATTEMPTS {
        let mut x = [0.0; N];
        x[NU] = uniform(rng, bounds.lower[NU], bounds.upper[NU]);
        x[MU] = uniform(
            rng,
            bounds.lower[MU].max(x[NU] + INTENSITY_GAP),
            bounds.upper[MU],
        );
        (x[P_MU], x[P_NU]) = draw_simplex(rng);
        for (z, xi) in [(P_ZA_MU, P_XA_MU), (P_ZA_NU, P_XA_NU), (P_ZB, P_XB)] {
            match family {
                ProtocolFamily::Rfi => (x[z], x[xi]) = draw_simplex(rng),
                ProtocolFamily::Bb84 => {
                    x[z] = uniform(rng, bounds.lower[z], bounds.upper[z]);
                    x[xi] = 1.0 - x[z];
                }
            }
        }
        let params = ProtocolParams::from_array(x);
        if bounds.contains(&params) && is_feasible_for(&params, family) {
            return Some(x);
        }
    }
    None
}

/// The deterministic start sequence: start 0 is the baseline, then any
/// caller-supplied points, then random draws.  Random start `k` depends only
/// on (seed, k), so shorter sequences are prefixes of longer ones.
fn start_point(
    index: usize,
    injected: &[ProtocolParams],
    config: &OptimizerConfig,
    family: ProtocolFamily,
) -> Option<[f64; N]> {
    if let Some(p) = injected.get(index) {
        return Some(p.to_array());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    random_start(&mut rng, &config.bounds, family)
}

/// Maximizes the key rate over all protocol variables.
pub fn optimize(scenario: &Scenario, config: &OptimizerConfig) -> Result<OptimizedPoint> {
    optimize_with_starts(scenario, config, &[])
}

/// As [`optimize`], with extra starting points (for example the optimum of a
/// neighboring scan point) placed right after the baseline.
pub fn optimize_with_starts(
    scenario: &Scenario,
    config: &OptimizerConfig,
    extra_starts: &[ProtocolParams],
) -> Result<OptimizedPoint> {
    config.validate()?;
    let family = scenario.family();
    let baseline = baseline_optimum(scenario)?;

    let mut injected = Vec::with_capacity(1 + extra_starts.len());
    injected.push(baseline.params);
    injected.extend(
        extra_starts
            .iter()
            .filter(|p| config.bounds.contains(p) && is_feasible_for(p, family))
            .copied(),
    );
    if !(config.bounds.contains(&baseline.params)) {
        injected.remove(0);
    }
    let n_starts = config.n_starts.max(injected.len());

    let poly = Polytope::new(&config.bounds, family);
    let outcomes: Vec<Option<([f64; N], f64, usize)>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let start = start_point(k, &injected, config, family)?;
            let mut search = Search {
                scenario,
                family,
                evaluations: 0,
            };
            let (x, fx) = local_search(&mut search, &poly, start, config);
            Some((x, fx, search.evaluations))
        })
        .collect();

    let mut best: Option<(usize, [f64; N], f64)> = None;
    let mut evaluations = baseline.evaluations;
    for (k, outcome) in outcomes.into_iter().enumerate() {
        let Some((x, fx, evals)) = outcome else {
            continue;
        };
        evaluations += evals;
        if best.as_ref().is_none_or(|b| fx > b.2) {
            best = Some((k, x, fx));
        }
    }
    let (start_index, x, _) = best.ok_or(Error::SearchFailure)?;
    let params = ProtocolParams::from_array(x);
    let report = evaluate(&params, scenario)?;

    if report.rate <= 0.0 {
        return Ok(OptimizedPoint {
            evaluations,
            ..baseline
        });
    }
    Ok(OptimizedPoint {
        params,
        report,
        start_index,
        evaluations,
    })
}

/// Golden-section maximization of `f` on [lo, hi].
fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    if fa >= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Baseline of the scenario's family with only μ optimized: a coarse grid
/// over (ν, 1] brackets the best μ, then golden-section search refines it.
fn baseline_optimum(scenario: &Scenario) -> Result<OptimizedPoint> {
    let nu = scenario.baseline_params(0.5).nu;
    let lo = nu + INTENSITY_GAP;
    let hi = 1.0;
    let mut evaluations = 0;
    let mut score = |mu: f64| {
        evaluations += 1;
        evaluate(&scenario.baseline_params(mu), scenario)
            .map(|r| r.raw_rate)
            .unwrap_or(f64::NEG_INFINITY)
    };

    let h = (hi - lo) / BASELINE_GRID as f64;
    let mut best = (lo, score(lo));
    for i in 1..=BASELINE_GRID {
        let mu = lo + h * i as f64;
        let s = score(mu);
        if s > best.1 {
            best = (mu, s);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(Error::SearchFailure);
    }
    let (refined, s) = golden_max(&mut score, (best.0 - h).max(lo), (best.0 + h).min(hi), 1e-7);
    let mu = if s > best.1 { refined } else { best.0 };

    let params = scenario.baseline_params(mu);
    let report = evaluate(&params, scenario)?;
    Ok(OptimizedPoint {
        params,
        report,
        start_index: 0,
        evaluations,
    })
}

/// The equal-weight configuration (ν = 0.1, every probability 1/3) with only
/// μ optimized.
pub fn unbiased_baseline(scenario: &Scenario) -> Result<(ProtocolParams, KeyRateReport)> {
    let p = baseline_optimum(scenario)?;
    Ok((p.params, p.report))
}
