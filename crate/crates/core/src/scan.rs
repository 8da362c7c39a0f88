//! Batch scans over distance, frame rotation and pulse count, with a
//! `key = value` configuration format and CSV output.
//!
//! Every scan is built from independent curves, one per (mode, β, N).  A
//! curve walks the distance grid in order, seeding each optimization with
//! the previous point's optimum, and stops after three consecutive zero-rate
//! points.  Curves run in parallel; rows are always emitted in grid order.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::optimizer::{
    optimize_with_starts, unbiased_baseline, OptimizedPoint, OptimizerConfig, Scenario,
};
use crate::protocol::ProtocolParams;
use crate::security::{KeyRateReport, SecurityConfig, SecurityMode};
use crate::statistics::{FluctuationConfig, DEFAULT_GAMMA, DEFAULT_N_PULSES};

/// Consecutive zero-rate points after which a curve stops.
pub const ZERO_RUN_CUTOFF: usize = 3;

pub const CSV_HEADER: &str = "mode,beta_deg,distance_km,n_pulses,rate,mu,nu,p_mu,p_nu,\
p_za_mu,p_xa_mu,p_za_nu,p_xa_nu,p_zb,p_xb,c_value,y1_zz_lower,e1_zz_upper,i_e,no_key_flag";

const CONFIG_KEYS: [&str; 12] = [
    "mode",
    "beta_list",
    "distance_start",
    "distance_stop",
    "distance_step",
    "n_pulses_list",
    "gamma",
    "n_total",
    "security_mode",
    "n_starts",
    "seed",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanMode {
    RfiBiased,
    RfiUnbiased,
    Bb84Biased,
}

impl ScanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanMode::RfiBiased => "rfi-biased",
            ScanMode::RfiUnbiased => "rfi-unbiased",
            ScanMode::Bb84Biased => "bb84-biased",
        }
    }
}

impl std::fmt::Display for ScanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScanMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "rfi-biased" => Ok(ScanMode::RfiBiased),
            "rfi-unbiased" => Ok(ScanMode::RfiUnbiased),
            "bb84-biased" => Ok(ScanMode::Bb84Biased),
            other => Err(format!(
                "unknown mode `{other}` (expected rfi-biased, rfi-unbiased or bb84-biased)"
            )),
        }
    }
}

/// Inclusive arithmetic grid of distances in km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl DistanceGrid {
    pub fn single(distance_km: f64) -> Self {
        Self {
            start: distance_km,
            stop: distance_km,
            step: 1.0,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl Default for DistanceGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 300.0,
            step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub mode: ScanMode,
    pub beta_list: Vec<f64>,
    pub distances: DistanceGrid,
    /// Pulse counts swept by [`run_pulse_scan`].
    pub n_pulses_list: Vec<f64>,
    pub gamma: f64,
    /// Pulse count of distance scans and comparisons.
    pub n_total: f64,
    pub security_mode: SecurityMode,
    pub optimizer: OptimizerConfig,
    pub out: Option<PathBuf>,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            mode: ScanMode::RfiBiased,
            beta_list: vec![0.0],
            distances: DistanceGrid::default(),
            n_pulses_list: vec![1e9, 1e10, 1e11, 1e12, 1e13],
            gamma: DEFAULT_GAMMA,
            n_total: DEFAULT_N_PULSES,
            security_mode: SecurityMode::RfiEveInformation,
            optimizer: OptimizerConfig::default(),
            out: None,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beta_list.is_empty() {
            return Err(Error::validation("beta_list", "must not be empty"));
        }
        if self.beta_list.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("beta_list", "every angle must be finite"));
        }
        let g = &self.distances;
        if !(g.start >= 0.0 && g.start.is_finite()) {
            return Err(Error::validation("distance_start", "must be >= 0"));
        }
        if !(g.stop >= g.start && g.stop.is_finite()) {
            return Err(Error::validation(
                "distance_stop",
                "must be >= distance_start",
            ));
        }
        if !(g.step > 0.0 && g.step.is_finite()) {
            return Err(Error::validation("distance_step", "must be > 0"));
        }
        if self.n_pulses_list.is_empty() {
            return Err(Error::validation("n_pulses_list", "must not be empty"));
        }
        if self
            .n_pulses_list
            .iter()
            .any(|n| !(*n >= 1.0 && n.is_finite()))
        {
            return Err(Error::validation(
                "n_pulses_list",
                "every entry must be >= 1",
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::validation("gamma", "must be >= 0"));
        }
        if !(self.n_total >= 1.0 && self.n_total.is_finite()) {
            return Err(Error::validation("n_total", "must be >= 1"));
        }
        if self.optimizer.n_starts == 0 {
            return Err(Error::validation("n_starts", "must be >= 1"));
        }
        let rfi_mode = matches!(self.mode, ScanMode::RfiBiased | ScanMode::RfiUnbiased);
        if rfi_mode && self.security_mode == SecurityMode::Bb84 {
            return Err(Error::validation(
                "security_mode",
                "bb84 security needs mode = bb84-biased",
            ));
        }
        Ok(())
    }

    /// Security mode actually applied to `mode`.
    fn security_for(&self, mode: ScanMode) -> SecurityMode {
        match (mode, self.security_mode) {
            (ScanMode::Bb84Biased, _) => SecurityMode::Bb84,
            (_, SecurityMode::Bb84) => SecurityMode::RfiEveInformation,
            (_, m) => m,
        }
    }

    pub fn scenario(
        &self,
        mode: ScanMode,
        beta_deg: f64,
        distance_km: f64,
        n_pulses: f64,
    ) -> Result<Scenario> {
        Scenario::new(
            ChannelParams::table1(beta_deg)?,
            distance_km,
            FluctuationConfig::new(n_pulses, self.gamma)?,
            SecurityConfig::default().with_mode(self.security_for(mode)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub mode: ScanMode,
    pub beta_deg: f64,
    pub distance_km: f64,
    pub n_pulses: f64,
    pub rate: f64,
    pub params: ProtocolParams,
    pub c_value: Option<f64>,
    pub y1_zz_lower: f64,
    pub e1_zz_upper: f64,
    pub i_e: f64,
    pub no_key: bool,
}

impl ScanRow {
    fn new(
        mode: ScanMode,
        beta_deg: f64,
        distance_km: f64,
        n_pulses: f64,
        point: &OptimizedPoint,
    ) -> Self {
        let r = &point.report;
        Self {
            mode,
            beta_deg,
            distance_km,
            n_pulses,
            rate: r.rate,
            params: point.params,
            c_value: r.c_value,
            y1_zz_lower: r.y1_zz_lower,
            e1_zz_upper: r.e1_zz_upper,
            i_e: r.i_e,
            no_key: r.no_key,
        }
    }
}

/// A curve that stopped before the end of its distance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub mode: ScanMode,
    pub beta_deg: f64,
    pub n_pulses: f64,
    /// Last distance evaluated.
    pub last_distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanOutput {
    pub rows: Vec<ScanRow>,
    pub truncated: Vec<Truncation>,
}

/// One optimized (or baseline) point.
pub fn solve_point(
    spec: &ScanSpec,
    mode: ScanMode,
    beta_deg: f64,
    distance_km: f64,
    n_pulses: f64,
    warm_starts: &[ProtocolParams],
) -> Result<OptimizedPoint> {
    let scenario = spec.scenario(mode, beta_deg, distance_km, n_pulses)?;
    match mode {
        ScanMode::RfiUnbiased => {
            let (params, report) = unbiased_baseline(&scenario)?;
            Ok(OptimizedPoint {
                params,
                report,
                start_index: 0,
                evaluations: 0,
            })
        }
        _ => optimize_with_starts(&scenario, &spec.optimizer, warm_starts),
    }
}

#[derive(Debug, Clone, Copy)]
struct Curve {
    mode: ScanMode,
    beta_deg: f64,
    n_pulses: f64,
}

fn run_curve(
    spec: &ScanSpec,
    curve: Curve,
    distances: &[f64],
) -> Result<(Vec<ScanRow>, Option<Truncation>)> {
    let mut rows = Vec::with_capacity(distances.len());
    let mut zero_run = 0;
    let mut previous: Option<ProtocolParams> = None;
    for (i, &d) in distances.iter().enumerate() {
        let warm: Vec<ProtocolParams> = previous.into_iter().collect();
        let point = solve_point(spec, curve.mode, curve.beta_deg, d, curve.n_pulses, &warm)?;
        if point.report.rate > 0.0 {
            zero_run = 0;
            previous = Some(point.params);
        } else {
            zero_run += 1;
        }
        rows.push(ScanRow::new(
            curve.mode,
            curve.beta_deg,
            d,
            curve.n_pulses,
            &point,
        ));
        if zero_run >= ZERO_RUN_CUTOFF && i + 1 < distances.len() {
            let t = Truncation {
                mode: curve.mode,
                beta_deg: curve.beta_deg,
                n_pulses: curve.n_pulses,
                last_distance_km: d,
            };
            return Ok((rows, Some(t)));
        }
    }
    Ok((rows, None))
}

fn run_curves(
    spec: &ScanSpec,
    curves: &[Curve],
    distances: &[f64],
) -> Result<Vec<(Vec<ScanRow>, Option<Truncation>)>> {
    spec.validate()?;
    if distances.is_empty() {
        return Err(Error::validation("distance", "grid is empty"));
    }
    curves
        .par_iter()
        .map(|&c| run_curve(spec, c, distances))
        .collect()
}

fn concat(results: Vec<(Vec<ScanRow>, Option<Truncation>)>) -> ScanOutput {
    let mut out = ScanOutput::default();
    for (rows, t) in results {
        out.rows.extend(rows);
        out.truncated.extend(t);
    }
    out
}

/// One curve per β in `spec.mode`, at N = `n_total`.
pub fn run_distance_scan(spec: &ScanSpec) -> Result<ScanOutput> {
    let curves: Vec<Curve> = spec
        .beta_list
        .iter()
        .map(|&beta_deg| Curve {
            mode: spec.mode,
            beta_deg,
            n_pulses: spec.n_total,
        })
        .collect();
    Ok(concat(run_curves(spec, &curves, &spec.distances.points())?))
}

/// One point per (β, N) at the fixed distance `distances.start`.
pub fn run_pulse_scan(spec: &ScanSpec) -> Result<ScanOutput> {
    let curves: Vec<Curve> = spec
        .beta_list
        .iter()
        .flat_map(|&beta_deg| {
            spec.n_pulses_list.iter().map(move |&n_pulses| Curve {
                mode: spec.mode,
                beta_deg,
                n_pulses,
            })
        })
        .collect();
    Ok(concat(run_curves(spec, &curves, &[spec.distances.start])?))
}

/// Biased RFI and biased BB84 over the same β and distance grids, rows
/// interleaved per distance.
pub fn run_comparison(spec: &ScanSpec) -> Result<ScanOutput> {
    let mut curves = Vec::with_capacity(2 * spec.beta_list.len());
    for &beta_deg in &spec.beta_list {
        for mode in [ScanMode::RfiBiased, ScanMode::Bb84Biased] {
            curves.push(Curve {
                mode,
                beta_deg,
                n_pulses: spec.n_total,
            });
        }
    }
    let results = run_curves(spec, &curves, &spec.distances.points())?;
    let mut out = ScanOutput::default();
    let mut it = results.into_iter();
    while let (Some((rfi, t_rfi)), Some((bb84, t_bb84))) = (it.next(), it.next()) {
        let mut rfi = rfi.into_iter();
        let mut bb84 = bb84.into_iter();
        loop {
            let (a, b) = (rfi.next(), bb84.next());
            if a.is_none() && b.is_none() {
                break;
            }
            out.rows.extend(a);
            out.rows.extend(b);
        }
        out.truncated.extend(t_rfi);
        out.truncated.extend(t_bb84);
    }
    Ok(out)
}

fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the header and one line per row.
pub fn write_csv<W: Write>(rows: &[ScanRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        let mut line = String::new();
        line.push_str(row.mode.as_str());
        for v in [row.beta_deg, row.distance_km, row.n_pulses, row.rate] {
            let _ = write!(line, ",{}", full(v));
        }
        for v in row.params.to_array() {
            let _ = write!(line, ",{}", full(v));
        }
        let _ = write!(line, ",{}", row.c_value.map(full).unwrap_or_default());
        for v in [row.y1_zz_lower, row.e1_zz_upper, row.i_e] {
            let _ = write!(line, ",{}", full(v));
        }
        let _ = write!(line, ",{}", u8::from(row.no_key));
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn emit_csv(rows: &[ScanRow], path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_csv(rows, BufWriter::new(file)).map_err(io_err)
}

/// Reads a `key = value` configuration file.
pub fn parse_config(path: &Path) -> Result<ScanSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

/// Parses configuration text; `origin` only labels error messages.
///
/// Blank lines and lines starting with `#` are ignored.  Lists are comma
/// separated.  Keys not present keep their [`ScanSpec::default`] value.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ScanSpec> {
    let mut spec = ScanSpec::default();
    let mut seen: Vec<&str> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            reason,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&key) = CONFIG_KEYS.iter().find(|k| **k == key) else {
            return Err(parse_err(format!("unknown key `{key}`")));
        };
        if seen.contains(&key) {
            return Err(parse_err(format!("duplicate key `{key}`")));
        }
        seen.push(key);

        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| parse_err(format!("`{key}`: `{v}` is not a number")))
        };
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(number)
                .collect()
        };
        match key {
            "mode" => spec.mode = value.parse().map_err(parse_err)?,
            "beta_list" => spec.beta_list = list(value)?,
            "distance_start" => spec.distances.start = number(value)?,
            "distance_stop" => spec.distances.stop = number(value)?,
            "distance_step" => spec.distances.step = number(value)?,
            "n_pulses_list" => spec.n_pulses_list = list(value)?,
            "gamma" => spec.gamma = number(value)?,
            "n_total" => spec.n_total = number(value)?,
            "security_mode" => spec.security_mode = value.parse().map_err(parse_err)?,
            "n_starts" => {
                spec.optimizer.n_starts = value
                    .parse()
                    .map_err(|_| parse_err(format!("`n_starts`: `{value}` is not a count")))?
            }
            "seed" => {
                spec.optimizer.seed = value
                    .parse()
                    .map_err(|_| parse_err(format!("`seed`: `{value}` is not a u64")))?
            }
            "out" => spec.out = Some(PathBuf::from(value)),
            _ => unreachable!("key list and match arms disagree"),
        }
    }
    if !seen.contains(&"distance_stop") && seen.contains(&"distance_start") {
        spec.distances.stop = spec.distances.stop.max(spec.distances.start);
    }
    spec.validate()?;
    Ok(spec)
}

/// Human-readable dump of one operating point.
pub fn render_report(params: &ProtocolParams, report: &KeyRateReport) -> String {
    let mut s = String::new();
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
    let _ = writeln!(s, "security_mode   {}", report.mode);
    let _ = writeln!(s, "rate            {:.6e}", report.rate);
    let _ = writeln!(s, "raw_rate        {:.6e}", report.raw_rate);
    let _ = writeln!(s, "no_key          {}", report.no_key);
    let _ = writeln!(s, "sifting_factor  {:.6e}", report.sifting_factor);
    let _ = writeln!(s, "c_value         {}", opt(report.c_value));
    let _ = writeln!(s, "phi             {}", opt(report.phi));
    let _ = writeln!(s, "varphi          {}", opt(report.varphi));
    let _ = writeln!(s, "i_e             {:.6e}", report.i_e);
    let _ = writeln!(s, "privacy_term    {:.6e}", report.privacy_term);
    let _ = writeln!(s, "y1_zz_lower     {:.6e}", report.y1_zz_lower);
    let _ = writeln!(s, "e1_zz_upper     {:.6e}", report.e1_zz_upper);
    let _ = writeln!(s, "q_mu_zz         {:.6e}", report.q_mu_zz);
    let _ = writeln!(s, "e_mu_zz         {:.6e}", report.e_mu_zz);
    for (name, v) in ProtocolParams::NAMES.iter().zip(params.to_array()) {
        let _ = writeln!(s, "{name:<16}{v:.6}");
    }
    s
}
