//! Experiment harness: scenario configuration (flat `key=value` files),
//! seeded Monte Carlo orchestration of the full pipeline — geometry →
//! signatures → grouping → pilot allocation → training → detection →
//! metrics — and CSV emission plus the aggregations the standard
//! experiments (MSE vs SNR, SE vs SNR, SE CDF) are built from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;

use crate::channel::{generate_network, GeometryParams, RayParams};
use crate::error::{Error, Result};
use crate::grouping::{
    group_power_agnostic, group_power_aware, CellGrouping, GroupingInstance,
};
use crate::link_sim::{
    compute_metrics, detect_uplink, simulate_training, ChannelSet, TrainingSetup,
};
use crate::math::DftBasis;
use crate::pilot_graph::{
    build_interference_graph, identity_assign, max_tau_cut_assign, random_assign,
    PilotAssignment,
};
use crate::rng::stream;
use crate::signature::{extract_signatures_for, LinkId};
use crate::textio::fmt_f64;

/// User-scheduling scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Coverage-greedy grouping that ignores per-beam power.
    Agnostic,
    /// Captured-power-greedy grouping.
    Aware,
    /// Orthogonal-pilot baseline (no grouping; one pilot per user per cell).
    Conventional,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Agnostic => "agnostic",
            Scheme::Aware => "aware",
            Scheme::Conventional => "conventional",
        }
    }

    /// Stable substream index so adding or removing schemes from a run never
    /// shifts another scheme's random numbers.
    fn rng_id(self) -> u64 {
        match self {
            Scheme::Agnostic => 0,
            Scheme::Aware => 1,
            Scheme::Conventional => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(Scheme::Agnostic),
            "aware" => Ok(Scheme::Aware),
            "conventional" => Ok(Scheme::Conventional),
            other => Err(Error::InvalidParameter(format!(
                "unknown scheme '{other}' (expected agnostic, aware, or conventional)"
            ))),
        }
    }
}

/// Cross-cell pilot-allocation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationPolicy {
    /// Greedy max-τ-cut on the interference graph.
    MaxCut,
    /// Random feasible assignment (uniform pilot permutation per cell).
    Random,
    /// Slot order reused as pilot order in every cell.
    None,
}

impl AllocationPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AllocationPolicy::MaxCut => "maxcut",
            AllocationPolicy::Random => "random",
            AllocationPolicy::None => "none",
        }
    }
}

impl FromStr for AllocationPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxcut" => Ok(AllocationPolicy::MaxCut),
            "random" => Ok(AllocationPolicy::Random),
            "none" => Ok(AllocationPolicy::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown allocation policy '{other}' (expected maxcut, random, or none)"
            ))),
        }
    }
}

/// Which aggregate the run summary prints; the CSV is the same either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Mean estimation error per scheme and SNR.
    Mse,
    /// Mean network sum spectral efficiency per scheme and SNR.
    Se,
    /// 5%-outage network spectral efficiency per scheme and SNR.
    Cdf,
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(ExperimentKind::Mse),
            "se" => Ok(ExperimentKind::Se),
            "cdf" => Ok(ExperimentKind::Cdf),
            other => Err(Error::InvalidParameter(format!(
                "unknown experiment '{other}' (expected mse, se, or cdf)"
            ))),
        }
    }
}

/// A full experiment description.
///
/// Every field maps to one config key; see [`parse_config_text`] for the
/// file format, the key names, and the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Base-station antennas (and DFT beams), key `M`.
    pub m: usize,
    /// Users per cell, key `K`.
    pub k: usize,
    /// Number of cells, key `N_c`.
    pub n_cells: usize,
    /// Pilot sequences per cell (copilot groups per cell), key `tau`.
    pub tau: usize,
    /// Group-size caps per (cell, slot), key `U` (scalar or list).
    pub caps: Vec<Vec<usize>>,
    /// Signature power-fraction threshold, key `alpha`.
    pub alpha: f64,
    /// Half-width of the ray angular interval in degrees, key `delta_deg`.
    pub delta_deg: f64,
    /// Rays per channel draw, key `P_rays`.
    pub p_rays: usize,
    /// Coherence block length in symbols, key `T_s`.
    pub t_sym: usize,
    /// Hexagonal cell radius in km, key `cell_radius_km`.
    pub cell_radius_km: f64,
    /// Path-loss exponent, key `pathloss_exp`.
    pub pathloss_exp: f64,
    /// Distance at which the link gain is one, key `pathloss_ref_km`
    /// (defaults to the cell radius; fixes the absolute SNR scale).
    pub pathloss_ref_km: f64,
    /// Transmit SNR grid in dB, key `snr_db` (comma separated).
    pub snr_db: Vec<f64>,
    /// Monte Carlo trials, key `trials`.
    pub trials: usize,
    /// Base seed, key `seed`.
    pub seed: u64,
    /// Schemes to run, key `scheme` (comma separated; order fixes CSV order).
    pub schemes: Vec<Scheme>,
    /// Pilot-allocation policy, key `allocation`.
    pub allocation: AllocationPolicy,
    /// Channel draws per link for beam-power estimation, key
    /// `signature_draws`.
    pub signature_draws: usize,
    /// Worker threads for trial-level parallelism, key `threads`.
    pub threads: usize,
}

const REQUIRED_KEYS: [&str; 5] = ["M", "K", "N_c", "tau", "U"];
const KNOWN_KEYS: [&str; 19] = [
    "M",
    "K",
    "N_c",
    "tau",
    "U",
    "alpha",
    "delta_deg",
    "P_rays",
    "T_s",
    "cell_radius_km",
    "pathloss_exp",
    "pathloss_ref_km",
    "snr_db",
    "trials",
    "seed",
    "scheme",
    "allocation",
    "signature_draws",
    "threads",
];

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

struct RawConfig {
    entries: BTreeMap<&'static str, (usize, String)>,
}

impl RawConfig {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, kind: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|_| {
                config_err(line, format!("key '{key}' expects {kind}, got '{value}'"))
            }),
        }
    }
}

fn scan_config(text: &str) -> Result<RawConfig> {
    let mut entries: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(line_no, format!("expected key=value, got '{line}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KNOWN_KEYS.iter().find(|&&k| k == key) else {
            return Err(config_err(line_no, format!("unknown key '{key}'")));
        };
        if value.is_empty() {
            return Err(config_err(line_no, format!("key '{key}' has an empty value")));
        }
        if let Some((prev, _)) = entries.get(known) {
            return Err(config_err(
                line_no,
                format!("duplicate key '{key}' (first set on line {prev})"),
            ));
        }
        entries.insert(known, (line_no, value.to_string()));
    }
    Ok(RawConfig { entries })
}

fn parse_positive(raw: &mut RawConfig, key: &str, default: usize) -> Result<usize> {
    let Some((line, value)) = raw.take(key) else { return Ok(default) };
    let parsed: usize = value
        .parse()
        .map_err(|_| config_err(line, format!("key '{key}' expects a positive integer, got '{value}'")))?;
    if parsed == 0 {
        return Err(config_err(line, format!("key '{key}' must be positive")));
    }
    Ok(parsed)
}

fn parse_caps(raw: &mut RawConfig, n_cells: usize, tau: usize) -> Result<Vec<Vec<usize>>> {
    let (line, value) = raw.take("U").expect("checked as required");
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    let mut values = Vec::with_capacity(parts.len());
    for part in &parts {
        let v: usize = part.parse().map_err(|_| {
            config_err(line, format!("key 'U' expects positive integers, got '{part}'"))
        })?;
        if v == 0 {
            return Err(config_err(line, "key 'U' entries must be positive"));
        }
        values.push(v);
    }
    let caps = match values.len() {
        1 => vec![vec![values[0]; tau]; n_cells],
        n if n == tau => vec![values.clone(); n_cells],
        n if n == n_cells * tau => {
            (0..n_cells).map(|b| values[b * tau..(b + 1) * tau].to_vec()).collect()
        }
        n => {
            return Err(config_err(
                line,
                format!(
                    "key 'U' expects 1, tau = {tau}, or N_c*tau = {} entries, got {n}",
                    n_cells * tau
                ),
            ))
        }
    };
    Ok(caps)
}

fn parse_list<T: FromStr>(
    raw: &mut RawConfig,
    key: &str,
    kind: &str,
    default: Vec<T>,
) -> Result<(usize, Vec<T>)> {
    let Some((line, value)) = raw.take(key) else { return Ok((0, default)) };
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        let item = part
            .parse::<T>()
            .map_err(|_| config_err(line, format!("key '{key}' expects {kind}, got '{part}'")))?;
        out.push(item);
    }
    Ok((line, out))
}

/// Parse a configuration from text. Format: one `key=value` per line, `#`
/// starts a comment, blank lines ignored. Unknown and duplicate keys are
/// errors. Required keys: `M`, `K`, `N_c`, `tau`, `U`. Optional keys and
/// defaults: `alpha=0.05`, `delta_deg=4`, `P_rays=100`, `T_s=128`,
/// `cell_radius_km=0.5`, `pathloss_exp=3.5`,
/// `pathloss_ref_km=<cell_radius_km>`, `snr_db=0`, `trials=100`, `seed=1`,
/// `scheme=aware,agnostic,conventional`, `allocation=maxcut`,
/// `signature_draws=2000`, `threads=1`.
pub fn parse_config_text(text: &str) -> Result<ScenarioConfig> {
    let mut raw = scan_config(text)?;

    let missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|k| !raw.entries.contains_key(k))
        .collect();
    if !missing.is_empty() {
        return Err(config_err(0, format!("missing required key(s): {}", missing.join(", "))));
    }

    let m = parse_positive(&mut raw, "M", 0)?;
    let k = parse_positive(&mut raw, "K", 0)?;
    let n_cells = parse_positive(&mut raw, "N_c", 0)?;
    let tau = parse_positive(&mut raw, "tau", 0)?;
    let caps = parse_caps(&mut raw, n_cells, tau)?;

    let alpha = raw.parse::<f64>("alpha", "a real in (0, 1)")?.unwrap_or(0.05);
    let delta_deg = raw.parse::<f64>("delta_deg", "a positive angle in degrees")?.unwrap_or(4.0);
    let p_rays = parse_positive(&mut raw, "P_rays", 100)?;
    let t_sym = parse_positive(&mut raw, "T_s", 128)?;
    let cell_radius_km = raw.parse::<f64>("cell_radius_km", "a positive length")?.unwrap_or(0.5);
    let pathloss_exp = raw.parse::<f64>("pathloss_exp", "a positive exponent")?.unwrap_or(3.5);
    let pathloss_ref_km = raw
        .parse::<f64>("pathloss_ref_km", "a positive length")?
        .unwrap_or(cell_radius_km);
    let (snr_line, snr_db) = parse_list::<f64>(&mut raw, "snr_db", "real dB values", vec![0.0])?;
    let trials = parse_positive(&mut raw, "trials", 100)?;
    let seed = raw.parse::<u64>("seed", "an unsigned integer")?.unwrap_or(1);
    let (scheme_line, schemes) = parse_list::<Scheme>(
        &mut raw,
        "scheme",
        "scheme names",
        vec![Scheme::Aware, Scheme::Agnostic, Scheme::Conventional],
    )?;
    let allocation = raw
        .parse::<AllocationPolicy>("allocation", "maxcut, random, or none")?
        .unwrap_or(AllocationPolicy::MaxCut);
    let signature_draws = parse_positive(&mut raw, "signature_draws", 2000)?;
    let threads = parse_positive(&mut raw, "threads", 1)?;

    if snr_db.is_empty() {
        return Err(config_err(snr_line, "key 'snr_db' needs at least one value"));
    }
    if schemes.is_empty() {
        return Err(config_err(scheme_line, "key 'scheme' needs at least one value"));
    }
    for (i, s) in schemes.iter().enumerate() {
        if schemes[..i].contains(s) {
            return Err(config_err(scheme_line, format!("scheme '{s}' listed twice")));
        }
    }

    let config = ScenarioConfig {
        m,
        k,
        n_cells,
        tau,
        caps,
        alpha,
        delta_deg,
        p_rays,
        t_sym,
        cell_radius_km,
        pathloss_exp,
        pathloss_ref_km,
        snr_db,
        trials,
        seed,
        schemes,
        allocation,
        signature_draws,
        threads,
    };
    config.validate()?;
    Ok(config)
}

/// Parse a configuration file. See [`parse_config_text`] for the format.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_text(&text)
}

impl ScenarioConfig {
    /// Pilot overhead of the conventional baseline: enough orthogonal pilots
    /// for the largest per-cell schedule.
    pub fn conventional_budget(&self) -> usize {
        self.caps.iter().map(|row| row.iter().sum::<usize>()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.m),
            ("K", self.k),
            ("N_c", self.n_cells),
            ("tau", self.tau),
            ("P_rays", self.p_rays),
            ("T_s", self.t_sym),
            ("trials", self.trials),
            ("signature_draws", self.signature_draws),
            ("threads", self.threads),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(config_err(0, format!("key '{key}' must be positive")));
            }
        }
        if self.caps.len() != self.n_cells
            || self.caps.iter().any(|row| row.len() != self.tau)
            || self.caps.iter().flatten().any(|&u| u == 0)
        {
            return Err(config_err(0, "key 'U' must give a positive cap per (cell, slot)"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err(0, "key 'alpha' must lie strictly between 0 and 1"));
        }
        if !(self.delta_deg > 0.0 && self.delta_deg <= 90.0) {
            return Err(config_err(0, "key 'delta_deg' must lie in (0, 90]"));
        }
        if !(self.cell_radius_km > 0.0) {
            return Err(config_err(0, "key 'cell_radius_km' must be positive"));
        }
        if !(self.pathloss_ref_km > 0.0) {
            return Err(config_err(0, "key 'pathloss_ref_km' must be positive"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(config_err(0, "key 'snr_db' values must be finite"));
        }
        if self.tau > self.t_sym {
            return Err(config_err(
                0,
                format!("tau = {} exceeds the coherence block T_s = {}", self.tau, self.t_sym),
            ));
        }
        if self.schemes.contains(&Scheme::Conventional) {
            let budget = self.conventional_budget();
            if budget > self.t_sym {
                return Err(config_err(
                    0,
                    format!(
                        "conventional training needs {budget} pilots, more than T_s = {}",
                        self.t_sym
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// One CSV row: one scheduled user in one trial at one SNR under one scheme.
/// `user` is the network-wide index `cell * K + in-cell id`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub trial: usize,
    pub user: usize,
    pub mse: f64,
    pub sinr: f64,
    pub se: f64,
}

const CSV_HEADER: &str = "scheme,snr_db,trial,user,mse,sinr,se";

/// The experiment result: rows ordered by (scheme list position, SNR list
/// position, trial, scheduling order).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.scheme,
                r.snr_db,
                r.trial,
                r.user,
                fmt_f64(r.mse),
                fmt_f64(r.sinr),
                fmt_f64(r.se)
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != CSV_HEADER {
            return Err(Error::InvalidParameter(format!(
                "unexpected CSV header '{header}' (want '{CSV_HEADER}')"
            )));
        }
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::InvalidParameter(format!(
                    "CSV row {} has {} fields, want 7",
                    idx + 2,
                    fields.len()
                )));
            }
            let bad = |what: &str| {
                Error::InvalidParameter(format!("CSV row {}: bad {what}", idx + 2))
            };
            rows.push(MetricRow {
                scheme: fields[0].parse().map_err(|_| bad("scheme"))?,
                snr_db: fields[1].parse().map_err(|_| bad("snr_db"))?,
                trial: fields[2].parse().map_err(|_| bad("trial"))?,
                user: fields[3].parse().map_err(|_| bad("user"))?,
                mse: fields[4].parse().map_err(|_| bad("mse"))?,
                sinr: fields[5].parse().map_err(|_| bad("sinr"))?,
                se: fields[6].parse().map_err(|_| bad("se"))?,
            });
        }
        Ok(Self { rows })
    }

    fn select(&self, scheme: Scheme, snr_db: f64) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme && r.snr_db == snr_db)
    }

    /// Mean estimation error over every user row of (scheme, SNR).
    pub fn mean_mse(&self, scheme: Scheme, snr_db: f64) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for r in self.select(scheme, snr_db) {
            sum += r.mse;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Per-trial network sums of spectral efficiency, in trial order.
    pub fn network_se_by_trial(&self, scheme: Scheme, snr_db: f64) -> Vec<f64> {
        let mut per_trial: BTreeMap<usize, f64> = BTreeMap::new();
        for r in self.select(scheme, snr_db) {
            *per_trial.entry(r.trial).or_insert(0.0) += r.se;
        }
        per_trial.into_values().collect()
    }

    /// Mean over trials of the network sum spectral efficiency.
    pub fn mean_network_se(&self, scheme: Scheme, snr_db: f64) -> Option<f64> {
        let sums = self.network_se_by_trial(scheme, snr_db);
        (!sums.is_empty()).then(|| sums.iter().sum::<f64>() / sums.len() as f64)
    }

    /// Empirical lower quantile of the per-trial network spectral
    /// efficiency: the ⌊q·n⌋-th smallest of n per-trial sums.
    pub fn outage_network_se(&self, scheme: Scheme, snr_db: f64, q: f64) -> Option<f64> {
        let mut sums = self.network_se_by_trial(scheme, snr_db);
        if sums.is_empty() || !(0.0..=1.0).contains(&q) {
            return None;
        }
        sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((sums.len() as f64 * q).floor() as usize).min(sums.len() - 1);
        Some(sums[idx])
    }

    /// The (scheme, SNR) grid in row-encounter order.
    fn grid(&self) -> Vec<(Scheme, f64)> {
        let mut grid = Vec::new();
        for r in &self.rows {
            if !grid.iter().any(|&(s, v)| s == r.scheme && v == r.snr_db) {
                grid.push((r.scheme, r.snr_db));
            }
        }
        grid
    }
}

/// Write the table to a CSV file (header row always present).
pub fn write_csv(table: &MetricsTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table.to_csv())?;
    Ok(())
}

/// Human-readable aggregate of the chosen experiment, one line per
/// (scheme, SNR) cell.
pub fn summarize(table: &MetricsTable, kind: ExperimentKind) -> String {
    let (label, agg): (&str, Box<dyn Fn(Scheme, f64) -> Option<f64>>) = match kind {
        ExperimentKind::Mse => ("mean mse", Box::new(|s, v| table.mean_mse(s, v))),
        ExperimentKind::Se => {
            ("mean network se [bit/s/Hz]", Box::new(|s, v| table.mean_network_se(s, v)))
        }
        ExperimentKind::Cdf => (
            "5%-outage network se [bit/s/Hz]",
            Box::new(|s, v| table.outage_network_se(s, v, 0.05)),
        ),
    };
    let mut out = String::new();
    for (scheme, snr) in table.grid() {
        if let Some(value) = agg(scheme, snr) {
            out.push_str(&format!("{label}  scheme={scheme:<12} snr_db={snr:<6} {value:.6}\n"));
        }
    }
    out
}

/// Per-trial context shared by every scheme.
struct TrialPlan<'a> {
    config: &'a ScenarioConfig,
    basis: &'a DftBasis,
    ray: &'a RayParams,
    geo: &'a GeometryParams,
}

/// Grouping plus the pilot assignment it will train with.
struct ScheduledScheme {
    scheme: Scheme,
    setup: TrainingSetup,
    tau_used: usize,
}

fn scheduled_members(groupings: &[CellGrouping]) -> Vec<(usize, usize)> {
    let mut members = Vec::new();
    for grouping in groupings {
        for group in &grouping.groups {
            for &user in &group.members {
                members.push((group.cell, user));
            }
        }
    }
    members
}

fn conventional_schedule(groupings: &[CellGrouping], n_cells: usize) -> Vec<Vec<usize>> {
    let mut schedule = vec![Vec::new(); n_cells];
    for grouping in groupings {
        for group in &grouping.groups {
            schedule[group.cell].extend_from_slice(&group.members);
        }
    }
    schedule
}

fn run_trial(plan: &TrialPlan<'_>, trial: usize) -> Result<Vec<Vec<Vec<MetricRow>>>> {
    let cfg = plan.config;
    let t = trial as u64;
    let geometry = generate_network(plan.geo, &mut stream(cfg.seed, &[t, 0]))?;
    let sig_base = stream(cfg.seed, &[t, 1]).next_u64();

    let serving: Vec<LinkId> = (0..cfg.n_cells)
        .flat_map(|cell| (0..cfg.k).map(move |user| LinkId { cell, user, bs: cell }))
        .collect();
    let mut signatures = extract_signatures_for(
        &geometry,
        plan.basis,
        cfg.alpha,
        plan.ray,
        cfg.signature_draws,
        sig_base,
        &serving,
    )?;

    let mut instances = Vec::with_capacity(cfg.n_cells);
    for cell in 0..cfg.n_cells {
        let sigs: Vec<_> = (0..cfg.k)
            .map(|user| signatures.get(cell, user, cell).expect("serving link extracted").clone())
            .collect();
        let (inst, _skipped) = GroupingInstance::from_serving_signatures(cfg.m, &sigs)?;
        instances.push(inst);
    }

    let wants = |s: Scheme| cfg.schemes.contains(&s);
    let conv_source = if wants(Scheme::Aware) || !wants(Scheme::Agnostic) {
        Scheme::Aware
    } else {
        Scheme::Agnostic
    };
    let need_agnostic =
        wants(Scheme::Agnostic) || (wants(Scheme::Conventional) && conv_source == Scheme::Agnostic);
    let need_aware =
        wants(Scheme::Aware) || (wants(Scheme::Conventional) && conv_source == Scheme::Aware);

    let agnostic_groups =
        if need_agnostic { Some(group_power_agnostic(&instances, &cfg.caps)?) } else { None };
    let aware_groups =
        if need_aware { Some(group_power_aware(&instances, &cfg.caps)?) } else { None };
    let groups_of = |s: Scheme| -> &[CellGrouping] {
        match s {
            Scheme::Agnostic => agnostic_groups.as_deref().expect("grouping prepared"),
            Scheme::Aware => aware_groups.as_deref().expect("grouping prepared"),
            Scheme::Conventional => unreachable!("the baseline has no grouping"),
        }
    };

    let mut channel_users: BTreeSet<(usize, usize)> = BTreeSet::new();
    for groupings in [agnostic_groups.as_deref(), aware_groups.as_deref()].into_iter().flatten() {
        channel_users.extend(scheduled_members(groupings));
    }

    // The interference graph needs every grouped scheme's scheduled members
    // toward every cell; the rest of the cross signatures are never used.
    if cfg.allocation == AllocationPolicy::MaxCut && cfg.n_cells > 1 {
        let mut cross = Vec::new();
        let mut grouped_members: BTreeSet<(usize, usize)> = BTreeSet::new();
        for s in [Scheme::Agnostic, Scheme::Aware] {
            if wants(s) {
                grouped_members.extend(scheduled_members(groups_of(s)));
            }
        }
        for &(cell, user) in &grouped_members {
            for bs in 0..cfg.n_cells {
                if bs != cell {
                    cross.push(LinkId { cell, user, bs });
                }
            }
        }
        let cross_table = extract_signatures_for(
            &geometry,
            plan.basis,
            cfg.alpha,
            plan.ray,
            cfg.signature_draws,
            sig_base,
            &cross,
        )?;
        for sig in cross_table.iter_sorted() {
            signatures.insert(sig.clone());
        }
    }

    let assignment_for = |s: Scheme| -> Result<PilotAssignment> {
        let mut alloc_rng = stream(cfg.seed, &[t, 3, s.rng_id()]);
        match cfg.allocation {
            AllocationPolicy::MaxCut => {
                let graph = build_interference_graph(groups_of(s), &signatures, |cell, user, bs| {
                    geometry.link_gain[cell][user][bs]
                })?;
                max_tau_cut_assign(&graph, cfg.tau, &mut alloc_rng)
            }
            AllocationPolicy::Random => random_assign(cfg.n_cells, cfg.tau, &mut alloc_rng),
            AllocationPolicy::None => identity_assign(cfg.n_cells, cfg.tau),
        }
    };

    let mut scheduled = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let (setup, tau_used) = match scheme {
            Scheme::Agnostic | Scheme::Aware => {
                let assignment = assignment_for(scheme)?;
                let setup =
                    TrainingSetup::from_groups(cfg.m, groups_of(scheme), &assignment, &signatures)?;
                (setup, cfg.tau)
            }
            Scheme::Conventional => {
                let schedule = conventional_schedule(groups_of(conv_source), cfg.n_cells);
                let budget = cfg.conventional_budget();
                (TrainingSetup::conventional(cfg.m, &schedule, budget)?, budget)
            }
        };
        scheduled.push(ScheduledScheme { scheme, setup, tau_used });
    }

    // One channel realization per trial, shared by every scheme and SNR
    // point: the sweep varies only the powers and the noise.
    let channel_users: Vec<(usize, usize)> = channel_users.into_iter().collect();
    let channels = ChannelSet::draw(
        &geometry,
        cfg.m,
        plan.ray,
        &channel_users,
        &mut stream(cfg.seed, &[t, 4]),
    )?;
    let mut rows = vec![vec![Vec::new(); cfg.snr_db.len()]; cfg.schemes.len()];
    for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
        let s = snr_idx as u64;
        let rho = 10f64.powf(snr_db / 10.0);
        for (scheme_idx, sched) in scheduled.iter().enumerate() {
            let id = sched.scheme.rng_id();
            let training = simulate_training(
                plan.basis,
                &channels,
                &sched.setup,
                rho,
                true,
                &mut stream(cfg.seed, &[t, 5, s, id]),
            )?;
            let detection = detect_uplink(
                plan.basis,
                &channels,
                &sched.setup,
                &training,
                rho,
                true,
                &mut stream(cfg.seed, &[t, 6, s, id]),
            )?;
            let metrics = compute_metrics(&training, &detection, cfg.t_sym, sched.tau_used)?;
            rows[scheme_idx][snr_idx] = metrics
                .into_iter()
                .map(|rec| MetricRow {
                    scheme: sched.scheme,
                    snr_db,
                    trial,
                    user: rec.cell * cfg.k + rec.user,
                    mse: rec.mse,
                    sinr: rec.sinr,
                    se: rec.se,
                })
                .collect();
        }
    }
    Ok(rows)
}

/// Run the configured Monte Carlo experiment. Deterministic in the seed:
/// every random decision draws from a substream keyed by (seed, trial,
/// stage), so the thread count never changes the result.
pub fn run_experiment(config: &ScenarioConfig) -> Result<MetricsTable> {
    config.validate()?;
    let basis = DftBasis::new(config.m)?;
    let ray = RayParams::new(config.p_rays, config.delta_deg.to_radians());
    let mut geo = GeometryParams::new(
        config.n_cells,
        config.k,
        config.cell_radius_km,
        config.pathloss_exp,
    );
    geo.pathloss_ref_km = config.pathloss_ref_km;
    let plan = TrialPlan { config, basis: &basis, ray: &ray, geo: &geo };

    let trial_rows: Vec<Vec<Vec<Vec<MetricRow>>>> = if config.threads == 1 {
        let mut all = Vec::with_capacity(config.trials);
        for trial in 0..config.trials {
            all.push(run_trial(&plan, trial)?);
        }
        all
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|trial| run_trial(&plan, trial))
                .collect::<Result<Vec<_>>>()
        })?
    };

    let mut rows = Vec::new();
    for scheme_idx in 0..config.schemes.len() {
        for snr_idx in 0..config.snr_db.len() {
            for per_trial in &trial_rows {
                rows.extend_from_slice(&per_trial[scheme_idx][snr_idx]);
            }
        }
    }
    Ok(MetricsTable { rows })
}
