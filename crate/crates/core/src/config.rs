//! Flat `key = value` experiment files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep the defaults of [`ScenarioConfig`] and [`ExperimentPlan`].
//! Scenario keys: `cells`, `users_per_cell`, `kbar`, `kprime`, `n_h`, `n_v`,
//! `carrier_ghz`, `bs_height`, `user_height`, `cell_radius`,
//! `inter_site_distance`, `grid_edge`, `samples`, `alpha`, `delta` (number or
//! `auto`), `eta`, `snr_db`, `dynamic_grid_fraction`, `scenario_seed`,
//! `pl_exponent`, `pl_intercept_db`, `shadowing_db`, `scatterer_spacing`,
//! `visibility_radius`, `local_path_weight`, `dynamic_clusters`,
//! `dynamic_power`, `placement`, `hotspots`, `hotspot_spread`,
//! `element_pattern`, `downtilt_deg`.
//! Run keys: `algorithms` (comma list or `all`), `trials`, `seed`, `output`,
//! `timing`, `enumeration_limit`, and up to two `sweep.<dim> = v1, v2, ...`
//! lines with `<dim>` one of `snr`, `alpha`, `kprime`, `kbar`, `eta`,
//! `grid_edge`, `samples`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{binomial, DEFAULT_ENUMERATION_LIMIT};
use crate::geometry::ScenarioConfig;
use crate::sched::Algorithm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepDim {
    Snr,
    Alpha,
    Kprime,
    Kbar,
    Eta,
    GridEdge,
    Samples,
}

impl SweepDim {
    pub fn name(self) -> &'static str {
        match self {
            SweepDim::Snr => "snr",
            SweepDim::Alpha => "alpha",
            SweepDim::Kprime => "kprime",
            SweepDim::Kbar => "kbar",
            SweepDim::Eta => "eta",
            SweepDim::GridEdge => "grid_edge",
            SweepDim::Samples => "samples",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepDim::Kprime | SweepDim::Kbar | SweepDim::Samples)
    }

    fn apply(self, c: &mut ScenarioConfig, v: f64) {
        match self {
            SweepDim::Snr => c.target_snr_db = v,
            SweepDim::Alpha => c.alpha = v,
            SweepDim::Kprime => c.kprime = v as usize,
            SweepDim::Kbar => c.kbar = v as usize,
            SweepDim::Eta => c.eta = v,
            SweepDim::GridEdge => c.grid_edge = v,
            SweepDim::Samples => c.samples = v as usize,
        }
    }
}

impl fmt::Display for SweepDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepDim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            SweepDim::Snr,
            SweepDim::Alpha,
            SweepDim::Kprime,
            SweepDim::Kbar,
            SweepDim::Eta,
            SweepDim::GridEdge,
            SweepDim::Samples,
        ]
        .into_iter()
        .find(|d| d.name() == s)
        .ok_or_else(|| format!("unknown sweep dimension `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub dim: SweepDim,
    pub values: Vec<f64>,
}

/// A validated batch: base scenario, sweep grid, algorithms and trial count.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub base: ScenarioConfig,
    pub sweeps: Vec<Sweep>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t`.
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub timing: bool,
    pub enumeration_limit: u128,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            sweeps: Vec::new(),
            algorithms: default_algorithms(),
            trials: 10,
            seed: 1,
            output: None,
            timing: false,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL
        .into_iter()
        .filter(|&a| a != Algorithm::BruteForce)
        .collect()
}

/// Parses a comma-separated algorithm list; `all` expands to every algorithm
/// except the exhaustive oracle.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, String> {
    if s.trim() == "all" {
        return Ok(default_algorithms());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let a: Algorithm = part.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err("empty algorithm list".into());
    }
    Ok(out)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse()
        .map_err(|_| format!("cannot parse `{s}` as {}", std::any::type_name::<T>()))
}

impl ExperimentPlan {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    /// Parses and validates; `path` is only used in error messages.
    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut plan = ExperimentPlan::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |key: &str, msg: String| Error::ConfigParse {
                path: path.to_path_buf(),
                line: line_no,
                key: key.to_string(),
                msg,
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(line, "expected `key = value`".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(key, "duplicate key".into()));
            }
            plan.set(key, value).map_err(|m| err(key, m))?;
        }
        plan.validate()?;
        Ok(plan)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let c = &mut self.base;
        let ch = &mut c.channel;
        match key {
            "cells" => c.cells = num(v)?,
            "users_per_cell" => c.users_per_cell = num(v)?,
            "kbar" => c.kbar = num(v)?,
            "kprime" => c.kprime = num(v)?,
            "n_h" => c.n_h = num(v)?,
            "n_v" => c.n_v = num(v)?,
            "carrier_ghz" => c.carrier_hz = num::<f64>(v)? * 1e9,
            "bs_height" => c.bs_height = num(v)?,
            "user_height" => c.user_height = num(v)?,
            "cell_radius" => c.cell_radius = num(v)?,
            "inter_site_distance" => c.inter_site_distance = num(v)?,
            "grid_edge" => c.grid_edge = num(v)?,
            "samples" => c.samples = num(v)?,
            "alpha" => c.alpha = num(v)?,
            "delta" => c.delta = if v == "auto" { None } else { Some(num(v)?) },
            "eta" => c.eta = num(v)?,
            "snr_db" => c.target_snr_db = num(v)?,
            "dynamic_grid_fraction" => c.dynamic_grid_fraction = num(v)?,
            "scenario_seed" => c.rng_seed = num(v)?,
            "pl_exponent" => ch.pl_exponent = num(v)?,
            "pl_intercept_db" => ch.pl_intercept_db = num(v)?,
            "shadowing_db" => ch.shadowing_db = num(v)?,
            "scatterer_spacing" => ch.scatterer_spacing = num(v)?,
            "visibility_radius" => ch.visibility_radius = num(v)?,
            "local_path_weight" => ch.local_path_weight = num(v)?,
            "dynamic_clusters" => ch.dynamic_clusters = num(v)?,
            "dynamic_power" => ch.dynamic_power = num(v)?,
            "placement" => ch.placement = v.parse()?,
            "hotspots" => ch.hotspots = num(v)?,
            "hotspot_spread" => ch.hotspot_spread = num(v)?,
            "element_pattern" => ch.element_pattern = parse_bool(v)?,
            "downtilt_deg" => ch.downtilt_deg = num(v)?,
            "algorithms" => self.algorithms = parse_algorithms(v)?,
            "trials" => self.trials = num(v)?,
            "seed" => self.seed = num(v)?,
            "output" => self.output = Some(PathBuf::from(v)),
            "timing" => self.timing = parse_bool(v)?,
            "enumeration_limit" => self.enumeration_limit = num(v)?,
            _ => {
                let Some(dim) = key.strip_prefix("sweep.") else {
                    return Err("unknown key".into());
                };
                let dim: SweepDim = dim.parse()?;
                let values = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(num::<f64>)
                    .collect::<Result<Vec<_>, _>>()?;
                if values.is_empty() {
                    return Err("sweep needs at least one value".into());
                }
                if dim.is_integer() && values.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                    return Err(format!("sweep over `{dim}` needs non-negative integers"));
                }
                self.sweeps.push(Sweep { dim, values });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sweeps.len() > 2 {
            return bad(format!(
                "at most two sweep dimensions per plan, got {} ({})",
                self.sweeps.len(),
                self.sweeps.iter().map(|s| s.dim.name()).collect::<Vec<_>>().join(", ")
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for point in self.points() {
            point.validate()?;
            if self.algorithms.contains(&Algorithm::BruteForce) {
                let combos = (0..point.cells).fold(1u128, |acc, _| {
                    acc.saturating_mul(binomial(point.users_per_cell, point.kbar))
                });
                if combos > self.enumeration_limit {
                    return Err(Error::EnumerationLimit {
                        combinations: combos,
                        limit: self.enumeration_limit,
                    });
                }
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweeps applied to the base scenario, first
    /// sweep outermost.
    pub fn points(&self) -> Vec<ScenarioConfig> {
        let mut points = vec![self.base.clone()];
        for s in &self.sweeps {
            points = points
                .into_iter()
                .flat_map(|p| {
                    s.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        s.dim.apply(&mut q, v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn trial_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trials as u64).map(|t| self.seed.wrapping_add(t))
    }

    /// Rows a complete run writes.
    pub fn row_count(&self) -> usize {
        self.algorithms.len() * self.points().len() * self.trials
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentPlan> {
        ExperimentPlan::parse_str(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let p = parse("").unwrap();
        assert_eq!(p, ExperimentPlan::default());
        let c = &p.base;
        assert_eq!((c.cells, c.users_per_cell, c.antennas(), c.kprime), (3, 50, 32, 20));
        assert_eq!(c.carrier_hz, 6.7e9);
        assert_eq!((c.bs_height, c.user_height), (25.0, 1.5));
    }

    #[test]
    fn keys_and_sweeps() {
        let p = parse(
            "# comment\nkbar = 4\nalpha=0.3  # trailing\nalgorithms = random, sus\nsweep.snr = -10, 0, 10\nsweep.kprime = 10,20\ndelta = auto\n",
        )
        .unwrap();
        assert_eq!(p.base.kbar, 4);
        assert_eq!(p.algorithms, vec![Algorithm::Random, Algorithm::Sus]);
        let pts = p.points();
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[0].target_snr_db, pts[0].kprime), (-10.0, 10));
        assert_eq!((pts[1].target_snr_db, pts[1].kprime), (-10.0, 20));
        assert_eq!(p.row_count(), 2 * 6 * 10);
    }

    #[test]
    fn rejects_antenna_overload() {
        let e = parse("kbar = 40\nkprime = 40").unwrap_err();
        assert!(e.to_string().contains("exceeds antenna count"), "{e}");
    }

    #[test]
    fn rejects_three_sweeps() {
        let e = parse("sweep.snr = 0\nsweep.alpha = 0.5\nsweep.eta = 1").unwrap_err();
        assert!(e.to_string().contains("at most two sweep dimensions"), "{e}");
    }

    #[test]
    fn reports_key_and_line() {
        match parse("kbar = 2\n\nalpha = high\n") {
            Err(Error::ConfigParse { line, key, .. }) => assert_eq!((line, key.as_str()), (3, "alpha")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("bogus = 1"), Err(Error::ConfigParse { line: 1, .. })));
        assert!(matches!(
            parse("kbar = 1\nkbar = 2"),
            Err(Error::ConfigParse { line: 2, .. })
        ));
        assert!(matches!(parse("just text"), Err(Error::ConfigParse { .. })));
        assert!(matches!(parse("sweep.kbar = 1.5"), Err(Error::ConfigParse { .. })));
    }

    #[test]
    fn brute_force_guard() {
        assert!(matches!(
            parse("algorithms = brute_force"),
            Err(Error::EnumerationLimit { .. })
        ));
        let ok = "algorithms = brute_force\ncells = 2\nusers_per_cell = 5\nkprime = 3\nkbar = 2\n";
        assert_eq!(parse(ok).unwrap().algorithms, vec![Algorithm::BruteForce]);
    }
}
