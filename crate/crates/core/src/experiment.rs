//! Seeded Monte-Carlo trials: user drops, scheduling, genie evaluation and
//! CSV output.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ckm::{build_ckm, UsCkm};
use crate::error::{Error, Result};
use crate::eval::{brute_force_optimum, calibrate_noise, evaluate_group, UserRate};
use crate::geometry::{config_hash, mix, ChannelParams, Placement, Position, Scenario, ScenarioConfig};
use crate::overhead::{overhead_counts, realized_robust_exchange, OverheadModel};
use crate::sched::{
    greedy_schedule, random_schedule, robust_two_stage, sus_schedule, two_stage, users_by_cell, Algorithm, ChannelMap,
    CsiSource, EffectiveCsi, TwoStageParams, UserGroup, UserRecord,
};

/// Everything a trial reads: the built scenario, the map thresholded for the
/// configured `eta`/`delta`, and the calibrated noise power.
#[derive(Clone, Debug)]
pub struct Environment {
    pub config: ScenarioConfig,
    pub scenario: Arc<Scenario>,
    pub ckm: Arc<UsCkm>,
    pub noise_power: f64,
}

impl Environment {
    /// Builds without caching.
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        EnvironmentCache::default().environment(config)
    }
}

/// Shares scenarios and maps between configurations that only differ in
/// scheduling knobs. Not thread-safe by design: prepare every environment
/// up front, then run trials against the immutable results.
#[derive(Default)]
pub struct EnvironmentCache {
    scenarios: HashMap<u64, (Arc<Scenario>, f64)>,
    maps: HashMap<(u64, usize), Arc<UsCkm>>,
    thresholded: HashMap<(u64, usize, u64), Arc<UsCkm>>,
}

/// The configuration with every field that does not affect the scenario
/// reset, so sweeps over scheduling knobs reuse one scenario.
fn layout_key(config: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        kbar: 1,
        kprime: 1,
        alpha: 1.0,
        delta: None,
        eta: 1.0,
        target_snr_db: 0.0,
        samples: 1,
        channel: ChannelParams {
            placement: Placement::Uniform,
            hotspots: 1,
            hotspot_spread: 1.0,
            ..config.channel.clone()
        },
        ..config.clone()
    }
}

impl EnvironmentCache {
    pub fn environment(&mut self, config: &ScenarioConfig) -> Result<Environment> {
        config.validate()?;
        let key_config = layout_key(config);
        let key = config_hash(&key_config);
        let (scenario, noise0) = match self.scenarios.get(&key) {
            Some(v) => v.clone(),
            None => {
                let sc = Scenario::build(key_config)?;
                let noise0 = calibrate_noise(&sc, 0.0)?;
                let v = (Arc::new(sc), noise0);
                self.scenarios.insert(key, v.clone());
                v
            }
        };
        let base = match self.maps.get(&(key, config.samples)) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(build_ckm(&scenario, config.samples, 0.0)?);
                self.maps.insert((key, config.samples), m.clone());
                m
            }
        };
        let delta = config.delta.unwrap_or_else(|| base.delta_for_fraction(config.eta));
        let ckm = match self.thresholded.get(&(key, config.samples, delta.to_bits())) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new((*base).clone().with_delta(delta));
                self.thresholded
                    .insert((key, config.samples, delta.to_bits()), m.clone());
                m
            }
        };
        Ok(Environment {
            config: config.clone(),
            scenario,
            ckm,
            noise_power: noise0 / 10f64.powf(config.target_snr_db / 10.0),
        })
    }
}

/// Drops `users_per_cell` users into every cell. Ids are global:
/// cell `l` owns `l·K .. (l+1)·K`. Placement, hotspot count and spread come
/// from `params`.
pub fn place_users(scenario: &Scenario, params: &ChannelParams, seed: u64) -> Result<Vec<UserRecord>> {
    let cfg = &scenario.config;
    let k = cfg.users_per_cell;
    let part = &scenario.partition;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x05E2_D20B]));
    let mut users = Vec::with_capacity(cfg.cells * k);
    for l in 0..cfg.cells {
        let grids: Vec<_> = part.grids_of_cell(l).collect();
        let uniform = |rng: &mut ChaCha8Rng| {
            let g = grids[rng.random_range(0..grids.len())];
            Position::new(
                part.origin.x + (g.ix as f64 + rng.random::<f64>()) * part.edge,
                part.origin.y + (g.iy as f64 + rng.random::<f64>()) * part.edge,
            )
        };
        let hotspots: Vec<Position> = match params.placement {
            Placement::Uniform => Vec::new(),
            Placement::Clustered => (0..params.hotspots.max(1)).map(|_| uniform(&mut rng)).collect(),
        };
        let spread = Normal::new(0.0, params.hotspot_spread).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for i in 0..k {
            let mut pos = None;
            if !hotspots.is_empty() {
                for _ in 0..1000 {
                    let h = hotspots[rng.random_range(0..hotspots.len())];
                    let p = Position::new(h.x + spread.sample(&mut rng), h.y + spread.sample(&mut rng));
                    if part.lookup(p).is_ok_and(|g| g.cell == l) {
                        pos = Some(p);
                        break;
                    }
                }
            }
            let position = match pos {
                Some(p) => p,
                None => uniform(&mut rng),
            };
            let grid = part.lookup(position)?;
            users.push(UserRecord {
                id: l * k + i,
                cell: l,
                position,
                grid,
            });
        }
    }
    Ok(users)
}

/// Channels of every user at every BS for one realization.
pub fn draw_channels(scenario: &Scenario, users: &[UserRecord], realization: u64) -> Result<ChannelMap> {
    let per_bs = (0..scenario.cells())
        .map(|l| {
            users
                .iter()
                .map(|u| scenario.generate_channel(l, u.position, realization))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelMap::new(per_bs))
}

/// Nonzero realization index of a trial; index 0 is reserved for the map.
pub fn realization_for(trial_seed: u64) -> u64 {
    mix(&[trial_seed, 0x7E41]) | 1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOptions {
    /// Record scheduler wall time; off keeps reruns byte-identical.
    pub timing: bool,
    pub enumeration_limit: u128,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            timing: false,
            enumeration_limit: crate::eval::DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub group: UserGroup,
    /// CSI kind each scheduled user was picked from, parallel to `group.steps`.
    pub sources: Vec<Option<CsiSource>>,
    pub sum_rate: f64,
    pub per_user: Vec<UserRate>,
    pub csi_acquisitions: u64,
    pub info_exchange: u64,
    pub multiplications: u64,
    /// Fraction of `(BS, user)` entries served from the map in this trial.
    pub map_fraction: f64,
    pub fallback_users: usize,
    pub wall_ms: f64,
}

/// One trial: drop users, draw channels, schedule, evaluate on true channels.
pub fn run_trial(
    env: &Environment,
    algorithm: Algorithm,
    trial_seed: u64,
    opts: &TrialOptions,
) -> Result<ScheduleResult> {
    let cfg = &env.config;
    let sc = &*env.scenario;
    let users = place_users(sc, &cfg.channel, trial_seed)?;
    let channels = draw_channels(sc, &users, realization_for(trial_seed))?;
    let cells = users_by_cell(&users, cfg.cells);
    let (l, k, n) = (cfg.cells as u64, cfg.users_per_cell as u64, cfg.antennas() as u64);
    let params = TwoStageParams {
        kprime: cfg.kprime,
        kbar: cfg.kbar,
        alpha: cfg.alpha,
        first_stage: algorithm.first_stage().unwrap_or(crate::sched::FirstStage::Aes),
    };

    let started = Instant::now();
    let (group, csi, acquisitions, exchange, map_fraction) = match algorithm {
        Algorithm::TwoStageAes | Algorithm::TwoStageGis => {
            let csi = EffectiveCsi::scsi(&env.ckm, &users);
            let (g, _) = two_stage(&csi, &cells, params)?;
            (g, Some(csi), 0, l * cfg.kprime as u64, 1.0)
        }
        Algorithm::RobustAes | Algorithm::RobustGis => {
            let out = robust_two_stage(&env.ckm, &users, |bs, u| channels.get(bs, u.id).cloned(), params)?;
            let acq = out.csi.acquisitions() as u64;
            let unreliable = acq as f64 / (l * l * k) as f64;
            let exch = realized_robust_exchange(cfg.cells, cfg.kprime, unreliable);
            (out.group, Some(out.csi), acq, exch, 1.0 - unreliable)
        }
        Algorithm::Sus => (
            sus_schedule(&channels, &cells, cfg.kbar, cfg.alpha)?,
            None,
            l * k,
            0,
            0.0,
        ),
        Algorithm::Greedy => (
            greedy_schedule(&channels, &cells, cfg.kbar, env.noise_power)?,
            None,
            l * l * k,
            l * l * k * n,
            0.0,
        ),
        Algorithm::Random => (
            random_schedule(&cells, cfg.kbar, mix(&[trial_seed, 0x52A4D]))?,
            None,
            0,
            0,
            0.0,
        ),
        Algorithm::BruteForce => {
            let (g, _) = brute_force_optimum(&channels, &cells, cfg.kbar, env.noise_power, opts.enumeration_limit)?;
            (g, None, l * l * k, l * l * k * n, 0.0)
        }
    };
    let wall_ms = if opts.timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };

    let eval = evaluate_group(&group, &channels, env.noise_power)?;
    let sources = group
        .steps
        .iter()
        .map(|s| match (&csi, algorithm) {
            (Some(c), _) => Some(c.source(s.cell, s.user)),
            (None, Algorithm::Random) => None,
            (None, _) => Some(CsiSource::Icsi),
        })
        .collect();
    let multiplications = overhead_counts(&OverheadModel {
        algorithm,
        cells: cfg.cells,
        users_per_cell: cfg.users_per_cell,
        kbar: cfg.kbar,
        kprime: cfg.kprime,
        antennas: cfg.antennas(),
        eta: map_fraction,
    })
    .multiplications;
    Ok(ScheduleResult {
        algorithm,
        seed: trial_seed,
        fallback_users: group.steps.iter().filter(|s| s.fallback).count(),
        group,
        sources,
        sum_rate: eval.sum_rate,
        per_user: eval.users,
        csi_acquisitions: acquisitions,
        info_exchange: exchange,
        multiplications,
        map_fraction,
        wall_ms,
    })
}

/// Column names of the results file.
pub const RESULT_HEADER: [&str; 14] = [
    "algorithm",
    "snr_db",
    "kbar",
    "kprime",
    "alpha",
    "eta",
    "grid_edge",
    "samples",
    "seed",
    "sum_rate",
    "csi_acq",
    "info_exch",
    "mults",
    "wall_ms",
];

/// One results row for `result` obtained under `config`.
pub fn result_record(config: &ScenarioConfig, result: &ScheduleResult) -> [String; 14] {
    [
        result.algorithm.to_string(),
        config.target_snr_db.to_string(),
        config.kbar.to_string(),
        config.kprime.to_string(),
        config.alpha.to_string(),
        config.eta.to_string(),
        config.grid_edge.to_string(),
        config.samples.to_string(),
        result.seed.to_string(),
        result.sum_rate.to_string(),
        result.csi_acquisitions.to_string(),
        result.info_exchange.to_string(),
        result.multiplications.to_string(),
        format!("{:.3}", result.wall_ms),
    ]
}

/// `grid_id,center_x,center_y,serving_bs,dynamic`.
pub fn write_scenario_csv<W: Write>(scenario: &Scenario, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["grid_id", "center_x", "center_y", "serving_bs", "dynamic"])?;
    for g in scenario.partition.grids() {
        out.write_record([
            g.index.id.to_string(),
            g.center.x.to_string(),
            g.center.y.to_string(),
            g.index.cell.to_string(),
            u8::from(scenario.scatterers.is_dynamic(g.index.id)).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `cell,slot,user_id,metric,csi_source` in selection order.
pub fn write_group_csv<W: Write>(result: &ScheduleResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cell", "slot", "user_id", "metric", "csi_source"])?;
    for (step, src) in result.group.steps.iter().zip(&result.sources) {
        out.write_record([
            step.cell.to_string(),
            step.iteration.to_string(),
            step.user.to_string(),
            step.metric.to_string(),
            src.map_or_else(|| "none".to_string(), |s| s.to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}
