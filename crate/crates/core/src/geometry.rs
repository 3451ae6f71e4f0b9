//! Cell layout, grid partition and the clustered geometric channel model.
//!
//! The channel seen by BS `l` from a position `p` is a sum of plane-wave paths
//! arriving from scatterers near `p`. Static scatterers are fixed at build time
//! and weighted by a smooth visibility kernel, so the channel is a continuous,
//! realization-invariant function of position. Grids flagged as dynamic add a
//! random component drawn afresh for every `(position, realization)` pair.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::channel::ChannelVector;
use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Element spacing of the planar array, in wavelengths.
pub const ELEMENT_SPACING: f64 = 0.5;

/// How users are dropped inside their cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Uniform over the cell's grids.
    Uniform,
    /// A few Gaussian hotspots per cell ("dense user distribution").
    Clustered,
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Placement::Uniform),
            "clustered" | "dense" => Ok(Placement::Clustered),
            other => Err(format!("unknown placement `{other}`")),
        }
    }
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::Uniform => "uniform",
            Placement::Clustered => "clustered",
        })
    }
}

/// Knobs of the substitute channel model.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    /// Path-loss exponent `n` of `PL = PL₀ + 10·n·log10(d)`.
    pub pl_exponent: f64,
    /// Frequency-independent part of `PL₀` at 1 m, in dB.
    pub pl_intercept_db: f64,
    /// Standard deviation of the per-grid log-normal shadowing, dB.
    pub shadowing_db: f64,
    /// Mean spacing between static scatterers, m.
    pub scatterer_spacing: f64,
    /// Width of the Gaussian visibility kernel, m.
    pub visibility_radius: f64,
    /// Amplitude weight of the path arriving from the user's own direction.
    pub local_path_weight: f64,
    pub dynamic_clusters: usize,
    /// Power of the dynamic component relative to the static one.
    pub dynamic_power: f64,
    pub placement: Placement,
    /// Hotspots per cell for clustered placement.
    pub hotspots: usize,
    /// Standard deviation of user scatter around a hotspot, m.
    pub hotspot_spread: f64,
    /// Apply the directional element pattern; off means isotropic elements.
    pub element_pattern: bool,
    /// Electrical downtilt of the element pattern, degrees below horizon.
    pub downtilt_deg: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            pl_exponent: 3.908,
            pl_intercept_db: 13.54,
            shadowing_db: 6.0,
            scatterer_spacing: 12.0,
            visibility_radius: 15.0,
            local_path_weight: 1.0,
            dynamic_clusters: 60,
            dynamic_power: 1.0,
            placement: Placement::Uniform,
            hotspots: 2,
            hotspot_spread: 8.0,
            element_pattern: true,
            downtilt_deg: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// `L`
    pub cells: usize,
    /// `K`
    pub users_per_cell: usize,
    /// `K̄`
    pub kbar: usize,
    /// `K′`
    pub kprime: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub carrier_hz: f64,
    pub bs_height: f64,
    pub user_height: f64,
    pub cell_radius: f64,
    pub inter_site_distance: f64,
    pub grid_edge: f64,
    /// `S`, sampling points per grid.
    pub samples: usize,
    /// AES / SUS correlation threshold.
    pub alpha: f64,
    /// Explicit reliability threshold. When `None`, it is derived from `eta`.
    pub delta: Option<f64>,
    /// Target fraction of reliable grids.
    pub eta: f64,
    pub target_snr_db: f64,
    pub dynamic_grid_fraction: f64,
    pub rng_seed: u64,
    pub channel: ChannelParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cells: 3,
            users_per_cell: 50,
            kbar: 5,
            kprime: 20,
            n_h: 4,
            n_v: 4,
            carrier_hz: 6.7e9,
            bs_height: 25.0,
            user_height: 1.5,
            cell_radius: 80.0,
            inter_site_distance: 130.0,
            grid_edge: 5.0,
            samples: 9,
            alpha: 0.5,
            delta: None,
            eta: 0.7,
            target_snr_db: 30.0,
            dynamic_grid_fraction: 0.3,
            rng_seed: 1,
            channel: ChannelParams::default(),
        }
    }
}

impl ScenarioConfig {
    /// Antenna count `N = 2·N_h·N_v`.
    pub fn antennas(&self) -> usize {
        2 * self.n_h * self.n_v
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.cells == 0 {
            return bad("cells must be at least 1".into());
        }
        if self.kbar == 0 || self.kbar > self.kprime || self.kprime > self.users_per_cell {
            return bad(format!(
                "need 1 <= kbar <= kprime <= users_per_cell, got {} / {} / {}",
                self.kbar, self.kprime, self.users_per_cell
            ));
        }
        if self.n_h == 0 || self.n_v == 0 {
            return bad("array dimensions must be positive".into());
        }
        if self.cells * self.kbar > self.antennas() {
            return bad(format!(
                "cells * kbar = {} exceeds antenna count {}",
                self.cells * self.kbar,
                self.antennas()
            ));
        }
        if !(self.grid_edge > 0.0) {
            return bad("grid_edge must be positive".into());
        }
        if !(self.cell_radius > 0.0) {
            return bad("cell_radius must be positive".into());
        }
        if self.grid_edge > 2.0 * self.cell_radius {
            return bad(format!(
                "grid_edge {} exceeds the cell diameter {}",
                self.grid_edge,
                2.0 * self.cell_radius
            ));
        }
        if self.cells > 1 && !(self.inter_site_distance > 0.0) {
            return bad("inter_site_distance must be positive".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) {
                return bad(format!("delta must be non-negative, got {d}"));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.dynamic_grid_fraction) {
            return bad(format!(
                "dynamic_grid_fraction must lie in [0, 1], got {}",
                self.dynamic_grid_fraction
            ));
        }
        if !(self.carrier_hz > 0.0) || !(self.bs_height > 0.0) || !(self.user_height > 0.0) {
            return bad("carrier and heights must be positive".into());
        }
        if !self.target_snr_db.is_finite() {
            return bad("target_snr must be finite".into());
        }
        let ch = &self.channel;
        if !(ch.scatterer_spacing > 0.0) || !(ch.visibility_radius > 0.0) {
            return bad("scatterer spacing and visibility radius must be positive".into());
        }
        if !(ch.dynamic_power >= 0.0) || !(ch.shadowing_db >= 0.0) {
            return bad("dynamic_power and shadowing_db must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A grid of the cluster-wide partition together with its serving cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub cell: usize,
    pub id: usize,
}

/// Log-distance path loss, `PL₀ + 10·n·log10(d)` with `PL₀` carrying the
/// usual carrier and user-height corrections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLoss {
    pub exponent: f64,
    pub intercept_db: f64,
}

impl PathLoss {
    pub fn from_params(p: &ChannelParams) -> Self {
        Self {
            exponent: p.pl_exponent,
            intercept_db: p.pl_intercept_db,
        }
    }

    pub fn loss_db(&self, distance_3d: f64, fc: f64, _bs_height: f64, user_height: f64) -> Result<f64> {
        if !(distance_3d > 0.0) || !distance_3d.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "path loss needs a positive distance, got {distance_3d}"
            )));
        }
        Ok(
            self.intercept_db + 10.0 * self.exponent * distance_3d.log10() + 20.0 * (fc / 1e9).log10()
                - 0.6 * (user_height - 1.5),
        )
    }
}

/// Default-parameter path loss in dB.
pub fn path_loss_db(distance_3d: f64, fc: f64, bs_height: f64, user_height: f64) -> Result<f64> {
    PathLoss::from_params(&ChannelParams::default()).loss_db(distance_3d, fc, bs_height, user_height)
}

/// Unit-norm steering vector of a dual-polarized `n_h × n_v` planar array with
/// half-wavelength spacing. Angles are relative to the array boresight.
/// Polarization `p` occupies entries `[p·n_h·n_v, (p+1)·n_h·n_v)`.
pub fn array_response(
    n_h: usize,
    n_v: usize,
    azimuth: f64,
    elevation: f64,
    polarization: usize,
    wavelength: f64,
) -> Result<ChannelVector> {
    if n_h == 0 || n_v == 0 || polarization > 1 || !(wavelength > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "array_response: n_h={n_h}, n_v={n_v}, polarization={polarization}, wavelength={wavelength}"
        )));
    }
    let block = n_h * n_v;
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * block];
    let mut gains = [Complex64::new(0.0, 0.0); 2];
    gains[polarization] = Complex64::new(1.0 / (block as f64).sqrt(), 0.0);
    let spacing = ELEMENT_SPACING * wavelength;
    let k = 2.0 * PI / wavelength * spacing;
    accumulate_path(&mut out, n_h, n_v, k, azimuth, elevation, gains);
    Ok(ChannelVector::new(out))
}

/// Amplitude of a sector element with 65° half-power beamwidth in both
/// planes and 30 dB front-to-back ratio, for a path at `azimuth` (from
/// boresight) and `elevation` (negative below the horizon).
pub fn element_amplitude(azimuth: f64, elevation: f64, downtilt_deg: f64) -> f64 {
    let az = azimuth.to_degrees().rem_euclid(360.0);
    let az = if az > 180.0 { az - 360.0 } else { az };
    let tilt_off = -elevation.to_degrees() - downtilt_deg;
    let a_h = (12.0 * (az / 65.0).powi(2)).min(30.0);
    let a_v = (12.0 * (tilt_off / 65.0).powi(2)).min(30.0);
    let loss_db = (a_h + a_v).min(30.0);
    10f64.powf(-loss_db / 20.0)
}

/// Adds `gains[p] · a_p(azimuth, elevation)` (unnormalized) into both blocks.
fn accumulate_path(
    out: &mut [Complex64],
    n_h: usize,
    n_v: usize,
    phase_step: f64,
    azimuth: f64,
    elevation: f64,
    gains: [Complex64; 2],
) {
    let u = phase_step * azimuth.sin() * elevation.cos();
    let v = phase_step * elevation.sin();
    let step_h = Complex64::from_polar(1.0, u);
    let step_v = Complex64::from_polar(1.0, v);
    let block = n_h * n_v;
    let mut col = Complex64::new(1.0, 0.0);
    for iv in 0..n_v {
        let mut e = col;
        for ih in 0..n_h {
            let idx = iv * n_h + ih;
            out[idx] += gains[0] * e;
            out[block + idx] += gains[1] * e;
            e *= step_h;
        }
        col *= step_v;
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub index: GridIndex,
    pub center: Position,
    /// Lattice coordinates.
    pub ix: usize,
    pub iy: usize,
}

/// Square lattice over the cluster's bounding box; lattice cells whose center
/// lies within `cell_radius` of the nearest BS become grids. Cells are
/// half-open: `[x0 + i·edge, x0 + (i+1)·edge)`.
#[derive(Clone, Debug)]
pub struct GridPartition {
    pub origin: Position,
    pub edge: f64,
    pub nx: usize,
    pub ny: usize,
    lattice: Vec<Option<usize>>,
    grids: Vec<Grid>,
}

impl GridPartition {
    pub fn build(bs: &[Position], cell_radius: f64, edge: f64) -> Self {
        let min_x = bs.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - cell_radius;
        let max_x = bs.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + cell_radius;
        let min_y = bs.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - cell_radius;
        let max_y = bs.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + cell_radius;
        let nx = (((max_x - min_x) / edge) - 1e-9).ceil().max(1.0) as usize;
        let ny = (((max_y - min_y) / edge) - 1e-9).ceil().max(1.0) as usize;
        let origin = Position::new(min_x, min_y);
        let mut lattice = vec![None; nx * ny];
        let mut grids = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let center = Position::new(origin.x + (ix as f64 + 0.5) * edge, origin.y + (iy as f64 + 0.5) * edge);
                let (cell, dist) = nearest_bs(bs, &center);
                if dist <= cell_radius {
                    let id = grids.len();
                    lattice[iy * nx + ix] = Some(id);
                    grids.push(Grid {
                        index: GridIndex { cell, id },
                        center,
                        ix,
                        iy,
                    });
                }
            }
        }
        Self {
            origin,
            edge,
            nx,
            ny,
            lattice,
            grids,
        }
    }

    pub(crate) fn from_parts(origin: Position, edge: f64, nx: usize, ny: usize, grids: Vec<Grid>) -> Result<Self> {
        let mut lattice = vec![None; nx * ny];
        for (id, g) in grids.iter().enumerate() {
            if g.index.id != id || g.ix >= nx || g.iy >= ny {
                return Err(Error::Format(format!("grid {id} inconsistent with lattice")));
            }
            lattice[g.iy * nx + g.ix] = Some(id);
        }
        Ok(Self {
            origin,
            edge,
            nx,
            ny,
            lattice,
            grids,
        })
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn grid(&self, id: usize) -> &Grid {
        &self.grids[id]
    }

    pub fn grids_of_cell(&self, cell: usize) -> impl Iterator<Item = &Grid> {
        self.grids.iter().filter(move |g| g.index.cell == cell)
    }

    pub fn lookup(&self, p: Position) -> Result<GridIndex> {
        let out = Error::OutOfCluster { x: p.x, y: p.y };
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(out);
        }
        let fx = ((p.x - self.origin.x) / self.edge).floor();
        let fy = ((p.y - self.origin.y) / self.edge).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return Err(out);
        }
        match self.lattice[fy as usize * self.nx + fx as usize] {
            Some(id) => Ok(self.grids[id].index),
            None => Err(out),
        }
    }
}

/// Nearest BS, ties to the lowest id.
fn nearest_bs(bs: &[Position], p: &Position) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (l, b) in bs.iter().enumerate() {
        let d = b.distance(p);
        if d < best.1 {
            best = (l, d);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct StaticCluster {
    pub position: Position,
    /// Complex gain per (observing BS, polarization).
    pub gains: Vec<[Complex64; 2]>,
}

#[derive(Clone, Debug)]
pub struct DynamicCluster {
    pub position: Position,
    /// Relative amplitude of this cluster's per-realization jitter.
    pub jitter_scale: f64,
}

#[derive(Clone, Debug)]
pub struct ScattererField {
    pub static_clusters: Vec<StaticCluster>,
    pub dynamic_clusters: Vec<DynamicCluster>,
    /// Per-BS, per-polarization gain of the path from the user's own direction.
    pub local_gains: Vec<[Complex64; 2]>,
    affected: Vec<bool>,
}

impl ScattererField {
    pub fn is_dynamic(&self, grid: usize) -> bool {
        self.affected[grid]
    }

    pub fn affected_grids(&self) -> impl Iterator<Item = usize> + '_ {
        self.affected.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn dynamic_count(&self) -> usize {
        self.affected.iter().filter(|&&a| a).count()
    }
}

/// Sampled channels of one grid.
#[derive(Clone, Debug)]
pub struct GridSamples {
    pub positions: Vec<Position>,
    pub samples: Vec<ChannelVector>,
    pub center: ChannelVector,
}

/// Immutable layout + partition + scatterer field.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub bs_positions: Vec<Position>,
    /// Array boresight azimuth of each BS, rad.
    pub boresights: Vec<f64>,
    pub partition: GridPartition,
    pub scatterers: ScattererField,
    /// Shadowing in dB, indexed `[bs][grid]`.
    shadowing: Vec<Vec<f64>>,
    path_loss: PathLoss,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let bs_positions = bs_layout(config.cells, config.inter_site_distance);
        let boresights = bs_positions
            .iter()
            .map(|p| if p.x == 0.0 && p.y == 0.0 { 0.0 } else { p.y.atan2(p.x) })
            .collect();
        let partition = GridPartition::build(&bs_positions, config.cell_radius, config.grid_edge);
        for l in 0..config.cells {
            let n = partition.grids_of_cell(l).count();
            if n < config.users_per_cell {
                return Err(Error::InvalidConfig(format!(
                    "cell {l} has {n} grids, fewer than users_per_cell = {}",
                    config.users_per_cell
                )));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let ch = &config.channel;
        let margin = 2.0 * ch.visibility_radius;
        let lo = Position::new(partition.origin.x - margin, partition.origin.y - margin);
        let width = partition.nx as f64 * partition.edge + 2.0 * margin;
        let height = partition.ny as f64 * partition.edge + 2.0 * margin;
        let n_static = ((width * height) / (ch.scatterer_spacing * ch.scatterer_spacing)).ceil() as usize;

        let cn = |rng: &mut ChaCha8Rng| complex_normal(rng);
        let static_clusters = (0..n_static)
            .map(|_| {
                let position = Position::new(lo.x + rng.random::<f64>() * width, lo.y + rng.random::<f64>() * height);
                let gains = (0..config.cells).map(|_| [cn(&mut rng), cn(&mut rng)]).collect();
                StaticCluster { position, gains }
            })
            .collect();
        let local_gains = (0..config.cells).map(|_| [cn(&mut rng), cn(&mut rng)]).collect();
        let dynamic_clusters = (0..ch.dynamic_clusters)
            .map(|_| DynamicCluster {
                position: Position::new(lo.x + rng.random::<f64>() * width, lo.y + rng.random::<f64>() * height),
                jitter_scale: 0.5 + rng.random::<f64>(),
            })
            .collect();

        let n_grids = partition.len();
        let n_affected = (config.dynamic_grid_fraction * n_grids as f64).round() as usize;
        let mut order: Vec<usize> = (0..n_grids).collect();
        for i in 0..n_affected.min(n_grids) {
            let j = rng.random_range(i..n_grids);
            order.swap(i, j);
        }
        let mut affected = vec![false; n_grids];
        for &g in &order[..n_affected.min(n_grids)] {
            affected[g] = true;
        }

        let shadow = Normal::new(0.0, ch.shadowing_db).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let shadowing = (0..config.cells)
            .map(|_| (0..n_grids).map(|_| shadow.sample(&mut rng)).collect())
            .collect();

        let path_loss = PathLoss::from_params(ch);
        Ok(Self {
            scatterers: ScattererField {
                static_clusters,
                dynamic_clusters,
                local_gains,
                affected,
            },
            config,
            bs_positions,
            boresights,
            partition,
            shadowing,
            path_loss,
        })
    }

    pub fn cells(&self) -> usize {
        self.config.cells
    }

    pub fn antennas(&self) -> usize {
        self.config.antennas()
    }

    pub fn lookup(&self, p: Position) -> Result<GridIndex> {
        self.partition.lookup(p)
    }

    pub fn shadowing_db(&self, bs: usize, grid: usize) -> f64 {
        self.shadowing[bs][grid]
    }

    /// Azimuth relative to boresight and elevation of `target` (at `height`) seen from BS `bs`.
    fn angles(&self, bs: usize, target: &Position, height: f64) -> (f64, f64) {
        let b = &self.bs_positions[bs];
        let dx = target.x - b.x;
        let dy = target.y - b.y;
        let az = dy.atan2(dx) - self.boresights[bs];
        let el = (height - self.config.bs_height).atan2(dx.hypot(dy));
        (az, el)
    }

    /// Channel from `position` to BS `observing_bs` in the given realization.
    pub fn generate_channel(&self, observing_bs: usize, position: Position, realization: u64) -> Result<ChannelVector> {
        let grid = self.lookup(position)?;
        let cfg = &self.config;
        let ch = &cfg.channel;
        let (n_h, n_v) = (cfg.n_h, cfg.n_v);
        let n = cfg.antennas();
        let phase_step = 2.0 * PI * ELEMENT_SPACING;
        let r2 = 2.0 * ch.visibility_radius * ch.visibility_radius;
        let cutoff = 9.0 * ch.visibility_radius * ch.visibility_radius;
        let pattern = |az: f64, el: f64| {
            if ch.element_pattern {
                element_amplitude(az, el, ch.downtilt_deg)
            } else {
                1.0
            }
        };

        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut weight_sq = 0.0;
        for c in &self.scatterers.static_clusters {
            let d2 = sq_dist(&c.position, &position);
            if d2 > cutoff {
                continue;
            }
            let w = (-d2 / r2).exp();
            weight_sq += w * w;
            let (az, el) = self.angles(observing_bs, &c.position, cfg.user_height);
            let g = c.gains[observing_bs];
            let a = w * pattern(az, el);
            accumulate_path(&mut acc, n_h, n_v, phase_step, az, el, [g[0] * a, g[1] * a]);
        }
        let wl = ch.local_path_weight;
        if wl > 0.0 {
            weight_sq += wl * wl;
            let (az, el) = self.angles(observing_bs, &position, cfg.user_height);
            let g = self.scatterers.local_gains[observing_bs];
            let a = wl * pattern(az, el);
            accumulate_path(&mut acc, n_h, n_v, phase_step, az, el, [g[0] * a, g[1] * a]);
        }
        let block = (n_h * n_v) as f64;
        // E‖Σ w·g·a‖² = 2·Σw² for unnormalized steering vectors of norm √block.
        let static_norm = if weight_sq > 0.0 {
            1.0 / (2.0 * weight_sq * block).sqrt()
        } else {
            0.0
        };
        for z in acc.iter_mut() {
            *z *= static_norm;
        }

        if self.scatterers.is_dynamic(grid.id) && ch.dynamic_power > 0.0 && !self.scatterers.dynamic_clusters.is_empty()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
                cfg.rng_seed,
                0x0D17_A11C,
                realization,
                observing_bs as u64,
                position.x.to_bits(),
                position.y.to_bits(),
            ]));
            let mut dyn_acc = vec![Complex64::new(0.0, 0.0); n];
            let mut dyn_sq = 0.0;
            let floor = 1e-3;
            for d in &self.scatterers.dynamic_clusters {
                let w = ((-sq_dist(&d.position, &position) / r2).exp()).max(floor) * d.jitter_scale;
                dyn_sq += w * w;
                let (az, el) = self.angles(observing_bs, &d.position, cfg.user_height);
                let a = w * pattern(az, el);
                let g = [complex_normal(&mut rng) * a, complex_normal(&mut rng) * a];
                accumulate_path(&mut dyn_acc, n_h, n_v, phase_step, az, el, g);
            }
            let scale = (ch.dynamic_power / (2.0 * dyn_sq * block)).sqrt();
            for (a, d) in acc.iter_mut().zip(dyn_acc) {
                *a += d * scale;
            }
        }

        let bs = &self.bs_positions[observing_bs];
        let d2d = bs.distance(&position);
        let dz = cfg.bs_height - cfg.user_height;
        let d3d = (d2d * d2d + dz * dz).sqrt();
        let loss = self
            .path_loss
            .loss_db(d3d, cfg.carrier_hz, cfg.bs_height, cfg.user_height)?
            + self.shadowing[observing_bs][grid.id];
        let amplitude = 10f64.powf(-loss / 20.0);
        for z in acc.iter_mut() {
            *z *= amplitude;
        }
        let h = ChannelVector::new(acc);
        if !h.is_finite() {
            return Err(Error::NonFinite("generated channel"));
        }
        Ok(h)
    }

    /// `S` deterministic sampling positions inside the grid: an R2
    /// low-discrepancy sequence under a per-grid seeded rotation. The first
    /// `S` positions do not depend on the requested count.
    pub fn sample_positions(&self, grid: GridIndex, samples: usize) -> Vec<Position> {
        // plastic number
        const PHI2: f64 = 1.324_717_957_244_746;
        let steps = [1.0 / PHI2, 1.0 / (PHI2 * PHI2)];
        let g = self.partition.grid(grid.id);
        let edge = self.partition.edge;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.config.rng_seed, 0x5A3F1E, grid.id as u64]));
        let shift: [f64; 2] = [rng.random(), rng.random()];
        let max_u = 1.0 - 1e-9;
        (0..samples)
            .map(|s| {
                let ux = (shift[0] + (s + 1) as f64 * steps[0]).fract().min(max_u);
                let uy = (shift[1] + (s + 1) as f64 * steps[1]).fract().min(max_u);
                Position::new(
                    self.partition.origin.x + (g.ix as f64 + ux) * edge,
                    self.partition.origin.y + (g.iy as f64 + uy) * edge,
                )
            })
            .collect()
    }

    /// Channels at `S` sampling points of the grid plus its geometric center.
    /// The center always uses realization 0 so the reference point is stable.
    pub fn sample_grid(
        &self,
        observing_bs: usize,
        grid: GridIndex,
        samples: usize,
        realization: u64,
    ) -> Result<GridSamples> {
        if samples == 0 {
            return Err(Error::EmptySamples);
        }
        let positions = self.sample_positions(grid, samples);
        let samples = positions
            .iter()
            .map(|&p| self.generate_channel(observing_bs, p, realization))
            .collect::<Result<Vec<_>>>()?;
        let center = self.generate_channel(observing_bs, self.partition.grid(grid.id).center, 0)?;
        Ok(GridSamples {
            positions,
            samples,
            center,
        })
    }

    /// Stable 64-bit fingerprint of the configuration.
    pub fn config_hash(&self) -> u64 {
        config_hash(&self.config)
    }
}

pub fn config_hash(config: &ScenarioConfig) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(format!("{config:?}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// BS sites on a regular `L`-gon with side `isd`, centered at the origin.
fn bs_layout(cells: usize, isd: f64) -> Vec<Position> {
    match cells {
        1 => vec![Position::new(0.0, 0.0)],
        _ => {
            let radius = isd / (2.0 * (PI / cells as f64).sin());
            (0..cells)
                .map(|l| {
                    let a = PI / 2.0 + 2.0 * PI * l as f64 / cells as f64;
                    Position::new(radius * a.cos(), radius * a.sin())
                })
                .collect()
        }
    }
}

fn sq_dist(a: &Position, b: &Position) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

/// `CN(0, 1)` sample.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Order-sensitive 64-bit mixing of seed words (splitmix64 finalizer).
pub(crate) fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::correlation;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            users_per_cell: 10,
            kbar: 2,
            kprime: 4,
            cell_radius: 50.0,
            inter_site_distance: 80.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn boresight_response_is_cophased() {
        let a = array_response(4, 2, 0.0, 0.0, 0, 0.05).unwrap();
        assert_eq!(a.len(), 16);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        for z in &a.as_slice()[..8] {
            assert!((z - Complex64::new(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-12);
        }
        assert!(a.as_slice()[8..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn distinct_directions_are_not_collinear() {
        let a = array_response(4, 1, 0.0, 0.0, 0, 0.05).unwrap();
        let b = array_response(4, 1, PI / 3.0, 0.0, 0, 0.05).unwrap();
        assert!(correlation(&a, &b).unwrap() < 1.0 - 1e-6);
        assert!((b.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minimal_array_has_one_port_per_polarization() {
        let a0 = array_response(1, 1, 0.3, -0.2, 0, 0.05).unwrap();
        let a1 = array_response(1, 1, 0.3, -0.2, 1, 0.05).unwrap();
        assert_eq!(a0.len(), 2);
        assert!(a0.as_slice()[0].norm() > 0.0 && a0.as_slice()[1].norm() == 0.0);
        assert!(a1.as_slice()[1].norm() > 0.0 && a1.as_slice()[0].norm() == 0.0);
        assert!(array_response(1, 1, 0.0, 0.0, 2, 0.05).is_err());
        assert!(array_response(0, 1, 0.0, 0.0, 0, 0.05).is_err());
    }

    #[test]
    fn path_loss_monotone_and_closed_form() {
        let pl = PathLoss::from_params(&ChannelParams::default());
        let a = pl.loss_db(100.0, 6.7e9, 25.0, 1.5).unwrap();
        let b = pl.loss_db(1000.0, 6.7e9, 25.0, 1.5).unwrap();
        assert!((b - a - 10.0 * 3.908).abs() < 1e-9);
        assert!(pl.loss_db(200.0, 6.7e9, 25.0, 1.5).unwrap() > a);
        assert_eq!(a, pl.loss_db(100.0, 6.7e9, 25.0, 1.5).unwrap());
        assert!(pl.loss_db(0.0, 6.7e9, 25.0, 1.5).is_err());
        assert!(path_loss_db(-1.0, 6.7e9, 25.0, 1.5).is_err());
    }

    #[test]
    fn single_grid_degenerate_layout() {
        let cfg = ScenarioConfig {
            cells: 1,
            users_per_cell: 1,
            kbar: 1,
            kprime: 1,
            cell_radius: 10.0,
            grid_edge: 20.0,
            ..ScenarioConfig::default()
        };
        let sc = Scenario::build(cfg).unwrap();
        assert_eq!(sc.partition.len(), 1);
        assert_eq!(sc.partition.grid(0).index, GridIndex { cell: 0, id: 0 });
        assert_eq!(sc.partition.grid(0).center, Position::new(0.0, 0.0));
    }

    #[test]
    fn rejects_infeasible_configs() {
        let cfg = ScenarioConfig {
            kbar: 11,
            kprime: 20,
            ..ScenarioConfig::default()
        };
        assert!(matches!(Scenario::build(cfg), Err(Error::InvalidConfig(_))));
        let cfg = ScenarioConfig {
            grid_edge: 200.0,
            ..ScenarioConfig::default()
        };
        assert!(Scenario::build(cfg).is_err());
    }

    #[test]
    fn three_cell_partition_is_nearest_bs() {
        let sc = Scenario::build(small_config()).unwrap();
        assert_eq!(sc.bs_positions.len(), 3);
        for g in sc.partition.grids() {
            let (cell, d) = nearest_bs(&sc.bs_positions, &g.center);
            assert_eq!(cell, g.index.cell);
            assert!(d <= sc.config.cell_radius);
            assert_eq!(sc.lookup(g.center).unwrap(), g.index);
        }
        for l in 0..3 {
            assert!(sc.partition.grids_of_cell(l).count() >= sc.config.users_per_cell);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = Scenario::build(small_config()).unwrap();
        let b = Scenario::build(small_config()).unwrap();
        assert_eq!(a.partition.len(), b.partition.len());
        assert_eq!(a.scatterers.static_clusters.len(), b.scatterers.static_clusters.len());
        for (x, y) in a.scatterers.static_clusters.iter().zip(&b.scatterers.static_clusters) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.gains, y.gains);
        }
        assert_eq!(
            a.scatterers.affected_grids().collect::<Vec<_>>(),
            b.scatterers.affected_grids().collect::<Vec<_>>()
        );
    }

    #[test]
    fn affected_fraction_matches_config() {
        let sc = Scenario::build(small_config()).unwrap();
        let expected = (0.3 * sc.partition.len() as f64).round() as usize;
        assert_eq!(sc.scatterers.dynamic_count(), expected);
    }

    #[test]
    fn half_open_lookup_and_out_of_cluster() {
        let sc = Scenario::build(small_config()).unwrap();
        let g = sc.partition.grid(sc.partition.len() / 2).clone();
        let e = sc.partition.edge;
        let lower = Position::new(g.center.x - e / 2.0 + 1e-9, g.center.y - e / 2.0 + 1e-9);
        assert_eq!(sc.lookup(lower).unwrap(), g.index);
        let far = Position::new(1e5, 1e5);
        assert!(matches!(sc.lookup(far), Err(Error::OutOfCluster { .. })));
        assert!(sc.generate_channel(0, far, 0).is_err());
    }

    #[test]
    fn spatial_consistency_and_jitter() {
        let sc = Scenario::build(small_config()).unwrap();
        let stat = sc
            .partition
            .grids()
            .iter()
            .find(|g| !sc.scatterers.is_dynamic(g.index.id))
            .unwrap();
        let dynm = sc
            .partition
            .grids()
            .iter()
            .find(|g| sc.scatterers.is_dynamic(g.index.id))
            .unwrap();
        let a = sc.generate_channel(0, stat.center, 3).unwrap();
        let b = sc.generate_channel(0, stat.center, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        assert!(a.norm() > 0.0);
        let c = sc.generate_channel(0, dynm.center, 3).unwrap();
        let d = sc.generate_channel(0, dynm.center, 4).unwrap();
        assert_ne!(c, d);
        assert!(correlation(&c, &d).unwrap() < 1.0);
    }

    #[test]
    fn grid_sampling_contained_and_deterministic() {
        let sc = Scenario::build(small_config()).unwrap();
        let g = sc.partition.grid(7).index;
        let center = sc.partition.grid(7).center;
        let p = sc.sample_positions(g, 9);
        assert_eq!(p, sc.sample_positions(g, 9));
        assert_eq!(&sc.sample_positions(g, 18)[..9], &p[..]);
        for q in &p {
            assert!((q.x - center.x).abs() <= 2.5 && (q.y - center.y).abs() <= 2.5);
            assert_eq!(sc.lookup(*q).unwrap(), g);
        }
        let one = sc.sample_grid(1, g, 1, 0).unwrap();
        assert_eq!(one.samples.len(), 1);
        assert_eq!(one.center, sc.generate_channel(1, center, 0).unwrap());
        assert!(sc.sample_grid(1, g, 0, 0).is_err());
    }
}
