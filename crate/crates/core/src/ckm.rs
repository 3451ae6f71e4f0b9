//! Grid-based channel knowledge map for scheduling.
//!
//! For every observing BS the map keeps, per grid, the statistical channel
//! `h̄` (mean of the sampled channels), the statistical gain `ε` (mean squared
//! norm), the spread `σ` of sample-to-center correlations and the resulting
//! reliability flag. A dense symmetric table stores the correlation between
//! the statistical channels of every grid pair.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{correlation, ChannelVector};
use crate::error::{Error, Result};
use crate::geometry::{Grid, GridIndex, GridPartition, Position, Scenario};

/// Entrywise mean of the sampled channels.
pub fn statistical_channel(samples: &[ChannelVector]) -> Result<ChannelVector> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let n = first.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for s in samples {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.len(),
            });
        }
        for (a, z) in acc.iter_mut().zip(s.as_slice()) {
            *a += z;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(ChannelVector::new(acc.into_iter().map(|z| z * inv).collect()))
}

/// Mean squared norm `(1/S)·Σ‖h_s‖²`.
pub fn statistical_gain(samples: &[ChannelVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().map(ChannelVector::norm_sqr).sum::<f64>() / samples.len() as f64)
}

/// Correlation between two statistical channels.
pub fn statistical_correlation(a: &ChannelVector, b: &ChannelVector) -> Result<f64> {
    correlation(a, b)
}

/// Correlation between one sampling point and the grid's center channel.
pub fn sample_center_correlation(sample: &ChannelVector, center: &ChannelVector) -> Result<f64> {
    correlation(sample, center)
}

/// Population variance (divisor `S`) of the sample-to-center correlations.
pub fn grid_variance(sample_corrs: &[f64]) -> Result<f64> {
    if sample_corrs.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = sample_corrs.len() as f64;
    let mean = sample_corrs.iter().sum::<f64>() / n;
    Ok(sample_corrs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n)
}

/// `true` (reliable) iff `sigma <= delta`.
pub fn reliability_indicator(sigma: f64, delta: f64) -> bool {
    sigma <= delta
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridStats {
    pub h_bar: ChannelVector,
    pub epsilon: f64,
    pub sigma: f64,
    pub reliable: bool,
}

/// Symmetric matrix with unit diagonal, stored as its strict upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    n: usize,
    upper: Vec<f64>,
}

impl CorrelationTable {
    fn offset(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b < self.n);
        a * self.n - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => self.upper[self.offset(a, b)],
            std::cmp::Ordering::Greater => self.upper[self.offset(b, a)],
        }
    }

    /// Iterates `(a, b, rho)` over `a < b`.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |a| (a + 1..self.n).map(move |b| (a, b, self.get(a, b))))
    }

    fn from_channels(channels: &[&ChannelVector]) -> Result<Self> {
        let n = channels.len();
        let units = channels
            .iter()
            .map(|h| {
                let norm = h.norm();
                if norm == 0.0 {
                    Err(Error::ZeroNorm)
                } else {
                    Ok(h.as_slice().iter().map(|z| z / norm).collect::<Vec<_>>())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let upper = (0..n)
            .into_par_iter()
            .flat_map_iter(|a| {
                let ua = &units[a];
                let units = &units;
                (a + 1..n).map(move |b| {
                    let dot: Complex64 = ua.iter().zip(&units[b]).map(|(x, y)| x.conj() * y).sum();
                    dot.norm().min(1.0)
                })
            })
            .collect();
        Ok(Self { n, upper })
    }
}

/// Map entries seen by one BS.
#[derive(Clone, Debug, PartialEq)]
pub struct BsMap {
    pub stats: Vec<GridStats>,
    pub corr: CorrelationTable,
}

#[derive(Clone, Debug)]
pub struct UsCkm {
    partition: GridPartition,
    scenario_hash: u64,
    samples: usize,
    delta: f64,
    maps: Vec<BsMap>,
}

impl PartialEq for UsCkm {
    fn eq(&self, other: &Self) -> bool {
        self.scenario_hash == other.scenario_hash
            && self.samples == other.samples
            && self.delta.to_bits() == other.delta.to_bits()
            && self.maps == other.maps
            && self.partition.len() == other.partition.len()
    }
}

/// Samples every `(observing BS, grid)` pair of the scenario and assembles the map.
pub fn build_ckm(scenario: &Scenario, samples: usize, delta: f64) -> Result<UsCkm> {
    if samples == 0 {
        return Err(Error::EmptySamples);
    }
    let grids = scenario.partition.grids();
    let maps = (0..scenario.cells())
        .map(|l| {
            let stats = grids
                .par_iter()
                .map(|g| grid_stats(scenario, l, g.index, samples, delta))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ChannelVector> = stats.iter().map(|s| &s.h_bar).collect();
            let corr = CorrelationTable::from_channels(&refs)?;
            Ok(BsMap { stats, corr })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UsCkm {
        partition: scenario.partition.clone(),
        scenario_hash: scenario.config_hash(),
        samples,
        delta,
        maps,
    })
}

fn grid_stats(scenario: &Scenario, bs: usize, grid: GridIndex, samples: usize, delta: f64) -> Result<GridStats> {
    let draw = scenario.sample_grid(bs, grid, samples, 0)?;
    let h_bar = statistical_channel(&draw.samples)?;
    let epsilon = statistical_gain(&draw.samples)?;
    let corrs = draw
        .samples
        .iter()
        .map(|s| sample_center_correlation(s, &draw.center))
        .collect::<Result<Vec<_>>>()?;
    let sigma = grid_variance(&corrs)?;
    Ok(GridStats {
        h_bar,
        epsilon,
        sigma,
        reliable: reliability_indicator(sigma, delta),
    })
}

impl UsCkm {
    pub fn cells(&self) -> usize {
        self.maps.len()
    }

    pub fn grid_count(&self) -> usize {
        self.partition.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scenario_hash(&self) -> u64 {
        self.scenario_hash
    }

    pub fn partition(&self) -> &GridPartition {
        &self.partition
    }

    pub fn bs_map(&self, bs: usize) -> &BsMap {
        &self.maps[bs]
    }

    pub fn stats(&self, bs: usize, grid: usize) -> &GridStats {
        &self.maps[bs].stats[grid]
    }

    pub fn gain(&self, bs: usize, grid: usize) -> f64 {
        self.maps[bs].stats[grid].epsilon
    }

    pub fn corr(&self, bs: usize, a: usize, b: usize) -> f64 {
        self.maps[bs].corr.get(a, b)
    }

    pub fn is_reliable(&self, bs: usize, grid: usize) -> bool {
        self.maps[bs].stats[grid].reliable
    }

    pub fn lookup_grid(&self, position: Position) -> Result<GridIndex> {
        self.partition.lookup(position)
    }

    /// Re-flags every entry against a new threshold.
    pub fn set_delta(&mut self, delta: f64) {
        self.delta = delta;
        for m in &mut self.maps {
            for s in &mut m.stats {
                s.reliable = reliability_indicator(s.sigma, delta);
            }
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.set_delta(delta);
        self
    }

    /// Threshold making `round(eta · entries)` of the `(BS, grid)` entries
    /// reliable. Below every `σ` (possibly negative) when that count is zero.
    pub fn delta_for_fraction(&self, eta: f64) -> f64 {
        let mut sigmas: Vec<f64> = self.maps.iter().flat_map(|m| m.stats.iter().map(|s| s.sigma)).collect();
        if sigmas.is_empty() {
            return 0.0;
        }
        sigmas.sort_by(f64::total_cmp);
        let k = (eta.clamp(0.0, 1.0) * sigmas.len() as f64).round() as usize;
        if k == 0 {
            let min = sigmas[0];
            if min > 0.0 {
                min / 2.0
            } else {
                -1.0
            }
        } else {
            sigmas[k - 1]
        }
    }

    /// Fraction of `(BS, grid)` entries flagged reliable.
    pub fn realized_eta(&self) -> f64 {
        let total: usize = self.maps.iter().map(|m| m.stats.len()).sum();
        if total == 0 {
            return 0.0;
        }
        let reliable: usize = self
            .maps
            .iter()
            .map(|m| m.stats.iter().filter(|s| s.reliable).count())
            .sum();
        reliable as f64 / total as f64
    }

    /// Writes `bs{l}_gains.csv` and `bs{l}_corr.csv` for every observing BS.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (l, m) in self.maps.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("bs{l}_gains.csv")))?;
            w.write_record(["grid_id", "center_x", "center_y", "epsilon", "sigma", "reliable"])?;
            for (g, s) in self.partition.grids().iter().zip(&m.stats) {
                w.write_record([
                    g.index.id.to_string(),
                    g.center.x.to_string(),
                    g.center.y.to_string(),
                    s.epsilon.to_string(),
                    s.sigma.to_string(),
                    u8::from(s.reliable).to_string(),
                ])?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_path(dir.join(format!("bs{l}_corr.csv")))?;
            w.write_record(["grid_a", "grid_b", "rho"])?;
            for (a, b, rho) in m.corr.upper_triangle() {
                w.write_record([a.to_string(), b.to_string(), rho.to_string()])?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Binary layout, little endian:
    ///
    /// ```text
    /// magic "USCKM\0" | version u16 | scenario_hash u64
    /// cells u32 | grids u32 | antennas u32 | samples u32 | delta f64
    /// origin_x f64 | origin_y f64 | edge f64 | nx u32 | ny u32
    /// per grid: cell u32 | ix u32 | iy u32 | center_x f64 | center_y f64
    /// per BS, per grid: h_bar (re f64, im f64)×antennas | epsilon f64 | sigma f64 | reliable u8
    /// per BS: strict upper correlation triangle, f64 row-major
    /// ```
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let antennas = self
            .maps
            .first()
            .and_then(|m| m.stats.first())
            .map_or(0, |s| s.h_bar.len());
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.scenario_hash.to_le_bytes())?;
        for v in [self.cells(), self.grid_count(), antennas, self.samples] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let p = &self.partition;
        for v in [self.delta, p.origin.x, p.origin.y, p.edge] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(p.nx as u32).to_le_bytes())?;
        w.write_all(&(p.ny as u32).to_le_bytes())?;
        for g in p.grids() {
            for v in [g.index.cell, g.ix, g.iy] {
                w.write_all(&(v as u32).to_le_bytes())?;
            }
            w.write_all(&g.center.x.to_le_bytes())?;
            w.write_all(&g.center.y.to_le_bytes())?;
        }
        for m in &self.maps {
            for s in &m.stats {
                for z in s.h_bar.as_slice() {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
                w.write_all(&s.epsilon.to_le_bytes())?;
                w.write_all(&s.sigma.to_le_bytes())?;
                w.write_all(&[u8::from(s.reliable)])?;
            }
        }
        for m in &self.maps {
            for v in &m.corr.upper {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let scenario_hash = u64::from_le_bytes(read_array(r)?);
        let cells = read_u32(r)?;
        let n_grids = read_u32(r)?;
        let antennas = read_u32(r)?;
        let samples = read_u32(r)?;
        let delta = read_f64(r)?;
        let origin = Position::new(read_f64(r)?, read_f64(r)?);
        let edge = read_f64(r)?;
        let nx = read_u32(r)?;
        let ny = read_u32(r)?;
        if nx.checked_mul(ny).is_none() || n_grids > nx * ny {
            return Err(Error::Format("lattice size".into()));
        }
        let mut grids = Vec::with_capacity(n_grids);
        for id in 0..n_grids {
            let cell = read_u32(r)?;
            let ix = read_u32(r)?;
            let iy = read_u32(r)?;
            let center = Position::new(read_f64(r)?, read_f64(r)?);
            if cell >= cells {
                return Err(Error::Format(format!("grid {id} serving cell {cell} out of range")));
            }
            grids.push(Grid {
                index: GridIndex { cell, id },
                center,
                ix,
                iy,
            });
        }
        let partition = GridPartition::from_parts(origin, edge, nx, ny, grids)?;
        let mut stats_per_bs = Vec::with_capacity(cells);
        for _ in 0..cells {
            let mut stats = Vec::with_capacity(n_grids);
            for _ in 0..n_grids {
                let mut h = Vec::with_capacity(antennas);
                for _ in 0..antennas {
                    h.push(Complex64::new(read_f64(r)?, read_f64(r)?));
                }
                let epsilon = read_f64(r)?;
                let sigma = read_f64(r)?;
                let [flag] = read_array::<1, _>(r)?;
                stats.push(GridStats {
                    h_bar: ChannelVector::new(h),
                    epsilon,
                    sigma,
                    reliable: flag != 0,
                });
            }
            stats_per_bs.push(stats);
        }
        let pairs = n_grids * n_grids.saturating_sub(1) / 2;
        let mut maps = Vec::with_capacity(cells);
        for stats in stats_per_bs {
            let mut upper = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                upper.push(read_f64(r)?);
            }
            maps.push(BsMap {
                stats,
                corr: CorrelationTable { n: n_grids, upper },
            });
        }
        Ok(Self {
            partition,
            scenario_hash,
            samples,
            delta,
            maps,
        })
    }
}

const MAGIC: &[u8; 6] = b"USCKM\0";
const FORMAT_VERSION: u16 = 1;

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(read_array(r)?) as usize)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScenarioConfig;

    fn cv(v: &[f64]) -> ChannelVector {
        ChannelVector::from_real(v)
    }

    #[test]
    fn statistical_channel_examples() {
        let v = cv(&[1.0, -2.0]);
        assert_eq!(statistical_channel(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert_eq!(
            statistical_channel(&[v.clone(), v.scaled(-1.0)]).unwrap(),
            ChannelVector::zeros(2)
        );
        assert_eq!(
            statistical_channel(&[cv(&[1.0, 0.0]), cv(&[0.0, 1.0])]).unwrap(),
            cv(&[0.5, 0.5])
        );
        assert!(matches!(statistical_channel(&[]), Err(Error::EmptySamples)));
        assert!(statistical_channel(&[cv(&[1.0]), cv(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn statistical_gain_examples() {
        assert_eq!(statistical_gain(&[cv(&[1.0, 0.0]), cv(&[0.0, 1.0])]).unwrap(), 1.0);
        assert_eq!(statistical_gain(&vec![cv(&[0.6, 0.8]); 4]).unwrap(), 1.0);
        assert_eq!(statistical_gain(&[cv(&[2.0, 0.0]), cv(&[0.0, 0.0])]).unwrap(), 2.0);
        assert!(statistical_gain(&[]).is_err());
    }

    #[test]
    fn correlation_examples() {
        let a = cv(&[1.0, 0.0]);
        assert!((statistical_correlation(&cv(&[1.0, 2.0]), &cv(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(statistical_correlation(&a, &cv(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((statistical_correlation(&a, &cv(&[1.0, 1.0])).unwrap() - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!(matches!(
            statistical_correlation(&a, &cv(&[0.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
        assert_eq!(sample_center_correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(sample_center_correlation(&a, &cv(&[0.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn variance_examples() {
        assert!(grid_variance(&[0.4; 7]).unwrap() < 1e-30);
        assert_eq!(grid_variance(&[0.5; 4]).unwrap(), 0.0);
        assert!((grid_variance(&[0.9, 0.7]).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(grid_variance(&[1.0, 0.0]).unwrap(), 0.25);
        assert!(grid_variance(&[]).is_err());
    }

    #[test]
    fn reliability_boundary_is_inclusive() {
        assert!(reliability_indicator(0.0, 0.0));
        assert!(reliability_indicator(0.0, 0.3));
        assert!(!reliability_indicator(0.02, 0.01));
        assert!(reliability_indicator(0.01, 0.01));
    }

    #[test]
    fn packed_table_indexing() {
        let chans = [cv(&[1.0, 0.0]), cv(&[1.0, 1.0]), cv(&[0.0, 1.0]), cv(&[3.0, -1.0])];
        let refs: Vec<&ChannelVector> = chans.iter().collect();
        let t = CorrelationTable::from_channels(&refs).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b {
                    1.0
                } else {
                    correlation(&chans[a], &chans[b]).unwrap()
                };
                assert!((t.get(a, b) - expected).abs() < 1e-12, "{a},{b}");
                assert_eq!(t.get(a, b), t.get(b, a));
            }
        }
        assert_eq!(t.upper_triangle().count(), 6);
    }

    fn single_grid_scenario() -> Scenario {
        Scenario::build(ScenarioConfig {
            cells: 1,
            users_per_cell: 1,
            kbar: 1,
            kprime: 1,
            cell_radius: 10.0,
            grid_edge: 20.0,
            ..ScenarioConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_grid_map() {
        let sc = single_grid_scenario();
        let ckm = build_ckm(&sc, 4, 1.0).unwrap();
        assert_eq!(ckm.grid_count(), 1);
        assert_eq!(ckm.corr(0, 0, 0), 1.0);
        assert_eq!(ckm.bs_map(0).corr.upper_triangle().count(), 0);
        assert_eq!(ckm.lookup_grid(Position::new(0.0, 0.0)).unwrap().id, 0);
        assert!(ckm.lookup_grid(Position::new(50.0, 0.0)).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let sc = Scenario::build(ScenarioConfig {
            users_per_cell: 5,
            kbar: 1,
            kprime: 2,
            cell_radius: 20.0,
            inter_site_distance: 35.0,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let ckm = build_ckm(&sc, 3, 0.001).unwrap();
        let mut buf = Vec::new();
        ckm.write_to(&mut buf).unwrap();
        let back = UsCkm::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ckm);
        assert_eq!(back.partition().grids().len(), ckm.grid_count());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        buf[0] = b'X';
        assert!(UsCkm::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip_and_csv_dump() {
        let ckm = build_ckm(&single_grid_scenario(), 4, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.bin");
        ckm.save(&path).unwrap();
        assert_eq!(UsCkm::load(&path).unwrap(), ckm);

        ckm.write_csv(&dir.path().join("csv")).unwrap();
        let gains = std::fs::read_to_string(dir.path().join("csv/bs0_gains.csv")).unwrap();
        let mut lines = gains.lines();
        assert_eq!(lines.next(), Some("grid_id,center_x,center_y,epsilon,sigma,reliable"));
        assert_eq!(lines.count(), 1);
        let corr = std::fs::read_to_string(dir.path().join("csv/bs0_corr.csv")).unwrap();
        assert_eq!(corr.trim(), "grid_a,grid_b,rho");
    }

    #[test]
    fn delta_for_fraction_hits_requested_count() {
        let sc = Scenario::build(ScenarioConfig {
            users_per_cell: 5,
            kbar: 1,
            kprime: 2,
            cell_radius: 20.0,
            inter_site_distance: 35.0,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let ckm = build_ckm(&sc, 6, 0.0).unwrap();
        let entries = ckm.cells() * ckm.grid_count();
        for eta in [0.0, 0.25, 0.7, 1.0] {
            let d = ckm.delta_for_fraction(eta);
            let m = ckm.clone().with_delta(d);
            let expected = (eta * entries as f64).round() / entries as f64;
            assert!(
                (m.realized_eta() - expected).abs() < 0.02,
                "eta {eta}: {}",
                m.realized_eta()
            );
        }
        assert_eq!(ckm.clone().with_delta(ckm.delta_for_fraction(1.0)).realized_eta(), 1.0);
        assert_eq!(ckm.clone().with_delta(ckm.delta_for_fraction(0.0)).realized_eta(), 0.0);
    }
}
