//! Scheduler-side CSI: instantaneous channel tables and the fused
//! map/instantaneous view every scheduler consumes.

use crate::channel::{correlation, ChannelVector};
use crate::ckm::UsCkm;
use crate::error::{Error, Result};

use super::types::UserRecord;

/// Instantaneous channels indexed `[observing BS][user id]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMap {
    per_bs: Vec<Vec<ChannelVector>>,
}

impl ChannelMap {
    pub fn new(per_bs: Vec<Vec<ChannelVector>>) -> Self {
        Self { per_bs }
    }

    pub fn cells(&self) -> usize {
        self.per_bs.len()
    }

    pub fn users(&self) -> usize {
        self.per_bs.first().map_or(0, Vec::len)
    }

    pub fn get(&self, bs: usize, user: usize) -> Result<&ChannelVector> {
        self.per_bs
            .get(bs)
            .and_then(|row| row.get(user))
            .ok_or(Error::MissingChannel { user, bs })
    }

    pub fn bs(&self, bs: usize) -> &[ChannelVector] {
        &self.per_bs[bs]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiSource {
    Scsi,
    Icsi,
}

impl std::fmt::Display for CsiSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CsiSource::Scsi => "scsi",
            CsiSource::Icsi => "icsi",
        })
    }
}

/// Gains and pairwise correlations per observing BS.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveCsi {
    users: usize,
    gains: Vec<Vec<f64>>,
    corr: Vec<Vec<f64>>,
    source: Vec<Vec<CsiSource>>,
    acquisitions: usize,
}

impl EffectiveCsi {
    /// Zero gains, identity correlations. Used to set up instances by hand.
    pub fn manual(cells: usize, users: usize) -> Self {
        let mut corr = vec![0.0; users * users];
        for u in 0..users {
            corr[u * users + u] = 1.0;
        }
        Self {
            users,
            gains: vec![vec![0.0; users]; cells],
            corr: vec![corr; cells],
            source: vec![vec![CsiSource::Scsi; users]; cells],
            acquisitions: 0,
        }
    }

    pub fn set_gain(&mut self, bs: usize, user: usize, gain: f64) -> &mut Self {
        self.gains[bs][user] = gain;
        self
    }

    pub fn set_corr(&mut self, bs: usize, a: usize, b: usize, rho: f64) -> &mut Self {
        let n = self.users;
        self.corr[bs][a * n + b] = rho;
        self.corr[bs][b * n + a] = rho;
        self
    }

    /// Pure map-based view: `‖h‖² ← ε` and `ρ ← ρ̄` of the users' grids.
    pub fn scsi(ckm: &UsCkm, users: &[UserRecord]) -> Self {
        let cells = ckm.cells();
        let n = users.len();
        let mut out = Self::manual(cells, n);
        for l in 0..cells {
            for u in users {
                out.gains[l][u.id] = ckm.gain(l, u.grid.id);
            }
            for a in users {
                for b in users {
                    if a.id < b.id {
                        let rho = ckm.corr(l, a.grid.id, b.grid.id);
                        out.set_corr(l, a.id, b.id, rho);
                    }
                }
            }
        }
        out
    }

    /// Pure instantaneous view from true channels.
    pub fn icsi(channels: &ChannelMap, users: &[UserRecord]) -> Result<Self> {
        let cells = channels.cells();
        let mut out = Self::manual(cells, users.len());
        for l in 0..cells {
            let hs = users
                .iter()
                .map(|u| channels.get(l, u.id))
                .collect::<Result<Vec<_>>>()?;
            for (a, ha) in users.iter().zip(&hs) {
                out.gains[l][a.id] = ha.norm_sqr();
                out.source[l][a.id] = CsiSource::Icsi;
            }
            out.fill_vector_correlations(l, users, &hs, |_, _| None)?;
        }
        out.acquisitions = cells * users.len();
        Ok(out)
    }

    /// Fused view: map entries for reliable grids, instantaneous channels
    /// (fetched through `provider`, once per `(BS, user)`) for unreliable ones.
    /// Correlations come from the fused vectors; pairs where both sides are
    /// map entries read the map's correlation table directly.
    pub fn fuse<F>(ckm: &UsCkm, users: &[UserRecord], mut provider: F) -> Result<Self>
    where
        F: FnMut(usize, &UserRecord) -> Result<ChannelVector>,
    {
        let cells = ckm.cells();
        let mut out = Self::manual(cells, users.len());
        for l in 0..cells {
            let mut fetched: Vec<Option<ChannelVector>> = vec![None; users.len()];
            for (i, u) in users.iter().enumerate() {
                let stats = ckm.stats(l, u.grid.id);
                if stats.reliable {
                    out.gains[l][u.id] = stats.epsilon;
                    out.source[l][u.id] = CsiSource::Scsi;
                } else {
                    let h = provider(l, u)?;
                    out.gains[l][u.id] = h.norm_sqr();
                    out.source[l][u.id] = CsiSource::Icsi;
                    out.acquisitions += 1;
                    fetched[i] = Some(h);
                }
            }
            let fused: Vec<&ChannelVector> = users
                .iter()
                .zip(&fetched)
                .map(|(u, f)| f.as_ref().unwrap_or(&ckm.stats(l, u.grid.id).h_bar))
                .collect();
            out.fill_vector_correlations(l, users, &fused, |a, b| {
                (fetched[a].is_none() && fetched[b].is_none()).then(|| ckm.corr(l, users[a].grid.id, users[b].grid.id))
            })?;
        }
        Ok(out)
    }

    fn fill_vector_correlations(
        &mut self,
        bs: usize,
        users: &[UserRecord],
        vectors: &[&ChannelVector],
        table: impl Fn(usize, usize) -> Option<f64>,
    ) -> Result<()> {
        for i in 0..users.len() {
            for j in i + 1..users.len() {
                let rho = match table(i, j) {
                    Some(r) => r,
                    None => correlation(vectors[i], vectors[j])?,
                };
                self.set_corr(bs, users[i].id, users[j].id, rho);
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.gains.len()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn gain(&self, bs: usize, user: usize) -> f64 {
        self.gains[bs][user]
    }

    pub fn corr(&self, bs: usize, a: usize, b: usize) -> f64 {
        self.corr[bs][a * self.users + b]
    }

    pub fn source(&self, bs: usize, user: usize) -> CsiSource {
        self.source[bs][user]
    }

    /// Number of instantaneous channels that had to be acquired.
    pub fn acquisitions(&self) -> usize {
        self.acquisitions
    }
}
