use std::fmt;
use std::str::FromStr;

use crate::geometry::{GridIndex, Position};

/// One user of the coordination cluster. `id` is the global index used by
/// every CSI table; ties in every argmax resolve to the lowest `id`.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRecord {
    pub id: usize,
    pub cell: usize,
    pub position: Position,
    pub grid: GridIndex,
}

/// Stage-1 output for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    pub cell: usize,
    pub members: Vec<usize>,
    /// Parallel to `members`: set for users added by the pool-exhaustion refill.
    pub fallback: Vec<bool>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionStep {
    /// Zero-based slot index.
    pub iteration: usize,
    pub cell: usize,
    pub user: usize,
    /// Value of the criterion that picked the user (scheduler specific).
    pub metric: f64,
    pub fallback: bool,
}

/// Per-cell scheduled users plus the order in which they were picked.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserGroup {
    pub cells: Vec<Vec<usize>>,
    pub steps: Vec<SelectionStep>,
}

impl UserGroup {
    pub fn empty(cells: usize) -> Self {
        Self {
            cells: vec![Vec::new(); cells],
            steps: Vec::new(),
        }
    }

    pub fn from_cells(cells: Vec<Vec<usize>>) -> Self {
        Self {
            cells,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, step: SelectionStep) {
        self.cells[step.cell].push(step.user);
        self.steps.push(step);
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// `(cell, user)` pairs in cell order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(l, us)| us.iter().map(move |&u| (l, u)))
    }

    /// Per-cell member sets, each sorted, for order-insensitive comparison.
    pub fn sorted_sets(&self) -> Vec<Vec<usize>> {
        self.cells
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort_unstable();
                c
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FirstStage {
    Aes,
    Gis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Greedy,
    Random,
    Sus,
    TwoStageAes,
    TwoStageGis,
    RobustAes,
    RobustGis,
    BruteForce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Greedy,
        Algorithm::Random,
        Algorithm::Sus,
        Algorithm::TwoStageAes,
        Algorithm::TwoStageGis,
        Algorithm::RobustAes,
        Algorithm::RobustGis,
        Algorithm::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Random => "random",
            Algorithm::Sus => "sus",
            Algorithm::TwoStageAes => "two_stage_aes",
            Algorithm::TwoStageGis => "two_stage_gis",
            Algorithm::RobustAes => "robust_aes",
            Algorithm::RobustGis => "robust_gis",
            Algorithm::BruteForce => "brute_force",
        }
    }

    pub fn first_stage(self) -> Option<FirstStage> {
        match self {
            Algorithm::TwoStageAes | Algorithm::RobustAes => Some(FirstStage::Aes),
            Algorithm::TwoStageGis | Algorithm::RobustGis => Some(FirstStage::Gis),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Lowest-id argmax over `(id, value)` pairs; `None` for an empty input.
pub(crate) fn argmax_by_id<I: IntoIterator<Item = (usize, f64)>>(items: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (id, v) in items {
        best = match best {
            None => Some((id, v)),
            Some((bid, bv)) if v > bv || (v == bv && id < bid) => Some((id, v)),
            keep => keep,
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("zf".parse::<Algorithm>().is_err());
    }

    #[test]
    fn argmax_prefers_lowest_id_on_ties() {
        assert_eq!(argmax_by_id([(4, 1.0), (2, 1.0), (3, 0.5)]), Some((2, 1.0)));
        assert_eq!(argmax_by_id([(4, 1.0), (2, 0.9)]), Some((4, 1.0)));
        assert_eq!(argmax_by_id(std::iter::empty()), None);
    }
}
