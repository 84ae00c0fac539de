use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};
use crate::model::Trajectory;

/// Layout of the cost parameter vector: one coordinate per `(h, s, a)`, or per `(s, a)`
/// when costs are shared across steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub stationary: bool,
}

impl CoordinateMap {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, stationary: bool) -> Self {
        CoordinateMap {
            num_states,
            num_actions,
            horizon,
            stationary,
        }
    }

    pub fn for_spec(spec: &crate::model::TerMdpSpec) -> Self {
        CoordinateMap::new(spec.num_states(), spec.num_actions(), spec.horizon(), spec.stationary())
    }

    pub fn dim(&self) -> usize {
        let layers = if self.stationary { 1 } else { self.horizon };
        layers * self.num_states * self.num_actions
    }

    /// Matches `TerMdpSpec::index`, so cost tables and parameter vectors line up.
    #[inline]
    pub fn coord(&self, h: usize, s: usize, a: usize) -> usize {
        let layer = if self.stationary { 0 } else { h };
        (layer * self.num_states + s) * self.num_actions + a
    }

    /// `(h, s, a)` of a coordinate; `h` is 0 for stationary maps.
    pub fn triple(&self, coord: usize) -> (usize, usize, usize) {
        let a = coord % self.num_actions;
        let rest = coord / self.num_actions;
        (rest / self.num_states, rest % self.num_states, a)
    }
}

/// Sparse design vector of one likelihood term: `(coordinate, multiplicity)` sorted by
/// coordinate. Multiplicities exceed one only when a stationary coordinate repeats
/// inside a window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisitVector {
    entries: Vec<(usize, u32)>,
}

impl VisitVector {
    pub fn from_coords(coords: impl IntoIterator<Item = usize>) -> Self {
        let mut raw: Vec<usize> = coords.into_iter().collect();
        raw.sort_unstable();
        let mut entries: Vec<(usize, u32)> = Vec::with_capacity(raw.len());
        for c in raw {
            match entries.last_mut() {
                Some((last, m)) if *last == c => *m += 1,
                _ => entries.push((c, 1)),
            }
        }
        VisitVector { entries }
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn ones(&self) -> usize {
        self.entries.iter().map(|(_, m)| *m as usize).sum()
    }

    #[inline]
    pub fn dot(&self, c: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, m)| m as f64 * c[i]).sum()
    }
}

/// A distinct design vector with its label tallies; the likelihood only depends on these.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRow {
    pub visits: VisitVector,
    pub positives: f64,
    pub negatives: f64,
}

/// Labeled termination signals. Label 1 marks the step at which the terminator fired.
#[derive(Debug, Clone)]
pub struct TerminationDataset {
    coords: CoordinateMap,
    window: usize,
    examples: Vec<(VisitVector, u8)>,
    episodes: Vec<std::ops::Range<usize>>,
    counts: Vec<u64>,
    rows: Vec<AggregatedRow>,
    row_index: HashMap<VisitVector, usize>,
}

impl TerminationDataset {
    pub fn new(coords: CoordinateMap, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(TermdpError::invalid("window must be at least 1"));
        }
        Ok(TerminationDataset {
            coords,
            window,
            examples: Vec::new(),
            episodes: Vec::new(),
            counts: vec![0; coords.dim()],
            rows: Vec::new(),
            row_index: HashMap::new(),
        })
    }

    /// Adds the likelihood terms of one episode: steps `1..=min(len, H-1)`, each labeled
    /// by whether the terminator fired there. The last step carries no signal and is skipped.
    pub fn push_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        let horizon = self.coords.horizon;
        let len = traj.len();
        if len > horizon || traj.actions.len() != len {
            return Err(TermdpError::invalid(format!(
                "trajectory of length {len} does not fit horizon {horizon}"
            )));
        }
        match traj.termination_time {
            Some(t) if t != len => {
                return Err(TermdpError::invalid(format!(
                    "termination time {t} disagrees with trajectory length {len}"
                )))
            }
            None if len != horizon && len != 0 => {
                return Err(TermdpError::invalid(format!(
                    "unterminated trajectory has length {len}, expected {horizon}"
                )))
            }
            _ => {}
        }
        for (&s, &a) in traj.states.iter().zip(&traj.actions) {
            if s >= self.coords.num_states || a >= self.coords.num_actions {
                return Err(TermdpError::invalid("trajectory state/action out of range"));
            }
        }
        let start = self.examples.len();
        let informative = len.min(horizon.saturating_sub(1));
        for l in 1..=informative {
            let first = l.saturating_sub(self.window) + 1;
            let coords = (first..=l).map(|t| self.coords.coord(t - 1, traj.states[t - 1], traj.actions[t - 1]));
            let visits = VisitVector::from_coords(coords);
            let label = u8::from(traj.termination_time == Some(l));
            let c = self.coords.coord(l - 1, traj.states[l - 1], traj.actions[l - 1]);
            self.counts[c] += 1;
            self.insert(visits, label);
        }
        self.episodes.push(start..self.examples.len());
        Ok(())
    }

    /// Adds pre-split examples as one episode (used for window splitting).
    pub fn push_examples(&mut self, examples: impl IntoIterator<Item = (VisitVector, u8)>) -> Result<()> {
        let start = self.examples.len();
        for (visits, label) in examples {
            if label > 1 {
                return Err(TermdpError::invalid("labels must be 0 or 1"));
            }
            if visits.entries().iter().any(|&(c, _)| c >= self.coords.dim()) {
                return Err(TermdpError::invalid("visit coordinate out of range"));
            }
            self.insert(visits, label);
        }
        self.episodes.push(start..self.examples.len());
        Ok(())
    }

    /// Visit tallies for window examples, which do not carry their newest coordinate explicitly.
    pub(crate) fn add_count(&mut self, coord: usize) {
        self.counts[coord] += 1;
    }

    /// Adds a pre-aggregated row with fractional or repeated label tallies. These are
    /// not logged in `examples`, which lists only individually pushed signals.
    pub(crate) fn push_weighted(&mut self, visits: VisitVector, positives: f64, negatives: f64) {
        match self.row_index.get(&visits) {
            Some(&i) => {
                self.rows[i].positives += positives;
                self.rows[i].negatives += negatives;
            }
            None => {
                self.row_index.insert(visits.clone(), self.rows.len());
                self.rows.push(AggregatedRow {
                    visits,
                    positives,
                    negatives,
                });
            }
        }
    }

    fn insert(&mut self, visits: VisitVector, label: u8) {
        let idx = match self.row_index.get(&visits) {
            Some(&i) => i,
            None => {
                self.rows.push(AggregatedRow {
                    visits: visits.clone(),
                    positives: 0.0,
                    negatives: 0.0,
                });
                self.row_index.insert(visits.clone(), self.rows.len() - 1);
                self.rows.len() - 1
            }
        };
        if label == 1 {
            self.rows[idx].positives += 1.0;
        } else {
            self.rows[idx].negatives += 1.0;
        }
        self.examples.push((visits, label));
    }

    pub fn coords(&self) -> CoordinateMap {
        self.coords
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn examples(&self) -> &[(VisitVector, u8)] {
        &self.examples
    }

    pub fn episodes(&self) -> &[std::ops::Range<usize>] {
        &self.episodes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rows(&self) -> &[AggregatedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Builds the termination dataset of a batch of episodes.
pub fn build_dataset(coords: CoordinateMap, trajectories: &[Trajectory], window: usize) -> Result<TerminationDataset> {
    let mut data = TerminationDataset::new(coords, window)?;
    for traj in trajectories {
        data.push_trajectory(traj)?;
    }
    Ok(data)
}
