//! Backward induction on `(h, s, accumulated-cost bin)`.

use serde::Serialize;

use super::lattice::CostLattice;
use crate::error::{Result, TermdpError};
use crate::model::{sigmoid, TerMdpSpec};

/// Hard cap on Q-table cells; beyond it the lattice is too fine for the cost range.
pub const MAX_CELLS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanOptions {
    /// Clip every backed-up value at `H`, as done for optimistic models.
    pub clip_values: bool,
}

/// Reachable accumulated-cost indices before step `h`: `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerRange {
    pub lo: i64,
    pub hi: i64,
    #[serde(skip)]
    offset: usize,
}

impl LayerRange {
    pub fn bins(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }
}

/// Optimal values and greedy actions over the augmented state space.
///
/// `values` has `H + 1` layers, the last identically zero. Layer `h` is indexed by the
/// accumulated cost of steps `0..h`, i.e. before the current step's cost is added.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentedValueTable {
    lattice: CostLattice,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    bias: f64,
    #[serde(skip)]
    clip_index: Option<i64>,
    #[serde(skip)]
    cost_index: Vec<i64>,
    #[serde(skip)]
    stationary: bool,
    layers: Vec<LayerRange>,
    values: Vec<f64>,
    #[serde(skip)]
    q: Vec<f64>,
    policy: Vec<u32>,
    backups: u64,
}

/// Step costs as lattice indices, rounded down.
pub(crate) fn cost_indices(spec: &TerMdpSpec, lattice: &CostLattice) -> Result<Vec<i64>> {
    if spec.costs().iter().any(|c| !c.is_finite()) {
        return Err(TermdpError::invalid("costs must be finite"));
    }
    Ok(spec.costs().iter().map(|&c| lattice.floor_index(c)).collect())
}

fn layer_ranges(spec: &TerMdpSpec, cost_index: &[i64], clip: Option<i64>) -> Result<Vec<LayerRange>> {
    let (s_n, a_n, horizon) = (spec.num_states(), spec.num_actions(), spec.horizon());
    let mut layers = Vec::with_capacity(horizon + 1);
    let (mut lo, mut hi) = (0i64, 0i64);
    let mut offset = 0usize;
    for h in 0..=horizon {
        let range = LayerRange { lo, hi, offset };
        offset = offset.saturating_add(range.bins().saturating_mul(s_n));
        if offset.saturating_mul(a_n) > MAX_CELLS {
            return Err(TermdpError::invalid(format!(
                "cost lattice overflow: more than {MAX_CELLS} cells (accumulated cost range {lo}..{hi} bins at step {h})"
            )));
        }
        layers.push(range);
        if h == horizon {
            break;
        }
        let (mut step_lo, mut step_hi) = (i64::MAX, i64::MIN);
        for s in 0..s_n {
            for a in 0..a_n {
                let c = cost_index[spec.index(h, s, a)];
                step_lo = step_lo.min(c);
                step_hi = step_hi.max(c);
            }
        }
        lo = lo.checked_add(step_lo).ok_or_else(|| TermdpError::invalid("cost lattice overflow"))?;
        hi = hi.checked_add(step_hi).ok_or_else(|| TermdpError::invalid("cost lattice overflow"))?;
        if let Some(c) = clip {
            lo = lo.min(c);
            hi = hi.min(c);
        }
    }
    Ok(layers)
}

/// Optimal augmented values for `spec` with its costs rounded down onto `lattice`.
pub fn plan(spec: &TerMdpSpec, lattice: &CostLattice, options: PlanOptions) -> Result<AugmentedValueTable> {
    if spec.window() < spec.horizon() {
        return Err(TermdpError::UnsupportedConfiguration(format!(
            "window {} is shorter than the horizon {}; use the windowed planner",
            spec.window(),
            spec.horizon()
        )));
    }
    let cost_index = cost_indices(spec, lattice)?;
    let clip_index = match lattice.clip() {
        Some(_) => {
            if cost_index.iter().any(|&c| c < 0) {
                return Err(TermdpError::invalid("clipped lattice requires non-negative costs"));
            }
            lattice.clip_index(spec.bias())
        }
        None => None,
    };
    let layers = layer_ranges(spec, &cost_index, clip_index)?;
    let (s_n, a_n, horizon) = (spec.num_states(), spec.num_actions(), spec.horizon());
    let total = layers[horizon].offset + layers[horizon].bins() * s_n;
    let q_len = layers[horizon].offset * a_n;
    let mut table = AugmentedValueTable {
        lattice: *lattice,
        num_states: s_n,
        num_actions: a_n,
        horizon,
        bias: spec.bias(),
        clip_index,
        cost_index,
        stationary: spec.stationary(),
        layers,
        values: vec![0.0; total],
        q: vec![0.0; q_len],
        policy: Vec::new(),
        backups: 0,
    };
    table.policy = vec![0; table.layers[horizon].offset];
    let cap = horizon as f64;
    for h in (0..horizon).rev() {
        let range = table.layers[h];
        let next = table.layers[h + 1];
        for s in 0..s_n {
            for bin in 0..range.bins() {
                let acc = range.lo + bin as i64;
                let cell = range.offset + s * range.bins() + bin;
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0u32;
                for a in 0..a_n {
                    let i = spec.index(h, s, a);
                    let after = table.advance_index(acc, table.cost_index[i]);
                    let survive = sigmoid(table.bias - lattice.value(after));
                    let row = spec.transition_row(h, s, a);
                    let nbin = (after - next.lo) as usize;
                    let mut ev = 0.0;
                    for (s2, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            ev += p * table.values[next.offset + s2 * next.bins() + nbin];
                        }
                    }
                    let q = spec.reward(h, s, a) + survive * ev;
                    table.q[cell * a_n + a] = q;
                    table.backups += 1;
                    if q > best {
                        best = q;
                        best_a = a as u32;
                    }
                }
                table.values[cell] = if options.clip_values { best.min(cap) } else { best };
                table.policy[cell] = best_a;
            }
        }
    }
    Ok(table)
}

impl AugmentedValueTable {
    #[inline]
    fn advance_index(&self, acc: i64, cost: i64) -> i64 {
        let next = acc + cost;
        match self.clip_index {
            Some(c) => next.min(c),
            None => next,
        }
    }

    /// Cell of `(h, s, acc)`; out-of-range sums snap to the nearest reachable bin.
    fn cell(&self, h: usize, s: usize, acc: i64) -> usize {
        let range = self.layers[h];
        let acc = match self.clip_index {
            Some(c) => acc.min(c),
            None => acc,
        };
        let bin = (acc.clamp(range.lo, range.hi) - range.lo) as usize;
        range.offset + s * range.bins() + bin
    }

    pub fn lattice(&self) -> &CostLattice {
        &self.lattice
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn layers(&self) -> &[LayerRange] {
        &self.layers
    }

    /// Total number of `(h, s, bin)` cells.
    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn backups(&self) -> u64 {
        self.backups
    }

    /// Largest bin count over layers.
    pub fn max_bins(&self) -> usize {
        self.layers.iter().map(LayerRange::bins).max().unwrap_or(1)
    }

    /// `V_h(s, C)` with `C = acc · Δc`; `h = H` gives 0.
    pub fn value(&self, h: usize, s: usize, acc: i64) -> f64 {
        self.values[self.cell(h, s, acc)]
    }

    /// Value at the start of an episode.
    pub fn initial_value(&self, s: usize) -> f64 {
        self.value(0, s, 0)
    }

    pub fn q_value(&self, h: usize, s: usize, acc: i64, a: usize) -> f64 {
        self.q[self.cell(h, s, acc) * self.num_actions + a]
    }

    pub fn action(&self, h: usize, s: usize, acc: i64) -> usize {
        self.policy[self.cell(h, s, acc)] as usize
    }

    /// Lattice index of the step cost the table was planned with.
    pub fn step_cost_index(&self, h: usize, s: usize, a: usize) -> i64 {
        let layer = if self.stationary { 0 } else { h };
        self.cost_index[(layer * self.num_states + s) * self.num_actions + a]
    }

    /// Accumulated-cost index after taking `a` in `(h, s)` from `acc`.
    pub fn next_index(&self, h: usize, s: usize, a: usize, acc: i64) -> i64 {
        self.advance_index(acc, self.step_cost_index(h, s, a))
    }

    /// Largest violation of the Termination Bellman equations over every
    /// `(h, s, bin, a)`, with the value of each cell checked against its Q row.
    pub fn bellman_residual(&self, spec: &TerMdpSpec, clip_values: bool) -> f64 {
        let mut worst = 0.0f64;
        let cap = self.horizon as f64;
        for h in 0..self.horizon {
            let range = self.layers[h];
            for s in 0..self.num_states {
                for bin in 0..range.bins() {
                    let acc = range.lo + bin as i64;
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..self.num_actions {
                        let after = self.next_index(h, s, a, acc);
                        let survive = 1.0 - crate::model::logistic(self.lattice.value(after) - self.bias).unwrap_or(f64::NAN);
                        let ev: f64 = spec
                            .transition_row(h, s, a)
                            .iter()
                            .enumerate()
                            .map(|(s2, p)| p * self.value(h + 1, s2, after))
                            .sum();
                        let q = self.q_value(h, s, acc, a);
                        worst = worst.max((q - spec.reward(h, s, a) - survive * ev).abs());
                        best = best.max(q);
                    }
                    let v = if clip_values { best.min(cap) } else { best };
                    worst = worst.max((self.value(h, s, acc) - v).abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpecShape;

    fn flat(s: usize, a: usize, h: usize, r: f64, c: f64, b: f64) -> TerMdpSpec {
        let shape = SpecShape::new(s, a, h, false);
        let n = shape.table_len();
        let p = (0..n).flat_map(|_| (0..s).map(move |_| 1.0 / s as f64)).collect();
        TerMdpSpec::new(shape, p, vec![r; n], vec![c; n], b, None, None).unwrap()
    }

    #[test]
    fn one_step_is_best_reward() {
        let shape = SpecShape::new(2, 3, 1, false);
        let rewards = vec![0.1, 0.7, 0.4, 0.9, 0.2, 0.3];
        let spec = TerMdpSpec::new(shape, vec![0.5; 12], rewards, vec![0.5; 6], 0.0, None, None).unwrap();
        let t = plan(&spec, &CostLattice::new(0.5).unwrap(), PlanOptions::default()).unwrap();
        assert_eq!(t.initial_value(0), 0.7);
        assert_eq!(t.action(0, 0, 0), 1);
        assert_eq!(t.initial_value(1), 0.9);
    }

    #[test]
    fn two_step_half_survival() {
        let spec = flat(1, 1, 2, 1.0, 0.0, 0.0);
        let t = plan(&spec, &CostLattice::new(0.1).unwrap(), PlanOptions::default()).unwrap();
        assert!((t.initial_value(0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn residual_is_zero() {
        let spec = flat(2, 2, 4, 0.5, 0.3, 1.0);
        let t = plan(&spec, &CostLattice::new(0.1).unwrap(), PlanOptions::default()).unwrap();
        assert!(t.bellman_residual(&spec, false) <= 1e-12);
        assert_eq!(t.layers()[4].lo, 12);
    }

    #[test]
    fn value_cap_applies() {
        let shape = SpecShape::new(1, 1, 3, false);
        let spec = TerMdpSpec::new(shape, vec![1.0; 3], vec![1.0; 3], vec![-40.0; 3], 0.0, None, None)
            .unwrap()
            .optimistic_variant(vec![2.0; 3], vec![-40.0; 3]);
        let opts = PlanOptions { clip_values: true };
        let t = plan(&spec, &CostLattice::new(1.0).unwrap(), opts).unwrap();
        assert_eq!(t.initial_value(0), 3.0);
        assert!(t.bellman_residual(&spec, true) <= 1e-12);
    }

    #[test]
    fn clipped_lattice_bounds_bins() {
        let spec = flat(2, 2, 6, 0.5, 1.0, 1.0);
        let lattice = CostLattice::new(0.5).unwrap().with_clip(2.0).unwrap();
        let t = plan(&spec, &lattice, PlanOptions::default()).unwrap();
        assert!(t.max_bins() <= 7);
        let neg = flat(2, 2, 3, 0.5, -0.5, 1.0);
        assert!(plan(&neg, &lattice, PlanOptions::default()).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let spec = flat(2, 2, 5, 0.5, 1.0, 0.0).with_costs(vec![0.0; 20]).unwrap();
        let wide = spec.optimistic_variant(vec![0.5; 20], (0..20).map(|i| if i % 2 == 0 { -1e6 } else { 1e6 }).collect());
        assert!(matches!(
            plan(&wide, &CostLattice::new(1e-3).unwrap(), PlanOptions::default()),
            Err(TermdpError::InvalidArgument(_))
        ));
    }
}
