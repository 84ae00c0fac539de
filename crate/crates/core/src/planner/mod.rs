//! Planning on states augmented with the quantized accumulated cost.

mod dp;
mod evaluate;
mod lattice;
mod windowed;

pub use dp::{plan, AugmentedValueTable, LayerRange, PlanOptions, MAX_CELLS};
pub use evaluate::{
    evaluate_exact, evaluate_monte_carlo, quantization_bound, quantization_gap, CostAwarePolicy, MonteCarloEstimate,
    QuantizationGap, Tracking,
};
pub use lattice::{quantize_costs, CostLattice};
pub use windowed::{plan_windowed, WindowedPlan, MAX_WINDOW_STATES};
